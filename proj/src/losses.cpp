#include "semb/losses.hpp"

#include <string>

#include "semb/error.hpp"

namespace semb {

namespace {

Eigen::MatrixXd& block(LossValue& loss, BlockId id, Index rows, Index cols) {
  auto [it, inserted] = loss.gradients.try_emplace(id);
  if (inserted) it->second = Eigen::MatrixXd::Zero(rows, cols);
  return it->second;
}

void add_ehat_gradient(LossValue& loss, const CategoryEmbedding& emb, const Eigen::MatrixXd& grad_expanded) {
  block(loss, {BlockId::Kind::Ehat, emb.category_id()}, emb.ehat().rows(), emb.dim()).noalias() +=
      emb.basis().U.transpose() * grad_expanded;
}

void add_field_rows(LossValue& loss, const PixelField& field, const std::vector<Index>& pixels,
                    const Eigen::MatrixXd& grad_rows) {
  auto& g = block(loss, {BlockId::Kind::Field, field.scene_id}, field.grid.rows(), field.dim());
  for (std::size_t i = 0; i < pixels.size(); ++i) g.row(pixels[i]) += grad_rows.row(static_cast<Index>(i));
}

void require_normalized(const GeodesicMatrix& g, Index K) {
  if (!g.normalized) throw ContractError("geodesic matrix must be normalized before use in a loss");
  if (g.values.rows() != K || g.values.cols() != K) throw ContractError("geodesic matrix size does not match mesh");
}

const CategoryEmbedding& category(std::span<const CategoryEmbedding> embeddings, int id) {
  if (id < 0 || id >= static_cast<int>(embeddings.size()))
    throw ContractError("unknown category id " + std::to_string(id));
  return embeddings[static_cast<std::size_t>(id)];
}

void check_pixels(const PixelField& field, const std::vector<Index>& pixels) {
  for (Index p : pixels)
    if (p < 0 || p >= field.grid.rows() || !field.masked(p))
      throw ContractError("pixel " + std::to_string(p) + " lies outside the mask of scene " +
                          std::to_string(field.scene_id));
}

}  // namespace

std::string block_name(const BlockId& id) {
  return (id.kind == BlockId::Kind::Ehat ? "ehat[" : "field[") + std::to_string(id.index) + "]";
}

void LossValue::accumulate(const LossValue& other, double weight) {
  value += weight * other.value;
  for (const auto& [id, g] : other.gradients) {
    auto [it, inserted] = gradients.try_emplace(id, weight * g);
    if (!inserted) it->second += weight * g;
  }
}

LossValue loss_sup(std::span<const Annotation> annotations, std::span<const CategoryEmbedding> embeddings,
                   std::span<const PixelField> fields, std::span<const GeodesicMatrix> geodesics, Similarity mode) {
  LossValue out;
  if (annotations.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(annotations.size());

  std::map<int, std::vector<const Annotation*>> by_scene;
  for (const auto& a : annotations) {
    if (a.scene_id < 0 || a.scene_id >= static_cast<int>(fields.size()))
      throw ContractError("annotation references unknown scene " + std::to_string(a.scene_id));
    by_scene[a.scene_id].push_back(&a);
  }

  for (const auto& [scene, group] : by_scene) {
    const PixelField& field = fields[static_cast<std::size_t>(scene)];
    const int m = group.front()->category_id;
    const CategoryEmbedding& emb = category(embeddings, m);
    const GeodesicMatrix& geo = geodesics[static_cast<std::size_t>(m)];
    require_normalized(geo, emb.num_vertices());

    std::vector<Index> pixels;
    for (const Annotation* a : group) {
      if (a->category_id != m || field.category_id != m)
        throw ContractError("annotation category does not match its scene");
      if (a->row < 0 || a->row >= field.height || a->col < 0 || a->col >= field.width || !field.mask(a->row, a->col))
        throw ContractError("annotation references unmasked pixel (" + std::to_string(a->row) + ", " +
                            std::to_string(a->col) + ") in scene " + std::to_string(scene));
      if (a->vertex < 0 || a->vertex >= emb.num_vertices())
        throw ContractError("annotation vertex " + std::to_string(a->vertex) + " out of range");
      pixels.push_back(field.raster(a->row, a->col));
    }

    const Eigen::MatrixXd& E = emb.expanded();
    const Eigen::MatrixXd queries = gather_rows(field.grid, pixels);
    const auto P = correspondence(E, queries, mode, ObjectKind::Image, ObjectKind::Mesh);
    Eigen::MatrixXd grad_p(P.probs.rows(), P.probs.cols());
    for (std::size_t i = 0; i < group.size(); ++i) {
      const auto dist = geo.values.row(group[i]->vertex);
      out.value += inv_n * dist.dot(P.probs.row(static_cast<Index>(i)));
      grad_p.row(static_cast<Index>(i)) = inv_n * dist;
    }
    Eigen::MatrixXd grad_E = Eigen::MatrixXd::Zero(E.rows(), E.cols());
    Eigen::MatrixXd grad_q = Eigen::MatrixXd::Zero(queries.rows(), queries.cols());
    correspondence_backward(E, queries, P.probs, grad_p, mode, grad_E, grad_q);
    add_ehat_gradient(out, emb, grad_E);
    add_field_rows(out, field, pixels, grad_q);
  }
  return out;
}

LossValue loss_anchor(std::span<const VertexAnchor> anchors, std::span<const CategoryEmbedding> embeddings,
                      std::span<const GeodesicMatrix> geodesics, Similarity mode) {
  LossValue out;
  if (anchors.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(anchors.size());

  std::map<std::pair<int, int>, std::vector<const VertexAnchor*>> by_pair;
  for (const auto& a : anchors) by_pair[{a.source_category, a.target_category}].push_back(&a);

  for (const auto& [pair, group] : by_pair) {
    const CategoryEmbedding& src = category(embeddings, pair.first);
    const CategoryEmbedding& tgt = category(embeddings, pair.second);
    const GeodesicMatrix& geo = geodesics[static_cast<std::size_t>(pair.second)];
    require_normalized(geo, tgt.num_vertices());

    std::vector<Index> rows;
    for (const VertexAnchor* a : group) {
      if (a->source_vertex < 0 || a->source_vertex >= src.num_vertices() || a->target_vertex < 0 ||
          a->target_vertex >= tgt.num_vertices())
        throw ContractError("anchor vertex index out of range");
      rows.push_back(a->source_vertex);
    }
    const Eigen::MatrixXd queries = gather_rows(src.expanded(), rows);
    const auto P = correspondence(tgt.expanded(), queries, mode);
    Eigen::MatrixXd grad_p(P.probs.rows(), P.probs.cols());
    for (std::size_t i = 0; i < group.size(); ++i) {
      const auto dist = geo.values.row(group[i]->target_vertex);
      out.value += inv_n * dist.dot(P.probs.row(static_cast<Index>(i)));
      grad_p.row(static_cast<Index>(i)) = inv_n * dist;
    }
    Eigen::MatrixXd grad_t = Eigen::MatrixXd::Zero(tgt.num_vertices(), tgt.dim());
    Eigen::MatrixXd grad_q = Eigen::MatrixXd::Zero(queries.rows(), queries.cols());
    correspondence_backward(tgt.expanded(), queries, P.probs, grad_p, mode, grad_t, grad_q);
    Eigen::MatrixXd grad_s = Eigen::MatrixXd::Zero(src.num_vertices(), src.dim());
    for (std::size_t i = 0; i < rows.size(); ++i) grad_s.row(rows[i]) += grad_q.row(static_cast<Index>(i));
    add_ehat_gradient(out, tgt, grad_t);
    add_ehat_gradient(out, src, grad_s);
  }
  return out;
}

Eigen::MatrixXd cycle_mesh(const CorrespondenceMatrix& p_m_given_n, const CorrespondenceMatrix& p_n_given_m) {
  if (p_n_given_m.num_targets() != p_m_given_n.num_queries() ||
      p_n_given_m.num_queries() != p_m_given_n.num_targets())
    throw ContractError("cycle_mesh: factor dimensions do not compose");
  return (p_n_given_m.probs * p_m_given_n.probs).transpose();
}

LossValue loss_m2m(const CategoryEmbedding& emb_m, const CategoryEmbedding& emb_n, const GeodesicMatrix& geo_m,
                   Similarity mode) {
  const Index Km = emb_m.num_vertices();
  require_normalized(geo_m, Km);
  if (emb_m.dim() != emb_n.dim()) throw ContractError("embedding dimension differs between categories");

  const Eigen::MatrixXd& Em = emb_m.expanded();
  const Eigen::MatrixXd& En = emb_n.expanded();
  const auto p_n_given_m = correspondence(En, Em, mode);  // Km x Kn
  const auto p_m_given_n = correspondence(Em, En, mode);  // Kn x Km
  const Eigen::MatrixXd cycle = cycle_mesh(p_m_given_n, p_n_given_m);

  LossValue out;
  out.value = geo_m.values.cwiseProduct(cycle).sum() / static_cast<double>(Km);

  // Gradient w.r.t. the (t, k) product P_{n|m} P_{m|n}.
  const Eigen::MatrixXd grad_cycle = geo_m.values.transpose() / static_cast<double>(Km);
  const Eigen::MatrixXd grad_nm = grad_cycle * p_m_given_n.probs.transpose();
  const Eigen::MatrixXd grad_mn = p_n_given_m.probs.transpose() * grad_cycle;

  Eigen::MatrixXd grad_Em = Eigen::MatrixXd::Zero(Em.rows(), Em.cols());
  Eigen::MatrixXd grad_En = Eigen::MatrixXd::Zero(En.rows(), En.cols());
  correspondence_backward(En, Em, p_n_given_m.probs, grad_nm, mode, grad_En, grad_Em);
  correspondence_backward(Em, En, p_m_given_n.probs, grad_mn, mode, grad_Em, grad_En);
  add_ehat_gradient(out, emb_m, grad_Em);
  add_ehat_gradient(out, emb_n, grad_En);
  return out;
}

Eigen::MatrixXd cycle_image(const CorrespondenceMatrix& p_pix_given_vert, const CorrespondenceMatrix& p_vert_given_pix,
                            Index K_m, CycleNormalization normalization) {
  if (p_pix_given_vert.num_queries() != p_vert_given_pix.num_targets() ||
      p_pix_given_vert.num_targets() != p_vert_given_pix.num_queries() || p_pix_given_vert.num_queries() != K_m)
    throw ContractError("cycle_image: factor dimensions do not compose");
  const double scale = normalization == CycleNormalization::Literal ? 1.0 / static_cast<double>(K_m) : 1.0;
  return scale * (p_vert_given_pix.probs * p_pix_given_vert.probs);
}

LossValue loss_i2m(const CategoryEmbedding& emb, const PixelField& field, const std::vector<Index>& pixels,
                   const Eigen::MatrixXd& d_image, Similarity mode, CycleNormalization normalization) {
  const Index N = static_cast<Index>(pixels.size());
  if (N == 0) throw ContractError("loss_i2m needs at least one sampled pixel");
  if (d_image.rows() != N || d_image.cols() != N) throw ContractError("image distance matrix size mismatch");
  if (emb.dim() != field.dim()) throw ContractError("pixel and vertex embedding dimensions differ");
  check_pixels(field, pixels);

  const Eigen::MatrixXd& E = emb.expanded();
  const Index K = E.rows();
  const Eigen::MatrixXd Q = gather_rows(field.grid, pixels);
  const auto p_vert_given_pix = correspondence(E, Q, mode, ObjectKind::Image, ObjectKind::Mesh);  // N x K
  const auto p_pix_given_vert = correspondence(Q, E, mode, ObjectKind::Mesh, ObjectKind::Image);  // K x N
  const Eigen::MatrixXd cycle = cycle_image(p_pix_given_vert, p_vert_given_pix, K, normalization);
  const double scale = normalization == CycleNormalization::Literal ? 1.0 / static_cast<double>(K) : 1.0;

  LossValue out;
  out.value = d_image.transpose().cwiseProduct(cycle).sum() / static_cast<double>(N);

  const Eigen::MatrixXd grad_cycle = d_image.transpose() / static_cast<double>(N);
  const Eigen::MatrixXd grad_vp = scale * (grad_cycle * p_pix_given_vert.probs.transpose());
  const Eigen::MatrixXd grad_pv = scale * (p_vert_given_pix.probs.transpose() * grad_cycle);

  Eigen::MatrixXd grad_E = Eigen::MatrixXd::Zero(K, E.cols());
  Eigen::MatrixXd grad_Q = Eigen::MatrixXd::Zero(N, Q.cols());
  correspondence_backward(E, Q, p_vert_given_pix.probs, grad_vp, mode, grad_E, grad_Q);
  correspondence_backward(Q, E, p_pix_given_vert.probs, grad_pv, mode, grad_Q, grad_E);
  add_ehat_gradient(out, emb, grad_E);
  add_field_rows(out, field, pixels, grad_Q);
  return out;
}

LossValue loss_i2m_all(std::span<const CategoryEmbedding> embeddings, const PixelField& field,
                       const std::vector<Index>& pixels, const Eigen::MatrixXd& d_image, Similarity mode,
                       CycleNormalization normalization) {
  if (embeddings.empty()) throw ContractError("loss_i2m_all needs at least one category");
  LossValue out;
  const double w = 1.0 / static_cast<double>(embeddings.size());
  for (const auto& emb : embeddings) out.accumulate(loss_i2m(emb, field, pixels, d_image, mode, normalization), w);
  return out;
}

TotalLoss loss_total(const ProblemState& state, const LossWeights& weights) {
  if (weights.sup < 0.0 || weights.m2m < 0.0 || weights.i2m < 0.0) throw ContractError("loss weights must be >= 0");
  if (weights.sup == 0.0 && weights.m2m == 0.0 && weights.i2m == 0.0)
    throw ContractError("at least one loss term must be enabled");
  for (std::size_t i = 0; i < state.embeddings.size(); ++i)
    if (state.embeddings[i].category_id() != static_cast<int>(i))
      throw ContractError("embedding at position " + std::to_string(i) + " has category id " +
                          std::to_string(state.embeddings[i].category_id()));
  for (std::size_t i = 0; i < state.fields.size(); ++i)
    if (state.fields[i].scene_id != static_cast<int>(i))
      throw ContractError("pixel field at position " + std::to_string(i) + " has scene id " +
                          std::to_string(state.fields[i].scene_id));

  TotalLoss out;
  if (weights.sup > 0.0) {
    LossValue sup = loss_sup(state.annotations, state.embeddings, state.fields, state.geodesics, state.mode);
    sup.accumulate(loss_anchor(state.anchors, state.embeddings, state.geodesics, state.mode));
    out.sup = sup.value;
    out.total.accumulate(sup, weights.sup);
  }

  if (weights.m2m > 0.0) {
    const std::size_t M = state.embeddings.size();
    if (M < 2) throw ContractError("mesh-to-mesh loss needs at least two categories");
    LossValue m2m;
    const double w = 1.0 / static_cast<double>(M * (M - 1));
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t n = 0; n < M; ++n)
        if (m != n) m2m.accumulate(loss_m2m(state.embeddings[m], state.embeddings[n], state.geodesics[m], state.mode), w);
    out.m2m = m2m.value;
    out.total.accumulate(m2m, weights.m2m);
  }

  if (weights.i2m > 0.0 && !state.fields.empty()) {
    if (state.pixel_samples.size() != state.fields.size())
      throw ContractError("one pixel subsample per scene is required for the image-to-mesh loss");
    LossValue i2m;
    const double w = 1.0 / static_cast<double>(state.fields.size());
    for (std::size_t s = 0; s < state.fields.size(); ++s) {
      const PixelField& field = state.fields[s];
      const auto& pixels = state.pixel_samples[s];
      const Eigen::MatrixXd d = image_distance(pixels, field.height, field.width);
      if (weights.i2m_variant == I2mVariant::All)
        i2m.accumulate(loss_i2m_all(state.embeddings, field, pixels, d, state.mode, weights.i2m_normalization), w);
      else
        i2m.accumulate(loss_i2m(category(state.embeddings, field.category_id), field, pixels, d, state.mode,
                                weights.i2m_normalization),
                       w);
    }
    out.i2m = i2m.value;
    out.total.accumulate(i2m, weights.i2m);
  }
  return out;
}

}  // namespace semb
