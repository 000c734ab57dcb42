#include "semb/embedding.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace semb {

std::string_view to_string(Similarity mode) {
  switch (mode) {
    case Similarity::NegInner:
      return "neg_inner";
    case Similarity::Inner:
      return "inner";
    case Similarity::NegSqDist:
      return "neg_sqdist";
  }
  return "neg_inner";
}

Similarity parse_similarity(std::string_view name) {
  if (name == "neg_inner") return Similarity::NegInner;
  if (name == "inner") return Similarity::Inner;
  if (name == "neg_sqdist") return Similarity::NegSqDist;
  throw ContractError("unknown similarity mode '" + std::string(name) + "'");
}

CorrespondenceMatrix correspondence(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& queries, Similarity mode,
                                    ObjectKind query_kind, ObjectKind target_kind) {
  if (!targets.allFinite() || !queries.allFinite()) throw NumericalError("non-finite embedding in correspondence");
  if (targets.rows() == 0) throw ContractError("correspondence needs at least one target");
  CorrespondenceMatrix out;
  out.probs = softmax_rows(similarity_scores(targets, queries, mode));
  out.query_kind = query_kind;
  out.target_kind = target_kind;
  out.mode = mode;
  return out;
}

void correspondence_backward(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& queries,
                             const Eigen::MatrixXd& probs, const Eigen::MatrixXd& grad_probs, Similarity mode,
                             Eigen::Ref<Eigen::MatrixXd> grad_targets, Eigen::Ref<Eigen::MatrixXd> grad_queries) {
  // Softmax Jacobian: dS = P o (G - rowsum(G o P)).
  const Eigen::VectorXd inner = probs.cwiseProduct(grad_probs).rowwise().sum();
  Eigen::MatrixXd grad_scores = grad_probs;
  grad_scores.colwise() -= inner;
  grad_scores = grad_scores.cwiseProduct(probs);

  switch (mode) {
    case Similarity::Inner:
      grad_queries.noalias() += grad_scores * targets;
      grad_targets.noalias() += grad_scores.transpose() * queries;
      break;
    case Similarity::NegInner:
      grad_queries.noalias() -= grad_scores * targets;
      grad_targets.noalias() -= grad_scores.transpose() * queries;
      break;
    case Similarity::NegSqDist: {
      // S(l, k) = -|q_l|^2 - |t_k|^2 + 2 <q_l, t_k>
      const Eigen::VectorXd row_sum = grad_scores.rowwise().sum();
      const Eigen::VectorXd col_sum = grad_scores.colwise().sum().transpose();
      grad_queries.noalias() += 2.0 * (grad_scores * targets);
      grad_queries -= 2.0 * (row_sum.asDiagonal() * queries);
      grad_targets.noalias() += 2.0 * (grad_scores.transpose() * queries);
      grad_targets -= 2.0 * (col_sum.asDiagonal() * targets);
      break;
    }
  }
}

CategoryEmbedding::CategoryEmbedding(std::shared_ptr<const SpectralBasis> basis, Eigen::MatrixXd ehat,
                                     int category_id)
    : basis_(std::move(basis)), category_id_(category_id) {
  if (!basis_) throw ContractError("category embedding needs a spectral basis");
  set_ehat(std::move(ehat));
}

CategoryEmbedding CategoryEmbedding::random(std::shared_ptr<const SpectralBasis> basis, Index D, std::mt19937_64& rng,
                                            double sigma, int category_id) {
  if (!basis) throw ContractError("category embedding needs a spectral basis");
  std::normal_distribution<double> normal(0.0, sigma);
  Eigen::MatrixXd ehat(basis->size(), D);
  for (Index i = 0; i < ehat.rows(); ++i)
    for (Index j = 0; j < D; ++j) ehat(i, j) = normal(rng);
  return CategoryEmbedding(std::move(basis), std::move(ehat), category_id);
}

void CategoryEmbedding::set_ehat(Eigen::MatrixXd ehat) {
  if (ehat.rows() != basis_->size())
    throw ContractError("ehat has " + std::to_string(ehat.rows()) + " rows but the basis has Q=" +
                        std::to_string(basis_->size()));
  ehat_ = std::move(ehat);
  expanded_ = basis_->U * ehat_;
}

Eigen::MatrixXd expand(const CategoryEmbedding& embedding) {
  if (embedding.basis().U.cols() != embedding.ehat().rows()) throw ContractError("basis and ehat dimensions differ");
  return embedding.basis().U * embedding.ehat();
}

PixelField::PixelField(Eigen::MatrixXd grid_, Mask mask_, int scene_id_, int category_id_)
    : height(static_cast<int>(mask_.rows())),
      width(static_cast<int>(mask_.cols())),
      grid(std::move(grid_)),
      mask(std::move(mask_)),
      scene_id(scene_id_),
      category_id(category_id_) {
  if (grid.rows() != static_cast<Index>(height) * width)
    throw ContractError("pixel field grid has " + std::to_string(grid.rows()) + " rows for a " +
                        std::to_string(height) + "x" + std::to_string(width) + " mask");
  if (!mask.any()) throw ContractError("pixel field mask is empty");
}

PixelField PixelField::random(const Mask& mask, Index D, int scene_id, int category_id, std::mt19937_64& rng,
                              double sigma) {
  std::normal_distribution<double> normal(0.0, sigma);
  Eigen::MatrixXd grid(mask.size(), D);
  for (Index i = 0; i < grid.rows(); ++i)
    for (Index j = 0; j < D; ++j) grid(i, j) = normal(rng);
  return PixelField(std::move(grid), mask, scene_id, category_id);
}

std::vector<Index> PixelField::masked_pixels() const {
  std::vector<Index> out;
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c)
      if (mask(r, c)) out.push_back(raster(r, c));
  return out;
}

std::vector<Index> sample_pixels(const PixelField& field, Index n, std::uint64_t seed) {
  std::vector<Index> pool = field.masked_pixels();
  if (n < 1 || n > static_cast<Index>(pool.size()))
    throw ContractError("cannot sample " + std::to_string(n) + " pixels from a mask of " +
                        std::to_string(pool.size()));
  std::mt19937_64 rng(seed);
  for (Index i = 0; i < n; ++i) {
    std::uniform_int_distribution<Index> pick(i, static_cast<Index>(pool.size()) - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
  }
  pool.resize(static_cast<std::size_t>(n));
  return pool;
}

Eigen::MatrixXd image_distance(const std::vector<Index>& pixels, int height, int width) {
  if (pixels.empty()) throw ContractError("image_distance needs at least one pixel");
  const double scale = 1.0 / std::max(height, width);
  const Index n = static_cast<Index>(pixels.size());
  Eigen::MatrixXd coords(n, 2);
  for (Index i = 0; i < n; ++i) {
    coords(i, 0) = (static_cast<double>(pixels[i] / width) + 0.5) * scale;
    coords(i, 1) = (static_cast<double>(pixels[i] % width) + 0.5) * scale;
  }
  Eigen::MatrixXd d(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) d(i, j) = (coords.row(i) - coords.row(j)).norm();
  return d;
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& grid, const std::vector<Index>& rows) {
  Eigen::MatrixXd out(static_cast<Index>(rows.size()), grid.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = grid.row(rows[i]);
  return out;
}

}  // namespace semb
