#include "semb/metrics.hpp"

#include <cmath>
#include <string>

#include "semb/error.hpp"

namespace semb {

namespace {

void check_pairs(std::span<const int> predicted, std::span<const int> truth, const GeodesicMatrix& geodesics) {
  if (predicted.size() != truth.size()) throw ContractError("predicted and truth lists differ in length");
  if (predicted.empty()) throw ContractError("metric needs at least one pair");
  if (!geodesics.normalized) throw ContractError("metrics require normalized geodesics");
  const Index K = geodesics.values.rows();
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i] < 0 || predicted[i] >= K || truth[i] < 0 || truth[i] >= K)
      throw ContractError("vertex index out of range in metric input");
}

Index argmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  Index best = 0;
  for (Index k = 1; k < row.size(); ++k)
    if (row[k] > row[best]) best = k;
  return best;
}

}  // namespace

std::vector<int> argmax_assignment(const Eigen::MatrixXd& source, const Eigen::MatrixXd& target, Similarity mode) {
  // Softmax is monotone per row, so the score argmax is the probability argmax.
  const Eigen::MatrixXd scores = similarity_scores(target, source, mode);
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Index i = 0; i < scores.rows(); ++i) out[static_cast<std::size_t>(i)] = static_cast<int>(argmax_row(scores.row(i)));
  return out;
}

VertexMap alignment_map(const CategoryEmbedding& source, const CategoryEmbedding& target, Similarity mode) {
  if (source.dim() != target.dim()) throw ContractError("embedding dimension differs between categories");
  return {source.category_id(), target.category_id(), argmax_assignment(source.expanded(), target.expanded(), mode)};
}

double gps_point(double g, double kappa) {
  if (g < 0.0) throw ContractError("geodesic distance must be nonnegative");
  return std::exp(-g * g / (2.0 * kappa * kappa));
}

double gps_set(std::span<const int> predicted, std::span<const int> truth, const GeodesicMatrix& geodesics,
               double kappa) {
  check_pairs(predicted, truth, geodesics);
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) sum += gps_point(geodesics.values(predicted[i], truth[i]), kappa);
  return sum / static_cast<double>(predicted.size());
}

double gerr(std::span<const int> predicted, std::span<const int> truth, const GeodesicMatrix& geodesics) {
  check_pairs(predicted, truth, geodesics);
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) sum += geodesics.values(predicted[i], truth[i]);
  return sum / static_cast<double>(predicted.size());
}

std::vector<double> gps_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(static_cast<double>(50 + 5 * i) / 100.0);
  return t;
}

ApAr ap_ar(std::span<const double> per_instance_gps, Index unmatched_predictions, Index missed_truths,
           std::span<const double> thresholds) {
  if (per_instance_gps.empty()) throw ContractError("ap_ar needs at least one instance");
  if (unmatched_predictions < 0 || missed_truths < 0) throw ContractError("unmatched counts must be nonnegative");
  ApAr out;
  out.thresholds = thresholds.empty() ? gps_thresholds() : std::vector<double>(thresholds.begin(), thresholds.end());
  const double n = static_cast<double>(per_instance_gps.size());
  for (double t : out.thresholds) {
    double correct = 0.0;
    for (double g : per_instance_gps) {
      if (!(g >= 0.0 && g <= 1.0)) throw ContractError("GPS values must lie in [0, 1]");
      if (g >= t) correct += 1.0;
    }
    out.precision.push_back(correct / (n + static_cast<double>(unmatched_predictions)));
    out.recall.push_back(correct / (n + static_cast<double>(missed_truths)));
  }
  for (std::size_t i = 0; i < out.thresholds.size(); ++i) {
    out.ap += out.precision[i];
    out.ar += out.recall[i];
  }
  out.ap /= static_cast<double>(out.thresholds.size());
  out.ar /= static_cast<double>(out.thresholds.size());
  return out;
}

std::vector<PixelKeypoint> transfer_keypoints(const PixelField& source, std::span<const PixelKeypoint> keypoints,
                                              const PixelField& target, Similarity mode) {
  if (source.dim() != target.dim()) throw ContractError("pixel embedding dimensions differ");
  const std::vector<Index> candidates = target.masked_pixels();
  if (candidates.empty()) throw ContractError("target mask is empty");
  const Eigen::MatrixXd target_rows = gather_rows(target.grid, candidates);

  std::vector<PixelKeypoint> out;
  for (const auto& kp : keypoints) {
    if (!kp.visible) continue;
    const int r = static_cast<int>(std::lround(kp.row)), c = static_cast<int>(std::lround(kp.col));
    if (r < 0 || r >= source.height || c < 0 || c >= source.width || !source.mask(r, c))
      throw ContractError("keypoint '" + kp.name + "' lies outside the source mask");
    const Eigen::MatrixXd query = source.grid.row(source.raster(r, c));
    const Eigen::MatrixXd scores = similarity_scores(target_rows, query, mode);
    const Index best = argmax_row(scores.row(0));
    const Index p = candidates[static_cast<std::size_t>(best)];
    out.push_back({kp.name, static_cast<double>(p / target.width), static_cast<double>(p % target.width), true});
  }
  return out;
}

double pck_transfer(std::span<const PixelKeypoint> predicted, std::span<const PixelKeypoint> truth, int box_h,
                    int box_w, double alpha) {
  if (box_h <= 0 || box_w <= 0) throw ContractError("bounding box dimensions must be positive");
  const double threshold = alpha * std::max(box_h, box_w);
  std::map<std::string, const PixelKeypoint*> by_name;
  for (const auto& p : predicted) by_name[p.name] = &p;
  Index visible = 0, correct = 0;
  for (const auto& t : truth) {
    if (!t.visible) continue;
    ++visible;
    const auto it = by_name.find(t.name);
    if (it == by_name.end()) continue;
    if (std::hypot(it->second->row - t.row, it->second->col - t.col) <= threshold) ++correct;
  }
  if (visible == 0) throw ContractError("pck_transfer needs at least one visible landmark");
  return static_cast<double>(correct) / static_cast<double>(visible);
}

}  // namespace semb
