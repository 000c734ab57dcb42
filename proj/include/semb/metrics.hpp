#pragma once

#include <Eigen/Core>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "semb/embedding.hpp"
#include "semb/mesh.hpp"

namespace semb {

inline constexpr double kGpsKappa = 0.255;
inline constexpr double kPckAlpha = 0.1;

/// Discrete map from the vertices of a source mesh onto a target mesh.
struct VertexMap {
  int source_category = 0;
  int target_category = 0;
  std::vector<int> assignment;
};

/// Per source vertex, argmax over target vertices of the correspondence row (lowest index on ties).
VertexMap alignment_map(const CategoryEmbedding& source, const CategoryEmbedding& target, Similarity mode);
std::vector<int> argmax_assignment(const Eigen::MatrixXd& source, const Eigen::MatrixXd& target, Similarity mode);

/// exp(-g^2 / (2 kappa^2)).
double gps_point(double g, double kappa = kGpsKappa);

double gps_set(std::span<const int> predicted, std::span<const int> truth, const GeodesicMatrix& geodesics,
               double kappa = kGpsKappa);

/// Mean geodesic distance between paired vertices.
double gerr(std::span<const int> predicted, std::span<const int> truth, const GeodesicMatrix& geodesics);

/// GPS thresholds 0.50, 0.55, ..., 0.95.
std::vector<double> gps_thresholds();

struct ApAr {
  double ap = 0.0;
  double ar = 0.0;
  std::vector<double> thresholds;
  std::vector<double> precision;  // per threshold
  std::vector<double> recall;
};

/// Instance counts as correct at threshold t when its GPS >= t. Unmatched
/// predictions enlarge the precision denominator, missed ground-truth
/// instances the recall denominator.
ApAr ap_ar(std::span<const double> per_instance_gps, Index unmatched_predictions = 0, Index missed_truths = 0,
           std::span<const double> thresholds = {});

struct PixelKeypoint {
  std::string name;
  double row = 0.0;
  double col = 0.0;
  bool visible = true;
};

using VertexKeypoints = std::map<std::string, int>;

/// For each visible source landmark, the target-mask pixel with the highest
/// similarity to the landmark's embedding (lowest raster index on ties).
std::vector<PixelKeypoint> transfer_keypoints(const PixelField& source, std::span<const PixelKeypoint> keypoints,
                                              const PixelField& target, Similarity mode);

/// Fraction of truth-visible landmarks whose prediction lies within
/// alpha * max(box_h, box_w) pixels (inclusive). Landmarks are matched by name.
double pck_transfer(std::span<const PixelKeypoint> predicted, std::span<const PixelKeypoint> truth, int box_h,
                    int box_w, double alpha = kPckAlpha);

}  // namespace semb
