#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "semb/embedding.hpp"
#include "semb/error.hpp"
#include "semb/losses.hpp"
#include "semb/mesh.hpp"
#include "semb/spectral.hpp"

namespace semb {

enum class OptimizerKind { Adam, Sgd };

struct LrDrop {
  int step = 0;
  double factor = 0.1;
};

/// From `step` on, only the first `active` rows of every ehat (the lowest basis functions) are trained;
/// the remaining rows are held at zero.
struct SpectralStage {
  int step = 0;
  Index active = 0;
};

struct TrainConfig {
  int steps = 1000;
  double learning_rate = 1e-2;
  std::vector<LrDrop> lr_drops;
  LossWeights weights;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Index pixels_per_step = 128;  // |sampled pixels| per scene and step, clamped to the mask size
  double init_sigma = 0.1;
  double divergence_threshold = 1e6;
  std::vector<SpectralStage> spectral_schedule;  // empty: all Q rows active throughout

  void validate() const;
  double learning_rate_at(int step) const;
  /// Active ehat rows at `step`, or -1 when unrestricted.
  Index active_basis_at(int step) const;
};

struct AdamState {
  Eigen::MatrixXd m;
  Eigen::MatrixXd v;
  long t = 0;
};

/// Bias-corrected Adam update in place. Throws NumericalError naming `block` on non-finite gradients.
void adam_step(Eigen::MatrixXd& params, const Eigen::MatrixXd& grads, AdamState& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8, const std::string& block = "");

struct CategoryData {
  std::shared_ptr<const SpectralBasis> basis;
  GeodesicMatrix geodesics;  // normalized
};

struct SceneData {
  Mask mask;
  int category_id = 0;
};

struct TrainProblem {
  std::vector<CategoryData> categories;
  std::vector<SceneData> scenes;
  std::vector<Annotation> annotations;
  std::vector<VertexAnchor> anchors;
  Similarity mode = Similarity::NegInner;
  Index embedding_dim = 16;
};

/// All learnable blocks: one ehat per category, one pixel grid per scene.
struct ParameterSet {
  std::vector<CategoryEmbedding> embeddings;
  std::vector<PixelField> fields;

  const Eigen::MatrixXd& get(const BlockId& id) const;
  void set(const BlockId& id, Eigen::MatrixXd value);
  std::vector<BlockId> blocks() const;
};

ParameterSet initialize_parameters(const TrainProblem& problem, std::uint64_t seed, double sigma = 0.1);

/// Per-scene pixel subsample for one training step, seeded from (seed, step, scene).
std::vector<std::vector<Index>> step_pixel_samples(const ParameterSet& params, Index n, std::uint64_t seed,
                                                   std::uint64_t step);

std::vector<GeodesicMatrix> problem_geodesics(const TrainProblem& problem);

TotalLoss evaluate_loss(const TrainProblem& problem, const ParameterSet& params,
                        const std::vector<GeodesicMatrix>& geodesics,
                        const std::vector<std::vector<Index>>& pixel_samples, const LossWeights& weights);

struct StepRecord {
  double total = 0.0;
  double sup = 0.0;
  double m2m = 0.0;
  double i2m = 0.0;
  double learning_rate = 0.0;
};

struct TrainReport {
  std::vector<StepRecord> history;
  ParameterSet parameters;
  double wall_seconds = 0.0;
  TrainConfig config;
};

class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, std::shared_ptr<TrainReport> report)
      : NumericalError(what), report_(std::move(report)) {}
  const TrainReport& report() const { return *report_; }

 private:
  std::shared_ptr<TrainReport> report_;
};

/// Full-batch training of every ehat and pixel grid. Deterministic in config.seed.
TrainReport train(const TrainConfig& config, const TrainProblem& problem,
                  std::optional<ParameterSet> initial = std::nullopt);

/// Loss evaluated at a parameter snapshot.
using LossFunction = std::function<LossValue(const ParameterSet&)>;

struct GradCheckOptions {
  Index coords_per_block = 20;
  double epsilon = 1e-6;
  std::uint64_t seed = 0;
  // Relative error is |a - n| / max(|a|, |n|, block_scale * max|g_block|, denominator_floor).
  // Coordinates far below the block's largest entry are judged on the block's scale,
  // since central differences carry roughly 1e-16 * |L| / epsilon of absolute roundoff.
  double block_scale = 1e-2;
  double denominator_floor = 1e-8;
  double corrupt_gradient = 0.0;  // test hook: analytic gradient scaled by (1 + corrupt_gradient)
};

/// Max relative error |analytic - numeric| / max(|analytic|, |numeric|, floor)
/// over random coordinates of every parameter block.
double grad_check(const LossFunction& loss, const ParameterSet& params, const GradCheckOptions& options = {});

enum class LossTerm { Sup, M2m, I2m, I2mAll, Total };

std::string_view to_string(LossTerm term);

/// One term of the objective on `problem`, evaluated at the given parameters and pixel samples.
LossFunction term_function(const TrainProblem& problem, LossTerm term, std::vector<std::vector<Index>> pixel_samples,
                           const LossWeights& weights = {});

}  // namespace semb
