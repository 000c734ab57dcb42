#include "semb/optimize.hpp"

#include <chrono>
#include <cmath>
#include <random>
#include <string>

namespace semb {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

void TrainConfig::validate() const {
  if (steps < 1) throw ContractError("steps must be >= 1");
  if (!(learning_rate > 0.0)) throw ContractError("learning_rate must be > 0");
  for (std::size_t i = 0; i < lr_drops.size(); ++i) {
    if (i > 0 && lr_drops[i].step <= lr_drops[i - 1].step)
      throw ContractError("learning-rate drop steps must be strictly increasing");
    if (!(lr_drops[i].factor > 0.0)) throw ContractError("learning-rate drop factor must be > 0");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0))
    throw ContractError("invalid Adam hyperparameters");
  if (pixels_per_step < 1) throw ContractError("pixels_per_step must be >= 1");
  for (std::size_t i = 0; i < spectral_schedule.size(); ++i) {
    if (i > 0 && spectral_schedule[i].step <= spectral_schedule[i - 1].step)
      throw ContractError("spectral schedule steps must be strictly increasing");
    if (spectral_schedule[i].active < 1) throw ContractError("spectral schedule stages need at least one active row");
  }
}

double TrainConfig::learning_rate_at(int step) const {
  double lr = learning_rate;
  for (const auto& drop : lr_drops)
    if (step >= drop.step) lr *= drop.factor;
  return lr;
}

Index TrainConfig::active_basis_at(int step) const {
  Index active = -1;
  for (const auto& stage : spectral_schedule)
    if (step >= stage.step) active = stage.active;
  return active;
}

namespace {

void hold_inactive_rows(Eigen::MatrixXd& block, Index active) {
  if (active >= 0 && active < block.rows()) block.bottomRows(block.rows() - active).setZero();
}

}  // namespace

void adam_step(Eigen::MatrixXd& params, const Eigen::MatrixXd& grads, AdamState& state, double lr, double beta1,
               double beta2, double eps, const std::string& block) {
  if (grads.rows() != params.rows() || grads.cols() != params.cols())
    throw ContractError("gradient shape does not match parameter block " + block);
  if (!grads.allFinite()) throw NumericalError("non-finite gradient in parameter block " + block);
  if (state.t == 0) {
    state.m = Eigen::MatrixXd::Zero(params.rows(), params.cols());
    state.v = Eigen::MatrixXd::Zero(params.rows(), params.cols());
  }
  ++state.t;
  state.m = beta1 * state.m + (1.0 - beta1) * grads;
  state.v = beta2 * state.v + (1.0 - beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  params.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + eps);
}

const Eigen::MatrixXd& ParameterSet::get(const BlockId& id) const {
  if (id.kind == BlockId::Kind::Ehat) return embeddings.at(static_cast<std::size_t>(id.index)).ehat();
  return fields.at(static_cast<std::size_t>(id.index)).grid;
}

void ParameterSet::set(const BlockId& id, Eigen::MatrixXd value) {
  if (id.kind == BlockId::Kind::Ehat) {
    embeddings.at(static_cast<std::size_t>(id.index)).set_ehat(std::move(value));
  } else {
    auto& grid = fields.at(static_cast<std::size_t>(id.index)).grid;
    if (value.rows() != grid.rows() || value.cols() != grid.cols()) throw ContractError("pixel grid shape mismatch");
    grid = std::move(value);
  }
}

std::vector<BlockId> ParameterSet::blocks() const {
  std::vector<BlockId> out;
  for (std::size_t i = 0; i < embeddings.size(); ++i) out.push_back({BlockId::Kind::Ehat, static_cast<int>(i)});
  for (std::size_t i = 0; i < fields.size(); ++i) out.push_back({BlockId::Kind::Field, static_cast<int>(i)});
  return out;
}

ParameterSet initialize_parameters(const TrainProblem& problem, std::uint64_t seed, double sigma) {
  std::mt19937_64 rng(seed);
  ParameterSet params;
  for (std::size_t m = 0; m < problem.categories.size(); ++m)
    params.embeddings.push_back(CategoryEmbedding::random(problem.categories[m].basis, problem.embedding_dim, rng,
                                                          sigma, static_cast<int>(m)));
  for (std::size_t s = 0; s < problem.scenes.size(); ++s)
    params.fields.push_back(PixelField::random(problem.scenes[s].mask, problem.embedding_dim, static_cast<int>(s),
                                               problem.scenes[s].category_id, rng, sigma));
  return params;
}

std::vector<std::vector<Index>> step_pixel_samples(const ParameterSet& params, Index n, std::uint64_t seed,
                                                   std::uint64_t step) {
  std::vector<std::vector<Index>> out;
  for (std::size_t s = 0; s < params.fields.size(); ++s) {
    const auto& field = params.fields[s];
    const Index count = std::min<Index>(n, field.mask.count());
    out.push_back(sample_pixels(field, count, splitmix64(splitmix64(seed ^ splitmix64(step)) + s)));
  }
  return out;
}

std::vector<GeodesicMatrix> problem_geodesics(const TrainProblem& problem) {
  std::vector<GeodesicMatrix> out;
  for (const auto& c : problem.categories) out.push_back(c.geodesics);
  return out;
}

TotalLoss evaluate_loss(const TrainProblem& problem, const ParameterSet& params,
                        const std::vector<GeodesicMatrix>& geodesics,
                        const std::vector<std::vector<Index>>& pixel_samples, const LossWeights& weights) {
  ProblemState state;
  state.embeddings = params.embeddings;
  state.fields = params.fields;
  state.geodesics = geodesics;
  state.annotations = problem.annotations;
  state.anchors = problem.anchors;
  state.pixel_samples = pixel_samples;
  state.mode = problem.mode;
  return loss_total(state, weights);
}

TrainReport train(const TrainConfig& config, const TrainProblem& problem, std::optional<ParameterSet> initial) {
  config.validate();
  if (config.weights.m2m > 0.0 && problem.categories.size() < 2)
    throw ContractError("mesh-to-mesh loss needs at least two categories");
  const auto start = std::chrono::steady_clock::now();

  auto report = std::make_shared<TrainReport>();
  report->config = config;
  report->parameters = initial ? std::move(*initial) : initialize_parameters(problem, config.seed, config.init_sigma);
  ParameterSet& params = report->parameters;
  const auto geodesics = problem_geodesics(problem);
  const auto blocks = params.blocks();
  std::map<BlockId, AdamState> adam;
  for (auto& emb : params.embeddings) {
    Eigen::MatrixXd ehat = emb.ehat();
    hold_inactive_rows(ehat, config.active_basis_at(0));
    emb.set_ehat(std::move(ehat));
  }

  for (int step = 0; step < config.steps; ++step) {
    const auto samples = step_pixel_samples(params, config.pixels_per_step, config.seed, static_cast<std::uint64_t>(step));
    const TotalLoss loss = evaluate_loss(problem, params, geodesics, samples, config.weights);
    const double lr = config.learning_rate_at(step);
    report->history.push_back({loss.total.value, loss.sup, loss.m2m, loss.i2m, lr});

    if (!std::isfinite(loss.total.value) || loss.total.value > config.divergence_threshold) {
      report->wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      throw DivergenceError("training diverged at step " + std::to_string(step) + " (loss " +
                                std::to_string(loss.total.value) + ")",
                            report);
    }

    for (const BlockId& id : blocks) {
      Eigen::MatrixXd value = params.get(id);
      const auto it = loss.total.gradients.find(id);
      Eigen::MatrixXd grad =
          it != loss.total.gradients.end() ? it->second : Eigen::MatrixXd::Zero(value.rows(), value.cols());
      if (id.kind == BlockId::Kind::Ehat) {
        hold_inactive_rows(grad, config.active_basis_at(step));
        hold_inactive_rows(value, config.active_basis_at(step));
      }
      if (config.optimizer == OptimizerKind::Adam) {
        adam_step(value, grad, adam[id], lr, config.beta1, config.beta2, config.epsilon, block_name(id));
      } else {
        if (!grad.allFinite()) throw NumericalError("non-finite gradient in parameter block " + block_name(id));
        value -= lr * grad;
      }
      params.set(id, std::move(value));
    }
  }
  report->wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return std::move(*report);
}

double grad_check(const LossFunction& loss, const ParameterSet& params, const GradCheckOptions& options) {
  if (!(options.epsilon >= 1e-8 && options.epsilon <= 1e-4)) throw ContractError("epsilon must lie in [1e-8, 1e-4]");
  const LossValue analytic = loss(params);
  std::mt19937_64 rng(options.seed);
  ParameterSet probe = params;
  double worst = 0.0;
  for (const auto& [id, grad] : analytic.gradients) {
    const Eigen::MatrixXd base = params.get(id);
    const double floor =
        std::max(options.denominator_floor, options.block_scale * grad.cwiseAbs().maxCoeff() * (1.0 + options.corrupt_gradient));
    std::uniform_int_distribution<Index> pick(0, base.size() - 1);
    for (Index c = 0; c < options.coords_per_block; ++c) {
      const Index flat = pick(rng);
      const Index r = flat / base.cols(), col = flat % base.cols();
      Eigen::MatrixXd shifted = base;
      shifted(r, col) = base(r, col) + options.epsilon;
      probe.set(id, shifted);
      const double plus = loss(probe).value;
      shifted(r, col) = base(r, col) - options.epsilon;
      probe.set(id, shifted);
      const double minus = loss(probe).value;
      probe.set(id, base);

      const double numeric = (plus - minus) / (2.0 * options.epsilon);
      const double a = grad(r, col) * (1.0 + options.corrupt_gradient);
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

std::string_view to_string(LossTerm term) {
  switch (term) {
    case LossTerm::Sup:
      return "sup";
    case LossTerm::M2m:
      return "m2m";
    case LossTerm::I2m:
      return "i2m";
    case LossTerm::I2mAll:
      return "i2m_all";
    case LossTerm::Total:
      return "total";
  }
  return "total";
}

LossFunction term_function(const TrainProblem& problem, LossTerm term, std::vector<std::vector<Index>> pixel_samples,
                           const LossWeights& weights) {
  auto geodesics = std::make_shared<const std::vector<GeodesicMatrix>>(problem_geodesics(problem));
  auto samples = std::make_shared<const std::vector<std::vector<Index>>>(std::move(pixel_samples));
  LossWeights w = weights;
  switch (term) {
    case LossTerm::Sup:
      w = {1.0, 0.0, 0.0, weights.i2m_variant, weights.i2m_normalization};
      break;
    case LossTerm::M2m:
      w = {0.0, 1.0, 0.0, weights.i2m_variant, weights.i2m_normalization};
      break;
    case LossTerm::I2m:
      w = {0.0, 0.0, 1.0, I2mVariant::GtClass, weights.i2m_normalization};
      break;
    case LossTerm::I2mAll:
      w = {0.0, 0.0, 1.0, I2mVariant::All, weights.i2m_normalization};
      break;
    case LossTerm::Total:
      break;
  }
  return [&problem, geodesics, samples, w](const ParameterSet& params) {
    return evaluate_loss(problem, params, *geodesics, *samples, w).total;
  };
}

}  // namespace semb
