#include "semb/problem.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "semb/error.hpp"

namespace semb {

namespace {

void reject_unknown(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ContractError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; }))
      throw ContractError("unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
T get(const Json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(where + "." + key + ": " + e.what());
  }
}

template <typename T>
void get_opt(const Json& j, const char* key, T& out, const std::string& where) {
  if (j.contains(key)) out = get<T>(j, key, where);
}

I2mVariant parse_variant(const std::string& s) {
  if (s == "gt-class") return I2mVariant::GtClass;
  if (s == "all") return I2mVariant::All;
  throw ContractError("i2m_variant must be 'gt-class' or 'all'");
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace

std::string MeshSpec::geometry_key() const {
  if (path) return "path:" + *path;
  if (icosphere) return "icosphere:" + std::to_string(*icosphere);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "tetrahedron:%.17g", tetrahedron.value_or(1.0));
  return buf;
}

ProblemConfig parse_problem_config(const Json& j, const std::filesystem::path& base_dir) {
  reject_unknown(j, {"meshes", "Q", "D", "mode", "seed", "geodesic_cap", "scenes", "anchors", "train", "weights"},
                 "config");
  ProblemConfig cfg;
  get_opt(j, "Q", cfg.Q, "config");
  get_opt(j, "D", cfg.D, "config");
  get_opt(j, "seed", cfg.seed, "config");
  get_opt(j, "geodesic_cap", cfg.geodesic_cap, "config");
  if (j.contains("mode")) cfg.mode = parse_similarity(get<std::string>(j, "mode", "config"));
  if (cfg.Q < 1 || cfg.D < 1) throw ContractError("Q and D must be positive");

  if (!j.contains("meshes") || !j["meshes"].is_array() || j["meshes"].empty())
    throw ContractError("config.meshes must be a nonempty array");
  for (const auto& m : j["meshes"]) {
    reject_unknown(m, {"category", "path", "icosphere", "tetrahedron", "permutation_seed", "keypoints"}, "meshes[]");
    MeshSpec spec;
    spec.category = get<int>(m, "category", "meshes[]");
    if (m.contains("path")) {
      std::filesystem::path p = get<std::string>(m, "path", "meshes[]");
      spec.path = (p.is_relative() && !base_dir.empty() ? base_dir / p : p).string();
    }
    if (m.contains("icosphere")) spec.icosphere = get<int>(m, "icosphere", "meshes[]");
    if (m.contains("tetrahedron")) spec.tetrahedron = get<double>(m, "tetrahedron", "meshes[]");
    if (m.contains("permutation_seed")) spec.permutation_seed = get<std::uint64_t>(m, "permutation_seed", "meshes[]");
    if (m.contains("keypoints")) {
      std::filesystem::path p = get<std::string>(m, "keypoints", "meshes[]");
      spec.keypoints = (p.is_relative() && !base_dir.empty() ? base_dir / p : p).string();
    }
    const int sources = int(spec.path.has_value()) + int(spec.icosphere.has_value()) + int(spec.tetrahedron.has_value());
    if (sources != 1) throw ContractError("each mesh needs exactly one of path, icosphere, tetrahedron");
    cfg.meshes.push_back(spec);
  }
  std::vector<int> ids;
  for (const auto& m : cfg.meshes) ids.push_back(m.category);
  std::sort(ids.begin(), ids.end());
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] != static_cast<int>(i)) throw ContractError("mesh categories must be exactly 0 .. M-1");
  std::sort(cfg.meshes.begin(), cfg.meshes.end(), [](const auto& a, const auto& b) { return a.category < b.category; });

  if (j.contains("scenes")) {
    for (const auto& s : j["scenes"]) {
      reject_unknown(s, {"category", "rotation", "rotation_seed", "resolution", "annotations", "annotation_seed"},
                     "scenes[]");
      SceneSpec spec;
      spec.category = get<int>(s, "category", "scenes[]");
      if (spec.category < 0 || spec.category >= static_cast<int>(cfg.meshes.size()))
        throw ContractError("scene references unknown category " + std::to_string(spec.category));
      if (s.contains("rotation")) {
        const auto r = get<std::vector<double>>(s, "rotation", "scenes[]");
        if (r.size() != 9) throw ContractError("scenes[].rotation must have 9 entries");
        Eigen::Matrix3d rot;
        for (int i = 0; i < 9; ++i) rot(i / 3, i % 3) = r[static_cast<std::size_t>(i)];
        spec.rotation = rot;
      }
      if (s.contains("rotation_seed")) spec.rotation_seed = get<std::uint64_t>(s, "rotation_seed", "scenes[]");
      if (s.contains("resolution")) {
        const auto res = get<std::vector<int>>(s, "resolution", "scenes[]");
        if (res.size() != 2) throw ContractError("scenes[].resolution must be [height, width]");
        spec.height = res[0];
        spec.width = res[1];
      }
      get_opt(s, "annotations", spec.annotations, "scenes[]");
      if (s.contains("annotation_seed")) spec.annotation_seed = get<std::uint64_t>(s, "annotation_seed", "scenes[]");
      cfg.scenes.push_back(spec);
    }
  }

  if (j.contains("anchors")) {
    const auto& a = j["anchors"];
    reject_unknown(a, {"count", "seed", "pairs"}, "anchors");
    get_opt(a, "count", cfg.anchors.count, "anchors");
    get_opt(a, "seed", cfg.anchors.seed, "anchors");
    if (a.contains("pairs")) {
      for (const auto& p : a["pairs"]) {
        const auto v = p.get<std::vector<int>>();
        if (v.size() != 4) throw ContractError("anchors.pairs entries must be [src_cat, src_vertex, dst_cat, dst_vertex]");
        cfg.anchors.explicit_anchors.push_back({v[0], v[1], v[2], v[3]});
      }
    }
  }

  TrainConfig& tc = cfg.train;
  tc.seed = cfg.seed;
  if (j.contains("train")) {
    const auto& t = j["train"];
    reject_unknown(t,
                   {"steps", "learning_rate", "lr_drops", "optimizer", "beta1", "beta2", "epsilon", "pixels_per_step",
                    "init_sigma", "divergence_threshold", "spectral_schedule"},
                   "train");
    get_opt(t, "steps", tc.steps, "train");
    get_opt(t, "learning_rate", tc.learning_rate, "train");
    get_opt(t, "beta1", tc.beta1, "train");
    get_opt(t, "beta2", tc.beta2, "train");
    get_opt(t, "epsilon", tc.epsilon, "train");
    get_opt(t, "pixels_per_step", tc.pixels_per_step, "train");
    get_opt(t, "init_sigma", tc.init_sigma, "train");
    get_opt(t, "divergence_threshold", tc.divergence_threshold, "train");
    if (t.contains("optimizer")) {
      const auto o = get<std::string>(t, "optimizer", "train");
      if (o == "adam")
        tc.optimizer = OptimizerKind::Adam;
      else if (o == "sgd")
        tc.optimizer = OptimizerKind::Sgd;
      else
        throw ContractError("train.optimizer must be 'adam' or 'sgd'");
    }
    if (t.contains("lr_drops"))
      for (const auto& d : t["lr_drops"]) {
        if (!d.is_array() || d.size() != 2) throw ContractError("train.lr_drops entries must be [step, factor]");
        tc.lr_drops.push_back({d[0].get<int>(), d[1].get<double>()});
      }
    if (t.contains("spectral_schedule"))
      for (const auto& d : t["spectral_schedule"]) {
        if (!d.is_array() || d.size() != 2) throw ContractError("train.spectral_schedule entries must be [step, rows]");
        tc.spectral_schedule.push_back({d[0].get<int>(), d[1].get<Index>()});
      }
  }
  if (j.contains("weights")) {
    const auto& w = j["weights"];
    reject_unknown(w, {"sup", "m2m", "i2m", "i2m_variant", "i2m_normalization"}, "weights");
    get_opt(w, "sup", tc.weights.sup, "weights");
    get_opt(w, "m2m", tc.weights.m2m, "weights");
    get_opt(w, "i2m", tc.weights.i2m, "weights");
    if (w.contains("i2m_variant")) tc.weights.i2m_variant = parse_variant(get<std::string>(w, "i2m_variant", "weights"));
    if (w.contains("i2m_normalization")) {
      const auto n = get<std::string>(w, "i2m_normalization", "weights");
      if (n == "literal")
        tc.weights.i2m_normalization = CycleNormalization::Literal;
      else if (n == "sum")
        tc.weights.i2m_normalization = CycleNormalization::SumOnly;
      else
        throw ContractError("weights.i2m_normalization must be 'literal' or 'sum'");
    }
  }
  tc.validate();
  return cfg;
}

ProblemConfig read_problem_config(const std::filesystem::path& path) {
  return parse_problem_config(read_json(path), path.parent_path());
}

Json ProblemConfig::to_json() const {
  Json j;
  Json ms = Json::array();
  for (const auto& m : meshes) {
    Json e;
    e["category"] = m.category;
    if (m.path) e["path"] = *m.path;
    if (m.icosphere) e["icosphere"] = *m.icosphere;
    if (m.tetrahedron) e["tetrahedron"] = *m.tetrahedron;
    if (m.permutation_seed) e["permutation_seed"] = *m.permutation_seed;
    if (m.keypoints) e["keypoints"] = *m.keypoints;
    ms.push_back(e);
  }
  j["meshes"] = ms;
  j["Q"] = Q;
  j["D"] = D;
  j["mode"] = std::string(to_string(mode));
  j["seed"] = seed;
  j["geodesic_cap"] = geodesic_cap;
  Json ss = Json::array();
  for (const auto& s : scenes) {
    Json e;
    e["category"] = s.category;
    if (s.rotation) {
      Json r = Json::array();
      for (int i = 0; i < 9; ++i) r.push_back((*s.rotation)(i / 3, i % 3));
      e["rotation"] = r;
    }
    if (s.rotation_seed) e["rotation_seed"] = *s.rotation_seed;
    e["resolution"] = {s.height, s.width};
    e["annotations"] = s.annotations;
    if (s.annotation_seed) e["annotation_seed"] = *s.annotation_seed;
    ss.push_back(e);
  }
  j["scenes"] = ss;
  Json pairs = Json::array();
  for (const auto& a : anchors.explicit_anchors)
    pairs.push_back({a.source_category, a.source_vertex, a.target_category, a.target_vertex});
  j["anchors"] = {{"count", anchors.count}, {"seed", anchors.seed}, {"pairs", pairs}};
  Json drops = Json::array();
  for (const auto& d : train.lr_drops) drops.push_back({d.step, d.factor});
  Json stages = Json::array();
  for (const auto& st : train.spectral_schedule) stages.push_back({st.step, st.active});
  j["train"] = {{"steps", train.steps},
                {"learning_rate", train.learning_rate},
                {"lr_drops", drops},
                {"optimizer", train.optimizer == OptimizerKind::Adam ? "adam" : "sgd"},
                {"beta1", train.beta1},
                {"beta2", train.beta2},
                {"epsilon", train.epsilon},
                {"pixels_per_step", train.pixels_per_step},
                {"init_sigma", train.init_sigma},
                {"divergence_threshold", train.divergence_threshold},
                {"spectral_schedule", stages}};
  j["weights"] = {{"sup", train.weights.sup},
                  {"m2m", train.weights.m2m},
                  {"i2m", train.weights.i2m},
                  {"i2m_variant", train.weights.i2m_variant == I2mVariant::All ? "all" : "gt-class"},
                  {"i2m_normalization", train.weights.i2m_normalization == CycleNormalization::Literal ? "literal" : "sum"}};
  return j;
}

BuiltProblem build_problem(const ProblemConfig& config, bool use_cache) {
  BuiltProblem built;
  built.problem.mode = config.mode;
  built.problem.embedding_dim = config.D;

  for (const auto& spec : config.meshes) {
    Mesh base = spec.path         ? load_mesh(*spec.path, spec.category)
                : spec.icosphere ? make_icosphere(*spec.icosphere)
                                 : make_tetrahedron(*spec.tetrahedron);
    base = Mesh(base.vertices(), base.faces(), spec.category);
    std::vector<int> perm(static_cast<std::size_t>(base.num_vertices()));
    std::iota(perm.begin(), perm.end(), 0);
    if (spec.permutation_seed) {
      auto copy = permuted_copy(base, *spec.permutation_seed);
      base = std::move(copy.mesh);
      perm = std::move(copy.permutation);
    }
    auto basis = std::make_shared<SpectralBasis>(cached_spectral_basis(base, config.Q, use_cache));
    GeodesicMatrix geo = normalize_geodesics(cached_geodesics(base, config.geodesic_cap, use_cache));
    built.problem.categories.push_back({std::move(basis), std::move(geo)});
    built.geometry_keys.push_back(spec.geometry_key());
    built.permutations.push_back(std::move(perm));
    built.keypoints.push_back(spec.keypoints ? std::optional(read_vertex_keypoints(*spec.keypoints)) : std::nullopt);
    built.meshes.push_back(std::move(base));
  }

  for (std::size_t s = 0; s < config.scenes.size(); ++s) {
    const auto& spec = config.scenes[s];
    const Eigen::Matrix3d rotation =
        spec.rotation ? *spec.rotation
                      : random_rotation(spec.rotation_seed.value_or(mix_seed(config.seed, 1000 + s)));
    Scene scene = render_scene(built.meshes[static_cast<std::size_t>(spec.category)], rotation, spec.height,
                               spec.width, static_cast<int>(s));
    const auto ann = sample_annotations(scene, std::min<Index>(spec.annotations, scene.num_masked()),
                                        spec.annotation_seed.value_or(mix_seed(config.seed, 2000 + s)));
    built.problem.annotations.insert(built.problem.annotations.end(), ann.begin(), ann.end());
    built.problem.scenes.push_back({scene.mask, scene.category_id});
    built.scenes.push_back(std::move(scene));
  }

  const int M = static_cast<int>(built.meshes.size());
  for (const auto& a : config.anchors.explicit_anchors) {
    if (a.source_category < 0 || a.source_category >= M || a.target_category < 0 || a.target_category >= M)
      throw ContractError("anchor references unknown category");
    built.problem.anchors.push_back(a);
  }
  if (config.anchors.count > 0) {
    std::mt19937_64 rng(config.anchors.seed);
    for (int m = 0; m < M; ++m)
      for (int n = m + 1; n < M; ++n) {
        const auto truth = ground_truth_map(built, m, n);
        if (!truth) continue;
        const Index K = built.meshes[static_cast<std::size_t>(m)].num_vertices();
        if (config.anchors.count > K) throw ContractError("more anchors requested than vertices");
        std::vector<int> pool(static_cast<std::size_t>(K));
        std::iota(pool.begin(), pool.end(), 0);
        for (Index i = 0; i < config.anchors.count; ++i) {
          std::uniform_int_distribution<Index> pick(i, K - 1);
          std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
          const int v = pool[static_cast<std::size_t>(i)];
          const int w = (*truth)[static_cast<std::size_t>(v)];
          built.problem.anchors.push_back({m, v, n, w});
          built.problem.anchors.push_back({n, w, m, v});
        }
      }
  }
  return built;
}

std::optional<std::vector<int>> ground_truth_map(const BuiltProblem& built, int m, int n) {
  const auto um = static_cast<std::size_t>(m), un = static_cast<std::size_t>(n);
  if (built.geometry_keys.at(um) != built.geometry_keys.at(un)) return std::nullopt;
  const auto inverse_m = invert_permutation(built.permutations[um]);
  std::vector<int> out(inverse_m.size());
  for (std::size_t x = 0; x < inverse_m.size(); ++x)
    out[x] = built.permutations[un][static_cast<std::size_t>(inverse_m[x])];
  return out;
}

}  // namespace semb
