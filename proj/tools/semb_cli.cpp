// semb: command-line front end for surface-embedding correspondence.
//
// Exit codes: 0 ok, 1 gradient check failed, 2 input/contract error, 3 numerical divergence.

#include <CLI11.hpp>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "semb/error.hpp"
#include "semb/io.hpp"
#include "semb/matrix_file.hpp"
#include "semb/metrics.hpp"
#include "semb/optimize.hpp"
#include "semb/problem.hpp"

namespace fs = std::filesystem;
using namespace semb;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitContract = 2;
constexpr int kExitDivergence = 3;

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string mode;
  bool no_cache = false;
};

ProblemConfig load_config(const GlobalOptions& g) {
  if (g.config.empty()) throw ContractError("--config is required");
  ProblemConfig cfg = read_problem_config(g.config);
  if (g.seed) {
    cfg.seed = *g.seed;
    cfg.train.seed = *g.seed;
  }
  if (!g.mode.empty()) cfg.mode = parse_similarity(g.mode);
  return cfg;
}

fs::path require_out(const GlobalOptions& g) {
  if (g.out.empty()) throw ContractError("--out is required");
  return g.out;
}

Json history_json(const std::vector<StepRecord>& history) {
  Json h = Json::array();
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& r = history[i];
    h.push_back({{"step", i}, {"total", r.total}, {"sup", r.sup}, {"m2m", r.m2m}, {"i2m", r.i2m}, {"lr", r.learning_rate}});
  }
  return h;
}

Json report_json(const ProblemConfig& cfg, const TrainReport& report, bool diverged) {
  Json j;
  j["config"] = cfg.to_json();
  j["steps_completed"] = report.history.size();
  j["diverged"] = diverged;
  j["history"] = history_json(report.history);
  return j;
}

// -- basis -------------------------------------------------------------------

int run_basis(const GlobalOptions& g, const std::string& mesh_path, Index Q) {
  const Mesh mesh = load_mesh(mesh_path);
  if (Q < 1 || Q >= mesh.num_vertices())
    throw ContractError("basis size must satisfy 1 <= Q < K (Q=" + std::to_string(Q) +
                        ", K=" + std::to_string(mesh.num_vertices()) + ")");
  const fs::path out = require_out(g);
  const SpectralBasis basis = cached_spectral_basis(mesh, Q, !g.no_cache);
  write_matrix_file(out, from_matrix(basis.U));
  Json side;
  side["K"] = mesh.num_vertices();
  side["Q"] = Q;
  side["mesh_hash"] = hash_hex(mesh.content_hash());
  side["eigenvalues"] = std::vector<double>(basis.eigenvalues.data(), basis.eigenvalues.data() + basis.eigenvalues.size());
  fs::path side_path = out;
  side_path += ".json";
  write_json(side_path, side);
  return kExitOk;
}

// -- align -------------------------------------------------------------------

Json dense_pose_json(const BuiltProblem& built, const ParameterSet& params, Similarity mode) {
  std::vector<double> per_scene;
  Json items = Json::array();
  for (std::size_t s = 0; s < built.scenes.size(); ++s) {
    const Scene& scene = built.scenes[s];
    const PixelField& field = params.fields[s];
    const auto pixels = field.masked_pixels();
    const auto predicted =
        argmax_assignment(gather_rows(field.grid, pixels), params.embeddings[static_cast<std::size_t>(scene.category_id)].expanded(), mode);
    std::vector<int> truth;
    for (Index p : pixels) truth.push_back(scene.gt_vertex(static_cast<Index>(p / scene.width), p % scene.width));
    const auto& geo = built.problem.categories[static_cast<std::size_t>(scene.category_id)].geodesics;
    const double gps = gps_set(predicted, truth, geo);
    per_scene.push_back(gps);
    items.push_back({{"scene", s}, {"category", scene.category_id}, {"gps", gps}, {"gerr", gerr(predicted, truth, geo)}});
  }
  Json j;
  j["items"] = items;
  if (!per_scene.empty()) {
    const ApAr r = ap_ar(per_scene);
    j["ap"] = r.ap;
    j["ar"] = r.ar;
  }
  return j;
}

int run_align(const GlobalOptions& g) {
  const ProblemConfig cfg = load_config(g);
  const fs::path out = require_out(g);
  fs::create_directories(out);
  const BuiltProblem built = build_problem(cfg, !g.no_cache);

  TrainReport report;
  try {
    report = train(cfg.train, built.problem);
  } catch (const DivergenceError& e) {
    write_json(out / "report.json", report_json(cfg, e.report(), true));
    throw;
  }
  std::fprintf(stderr, "trained %d steps in %.2f s, final loss %.6g\n", cfg.train.steps, report.wall_seconds,
               report.history.back().total);
  write_json(out / "report.json", report_json(cfg, report, false));

  const Similarity mode = cfg.mode;
  const int M = static_cast<int>(built.meshes.size());
  for (int m = 0; m < M; ++m) {
    const auto um = static_cast<std::size_t>(m);
    const std::string tag = std::to_string(m);
    write_embedding(out / ("emb_" + tag + ".semb"), report.parameters.embeddings[um], mode);
    write_matrix_file(out / ("emb_" + tag + ".expanded.semb"), from_matrix(report.parameters.embeddings[um].expanded()));
    write_obj(built.meshes[um], out / ("mesh_" + tag + ".obj"));
    write_matrix_file(out / ("geodesics_" + tag + ".semb"), from_matrix(built.problem.categories[um].geodesics.values));
  }
  for (std::size_t s = 0; s < built.scenes.size(); ++s) {
    const std::string tag = std::to_string(s);
    write_scene(out / ("scene_" + tag), built.scenes[s], built.meshes[static_cast<std::size_t>(built.scenes[s].category_id)].content_hash());
    write_pixel_field(out / ("field_" + tag + ".semb"), report.parameters.fields[s], mode);
  }

  Json items = Json::array();
  double gerr_sum = 0.0, gps_sum = 0.0;
  int counted = 0;
  for (int m = 0; m < M; ++m)
    for (int n = 0; n < M; ++n) {
      if (m == n) continue;
      const auto& src = report.parameters.embeddings[static_cast<std::size_t>(m)];
      const auto& tgt = report.parameters.embeddings[static_cast<std::size_t>(n)];
      const VertexMap map = alignment_map(src, tgt, mode);
      const std::string tag = std::to_string(m) + "_" + std::to_string(n);
      write_bytes_atomic(out / ("map_" + tag + ".csv"), vertex_map_csv(map.assignment));
      const auto& geo = built.problem.categories[static_cast<std::size_t>(n)].geodesics;
      Json item;
      item["source"] = m;
      item["target"] = n;
      if (const auto truth = ground_truth_map(built, m, n)) {
        write_bytes_atomic(out / ("truth_" + tag + ".csv"), vertex_map_csv(*truth));
        std::size_t hits = 0;
        for (std::size_t i = 0; i < truth->size(); ++i) hits += map.assignment[i] == (*truth)[i];
        item["gerr"] = gerr(map.assignment, *truth, geo);
        item["gps"] = gps_set(map.assignment, *truth, geo);
        item["top1"] = static_cast<double>(hits) / static_cast<double>(truth->size());
        gerr_sum += item["gerr"].get<double>();
        gps_sum += item["gps"].get<double>();
        ++counted;
      }
      const auto& kps = built.keypoints[static_cast<std::size_t>(m)];
      const auto& kpt = built.keypoints[static_cast<std::size_t>(n)];
      if (kps && kpt) {
        std::vector<int> pred, truth;
        for (const auto& [name, v] : *kps)
          if (auto it = kpt->find(name); it != kpt->end()) {
            pred.push_back(map.assignment.at(static_cast<std::size_t>(v)));
            truth.push_back(it->second);
          }
        if (!pred.empty()) {
          item["keypoint_gerr"] = gerr(pred, truth, geo);
          item["keypoint_gps"] = gps_set(pred, truth, geo);
        }
      }
      items.push_back(item);
    }

  Json metrics;
  metrics["metric"] = "alignment";
  metrics["value"] = counted > 0 ? Json{{"gerr", gerr_sum / counted}, {"gps", gps_sum / counted}} : Json(nullptr);
  metrics["items"] = items;
  metrics["dense_pose"] = dense_pose_json(built, report.parameters, mode);
  metrics["config"] = {{"mode", std::string(to_string(mode))}, {"seed", cfg.seed}, {"kappa", kGpsKappa},
                       {"d_max", kGeodesicMax}};
  write_json(out / "metrics.json", metrics);
  return kExitOk;
}

// -- eval --------------------------------------------------------------------

int run_eval(const GlobalOptions& g, const std::string& map_path, const std::string& target_mesh,
             const std::string& source_mesh, const std::string& truth_path, const std::string& source_kp,
             const std::string& target_kp) {
  const std::vector<int> map = parse_vertex_map_csv(read_bytes(map_path));
  const Mesh target = load_mesh(target_mesh);
  const Index K = target.num_vertices();
  for (std::size_t i = 0; i < map.size(); ++i)
    if (map[i] < 0 || map[i] >= K)
      throw ContractError("map row " + std::to_string(i) + " targets vertex " + std::to_string(map[i]) +
                          " outside [0, " + std::to_string(K) + ")");
  if (!source_mesh.empty() && load_mesh(source_mesh).num_vertices() != static_cast<Index>(map.size()))
    throw ContractError("map length does not match the source mesh vertex count");
  const GeodesicMatrix geo = normalize_geodesics(cached_geodesics(target, kDefaultGeodesicCap, !g.no_cache));

  std::vector<int> truth;
  if (!truth_path.empty()) {
    truth = parse_vertex_map_csv(read_bytes(truth_path));
  } else {
    truth.resize(map.size());
    for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = static_cast<int>(i);
  }
  if (truth.size() != map.size()) throw ContractError("truth and map lengths differ");

  std::vector<int> pred_sel = map, truth_sel = truth;
  if (!source_kp.empty() || !target_kp.empty()) {
    if (source_kp.empty() || target_kp.empty())
      throw ContractError("--source-keypoints and --target-keypoints must be given together");
    const auto skp = read_vertex_keypoints(source_kp);
    const auto tkp = read_vertex_keypoints(target_kp);
    pred_sel.clear();
    truth_sel.clear();
    for (const auto& [name, v] : skp)
      if (auto it = tkp.find(name); it != tkp.end()) {
        if (v < 0 || v >= static_cast<int>(map.size())) throw ContractError("keypoint '" + name + "' out of range");
        pred_sel.push_back(map[static_cast<std::size_t>(v)]);
        truth_sel.push_back(it->second);
      }
  }
  Json j;
  j["metric"] = "eval";
  j["value"] = {{"gerr", gerr(pred_sel, truth_sel, geo)}, {"gps", gps_set(pred_sel, truth_sel, geo)}};
  j["items"] = {{"pairs", pred_sel.size()}};
  j["config"] = {{"kappa", kGpsKappa}, {"d_max", kGeodesicMax}, {"truth", truth_path.empty() ? "identity" : truth_path}};
  std::cout << dump_json(j);
  return kExitOk;
}

// -- transfer ----------------------------------------------------------------

int run_transfer(const GlobalOptions& g, const std::string& source_scene, const std::string& source_field,
                 const std::string& target_scene, const std::string& target_field, const std::string& keypoints,
                 const std::string& target_keypoints) {
  const fs::path out = require_out(g);
  const Scene ss = read_scene(source_scene);
  const Scene ts = read_scene(target_scene);
  const PixelField sf = read_pixel_field(source_field, ss);
  const PixelField tf = read_pixel_field(target_field, ts);
  Similarity mode = Similarity::NegInner;
  if (fs::path side = fs::path(source_field).concat(".json"); fs::exists(side)) {
    const Json j = read_json(side);
    if (j.contains("mode")) mode = parse_similarity(j["mode"].get<std::string>());
  }
  if (!g.mode.empty()) mode = parse_similarity(g.mode);

  const auto src_kp = read_pixel_keypoints(keypoints);
  const auto tgt_kp = read_pixel_keypoints(target_keypoints);
  const auto predicted = transfer_keypoints(sf, src_kp, tf, mode);

  int r0 = ts.height, r1 = -1, c0 = ts.width, c1 = -1;
  for (int r = 0; r < ts.height; ++r)
    for (int c = 0; c < ts.width; ++c)
      if (ts.mask(r, c)) {
        r0 = std::min(r0, r);
        r1 = std::max(r1, r);
        c0 = std::min(c0, c);
        c1 = std::max(c1, c);
      }
  const int box_h = r1 - r0 + 1, box_w = c1 - c0 + 1;
  const double pck = pck_transfer(predicted, tgt_kp, box_h, box_w, kPckAlpha);

  fs::create_directories(out);
  write_json(out / "predictions.json", pixel_keypoints_json(predicted));
  Json items = Json::array();
  for (const auto& t : tgt_kp) {
    if (!t.visible) continue;
    Json item{{"name", t.name}, {"truth", {t.row, t.col}}};
    for (const auto& p : predicted)
      if (p.name == t.name) {
        const double err = std::hypot(p.row - t.row, p.col - t.col);
        item["predicted"] = {p.row, p.col};
        item["error"] = err;
        item["correct"] = err <= kPckAlpha * std::max(box_h, box_w);
      }
    items.push_back(item);
  }
  Json j;
  j["metric"] = "pck_transfer";
  j["value"] = pck;
  j["items"] = items;
  j["config"] = {{"mode", std::string(to_string(mode))}, {"alpha", kPckAlpha}, {"box", {box_h, box_w}}};
  write_json(out / "transfer.json", j);
  std::cout << dump_json(j);
  return kExitOk;
}

// -- export-colors -----------------------------------------------------------

int run_export_colors(const GlobalOptions& g, const std::vector<std::string>& embeddings,
                      const std::vector<std::string>& meshes) {
  if (embeddings.empty() || embeddings.size() != meshes.size())
    throw ContractError("give one --embedding per --mesh");
  const fs::path out = require_out(g);
  std::vector<Mesh> ms;
  std::vector<Eigen::MatrixXd> es;
  Index total = 0, D = -1;
  for (std::size_t i = 0; i < meshes.size(); ++i) {
    ms.push_back(load_mesh(meshes[i]));
    es.push_back(to_matrix(read_matrix_file(embeddings[i])));
    if (es.back().rows() != ms.back().num_vertices())
      throw ContractError("embedding " + embeddings[i] + " has " + std::to_string(es.back().rows()) +
                          " rows; expected one per vertex (" + std::to_string(ms.back().num_vertices()) + ")");
    if (D >= 0 && es.back().cols() != D) throw ContractError("embeddings differ in dimension");
    D = es.back().cols();
    total += es.back().rows();
  }
  if (D < 3) throw ContractError("colour export needs embedding dimension D >= 3");

  Eigen::MatrixXd all(total, D);
  Index row = 0;
  for (const auto& e : es) {
    all.middleRows(row, e.rows()) = e;
    row += e.rows();
  }
  const Eigen::RowVectorXd mean = all.colwise().mean();
  const Eigen::MatrixXd centred = all.rowwise() - mean;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(centred.transpose() * centred);
  Eigen::MatrixXd axes = solver.eigenvectors().rightCols(3).rowwise().reverse();
  for (int c = 0; c < 3; ++c) {
    Index arg = 0;
    axes.col(c).cwiseAbs().maxCoeff(&arg);
    if (axes(arg, c) < 0.0) axes.col(c) *= -1.0;
  }
  const Eigen::MatrixXd projected = centred * axes;
  const Eigen::RowVector3d lo = projected.colwise().minCoeff(), hi = projected.colwise().maxCoeff();

  fs::create_directories(out);
  row = 0;
  for (std::size_t i = 0; i < ms.size(); ++i) {
    const Mesh& mesh = ms[i];
    std::string ply = "ply\nformat ascii 1.0\ncomment semb pca-rgb projection over " + std::to_string(ms.size()) +
                      " meshes, seed " + std::to_string(g.seed.value_or(0)) + "\nelement vertex " +
                      std::to_string(mesh.num_vertices()) +
                      "\nproperty double x\nproperty double y\nproperty double z\nproperty uchar red\n"
                      "property uchar green\nproperty uchar blue\nelement face " +
                      std::to_string(mesh.num_faces()) + "\nproperty list uchar int vertex_indices\nend_header\n";
    char buf[160];
    for (Index v = 0; v < mesh.num_vertices(); ++v, ++row) {
      int rgb[3];
      for (int c = 0; c < 3; ++c) {
        const double span = hi[c] - lo[c];
        rgb[c] = span > 0.0 ? static_cast<int>(std::lround(255.0 * (projected(row, c) - lo[c]) / span)) : 128;
      }
      std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %d %d %d\n", mesh.vertices()(v, 0), mesh.vertices()(v, 1),
                    mesh.vertices()(v, 2), rgb[0], rgb[1], rgb[2]);
      ply += buf;
    }
    for (Index f = 0; f < mesh.num_faces(); ++f) {
      std::snprintf(buf, sizeof(buf), "3 %d %d %d\n", mesh.faces()(f, 0), mesh.faces()(f, 1), mesh.faces()(f, 2));
      ply += buf;
    }
    write_bytes_atomic(out / ("colors_" + std::to_string(i) + ".ply"), ply);
  }
  return kExitOk;
}

// -- gradcheck ---------------------------------------------------------------

int run_gradcheck(const GlobalOptions& g, double corrupt, double sigma, double block_scale) {
  const ProblemConfig cfg = load_config(g);
  const BuiltProblem built = build_problem(cfg, !g.no_cache);
  const ParameterSet params = initialize_parameters(built.problem, cfg.seed, sigma);
  const auto samples = step_pixel_samples(params, cfg.train.pixels_per_step, cfg.seed, 0);
  const LossWeights& w = cfg.train.weights;

  std::vector<LossTerm> terms;
  if (w.sup > 0.0 && (!built.problem.annotations.empty() || !built.problem.anchors.empty()))
    terms.push_back(LossTerm::Sup);
  if (w.m2m > 0.0 && built.meshes.size() >= 2) terms.push_back(LossTerm::M2m);
  if (w.i2m > 0.0 && !built.scenes.empty())
    terms.push_back(w.i2m_variant == I2mVariant::All ? LossTerm::I2mAll : LossTerm::I2m);

  GradCheckOptions opts;
  opts.seed = cfg.seed;
  opts.corrupt_gradient = corrupt;
  opts.block_scale = block_scale;
  bool ok = true;
  std::printf("%-10s %-16s %s\n", "term", "max_rel_error", "status");
  for (LossTerm term : terms) {
    const double err = grad_check(term_function(built.problem, term, samples, w), params, opts);
    const bool pass = err < 1e-4;
    ok = ok && pass;
    std::printf("%-10s %-16.3e %s\n", std::string(to_string(term)).c_str(), err, pass ? "ok" : "FAIL");
  }
  return ok ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense correspondences between triangle meshes via continuous surface embeddings"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config, "Problem configuration (JSON)");
  app.add_option("--seed", g.seed, "Override the configured seed");
  app.add_option("--out", g.out, "Output file (basis) or directory");
  app.add_option("--mode", g.mode, "Similarity mode: neg_inner | inner | neg_sqdist");
  app.add_flag("--no-cache", g.no_cache, "Bypass the basis/geodesic cache");

  auto* basis = app.add_subcommand("basis", "Compute and cache a spectral basis");
  std::string basis_mesh;
  Index basis_q = 0;
  basis->add_option("--mesh", basis_mesh, "Mesh (.obj / .ply)")->required();
  basis->add_option("--q,-q", basis_q, "Number of eigenpairs")->required();

  auto* align = app.add_subcommand("align", "Train embeddings and evaluate mesh alignment");

  auto* eval = app.add_subcommand("eval", "Score a vertex map against ground truth");
  std::string eval_map, eval_target, eval_source, eval_truth, eval_skp, eval_tkp;
  eval->add_option("--map", eval_map, "Vertex map CSV")->required();
  eval->add_option("--target-mesh,--mesh", eval_target, "Mesh the map points into")->required();
  eval->add_option("--source-mesh", eval_source, "Mesh the map starts from (length check)");
  eval->add_option("--truth", eval_truth, "Ground-truth map CSV (default: identity)");
  eval->add_option("--source-keypoints", eval_skp, "{name: vertex} on the source mesh");
  eval->add_option("--target-keypoints", eval_tkp, "{name: vertex} on the target mesh");

  auto* transfer = app.add_subcommand("transfer", "Transfer image keypoints by nearest pixel embedding");
  std::string t_ss, t_sf, t_ts, t_tf, t_kp, t_tkp;
  transfer->add_option("--source-scene", t_ss, "Source scene stem")->required();
  transfer->add_option("--source-field", t_sf, "Source pixel field")->required();
  transfer->add_option("--target-scene", t_ts, "Target scene stem")->required();
  transfer->add_option("--target-field", t_tf, "Target pixel field")->required();
  transfer->add_option("--keypoints", t_kp, "{name: [row, col, visible]} in the source image")->required();
  transfer->add_option("--target-keypoints", t_tkp, "{name: [row, col, visible]} ground truth in the target")
      ->required();

  auto* colors = app.add_subcommand("export-colors", "Write vertex-coloured PLY files from embeddings");
  std::vector<std::string> c_emb, c_mesh;
  colors->add_option("--embedding", c_emb, "Expanded K x D embedding (repeatable)")->required();
  colors->add_option("--mesh", c_mesh, "Mesh for the matching embedding (repeatable)")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every enabled loss");
  double corrupt = 0.0, probe_sigma = 1.0, block_scale = GradCheckOptions{}.block_scale;
  gradcheck->add_option("--corrupt-gradient", corrupt, "Test hook: scale analytic gradients by (1 + value)");
  gradcheck->add_option("--sigma", probe_sigma, "Std-dev of the random parameters the check is run at")->capture_default_str();
  gradcheck->add_option("--block-scale", block_scale, "Denominator floor as a fraction of each block's largest gradient")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitContract;
  }

  try {
    if (*basis) return run_basis(g, basis_mesh, basis_q);
    if (*align) return run_align(g);
    if (*eval) return run_eval(g, eval_map, eval_target, eval_source, eval_truth, eval_skp, eval_tkp);
    if (*transfer) return run_transfer(g, t_ss, t_sf, t_ts, t_tf, t_kp, t_tkp);
    if (*colors) return run_export_colors(g, c_emb, c_mesh);
    if (*gradcheck) return run_gradcheck(g, corrupt, probe_sigma, block_scale);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitContract;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitContract;
  }
  return kExitContract;
}
