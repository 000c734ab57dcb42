#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include "semb/io.hpp"
#include "semb/matrix_file.hpp"
#include "semb/metrics.hpp"
#include "support.hpp"

using namespace semb;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args, const fs::path& stdout_file = "/dev/null") {
  const std::string cmd = std::string(SEMB_CLI_PATH) + " " + args + " > " + stdout_file.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

const char* kAlignConfig = R"({
  "meshes": [{"category": 0, "icosphere": 1}, {"category": 1, "icosphere": 1, "permutation_seed": 7}],
  "Q": 16, "D": 8, "mode": "neg_sqdist", "seed": 3,
  "scenes": [{"category": 0, "rotation_seed": 1, "resolution": [16, 16], "annotations": 10}],
  "anchors": {"count": 10, "seed": 2},
  "train": {"steps": 30, "pixels_per_step": 16}})";

}  // namespace

TEST_CASE("basis") {
  const fs::path dir = test::scratch_dir("cli_basis");
  write_obj(make_tetrahedron(), dir / "tet.obj");
  CHECK(run("--out " + (dir / "b1.semb").string() + " basis --mesh " + (dir / "tet.obj").string() + " --q 2") == 0);
  const MatrixFile f = read_matrix_file(dir / "b1.semb");
  CHECK(f.dims == std::vector<std::uint32_t>{4, 2});
  CHECK(read_json(dir / "b1.semb.json")["Q"] == 2);

  CHECK(run("--no-cache --out " + (dir / "b2.semb").string() + " basis --mesh " + (dir / "tet.obj").string() +
            " --q 2") == 0);
  CHECK(read_bytes(dir / "b1.semb") == read_bytes(dir / "b2.semb"));

  CHECK(run("--out " + (dir / "b3.semb").string() + " basis --mesh " + (dir / "tet.obj").string() + " --q 4",
            dir / "err.txt") == 2);
  CHECK(read_bytes(dir / "err.txt").find("Q < K") != std::string::npos);
  CHECK(run("basis --mesh " + (dir / "missing.obj").string() + " --q 2") == 2);
  CHECK(run("frobnicate") == 2);
  fs::remove_all(dir);
}

TEST_CASE("align, eval, transfer, export-colors") {
  const fs::path dir = test::scratch_dir("cli_align");
  write_text(dir / "cfg.json", kAlignConfig);
  const std::string cfg = "--config " + (dir / "cfg.json").string();
  REQUIRE(run(cfg + " --out " + (dir / "a").string() + " align") == 0);
  REQUIRE(run(cfg + " --out " + (dir / "b").string() + " align") == 0);

  SUBCASE("artifacts") {
    for (const char* name : {"report.json", "metrics.json", "map_0_1.csv", "map_1_0.csv", "emb_0.semb", "emb_1.semb",
                             "emb_0.expanded.semb", "field_0.semb", "scene_0.json", "mesh_0.obj", "geodesics_1.semb"})
      CHECK_MESSAGE(fs::exists(dir / "a" / name), name);
    const Json report = read_json(dir / "a/report.json");
    CHECK(report["steps_completed"] == 30);
    CHECK(report["history"].size() == 30);
  }
  SUBCASE("same seed, same bytes") {
    for (const char* name : {"metrics.json", "report.json", "map_0_1.csv", "emb_1.semb"})
      CHECK_MESSAGE(read_bytes(dir / "a" / name) == read_bytes(dir / "b" / name), name);
    REQUIRE(run(cfg + " --seed 4 --out " + (dir / "c").string() + " align") == 0);
    CHECK(read_bytes(dir / "a/emb_1.semb") != read_bytes(dir / "c/emb_1.semb"));
  }
  SUBCASE("reported GErr recomputes from the written map") {
    const Json metrics = read_json(dir / "a/metrics.json");
    const auto pred = parse_vertex_map_csv(read_bytes(dir / "a/map_0_1.csv"));
    const auto truth = parse_vertex_map_csv(read_bytes(dir / "a/truth_0_1.csv"));
    GeodesicMatrix g{to_matrix(read_matrix_file(dir / "a/geodesics_1.semb")), true};
    CHECK(metrics["items"][0]["gerr"].get<double>() == gerr(pred, truth, g));
    CHECK(metrics["items"][0]["gps"].get<double>() == gps_set(pred, truth, g));
  }
  SUBCASE("eval") {
    const Mesh m1 = load_mesh(dir / "a/mesh_1.obj");
    std::vector<int> id(static_cast<std::size_t>(m1.num_vertices()));
    std::iota(id.begin(), id.end(), 0);
    write_text(dir / "id.csv", vertex_map_csv(id));
    CHECK(run("eval --map " + (dir / "id.csv").string() + " --mesh " + (dir / "a/mesh_1.obj").string(),
              dir / "id.json") == 0);
    const Json self = Json::parse(read_bytes(dir / "id.json"));
    CHECK(self["value"]["gerr"] == 0.0);
    CHECK(self["value"]["gps"] == 1.0);

    CHECK(run("eval --map " + (dir / "a/map_0_1.csv").string() + " --mesh " + (dir / "a/mesh_1.obj").string() +
                  " --truth " + (dir / "a/truth_0_1.csv").string(),
              dir / "ev.json") == 0);
    const Json ev = Json::parse(read_bytes(dir / "ev.json"));
    const auto pred = parse_vertex_map_csv(read_bytes(dir / "a/map_0_1.csv"));
    const auto truth = parse_vertex_map_csv(read_bytes(dir / "a/truth_0_1.csv"));
    const GeodesicMatrix g = normalize_geodesics(geodesic_matrix(m1));
    CHECK(ev["value"]["gerr"].get<double>() == gerr(pred, truth, g));
    CHECK(ev["value"]["gps"].get<double>() == gps_set(pred, truth, g));

    id.back() = static_cast<int>(id.size());
    write_text(dir / "bad.csv", vertex_map_csv(id));
    CHECK(run("eval --map " + (dir / "bad.csv").string() + " --mesh " + (dir / "a/mesh_1.obj").string()) == 2);
  }
  SUBCASE("transfer") {
    const Scene sc = read_scene(dir / "a/scene_0");
    std::vector<PixelKeypoint> kps;
    int n = 0;
    for (int r = 0; r < sc.height && n < 4; ++r)
      for (int c = 0; c < sc.width && n < 4; c += 3)
        if (sc.mask(r, c)) kps.push_back({"k" + std::to_string(n++), double(r), double(c), true});
    write_text(dir / "kp.json", dump_json(pixel_keypoints_json(kps)));
    const std::string src = " --source-scene " + (dir / "a/scene_0").string() + " --source-field " +
                            (dir / "a/field_0.semb").string();
    const std::string tgt = " --target-scene " + (dir / "a/scene_0").string() + " --target-field " +
                            (dir / "a/field_0.semb").string();
    const std::string kp = " --keypoints " + (dir / "kp.json").string() + " --target-keypoints " +
                           (dir / "kp.json").string();
    CHECK(run("--mode neg_sqdist --out " + (dir / "t").string() + " transfer" + src + tgt + kp) == 0);
    const Json t = read_json(dir / "t/transfer.json");
    CHECK(t["value"] == 1.0);
    CHECK(t["config"]["mode"] == "neg_sqdist");
    CHECK(read_pixel_keypoints(dir / "t/predictions.json").size() == kps.size());

    CHECK(run("--mode neg_sqdist --out " + (dir / "t2").string() + " transfer" + src + tgt + kp) == 0);
    CHECK(read_bytes(dir / "t/transfer.json") == read_bytes(dir / "t2/transfer.json"));

    write_text(dir / "novis.json", R"({"k0": [1, 2]})");
    CHECK(run("--out " + (dir / "t3").string() + " transfer" + src + tgt + " --keypoints " +
              (dir / "novis.json").string() + " --target-keypoints " + (dir / "kp.json").string()) == 2);
  }
  SUBCASE("export-colors") {
    const std::string e0 = (dir / "a/emb_0.expanded.semb").string(), m0 = (dir / "a/mesh_0.obj").string();
    const std::string args = " export-colors --embedding " + e0 + " --mesh " + m0 + " --embedding " + e0 + " --mesh " + m0;
    CHECK(run("--out " + (dir / "c1").string() + args) == 0);
    CHECK(run("--out " + (dir / "c2").string() + args) == 0);
    const std::string p0 = read_bytes(dir / "c1/colors_0.ply"), p1 = read_bytes(dir / "c1/colors_1.ply");
    CHECK(p0 == p1);
    CHECK(p0 == read_bytes(dir / "c2/colors_0.ply"));
    CHECK(p0.rfind("ply\nformat ascii 1.0\n", 0) == 0);
    CHECK(p0.find("element vertex 42\n") != std::string::npos);
    const auto body = p0.substr(p0.find("end_header\n") + 11);
    CHECK(std::count(body.begin(), body.end(), '\n') == 42 + 80);

    write_matrix_file(dir / "narrow.semb", from_matrix(test::random_matrix(42, 2, 1)));
    CHECK(run("--out " + (dir / "c3").string() + " export-colors --embedding " + (dir / "narrow.semb").string() +
              " --mesh " + m0) == 2);
  }
  fs::remove_all(dir);
}

TEST_CASE("gradcheck") {
  const fs::path dir = test::scratch_dir("cli_gradcheck");
  write_text(dir / "cfg.json", kAlignConfig);
  const std::string cfg = "--config " + (dir / "cfg.json").string();
  CHECK(run(cfg + " gradcheck", dir / "ok.txt") == 0);
  const std::string table = read_bytes(dir / "ok.txt");
  for (const char* term : {"sup", "m2m", "i2m"}) CHECK_MESSAGE(table.find(term) != std::string::npos, term);
  CHECK(run(cfg + " gradcheck --corrupt-gradient 0.01") == 1);

  write_text(dir / "suponly.json", R"({"meshes": [{"category": 0, "icosphere": 0}], "Q": 4, "D": 2,
    "scenes": [{"category": 0, "rotation_seed": 1, "resolution": [8, 8], "annotations": 4}],
    "weights": {"sup": 1, "m2m": 0, "i2m": 0}})");
  CHECK(run("--config " + (dir / "suponly.json").string() + " gradcheck", dir / "sup.txt") == 0);
  const std::string sup = read_bytes(dir / "sup.txt");
  CHECK(sup.find("sup") != std::string::npos);
  CHECK(sup.find("m2m") == std::string::npos);
  fs::remove_all(dir);
}
