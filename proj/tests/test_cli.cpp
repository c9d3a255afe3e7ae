#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "umbra/dataio.hpp"
#include "umbra/generator.hpp"
#include "umbra/shadow.hpp"

using namespace umbra;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
  int code = -1;
  std::string out;  // stdout and stderr interleaved
};

RunResult run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + UMBRA_CLI_PATH + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult r;
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path tmp_dir(const std::string& leaf) {
  const fs::path dir = fs::temp_directory_path() / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string first_line(const std::string& s) {
  return s.substr(0, s.find('\n'));
}

// small scene with a stored latent, plus its rendered observation mask
fs::path small_case_dir() {
  static fs::path dir;
  if (!dir.empty()) return dir;
  dir = tmp_dir("umbra_cli_small");
  SceneDescriptor d;
  d.width = d.height = 48;
  d.cu = d.cv = (48 - 1) / 2.0;
  d.focal = 28.8;
  d.camera_position = {1.4, 0.9, 1.3};
  d.camera_target = {0.0, 0.0, 0.0};
  d.light_position = {0.7, -0.5, 2.8};
  d.ray_samples = 64;
  d.category = "blobs";
  d.generator_seed = 21;
  Rng rng(33);
  d.gt_latent = sample_latent(rng, 16);
  const GeneratorSpec gen = make_generator("blobs", 21);
  const ShapeSpec base = decode(gen, d.gt_latent);
  d.object_pose = PoseSE3({0.0, 0.0, rest_height(base)}, Quat::yaw(0.7));
  write_scene_json((dir / "scene.json").string(), d);

  ShapeSpec posed = base;
  posed.pose = d.object_pose;
  ShadowImage img = render_shadow(to_scene(d), posed);
  long lit = 0;
  for (size_t k = 0; k < img.values.size(); ++k)
    if (img.valid[k] && img.values[k] > 0.5) ++lit;
  REQUIRE(lit > 20);
  write_shadow_mask((dir / "obs.pgm").string(), img, true);
  return dir;
}

// a shared 5-scene dataset for the data-driven commands
fs::path dataset_dir() {
  static fs::path dir;
  if (!dir.empty()) return dir;
  dir = tmp_dir("umbra_cli_data");
  const RunResult r =
      run_cli("gen-data --out " + dir.string() + " --n 5 --category blobs --seed 31");
  REQUIRE(r.code == 0);
  REQUIRE(r.out.find("wrote 5 scenes (4 train, 1 test) to " + dir.string()) !=
          std::string::npos);
  return dir;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help exits cleanly and lists the subcommands") {
  const RunResult r = run_cli("--help");
  CHECK(r.code == 0);
  for (const char* name : {"gen-data", "render", "reconstruct", "eval", "gradcheck"})
    CHECK(r.out.find(name) != std::string::npos);
}

TEST_CASE("argument errors exit with code 1") {
  CHECK(run_cli("").code == 1);                       // subcommand required
  CHECK(run_cli("render --nope x").code == 1);        // unknown flag
  CHECK(run_cli("render --out a.pgm").code == 1);     // missing required --scene
  CHECK(run_cli("gradcheck --cases 0").code == 1);    // below range
  CHECK(run_cli("eval --dataset d --method bogus --out o.csv").code == 1);
  const RunResult missing =
      run_cli("reconstruct --shadow /nonexistent.pgm --scene /nonexistent.json --out /tmp/x");
  CHECK(missing.code == 1);
  CHECK(missing.out.find("error:") != std::string::npos);
}

TEST_CASE("render reproduces the stored dataset mask byte for byte") {
  const fs::path data = dataset_dir();
  const fs::path scene0 = data / "scene_0000";
  const fs::path out = tmp_dir("umbra_cli_render");
  RunResult r = run_cli("render --scene " + (scene0 / "scene.json").string() + " --out " +
                        (out / "re.pgm").string());
  CHECK(r.code == 0);
  CHECK(read_bytes(out / "re.pgm") == read_bytes(scene0 / "shadow.pgm"));
  CHECK(read_bytes(out / "re.valid.pgm") == read_bytes(scene0 / "shadow.valid.pgm"));

  r = run_cli("render --scene " + (scene0 / "scene.json").string() + " --out " +
              (out / "seg_run.pgm").string() + " --seg " + (out / "seg.pgm").string());
  CHECK(r.code == 0);
  CHECK(read_bytes(out / "seg.pgm") == read_bytes(scene0 / "seg.pgm"));

  r = run_cli("render --scene " + (scene0 / "scene.json").string() + " --out " +
              (out / "smooth.pgm").string() + " --mode smooth --tau 0.05");
  CHECK(r.code == 0);
  CHECK(read_bytes(out / "smooth.pgm") != read_bytes(out / "re.pgm"));
}

TEST_CASE("reconstruct writes the full artifact set deterministically") {
  const fs::path dir = small_case_dir();
  const fs::path out1 = tmp_dir("umbra_cli_rec1");
  const fs::path out2 = tmp_dir("umbra_cli_rec2");
  const std::string common = "reconstruct --shadow " + (dir / "obs.pgm").string() +
                             " --scene " + (dir / "scene.json").string() +
                             " --steps 8 --restarts 2 --seed 5";
  const RunResult r1 = run_cli(common + " --out " + out1.string());
  CHECK(r1.code == 0);
  CHECK(r1.out.find("best restart") != std::string::npos);

  // artifacts
  const json res = json::parse(read_bytes(out1 / "result.json"));
  CHECK(res.at("schema_version").get<int>() == 1);
  CHECK(res.at("config").at("steps").get<int>() == 8);
  CHECK(res.at("config").at("seed").get<uint64_t>() == 5u);
  REQUIRE(res.at("restarts").size() == 2u);
  CHECK(res.at("best_index").get<int>() ==
        res.at("restarts")[0].at("restart_index").get<int>());
  const double l0 = res.at("restarts")[0].at("final_loss").get<double>();
  const double l1 = res.at("restarts")[1].at("final_loss").get<double>();
  CHECK(l0 <= l1);
  CHECK(res.at("restarts")[0].at("z").size() == 16u);

  const auto losses = read_loss_csv((out1 / "losses.csv").string());
  REQUIRE(losses.size() == 2u * 8u);
  for (size_t i = 0; i < losses.size(); ++i) {
    CHECK(losses[i].restart == int(i / 8));
    CHECK(losses[i].step == int(i % 8));
    CHECK(std::isfinite(losses[i].loss));
  }

  const Mesh best = read_obj((out1 / "best.obj").string());
  CHECK(best.vertices.size() > 10u);
  const ShadowImage best_shadow = read_shadow_mask((out1 / "best_shadow.pgm").string());
  CHECK(best_shadow.width == 48);
  CHECK(best_shadow.height == 48);

  // a second run with a different thread count is byte-identical
  const RunResult r2 = run_cli(common + " --out " + out2.string() + " --threads 2");
  CHECK(r2.code == 0);
  for (const char* name : {"result.json", "losses.csv", "best.obj", "best_shadow.pgm"})
    CHECK(read_bytes(out1 / name) == read_bytes(out2 / name));
}

TEST_CASE("reconstruct reports total failure with exit code 3") {
  const fs::path dir = tmp_dir("umbra_cli_fail");
  SceneDescriptor d;
  d.width = d.height = 32;
  d.cu = d.cv = (32 - 1) / 2.0;
  d.focal = 9.6;
  d.camera_position = {2.5, 0.0, 0.4};  // grazing view: part of the image misses the ground
  d.camera_target = {0.0, 0.0, 0.4};
  d.light_position = {0.5, 0.3, 2.9};
  d.ray_samples = 32;
  d.category = "blobs";
  d.generator_seed = 3;
  d.gt_latent.assign(16, 0.25);
  write_scene_json((dir / "scene.json").string(), d);

  // mark valid exactly the pixels whose rays never reach the ground; those can
  // never enter the loss no matter what shape a restart proposes
  const RenderContext ctx(to_scene(d));
  ShadowImage obs(d.width, d.height);
  long off_ground = 0;
  for (size_t k = 0; k < obs.values.size(); ++k) {
    obs.values[k] = 1.0;
    obs.valid[k] = ctx.ground_ok[k] ? 0 : 1;
    if (obs.valid[k]) ++off_ground;
  }
  REQUIRE(off_ground > 0);
  write_shadow_mask((dir / "obs.pgm").string(), obs, false);

  const RunResult r = run_cli("reconstruct --shadow " + (dir / "obs.pgm").string() +
                              " --scene " + (dir / "scene.json").string() + " --out " +
                              (dir / "out").string() + " --steps 2 --restarts 2");
  CHECK(r.code == 3);
  CHECK(r.out.find("error:") != std::string::npos);
}

TEST_CASE("eval scores each method and writes a CSV") {
  const fs::path data = dataset_dir();
  const fs::path out = tmp_dir("umbra_cli_eval");

  for (const std::string method : {"nn", "random"}) {
    const std::string csv = (out / (method + ".csv")).string();
    const RunResult r = run_cli("eval --dataset " + data.string() + " --method " + method +
                                " --out " + csv + " --iou-samples 2000 --seed 3");
    CHECK(r.code == 0);
    CHECK(r.out.find("scene 000") != std::string::npos);
    const auto rows = read_eval_csv(csv);
    REQUIRE(rows.size() == 1u);  // one test scene in a 5-scene split
    CHECK(rows[0].method == method);
    CHECK(rows[0].category == "blobs");
    CHECK(rows[0].iou >= 0.0);
    CHECK(rows[0].iou <= 1.0);
    char expect[96];
    std::snprintf(expect, sizeof expect, "mean_iou %s blobs %.6f", method.c_str(),
                  rows[0].iou);
    CHECK(r.out.find(expect) != std::string::npos);
  }

  const std::string csv = (out / "latent.csv").string();
  const RunResult r = run_cli("eval --dataset " + data.string() +
                              " --method latent --out " + csv +
                              " --steps 5 --restarts 2 --iou-samples 2000 --seed 3");
  CHECK(r.code == 0);
  const auto rows = read_eval_csv(csv);
  REQUIRE(rows.size() == 1u);
  CHECK(rows[0].method == "latent");
  CHECK(r.out.find("mean_iou latent blobs") != std::string::npos);
}

TEST_CASE("gradcheck passes and prints a verdict") {
  const RunResult r = run_cli("gradcheck --cases 1");
  CHECK(r.code == 0);
  CHECK(r.out.find("gradcheck: PASS") != std::string::npos);
}

TEST_CASE("the seed comes from the environment unless a flag overrides it") {
  const RunResult from_env = run_cli("gradcheck --cases 1 --verbose", "UMBRA_SEED=9");
  CHECK(from_env.code == 0);
  const json echo = json::parse(first_line(from_env.out));
  CHECK(echo.at("command").get<std::string>() == "gradcheck");
  CHECK(echo.at("seed").get<uint64_t>() == 9u);
  CHECK(echo.at("cases").get<int>() == 1);

  const RunResult from_flag = run_cli("gradcheck --cases 1 --verbose --seed 11", "UMBRA_SEED=9");
  CHECK(from_flag.code == 0);
  CHECK(json::parse(first_line(from_flag.out)).at("seed").get<uint64_t>() == 11u);
}

}  // TEST_SUITE
