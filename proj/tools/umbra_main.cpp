#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "umbra/dataio.hpp"
#include "umbra/eval.hpp"
#include "umbra/optimizer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace umbra;

namespace {

json jvec(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

uint64_t scene_stream(uint64_t seed, int scene_index) {
  return seed ^ (uint64_t(scene_index + 1) * 0x9E3779B97F4A7C15ULL);
}

// ---------------------------------------------------------------- gen-data

int run_gen_data(const std::string& out, int n, const std::string& category,
                 uint64_t seed, int threads) {
  const DatasetManifest m = generate_dataset(out, n, category, seed, threads);
  std::printf("wrote %d scenes (%zu train, %zu test) to %s\n", m.count,
              m.train.size(), m.test.size(), out.c_str());
  return 0;
}

// ---------------------------------------------------------------- render

int run_render(const std::string& scene_path, const std::string& out,
               const std::string& mode, double tau, const std::string& seg_out,
               int threads) {
  const SceneDescriptor desc = read_scene_json(scene_path, false);
  const Scene scene = to_scene(desc);
  const ShapeSpec shape = ground_truth_shape(desc);
  RenderOptions opts;
  opts.mode = mode == "smooth" ? RenderMode::kSmooth : RenderMode::kHard;
  opts.tau = tau;
  opts.threads = threads;
  const ShadowImage img = render_shadow(scene, shape, opts);
  write_shadow_mask(out, img, opts.mode == RenderMode::kHard);
  if (!seg_out.empty())
    write_pgm(seg_out, render_segmentation(scene, shape, threads), true);
  return 0;
}

// ---------------------------------------------------------------- reconstruct

void write_result_json(const std::string& path, const ReconstructionResult& res,
                       const OptimizerConfig& cfg) {
  json j;
  j["schema_version"] = 1;
  j["best_index"] = res.best_index;
  j["config"] = {{"steps", cfg.steps},         {"lr", cfg.lr},
                 {"restarts", cfg.restarts},   {"noise", cfg.noise},
                 {"unknown_light", cfg.unknown_light},
                 {"unknown_pose", cfg.unknown_pose},
                 {"tau", cfg.tau},             {"seed", cfg.seed}};
  j["restarts"] = json::array();
  for (const RestartResult& rr : res.restarts) {
    json e;
    e["restart_index"] = rr.restart_index;
    e["failed"] = rr.failed;
    e["final_loss"] = rr.final_loss;
    e["z"] = rr.z;
    e["light_position"] = jvec(rr.light);
    e["pose"] = {{"translation", jvec(rr.pose.translation)},
                 {"rotation",
                  {rr.pose.rotation.x, rr.pose.rotation.y, rr.pose.rotation.z,
                   rr.pose.rotation.w}}};
    j["restarts"].push_back(std::move(e));
  }
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << j.dump(2) << "\n";
}

int run_reconstruct(const std::string& shadow_path, const std::string& scene_path,
                    const std::string& out_dir, const OptimizerConfig& cfg) {
  const SceneDescriptor desc = read_scene_json(scene_path, false);
  const Scene scene = to_scene(desc);
  const GeneratorSpec gen = to_generator(desc);
  const ShadowImage observed = read_shadow_mask(shadow_path);

  const ReconstructionResult res = reconstruct(observed, scene, gen, cfg);

  fs::create_directories(out_dir);
  write_result_json(out_dir + "/result.json", res, cfg);

  std::vector<LossRow> rows;
  for (const RestartResult& rr : res.restarts)
    for (size_t k = 0; k < rr.trajectory.size(); ++k)
      rows.push_back({rr.restart_index, int(k), rr.trajectory[k]});
  std::sort(rows.begin(), rows.end(), [](const LossRow& a, const LossRow& b) {
    return a.restart != b.restart ? a.restart < b.restart : a.step < b.step;
  });
  write_loss_csv(out_dir + "/losses.csv", rows);

  const RestartResult& best = res.restarts.front();
  Scene best_scene = scene;
  best_scene.light.position = best.light;
  best_scene.object_pose = best.shape.pose;
  RenderOptions hard;
  hard.threads = cfg.threads;
  write_shadow_mask(out_dir + "/best_shadow.pgm",
                    render_shadow(best_scene, best.shape, hard), true);
  try {
    write_obj(out_dir + "/best.obj", extract_mesh(best.shape, 64));
  } catch (const EmptyLevelSet&) {
    std::fprintf(stderr, "warning: best shape has no surface inside the mesh grid\n");
  }
  std::printf("best restart %d, final loss %.6g\n", best.restart_index,
              best.final_loss);
  return 0;
}

// ---------------------------------------------------------------- eval

int run_eval(const std::string& dataset, const std::string& method,
             const std::string& out_csv, OptimizerConfig cfg, int iou_samples) {
  const DatasetManifest m = read_manifest(dataset + "/manifest.json");
  if (m.test.empty()) throw IoError("dataset has no test scenes");

  std::vector<TrainExample> train;
  if (method != "latent") {
    for (int idx : m.train) {
      LoadedScene ls = load_scene_dir(dataset + "/" + m.scene_dirs[size_t(idx)]);
      train.push_back({std::move(ls.shadow), std::move(ls.gt)});
    }
    if (train.empty()) throw EmptyTrainingSet{};
  }

  const uint64_t seed = cfg.seed;
  std::vector<EvalRow> rows;
  double mean = 0.0;
  for (int idx : m.test) {
    const LoadedScene ls = load_scene_dir(dataset + "/" + m.scene_dirs[size_t(idx)]);
    // every method answers with a full ShapeSpec (shape plus pose), scored
    // in the world frame; the latent search keeps its best restart by IoU,
    // the baselines return a stored training scene's answer as-is
    const Rng iou_rng = Rng(scene_stream(seed, idx)).fork(7);
    double score = 0.0;
    if (method == "latent") {
      OptimizerConfig c = cfg;
      c.seed = scene_stream(seed, idx);
      const auto result = reconstruct(ls.shadow, ls.scene, to_generator(ls.desc), c);
      score = best_of_n_curve(result, ls.gt, iou_samples, iou_rng).back().second;
    } else if (method == "nn") {
      const ShapeSpec candidate = nearest_neighbor_baseline(ls.shadow, train);
      score = volumetric_iou(candidate, ls.gt, iou_samples, iou_rng).value;
    } else {
      Rng pick = Rng(seed).fork(uint64_t(idx));
      const ShapeSpec candidate = random_baseline(train, pick);
      score = volumetric_iou(candidate, ls.gt, iou_samples, iou_rng).value;
    }
    rows.push_back({method, m.category, idx, score});
    mean += score;
    std::printf("scene %04d iou %.4f\n", idx, score);
  }
  mean /= double(rows.size());
  write_eval_csv(out_csv, rows);
  std::printf("mean_iou %s %s %.6f\n", method.c_str(), m.category.c_str(), mean);
  return 0;
}

// ---------------------------------------------------------------- gradcheck

struct StageErrors {
  double decoder = 0.0, occupancy = 0.0, render = 0.0;
  bool render_skipped = false;  // shadow fully saturated, nothing to probe
  double worst() const { return std::max({decoder, occupancy, render}); }
};

double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
}

double frozen_bce(const ShadowImage& obs, const ShadowImage& pred,
                  const std::vector<int32_t>& pixels) {
  double sum = 0.0;
  for (int32_t idx : pixels) {
    if (!pred.valid[size_t(idx)])
      throw std::runtime_error("finite-difference probe invalidated a pixel");
    const double s = obs.values[size_t(idx)];
    const double p = std::clamp(pred.values[size_t(idx)], 1e-7, 1.0 - 1e-7);
    sum += s * std::log(p) + (1.0 - s) * std::log(1.0 - p);
  }
  return -sum / double(pixels.size());
}

StageErrors gradcheck_case(int c, uint64_t seed) {
  const double h = 1e-4;   // decoder and occupancy probes: truncation-limited
  const double hr = 1e-5;  // render probes carry sharper curvature
  StageErrors err;
  Rng rng = Rng(seed).fork(uint64_t(c));
  const GeneratorSpec gen = make_generator("blobs", seed + uint64_t(c));
  const std::vector<double> z = sample_latent(rng, gen.latent_dim);

  // decoder jacobian against central differences
  {
    const std::vector<double> jac = decode_jacobian(gen, z);
    std::vector<double> zp(z);
    for (int j = 0; j < gen.latent_dim; ++j) {
      zp[size_t(j)] = z[size_t(j)] + h;
      const std::vector<double> hi = decode_params(gen, zp);
      zp[size_t(j)] = z[size_t(j)] - h;
      const std::vector<double> lo = decode_params(gen, zp);
      zp[size_t(j)] = z[size_t(j)];
      for (int r = 0; r < gen.param_count(); ++r) {
        const double num = (hi[size_t(r)] - lo[size_t(r)]) / (2.0 * h);
        err.decoder =
            std::max(err.decoder, rel_err(jac[size_t(r) * gen.latent_dim + j], num));
      }
    }
  }

  ShapeSpec shape = decode(gen, z);
  shape.pose = PoseSE3({0.05, -0.08, rest_height(shape)}, Quat::yaw(0.3 * (c + 1)));

  // occupancy gradient against central differences at scattered points
  {
    const std::vector<double> params = flatten_params(shape);
    OccupancyGrad g;
    for (int t = 0; t < 20; ++t) {
      const Vec3 x{rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8),
                   rng.uniform(0.0, 1.2)};
      occupancy_grad_into(shape, x, g);
      std::vector<double> p(params);
      ShapeSpec probe = shape;
      for (size_t j = 0; j < p.size(); ++j) {
        p[j] = params[j] + h;
        apply_flat_params(probe, p);
        const double hi = occupancy(probe, x);
        p[j] = params[j] - h;
        apply_flat_params(probe, p);
        const double lo = occupancy(probe, x);
        p[j] = params[j];
        err.occupancy = std::max(err.occupancy, rel_err(g.dparams[j], (hi - lo) / (2.0 * h)));
      }
      apply_flat_params(probe, params);
      for (int axis = 0; axis < 3; ++axis) {
        Vec3 xp = x, xm = x;
        (axis == 0 ? xp.x : axis == 1 ? xp.y : xp.z) += h;
        (axis == 0 ? xm.x : axis == 1 ? xm.y : xm.z) -= h;
        const double num = (occupancy(probe, xp) - occupancy(probe, xm)) / (2.0 * h);
        const double ana = axis == 0 ? g.dx.x : axis == 1 ? g.dx.y : g.dx.z;
        err.occupancy = std::max(err.occupancy, rel_err(ana, num));
      }
    }
  }

  // renderer + loss path: pullback rows against finite differences of a
  // fixed-pixel BCE
  {
    Scene scene;
    scene.camera = CameraModel::look_at(
        Vec3{2.0 * std::cos(0.4 + 0.9 * c), 2.0 * std::sin(0.4 + 0.9 * c), 1.3},
        Vec3{0, 0, 0}, Vec3{0, 0, 1}, 38.4, 64, 64);
    scene.light = LightSource::from_spherical(0.7 + 0.4 * c, 0.9);
    scene.object_pose = shape.pose;

    Rng target_rng = rng.fork(99);
    const std::vector<double> zt = sample_latent(target_rng, gen.latent_dim);
    ShapeSpec target = decode(gen, zt);
    target.pose = PoseSE3({0.0, 0.0, rest_height(target)}, Quat::yaw(1.1));
    ShadowImage observed = render_shadow(scene, target);
    for (double& v : observed.values) v = v > 0.5 ? 1.0 : 0.0;

    RenderOptions opts;
    opts.mode = RenderMode::kSmooth;
    const RenderContext ctx(scene);
    const ShadowPullback pb =
        render_shadow_with_grads(ctx, scene, shape, opts, &observed);
    if (pb.pixels.empty()) throw std::runtime_error("gradcheck scene renders empty");

    // the probed loss must stay smooth under +-h: drop pixels near the BCE
    // clamp (it kinks there) and pixels whose view of the ground is close to
    // occluded (validity would flip)
    const auto camera_clear = [&](int32_t px) {
      const Vec3 a = ctx.camera_center, b = ctx.ground[size_t(px)];
      double worst = 0.0;
      for (int t = 0; t <= 256; ++t)
        worst = std::max(worst, occupancy(shape, a + (b - a) * (t / 256.0)));
      return worst < 0.35;
    };
    std::vector<int32_t> pixels;
    std::vector<size_t> kept_rows;
    for (size_t r = 0; r < pb.pixels.size(); ++r) {
      const int32_t px = pb.pixels[r];
      const double p = pb.image.values[size_t(px)];
      // the clamp sits at 1e-7; a decade of margin dwarfs any probe-step move
      if (p <= 1e-6 || p >= 1.0 - 1e-6) continue;
      if (!camera_clear(px)) continue;
      pixels.push_back(px);
      kept_rows.push_back(r);
    }
    if (pixels.empty()) {
      err.render_skipped = true;
      return err;
    }
    std::vector<double> adj(pb.pixels.size(), 0.0);
    for (size_t r : kept_rows) {
      const double s = observed.values[size_t(pb.pixels[r])];
      const double p = pb.image.values[size_t(pb.pixels[r])];
      adj[r] = (p - s) / (p * (1.0 - p)) / double(pixels.size());
    }
    const GradBundle g = pullback_apply(pb, gen, z, adj);
    const double az = light_azimuth(scene.light.position);
    const double el = light_elevation(scene.light.position);
    // probe: z..., azimuth, elevation, qz, qw, tx, ty
    auto loss_at = [&](int dim, double delta) {
      std::vector<double> zq(z);
      Scene sc = scene;
      ShapeSpec sh = shape;
      double a = az, e = el;
      Quat q = shape.pose.rotation;
      Vec3 tr = shape.pose.translation;
      if (dim < gen.latent_dim) {
        zq[size_t(dim)] += delta;
        sh = decode(gen, zq);
        sh.pose = shape.pose;
      } else if (dim == gen.latent_dim) {
        a += delta;
      } else if (dim == gen.latent_dim + 1) {
        e += delta;
      } else if (dim == gen.latent_dim + 2) {
        q.z += delta;
      } else if (dim == gen.latent_dim + 3) {
        q.w += delta;
      } else if (dim == gen.latent_dim + 4) {
        tr.x += delta;
      } else {
        tr.y += delta;
      }
      sc.light = LightSource::from_spherical(a, e);
      sh.pose = PoseSE3(tr, q);
      return frozen_bce(observed, render_shadow(ctx, sc, sh, opts), pixels);
    };
    for (int dim = 0; dim < gen.latent_dim + 6; ++dim) {
      const double num = (loss_at(dim, hr) - loss_at(dim, -hr)) / (2.0 * hr);
      double ana;
      if (dim < gen.latent_dim)
        ana = g.z[size_t(dim)];
      else if (dim == gen.latent_dim)
        ana = g.azimuth;
      else if (dim == gen.latent_dim + 1)
        ana = g.elevation;
      else if (dim == gen.latent_dim + 2)
        ana = g.qz;
      else if (dim == gen.latent_dim + 3)
        ana = g.qw;
      else if (dim == gen.latent_dim + 4)
        ana = g.tx;
      else
        ana = g.ty;
      err.render = std::max(err.render, rel_err(ana, num));
    }
  }
  return err;
}

int run_gradcheck(int cases, uint64_t seed) {
  double worst = 0.0;
  int probed = 0;
  for (int c = 0; c < cases; ++c) {
    const StageErrors e = gradcheck_case(c, seed);
    if (e.render_skipped)
      std::printf("case %d: decoder %.3e occupancy %.3e render skipped (saturated)\n", c,
                  e.decoder, e.occupancy);
    else
      std::printf("case %d: decoder %.3e occupancy %.3e render %.3e\n", c, e.decoder,
                  e.occupancy, e.render);
    probed += e.render_skipped ? 0 : 1;
    worst = std::max(worst, e.worst());
  }
  const bool pass = worst < 1e-3 && probed > 0;
  std::printf("gradcheck: %s (max relative error %.3e, %d of %d render cases probed)\n",
              pass ? "PASS" : "FAIL", worst, probed, cases);
  return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shape-from-shadow reconstruction toolkit"};
  app.require_subcommand(1);

  uint64_t seed = 0;
  int threads = 1;
  bool verbose = false;
  app.add_option("--seed", seed, "global RNG seed")->envname("UMBRA_SEED");
  app.add_option("--threads", threads, "worker threads")->check(CLI::Range(1, 256));
  app.add_flag("--verbose", verbose, "echo the resolved configuration as JSON");

  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen_cmd->fallthrough();
  std::string gen_out, gen_category = "blobs";
  int gen_n = 0;
  gen_cmd->add_option("--out", gen_out, "output directory")->required();
  gen_cmd->add_option("--n", gen_n, "number of scenes")->required()->check(CLI::Range(1, 100000));
  gen_cmd->add_option("--category", gen_category, "blobs | tables | composite");

  auto* render_cmd = app.add_subcommand("render", "render a scene's shadow mask");
  render_cmd->fallthrough();
  std::string render_scene, render_out, render_mode = "hard", render_seg;
  double render_tau = 0.1;
  render_cmd->add_option("--scene", render_scene, "scene JSON")->required();
  render_cmd->add_option("--out", render_out, "output PGM")->required();
  render_cmd->add_option("--mode", render_mode, "hard | smooth")
      ->check(CLI::IsMember({"hard", "smooth"}));
  render_cmd->add_option("--tau", render_tau, "smooth-max temperature")
      ->check(CLI::PositiveNumber);
  render_cmd->add_option("--seg", render_seg, "also write a segmentation PGM");

  auto* rec_cmd = app.add_subcommand("reconstruct", "recover a shape from a shadow");
  rec_cmd->fallthrough();
  std::string rec_shadow, rec_scene, rec_out;
  int rec_restarts = 8, rec_steps = 300;
  double rec_lr = 0.0;
  bool rec_unknown_light = false, rec_unknown_pose = false;
  rec_cmd->add_option("--shadow", rec_shadow, "observed mask PGM")->required();
  rec_cmd->add_option("--scene", rec_scene, "scene JSON with camera/plane")->required();
  rec_cmd->add_option("--out", rec_out, "output directory")->required();
  rec_cmd->add_option("--restarts", rec_restarts)->check(CLI::Range(1, 1024));
  rec_cmd->add_option("--steps", rec_steps)->check(CLI::Range(1, 100000));
  auto* rec_lr_opt = rec_cmd->add_option("--lr", rec_lr, "learning rate")
                         ->check(CLI::PositiveNumber);
  rec_cmd->add_flag("--unknown-light", rec_unknown_light, "search light direction too");
  rec_cmd->add_flag("--unknown-pose", rec_unknown_pose, "search yaw/translation too");

  auto* eval_cmd = app.add_subcommand("eval", "score methods on a dataset");
  eval_cmd->fallthrough();
  std::string eval_dataset, eval_method, eval_out;
  int eval_restarts = 8, eval_steps = 300, eval_samples = 20000;
  double eval_lr = 0.0;
  bool eval_unknown_light = false, eval_unknown_pose = false;
  eval_cmd->add_option("--dataset", eval_dataset, "dataset directory")->required();
  eval_cmd->add_option("--method", eval_method, "latent | nn | random")
      ->required()
      ->check(CLI::IsMember({"latent", "nn", "random"}));
  eval_cmd->add_option("--out", eval_out, "output CSV")->required();
  eval_cmd->add_option("--restarts", eval_restarts)->check(CLI::Range(1, 1024));
  eval_cmd->add_option("--steps", eval_steps)->check(CLI::Range(1, 100000));
  auto* eval_lr_opt = eval_cmd->add_option("--lr", eval_lr, "learning rate")
                          ->check(CLI::PositiveNumber);
  eval_cmd->add_option("--iou-samples", eval_samples)->check(CLI::Range(1000, 10000000));
  eval_cmd->add_flag("--unknown-light", eval_unknown_light);
  eval_cmd->add_flag("--unknown-pose", eval_unknown_pose);

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  grad_cmd->fallthrough();
  int grad_cases = 3;
  grad_cmd->add_option("--cases", grad_cases, "number of random cases")
      ->check(CLI::Range(1, 64));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen_cmd) {
      if (verbose) {
        json echo{{"command", "gen-data"}, {"seed", seed},       {"threads", threads},
                  {"out", gen_out},        {"n", gen_n},         {"category", gen_category}};
        std::cout << echo.dump() << "\n";
      }
      return run_gen_data(gen_out, gen_n, gen_category, seed, threads);
    }
    if (*render_cmd) {
      if (verbose) {
        json echo{{"command", "render"}, {"seed", seed},     {"threads", threads},
                  {"scene", render_scene}, {"out", render_out}, {"mode", render_mode},
                  {"tau", render_tau}};
        std::cout << echo.dump() << "\n";
      }
      return run_render(render_scene, render_out, render_mode, render_tau, render_seg,
                        threads);
    }
    if (*rec_cmd) {
      OptimizerConfig cfg;
      cfg.steps = rec_steps;
      cfg.restarts = rec_restarts;
      cfg.unknown_light = rec_unknown_light;
      cfg.unknown_pose = rec_unknown_pose;
      cfg.lr = rec_lr_opt->count() ? rec_lr
               : (rec_unknown_light || rec_unknown_pose) ? 0.01
                                                         : 1.0;
      cfg.seed = seed;
      cfg.threads = threads;
      if (verbose) {
        json echo{{"command", "reconstruct"},
                  {"seed", seed},
                  {"threads", threads},
                  {"shadow", rec_shadow},
                  {"scene", rec_scene},
                  {"out", rec_out},
                  {"steps", cfg.steps},
                  {"restarts", cfg.restarts},
                  {"lr", cfg.lr},
                  {"unknown_light", cfg.unknown_light},
                  {"unknown_pose", cfg.unknown_pose}};
        std::cout << echo.dump() << "\n";
      }
      return run_reconstruct(rec_shadow, rec_scene, rec_out, cfg);
    }
    if (*eval_cmd) {
      OptimizerConfig cfg;
      cfg.steps = eval_steps;
      cfg.restarts = eval_restarts;
      cfg.unknown_light = eval_unknown_light;
      cfg.unknown_pose = eval_unknown_pose;
      cfg.lr = eval_lr_opt->count() ? eval_lr
               : (eval_unknown_light || eval_unknown_pose) ? 0.01
                                                           : 1.0;
      cfg.seed = seed;
      cfg.threads = threads;
      if (verbose) {
        json echo{{"command", "eval"},       {"seed", seed},
                  {"threads", threads},      {"dataset", eval_dataset},
                  {"method", eval_method},   {"out", eval_out},
                  {"steps", cfg.steps},      {"restarts", cfg.restarts},
                  {"lr", cfg.lr},            {"iou_samples", eval_samples},
                  {"unknown_light", cfg.unknown_light},
                  {"unknown_pose", cfg.unknown_pose}};
        std::cout << echo.dump() << "\n";
      }
      return run_eval(eval_dataset, eval_method, eval_out, cfg, eval_samples);
    }
    if (*grad_cmd) {
      if (verbose) {
        json echo{{"command", "gradcheck"},
                  {"seed", seed},
                  {"threads", threads},
                  {"cases", grad_cases}};
        std::cout << echo.dump() << "\n";
      }
      return run_gradcheck(grad_cases, seed);
    }
  } catch (const DegenerateScene& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const AllRestartsFailed& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
