#include "cli.hpp"

#include "splatsim/config.hpp"
#include "splatsim/fixtures.hpp"
#include "splatsim/frame.hpp"
#include "splatsim/image_io.hpp"
#include "splatsim/padding.hpp"
#include "splatsim/ply_io.hpp"
#include "splatsim/reconstruct.hpp"
#include "splatsim/renderer.hpp"
#include "splatsim/service/server.hpp"
#include "splatsim/simulation.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <omp.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

namespace splatsim {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

struct Globals {
  std::string log_level = "info";
  int threads = 0;
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::vector<std::string> overrides;
};

PipelineConfig resolve_config(const Globals& g) {
  PipelineConfig cfg;
  if (!g.config_path.empty()) cfg = load_config(g.config_path, cfg);
  cfg = apply_overrides(cfg, g.overrides);
  if (g.seed) cfg.seed = *g.seed;
  cfg.validate();
  return cfg;
}

Camera pick_camera(const fs::path& file, std::optional<int> index) {
  const auto cams = load_cameras(file);
  if (cams.empty()) throw ValidationError(file.string() + " holds no cameras");
  if (!index) return cams.front().second;
  for (const auto& [i, cam] : cams)
    if (i == *index) return cam;
  throw ValidationError(file.string() + " has no camera with index " + std::to_string(*index));
}

std::vector<ForceEvent> load_forces(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ValidationError("cannot open " + file.string());
  const json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_array()) throw ValidationError(file.string() + ": expected a JSON array of force events");
  std::vector<ForceEvent> out;
  try {
    for (const json& e : doc) {
      ForceEvent ev;
      const auto c = e.at("center").get<std::vector<double>>();
      const auto f = e.at("force").get<std::vector<double>>();
      if (c.size() != 3 || f.size() != 3) throw ValidationError("center and force need 3 components");
      ev.center = Vec3(c[0], c[1], c[2]);
      ev.force = Vec3(f[0], f[1], f[2]);
      ev.radius = e.at("radius").get<double>();
      ev.start_substep = e.at("start_substep").get<std::int64_t>();
      ev.end_substep = e.at("end_substep").get<std::int64_t>();
      ev.validate();
      out.push_back(ev);
    }
  } catch (const json::exception& ex) {
    throw ValidationError(file.string() + ": " + ex.what());
  }
  return out;
}

std::string indexed(const char* stem, std::int64_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%05lld.%s", stem, static_cast<long long>(i), ext);
  return buf;
}

int cmd_reconstruct(const PipelineConfig& cfg, const std::string& frames_dir, const std::string& out,
                    const std::string& metrics_path) {
  const std::vector<Frame> frames = load_frames(frames_dir);
  std::ofstream metrics;
  if (!metrics_path.empty()) {
    metrics.open(metrics_path);
    if (!metrics) throw ValidationError("cannot write " + metrics_path);
    metrics << "iteration,loss,color_loss,depth_loss,psnr,gaussian_count,wall_ms\n";
  }
  OptimConfig optim = cfg.optim_config();
  spdlog::info("reconstructing from {} frames, {} iterations", frames.size(), optim.iterations);
  FitResult result = fit(frames, optim, [&](const MetricsRow& r) {
    if (metrics.is_open()) {
      metrics << r.iteration << ',' << r.loss << ',' << r.color_loss << ',' << r.depth_loss << ',';
      if (std::isfinite(r.psnr)) metrics << r.psnr;
      metrics << ',' << r.gaussian_count << ',' << r.wall_ms << '\n';
    }
    if (std::isfinite(r.psnr))
      spdlog::info("iter {:5d}  loss {:.5f}  psnr {:.2f}  gaussians {}", r.iteration, r.loss, r.psnr, r.gaussian_count);
  });
  result.scene.material = cfg.material;
  save_scene(result.scene, out);
  spdlog::info("wrote {} Gaussians to {}", result.scene.size(), out);
  return 0;
}

int cmd_pad(const PipelineConfig& cfg, const std::string& scene_path, const std::string& camera_path,
            std::optional<int> index, const std::string& out) {
  const Scene scene = load_scene(scene_path);
  const Camera cam = pick_camera(camera_path, index);
  const Scene padded = pad_scene(scene, cam, cfg.padding);
  save_scene(padded, out);
  spdlog::info("added {} padded Gaussians ({} total) -> {}", padded.padded_count() - scene.padded_count(),
               padded.size(), out);
  return 0;
}

int cmd_simulate(const PipelineConfig& cfg, const std::string& scene_path, const std::string& forces_path,
                 int steps, const std::string& out_dir, const std::string& camera_path, bool write_ply, bool bench) {
  Scene scene = load_scene(scene_path);
  if (cfg.material_overridden) scene.material = cfg.material;
  std::vector<ForceEvent> forces;
  if (!forces_path.empty()) forces = load_forces(forces_path);
  std::optional<Camera> cam;
  if (!camera_path.empty()) cam = pick_camera(camera_path, std::nullopt);
  if (!out_dir.empty()) fs::create_directories(out_dir);

  Simulation sim(scene, cfg.sim);
  // Events use absolute substep indices; each is queued when its window opens.
  double sim_seconds = 0.0;
  for (int s = 0; s < steps; ++s) {
    const auto t0 = Clock::now();
    for (int k = 0; k < cfg.sim.substeps; ++k) {
      for (std::size_t i = 0; i < forces.size(); ++i) {
        const ForceEvent& ev = forces[i];
        const bool opens = ev.start_substep == sim.substep_count() || (sim.substep_count() == 0 && ev.start_substep < 0);
        if (opens && ev.end_substep > sim.substep_count()) {
          if (!sim.apply_force(ev.center, ev.radius, ev.force, ev.end_substep - sim.substep_count()))
            spdlog::warn("force event {} hits an empty region", i);
        }
      }
      sim.run_substeps(1);
    }
    sim_seconds += std::chrono::duration<double>(Clock::now() - t0).count();
    if (!out_dir.empty()) {
      if (write_ply) save_scene(sim.snapshot_scene(), fs::path(out_dir) / indexed("snapshot", s + 1, "ply"));
      if (cam) {
        const auto splats = sim.splats();
        write_png(fs::path(out_dir) / indexed("frame", s + 1, "png"), rasterize(splats, *cam, cfg.render).color);
      }
    }
  }
  if (bench) {
    const double sps = sim_seconds > 0 ? steps / sim_seconds : 0.0;
    std::cout << json{{"particles", sim.particles().size()},
                      {"steps", steps},
                      {"substeps_per_step", cfg.sim.substeps},
                      {"steps_per_sec", sps},
                      {"particles_per_sec", sps * double(sim.particles().size())}}
                     .dump()
              << std::endl;
  }
  spdlog::info("simulated {} steps of {} particles", steps, sim.particles().size());
  return 0;
}

int cmd_render(const PipelineConfig& cfg, const std::string& scene_path, const std::string& camera_path,
               std::optional<int> index, const std::string& out, const std::string& depth_out) {
  const Scene scene = load_scene(scene_path);
  const Camera cam = pick_camera(camera_path, index);
  const RenderOutput r = rasterize(scene, cam, cfg.render);
  write_png(out, r.color);
  if (!depth_out.empty()) write_pfm(depth_out, r.depth);
  return 0;
}

volatile std::sig_atomic_t g_interrupted = 0;

int cmd_serve(const PipelineConfig& cfg, const std::string& scene_path, const std::string& camera_path) {
  std::optional<std::string> scene;
  if (!scene_path.empty()) {
    load_scene(scene_path);  // fail fast on a bad file
    scene = scene_path;
  }
  std::optional<Camera> cam;
  if (!camera_path.empty()) cam = pick_camera(camera_path, std::nullopt);
  service::Server server(cfg, scene, cam);
  const int port = server.listen();
  std::cout << json{{"listening", cfg.service.host}, {"port", port}}.dump() << std::endl;
  g_interrupted = 0;
  std::signal(SIGINT, [](int) { g_interrupted = 1; });
  std::signal(SIGTERM, [](int) { g_interrupted = 1; });
  std::thread watcher([&] {
    while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
  });
  server.run();
  g_interrupted = 1;
  watcher.join();
  return 0;
}

json bench_mpm(const PipelineConfig& cfg, int particles, int steps) {
  // Cube lattice of roughly `particles` padded-style particles.
  const int n = std::max(2, int(std::lround(std::cbrt(double(particles)))));
  const double h = 1.0 / n;
  Scene scene = fixtures::solid_block(Vec3(-0.5, -0.5, 2.5), {n, n, n}, h);
  scene.bounds = {Vec3(-0.75, -0.75, 2.25), Vec3(0.75, 0.75, 3.75)};
  SimConfig sim_cfg = cfg.sim;
  sim_cfg.grid_resolution = 64;
  Simulation sim(scene, sim_cfg);
  sim.apply_force(Vec3(0, 0, 2.5), 0.3, Vec3(0, 0, 50.0), std::int64_t(steps) * sim_cfg.substeps);
  sim.step();  // warm-up
  const auto t0 = Clock::now();
  for (int s = 0; s < steps; ++s) sim.step();
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  return {{"particles", sim.particles().size()},
          {"grid", sim.grid().nodes},
          {"substeps_per_step", sim_cfg.substeps},
          {"steps_per_sec", steps / secs},
          {"particles_per_sec", steps * double(sim.particles().size()) / secs}};
}

json bench_render(const PipelineConfig& cfg, int width, int reps) {
  fixtures::TissueOptions topts;
  topts.views = 1;
  const fixtures::TissueFixture fx = fixtures::tissue(topts);
  Camera cam = fx.frames.front().camera.scaled(double(width) / topts.width);
  const auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r) rasterize(fx.ground_truth, cam, cfg.render);
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  return {{"gaussians", fx.ground_truth.size()}, {"width", cam.width}, {"height", cam.height},
          {"frames_per_sec", reps / secs}};
}

int cmd_bench(const PipelineConfig& cfg, const std::vector<int>& particle_counts, int steps) {
  json report{{"threads", omp_get_max_threads()}};
  report["render"] = json::array({bench_render(cfg, 160, 20), bench_render(cfg, 640, 5)});
  report["mpm"] = json::array();
  for (int p : particle_counts) report["mpm"].push_back(bench_mpm(cfg, p, steps));
  std::cout << report.dump(2) << std::endl;
  return 0;
}

int cmd_fixtures(const PipelineConfig& cfg, const std::string& kind, const std::string& out) {
  fs::create_directories(out);
  if (kind == "tissue") {
    fixtures::TissueOptions opts;
    opts.seed = cfg.seed;
    const fixtures::TissueFixture fx = fixtures::tissue(opts);
    save_frames(fx.frames, out);
    save_scene(fx.ground_truth, fs::path(out) / "ground_truth.ply");
  } else if (kind == "hemisphere") {
    fixtures::HemisphereOptions opts;
    opts.seed = cfg.seed;
    save_scene(fixtures::hemisphere(opts), fs::path(out) / "hemisphere.ply");
    save_cameras({{0, fixtures::front_camera()}}, fs::path(out) / "cameras.json");
  } else if (kind == "block") {
    save_scene(fixtures::box_shell(Vec3(-0.5, -0.5, 2.5), Vec3(0.5, 0.5, 3.2), 0.05), fs::path(out) / "block.ply");
    save_cameras({{0, fixtures::front_camera()}}, fs::path(out) / "cameras.json");
  } else {
    throw ValidationError("unknown fixture kind '" + kind + "' (tissue, hemisphere, block)");
  }
  spdlog::info("wrote {} fixture to {}", kind, out);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Gaussian soft-tissue reconstruction and simulation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error, off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}));
  app.add_option("--threads", g.threads, "worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
  app.add_option("--seed", g.seed, "seed for every stochastic choice");
  app.add_option("--config", g.config_path, "config.json")->check(CLI::ExistingFile);
  app.add_option("--set", g.overrides, "override a config field, e.g. --set optim.iterations=500");

  std::function<int(const PipelineConfig&)> action;

  auto* rec = app.add_subcommand("reconstruct", "fit Gaussians to posed RGB-D frames");
  std::string frames_dir, rec_out, metrics;
  std::optional<int> iterations;
  rec->add_option("--frames", frames_dir, "frame directory")->required();
  rec->add_option("--out", rec_out, "output scene PLY")->required();
  rec->add_option("--metrics", metrics, "per-iteration CSV");
  rec->add_option("--iterations", iterations, "optimization iterations");
  rec->callback([&] {
    action = [&](const PipelineConfig& c) {
      PipelineConfig cfg = c;
      if (iterations) cfg.optim.iterations = *iterations;
      cfg.validate();
      return cmd_reconstruct(cfg, frames_dir, rec_out, metrics);
    };
  });

  auto* pad = app.add_subcommand("pad", "fill the interior with invisible Gaussians");
  std::string pad_scene_path, pad_camera, pad_out;
  std::optional<int> pad_index, pad_grid;
  std::optional<double> pad_tau;
  pad->add_option("--scene", pad_scene_path)->required();
  pad->add_option("--camera", pad_camera, "cameras.json")->required();
  pad->add_option("--camera-index", pad_index, "camera entry to pad from (default: first)");
  pad->add_option("--out", pad_out)->required();
  pad->add_option("--grid", pad_grid, "opacity field resolution");
  pad->add_option("--tau", pad_tau, "occluder threshold");
  pad->callback([&] {
    action = [&](const PipelineConfig& c) {
      PipelineConfig cfg = c;
      if (pad_grid) cfg.padding.grid = *pad_grid;
      if (pad_tau) cfg.padding.tau = *pad_tau;
      cfg.validate();
      return cmd_pad(cfg, pad_scene_path, pad_camera, pad_index, pad_out);
    };
  });

  auto* sim = app.add_subcommand("simulate", "run the elastic simulation");
  std::string sim_scene, forces, out_dir, sim_camera;
  int steps = 1;
  bool no_ply = false, bench = false;
  sim->add_option("--scene", sim_scene)->required();
  sim->add_option("--forces", forces, "JSON list of force events");
  sim->add_option("--steps", steps)->check(CLI::NonNegativeNumber);
  sim->add_option("--out-dir", out_dir, "per-step snapshots");
  sim->add_option("--camera", sim_camera, "cameras.json; renders a PNG per step");
  sim->add_flag("--no-ply", no_ply, "skip PLY snapshots");
  sim->add_flag("--bench", bench, "print particles/sec and steps/sec");
  sim->callback([&] {
    action = [&](const PipelineConfig& cfg) {
      return cmd_simulate(cfg, sim_scene, forces, steps, out_dir, sim_camera, !no_ply, bench);
    };
  });

  auto* render = app.add_subcommand("render", "rasterize a scene to PNG (and depth PFM)");
  std::string render_scene, render_camera, render_out, depth_out;
  std::optional<int> render_index;
  render->add_option("--scene", render_scene)->required();
  render->add_option("--camera", render_camera)->required();
  render->add_option("--camera-index", render_index);
  render->add_option("--out", render_out)->required();
  render->add_option("--depth-out", depth_out);
  render->callback([&] {
    action = [&](const PipelineConfig& cfg) {
      return cmd_render(cfg, render_scene, render_camera, render_index, render_out, depth_out);
    };
  });

  auto* serve = app.add_subcommand("serve", "interactive simulation service");
  std::string serve_scene, serve_camera;
  std::optional<int> port;
  std::optional<std::string> host;
  serve->add_option("--port", port);
  serve->add_option("--host", host);
  serve->add_option("--scene", serve_scene, "scene loaded for every client");
  serve->add_option("--camera", serve_camera, "cameras.json for the initial view");
  serve->callback([&] {
    action = [&](const PipelineConfig& c) {
      PipelineConfig cfg = c;
      if (port) cfg.service.port = *port;
      if (host) cfg.service.host = *host;
      cfg.validate();
      return cmd_serve(cfg, serve_scene, serve_camera);
    };
  });

  auto* bench_cmd = app.add_subcommand("bench", "renderer and simulation throughput, JSON report");
  std::vector<int> counts{10000, 50000};
  int bench_steps = 3;
  bench_cmd->add_option("--particles", counts)->delimiter(',');
  bench_cmd->add_option("--steps", bench_steps)->check(CLI::PositiveNumber);
  bench_cmd->callback([&] { action = [&](const PipelineConfig& cfg) { return cmd_bench(cfg, counts, bench_steps); }; });

  auto* fix = app.add_subcommand("fixtures", "write synthetic test scenes and frames");
  std::string kind = "tissue", fix_out;
  fix->add_option("--kind", kind, "tissue, hemisphere or block");
  fix->add_option("--out", fix_out)->required();
  fix->callback([&] { action = [&](const PipelineConfig& cfg) { return cmd_fixtures(cfg, kind, fix_out); }; });

  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (!spdlog::get("splatsim")) spdlog::set_default_logger(spdlog::stderr_color_mt("splatsim"));
  spdlog::set_level(spdlog::level::from_str(g.log_level));
  if (g.threads > 0) omp_set_num_threads(g.threads);
  try {
    const PipelineConfig cfg = resolve_config(g);
    return action(cfg);
  } catch (const ValidationError& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
}

}  // namespace splatsim
