#include "splatsim/service/session.hpp"

#include "splatsim/frame.hpp"
#include "splatsim/image_io.hpp"
#include "splatsim/ply_io.hpp"

#include <spdlog/spdlog.h>

#include <cmath>

namespace splatsim::service {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

}  // namespace

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::empty: return "empty";
    case Phase::loaded: return "loaded";
    case Phase::running: return "running";
    case Phase::paused: return "paused";
  }
  return "unknown";
}

Session::Session(PipelineConfig cfg, Sink sink, std::optional<Camera> camera)
    : cfg_(std::move(cfg)), sink_(std::move(sink)) {
  cfg_.validate();
  if (camera) {
    camera->validate();
    camera_ = *camera;
    camera_fixed_ = true;
  } else {
    camera_ = default_camera(Aabb{Vec3(-1, -1, 2), Vec3(1, 1, 4)});
  }
  loop_thread_ = std::thread([this] { loop(); });
  encoder_thread_ = std::thread([this] { encoder(); });
}

Session::~Session() { stop(); }

void Session::stop() {
  {
    std::lock_guard lock(queue_mutex_);
    stopping_ = true;
    queue_.clear();
  }
  queue_cv_.notify_all();
  if (loop_thread_.joinable()) loop_thread_.join();
  {
    std::lock_guard lock(frame_mutex_);
    frame_stopping_ = true;
  }
  frame_cv_.notify_all();
  if (encoder_thread_.joinable()) encoder_thread_.join();
}

void Session::send(const json& msg) {
  const std::string text = msg.dump();
  std::lock_guard lock(sink_mutex_);
  try {
    sink_(text);
  } catch (const std::exception& e) {
    spdlog::debug("dropping outbound message: {}", e.what());
  }
}

void Session::submit(std::string_view raw) {
  try {
    Request req = parse_request(raw);
    {
      std::lock_guard lock(queue_mutex_);
      if (stopping_) return;
      queue_.push_back(std::move(req));
    }
    queue_cv_.notify_all();
  } catch (const ProtocolError& e) {
    // Echo cmd and id when the envelope was readable.
    std::string cmd;
    json id;
    const json j = json::parse(raw, nullptr, false);
    if (j.is_object()) {
      if (j.contains("cmd") && j["cmd"].is_string()) cmd = j["cmd"].get<std::string>();
      if (j.contains("id")) id = j["id"];
    }
    json err = error_response(cmd, id, e.what());
    err["phase"] = phase_name(phase_);
    send(err);
  }
}

Camera Session::default_camera(const Aabb& bounds) const {
  const int w = cfg_.service.width, h = cfg_.service.height;
  Vec3 eye = Vec3::Zero();
  if (!(bounds.min.z() > 0)) eye = Vec3(bounds.center().x(), bounds.center().y(), bounds.min.z() - 2 * bounds.extent().maxCoeff());
  const double dz = std::max(bounds.min.z() - eye.z(), 1e-3);
  const double half = std::max({std::abs(bounds.min.x() - eye.x()), std::abs(bounds.max.x() - eye.x()),
                                std::abs(bounds.min.y() - eye.y()), std::abs(bounds.max.y() - eye.y()), 1e-6});
  const double f = 0.45 * std::min(w, h) * dz / half;
  Camera cam = Camera::look_at(eye, eye + Vec3::UnitZ(), Vec3(0, -1, 0), f, f, w, h);
  return cam;
}

double Session::center_depth() const {
  if (!sim_) return std::nan("");
  Camera probe = camera_;
  probe.width = 1;
  probe.height = 1;
  probe.cx = camera_.cx - std::floor(0.5 * camera_.width);
  probe.cy = camera_.cy - std::floor(0.5 * camera_.height);
  RenderOptions opts = cfg_.render;
  opts.normalize_depth = true;
  const auto splats = sim_->splats();
  const RenderOutput out = rasterize(splats, probe, opts);
  return out.alpha(0, 0) > 1e-6 ? out.depth(0, 0) : std::nan("");
}

json Session::state() const {
  json s{{"ok", true},
         {"cmd", "get_state"},
         {"phase", phase_name(phase_)},
         {"step", step_counter_},
         {"gaussian_count", sim_ ? sim_->rest_scene().size() : 0},
         {"padded_count", sim_ ? sim_->rest_scene().padded_count() : 0},
         {"steps_per_sec", steps_per_sec_},
         {"camera", camera_to_json(camera_)},
         {"pending_forces", sim_ ? sim_->pending_forces() : 0}};
  if (sim_) {
    const MaterialParams& m = sim_->material();
    s["material"] = {{"E", m.youngs_modulus}, {"nu", m.poisson_ratio}, {"density", m.density}};
    const double d = center_depth();
    s["center_depth"] = std::isfinite(d) ? json(d) : json(nullptr);
  } else {
    s["material"] = nullptr;
    s["center_depth"] = nullptr;
  }
  return s;
}

void Session::publish() {
  Snapshot snap{step_counter_, last_step_ms_, sim_->splats(), camera_};
  {
    std::lock_guard lock(frame_mutex_);
    if (pending_frame_) ++frames_dropped_;
    pending_frame_ = std::move(snap);
  }
  frame_cv_.notify_all();
}

void Session::fail(const std::string& reason) {
  phase_ = Phase::paused;
  send({{"ok", false}, {"event", "simulation_error"}, {"error", reason}, {"phase", phase_name(phase_)}});
}

void Session::run_step() {
  const auto t0 = Clock::now();
  try {
    sim_->step();
  } catch (const RuntimeFailure& e) {
    fail(e.what());
    return;
  }
  ++step_counter_;
  last_step_ms_ = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  const double rate = last_step_ms_ > 0 ? 1000.0 / last_step_ms_ : 0.0;
  steps_per_sec_ = steps_per_sec_ == 0.0 ? rate : 0.8 * steps_per_sec_ + 0.2 * rate;
  publish();
}

json Session::handle(const Request& req) {
  auto reject = [&](const std::string& why) {
    json err = error_response(req.name, req.id, why);
    err["phase"] = phase_name(phase_);
    return err;
  };
  auto need_scene = [&]() { return phase_ == Phase::empty; };
  json out = std::visit(
      Overloaded{
          [&](const LoadCmd& c) -> json {
            if (phase_ == Phase::running) return reject("cannot load while running; pause first");
            try {
              Scene scene = load_scene(c.scene_path);
              if (cfg_.material_overridden) scene.material = cfg_.material;
              auto sim = std::make_unique<Simulation>(scene, cfg_.sim);
              sim_ = std::move(sim);
            } catch (const std::exception& e) {
              return reject(e.what());
            }
            if (!camera_fixed_) camera_ = default_camera(sim_->rest_scene().bounds.empty()
                                                             ? Scene::fit_bounds(sim_->rest_scene().gaussians, 0.1)
                                                             : sim_->rest_scene().bounds);
            phase_ = Phase::loaded;
            last_step_ms_ = 0.0;
            publish();
            return {{"ok", true}, {"phase", "loaded"}, {"gaussian_count", sim_->rest_scene().size()}};
          },
          [&](const StartCmd&) -> json {
            if (phase_ != Phase::loaded && phase_ != Phase::paused) return reject("start needs a loaded or paused scene");
            phase_ = Phase::running;
            next_step_at_ = Clock::now();
            return {{"ok", true}, {"phase", "running"}};
          },
          [&](const PauseCmd&) -> json {
            if (phase_ != Phase::running) return reject("pause needs a running simulation");
            phase_ = Phase::paused;
            return {{"ok", true}, {"phase", "paused"}};
          },
          [&](const ResetCmd&) -> json {
            if (need_scene()) return reject("no scene loaded");
            sim_->reset();
            phase_ = Phase::loaded;
            last_step_ms_ = 0.0;
            publish();
            return {{"ok", true}, {"phase", "loaded"}, {"step", step_counter_}};
          },
          [&](const SetMaterialCmd& c) -> json {
            if (need_scene()) return reject("no scene loaded");
            MaterialParams m = sim_->material();
            if (c.youngs_modulus) m.youngs_modulus = *c.youngs_modulus;
            if (c.poisson_ratio) m.poisson_ratio = *c.poisson_ratio;
            try {
              sim_->set_material(m);
            } catch (const ValidationError& e) {
              return reject(e.what());
            }
            return {{"ok", true}, {"material", {{"E", m.youngs_modulus}, {"nu", m.poisson_ratio}, {"density", m.density}}}};
          },
          [&](const ApplyForceCmd& c) -> json {
            if (need_scene()) return reject("no scene loaded");
            bool queued = false;
            try {
              queued = sim_->apply_force(c.center, c.radius, c.force,
                                         std::int64_t(c.duration_steps) * cfg_.sim.substeps);
            } catch (const ValidationError& e) {
              return reject(e.what());
            }
            json r{{"ok", true}, {"queued", queued}};
            if (!queued) r["warning"] = "force region contains no particles; event ignored";
            return r;
          },
          [&](const SetCameraCmd& c) -> json {
            try {
              camera_ = camera_from_json(c.camera, camera_);
            } catch (const ValidationError& e) {
              return reject(e.what());
            }
            camera_fixed_ = true;
            if (sim_ && phase_ != Phase::running) publish();
            return {{"ok", true}, {"camera", camera_to_json(camera_)}};
          },
          [&](const GetStateCmd&) -> json { return state(); },
          [&](const StepCmd& c) -> json {
            if (phase_ != Phase::loaded && phase_ != Phase::paused) return reject("step needs a loaded or paused scene");
            for (int i = 0; i < c.count && phase_ != Phase::empty; ++i) {
              const std::int64_t before = step_counter_;
              run_step();
              if (step_counter_ == before) return reject("simulation failed");
            }
            return {{"ok", true}, {"step", step_counter_}};
          },
      },
      req.command);
  if (!out.contains("cmd")) out["cmd"] = req.name;
  if (!req.id.is_null() && !out.contains("id")) out["id"] = req.id;
  return out;
}

void Session::loop() {
  for (;;) {
    std::deque<Request> batch;
    {
      std::unique_lock lock(queue_mutex_);
      auto ready = [&] { return stopping_ || !queue_.empty(); };
      if (phase_ == Phase::running) {
        queue_cv_.wait_until(lock, next_step_at_, ready);
      } else {
        queue_cv_.wait(lock, ready);
      }
      if (stopping_) return;
      batch.swap(queue_);
    }
    for (const Request& req : batch) send(handle(req));
    if (phase_ == Phase::running && Clock::now() >= next_step_at_) {
      const auto interval = std::chrono::duration_cast<Clock::duration>(
          std::chrono::duration<double>(1.0 / cfg_.service.max_steps_per_sec));
      const auto started = Clock::now();
      run_step();
      next_step_at_ = std::max(next_step_at_ + interval, started);
    }
  }
}

void Session::encoder() {
  for (;;) {
    Snapshot snap;
    {
      std::unique_lock lock(frame_mutex_);
      frame_cv_.wait(lock, [&] { return frame_stopping_ || pending_frame_.has_value(); });
      if (frame_stopping_) return;
      snap = std::move(*pending_frame_);
      pending_frame_.reset();
    }
    const RenderOutput out = rasterize(snap.splats, snap.camera, cfg_.render);
    const std::string b64 = base64_encode(encode_png(out.color));
    send({{"frame", {{"step", snap.step}, {"image_b64", b64}, {"ms", snap.ms}}}});
    ++frames_sent_;
  }
}

}  // namespace splatsim::service
