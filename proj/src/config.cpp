#include "splatsim/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace splatsim {
namespace {

using nlohmann::json;

const char* const kFaceNames[6] = {"-x", "+x", "-y", "+y", "-z", "+z"};

int face_from_name(const std::string& s, const std::string& path) {
  for (int f = 0; f < 6; ++f)
    if (s == kFaceNames[f]) return f;
  throw ValidationError(path + ": expected one of -x +x -y +y -z +z, got '" + s + "'");
}

[[noreturn]] void type_error(const std::string& path, const char* want, const json& got) {
  throw ValidationError(path + ": expected " + want + ", got " + got.dump());
}

void read_value(const json& j, double& v, const std::string& p) {
  if (!j.is_number()) type_error(p, "a number", j);
  v = j.get<double>();
}
void read_value(const json& j, int& v, const std::string& p) {
  if (!j.is_number_integer()) type_error(p, "an integer", j);
  v = j.get<int>();
}
void read_value(const json& j, std::uint64_t& v, const std::string& p) {
  if (!j.is_number_unsigned()) type_error(p, "a non-negative integer", j);
  v = j.get<std::uint64_t>();
}
void read_value(const json& j, bool& v, const std::string& p) {
  if (!j.is_boolean()) type_error(p, "true or false", j);
  v = j.get<bool>();
}
void read_value(const json& j, std::string& v, const std::string& p) {
  if (!j.is_string()) type_error(p, "a string", j);
  v = j.get<std::string>();
}
void read_value(const json& j, Vec3& v, const std::string& p) {
  if (!j.is_array() || j.size() != 3) type_error(p, "an array of 3 numbers", j);
  for (int a = 0; a < 3; ++a) read_value(j[a], v[a], p + "[" + std::to_string(a) + "]");
}

json write_value(double v) { return v; }
json write_value(int v) { return v; }
json write_value(std::uint64_t v) { return v; }
json write_value(bool v) { return v; }
json write_value(const std::string& v) { return v; }
json write_value(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) type_error(path_, "an object", j);
  }
  template <typename T>
  void operator()(const char* key, T& v) {
    seen_.insert(key);
    if (j_.contains(key)) read_value(j_.at(key), v, child(key));
  }
  template <typename Fn>
  void custom(const char* key, Fn&& fn) {
    seen_.insert(key);
    if (j_.contains(key)) fn(j_.at(key), child(key));
  }
  template <typename Fn>
  void section(const char* key, Fn&& fn) {
    seen_.insert(key);
    if (j_.contains(key)) {
      Reader sub(j_.at(key), child(key));
      fn(sub);
      sub.finish();
    }
  }
  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key())) throw ValidationError("unknown config key '" + child(item.key()) + "'");
  }

 private:
  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

class Writer {
 public:
  template <typename T>
  void operator()(const char* key, const T& v) {
    j[key] = write_value(v);
  }
  template <typename Fn>
  void section(const char* key, Fn&& fn) {
    Writer sub;
    fn(sub);
    j[key] = std::move(sub.j);
  }
  json j = json::object();
};

template <typename V, typename M>
void visit_material(V& v, M& m) {
  v("youngs_modulus", m.youngs_modulus);
  v("poisson_ratio", m.poisson_ratio);
  v("density", m.density);
}

template <typename V, typename R>
void visit_render(V& v, R& r) {
  v("low_pass", r.low_pass);
  v("min_alpha", r.min_alpha);
  v("max_alpha", r.max_alpha);
  v("min_transmittance", r.min_transmittance);
  v("near_plane", r.near_plane);
  v("footprint_sigmas", r.footprint_sigmas);
  v("normalize_depth", r.normalize_depth);
  v("tile_size", r.tile_size);
}

template <typename V, typename O>
void visit_optim(V& v, O& o) {
  v("iterations", o.iterations);
  v("eta", o.eta);
  v("huber_delta", o.huber_delta);
  v("gamma", o.gamma);
  v("mask_depth", o.mask_depth);
  v.section("lr", [&](auto& s) {
    s("position_init", o.lr.position_init);
    s("position_final", o.lr.position_final);
    s("rotation", o.lr.rotation);
    s("log_scale", o.lr.log_scale);
    s("color", o.lr.color);
    s("opacity", o.lr.opacity);
  });
  v("densify_from", o.densify_from);
  v("densify_until", o.densify_until);
  v("densify_interval", o.densify_interval);
  v("densify_grad_threshold", o.densify_grad_threshold);
  v("percent_dense", o.percent_dense);
  v("min_opacity", o.min_opacity);
  v("max_gaussians", o.max_gaussians);
  v("init_stride", o.init_stride);
  v("init_target_points", o.init_target_points);
  v("init_coverage_gain", o.init_coverage_gain);
  v("init_neighbors", o.init_neighbors);
  v("psnr_interval", o.psnr_interval);
}

template <typename V, typename P>
void visit_padding(V& v, P& p) {
  v("grid", p.grid);
  v("tau", p.tau);
  v("footprint_sigmas", p.footprint_sigmas);
}

template <typename V, typename S>
void visit_sim_scalars(V& v, S& s) {
  v("grid_resolution", s.grid_resolution);
  v("substeps", s.substeps);
  v("dt", s.dt);
  v("gravity", s.gravity);
  v("damping", s.damping);
  v("boundary_cells", s.boundary_cells);
  v("mass_epsilon", s.mass_epsilon);
  v("inversion_det", s.inversion_det);
  v("singular_min", s.singular_min);
  v("singular_max", s.singular_max);
}

template <typename V, typename S>
void visit_service(V& v, S& s) {
  v("host", s.host);
  v("port", s.port);
  v("max_steps_per_sec", s.max_steps_per_sec);
  v("width", s.width);
  v("height", s.height);
}

void read_sim(Reader& r, SimConfig& s) {
  visit_sim_scalars(r, s);
  r.custom("faces", [&](const json& j, const std::string& p) {
    if (!j.is_object()) type_error(p, "an object keyed by face", j);
    for (const auto& item : j.items()) {
      const int f = face_from_name(item.key(), p);
      if (item.value() == "sticky") s.faces[f] = Boundary::sticky;
      else if (item.value() == "free") s.faces[f] = Boundary::free;
      else type_error(p + "." + item.key(), "\"sticky\" or \"free\"", item.value());
    }
  });
  r.custom("base_face", [&](const json& j, const std::string& p) {
    if (!j.is_string()) type_error(p, "a face name", j);
    s.base_face = face_from_name(j.get<std::string>(), p);
  });
  r.custom("domain", [&](const json& j, const std::string& p) {
    if (j.is_null()) {
      s.domain.reset();
      return;
    }
    Reader d(j, p);
    Aabb box;
    d("min", box.min);
    d("max", box.max);
    d.finish();
    if (box.empty()) throw ValidationError(p + ": min must not exceed max");
    s.domain = box;
  });
}

json write_sim(const SimConfig& s) {
  Writer w;
  visit_sim_scalars(w, s);
  json faces = json::object();
  for (int f = 0; f < 6; ++f) faces[kFaceNames[f]] = s.faces[f] == Boundary::sticky ? "sticky" : "free";
  w.j["faces"] = faces;
  w.j["base_face"] = kFaceNames[s.base_face];
  if (s.domain) {
    w.j["domain"] = {{"min", write_value(s.domain->min)}, {"max", write_value(s.domain->max)}};
  } else {
    w.j["domain"] = nullptr;
  }
  return w.j;
}

}  // namespace

void ServiceConfig::validate() const {
  if (port < 0 || port > 65535) throw ValidationError("service.port must be in [0, 65535]");
  if (!(max_steps_per_sec > 0)) throw ValidationError("service.max_steps_per_sec must be > 0");
  if (width < 1 || height < 1 || width > 8192 || height > 8192)
    throw ValidationError("service.width/height must be in [1, 8192]");
}

OptimConfig PipelineConfig::optim_config() const {
  OptimConfig o = optim;
  o.render = render;
  o.seed = seed;
  return o;
}

void PipelineConfig::validate() const {
  splatsim::validate(material);
  optim_config().validate();
  sim.validate();
  service.validate();
  if (padding.grid < 2) throw ValidationError("padding.grid must be >= 2");
  if (!(padding.tau >= 0)) throw ValidationError("padding.tau must be >= 0");
  if (!(padding.footprint_sigmas > 0)) throw ValidationError("padding.footprint_sigmas must be > 0");
}

nlohmann::json to_json(const PipelineConfig& cfg) {
  Writer w;
  w.section("material", [&](Writer& s) { visit_material(s, cfg.material); });
  w.section("optim", [&](Writer& s) { visit_optim(s, cfg.optim); });
  w.section("render", [&](Writer& s) { visit_render(s, cfg.render); });
  w.section("padding", [&](Writer& s) { visit_padding(s, cfg.padding); });
  w.j["sim"] = write_sim(cfg.sim);
  w.section("service", [&](Writer& s) { visit_service(s, cfg.service); });
  w("seed", cfg.seed);
  return w.j;
}

PipelineConfig merge_json(const PipelineConfig& base, const nlohmann::json& j) {
  PipelineConfig cfg = base;
  Reader r(j, "");
  r.section("material", [&](Reader& s) { visit_material(s, cfg.material); });
  if (j.contains("material")) cfg.material_overridden = true;
  r.section("optim", [&](Reader& s) { visit_optim(s, cfg.optim); });
  r.section("render", [&](Reader& s) { visit_render(s, cfg.render); });
  r.section("padding", [&](Reader& s) { visit_padding(s, cfg.padding); });
  r.section("sim", [&](Reader& s) { read_sim(s, cfg.sim); });
  r.section("service", [&](Reader& s) { visit_service(s, cfg.service); });
  r("seed", cfg.seed);
  r.finish();
  return cfg;
}

PipelineConfig load_config(const std::string& path, const PipelineConfig& base) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path + ": " + e.what());
  }
  return merge_json(base, j);
}

PipelineConfig apply_overrides(const PipelineConfig& base, const std::vector<std::string>& assignments) {
  PipelineConfig cfg = base;
  for (const std::string& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0) throw ValidationError("override '" + a + "' is not key=value");
    const std::string key = a.substr(0, eq);
    const std::string text = a.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    // Build {"a": {"b": value}} from "a.b" and merge it like a config file.
    json patch = value;
    std::string rest = key;
    std::vector<std::string> parts;
    std::stringstream ss(rest);
    for (std::string part; std::getline(ss, part, '.');) {
      if (part.empty()) throw ValidationError("override '" + a + "' has an empty key segment");
      parts.push_back(part);
    }
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
    cfg = merge_json(cfg, patch);
  }
  return cfg;
}

}  // namespace splatsim
