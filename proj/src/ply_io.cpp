#include "splatsim/ply_io.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace splatsim {
namespace {

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

const std::map<std::string, PlyType>& type_names() {
  static const std::map<std::string, PlyType> names = {
      {"char", PlyType::i8},    {"int8", PlyType::i8},     {"uchar", PlyType::u8},   {"uint8", PlyType::u8},
      {"short", PlyType::i16},  {"int16", PlyType::i16},   {"ushort", PlyType::u16}, {"uint16", PlyType::u16},
      {"int", PlyType::i32},    {"int32", PlyType::i32},   {"uint", PlyType::u32},   {"uint32", PlyType::u32},
      {"float", PlyType::f32},  {"float32", PlyType::f32}, {"double", PlyType::f64}, {"float64", PlyType::f64}};
  return names;
}

std::size_t type_size(PlyType t) {
  switch (t) {
    case PlyType::i8:
    case PlyType::u8: return 1;
    case PlyType::i16:
    case PlyType::u16: return 2;
    case PlyType::i32:
    case PlyType::u32:
    case PlyType::f32: return 4;
    case PlyType::f64: return 8;
  }
  return 0;
}

template <typename T>
T load_le(const std::uint8_t* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    auto bytes = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    v = std::bit_cast<T>(bytes);
  }
  return v;
}

double read_value(PlyType t, const std::uint8_t* p) {
  switch (t) {
    case PlyType::i8: return load_le<std::int8_t>(p);
    case PlyType::u8: return load_le<std::uint8_t>(p);
    case PlyType::i16: return load_le<std::int16_t>(p);
    case PlyType::u16: return load_le<std::uint16_t>(p);
    case PlyType::i32: return load_le<std::int32_t>(p);
    case PlyType::u32: return load_le<std::uint32_t>(p);
    case PlyType::f32: return load_le<float>(p);
    case PlyType::f64: return load_le<double>(p);
  }
  return 0;
}

template <typename T>
void store_le(std::string& out, T v) {
  auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.append(bytes.data(), bytes.size());
}

constexpr int kNumFloatProps = 14;
constexpr std::array<const char*, kNumFloatProps> kFloatProps = {
    "x", "y", "z", "rot_w", "rot_x", "rot_y", "rot_z", "scale_x", "scale_y", "scale_z", "red", "green", "blue", "opacity"};

std::string exact(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

}  // namespace

void save_scene(const Scene& scene, const std::filesystem::path& path) {
  std::ostringstream header;
  header << "ply\nformat binary_little_endian 1.0\n";
  const auto& m = scene.material;
  header << "comment splatsim material " << exact(m.youngs_modulus) << " " << exact(m.poisson_ratio) << " "
         << exact(m.density) << "\n";
  if (!scene.bounds.empty()) {
    header << "comment splatsim bounds";
    for (int i = 0; i < 3; ++i) header << " " << exact(scene.bounds.min[i]);
    for (int i = 0; i < 3; ++i) header << " " << exact(scene.bounds.max[i]);
    header << "\n";
  }
  if (scene.cell_volume > 0) header << "comment splatsim cell_volume " << exact(scene.cell_volume) << "\n";
  header << "element vertex " << scene.gaussians.size() << "\n";
  for (int i = 0; i < kNumFloatProps; ++i) header << "property double " << kFloatProps[i] << "\n";
  header << "property uchar is_padded\nend_header\n";

  std::string body;
  body.reserve(scene.gaussians.size() * (kNumFloatProps * 8 + 1));
  for (const auto& g : scene.gaussians) {
    const std::array<double, kNumFloatProps> values = {
        g.position.x(), g.position.y(), g.position.z(), g.rotation[0], g.rotation[1],
        g.rotation[2],  g.rotation[3],  g.log_scale[0], g.log_scale[1], g.log_scale[2],
        g.color[0],     g.color[1],     g.color[2],     g.opacity_logit};
    for (double v : values) store_le(body, v);
    store_le<std::uint8_t>(body, g.padded ? 1 : 0);
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open " + path.string() + " for writing");
  const std::string h = header.str();
  f.write(h.data(), std::streamsize(h.size()));
  f.write(body.data(), std::streamsize(body.size()));
  if (!f) throw RuntimeFailure("write failed: " + path.string());
}

Scene load_scene(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw PlyParseError("cannot open " + path.string(), -1);

  std::string line;
  std::getline(f, line);
  if (line != "ply") throw PlyParseError(path.string() + ": missing 'ply' magic", -1);

  struct Property {
    std::string name;
    PlyType type;
    std::size_t offset;
  };
  std::vector<Property> vertex_props;
  long long vertex_count = -1;
  bool in_vertex = false;
  bool seen_format = false;
  std::size_t stride = 0;
  Scene scene;

  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "end_header") break;
    if (key == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "binary_little_endian") throw PlyParseError(path.string() + ": unsupported format " + fmt, -1);
      seen_format = true;
    } else if (key == "comment") {
      std::string tag, what;
      ls >> tag >> what;
      if (tag != "splatsim") continue;
      if (what == "material") {
        ls >> scene.material.youngs_modulus >> scene.material.poisson_ratio >> scene.material.density;
      } else if (what == "bounds") {
        ls >> scene.bounds.min[0] >> scene.bounds.min[1] >> scene.bounds.min[2] >> scene.bounds.max[0] >>
            scene.bounds.max[1] >> scene.bounds.max[2];
      } else if (what == "cell_volume") {
        ls >> scene.cell_volume;
      }
      if (!ls) throw PlyParseError(path.string() + ": malformed comment '" + line + "'", -1);
    } else if (key == "element") {
      std::string name;
      long long count = -1;
      ls >> name >> count;
      if (!ls || count < 0) throw PlyParseError(path.string() + ": malformed element line", -1);
      if (vertex_count >= 0 && in_vertex) in_vertex = false;
      if (name == "vertex") {
        if (vertex_count >= 0) throw PlyParseError(path.string() + ": duplicate vertex element", -1);
        vertex_count = count;
        in_vertex = true;
      } else {
        if (vertex_count < 0) throw PlyParseError(path.string() + ": elements before vertex are unsupported", -1);
        in_vertex = false;
      }
    } else if (key == "property") {
      if (!in_vertex) continue;
      std::string type_name, name;
      ls >> type_name >> name;
      if (type_name == "list") throw PlyParseError(path.string() + ": list properties are unsupported", -1);
      auto it = type_names().find(type_name);
      if (it == type_names().end()) throw PlyParseError(path.string() + ": unknown type " + type_name, -1);
      vertex_props.push_back({name, it->second, stride});
      stride += type_size(it->second);
    } else if (key != "obj_info" && !key.empty()) {
      throw PlyParseError(path.string() + ": unexpected header line '" + line + "'", -1);
    }
  }
  if (!seen_format) throw PlyParseError(path.string() + ": missing format line", -1);
  if (vertex_count < 0) throw PlyParseError(path.string() + ": missing vertex element", -1);

  auto find = [&](const std::string& name) -> const Property* {
    for (const auto& p : vertex_props)
      if (p.name == name) return &p;
    return nullptr;
  };
  std::array<const Property*, kNumFloatProps> props{};
  for (int i = 0; i < kNumFloatProps; ++i) {
    props[i] = find(kFloatProps[i]);
    if (!props[i]) throw PlyParseError(path.string() + ": missing property " + kFloatProps[i], -1);
  }
  const Property* padded_prop = find("is_padded");

  std::vector<std::uint8_t> record(stride);
  scene.gaussians.reserve(std::size_t(vertex_count));
  for (long long r = 0; r < vertex_count; ++r) {
    f.read(reinterpret_cast<char*>(record.data()), std::streamsize(stride));
    if (!f) throw PlyParseError(path.string() + ": truncated at record " + std::to_string(r), r);
    std::array<double, kNumFloatProps> v{};
    for (int i = 0; i < kNumFloatProps; ++i) v[i] = read_value(props[i]->type, record.data() + props[i]->offset);
    Gaussian g;
    g.position = {v[0], v[1], v[2]};
    g.rotation = {v[3], v[4], v[5], v[6]};
    g.log_scale = {v[7], v[8], v[9]};
    g.color = {v[10], v[11], v[12]};
    if (props[10]->type == PlyType::u8) g.color /= 255.0;
    g.opacity_logit = v[13];
    if (padded_prop) g.padded = read_value(padded_prop->type, record.data() + padded_prop->offset) != 0;
    if (auto err = check_invariants(g)) {
      throw PlyParseError(path.string() + ": record " + std::to_string(r) + ": " + *err, r);
    }
    scene.gaussians.push_back(g);
  }
  return scene;
}

}  // namespace splatsim
