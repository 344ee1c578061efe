#include "splatsim/frame.hpp"
#include "splatsim/image_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

namespace splatsim {
namespace {

std::string indexed(const char* pattern, int index) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, index);
  return buf;
}

}  // namespace

void Frame::validate() const {
  const std::string name = "frame " + std::to_string(index);
  camera.validate();
  if (!image.same_shape(camera.width, camera.height))
    throw ValidationError(name + ": image resolution differs from camera");
  if (!depth.same_shape(camera.width, camera.height))
    throw ValidationError(name + ": depth resolution differs from camera");
  if (!mask.same_shape(camera.width, camera.height))
    throw ValidationError(name + ": mask resolution differs from camera");
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      if (mask(x, y) != 0) continue;
      const double d = depth(x, y);
      if (!(d > 0.0) || !std::isfinite(d)) {
        std::ostringstream err;
        err << name << ": depth " << d << " at unmasked pixel (" << x << ", " << y << ") must be positive";
        throw ValidationError(err.str());
      }
    }
  }
}

nlohmann::json camera_to_json(const Camera& cam) {
  std::vector<double> pose;
  const Eigen::Matrix4d m = cam.pose();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) pose.push_back(m(r, c));
  return {{"width", cam.width}, {"height", cam.height}, {"fx", cam.fx}, {"fy", cam.fy},
          {"cx", cam.cx},       {"cy", cam.cy},         {"world_to_camera", pose}};
}

Camera camera_from_json(const nlohmann::json& e, const Camera& base) {
  Camera cam = base;
  try {
    if (!e.is_object()) throw ValidationError("camera must be an object");
    auto number = [&](const char* key, double& out) {
      if (!e.contains(key)) return;
      if (!e.at(key).is_number()) throw ValidationError(std::string("camera.") + key + " must be a number");
      out = e.at(key).get<double>();
    };
    auto integer = [&](const char* key, int& out) {
      if (!e.contains(key)) return;
      if (!e.at(key).is_number_integer()) throw ValidationError(std::string("camera.") + key + " must be an integer");
      out = e.at(key).get<int>();
    };
    number("fx", cam.fx);
    number("fy", cam.fy);
    number("cx", cam.cx);
    number("cy", cam.cy);
    integer("width", cam.width);
    integer("height", cam.height);
    if (e.contains("world_to_camera")) {
      const auto pose = e.at("world_to_camera").get<std::vector<double>>();
      if (pose.size() != 16) throw ValidationError("world_to_camera needs 16 values");
      Eigen::Matrix4d m;
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) m(r, c) = pose[std::size_t(r * 4 + c)];
      cam.set_pose(m);
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("camera: ") + ex.what());
  }
  cam.validate();
  return cam;
}

std::vector<std::pair<int, Camera>> load_cameras(const std::filesystem::path& file) {
  std::ifstream f(file);
  if (!f) throw ValidationError("cannot open " + file.string());
  nlohmann::json doc;
  try {
    f >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(file.string() + ": " + e.what());
  }
  const nlohmann::json& list = doc.is_array() ? doc : doc.value("frames", nlohmann::json::array());
  std::vector<std::pair<int, Camera>> out;
  try {
    for (std::size_t i = 0; i < list.size(); ++i) {
      const auto& e = list[i];
      for (const char* key : {"fx", "fy", "cx", "cy", "width", "height", "world_to_camera"})
        if (!e.contains(key)) throw ValidationError("camera " + std::to_string(i) + " is missing '" + key + "'");
      const Camera cam = camera_from_json(e);
      out.emplace_back(e.value("index", int(i)), cam);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(file.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(file.string() + ": " + e.what());
  }
  return out;
}

void save_cameras(const std::vector<std::pair<int, Camera>>& cameras, const std::filesystem::path& file) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& [index, cam] : cameras) {
    nlohmann::json e = camera_to_json(cam);
    e["index"] = index;
    list.push_back(std::move(e));
  }
  std::ofstream f(file);
  if (!f) throw ValidationError("cannot open " + file.string() + " for writing");
  f << nlohmann::json{{"frames", list}}.dump(2) << "\n";
}

std::vector<Frame> load_frames(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw ValidationError("frame directory " + dir.string() + " does not exist");

  static const std::regex frame_re(R"(frame_(\d{5})\.png)");
  std::vector<int> indices;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, frame_re)) indices.push_back(std::stoi(m[1].str()));
  }
  std::sort(indices.begin(), indices.end());
  if (indices.empty()) throw ValidationError(dir.string() + ": no frame_%05d.png files");

  std::vector<std::string> missing;
  const fs::path cameras_file = dir / "cameras.json";
  if (!fs::exists(cameras_file)) missing.push_back(cameras_file.filename().string());
  for (int idx : indices) {
    const fs::path depth = dir / indexed("depth_%05d.pfm", idx);
    const fs::path mask = dir / indexed("mask_%05d.png", idx);
    if (!fs::exists(depth)) {
      if (fs::exists(dir / indexed("depth_%05d.exr", idx)))
        missing.push_back(depth.filename().string() + " (EXR depth is not supported; convert to PFM)");
      else
        missing.push_back(depth.filename().string());
    }
    if (!fs::exists(mask)) missing.push_back(mask.filename().string());
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw ValidationError(dir.string() + ": missing files: " + list);
  }

  std::map<int, Camera> cameras;
  for (auto& [idx, cam] : load_cameras(cameras_file)) cameras[idx] = cam;

  std::vector<Frame> frames;
  for (int idx : indices) {
    auto it = cameras.find(idx);
    if (it == cameras.end()) throw ValidationError("cameras.json has no entry for frame " + std::to_string(idx));
    Frame fr;
    fr.index = idx;
    fr.camera = it->second;
    fr.image = read_png_rgb(dir / indexed("frame_%05d.png", idx));
    fr.depth = read_pfm(dir / indexed("depth_%05d.pfm", idx));
    const Mask raw = read_png_gray(dir / indexed("mask_%05d.png", idx));
    fr.mask = Mask(raw.width, raw.height);
    for (std::size_t i = 0; i < raw.size(); ++i) fr.mask.data[i] = raw.data[i] != 0 ? 1 : 0;
    fr.validate();
    frames.push_back(std::move(fr));
  }
  return frames;
}

void save_frames(const std::vector<Frame>& frames, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::pair<int, Camera>> cams;
  for (const auto& fr : frames) {
    write_png(dir / indexed("frame_%05d.png", fr.index), fr.image);
    write_pfm(dir / indexed("depth_%05d.pfm", fr.index), fr.depth);
    Mask m = fr.mask;
    for (auto& v : m.data) v = v ? 255 : 0;
    write_png_gray(dir / indexed("mask_%05d.png", fr.index), m);
    cams.emplace_back(fr.index, fr.camera);
  }
  save_cameras(cams, dir / "cameras.json");
}

}  // namespace splatsim
