#pragma once

#include "splatsim/camera.hpp"
#include "splatsim/types.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <vector>

namespace splatsim {

/// One posed observation: color, metric camera-z depth and tool mask (1 = tool).
struct Frame {
  int index = 0;
  ImageRGB image;
  ImageF depth;
  Mask mask;
  Camera camera;

  bool masked(int x, int y) const { return mask(x, y) != 0; }
  /// Throws ValidationError naming the frame when shapes or depth are inconsistent.
  void validate() const;
};

/// Reads frame_%05d.png, depth_%05d.pfm, mask_%05d.png and cameras.json from `dir`.
std::vector<Frame> load_frames(const std::filesystem::path& dir);
void save_frames(const std::vector<Frame>& frames, const std::filesystem::path& dir);

/// cameras.json: {"frames": [{"index", "width", "height", "fx", "fy", "cx", "cy",
/// "world_to_camera": [16 numbers, row-major]}]}
nlohmann::json camera_to_json(const Camera& cam);
/// Reads the fields present in `j` over `base`; the result is validated.
Camera camera_from_json(const nlohmann::json& j, const Camera& base = {});

std::vector<std::pair<int, Camera>> load_cameras(const std::filesystem::path& file);
void save_cameras(const std::vector<std::pair<int, Camera>>& cameras, const std::filesystem::path& file);

}  // namespace splatsim
