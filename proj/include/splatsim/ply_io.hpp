#pragma once

#include "splatsim/scene.hpp"

#include <cstddef>
#include <filesystem>
#include <stdexcept>

namespace splatsim {

/// Malformed scene file. `record()` is the offending vertex index, or -1 for header errors.
class PlyParseError : public ValidationError {
 public:
  PlyParseError(const std::string& what, long long record)
      : ValidationError(what), record_(record) {}
  long long record() const { return record_; }

 private:
  long long record_;
};

/// Binary little-endian PLY, one `vertex` per Gaussian:
///   x y z, rot_w rot_x rot_y rot_z, scale_x scale_y scale_z (log), red green blue,
///   opacity (logit), is_padded (uchar).
/// Material, bounds and padding cell volume travel in `comment splatsim ...` lines.
void save_scene(const Scene& scene, const std::filesystem::path& path);
Scene load_scene(const std::filesystem::path& path);

}  // namespace splatsim
