#pragma once

#include "splatsim/types.hpp"

namespace splatsim {

/// Pinhole camera. Pixel (x, y) samples the image plane at integer coordinates,
/// so a camera-space point projects to (fx * X/Z + cx, fy * Y/Z + cy).
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;
  Mat3 rotation = Mat3::Identity();     // world -> camera
  Vec3 translation = Vec3::Zero();      // world -> camera

  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
  Vec3 to_world(const Vec3& cam) const { return rotation.transpose() * (cam - translation); }
  /// Camera center in world coordinates.
  Vec3 center() const { return -rotation.transpose() * translation; }
  /// Camera-space point at pixel (u, v) and camera-z depth.
  Vec3 backproject(double u, double v, double depth) const {
    return {(u - cx) / fx * depth, (v - cy) / fy * depth, depth};
  }

  /// 4x4 row-major world-to-camera matrix.
  Eigen::Matrix4d pose() const;
  void set_pose(const Eigen::Matrix4d& world_to_camera);

  /// Camera looking from `eye` toward `target`, image y axis along -up.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy,
                        int width, int height);

  /// Same view, image resampled by `factor` (intrinsics and resolution scaled).
  Camera scaled(double factor) const;

  /// Throws ValidationError when intrinsics or pose are unusable.
  void validate() const;
};

}  // namespace splatsim
