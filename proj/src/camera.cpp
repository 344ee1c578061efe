#include "splatsim/camera.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <sstream>

namespace splatsim {

Eigen::Matrix4d Camera::pose() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

void Camera::set_pose(const Eigen::Matrix4d& world_to_camera) {
  rotation = world_to_camera.topLeftCorner<3, 3>();
  translation = world_to_camera.topRightCorner<3, 1>();
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy, int width,
                       int height) {
  const Vec3 forward = (target - eye).normalized();
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 down = forward.cross(right);
  Camera cam;
  cam.fx = fx;
  cam.fy = fy;
  cam.width = width;
  cam.height = height;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.rotation.row(0) = right.transpose();
  cam.rotation.row(1) = down.transpose();
  cam.rotation.row(2) = forward.transpose();
  cam.translation = -cam.rotation * eye;
  return cam;
}

Camera Camera::scaled(double factor) const {
  Camera c = *this;
  c.width = std::max(1, int(std::lround(width * factor)));
  c.height = std::max(1, int(std::lround(height * factor)));
  c.fx = fx * factor;
  c.fy = fy * factor;
  c.cx = cx * factor;
  c.cy = cy * factor;
  return c;
}

void Camera::validate() const {
  std::ostringstream err;
  if (!(fx > 0) || !(fy > 0)) err << "focal lengths must be positive (fx=" << fx << ", fy=" << fy << ")";
  else if (width <= 0 || height <= 0) err << "resolution must be positive";
  else if (!(cx >= 0 && cx < width) || !(cy >= 0 && cy < height))
    err << "principal point (" << cx << ", " << cy << ") outside image";
  else if (!rotation.allFinite() || !translation.allFinite()) err << "non-finite pose";
  else if ((rotation * rotation.transpose() - Mat3::Identity()).norm() > 1e-6 || rotation.determinant() < 0)
    err << "pose rotation is not a proper rotation";
  if (!err.str().empty()) throw ValidationError("camera: " + err.str());
}

}  // namespace splatsim
