#include "scrfocus/geometry.h"

#include <algorithm>
#include <cmath>

#include "scrfocus/errors.h"

namespace scrfocus {

Pose::Pose(const Eigen::Quaterniond& q, const Eigen::Vector3d& t)
    : rotation(q), translation(t) {
  const double norm = q.norm();
  if (!std::isfinite(norm) || norm == 0.0) {
    throw InvalidArgument("pose quaternion must be finite and non-zero");
  }
  rotation.coeffs() /= norm;
}

Pose Compose(const Pose& a, const Pose& b) {
  return Pose(a.rotation * b.rotation, a.rotation * b.translation + a.translation);
}

Pose Invert(const Pose& pose) {
  const Eigen::Quaterniond inv = pose.rotation.conjugate();
  return Pose(inv, -(inv * pose.translation));
}

double RotationAngleBetween(const Pose& a, const Pose& b) {
  // Same angle as acos((trace(Ra^T Rb) - 1) / 2), without the loss of
  // precision near zero.
  const Eigen::Quaterniond rel = a.rotation.conjugate() * b.rotation;
  return 2.0 * std::atan2(rel.vec().norm(), std::abs(rel.w()));
}

double TranslationDistance(const Pose& a, const Pose& b) {
  return (a.translation - b.translation).norm();
}

void CameraIntrinsics::Validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw InvalidArgument("focal lengths must be positive");
  }
  if (!std::isfinite(cx) || !std::isfinite(cy)) {
    throw InvalidArgument("principal point must be finite");
  }
  if (width < 8 || height < 8) {
    throw InvalidArgument("frame must be at least 8x8 pixels");
  }
}

Eigen::Matrix3d CameraIntrinsics::Matrix() const {
  Eigen::Matrix3d k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

double CameraIntrinsics::Diagonal() const {
  return std::hypot(static_cast<double>(width), static_cast<double>(height));
}

std::optional<Pixel> Project(const ScenePoint& p, const CameraIntrinsics& k,
                             const Pose& h, double z_min) {
  const Eigen::Vector3d xc = h.WorldToCamera(p);
  if (!(xc.z() > z_min)) {
    return std::nullopt;
  }
  return Pixel(k.fx * xc.x() / xc.z() + k.cx, k.fy * xc.y() / xc.z() + k.cy);
}

std::optional<double> ReprojectionResidual(const ScenePoint& x,
                                           const Pixel& y,
                                           const CameraIntrinsics& k,
                                           const Pose& h, double z_min) {
  const std::optional<Pixel> proj = Project(x, k, h, z_min);
  if (!proj) {
    return std::nullopt;
  }
  return (y - *proj).cwiseAbs().sum();
}

ScenePoint BackprojectRay(const Pixel& y, const CameraIntrinsics& k,
                          const Pose& h, double depth) {
  if (!(depth > 0.0)) {
    throw InvalidArgument("backprojection depth must be positive");
  }
  const Eigen::Vector3d xc((y.x() - k.cx) / k.fx * depth,
                           (y.y() - k.cy) / k.fy * depth, depth);
  return h.CameraToWorld(xc);
}

Eigen::Quaterniond RotationAboutZ(double angle_rad) {
  return Eigen::Quaterniond(
      Eigen::AngleAxisd(angle_rad, Eigen::Vector3d::UnitZ()));
}

}  // namespace scrfocus
