#pragma once

#include <optional>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace scrfocus {

using Pixel = Eigen::Vector2d;
using ScenePoint = Eigen::Vector3d;

// Points with camera-frame depth at or below this value are behind the
// camera for projection purposes.
inline constexpr double kMinDepth = 1e-6;

// Rigid camera-to-world transform: X_world = R * X_cam + t. The world to
// camera mapping used by projection is the inverse.
struct Pose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Pose() = default;
  // Normalizes the quaternion. Throws InvalidArgument on a zero or
  // non-finite quaternion.
  Pose(const Eigen::Quaterniond& q, const Eigen::Vector3d& t);

  static Pose Identity() { return Pose(); }

  Eigen::Matrix3d RotationMatrix() const {
    return rotation.toRotationMatrix();
  }
  // Camera center in world coordinates.
  const Eigen::Vector3d& Center() const { return translation; }

  ScenePoint CameraToWorld(const ScenePoint& x_cam) const {
    return rotation * x_cam + translation;
  }
  ScenePoint WorldToCamera(const ScenePoint& x_world) const {
    return rotation.conjugate() * (x_world - translation);
  }
};

// a∘b: apply b first, then a.
Pose Compose(const Pose& a, const Pose& b);
Pose Invert(const Pose& pose);

// Rotation angle in radians of the relative rotation between two poses and
// Euclidean distance between their translations.
double RotationAngleBetween(const Pose& a, const Pose& b);
double TranslationDistance(const Pose& a, const Pose& b);

// Zero-skew pinhole calibration.
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 8;
  int height = 8;

  // Throws InvalidArgument unless fx, fy > 0 and width, height >= 8.
  void Validate() const;

  Eigen::Matrix3d Matrix() const;
  bool Contains(const Pixel& y) const {
    return y.x() >= 0.0 && y.y() >= 0.0 && y.x() < width && y.y() < height;
  }
  double Diagonal() const;
};

// K * H^-1 * x followed by dehomogenization. Returns nullopt when the
// camera-frame depth is <= z_min (behind the camera). The result may lie
// outside the frame.
std::optional<Pixel> Project(const ScenePoint& p, const CameraIntrinsics& k,
                             const Pose& h, double z_min = kMinDepth);

// L1 distance between y and the projection of x; nullopt when x is behind
// the camera.
std::optional<double> ReprojectionResidual(const ScenePoint& x,
                                           const Pixel& y,
                                           const CameraIntrinsics& k,
                                           const Pose& h,
                                           double z_min = kMinDepth);

// World point at camera-frame depth `depth` on the viewing ray through y.
// Throws InvalidArgument for depth <= 0.
ScenePoint BackprojectRay(const Pixel& y, const CameraIntrinsics& k,
                          const Pose& h, double depth);

// Rotation about the camera's optical (z) axis.
Eigen::Quaterniond RotationAboutZ(double angle_rad);

}  // namespace scrfocus
