#pragma once

#include <cmath>

#include <Eigen/Geometry>

#include "scrfocus/geometry.h"
#include "scrfocus/random.h"
#include "scrfocus/synthetic.h"

namespace scrfocus {
namespace testing {

inline Eigen::Quaterniond RandomRotation(Rng& rng) {
  Eigen::Quaterniond q(rng.Normal(), rng.Normal(), rng.Normal(), rng.Normal());
  q.normalize();
  return q;
}

inline Pose RandomPose(Rng& rng, double extent = 3.0) {
  return Pose(RandomRotation(rng),
              Eigen::Vector3d(rng.Uniform(-extent, extent),
                              rng.Uniform(-extent, extent),
                              rng.Uniform(-extent, extent)));
}

inline CameraIntrinsics RandomIntrinsics(Rng& rng) {
  CameraIntrinsics k;
  k.width = 64 + static_cast<int>(rng.UniformInt(600));
  k.height = 48 + static_cast<int>(rng.UniformInt(400));
  k.fx = rng.Uniform(50.0, 800.0);
  k.fy = k.fx * rng.Uniform(0.9, 1.1);
  k.cx = k.width * rng.Uniform(0.4, 0.6);
  k.cy = k.height * rng.Uniform(0.4, 0.6);
  return k;
}

// Point at the given camera-frame coordinates.
inline ScenePoint PointInFront(Rng& rng, const Pose& h, double z_lo = 0.5,
                               double z_hi = 10.0) {
  const double z = rng.Uniform(z_lo, z_hi);
  return h.CameraToWorld(
      Eigen::Vector3d(rng.Uniform(-0.5, 0.5) * z, rng.Uniform(-0.5, 0.5) * z, z));
}

// Small, fast synthetic scene used across tests.
inline SynthConfig SmallScene(uint64_t seed) {
  SynthConfig cfg;
  cfg.n_points = 120;
  cfg.n_images = 12;
  cfg.n_test_images = 4;
  cfg.width = 160;
  cfg.height = 120;
  cfg.focal = 150.0;
  cfg.rng_seed = seed;
  return cfg;
}

}  // namespace testing
}  // namespace scrfocus
