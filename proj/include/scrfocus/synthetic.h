#pragma once

#include <cstdint>

#include "scrfocus/observation.h"
#include "scrfocus/scene_map.h"

namespace scrfocus {

// Camera path: training cameras on a horizontal arc around `look_at`,
// held-out cameras on a second arc at a different radius and height.
struct TrajectoryConfig {
  double orbit_radius = 6.0;
  Eigen::Vector3d look_at = Eigen::Vector3d::Zero();
  double arc_degrees = 50.0;
  double elevation_jitter = 0.4;
  double look_at_jitter = 0.4;
  double test_radius_scale = 0.85;
  double test_height_offset = 0.3;
};

struct SynthConfig {
  int n_points = 300;
  int n_images = 40;        // training images
  int n_test_images = 20;   // held-out images, named "test/..."
  int descriptor_dim = 32;
  double noise_sigma = 0.05;
  int ambiguous_pool = 16;
  // Fraction of a head-on frame covered by the structure carrying the
  // distinctive points; the rest of the frame is background.
  double structured_fraction = 0.35;
  // Depth relief of the structure, as a fraction of its width.
  double relief = 0.15;
  TrajectoryConfig trajectory;
  int width = 320;
  int height = 240;
  double focal = 300.0;
  double feature_radius = 3.0;
  int stride = 1;
  int min_visible_points = 8;
  uint64_t rng_seed = 0;

  // Throws InvalidArgument.
  void Validate() const;
  ObservationParams Observation() const;
};

struct SyntheticScene {
  SceneMap map;
  ObservationWorld world;
};

// Deterministic in cfg (including rng_seed). Tracks are built by projecting
// every point into every image and keeping in-front, in-frame hits.
// Throws InfeasibleScene when n_points < 4 or some image sees fewer than
// min_visible_points points.
SyntheticScene GenerateSynthetic(const SynthConfig& cfg);

}  // namespace scrfocus
