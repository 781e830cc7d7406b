#include "scrfocus/synthetic.h"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

#include "scrfocus/errors.h"
#include "scrfocus/random.h"

namespace scrfocus {
namespace {

constexpr uint64_t kStructureStream = 0x57c7;
constexpr uint64_t kTrainCameraStream = 0xca70;
constexpr uint64_t kTestCameraStream = 0x7e57;

double DegToRad(double deg) { return deg * std::numbers::pi / 180.0; }

// Camera-to-world pose of a camera at `center` looking at `target`, with
// image y pointing towards world +y (world "up" is -y).
Pose LookAt(const Eigen::Vector3d& center, const Eigen::Vector3d& target) {
  const Eigen::Vector3d z = (target - center).normalized();
  const Eigen::Vector3d up(0.0, -1.0, 0.0);
  const Eigen::Vector3d x = z.cross(up).normalized();
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix3d r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return Pose(Eigen::Quaterniond(r), center);
}

std::string ImageName(const char* prefix, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%04d", prefix, index);
  return buf;
}

}  // namespace

void SynthConfig::Validate() const {
  if (n_images < 2) throw InvalidArgument("n_images must be >= 2");
  if (n_test_images < 0) throw InvalidArgument("n_test_images must be >= 0");
  if (descriptor_dim < 8) throw InvalidArgument("descriptor_dim must be >= 8");
  if (!(structured_fraction >= 0.0 && structured_fraction <= 1.0)) {
    throw InvalidArgument("structured_fraction must lie in [0, 1]");
  }
  if (!(noise_sigma >= 0.0)) throw InvalidArgument("noise_sigma must be >= 0");
  if (ambiguous_pool < 1) throw InvalidArgument("ambiguous_pool must be >= 1");
  if (!(trajectory.orbit_radius > 0.0) || !(focal > 0.0)) {
    throw InvalidArgument("orbit_radius and focal must be positive");
  }
  if (width < 8 || height < 8) {
    throw InvalidArgument("frame must be at least 8x8 pixels");
  }
  if (!(feature_radius > 0.0) || stride < 1) {
    throw InvalidArgument("feature_radius must be > 0 and stride >= 1");
  }
  if (min_visible_points < 0) {
    throw InvalidArgument("min_visible_points must be >= 0");
  }
}

ObservationParams SynthConfig::Observation() const {
  ObservationParams p;
  p.descriptor_dim = descriptor_dim;
  p.noise_sigma = noise_sigma;
  p.ambiguous_pool = ambiguous_pool;
  p.feature_radius = feature_radius;
  p.stride = stride;
  p.seed = rng_seed;
  return p;
}

SyntheticScene GenerateSynthetic(const SynthConfig& cfg) {
  if (cfg.n_points < 4) {
    throw InfeasibleScene("at least 4 map points are required, got " +
                          std::to_string(cfg.n_points));
  }
  cfg.Validate();
  const TrajectoryConfig& traj = cfg.trajectory;

  // Structure patch sized to cover structured_fraction of a head-on frame
  // seen from the orbit radius.
  const double side = std::sqrt(cfg.structured_fraction);
  const double wall_w = side * cfg.width * traj.orbit_radius / cfg.focal;
  const double wall_h = side * cfg.height * traj.orbit_radius / cfg.focal;
  const double relief = cfg.relief * wall_w;

  std::vector<MapPoint> points(cfg.n_points);
  Rng structure_rng(HashSeed({cfg.rng_seed, kStructureStream}));
  for (int i = 0; i < cfg.n_points; ++i) {
    points[i].id = i;
    points[i].position =
        traj.look_at +
        Eigen::Vector3d(structure_rng.Uniform(-0.5, 0.5) * wall_w,
                        structure_rng.Uniform(-0.5, 0.5) * wall_h,
                        structure_rng.Uniform(-0.5, 0.5) * relief);
  }

  CameraIntrinsics k;
  k.fx = k.fy = cfg.focal;
  k.cx = 0.5 * cfg.width;
  k.cy = 0.5 * cfg.height;
  k.width = cfg.width;
  k.height = cfg.height;

  const double arc = DegToRad(cfg.trajectory.arc_degrees);
  auto place = [&](Rng& rng, int index, int count, double radius,
                   double height) {
    const double slot = arc / count;
    const double azimuth = -0.5 * arc + slot * (index + 0.5) +
                           rng.Uniform(-0.3, 0.3) * slot;
    const Eigen::Vector3d center =
        traj.look_at +
        Eigen::Vector3d(radius * std::sin(azimuth),
                        height + rng.Uniform(-1.0, 1.0) * traj.elevation_jitter,
                        -radius * std::cos(azimuth));
    const Eigen::Vector3d target =
        traj.look_at +
        Eigen::Vector3d(rng.Uniform(-1.0, 1.0) * traj.look_at_jitter,
                        rng.Uniform(-1.0, 1.0) * traj.look_at_jitter, 0.0);
    return LookAt(center, target);
  };

  std::vector<MapImage> images;
  Rng train_rng(HashSeed({cfg.rng_seed, kTrainCameraStream}));
  for (int i = 0; i < cfg.n_images; ++i) {
    images.push_back({i, k, place(train_rng, i, cfg.n_images,
                                  traj.orbit_radius, 0.0),
                      ImageName("train/", i)});
  }
  Rng test_rng(HashSeed({cfg.rng_seed, kTestCameraStream}));
  for (int j = 0; j < cfg.n_test_images; ++j) {
    images.push_back({cfg.n_images + j, k,
                      place(test_rng, j, cfg.n_test_images,
                            traj.orbit_radius * traj.test_radius_scale,
                            traj.test_height_offset),
                      ImageName(kTestImagePrefix, j)});
  }

  std::vector<int> seen(images.size(), 0);
  std::vector<MapPoint> tracked;
  for (MapPoint& point : points) {
    for (size_t i = 0; i < images.size(); ++i) {
      const std::optional<Pixel> y =
          Project(point.position, images[i].intrinsics, images[i].pose);
      if (y && images[i].intrinsics.Contains(*y)) {
        point.track.push_back({images[i].id, *y});
        ++seen[i];
      }
    }
    if (!point.track.empty()) {
      point.id = static_cast<int>(tracked.size());  // keep ids dense
      tracked.push_back(std::move(point));
    }
  }
  for (size_t i = 0; i < images.size(); ++i) {
    if (seen[i] < cfg.min_visible_points) {
      throw InfeasibleScene("image " + images[i].name + " sees only " +
                            std::to_string(seen[i]) + " points (need " +
                            std::to_string(cfg.min_visible_points) + ")");
    }
  }

  SyntheticScene scene;
  scene.map = SceneMap::Create(std::move(tracked), std::move(images));
  std::vector<int> ids;
  for (const MapPoint& p : scene.map.points()) ids.push_back(p.id);
  scene.world = ObservationWorld::Generate(cfg.Observation(), ids);
  return scene;
}

}  // namespace scrfocus
