#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "scrfocus/geometry.h"
#include "scrfocus/observation.h"
#include "scrfocus/random.h"
#include "scrfocus/scene_map.h"

namespace scrfocus {

// In-plane rotation and resize applied to a training camera. The rotation
// is composed into the pose about the optical axis; the resize scales
// fx, fy, cx, cy and the frame.
struct Augmentation {
  double rotation_deg = 0.0;
  double scale = 1.0;

  CameraIntrinsics Apply(const CameraIntrinsics& k) const;
  Pose Apply(const Pose& h) const;
};

struct AugmentationConfig {
  bool enabled = true;
  double max_rotation_deg = 15.0;
  double min_scale = 2.0 / 3.0;
  double max_scale = 1.5;

  Augmentation Draw(Rng& rng) const;
};

// Projections of an image's visible map points that land inside the
// (possibly augmented) frame.
struct SeedKeypointSet {
  int image_id = 0;
  std::vector<Pixel> seeds;
  int width = 0;
  int height = 0;
};

// Re-projects the image's visible points (track length >= min_track_length)
// with the ground-truth, optionally augmented, camera. Behind-camera and
// out-of-frame projections are discarded.
// Throws UnknownImage; NoSeeds when nothing survives.
SeedKeypointSet SeedKeypoints(const SceneMap& map, int image_id,
                              const std::optional<Augmentation>& aug,
                              int min_track_length = 2);

// Cell mask over the descriptor grid of a frame.
class AllowedMask {
 public:
  AllowedMask(const DescriptorGrid& grid, std::vector<uint8_t> cells);

  const DescriptorGrid& grid() const { return grid_; }
  bool At(int cell) const { return cells_[cell] != 0; }
  int Count() const { return count_; }
  int size() const { return grid_.size(); }
  // Indices of true cells, ascending.
  std::vector<int> TrueCells() const;

 private:
  DescriptorGrid grid_;
  std::vector<uint8_t> cells_;
  int count_ = 0;
};

// Union of radius-rho disks around the seeds: a cell is true iff its
// center lies within Euclidean distance rho of some seed.
// Throws InvalidArgument for rho < 1 or stride < 1.
AllowedMask BuildAllowedMask(const SeedKeypointSet& seeds, double rho,
                             int stride = 1);

// `count` cell centers drawn uniformly, with replacement, from the true
// cells of the mask. Throws NoSeeds when the mask is empty and count > 0.
std::vector<Pixel> SampleFocus(const AllowedMask& mask, int count, Rng& rng);
std::vector<Pixel> SampleFocus(const SeedKeypointSet& seeds, double rho,
                               int count, Rng& rng, int stride = 1);

// `count` cell centers drawn uniformly from every cell of the frame.
std::vector<Pixel> SampleRandom(int width, int height, int count, Rng& rng,
                                int stride = 1);

// Fraction of cells covered by the allowed mask; 0 without seeds.
double CoverageFraction(const SeedKeypointSet& seeds, double rho,
                        int stride = 1);

// Buffer instance (descriptor, pixel, intrinsics, pose, image). Stored with
// the single-precision layout of the buffer file so a buffer read back from
// disk is identical to the one that was written.
struct BufferInstance {
  Eigen::VectorXf descriptor;
  Eigen::Vector2f pixel;
  Eigen::Vector4f intrinsics;  // fx, fy, cx, cy
  Eigen::Matrix<float, 7, 1> pose;  // qw, qx, qy, qz, tx, ty, tz
  uint32_t image_id = 0;

  static BufferInstance Make(const Descriptor& d, const Pixel& y,
                             const CameraIntrinsics& k, const Pose& h,
                             int image_id);

  Pixel PixelD() const { return pixel.cast<double>(); }
  // Frame size is not stored; it is taken as (2 cx, 2 cy).
  CameraIntrinsics Intrinsics() const;
  Pose CameraPose() const;
};

enum class SamplingStrategy : uint8_t { kRandom = 0, kFocus = 1 };

std::string StrategyName(SamplingStrategy s);
// Throws InvalidArgument for anything but "random" or "focus".
SamplingStrategy ParseStrategy(const std::string& name);

struct TrainingBuffer {
  std::vector<BufferInstance> instances;
  int descriptor_dim = 0;
  SamplingStrategy strategy = SamplingStrategy::kRandom;
  float rho = 0.0f;
  uint64_t seed = 0;
};

struct BufferConfig {
  SamplingStrategy strategy = SamplingStrategy::kFocus;
  double rho = 5.0;
  int target_size = 100000;
  int passes = 4;  // shuffled passes over the training images
  AugmentationConfig augmentation;
  int min_track_length = 2;
  uint64_t seed = 0;
  int num_threads = 1;
};

struct BufferReport {
  int jobs = 0;     // (pass, image) pairs visited
  int skipped = 0;  // pairs without usable seeds
};

// Fills a training buffer from the given images (default: the map's
// training images). Each (pass, image) job draws a fresh augmentation and
// ceil(target / contributing jobs) pixels with a generator keyed by
// (seed, pass, image id); the result is truncated to exactly target_size.
// Output is bit-identical for any num_threads.
// Throws AllImagesSkipped when no job contributes.
TrainingBuffer BuildBuffer(const ObservationModel& model,
                           const BufferConfig& cfg,
                           BufferReport* report = nullptr,
                           std::vector<int> image_ids = {});

// Binary little-endian buffer file:
//   "FTBUF1", u32 D, u64 count, u8 strategy, f32 rho, u64 seed,
//   per instance: D x f32 descriptor, 2 x f32 pixel, 4 x f32 (fx fy cx cy),
//   7 x f32 (qw qx qy qz tx ty tz), u32 image_id.
void WriteBuffer(const TrainingBuffer& buffer, const std::string& path);
std::string SerializeBuffer(const TrainingBuffer& buffer);
// Throws IoError / ParseError.
TrainingBuffer ReadBuffer(const std::string& path);
TrainingBuffer DeserializeBuffer(const std::string& bytes);

}  // namespace scrfocus
