#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "scrfocus/geometry.h"
#include "scrfocus/scene_map.h"

namespace scrfocus {

// Unit-norm feature vector.
using Descriptor = Eigen::VectorXf;

struct ObservationParams {
  int descriptor_dim = 32;
  double noise_sigma = 0.05;
  int ambiguous_pool = 16;
  // A projected map point dominates the appearance of grid cells whose
  // center lies within this many pixels.
  double feature_radius = 3.0;
  // Descriptor grid stride in pixels; cell (c, r) is centered at
  // (c * stride, r * stride).
  int stride = 1;
  uint64_t seed = 0;
};

// Synthetic stand-in for a frozen feature backbone. Mapped points carry
// unique latent descriptors; everything else draws from a small pool of
// shared, ambiguous background descriptors.
struct ObservationWorld {
  ObservationParams params;
  std::map<int, Descriptor> latent;  // point id -> unit vector
  std::vector<Descriptor> pool;

  // Draws latent descriptors for `point_ids` and the background pool from
  // params.seed. Latents are pairwise separated (dot product < 0.9).
  static ObservationWorld Generate(const ObservationParams& params,
                                   const std::vector<int>& point_ids);
};

// Descriptor grid geometry for a frame.
struct DescriptorGrid {
  int cols = 0;
  int rows = 0;
  int stride = 1;

  static DescriptorGrid ForFrame(int width, int height, int stride);
  int size() const { return cols * rows; }
  Pixel CellCenter(int index) const {
    return Pixel((index % cols) * stride, (index / cols) * stride);
  }
};

// Answers descriptor queries for the images of one map. Precomputes the
// projections of every image's visible points; immutable afterwards and
// safe for concurrent queries.
class ObservationModel {
 public:
  ObservationModel(const ObservationWorld& world, const SceneMap& map);

  const ObservationWorld& world() const { return *world_; }
  const SceneMap& map() const { return *map_; }
  int descriptor_dim() const { return world_->params.descriptor_dim; }

  DescriptorGrid Grid(int image_id) const;

  // Index of the grid cell nearest to y. Throws OutOfFrame when y lies
  // outside the image, UnknownImage for an unknown id.
  int SnapToCell(int image_id, const Pixel& y) const;

  // Id of the visible point nearest to the cell center among those
  // projecting within feature_radius, or -1 for a background cell.
  int DominantPoint(int image_id, int cell) const;

  // Pool index used by a background cell.
  int PoolIndex(int image_id, int cell) const;

  // Descriptor at y, snapped to the nearest grid cell. Noise is keyed by
  // (seed, image, cell), so repeated queries agree.
  Descriptor DescriptorAt(int image_id, const Pixel& y) const;
  Descriptor DescriptorAtCell(int image_id, int cell) const;

  // Elementwise DescriptorAt, order preserving.
  std::vector<Descriptor> ObservationsFor(int image_id,
                                          std::span<const Pixel> pixels) const;

 private:
  struct ImageProjections {
    DescriptorGrid grid;
    int bucket_cols = 0;
    int bucket_rows = 0;
    // Projections bucketed by feature_radius-sized squares.
    std::vector<std::vector<std::pair<Pixel, int>>> buckets;
  };

  const ImageProjections& Projections(int image_id) const;

  const ObservationWorld* world_;
  const SceneMap* map_;
  double bucket_size_;
  std::map<int, ImageProjections> images_;
};

}  // namespace scrfocus
