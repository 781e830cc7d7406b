#include "scrfocus/observation.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "scrfocus/errors.h"
#include "scrfocus/random.h"

namespace scrfocus {
namespace {

constexpr uint64_t kLatentStream = 0x1a7e;
constexpr uint64_t kPoolStream = 0x9001;
constexpr uint64_t kPoolPickStream = 0x91c4;
constexpr uint64_t kNoiseStream = 0x0e15e;

Descriptor RandomUnit(Rng& rng, int dim) {
  Descriptor v(dim);
  for (int i = 0; i < dim; ++i) {
    v[i] = static_cast<float>(rng.Normal());
  }
  v.normalize();
  return v;
}

// Normalizes base + sigma * eps, accumulating in double.
Descriptor PerturbAndNormalize(const Descriptor& base, double sigma,
                               uint64_t noise_seed) {
  if (sigma == 0.0) return base;
  const int dim = static_cast<int>(base.size());
  Eigen::VectorXd v = base.cast<double>();
  Rng rng(noise_seed);
  for (int i = 0; i < dim; ++i) {
    v[i] += sigma * rng.Normal();
  }
  v.normalize();
  return v.cast<float>();
}

}  // namespace

ObservationWorld ObservationWorld::Generate(const ObservationParams& params,
                                            const std::vector<int>& point_ids) {
  if (params.descriptor_dim < 8) {
    throw InvalidArgument("descriptor_dim must be >= 8");
  }
  if (params.ambiguous_pool < 1) {
    throw InvalidArgument("ambiguous_pool must be >= 1");
  }
  if (!(params.noise_sigma >= 0.0)) {
    throw InvalidArgument("noise_sigma must be >= 0");
  }
  if (!(params.feature_radius > 0.0) || params.stride < 1) {
    throw InvalidArgument("feature_radius must be > 0 and stride >= 1");
  }
  ObservationWorld world;
  world.params = params;
  const int dim = params.descriptor_dim;
  std::vector<int> ids = point_ids;
  std::sort(ids.begin(), ids.end());
  std::vector<const Descriptor*> accepted;
  for (const int id : ids) {
    Rng rng(HashSeed({params.seed, kLatentStream, static_cast<uint64_t>(id)}));
    for (int attempt = 0;; ++attempt) {
      if (attempt == 1000) {
        throw InvalidArgument(
            "cannot draw separable latent descriptors; increase "
            "descriptor_dim");
      }
      Descriptor candidate = RandomUnit(rng, dim);
      bool separable = true;
      for (const Descriptor* other : accepted) {
        if (candidate.dot(*other) >= 0.9f) {
          separable = false;
          break;
        }
      }
      if (separable) {
        auto [it, inserted] = world.latent.emplace(id, std::move(candidate));
        if (!inserted) {
          throw InvalidArgument("duplicate point id " + std::to_string(id));
        }
        accepted.push_back(&it->second);
        break;
      }
    }
  }
  Rng pool_rng(HashSeed({params.seed, kPoolStream}));
  for (int i = 0; i < params.ambiguous_pool; ++i) {
    world.pool.push_back(RandomUnit(pool_rng, dim));
  }
  return world;
}

DescriptorGrid DescriptorGrid::ForFrame(int width, int height, int stride) {
  DescriptorGrid grid;
  grid.stride = stride;
  grid.cols = (width - 1) / stride + 1;
  grid.rows = (height - 1) / stride + 1;
  return grid;
}

ObservationModel::ObservationModel(const ObservationWorld& world,
                                   const SceneMap& map)
    : world_(&world),
      map_(&map),
      bucket_size_(std::max(1.0, world.params.feature_radius)) {
  const double r = world.params.feature_radius;
  for (const MapImage& image : map.images()) {
    ImageProjections& proj = images_[image.id];
    const CameraIntrinsics& k = image.intrinsics;
    proj.grid = DescriptorGrid::ForFrame(k.width, k.height,
                                         world.params.stride);
    // Buckets cover [-r, width + r) x [-r, height + r).
    proj.bucket_cols =
        static_cast<int>(std::ceil((k.width + 2.0 * r) / bucket_size_)) + 1;
    proj.bucket_rows =
        static_cast<int>(std::ceil((k.height + 2.0 * r) / bucket_size_)) + 1;
    proj.buckets.resize(static_cast<size_t>(proj.bucket_cols) *
                        proj.bucket_rows);
    for (const auto& [point, observed] : map.VisiblePoints(image.id)) {
      if (!world.latent.count(point->id)) {
        continue;
      }
      const std::optional<Pixel> y = Project(point->position, k, image.pose);
      if (!y || y->x() < -r || y->y() < -r || y->x() >= k.width + r ||
          y->y() >= k.height + r) {
        continue;
      }
      const int bc = static_cast<int>((y->x() + r) / bucket_size_);
      const int br = static_cast<int>((y->y() + r) / bucket_size_);
      proj.buckets[static_cast<size_t>(br) * proj.bucket_cols + bc]
          .emplace_back(*y, point->id);
    }
  }
}

const ObservationModel::ImageProjections& ObservationModel::Projections(
    int image_id) const {
  const auto it = images_.find(image_id);
  if (it == images_.end()) {
    throw UnknownImage("unknown image id " + std::to_string(image_id));
  }
  return it->second;
}

DescriptorGrid ObservationModel::Grid(int image_id) const {
  return Projections(image_id).grid;
}

int ObservationModel::SnapToCell(int image_id, const Pixel& y) const {
  const CameraIntrinsics& k = map_->Image(image_id).intrinsics;
  if (!std::isfinite(y.x()) || !std::isfinite(y.y()) || !k.Contains(y)) {
    throw OutOfFrame("pixel outside the frame of image " +
                     std::to_string(image_id));
  }
  const DescriptorGrid& grid = Projections(image_id).grid;
  const int col = std::min(
      grid.cols - 1, static_cast<int>(std::lround(y.x() / grid.stride)));
  const int row = std::min(
      grid.rows - 1, static_cast<int>(std::lround(y.y() / grid.stride)));
  return row * grid.cols + col;
}

int ObservationModel::DominantPoint(int image_id, int cell) const {
  const ImageProjections& proj = Projections(image_id);
  const Pixel center = proj.grid.CellCenter(cell);
  const double r = world_->params.feature_radius;
  const int bc = static_cast<int>((center.x() + r) / bucket_size_);
  const int br = static_cast<int>((center.y() + r) / bucket_size_);
  int best_id = -1;
  double best_d2 = r * r;
  for (int dr = -1; dr <= 1; ++dr) {
    for (int dc = -1; dc <= 1; ++dc) {
      const int c = bc + dc;
      const int rr = br + dr;
      if (c < 0 || rr < 0 || c >= proj.bucket_cols || rr >= proj.bucket_rows) {
        continue;
      }
      for (const auto& [y, id] :
           proj.buckets[static_cast<size_t>(rr) * proj.bucket_cols + c]) {
        const double d2 = (y - center).squaredNorm();
        if (d2 < best_d2 || (d2 == best_d2 && (best_id < 0 || id < best_id))) {
          best_d2 = d2;
          best_id = id;
        }
      }
    }
  }
  return best_id;
}

int ObservationModel::PoolIndex(int image_id, int cell) const {
  return static_cast<int>(
      HashSeed({world_->params.seed, kPoolPickStream,
                static_cast<uint64_t>(image_id), static_cast<uint64_t>(cell)}) %
      world_->pool.size());
}

Descriptor ObservationModel::DescriptorAtCell(int image_id, int cell) const {
  const uint64_t noise_seed =
      HashSeed({world_->params.seed, kNoiseStream,
                static_cast<uint64_t>(image_id), static_cast<uint64_t>(cell)});
  const int point = DominantPoint(image_id, cell);
  const Descriptor& base = point >= 0 ? world_->latent.at(point)
                                      : world_->pool[PoolIndex(image_id, cell)];
  return PerturbAndNormalize(base, world_->params.noise_sigma, noise_seed);
}

Descriptor ObservationModel::DescriptorAt(int image_id, const Pixel& y) const {
  return DescriptorAtCell(image_id, SnapToCell(image_id, y));
}

std::vector<Descriptor> ObservationModel::ObservationsFor(
    int image_id, std::span<const Pixel> pixels) const {
  std::vector<Descriptor> out;
  out.reserve(pixels.size());
  for (const Pixel& y : pixels) {
    out.push_back(DescriptorAt(image_id, y));
  }
  return out;
}

}  // namespace scrfocus
