#include "scrfocus/sampler.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "scrfocus/binary_io.h"
#include "scrfocus/errors.h"
#include "scrfocus/parallel.h"

namespace scrfocus {
namespace {

constexpr std::string_view kBufferMagic = "FTBUF1";
constexpr uint64_t kShuffleStream = 0x5f1e;
constexpr uint64_t kJobStream = 0x10b5;

// Maps a pixel of the augmented frame back to the original frame. The
// augmentation rotates about the optical axis, so depth is unchanged and
// the mapping is affine: y = K * Rz * K_aug^-1 * y_aug.
Pixel ToOriginalFrame(const Pixel& y_aug, const CameraIntrinsics& k,
                      const CameraIntrinsics& k_aug, double rotation_deg) {
  const double a = rotation_deg * std::numbers::pi / 180.0;
  const double xn = (y_aug.x() - k_aug.cx) / k_aug.fx;
  const double yn = (y_aug.y() - k_aug.cy) / k_aug.fy;
  const double xr = std::cos(a) * xn - std::sin(a) * yn;
  const double yr = std::sin(a) * xn + std::cos(a) * yn;
  return Pixel(k.fx * xr + k.cx, k.fy * yr + k.cy);
}

}  // namespace

CameraIntrinsics Augmentation::Apply(const CameraIntrinsics& k) const {
  if (!(scale > 0.0)) {
    throw InvalidArgument("augmentation scale must be positive");
  }
  CameraIntrinsics out = k;
  out.fx *= scale;
  out.fy *= scale;
  out.cx *= scale;
  out.cy *= scale;
  out.width = std::max(8, static_cast<int>(std::floor(k.width * scale)));
  out.height = std::max(8, static_cast<int>(std::floor(k.height * scale)));
  return out;
}

Pose Augmentation::Apply(const Pose& h) const {
  return Compose(
      h, Pose(RotationAboutZ(rotation_deg * std::numbers::pi / 180.0),
              Eigen::Vector3d::Zero()));
}

Augmentation AugmentationConfig::Draw(Rng& rng) const {
  Augmentation aug;
  aug.rotation_deg = rng.Uniform(-max_rotation_deg, max_rotation_deg);
  aug.scale = rng.Uniform(min_scale, max_scale);
  return aug;
}

SeedKeypointSet SeedKeypoints(const SceneMap& map, int image_id,
                              const std::optional<Augmentation>& aug,
                              int min_track_length) {
  const MapImage& image = map.Image(image_id);
  CameraIntrinsics k = image.intrinsics;
  Pose h = image.pose;
  if (aug) {
    k = aug->Apply(k);
    h = aug->Apply(h);
  }
  SeedKeypointSet set;
  set.image_id = image_id;
  set.width = k.width;
  set.height = k.height;
  for (const auto& [point, observed] : map.VisiblePoints(image_id)) {
    if (static_cast<int>(point->track.size()) < min_track_length) {
      continue;
    }
    const std::optional<Pixel> y = Project(point->position, k, h);
    if (y && k.Contains(*y)) {
      set.seeds.push_back(*y);
    }
  }
  if (set.seeds.empty()) {
    throw NoSeeds("no valid seed keypoints in image " +
                  std::to_string(image_id));
  }
  return set;
}

AllowedMask::AllowedMask(const DescriptorGrid& grid, std::vector<uint8_t> cells)
    : grid_(grid), cells_(std::move(cells)) {
  if (static_cast<int>(cells_.size()) != grid_.size()) {
    throw InvalidArgument("mask size does not match grid");
  }
  count_ = static_cast<int>(
      std::count_if(cells_.begin(), cells_.end(), [](uint8_t c) { return c; }));
}

std::vector<int> AllowedMask::TrueCells() const {
  std::vector<int> out;
  out.reserve(count_);
  for (int i = 0; i < size(); ++i) {
    if (cells_[i]) out.push_back(i);
  }
  return out;
}

AllowedMask BuildAllowedMask(const SeedKeypointSet& seeds, double rho,
                             int stride) {
  if (!(rho >= 1.0)) {
    throw InvalidArgument("sampling radius must be >= 1");
  }
  if (stride < 1) {
    throw InvalidArgument("stride must be >= 1");
  }
  const DescriptorGrid grid =
      DescriptorGrid::ForFrame(seeds.width, seeds.height, stride);
  std::vector<uint8_t> cells(grid.size(), 0);
  const double rho2 = rho * rho;
  for (const Pixel& s : seeds.seeds) {
    const int c0 = std::max(0, static_cast<int>(std::ceil((s.x() - rho) / stride)));
    const int c1 = std::min(grid.cols - 1,
                            static_cast<int>(std::floor((s.x() + rho) / stride)));
    const int r0 = std::max(0, static_cast<int>(std::ceil((s.y() - rho) / stride)));
    const int r1 = std::min(grid.rows - 1,
                            static_cast<int>(std::floor((s.y() + rho) / stride)));
    for (int r = r0; r <= r1; ++r) {
      const double dy = r * stride - s.y();
      for (int c = c0; c <= c1; ++c) {
        const double dx = c * stride - s.x();
        if (dx * dx + dy * dy <= rho2) {
          cells[static_cast<size_t>(r) * grid.cols + c] = 1;
        }
      }
    }
  }
  return AllowedMask(grid, std::move(cells));
}

std::vector<Pixel> SampleFocus(const AllowedMask& mask, int count, Rng& rng) {
  std::vector<Pixel> out;
  if (count <= 0) return out;
  const std::vector<int> cells = mask.TrueCells();
  if (cells.empty()) {
    throw NoSeeds("allowed mask is empty");
  }
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    out.push_back(mask.grid().CellCenter(cells[rng.UniformInt(cells.size())]));
  }
  return out;
}

std::vector<Pixel> SampleFocus(const SeedKeypointSet& seeds, double rho,
                               int count, Rng& rng, int stride) {
  return SampleFocus(BuildAllowedMask(seeds, rho, stride), count, rng);
}

std::vector<Pixel> SampleRandom(int width, int height, int count, Rng& rng,
                                int stride) {
  const DescriptorGrid grid = DescriptorGrid::ForFrame(width, height, stride);
  std::vector<Pixel> out;
  out.reserve(std::max(count, 0));
  for (int i = 0; i < count; ++i) {
    out.push_back(grid.CellCenter(static_cast<int>(rng.UniformInt(grid.size()))));
  }
  return out;
}

double CoverageFraction(const SeedKeypointSet& seeds, double rho, int stride) {
  const AllowedMask mask = BuildAllowedMask(seeds, rho, stride);
  return static_cast<double>(mask.Count()) / mask.size();
}

BufferInstance BufferInstance::Make(const Descriptor& d, const Pixel& y,
                                    const CameraIntrinsics& k, const Pose& h,
                                    int image_id) {
  BufferInstance inst;
  inst.descriptor = d;
  inst.pixel = y.cast<float>();
  inst.intrinsics << static_cast<float>(k.fx), static_cast<float>(k.fy),
      static_cast<float>(k.cx), static_cast<float>(k.cy);
  const Eigen::Quaterniond& q = h.rotation;
  inst.pose << static_cast<float>(q.w()), static_cast<float>(q.x()),
      static_cast<float>(q.y()), static_cast<float>(q.z()),
      static_cast<float>(h.translation.x()),
      static_cast<float>(h.translation.y()),
      static_cast<float>(h.translation.z());
  inst.image_id = static_cast<uint32_t>(image_id);
  return inst;
}

CameraIntrinsics BufferInstance::Intrinsics() const {
  CameraIntrinsics k;
  k.fx = intrinsics[0];
  k.fy = intrinsics[1];
  k.cx = intrinsics[2];
  k.cy = intrinsics[3];
  k.width = std::max(8, static_cast<int>(std::lround(2.0 * k.cx)));
  k.height = std::max(8, static_cast<int>(std::lround(2.0 * k.cy)));
  return k;
}

Pose BufferInstance::CameraPose() const {
  return Pose(Eigen::Quaterniond(pose[0], pose[1], pose[2], pose[3]),
              Eigen::Vector3d(pose[4], pose[5], pose[6]));
}

std::string StrategyName(SamplingStrategy s) {
  return s == SamplingStrategy::kFocus ? "focus" : "random";
}

SamplingStrategy ParseStrategy(const std::string& name) {
  if (name == "focus") return SamplingStrategy::kFocus;
  if (name == "random") return SamplingStrategy::kRandom;
  throw InvalidArgument("unknown sampling strategy '" + name + "'");
}

namespace {

struct BufferJob {
  int pass = 0;
  int image_id = 0;
};

// Candidate cells of one job: the strategy's cells in the augmented frame
// whose original-frame location is inside the image.
struct JobCandidates {
  DescriptorGrid grid;
  CameraIntrinsics k_aug;
  Pose h_aug;
  Augmentation aug;
  std::vector<int> cells;
};

JobCandidates PrepareJob(const ObservationModel& model, const BufferConfig& cfg,
                         const BufferJob& job, Rng& rng) {
  const MapImage& image = model.map().Image(job.image_id);
  JobCandidates out;
  if (cfg.augmentation.enabled) {
    out.aug = cfg.augmentation.Draw(rng);
  }
  out.k_aug = out.aug.Apply(image.intrinsics);
  out.h_aug = out.aug.Apply(image.pose);
  const int stride = model.world().params.stride;
  out.grid = DescriptorGrid::ForFrame(out.k_aug.width, out.k_aug.height, stride);

  std::vector<int> candidates;
  if (cfg.strategy == SamplingStrategy::kFocus) {
    std::optional<Augmentation> aug;
    if (cfg.augmentation.enabled) aug = out.aug;
    SeedKeypointSet seeds;
    try {
      seeds = SeedKeypoints(model.map(), job.image_id, aug,
                            cfg.min_track_length);
    } catch (const NoSeeds&) {
      return out;
    }
    candidates = BuildAllowedMask(seeds, cfg.rho, stride).TrueCells();
  } else {
    candidates.resize(out.grid.size());
    for (int i = 0; i < out.grid.size(); ++i) candidates[i] = i;
  }
  out.cells.reserve(candidates.size());
  for (const int cell : candidates) {
    const Pixel y = ToOriginalFrame(out.grid.CellCenter(cell), image.intrinsics,
                                    out.k_aug, out.aug.rotation_deg);
    if (image.intrinsics.Contains(y)) {
      out.cells.push_back(cell);
    }
  }
  return out;
}

}  // namespace

TrainingBuffer BuildBuffer(const ObservationModel& model,
                           const BufferConfig& cfg, BufferReport* report,
                           std::vector<int> image_ids) {
  if (cfg.target_size < 1) {
    throw InvalidArgument("target_size must be >= 1");
  }
  if (cfg.passes < 1) {
    throw InvalidArgument("passes must be >= 1");
  }
  if (cfg.strategy == SamplingStrategy::kFocus && !(cfg.rho >= 1.0)) {
    throw InvalidArgument("sampling radius must be >= 1");
  }
  if (image_ids.empty()) {
    image_ids = model.map().TrainingImageIds();
  }
  if (image_ids.empty()) {
    throw AllImagesSkipped("map has no training images");
  }

  std::vector<BufferJob> jobs;
  for (int pass = 0; pass < cfg.passes; ++pass) {
    std::vector<int> order = image_ids;
    Rng shuffle(HashSeed({cfg.seed, kShuffleStream, static_cast<uint64_t>(pass)}));
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle.UniformInt(i)]);
    }
    for (const int id : order) jobs.push_back({pass, id});
  }
  auto job_seed = [&](const BufferJob& job) {
    return HashSeed({cfg.seed, kJobStream, static_cast<uint64_t>(job.pass),
                     static_cast<uint64_t>(job.image_id)});
  };

  // First sweep: which jobs can contribute at all.
  std::vector<uint8_t> usable(jobs.size(), 0);
  ParallelFor(jobs.size(), cfg.num_threads, [&](size_t j) {
    Rng rng(job_seed(jobs[j]));
    usable[j] = !PrepareJob(model, cfg, jobs[j], rng).cells.empty();
  });
  const int contributing =
      static_cast<int>(std::count(usable.begin(), usable.end(), 1));
  if (report) {
    report->jobs = static_cast<int>(jobs.size());
    report->skipped = static_cast<int>(jobs.size()) - contributing;
  }
  if (contributing == 0) {
    throw AllImagesSkipped("no training image produced samples");
  }
  const int per_job = (cfg.target_size + contributing - 1) / contributing;

  std::vector<std::vector<BufferInstance>> slots(jobs.size());
  ParallelFor(jobs.size(), cfg.num_threads, [&](size_t j) {
    if (!usable[j]) return;
    Rng rng(job_seed(jobs[j]));
    const JobCandidates prepared = PrepareJob(model, cfg, jobs[j], rng);
    const MapImage& image = model.map().Image(jobs[j].image_id);
    std::vector<BufferInstance>& out = slots[j];
    out.reserve(per_job);
    for (int i = 0; i < per_job; ++i) {
      const int cell = prepared.cells[rng.UniformInt(prepared.cells.size())];
      const Pixel y_aug = prepared.grid.CellCenter(cell);
      const Pixel y = ToOriginalFrame(y_aug, image.intrinsics, prepared.k_aug,
                                      prepared.aug.rotation_deg);
      out.push_back(BufferInstance::Make(model.DescriptorAt(image.id, y), y_aug,
                                         prepared.k_aug, prepared.h_aug,
                                         image.id));
    }
  });

  TrainingBuffer buffer;
  buffer.descriptor_dim = model.descriptor_dim();
  buffer.strategy = cfg.strategy;
  buffer.rho = static_cast<float>(cfg.rho);
  buffer.seed = cfg.seed;
  buffer.instances.reserve(cfg.target_size);
  for (std::vector<BufferInstance>& slot : slots) {
    for (BufferInstance& inst : slot) {
      if (static_cast<int>(buffer.instances.size()) == cfg.target_size) break;
      buffer.instances.push_back(std::move(inst));
    }
  }
  return buffer;
}

std::string SerializeBuffer(const TrainingBuffer& buffer) {
  ByteWriter w;
  w.Bytes(kBufferMagic);
  w.U32(static_cast<uint32_t>(buffer.descriptor_dim));
  w.U64(buffer.instances.size());
  w.U8(static_cast<uint8_t>(buffer.strategy));
  w.F32(buffer.rho);
  w.U64(buffer.seed);
  for (const BufferInstance& inst : buffer.instances) {
    if (inst.descriptor.size() != buffer.descriptor_dim) {
      throw DimMismatch("buffer instance descriptor has wrong dimension");
    }
    for (int i = 0; i < buffer.descriptor_dim; ++i) w.F32(inst.descriptor[i]);
    w.F32(inst.pixel[0]);
    w.F32(inst.pixel[1]);
    for (int i = 0; i < 4; ++i) w.F32(inst.intrinsics[i]);
    for (int i = 0; i < 7; ++i) w.F32(inst.pose[i]);
    w.U32(inst.image_id);
  }
  return w.Release();
}

TrainingBuffer DeserializeBuffer(const std::string& bytes) {
  ByteReader r(bytes);
  if (r.Bytes(kBufferMagic.size()) != kBufferMagic) {
    throw ParseError(0, "not a buffer file (bad magic)");
  }
  TrainingBuffer buffer;
  buffer.descriptor_dim = static_cast<int>(r.U32());
  const uint64_t count = r.U64();
  const uint8_t tag = r.U8();
  if (tag > 1) {
    throw ParseError(0, "unknown strategy tag " + std::to_string(tag));
  }
  buffer.strategy = static_cast<SamplingStrategy>(tag);
  buffer.rho = r.F32();
  buffer.seed = r.U64();
  const uint64_t record = 4ULL * (buffer.descriptor_dim + 2 + 4 + 7 + 1);
  if (buffer.descriptor_dim < 1 || r.remaining() != count * record) {
    throw ParseError(0, "buffer size does not match its header");
  }
  buffer.instances.resize(count);
  for (BufferInstance& inst : buffer.instances) {
    inst.descriptor.resize(buffer.descriptor_dim);
    for (int i = 0; i < buffer.descriptor_dim; ++i) inst.descriptor[i] = r.F32();
    inst.pixel[0] = r.F32();
    inst.pixel[1] = r.F32();
    for (int i = 0; i < 4; ++i) inst.intrinsics[i] = r.F32();
    for (int i = 0; i < 7; ++i) inst.pose[i] = r.F32();
    inst.image_id = r.U32();
  }
  return buffer;
}

void WriteBuffer(const TrainingBuffer& buffer, const std::string& path) {
  WriteFileBytes(path, SerializeBuffer(buffer));
}

TrainingBuffer ReadBuffer(const std::string& path) {
  return DeserializeBuffer(ReadFileBytes(path));
}

}  // namespace scrfocus
