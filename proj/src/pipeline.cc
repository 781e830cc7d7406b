#include "scrfocus/pipeline.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "scrfocus/errors.h"
#include "scrfocus/random.h"

namespace scrfocus {
namespace {

constexpr uint64_t kSequenceStream = 0x5e9;
constexpr uint64_t kBufferStream = 0xb0f;
constexpr uint64_t kTrainStream = 0x7a1;
constexpr uint64_t kLocalizeStream = 0x10c;
constexpr uint64_t kQueryStream = 0x9e7;

}  // namespace

std::vector<Pixel> QueryPixels(const DescriptorGrid& grid, int cap,
                               uint64_t seed) {
  if (cap < 1) throw InvalidArgument("query cap must be >= 1");
  std::vector<int> cells(grid.size());
  for (int i = 0; i < grid.size(); ++i) cells[i] = i;
  if (grid.size() > cap) {
    Rng rng(seed);
    for (int i = 0; i < cap; ++i) {
      const int j = i + static_cast<int>(rng.UniformInt(cells.size() - i));
      std::swap(cells[i], cells[j]);
    }
    cells.resize(cap);
    std::sort(cells.begin(), cells.end());
  }
  std::vector<Pixel> pixels;
  pixels.reserve(cells.size());
  for (const int c : cells) pixels.push_back(grid.CellCenter(c));
  return pixels;
}

SequenceResult LocalizeImages(std::span<const ScrHead> heads,
                              const ObservationModel& model,
                              const std::vector<int>& image_ids,
                              const RansacConfig& cfg, int query_cap,
                              std::vector<FrameRecord>* records) {
  SequenceResult result;
  for (const int id : image_ids) {
    const MapImage& image = model.map().Image(id);
    const uint64_t frame_seed = HashSeed({cfg.seed, static_cast<uint64_t>(id)});
    const std::vector<Pixel> pixels = QueryPixels(
        model.Grid(id), query_cap, HashSeed({frame_seed, kQueryStream}));
    const std::vector<Descriptor> descriptors = model.ObservationsFor(id, pixels);
    Eigen::MatrixXf batch(model.descriptor_dim(),
                          static_cast<Eigen::Index>(pixels.size()));
    for (size_t i = 0; i < descriptors.size(); ++i) {
      batch.col(static_cast<Eigen::Index>(i)) = descriptors[i];
    }
    RansacConfig frame_cfg = cfg;
    frame_cfg.seed = frame_seed;
    FrameRecord record;
    record.image_id = id;
    try {
      const EnsembleResult r =
          EnsembleLocalize(heads, pixels, batch, image.intrinsics, frame_cfg);
      record.success = true;
      record.estimate = r.result.pose;
      record.inliers = r.result.inlier_count;
      record.mean_inlier_error = r.result.mean_inlier_error;
      record.head_index = r.head_index;
      record.error = ComputePoseError(r.result.pose, image.pose);
      result.errors.push_back(record.error);
    } catch (const LocalizationFailed&) {
      ++result.failures;
    } catch (const NotEnoughCorrespondences&) {
      ++result.failures;
    }
    if (records) records->push_back(record);
  }
  return result;
}

SynthConfig SuiteConfig::SequenceScene(int s) const {
  SynthConfig out = scene;
  out.rng_seed = HashSeed({seed, kSequenceStream, static_cast<uint64_t>(s)});
  return out;
}

std::string SuiteConfig::SequenceName(int s) const {
  return "seq" + std::to_string(s);
}

uint64_t SuiteConfig::BufferSeed(int s) const {
  return HashSeed({seed, kBufferStream, static_cast<uint64_t>(s)});
}

uint64_t SuiteConfig::TrainSeed(int s) const {
  return HashSeed({seed, kTrainStream, static_cast<uint64_t>(s)});
}

uint64_t SuiteConfig::LocalizeSeed(int s) const {
  return HashSeed({seed, kLocalizeStream, static_cast<uint64_t>(s)});
}

SuiteConfig DefaultSuite() {
  SuiteConfig cfg;
  // Small frames keep the distinctive structure a large share of every
  // query grid, so RANSAC with the default hypothesis budget succeeds.
  cfg.scene.width = 160;
  cfg.scene.height = 120;
  cfg.scene.focal = 150.0;
  // A 100k buffer at batch 5120 allows only ~20 steps per pass.
  cfg.train.batch_size = 512;
  cfg.train.peak_lr = 1e-2;
  return cfg;
}

ReportRow EvaluateHead(const std::string& sequence, double rho,
                       SamplingStrategy strategy,
                       const ReprojectionStats& reprojection,
                       const SequenceResult& result) {
  ReportRow row;
  row.sequence = sequence;
  row.rho = strategy == SamplingStrategy::kFocus
                ? rho
                : std::numeric_limits<double>::quiet_NaN();
  row.strategy = StrategyName(strategy);
  row.median_rot_deg = row.median_trans = std::numeric_limits<double>::quiet_NaN();
  if (!result.errors.empty()) {
    const auto [rot, trans] = MedianErrors(result);
    row.median_rot_deg = rot;
    row.median_trans = trans;
  }
  row.accuracy = result.frames() > 0 ? Accuracy(result) : 0.0;
  row.mean_reproj_px = reprojection.mean;
  row.median_reproj_px = reprojection.median;
  row.frames = result.frames();
  row.failures = result.failures;
  return row;
}

RunOutcome RunSequence(const SuiteConfig& cfg, const SyntheticScene& scene,
                       int s, SamplingStrategy strategy, double rho,
                       TrainingBuffer* buffer_out) {
  const ObservationModel model(scene.world, scene.map);
  BufferConfig bc = cfg.buffer;
  bc.strategy = strategy;
  bc.rho = rho;
  bc.seed = cfg.BufferSeed(s);
  RunOutcome out;
  TrainingBuffer buffer = BuildBuffer(model, bc, &out.buffer);

  TrainConfig tc = cfg.train;
  tc.seed = cfg.TrainSeed(s);
  out.head = Train(buffer, scene.map.scene_center(), tc, &out.train);
  out.reprojection = BufferReprojectionStats(out.head, buffer);

  RansacConfig rc = cfg.ransac;
  rc.seed = cfg.LocalizeSeed(s);
  const std::vector<ScrHead> heads = {out.head};
  out.result = LocalizeImages(heads, model, scene.map.TestImageIds(), rc,
                              cfg.query_cap);
  out.row = EvaluateHead(cfg.SequenceName(s), rho, strategy, out.reprojection,
                         out.result);
  if (buffer_out) *buffer_out = std::move(buffer);
  return out;
}

AblationResult RunAblation(const SuiteConfig& cfg,
                           const std::vector<double>& radii) {
  if (radii.empty()) throw InvalidArgument("no radii given");
  AblationResult out;
  out.radii = radii;
  for (int s = 0; s < cfg.sequences; ++s) {
    const SyntheticScene scene = GenerateSynthetic(cfg.SequenceScene(s));
    std::vector<double> trans;
    for (const double rho : radii) {
      const RunOutcome run =
          RunSequence(cfg, scene, s, SamplingStrategy::kFocus, rho);
      if (run.result.errors.empty()) {
        throw NoSuccessfulFrames(cfg.SequenceName(s) + " at radius " +
                                 std::to_string(rho) +
                                 " localized no held-out frame");
      }
      out.rows.push_back(run.row);
      trans.push_back(run.row.median_trans);
    }
    out.median_trans.push_back(std::move(trans));
  }
  out.scores = RhoAblationAggregate(out.median_trans);
  return out;
}

CompareResult RunCompare(const SuiteConfig& cfg) {
  CompareResult out;
  std::vector<double> focus;
  std::vector<double> random;
  for (int s = 0; s < cfg.sequences; ++s) {
    const SyntheticScene scene = GenerateSynthetic(cfg.SequenceScene(s));
    for (const SamplingStrategy strategy :
         {SamplingStrategy::kFocus, SamplingStrategy::kRandom}) {
      const RunOutcome run =
          RunSequence(cfg, scene, s, strategy, cfg.buffer.rho);
      out.rows.push_back(run.row);
      std::vector<double>& pooled =
          strategy == SamplingStrategy::kFocus ? focus : random;
      for (const PoseError& e : run.result.errors) pooled.push_back(e.translation);
    }
  }
  const double inf = std::numeric_limits<double>::infinity();
  out.pooled_trans_focus = focus.empty() ? inf : Median(focus);
  out.pooled_trans_random = random.empty() ? inf : Median(random);
  return out;
}

}  // namespace scrfocus
