#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scrfocus/eval.h"
#include "scrfocus/localizer.h"
#include "scrfocus/observation.h"
#include "scrfocus/sampler.h"
#include "scrfocus/scr_head.h"
#include "scrfocus/synthetic.h"

namespace scrfocus {

// Query pixels for localizing one frame: every grid cell center when the
// grid has at most `cap` cells, otherwise `cap` distinct cells drawn
// uniformly with `seed`, in ascending cell order.
std::vector<Pixel> QueryPixels(const DescriptorGrid& grid, int cap,
                               uint64_t seed);

struct FrameRecord {
  int image_id = 0;
  bool success = false;
  Pose estimate;
  int inliers = 0;
  double mean_inlier_error = 0.0;
  int head_index = -1;
  PoseError error;
};

// Localizes each image with the ensemble and compares against the map's
// ground-truth poses. Per-frame RANSAC and query seeds derive from
// (cfg.seed, image id).
SequenceResult LocalizeImages(std::span<const ScrHead> heads,
                              const ObservationModel& model,
                              const std::vector<int>& image_ids,
                              const RansacConfig& cfg, int query_cap,
                              std::vector<FrameRecord>* records = nullptr);

// Synthetic multi-sequence experiment. Every run of the suite with equal
// configuration reproduces its results bit for bit.
struct SuiteConfig {
  SynthConfig scene;  // rng_seed is replaced per sequence
  int sequences = 2;
  BufferConfig buffer;  // strategy, rho and seed are set per run
  TrainConfig train;    // seed is set per sequence
  RansacConfig ransac;  // seed is set per sequence
  int query_cap = 4096;
  uint64_t seed = 0;

  // Scene config of sequence s.
  SynthConfig SequenceScene(int s) const;
  std::string SequenceName(int s) const;
  // Seeds shared by every run on sequence s, whatever the strategy.
  uint64_t BufferSeed(int s) const;
  uint64_t TrainSeed(int s) const;
  uint64_t LocalizeSeed(int s) const;
};

// Desk-scale default profile.
SuiteConfig DefaultSuite();

struct RunOutcome {
  ReportRow row;
  ScrHead head;
  TrainReport train;
  ReprojectionStats reprojection;
  SequenceResult result;
  BufferReport buffer;
};

// Builds a buffer with the given strategy and radius on sequence s, trains
// a head, measures buffer reprojection statistics and localizes the
// sequence's held-out frames.
RunOutcome RunSequence(const SuiteConfig& cfg, const SyntheticScene& scene,
                       int s, SamplingStrategy strategy, double rho,
                       TrainingBuffer* buffer_out = nullptr);

// Fills a report row from a trained head.
ReportRow EvaluateHead(const std::string& sequence, double rho,
                       SamplingStrategy strategy,
                       const ReprojectionStats& reprojection,
                       const SequenceResult& result);

struct AblationResult {
  std::vector<double> radii;
  std::vector<ReportRow> rows;  // sequence-major, one per (sequence, radius)
  std::vector<std::vector<double>> median_trans;  // [sequence][radius]
  AblationScores scores;
};

// Focus runs over the radii on every sequence, aggregated by
// RhoAblationAggregate over median translation errors.
AblationResult RunAblation(const SuiteConfig& cfg,
                           const std::vector<double>& radii);

struct CompareResult {
  std::vector<ReportRow> rows;  // per sequence: focus row, then random row
  double pooled_trans_focus = 0.0;
  double pooled_trans_random = 0.0;
};

// Focus (at cfg.buffer.rho) against random sampling with identical scenes,
// seeds and training budget. Pooled values are medians of the translation
// errors over all sequences' successful frames.
CompareResult RunCompare(const SuiteConfig& cfg);

}  // namespace scrfocus
