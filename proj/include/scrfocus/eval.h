#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "scrfocus/geometry.h"
#include "scrfocus/sampler.h"
#include "scrfocus/scr_head.h"

namespace scrfocus {

struct PoseError {
  double rotation_deg = 0.0;
  double translation = 0.0;  // distance between camera centers
};

// Per-frame errors of the successful frames plus the failure count.
struct SequenceResult {
  std::vector<PoseError> errors;
  int failures = 0;

  int frames() const { return static_cast<int>(errors.size()) + failures; }
};

PoseError ComputePoseError(const Pose& est, const Pose& gt);

// Median of a non-empty list; an even count averages the two middle values.
// Throws InvalidArgument on an empty list.
double Median(std::vector<double> values);

// Componentwise medians over successful frames. Throws NoSuccessfulFrames.
std::pair<double, double> MedianErrors(const SequenceResult& result);

// Fraction of all frames (failures included) with rotation below
// rot_thresh_deg and translation below trans_thresh. Throws
// InvalidArgument when no frame was evaluated.
double Accuracy(const SequenceResult& result, double rot_thresh_deg = 5.0,
                double trans_thresh = 0.05);

struct ReprojectionStats {
  double mean = 0.0;
  double median = 0.0;
};

// Unclamped L1 reprojection error of the head's prediction for every
// buffer instance; a prediction behind the camera counts as the frame
// diagonal. Throws InvalidArgument on an empty buffer.
ReprojectionStats BufferReprojectionStats(const ScrHead& head,
                                          const TrainingBuffer& buffer);
std::vector<double> BufferReprojectionErrors(const ScrHead& head,
                                             const TrainingBuffer& buffer);

struct AblationScores {
  std::vector<double> scores;  // one per radius
  int argmin = 0;              // ties resolve to the lowest index
};

// errors[s][r]: median translation error of sequence s at radius r. Each
// row is divided by its minimum; a radius scores the mean over sequences
// plus one standard deviation (population, or sample when
// sample_std is set). Throws InvalidArgument for ragged or empty input and
// non-positive errors.
AblationScores RhoAblationAggregate(const std::vector<std::vector<double>>& errors,
                                    bool sample_std = false);

struct ReportRow {
  std::string sequence;
  double rho = 0.0;
  std::string strategy;
  double median_rot_deg = 0.0;
  double median_trans = 0.0;
  double accuracy = 0.0;
  double mean_reproj_px = 0.0;
  double median_reproj_px = 0.0;
  int frames = 0;
  int failures = 0;
};

// Identifies the run that produced a report.
struct ReportMeta {
  uint64_t seed = 0;
  std::string config_hash;
};

inline constexpr const char* kReportHeader =
    "sequence,rho,strategy,median_rot_deg,median_trans,accuracy,"
    "mean_reproj_px,median_reproj_px,frames,failures";

// CSV with '#' comment lines carrying the seed and config hash, then the
// header and one line per row. Undefined medians are written as "nan".
std::string FormatReportCsv(const std::vector<ReportRow>& rows,
                            const ReportMeta& meta);
// {"seed", "config_hash", "rows": [...]} with the same fields as the CSV;
// undefined medians are null.
std::string FormatReportJson(const std::vector<ReportRow>& rows,
                             const ReportMeta& meta);
std::vector<ReportRow> ParseReportCsv(const std::string& text,
                                      ReportMeta* meta = nullptr);

}  // namespace scrfocus
