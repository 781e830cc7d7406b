#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "scrfocus/geometry.h"
#include "scrfocus/scr_head.h"

namespace scrfocus {

struct Correspondence {
  Pixel pixel = Pixel::Zero();
  ScenePoint scene = ScenePoint::Zero();
};

struct RansacConfig {
  int max_hypotheses = 256;    // minimal samples drawn
  double inlier_threshold = 10.0;  // L2 pixels
  int refinement_rounds = 8;
  int min_inliers = 6;
  uint64_t seed = 0;
};

struct LocalizationResult {
  Pose pose;  // camera-to-world
  int inlier_count = 0;
  double mean_inlier_error = 0.0;  // pixels
  int hypothesis_index = -1;
};

// Minimal absolute pose from three correspondences (Grunert's quartic,
// root-polished). Candidates reproject all three points within 1e-6 px and
// are sorted by quaternion (w >= 0) in lexicographic (w, x, y, z) order.
// Throws DegenerateSample for (near-)collinear scene points or repeated
// pixels.
std::vector<Pose> P3PMinimal(const Correspondence& c1, const Correspondence& c2,
                             const Correspondence& c3,
                             const CameraIntrinsics& k);

struct RefineResult {
  Pose pose;
  bool converged = false;
  int iterations = 0;
  // Sum of squared pixel residuals after each accepted step, starting with
  // the input pose; non-increasing.
  std::vector<double> cost_history;
};

// Levenberg-Marquardt on the summed squared reprojection error over a
// 6-dof local update, at most 100 iterations. Returns the input pose
// unchanged (converged = false) when no valid step exists.
// Throws NotEnoughCorrespondences for fewer than 4 correspondences.
RefineResult RefinePose(const Pose& pose,
                        std::span<const Correspondence> correspondences,
                        const CameraIntrinsics& k);

// Indices of correspondences with L2 reprojection error < threshold.
std::vector<int> ClassifyInliers(const Pose& pose,
                                 std::span<const Correspondence> correspondences,
                                 const CameraIntrinsics& k, double threshold,
                                 double* mean_error = nullptr);

// Seeded RANSAC over P3P hypotheses, ranked by (inlier count desc, mean
// inlier error asc, hypothesis index asc), followed by refinement rounds
// on the inlier set. Throws NotEnoughCorrespondences (< 4) and
// LocalizationFailed (best inlier count < min_inliers).
LocalizationResult RansacLocalize(std::span<const Correspondence> correspondences,
                                  const CameraIntrinsics& k,
                                  const RansacConfig& cfg);

struct EnsembleResult {
  LocalizationResult result;
  int head_index = -1;
};

// Predicts scene coordinates for the shared query pixels with every head,
// localizes each, and keeps the result ranked by (inlier count desc, mean
// inlier error asc, head index asc). `descriptors` is D x N, one column per
// pixel. Throws LocalizationFailed only if every head fails.
EnsembleResult EnsembleLocalize(std::span<const ScrHead> heads,
                                std::span<const Pixel> pixels,
                                const Eigen::MatrixXf& descriptors,
                                const CameraIntrinsics& k,
                                const RansacConfig& cfg);

}  // namespace scrfocus
