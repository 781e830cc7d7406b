#include "scrfocus/eval.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "scrfocus/errors.h"
#include "test_util.h"

namespace scrfocus {
namespace {

TEST(PoseError, HalfTurnAboutZ) {
  const Pose gt;
  const Pose est(Eigen::Quaterniond(0, 0, 0, 1), Eigen::Vector3d::Zero());
  const PoseError e = ComputePoseError(est, gt);
  EXPECT_NEAR(e.rotation_deg, 180.0, 1e-9);
  EXPECT_EQ(e.translation, 0.0);
}

TEST(PoseError, ThreeFourFive) {
  const Pose gt;
  const Pose est(Eigen::Quaterniond::Identity(), Eigen::Vector3d(0.03, 0.04, 0));
  const PoseError e = ComputePoseError(est, gt);
  EXPECT_NEAR(e.translation, 0.05, 1e-15);
  EXPECT_EQ(e.rotation_deg, 0.0);
}

TEST(PoseError, SymmetricAndRigidInvariant) {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const Pose a = testing::RandomPose(rng);
    const Pose b = testing::RandomPose(rng);
    const Pose w = testing::RandomPose(rng);
    const PoseError ab = ComputePoseError(a, b);
    const PoseError ba = ComputePoseError(b, a);
    EXPECT_NEAR(ab.rotation_deg, ba.rotation_deg, 1e-9);
    EXPECT_NEAR(ab.translation, ba.translation, 1e-12);
    const PoseError moved = ComputePoseError(Compose(w, a), Compose(w, b));
    EXPECT_NEAR(moved.rotation_deg, ab.rotation_deg, 1e-7);
    EXPECT_NEAR(moved.translation, ab.translation, 1e-9);
    // Trace formula as an independent reference.
    const Eigen::Matrix3d r = a.RotationMatrix().transpose() * b.RotationMatrix();
    const double cosine = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
    EXPECT_NEAR(ab.rotation_deg, std::acos(cosine) * 180.0 / std::numbers::pi,
                1e-5);
    EXPECT_GE(ab.rotation_deg, 0.0);
    EXPECT_LE(ab.rotation_deg, 180.0);
  }
}

TEST(Median, SmallLists) {
  EXPECT_EQ(Median({1, 2, 3}), 2.0);
  EXPECT_EQ(Median({1, 2, 3, 4}), 2.5);
  EXPECT_EQ(Median({3, 1, 2}), 2.0);
  EXPECT_EQ(Median({7}), 7.0);
  EXPECT_THROW(Median({}), InvalidArgument);
}

TEST(Median, MatchesSortOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> v(1 + rng.UniformInt(50));
    for (double& x : v) x = rng.Uniform(-10, 10);
    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    const size_t n = sorted.size();
    const double want =
        n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    EXPECT_EQ(Median(v), want);
  }
}

TEST(SequenceMetrics, MediansAndAccuracy) {
  SequenceResult r;
  r.errors = {{1.0, 0.01}, {10.0, 0.02}, {2.0, 0.10}, {3.0, 0.03}};
  r.failures = 1;
  EXPECT_EQ(r.frames(), 5);
  const auto [rot, trans] = MedianErrors(r);
  EXPECT_EQ(rot, 2.5);
  EXPECT_NEAR(trans, 0.025, 1e-15);
  // Frames 0 and 3 pass both thresholds; the failure counts against.
  EXPECT_NEAR(Accuracy(r), 2.0 / 5.0, 1e-15);
  EXPECT_NEAR(Accuracy(r, 20.0, 1.0), 4.0 / 5.0, 1e-15);

  SequenceResult failed;
  failed.failures = 3;
  EXPECT_THROW(MedianErrors(failed), NoSuccessfulFrames);
  EXPECT_EQ(Accuracy(failed), 0.0);
  EXPECT_THROW(Accuracy(SequenceResult()), InvalidArgument);
}

TrainingBuffer PixelBuffer(const std::vector<Pixel>& pixels) {
  CameraIntrinsics k;
  k.width = 160;
  k.height = 120;
  k.fx = k.fy = 100;
  k.cx = 80;
  k.cy = 60;
  TrainingBuffer buffer;
  buffer.descriptor_dim = 4;
  for (const Pixel& y : pixels) {
    buffer.instances.push_back(
        BufferInstance::Make(Descriptor::Zero(4), y, k, Pose(), 0));
  }
  return buffer;
}

TEST(Reprojection, KnownErrors) {
  // The constant prediction (0, 0, 5) projects to the principal point.
  const ScrHead head = ScrHead::Zeros({4, 4, 3}, Eigen::Vector3d(0, 0, 5));
  const TrainingBuffer buffer =
      PixelBuffer({Pixel(81, 60), Pixel(81, 61), Pixel(85, 56)});
  const std::vector<double> errors = BufferReprojectionErrors(head, buffer);
  ASSERT_EQ(errors.size(), 3u);
  EXPECT_NEAR(errors[0], 1.0, 1e-9);
  EXPECT_NEAR(errors[1], 2.0, 1e-9);
  EXPECT_NEAR(errors[2], 9.0, 1e-9);
  const ReprojectionStats stats = BufferReprojectionStats(head, buffer);
  EXPECT_NEAR(stats.mean, 4.0, 1e-9);
  EXPECT_NEAR(stats.median, 2.0, 1e-9);
  EXPECT_THROW(BufferReprojectionStats(head, TrainingBuffer()), InvalidArgument);
}

TEST(Reprojection, BehindCameraCountsAsDiagonal) {
  const ScrHead head = ScrHead::Zeros({4, 4, 3}, Eigen::Vector3d(0, 0, -5));
  const std::vector<double> errors =
      BufferReprojectionErrors(head, PixelBuffer({Pixel(10, 10)}));
  ASSERT_EQ(errors.size(), 1u);
  EXPECT_NEAR(errors[0], 200.0, 1e-9);
}

TEST(Aggregate, KnownScores) {
  const AblationScores s = RhoAblationAggregate({{2, 4}, {3, 3}});
  ASSERT_EQ(s.scores.size(), 2u);
  EXPECT_NEAR(s.scores[0], 1.0, 1e-15);
  EXPECT_NEAR(s.scores[1], 2.0, 1e-15);
  EXPECT_EQ(s.argmin, 0);
  // Sample std of {2, 1} is 1/sqrt(2).
  const AblationScores sample = RhoAblationAggregate({{2, 4}, {3, 3}}, true);
  EXPECT_NEAR(sample.scores[1], 1.5 + std::sqrt(0.5), 1e-12);
}

TEST(Aggregate, RowScalingInvariance) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<double>> errors(3, std::vector<double>(5));
    for (auto& row : errors) {
      for (double& e : row) e = rng.Uniform(0.01, 1.0);
    }
    const AblationScores base = RhoAblationAggregate(errors);
    for (auto& row : errors) {
      const double c = rng.Uniform(0.1, 10.0);
      for (double& e : row) e *= c;
    }
    const AblationScores scaled = RhoAblationAggregate(errors);
    EXPECT_EQ(scaled.argmin, base.argmin);
    for (size_t i = 0; i < base.scores.size(); ++i) {
      EXPECT_NEAR(scaled.scores[i], base.scores[i], 1e-12);
      EXPECT_GE(base.scores[i], 1.0 - 1e-15);
    }
  }
}

TEST(Aggregate, TiesAndErrors) {
  EXPECT_EQ(RhoAblationAggregate({{1, 1, 1}}).argmin, 0);
  EXPECT_EQ(RhoAblationAggregate({{2, 1, 1}}).argmin, 1);
  EXPECT_THROW(RhoAblationAggregate({}), InvalidArgument);
  EXPECT_THROW(RhoAblationAggregate({{1, 2}, {1}}), InvalidArgument);
  EXPECT_THROW(RhoAblationAggregate({{1, 0}}), InvalidArgument);
  EXPECT_THROW(RhoAblationAggregate({{1, NAN}}), InvalidArgument);
}

std::vector<ReportRow> SampleRows() {
  ReportRow a;
  a.sequence = "seq0";
  a.rho = 5;
  a.strategy = "focus";
  a.median_rot_deg = 1.25;
  a.median_trans = 0.0123456789;
  a.accuracy = 0.4;
  a.mean_reproj_px = 3.5;
  a.median_reproj_px = 2.75;
  a.frames = 20;
  a.failures = 1;
  ReportRow b = a;
  b.strategy = "random";
  b.rho = NAN;
  b.median_rot_deg = NAN;
  b.median_trans = NAN;
  b.accuracy = 0;
  b.failures = 20;
  return {a, b};
}

TEST(Report, CsvRoundTrip) {
  const std::vector<ReportRow> rows = SampleRows();
  const std::string csv = FormatReportCsv(rows, {7, "00112233aabbccdd"});
  EXPECT_NE(csv.find(kReportHeader), std::string::npos);
  EXPECT_NE(csv.find("# seed: 7"), std::string::npos);
  EXPECT_NE(csv.find("nan"), std::string::npos);
  ReportMeta meta;
  const std::vector<ReportRow> back = ParseReportCsv(csv, &meta);
  EXPECT_EQ(meta.seed, 7u);
  EXPECT_EQ(meta.config_hash, "00112233aabbccdd");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].sequence, "seq0");
  EXPECT_EQ(back[0].median_trans, rows[0].median_trans);
  EXPECT_EQ(back[0].frames, 20);
  EXPECT_TRUE(std::isnan(back[1].median_trans));
  EXPECT_TRUE(std::isnan(back[1].rho));
  EXPECT_EQ(back[1].failures, 20);
  EXPECT_EQ(FormatReportCsv(back, meta), csv);
}

TEST(Report, JsonFields) {
  const nlohmann::json j =
      nlohmann::json::parse(FormatReportJson(SampleRows(), {3, "abcd"}));
  EXPECT_EQ(j["seed"], 3);
  EXPECT_EQ(j["config_hash"], "abcd");
  ASSERT_EQ(j["rows"].size(), 2u);
  EXPECT_EQ(j["rows"][0]["strategy"], "focus");
  EXPECT_EQ(j["rows"][0]["median_trans"].get<double>(), 0.0123456789);
  EXPECT_TRUE(j["rows"][1]["median_trans"].is_null());
  EXPECT_EQ(j["rows"][1]["failures"], 20);
}

TEST(Report, RejectsMalformedCsv) {
  EXPECT_THROW(ParseReportCsv("not,a,header\n"), ParseError);
  const std::string bad = std::string(kReportHeader) + "\nseq0,5,focus,1\n";
  EXPECT_THROW(ParseReportCsv(bad), ParseError);
}

}  // namespace
}  // namespace scrfocus
