#include "scrfocus/localizer.h"

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include "scrfocus/errors.h"
#include "test_util.h"

namespace scrfocus {
namespace {

double TranslationError(const Pose& a, const Pose& b) {
  return (a.translation - b.translation).norm();
}

Correspondence Observe(const ScenePoint& x, const CameraIntrinsics& k,
                       const Pose& h) {
  return {*Project(x, k, h), x};
}

struct Problem {
  CameraIntrinsics k;
  Pose truth;
  std::vector<Correspondence> correspondences;
};

// Correspondences whose scene points project inside the frame; the first
// n_outliers have their scene points replaced with random ones.
Problem MakeProblem(Rng& rng, int n, int n_outliers) {
  Problem p;
  p.k = testing::RandomIntrinsics(rng);
  p.truth = testing::RandomPose(rng);
  while (static_cast<int>(p.correspondences.size()) < n) {
    const ScenePoint x = testing::PointInFront(rng, p.truth, 1.0, 8.0);
    const auto y = Project(x, p.k, p.truth);
    if (!y || !p.k.Contains(*y)) continue;
    p.correspondences.push_back({*y, x});
  }
  for (int i = 0; i < n_outliers; ++i) {
    p.correspondences[i].scene =
        p.truth.translation + Eigen::Vector3d(rng.Uniform(-8, 8),
                                              rng.Uniform(-8, 8),
                                              rng.Uniform(-8, 8));
  }
  return p;
}

Pose Perturb(const Pose& h, double angle_deg, double distance, Rng& rng) {
  Eigen::Vector3d axis(rng.Normal(), rng.Normal(), rng.Normal());
  Eigen::Vector3d dir(rng.Normal(), rng.Normal(), rng.Normal());
  const Eigen::Quaterniond dq(
      Eigen::AngleAxisd(angle_deg * std::numbers::pi / 180.0, axis.normalized()));
  return Pose(dq * h.rotation, h.translation + distance * dir.normalized());
}

TEST(P3P, RecoversTruePose) {
  Rng rng(1);
  int recovered = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Problem p = MakeProblem(rng, 3, 0);
    std::vector<Pose> candidates;
    try {
      candidates = P3PMinimal(p.correspondences[0], p.correspondences[1],
                              p.correspondences[2], p.k);
    } catch (const DegenerateSample&) {
      continue;
    }
    ASSERT_LE(candidates.size(), 4u);
    bool found = false;
    for (size_t i = 0; i < candidates.size(); ++i) {
      const Pose& c = candidates[i];
      EXPECT_GE(c.rotation.w(), 0.0);
      for (const Correspondence& corr : p.correspondences) {
        const auto y = Project(corr.scene, p.k, c);
        ASSERT_TRUE(y.has_value());
        EXPECT_LE((*y - corr.pixel).norm(), 1e-6);
      }
      if (i > 0) {
        const Eigen::Vector4d a = candidates[i - 1].rotation.coeffs();
        const Eigen::Vector4d b = c.rotation.coeffs();
        // coeffs() is (x, y, z, w); compare in (w, x, y, z) order.
        const std::array<double, 4> ka = {a[3], a[0], a[1], a[2]};
        const std::array<double, 4> kb = {b[3], b[0], b[1], b[2]};
        EXPECT_LE(ka, kb);
      }
      found |= RotationAngleBetween(c, p.truth) < 1e-6 &&
               TranslationError(c, p.truth) < 1e-6 * (1 + p.truth.translation.norm());
    }
    recovered += found;
  }
  EXPECT_GE(recovered, 990);
}

TEST(P3P, DegenerateSamples) {
  CameraIntrinsics k;
  k.width = 640;
  k.height = 480;
  k.fx = k.fy = 500;
  k.cx = 320;
  k.cy = 240;
  const Pose h;
  const Correspondence a = Observe(ScenePoint(0, 0, 4), k, h);
  const Correspondence b = Observe(ScenePoint(1, 1, 5), k, h);
  const Correspondence c = Observe(ScenePoint(2, 2, 6), k, h);
  EXPECT_THROW(P3PMinimal(a, b, c, k), DegenerateSample);
  const Correspondence d = Observe(ScenePoint(-1, 0.5, 4), k, h);
  EXPECT_THROW(P3PMinimal(a, a, d, k), DegenerateSample);
  EXPECT_NO_THROW(P3PMinimal(a, b, d, k));
}

TEST(RefinePose, TruthIsAFixedPoint) {
  Rng rng(2);
  const Problem p = MakeProblem(rng, 30, 0);
  const RefineResult r = RefinePose(p.truth, p.correspondences, p.k);
  EXPECT_LT(RotationAngleBetween(r.pose, p.truth), 1e-9);
  EXPECT_LT(TranslationError(r.pose, p.truth), 1e-9);
  ASSERT_FALSE(r.cost_history.empty());
  EXPECT_LT(r.cost_history.front(), 1e-12);
}

TEST(RefinePose, RecoversFromSmallPerturbation) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Problem p = MakeProblem(rng, 40, 0);
    const Pose start = Perturb(p.truth, 1.0, 0.05, rng);
    const RefineResult r = RefinePose(start, p.correspondences, p.k);
    EXPECT_LT(RotationAngleBetween(r.pose, p.truth), 1e-6);
    EXPECT_LT(TranslationError(r.pose, p.truth), 1e-6);
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.iterations, 100);
    for (size_t i = 1; i < r.cost_history.size(); ++i) {
      EXPECT_LE(r.cost_history[i], r.cost_history[i - 1]);
    }
  }
}

TEST(RefinePose, NeedsFourCorrespondences) {
  Rng rng(4);
  const Problem p = MakeProblem(rng, 3, 0);
  EXPECT_THROW(RefinePose(p.truth, p.correspondences, p.k),
               NotEnoughCorrespondences);
}

TEST(ClassifyInliers, MonotoneInThreshold) {
  Rng rng(5);
  const Problem p = MakeProblem(rng, 200, 0);
  const Pose off = Perturb(p.truth, 0.5, 0.02, rng);
  size_t previous = 0;
  for (const double tau : {0.5, 1.0, 2.0, 5.0, 10.0, 50.0, 1e4}) {
    double mean = 0.0;
    const std::vector<int> inliers =
        ClassifyInliers(off, p.correspondences, p.k, tau, &mean);
    EXPECT_GE(inliers.size(), previous);
    previous = inliers.size();
    double sum = 0.0;
    for (const int i : inliers) {
      const double e =
          (*Project(p.correspondences[i].scene, p.k, off) - p.correspondences[i].pixel)
              .norm();
      EXPECT_LT(e, tau);
      sum += e;
    }
    if (!inliers.empty()) {
      EXPECT_NEAR(mean, sum / inliers.size(), 1e-9);
    }
  }
  EXPECT_EQ(previous, 200u);
}

TEST(Ransac, ExactCorrespondences) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const Problem p = MakeProblem(rng, 100, 0);
    RansacConfig cfg;
    cfg.seed = trial;
    const LocalizationResult r = RansacLocalize(p.correspondences, p.k, cfg);
    EXPECT_EQ(r.inlier_count, 100);
    EXPECT_LT(RotationAngleBetween(r.pose, p.truth) * 180 / std::numbers::pi, 1e-6);
    EXPECT_LT(TranslationError(r.pose, p.truth), 1e-6);
    EXPECT_GE(r.hypothesis_index, 0);
  }
}

TEST(Ransac, HalfOutliers) {
  Rng rng(7);
  int successes = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Problem p = MakeProblem(rng, 100, 50);
    for (int i = 50; i < 100; ++i) {
      p.correspondences[i].pixel += 0.5 * Pixel(rng.Normal(), rng.Normal());
    }
    RansacConfig cfg;
    cfg.seed = 100 + trial;
    try {
      const LocalizationResult r = RansacLocalize(p.correspondences, p.k, cfg);
      successes += RotationAngleBetween(r.pose, p.truth) * 180 / std::numbers::pi < 5 &&
                   TranslationError(r.pose, p.truth) < 0.05;
    } catch (const LocalizationFailed&) {
    }
  }
  EXPECT_GE(successes, 99);
}

TEST(Ransac, Deterministic) {
  Rng rng(8);
  const Problem p = MakeProblem(rng, 80, 40);
  RansacConfig cfg;
  cfg.seed = 42;
  const LocalizationResult a = RansacLocalize(p.correspondences, p.k, cfg);
  const LocalizationResult b = RansacLocalize(p.correspondences, p.k, cfg);
  EXPECT_EQ(a.pose.rotation.coeffs(), b.pose.rotation.coeffs());
  EXPECT_EQ(a.pose.translation, b.pose.translation);
  EXPECT_EQ(a.inlier_count, b.inlier_count);
  EXPECT_EQ(a.hypothesis_index, b.hypothesis_index);
}

TEST(Ransac, FailureModes) {
  Rng rng(9);
  Problem p = MakeProblem(rng, 3, 0);
  EXPECT_THROW(RansacLocalize(p.correspondences, p.k, RansacConfig()),
               NotEnoughCorrespondences);
  p = MakeProblem(rng, 60, 60);
  RansacConfig cfg;
  cfg.inlier_threshold = 0.5;
  cfg.min_inliers = 20;
  EXPECT_THROW(RansacLocalize(p.correspondences, p.k, cfg), LocalizationFailed);
}

// Head that maps a 3-vector descriptor x to A x + b (valid while
// A x + 10 stays positive elementwise).
ScrHead AffineHead(const Eigen::Matrix3f& a, const Eigen::Vector3f& b) {
  ScrHead head = ScrHead::Zeros({3, 3, 3}, Eigen::Vector3d::Zero());
  head.weights[0] = a;
  head.biases[0] = Eigen::Vector3f::Constant(10.0f);
  head.weights[1] = Eigen::Matrix3f::Identity();
  head.biases[1] = b - Eigen::Vector3f::Constant(10.0f);
  return head;
}

struct EnsembleProblem {
  Problem problem;
  std::vector<Pixel> pixels;
  Eigen::MatrixXf descriptors;
};

EnsembleProblem MakeEnsembleProblem(Rng& rng) {
  EnsembleProblem e;
  for (;;) {
    e.problem = MakeProblem(rng, 80, 0);
    bool small = true;
    for (const Correspondence& c : e.problem.correspondences) {
      small &= c.scene.cwiseAbs().maxCoeff() < 9.0;
    }
    if (small) break;
  }
  e.descriptors.resize(3, 80);
  for (int i = 0; i < 80; ++i) {
    e.pixels.push_back(e.problem.correspondences[i].pixel);
    e.descriptors.col(i) = e.problem.correspondences[i].scene.cast<float>();
  }
  return e;
}

TEST(Ensemble, SingleHeadMatchesRansac) {
  Rng rng(10);
  const EnsembleProblem e = MakeEnsembleProblem(rng);
  const std::vector<ScrHead> heads = {
      AffineHead(Eigen::Matrix3f::Identity(), Eigen::Vector3f::Zero())};
  RansacConfig cfg;
  cfg.seed = 3;
  const EnsembleResult r =
      EnsembleLocalize(heads, e.pixels, e.descriptors, e.problem.k, cfg);
  const Eigen::MatrixXf predicted = PredictBatch(heads[0], e.descriptors);
  std::vector<Correspondence> corr;
  for (int i = 0; i < 80; ++i) {
    corr.push_back({e.pixels[i], predicted.col(i).cast<double>()});
  }
  const LocalizationResult direct = RansacLocalize(corr, e.problem.k, cfg);
  EXPECT_EQ(r.head_index, 0);
  EXPECT_EQ(r.result.inlier_count, direct.inlier_count);
  EXPECT_EQ(r.result.pose.translation, direct.pose.translation);
  EXPECT_EQ(r.result.pose.rotation.coeffs(), direct.pose.rotation.coeffs());
}

TEST(Ensemble, SelectsConsistentHead) {
  Rng rng(11);
  const EnsembleProblem e = MakeEnsembleProblem(rng);
  Eigen::Matrix3f warp;
  warp << 1.0f, 0.4f, 0.0f, -0.3f, 0.8f, 0.2f, 0.1f, 0.0f, 0.6f;
  const ScrHead good = AffineHead(Eigen::Matrix3f::Identity(), Eigen::Vector3f::Zero());
  const ScrHead bad = AffineHead(warp, Eigen::Vector3f(0.5f, -0.2f, 0.1f));
  RansacConfig cfg;
  cfg.seed = 4;
  for (const auto& [heads, expected] :
       std::vector<std::pair<std::vector<ScrHead>, int>>{
           {{good, bad}, 0}, {{bad, good}, 1}, {{bad, bad, good}, 2}}) {
    const EnsembleResult r =
        EnsembleLocalize(heads, e.pixels, e.descriptors, e.problem.k, cfg);
    EXPECT_EQ(r.head_index, expected);
    EXPECT_LT(TranslationError(r.result.pose, e.problem.truth), 1e-6);
  }
}

TEST(Ensemble, TiesGoToLowestIndex) {
  Rng rng(12);
  const EnsembleProblem e = MakeEnsembleProblem(rng);
  const ScrHead good = AffineHead(Eigen::Matrix3f::Identity(), Eigen::Vector3f::Zero());
  const std::vector<ScrHead> heads = {good, good, good};
  const EnsembleResult r =
      EnsembleLocalize(heads, e.pixels, e.descriptors, e.problem.k, RansacConfig());
  EXPECT_EQ(r.head_index, 0);
}

TEST(Ensemble, FailsOnlyWhenEveryHeadFails) {
  Rng rng(13);
  const EnsembleProblem e = MakeEnsembleProblem(rng);
  // Collapses every prediction onto one point: no pose explains it.
  const ScrHead collapsed = AffineHead(Eigen::Matrix3f::Zero(), Eigen::Vector3f(0, 0, 1));
  const ScrHead good = AffineHead(Eigen::Matrix3f::Identity(), Eigen::Vector3f::Zero());
  EXPECT_THROW(EnsembleLocalize(std::vector<ScrHead>{collapsed}, e.pixels,
                                e.descriptors, e.problem.k, RansacConfig()),
               LocalizationFailed);
  EXPECT_EQ(EnsembleLocalize(std::vector<ScrHead>{collapsed, good}, e.pixels,
                             e.descriptors, e.problem.k, RansacConfig())
                .head_index,
            1);
}

}  // namespace
}  // namespace scrfocus
