#include "scrfocus/localizer.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <tuple>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "scrfocus/errors.h"
#include "scrfocus/random.h"

namespace scrfocus {
namespace {

constexpr double kP3PTolerancePx = 1e-6;

Eigen::Vector3d Bearing(const Pixel& y, const CameraIntrinsics& k) {
  return Eigen::Vector3d((y.x() - k.cx) / k.fx, (y.y() - k.cy) / k.fy, 1.0)
      .normalized();
}

// Real roots of a4 v^4 + ... + a0, via companion-matrix eigenvalues and
// Newton polishing.
std::vector<double> QuarticRealRoots(const std::array<double, 5>& a) {
  std::vector<double> roots;
  if (std::abs(a[4]) < 1e-14 * (std::abs(a[3]) + std::abs(a[2]) +
                                std::abs(a[1]) + std::abs(a[0]) + 1e-300)) {
    return roots;
  }
  Eigen::Matrix4d companion = Eigen::Matrix4d::Zero();
  for (int i = 0; i < 4; ++i) companion(0, i) = -a[3 - i] / a[4];
  companion(1, 0) = companion(2, 1) = companion(3, 2) = 1.0;
  const Eigen::EigenSolver<Eigen::Matrix4d> solver(companion, false);
  const auto eig = solver.eigenvalues();
  for (int i = 0; i < 4; ++i) {
    const double re = eig[i].real();
    if (std::abs(eig[i].imag()) > 1e-6 * std::max(1.0, std::abs(re))) continue;
    double v = re;
    for (int it = 0; it < 8; ++it) {
      const double f = (((a[4] * v + a[3]) * v + a[2]) * v + a[1]) * v + a[0];
      const double df = ((4 * a[4] * v + 3 * a[3]) * v + 2 * a[2]) * v + a[1];
      if (df == 0.0) break;
      v -= f / df;
    }
    roots.push_back(v);
  }
  return roots;
}

// Newton iterations on the three law-of-cosines equations for the ray
// distances s.
void PolishDistances(Eigen::Vector3d* s, const Eigen::Vector3d& cosines,
                     const Eigen::Vector3d& sq_sides) {
  // Pairs (1,2) -> gamma, (0,2) -> beta, (0,1) -> alpha-equivalents.
  static constexpr int kPairs[3][2] = {{1, 2}, {0, 2}, {0, 1}};
  for (int it = 0; it < 10; ++it) {
    Eigen::Vector3d f;
    Eigen::Matrix3d j = Eigen::Matrix3d::Zero();
    for (int e = 0; e < 3; ++e) {
      const int p = kPairs[e][0];
      const int q = kPairs[e][1];
      f[e] = (*s)[p] * (*s)[p] + (*s)[q] * (*s)[q] -
             2.0 * (*s)[p] * (*s)[q] * cosines[e] - sq_sides[e];
      j(e, p) = 2.0 * (*s)[p] - 2.0 * (*s)[q] * cosines[e];
      j(e, q) = 2.0 * (*s)[q] - 2.0 * (*s)[p] * cosines[e];
    }
    const Eigen::Vector3d step = j.fullPivLu().solve(f);
    if (!step.allFinite()) return;
    *s -= step;
    if (step.norm() < 1e-15 * s->norm()) return;
  }
}

// Camera-to-world pose aligning camera-frame points onto world points.
Pose AlignPoints(const std::array<Eigen::Vector3d, 3>& cam,
                 const std::array<Eigen::Vector3d, 3>& world) {
  const Eigen::Vector3d cam_mean = (cam[0] + cam[1] + cam[2]) / 3.0;
  const Eigen::Vector3d world_mean = (world[0] + world[1] + world[2]) / 3.0;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (int i = 0; i < 3; ++i) {
    cov += (cam[i] - cam_mean) * (world[i] - world_mean).transpose();
  }
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0
                ? -1.0
                : 1.0;
  const Eigen::Matrix3d r = svd.matrixV() * d * svd.matrixU().transpose();
  return Pose(Eigen::Quaterniond(r), world_mean - r * cam_mean);
}

Eigen::Quaterniond Canonical(const Eigen::Quaterniond& q) {
  return q.w() < 0.0 ? Eigen::Quaterniond(-q.w(), -q.x(), -q.y(), -q.z()) : q;
}

// Residuals and Jacobian with respect to a left-multiplied camera-frame
// update (rotation vector, translation). Returns false when some point is
// behind the camera.
bool Linearize(const Eigen::Matrix3d& r_cw, const Eigen::Vector3d& t_cw,
               std::span<const Correspondence> corr, const CameraIntrinsics& k,
               Eigen::VectorXd* residuals, Eigen::MatrixXd* jacobian,
               double* cost) {
  const int n = static_cast<int>(corr.size());
  if (residuals) residuals->resize(2 * n);
  if (jacobian) jacobian->resize(2 * n, 6);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d xc = r_cw * corr[i].scene + t_cw;
    if (!(xc.z() > kMinDepth)) return false;
    const double iz = 1.0 / xc.z();
    const double ru = k.fx * xc.x() * iz + k.cx - corr[i].pixel.x();
    const double rv = k.fy * xc.y() * iz + k.cy - corr[i].pixel.y();
    sum += ru * ru + rv * rv;
    if (residuals) {
      (*residuals)[2 * i] = ru;
      (*residuals)[2 * i + 1] = rv;
    }
    if (jacobian) {
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << k.fx * iz, 0.0, -k.fx * xc.x() * iz * iz, 0.0, k.fy * iz,
          -k.fy * xc.y() * iz * iz;
      Eigen::Matrix3d skew;
      skew << 0.0, -xc.z(), xc.y(), xc.z(), 0.0, -xc.x(), -xc.y(), xc.x(), 0.0;
      jacobian->block<2, 3>(2 * i, 0) = -dproj * skew;
      jacobian->block<2, 3>(2 * i, 3) = dproj;
    }
  }
  *cost = sum;
  return true;
}

struct Score {
  int inliers = 0;
  double mean_error = std::numeric_limits<double>::infinity();
  int index = std::numeric_limits<int>::max();

  bool BetterThan(const Score& o) const {
    return std::tie(o.inliers, mean_error, index) <
           std::tie(inliers, o.mean_error, o.index);
  }
};

// Inlier count and mean error with a vectorized projection.
Score ScorePose(const Pose& pose, const Eigen::Matrix3Xd& scene,
                const Eigen::Matrix2Xd& pixels, const CameraIntrinsics& k,
                double threshold) {
  const Eigen::Matrix3d r_cw = pose.RotationMatrix().transpose();
  const Eigen::Vector3d t_cw = -(r_cw * pose.translation);
  const Eigen::Matrix3Xd xc = (r_cw * scene).colwise() + t_cw;
  const double t2 = threshold * threshold;
  Score s;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < xc.cols(); ++i) {
    const double z = xc(2, i);
    if (!(z > kMinDepth)) continue;
    const double du = k.fx * xc(0, i) / z + k.cx - pixels(0, i);
    const double dv = k.fy * xc(1, i) / z + k.cy - pixels(1, i);
    const double e2 = du * du + dv * dv;
    if (e2 < t2) {
      ++s.inliers;
      sum += std::sqrt(e2);
    }
  }
  s.mean_error = s.inliers > 0 ? sum / s.inliers
                               : std::numeric_limits<double>::infinity();
  return s;
}

}  // namespace

std::vector<Pose> P3PMinimal(const Correspondence& p1, const Correspondence& p2,
                             const Correspondence& p3,
                             const CameraIntrinsics& k) {
  const std::array<Eigen::Vector3d, 3> world = {p1.scene, p2.scene, p3.scene};
  const std::array<Pixel, 3> pix = {p1.pixel, p2.pixel, p3.pixel};
  const double area =
      0.5 * (world[1] - world[0]).cross(world[2] - world[0]).norm();
  if (!(area > 1e-9)) {
    throw DegenerateSample("scene points are collinear");
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      if ((pix[i] - pix[j]).norm() < 1e-9) {
        throw DegenerateSample("repeated pixels");
      }
    }
  }
  const std::array<Eigen::Vector3d, 3> f = {Bearing(pix[0], k),
                                            Bearing(pix[1], k),
                                            Bearing(pix[2], k)};
  const double a2 = (world[1] - world[2]).squaredNorm();
  const double b2 = (world[0] - world[2]).squaredNorm();
  const double c2 = (world[0] - world[1]).squaredNorm();
  const double cos_a = f[1].dot(f[2]);
  const double cos_b = f[0].dot(f[2]);
  const double cos_g = f[0].dot(f[1]);

  // Grunert: with s2 = u s1 and s3 = v s1, eliminating u leaves a quartic
  // in v.
  const double amc = (a2 - c2) / b2;
  const double apc = (a2 + c2) / b2;
  std::array<double, 5> coeff;
  coeff[4] = (amc - 1.0) * (amc - 1.0) - 4.0 * c2 / b2 * cos_a * cos_a;
  coeff[3] = 4.0 * (amc * (1.0 - amc) * cos_b - (1.0 - apc) * cos_a * cos_g +
                    2.0 * c2 / b2 * cos_a * cos_a * cos_b);
  coeff[2] = 2.0 * (amc * amc - 1.0 + 2.0 * amc * amc * cos_b * cos_b +
                    2.0 * (b2 - c2) / b2 * cos_a * cos_a -
                    4.0 * apc * cos_a * cos_b * cos_g +
                    2.0 * (b2 - a2) / b2 * cos_g * cos_g);
  coeff[1] = 4.0 * (-amc * (1.0 + amc) * cos_b +
                    2.0 * a2 / b2 * cos_g * cos_g * cos_b -
                    (1.0 - apc) * cos_a * cos_g);
  coeff[0] = (1.0 + amc) * (1.0 + amc) - 4.0 * a2 / b2 * cos_g * cos_g;

  const Eigen::Vector3d cosines(cos_a, cos_b, cos_g);
  const Eigen::Vector3d sq_sides(a2, b2, c2);
  std::vector<Pose> candidates;
  for (const double v : QuarticRealRoots(coeff)) {
    if (!(v > 0.0)) continue;
    const double denom_b = 1.0 + v * v - 2.0 * v * cos_b;
    if (!(denom_b > 0.0)) continue;
    const double s1 = std::sqrt(b2 / denom_b);
    // u from the c-side equation: u^2 - 2u cos_g + 1 - c2/s1^2 = 0; keep
    // the root that best satisfies the a-side equation.
    const double disc = cos_g * cos_g - 1.0 + c2 / (s1 * s1);
    if (disc < -1e-9) continue;
    const double root = std::sqrt(std::max(0.0, disc));
    double best_u = 0.0;
    double best_err = std::numeric_limits<double>::infinity();
    for (const double u : {cos_g + root, cos_g - root}) {
      if (!(u > 0.0)) continue;
      const double s2 = u * s1;
      const double s3 = v * s1;
      const double err = std::abs(s2 * s2 + s3 * s3 - 2.0 * s2 * s3 * cos_a - a2);
      if (err < best_err) {
        best_err = err;
        best_u = u;
      }
    }
    if (!std::isfinite(best_err)) continue;
    Eigen::Vector3d s(s1, best_u * s1, v * s1);
    PolishDistances(&s, cosines, sq_sides);
    if (!(s.minCoeff() > 0.0) || !s.allFinite()) continue;
    const std::array<Eigen::Vector3d, 3> cam = {s[0] * f[0], s[1] * f[1],
                                                s[2] * f[2]};
    Pose pose = AlignPoints(cam, world);
    pose.rotation = Canonical(pose.rotation);
    bool valid = true;
    for (int i = 0; i < 3 && valid; ++i) {
      const std::optional<Pixel> y = Project(world[i], k, pose);
      valid = y && (*y - pix[i]).norm() <= kP3PTolerancePx;
    }
    if (!valid) continue;
    bool duplicate = false;
    for (const Pose& other : candidates) {
      if (RotationAngleBetween(pose, other) < 1e-9 &&
          TranslationDistance(pose, other) < 1e-9) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) candidates.push_back(pose);
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const Pose& a, const Pose& b) {
              const Eigen::Quaterniond& p = a.rotation;
              const Eigen::Quaterniond& q = b.rotation;
              return std::make_tuple(p.w(), p.x(), p.y(), p.z()) <
                     std::make_tuple(q.w(), q.x(), q.y(), q.z());
            });
  return candidates;
}

RefineResult RefinePose(const Pose& pose,
                        std::span<const Correspondence> correspondences,
                        const CameraIntrinsics& k) {
  if (correspondences.size() < 4) {
    throw NotEnoughCorrespondences("refinement needs at least 4 points");
  }
  RefineResult result;
  result.pose = pose;
  Eigen::Matrix3d r_cw = pose.RotationMatrix().transpose();
  Eigen::Vector3d t_cw = -(r_cw * pose.translation);
  Eigen::VectorXd residuals;
  Eigen::MatrixXd jacobian;
  double cost = 0.0;
  if (!Linearize(r_cw, t_cw, correspondences, k, &residuals, &jacobian, &cost) ||
      !std::isfinite(cost)) {
    return result;
  }
  result.cost_history.push_back(cost);
  double lambda = 1e-3;
  bool moved = false;
  for (int it = 0; it < 100; ++it) {
    result.iterations = it + 1;
    if (cost == 0.0) {
      result.converged = true;
      break;
    }
    const Eigen::Matrix<double, 6, 6> jtj = jacobian.transpose() * jacobian;
    const Eigen::Matrix<double, 6, 1> jtr = jacobian.transpose() * residuals;
    bool accepted = false;
    Eigen::Matrix<double, 6, 1> delta;
    while (lambda < 1e12) {
      Eigen::Matrix<double, 6, 6> damped = jtj;
      damped.diagonal() += lambda * (jtj.diagonal().array() + 1e-12).matrix();
      delta = -damped.ldlt().solve(jtr);
      if (!delta.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      const Eigen::Vector3d w = delta.head<3>();
      const double angle = w.norm();
      const Eigen::Matrix3d dr =
          angle > 0.0 ? Eigen::AngleAxisd(angle, w / angle).toRotationMatrix()
                      : Eigen::Matrix3d::Identity();
      const Eigen::Matrix3d r_new = dr * r_cw;
      const Eigen::Vector3d t_new = dr * t_cw + delta.tail<3>();
      double new_cost = 0.0;
      if (Linearize(r_new, t_new, correspondences, k, nullptr, nullptr,
                    &new_cost) &&
          new_cost < cost) {
        r_cw = r_new;
        t_cw = t_new;
        const double old_cost = cost;
        Linearize(r_cw, t_cw, correspondences, k, &residuals, &jacobian, &cost);
        result.cost_history.push_back(cost);
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        moved = true;
        if (old_cost - cost <= 1e-14 * old_cost || delta.norm() < 1e-14) {
          result.converged = true;
        }
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) {
      // No decrease possible from here: a stationary point.
      result.converged = true;
      break;
    }
    if (result.converged) break;
  }
  if (moved) {
    // Re-orthonormalize through the quaternion.
    const Eigen::Quaterniond q_cw(r_cw);
    result.pose = Invert(Pose(q_cw, t_cw));
  }
  return result;
}

std::vector<int> ClassifyInliers(const Pose& pose,
                                 std::span<const Correspondence> correspondences,
                                 const CameraIntrinsics& k, double threshold,
                                 double* mean_error) {
  std::vector<int> inliers;
  double sum = 0.0;
  for (size_t i = 0; i < correspondences.size(); ++i) {
    const std::optional<Pixel> y = Project(correspondences[i].scene, k, pose);
    if (!y) continue;
    const double e = (*y - correspondences[i].pixel).norm();
    if (e < threshold) {
      inliers.push_back(static_cast<int>(i));
      sum += e;
    }
  }
  if (mean_error) {
    *mean_error = inliers.empty() ? std::numeric_limits<double>::infinity()
                                  : sum / inliers.size();
  }
  return inliers;
}

LocalizationResult RansacLocalize(std::span<const Correspondence> correspondences,
                                  const CameraIntrinsics& k,
                                  const RansacConfig& cfg) {
  const int n = static_cast<int>(correspondences.size());
  if (n < 4) {
    throw NotEnoughCorrespondences("RANSAC needs at least 4 correspondences, got " +
                                   std::to_string(n));
  }
  if (!(cfg.inlier_threshold > 0.0) || cfg.max_hypotheses < 1) {
    throw InvalidArgument("invalid RANSAC configuration");
  }
  Eigen::Matrix3Xd scene(3, n);
  Eigen::Matrix2Xd pixels(2, n);
  for (int i = 0; i < n; ++i) {
    scene.col(i) = correspondences[i].scene;
    pixels.col(i) = correspondences[i].pixel;
  }

  Rng rng(cfg.seed);
  Score best;
  Pose best_pose;
  int index = 0;
  for (int h = 0; h < cfg.max_hypotheses; ++h) {
    int i0 = static_cast<int>(rng.UniformInt(n));
    int i1 = static_cast<int>(rng.UniformInt(n - 1));
    int i2 = static_cast<int>(rng.UniformInt(n - 2));
    // Map to three distinct indices.
    if (i1 >= i0) ++i1;
    const int lo = std::min(i0, i1);
    const int hi = std::max(i0, i1);
    if (i2 >= lo) ++i2;
    if (i2 >= hi) ++i2;
    std::vector<Pose> poses;
    try {
      poses = P3PMinimal(correspondences[i0], correspondences[i1],
                         correspondences[i2], k);
    } catch (const DegenerateSample&) {
      continue;
    }
    for (const Pose& pose : poses) {
      Score s = ScorePose(pose, scene, pixels, k, cfg.inlier_threshold);
      s.index = index++;
      if (s.BetterThan(best)) {
        best = s;
        best_pose = pose;
      }
    }
  }
  if (best.inliers < std::max(cfg.min_inliers, 1)) {
    throw LocalizationFailed("best hypothesis has " +
                             std::to_string(best.inliers) + " inliers");
  }

  Pose pose = best_pose;
  double mean_error = 0.0;
  std::vector<int> inliers =
      ClassifyInliers(pose, correspondences, k, cfg.inlier_threshold, &mean_error);
  for (int round = 0; round < cfg.refinement_rounds; ++round) {
    if (inliers.size() < 4) break;
    std::vector<Correspondence> subset;
    subset.reserve(inliers.size());
    for (const int i : inliers) subset.push_back(correspondences[i]);
    const RefineResult refined = RefinePose(pose, subset, k);
    double new_mean = 0.0;
    std::vector<int> new_inliers = ClassifyInliers(
        refined.pose, correspondences, k, cfg.inlier_threshold, &new_mean);
    if (new_inliers.size() < inliers.size() ||
        (new_inliers.size() == inliers.size() && new_mean > mean_error)) {
      break;
    }
    const bool same = new_inliers == inliers;
    pose = refined.pose;
    inliers = std::move(new_inliers);
    mean_error = new_mean;
    if (same) break;
  }

  LocalizationResult result;
  result.pose = pose;
  result.inlier_count = static_cast<int>(inliers.size());
  result.mean_inlier_error = mean_error;
  result.hypothesis_index = best.index;
  if (result.inlier_count < cfg.min_inliers) {
    throw LocalizationFailed("refined pose has " +
                             std::to_string(result.inlier_count) + " inliers");
  }
  return result;
}

EnsembleResult EnsembleLocalize(std::span<const ScrHead> heads,
                                std::span<const Pixel> pixels,
                                const Eigen::MatrixXf& descriptors,
                                const CameraIntrinsics& k,
                                const RansacConfig& cfg) {
  if (heads.empty()) {
    throw InvalidArgument("ensemble needs at least one head");
  }
  if (descriptors.cols() != static_cast<Eigen::Index>(pixels.size())) {
    throw InvalidArgument("one descriptor per query pixel is required");
  }
  EnsembleResult best;
  Score best_score;
  for (size_t h = 0; h < heads.size(); ++h) {
    const Eigen::MatrixXf scene = PredictBatch(heads[h], descriptors);
    std::vector<Correspondence> corr(pixels.size());
    for (size_t i = 0; i < pixels.size(); ++i) {
      corr[i].pixel = pixels[i];
      corr[i].scene = scene.col(static_cast<Eigen::Index>(i)).cast<double>();
    }
    LocalizationResult r;
    try {
      r = RansacLocalize(corr, k, cfg);
    } catch (const LocalizationFailed&) {
      continue;
    }
    const Score s{r.inlier_count, r.mean_inlier_error, static_cast<int>(h)};
    if (s.BetterThan(best_score)) {
      best_score = s;
      best.result = r;
      best.head_index = static_cast<int>(h);
    }
  }
  if (best.head_index < 0) {
    throw LocalizationFailed("every head failed to localize");
  }
  return best;
}

}  // namespace scrfocus
