#include "scrfocus/observation.h"

#include <cmath>
#include <map>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "scrfocus/errors.h"
#include "scrfocus/synthetic.h"
#include "test_util.h"

namespace scrfocus {
namespace {

struct MeanEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
};

MeanEstimate Estimate(const std::vector<double>& xs) {
  double sum = 0.0;
  for (const double x : xs) sum += x;
  const double mean = sum / xs.size();
  double ss = 0.0;
  for (const double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (xs.size() - 1) / xs.size())};
}

// Dot product of two independent noisy renormalized copies of a random unit
// vector, simulated with an unrelated generator.
MeanEstimate OracleNoisyDot(int dim, double sigma, int samples) {
  std::mt19937_64 gen(12345);
  std::normal_distribution<double> normal;
  std::vector<double> dots;
  for (int s = 0; s < samples; ++s) {
    Eigen::VectorXd l(dim);
    for (int i = 0; i < dim; ++i) l[i] = normal(gen);
    l.normalize();
    Eigen::VectorXd a = l, b = l;
    for (int i = 0; i < dim; ++i) {
      a[i] += sigma * normal(gen);
      b[i] += sigma * normal(gen);
    }
    dots.push_back(a.normalized().dot(b.normalized()));
  }
  return Estimate(dots);
}

class ObservationFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    scene_ = GenerateSynthetic(testing::SmallScene(3));
    model_ = std::make_unique<ObservationModel>(scene_.world, scene_.map);
  }

  SyntheticScene scene_;
  std::unique_ptr<ObservationModel> model_;
};

TEST_F(ObservationFixture, DescriptorsAreUnitNorm) {
  for (const MapImage& image : scene_.map.images()) {
    const DescriptorGrid grid = model_->Grid(image.id);
    for (int cell = 0; cell < grid.size(); cell += 7) {
      EXPECT_NEAR(model_->DescriptorAtCell(image.id, cell).norm(), 1.0, 1e-6);
    }
  }
}

TEST_F(ObservationFixture, RepeatedQueriesAgree) {
  const int id = scene_.map.images().front().id;
  const ObservationModel other(scene_.world, scene_.map);
  for (const Pixel& y : {Pixel(0, 0), Pixel(10.4, 20.6), Pixel(159, 119)}) {
    const Descriptor a = model_->DescriptorAt(id, y);
    EXPECT_EQ(a, model_->DescriptorAt(id, y));
    EXPECT_EQ(a, other.DescriptorAt(id, y));
  }
}

TEST_F(ObservationFixture, SnapsToNearestCell) {
  const int id = scene_.map.images().front().id;
  EXPECT_EQ(model_->DescriptorAt(id, Pixel(10.4, 20.4)),
            model_->DescriptorAt(id, Pixel(10.0, 20.0)));
  const DescriptorGrid grid = model_->Grid(id);
  EXPECT_EQ(grid.cols, 160);
  EXPECT_EQ(grid.rows, 120);
  EXPECT_EQ(model_->SnapToCell(id, Pixel(10.4, 20.6)), 21 * 160 + 10);
}

TEST_F(ObservationFixture, OutOfFrameAndUnknownImage) {
  const int id = scene_.map.images().front().id;
  EXPECT_THROW(model_->DescriptorAt(id, Pixel(-1.0, 5.0)), OutOfFrame);
  EXPECT_THROW(model_->DescriptorAt(id, Pixel(5.0, 120.0)), OutOfFrame);
  EXPECT_THROW(model_->DescriptorAt(id, Pixel(NAN, 5.0)), OutOfFrame);
  EXPECT_THROW(model_->DescriptorAt(99999, Pixel(5.0, 5.0)), UnknownImage);
}

TEST_F(ObservationFixture, DominantPointMatchesBruteForce) {
  const double r = scene_.world.params.feature_radius;
  Rng rng(5);
  for (const MapImage& image : scene_.map.images()) {
    const DescriptorGrid grid = model_->Grid(image.id);
    std::vector<std::pair<Pixel, int>> projections;
    for (const auto& [point, observed] : scene_.map.VisiblePoints(image.id)) {
      const auto y = Project(point->position, image.intrinsics, image.pose);
      if (y) projections.emplace_back(*y, point->id);
    }
    for (int trial = 0; trial < 300; ++trial) {
      // Bias samples toward cells next to projections.
      int cell;
      if (trial % 2 == 0 && !projections.empty()) {
        const Pixel y =
            projections[rng.UniformInt(projections.size())].first +
            Pixel(rng.Uniform(-4, 4), rng.Uniform(-4, 4));
        if (!image.intrinsics.Contains(y)) continue;
        cell = model_->SnapToCell(image.id, y);
      } else {
        cell = static_cast<int>(rng.UniformInt(grid.size()));
      }
      const Pixel center = grid.CellCenter(cell);
      int expected = -1;
      double best = r * r;
      for (const auto& [y, id] : projections) {
        const double d2 = (y - center).squaredNorm();
        if (d2 < best || (d2 == best && expected >= 0 && id < expected)) {
          best = d2;
          expected = id;
        }
      }
      EXPECT_EQ(model_->DominantPoint(image.id, cell), expected);
    }
  }
}

TEST_F(ObservationFixture, ObservationsPreserveOrder) {
  const int id = scene_.map.images().front().id;
  std::vector<Pixel> pixels = {Pixel(3, 4), Pixel(80, 60), Pixel(150, 7),
                               Pixel(12, 110)};
  const std::vector<Descriptor> forward = model_->ObservationsFor(id, pixels);
  ASSERT_EQ(forward.size(), pixels.size());
  for (size_t i = 0; i < pixels.size(); ++i) {
    EXPECT_EQ(forward[i], model_->DescriptorAt(id, pixels[i]));
  }
  std::vector<Pixel> reversed(pixels.rbegin(), pixels.rend());
  const std::vector<Descriptor> backward = model_->ObservationsFor(id, reversed);
  for (size_t i = 0; i < pixels.size(); ++i) {
    EXPECT_EQ(backward[i], forward[pixels.size() - 1 - i]);
  }
  EXPECT_TRUE(model_->ObservationsFor(id, std::span<const Pixel>()).empty());
}

TEST_F(ObservationFixture, PoolIsSharedAcrossImages) {
  // More background cells than pool entries, so some pool index repeats
  // across different images.
  const auto& images = scene_.map.images();
  std::map<int, int> first_image;  // pool index -> image
  bool shared = false;
  for (const MapImage& image : images) {
    const DescriptorGrid grid = model_->Grid(image.id);
    for (int cell = 0; cell < grid.size() && !shared; cell += 13) {
      if (model_->DominantPoint(image.id, cell) >= 0) continue;
      const int p = model_->PoolIndex(image.id, cell);
      const auto it = first_image.find(p);
      if (it != first_image.end() && it->second != image.id) shared = true;
      first_image.emplace(p, image.id);
    }
  }
  EXPECT_TRUE(shared);
}

TEST(Observation, ZeroNoiseReturnsLatent) {
  SynthConfig cfg = testing::SmallScene(4);
  cfg.noise_sigma = 0.0;
  const SyntheticScene scene = GenerateSynthetic(cfg);
  const ObservationModel model(scene.world, scene.map);
  int checked = 0;
  for (const MapImage& image : scene.map.images()) {
    for (const auto& [point, observed] : scene.map.VisiblePoints(image.id)) {
      const int cell = model.SnapToCell(image.id, observed);
      const int dominant = model.DominantPoint(image.id, cell);
      ASSERT_GE(dominant, 0);
      EXPECT_EQ(model.DescriptorAtCell(image.id, cell),
                scene.world.latent.at(dominant));
      ++checked;
    }
    const DescriptorGrid grid = model.Grid(image.id);
    for (int cell = 0; cell < grid.size(); cell += 101) {
      if (model.DominantPoint(image.id, cell) < 0) {
        EXPECT_EQ(model.DescriptorAtCell(image.id, cell),
                  scene.world.pool[model.PoolIndex(image.id, cell)]);
      }
    }
  }
  EXPECT_GT(checked, 100);
}

TEST(Observation, LatentsAreSeparated) {
  ObservationParams params;
  std::vector<int> ids;
  for (int i = 0; i < 500; ++i) ids.push_back(i);
  const ObservationWorld world = ObservationWorld::Generate(params, ids);
  ASSERT_EQ(world.latent.size(), 500u);
  ASSERT_EQ(world.pool.size(), 16u);
  for (int i = 0; i < 500; ++i) {
    EXPECT_NEAR(world.latent.at(i).norm(), 1.0, 1e-6);
    for (int j = i + 1; j < 500; ++j) {
      EXPECT_LT(world.latent.at(i).dot(world.latent.at(j)), 0.9f);
    }
  }
}

TEST(Observation, GenerateRejectsBadParams) {
  ObservationParams params;
  params.descriptor_dim = 4;
  EXPECT_THROW(ObservationWorld::Generate(params, {0}), InvalidArgument);
  params = ObservationParams();
  params.ambiguous_pool = 0;
  EXPECT_THROW(ObservationWorld::Generate(params, {0}), InvalidArgument);
  params = ObservationParams();
  params.noise_sigma = -0.1;
  EXPECT_THROW(ObservationWorld::Generate(params, {0}), InvalidArgument);
  params = ObservationParams();
  EXPECT_THROW(ObservationWorld::Generate(params, {1, 1}), InvalidArgument);
}

// Same point seen in two images: the two noisy descriptors agree as well as
// two independent noisy copies of one unit vector do.
TEST_F(ObservationFixture, RepeatabilityMatchesMonteCarlo) {
  std::map<int, std::vector<std::pair<int, int>>> cells_of_point;
  for (const MapImage& image : scene_.map.images()) {
    for (const auto& [point, observed] : scene_.map.VisiblePoints(image.id)) {
      const int cell = model_->SnapToCell(image.id, observed);
      if (model_->DominantPoint(image.id, cell) == point->id) {
        cells_of_point[point->id].emplace_back(image.id, cell);
      }
    }
  }
  std::vector<double> dots;
  for (const auto& [id, cells] : cells_of_point) {
    for (size_t a = 0; a < cells.size() && dots.size() < 10000; ++a) {
      for (size_t b = a + 1; b < cells.size() && dots.size() < 10000; ++b) {
        dots.push_back(
            model_->DescriptorAtCell(cells[a].first, cells[a].second)
                .cast<double>()
                .dot(model_->DescriptorAtCell(cells[b].first, cells[b].second)
                         .cast<double>()));
      }
    }
  }
  ASSERT_GT(dots.size(), 2000u);
  const MeanEstimate got = Estimate(dots);
  const MeanEstimate want = OracleNoisyDot(32, 0.05, 10000);
  const double band = 3.0 * std::hypot(got.standard_error, want.standard_error);
  EXPECT_NEAR(got.mean, want.mean, band);
  // Small-noise expansion: E[dot] ~ 1 - sigma^2 (D - 1).
  EXPECT_NEAR(want.mean, 1.0 - 0.05 * 0.05 * 31, 0.01);
}

TEST_F(ObservationFixture, SharedPoolEntriesMatchMonteCarlo) {
  std::map<int, std::vector<std::pair<int, int>>> cells_of_entry;
  for (const MapImage& image : scene_.map.images()) {
    const DescriptorGrid grid = model_->Grid(image.id);
    for (int cell = 0; cell < grid.size(); cell += 11) {
      if (model_->DominantPoint(image.id, cell) < 0) {
        cells_of_entry[model_->PoolIndex(image.id, cell)].emplace_back(
            image.id, cell);
      }
    }
  }
  std::vector<double> dots;
  for (const auto& [entry, cells] : cells_of_entry) {
    for (size_t a = 0, taken = 0; a + 1 < cells.size() && taken < 700; ++a) {
      const auto& u = cells[a];
      const auto& v = cells[cells.size() - 1 - a % (cells.size() - 1)];
      if (u.first == v.first) continue;
      dots.push_back(model_->DescriptorAtCell(u.first, u.second)
                         .cast<double>()
                         .dot(model_->DescriptorAtCell(v.first, v.second)
                                  .cast<double>()));
      ++taken;
    }
  }
  ASSERT_GT(dots.size(), 5000u);
  const MeanEstimate got = Estimate(dots);
  const MeanEstimate want = OracleNoisyDot(32, 0.05, 10000);
  EXPECT_NEAR(got.mean, want.mean,
              3.0 * std::hypot(got.standard_error, want.standard_error));
}

TEST_F(ObservationFixture, DistinctPointsAreDistinguishable) {
  // Descriptors of different points stay far below the repeatability level.
  std::vector<Descriptor> descriptors;
  const MapImage& image = scene_.map.images().front();
  for (const auto& [point, observed] : scene_.map.VisiblePoints(image.id)) {
    const int cell = model_->SnapToCell(image.id, observed);
    if (model_->DominantPoint(image.id, cell) == point->id) {
      descriptors.push_back(model_->DescriptorAtCell(image.id, cell));
    }
  }
  ASSERT_GT(descriptors.size(), 10u);
  for (size_t a = 0; a < descriptors.size(); ++a) {
    for (size_t b = a + 1; b < descriptors.size(); ++b) {
      EXPECT_LT(descriptors[a].dot(descriptors[b]), 0.9f);
    }
  }
}

}  // namespace
}  // namespace scrfocus
