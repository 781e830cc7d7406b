#include "scrfocus/scene_map.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "scrfocus/errors.h"
#include "scrfocus/synthetic.h"
#include "test_util.h"

namespace scrfocus {
namespace {

constexpr const char* kMinimal =
    "FTMAP 1\n"
    "# two views of one point\n"
    "CAMERA 0 100 100 50 40 100 80\n"
    "IMAGE 1 0 1 0 0 0 0 0 0 first\n"
    "IMAGE 2 0 1 0 0 0 1 0 0 second\n"
    "POINT 0 0.5 0.25 4 1 62.5 46.25 2 37.5 46.25\n";

MapImage MakeImage(int id, const Pose& pose = Pose::Identity()) {
  MapImage im;
  im.id = id;
  im.intrinsics.fx = im.intrinsics.fy = 100;
  im.intrinsics.cx = 50;
  im.intrinsics.cy = 40;
  im.intrinsics.width = 100;
  im.intrinsics.height = 80;
  im.pose = pose;
  im.name = "im" + std::to_string(id);
  return im;
}

MapPoint MakePoint(int id, const std::vector<int>& images) {
  MapPoint p;
  p.id = id;
  p.position = ScenePoint(0.1 * id, 0.0, 3.0);
  for (const int i : images) p.track.push_back({i, Pixel(50, 40)});
  return p;
}

TEST(ParseMap, MinimalFile) {
  const SceneMap map = ParseMap(kMinimal);
  ASSERT_EQ(map.points().size(), 1u);
  ASSERT_EQ(map.images().size(), 2u);
  EXPECT_EQ(map.Image(2).name, "second");
  EXPECT_DOUBLE_EQ(map.Image(2).pose.translation.x(), 1.0);
  EXPECT_EQ(map.points()[0].track.size(), 2u);
  EXPECT_EQ(map.Image(1).intrinsics.width, 100);
  EXPECT_LT((map.scene_center() - ScenePoint(0.5, 0.25, 4)).norm(), 1e-15);
}

TEST(ParseMap, DanglingTrackReference) {
  const std::string text = std::string(kMinimal) + "POINT 1 0 0 4 99 1 1\n";
  EXPECT_THROW(ParseMap(text), DanglingReference);
}

TEST(ParseMap, MissingCamera) {
  EXPECT_THROW(ParseMap("FTMAP 1\nIMAGE 1 7 1 0 0 0 0 0 0 a\n"), DanglingReference);
}

TEST(ParseMap, ReportsLineNumber) {
  const std::string text =
      "FTMAP 1\nCAMERA 0 100 100 50 40 100 80\n# fine\nIMAGE 1 0 1 0 0 zero 0 0 0 a\n";
  try {
    ParseMap(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4);
  }
  EXPECT_THROW(ParseMap("FTMAP 2\n"), ParseError);
  EXPECT_THROW(ParseMap("FTMAP 1\nBOGUS 1\n"), ParseError);
  EXPECT_THROW(ParseMap(""), ParseError);
}

TEST(ParseMap, RejectsNonUnitQuaternion) {
  EXPECT_THROW(ParseMap("FTMAP 1\nCAMERA 0 1 1 4 4 8 8\nIMAGE 1 0 1.01 0 0 0 0 0 0 a\n"),
               InvalidPose);
  // Small deviations are normalized.
  const SceneMap map =
      ParseMap("FTMAP 1\nCAMERA 0 1 1 4 4 8 8\nIMAGE 1 0 1.0005 0 0 0 0 0 0 a\n");
  EXPECT_NEAR(map.Image(1).pose.rotation.norm(), 1.0, 1e-12);
}

TEST(SceneMap, CreateValidates) {
  EXPECT_THROW(SceneMap::Create({MakePoint(0, {1}), MakePoint(0, {1})}, {MakeImage(1)}),
               InvalidArgument);
  EXPECT_THROW(SceneMap::Create({MakePoint(0, {})}, {MakeImage(1)}), InvalidArgument);
  EXPECT_THROW(SceneMap::Create({MakePoint(0, {1, 1})}, {MakeImage(1)}), InvalidArgument);
  EXPECT_THROW(SceneMap::Create({}, {MakeImage(1), MakeImage(1)}), InvalidArgument);
  EXPECT_THROW(SceneMap::Create({MakePoint(0, {2})}, {MakeImage(1)}), DanglingReference);
}

TEST(SceneMap, VisiblePoints) {
  const SceneMap map = SceneMap::Create(
      {MakePoint(5, {1, 2}), MakePoint(3, {2})},
      {MakeImage(1), MakeImage(2), MakeImage(3)});
  EXPECT_TRUE(map.VisiblePoints(3).empty());
  const auto one = map.VisiblePoints(1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].first->id, 5);
  const auto two = map.VisiblePoints(2);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[0].first->id, 3);
  EXPECT_EQ(two[1].first->id, 5);
  EXPECT_THROW(map.VisiblePoints(4), UnknownImage);
  EXPECT_THROW(map.Image(4), UnknownImage);
}

TEST(SceneMap, SceneCenterIsMean) {
  Rng rng(3);
  std::vector<MapPoint> points;
  ScenePoint sum = ScenePoint::Zero();
  for (int i = 0; i < 50; ++i) {
    MapPoint p = MakePoint(i, {1});
    p.position = ScenePoint(rng.Normal(), rng.Normal(), rng.Normal()) * 10.0;
    sum += p.position;
    points.push_back(p);
  }
  const SceneMap map = SceneMap::Create(points, {MakeImage(1)});
  EXPECT_LT((map.scene_center() - sum / 50.0).norm(), 1e-9);
}

TEST(SaveMap, RoundTripAndByteIdentical) {
  const SyntheticScene scene = GenerateSynthetic(testing::SmallScene(21));
  const std::string text = FormatMap(scene.map, {"seed: 21"});
  EXPECT_EQ(text, FormatMap(scene.map, {"seed: 21"}));
  const SceneMap back = ParseMap(text);
  ASSERT_EQ(back.points().size(), scene.map.points().size());
  ASSERT_EQ(back.images().size(), scene.map.images().size());
  for (size_t i = 0; i < back.images().size(); ++i) {
    const MapImage& a = scene.map.images()[i];
    const MapImage& b = back.images()[i];
    EXPECT_EQ(a.id, b.id);
    EXPECT_EQ(a.name, b.name);
    EXPECT_EQ(a.intrinsics.width, b.intrinsics.width);
    EXPECT_EQ(a.intrinsics.height, b.intrinsics.height);
    EXPECT_NEAR(a.intrinsics.fx, b.intrinsics.fx, 1e-9);
    EXPECT_NEAR(a.intrinsics.cy, b.intrinsics.cy, 1e-9);
    EXPECT_LT(RotationAngleBetween(a.pose, b.pose), 1e-9);
    EXPECT_LT(TranslationDistance(a.pose, b.pose), 1e-9);
  }
  for (size_t i = 0; i < back.points().size(); ++i) {
    const MapPoint& a = scene.map.points()[i];
    const MapPoint& b = back.points()[i];
    EXPECT_EQ(a.id, b.id);
    EXPECT_LT((a.position - b.position).norm(), 1e-9);
    ASSERT_EQ(a.track.size(), b.track.size());
    for (size_t t = 0; t < a.track.size(); ++t) {
      EXPECT_EQ(a.track[t].image_id, b.track[t].image_id);
      EXPECT_LT((a.track[t].pixel - b.track[t].pixel).norm(), 1e-9);
    }
  }
  EXPECT_EQ(FormatMap(back, {"seed: 21"}), text);
}

TEST(SaveMap, EmptyPointsAndFiles) {
  const SceneMap map = SceneMap::Create({}, {MakeImage(1), MakeImage(2)});
  const auto dir = std::filesystem::temp_directory_path() / "scrfocus_map_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "empty.txt").string();
  SaveMap(map, path);
  const SceneMap back = LoadMap(path);
  EXPECT_TRUE(back.points().empty());
  EXPECT_EQ(back.images().size(), 2u);
  std::filesystem::remove_all(dir);
  EXPECT_THROW(LoadMap((dir / "missing.txt").string()), IoError);
}

TEST(GenerateSynthetic, TracksReprojectAndCountsAgree) {
  const SyntheticScene scene = GenerateSynthetic(testing::SmallScene(22));
  std::map<int, int> tracks_per_image;
  for (const MapPoint& p : scene.map.points()) {
    for (const TrackElement& t : p.track) {
      ++tracks_per_image[t.image_id];
      const MapImage& im = scene.map.Image(t.image_id);
      const auto y = Project(p.position, im.intrinsics, im.pose);
      ASSERT_TRUE(y.has_value());
      EXPECT_LT((*y - t.pixel).norm(), 0.5);
      EXPECT_TRUE(im.intrinsics.Contains(t.pixel));
    }
  }
  for (const MapImage& im : scene.map.images()) {
    const auto visible = scene.map.VisiblePoints(im.id);
    EXPECT_EQ(static_cast<int>(visible.size()), tracks_per_image[im.id]);
    EXPECT_GE(visible.size(), 8u);
  }
  // Dense point ids.
  for (size_t i = 0; i < scene.map.points().size(); ++i) {
    EXPECT_EQ(scene.map.points()[i].id, static_cast<int>(i));
  }
  EXPECT_EQ(scene.map.TrainingImageIds().size(), 12u);
  EXPECT_EQ(scene.map.TestImageIds().size(), 4u);
  for (const int id : scene.map.TestImageIds()) {
    EXPECT_EQ(scene.map.Image(id).name.rfind(kTestImagePrefix, 0), 0u);
  }
}

TEST(GenerateSynthetic, TwoHeadOnViewsTrackEveryPoint) {
  SynthConfig cfg = testing::SmallScene(23);
  cfg.n_images = 2;
  cfg.n_test_images = 0;
  cfg.n_points = 4;
  cfg.min_visible_points = 4;
  cfg.trajectory.arc_degrees = 2.0;
  cfg.trajectory.elevation_jitter = 0.0;
  cfg.trajectory.look_at_jitter = 0.0;
  const SyntheticScene scene = GenerateSynthetic(cfg);
  ASSERT_EQ(scene.map.points().size(), 4u);
  for (const MapPoint& p : scene.map.points()) {
    EXPECT_EQ(p.track.size(), 2u);
    for (const MapImage& im : scene.map.images()) {
      const auto y = Project(p.position, im.intrinsics, im.pose);
      ASSERT_TRUE(y.has_value());
      EXPECT_TRUE(im.intrinsics.Contains(*y));
    }
  }
}

TEST(GenerateSynthetic, DeterministicAndInfeasible) {
  const SynthConfig cfg = testing::SmallScene(24);
  EXPECT_EQ(FormatMap(GenerateSynthetic(cfg).map), FormatMap(GenerateSynthetic(cfg).map));
  SynthConfig other = cfg;
  other.rng_seed = 25;
  EXPECT_NE(FormatMap(GenerateSynthetic(cfg).map), FormatMap(GenerateSynthetic(other).map));

  SynthConfig tiny = cfg;
  tiny.n_points = 3;
  EXPECT_THROW(GenerateSynthetic(tiny), InfeasibleScene);
  SynthConfig sparse = cfg;
  sparse.n_points = 6;
  EXPECT_THROW(GenerateSynthetic(sparse), InfeasibleScene);
}

}  // namespace
}  // namespace scrfocus
