#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "scrfocus/geometry.h"

namespace scrfocus {

struct TrackElement {
  int image_id = 0;
  Pixel pixel = Pixel::Zero();
};

struct MapPoint {
  int id = 0;
  ScenePoint position = ScenePoint::Zero();
  std::vector<TrackElement> track;
};

struct MapImage {
  int id = 0;
  CameraIntrinsics intrinsics;
  Pose pose;  // ground truth, camera-to-world
  std::string name;
};

// Images whose name starts with this prefix are held out for localization
// and never used to fill training buffers.
inline constexpr const char* kTestImagePrefix = "test/";

// Sparse SfM map: 3D points with visibility tracks and posed images.
// Immutable once built; use SceneMap::Create to validate and index.
class SceneMap {
 public:
  SceneMap() = default;

  // Validates the invariants (unique ids, non-empty tracks without repeated
  // images, all references resolvable) and computes the scene center.
  // Throws DanglingReference or InvalidArgument.
  static SceneMap Create(std::vector<MapPoint> points,
                         std::vector<MapImage> images);

  const std::vector<MapPoint>& points() const { return points_; }
  const std::vector<MapImage>& images() const { return images_; }
  const ScenePoint& scene_center() const { return scene_center_; }

  bool HasImage(int image_id) const;
  // Throws UnknownImage.
  const MapImage& Image(int image_id) const;

  // Points whose track contains image_id, ascending by point id, with the
  // stored observation. Throws UnknownImage.
  std::vector<std::pair<const MapPoint*, Pixel>> VisiblePoints(
      int image_id) const;

  // Image ids not prefixed with kTestImagePrefix / prefixed with it,
  // in ascending id order.
  std::vector<int> TrainingImageIds() const;
  std::vector<int> TestImageIds() const;

 private:
  std::vector<MapPoint> points_;
  std::vector<MapImage> images_;
  ScenePoint scene_center_ = ScenePoint::Zero();
  std::map<int, size_t> image_index_;
  // image id -> indices into points_ (ascending point id).
  std::map<int, std::vector<size_t>> visibility_;
};

// Text interchange format:
//   FTMAP 1
//   CAMERA <id> <fx> <fy> <cx> <cy> <width> <height>
//   IMAGE <id> <camera_id> <qw> <qx> <qy> <qz> <tx> <ty> <tz> <name>
//   POINT <id> <X> <Y> <Z> [<image_id> <u> <v>]...
// '#' starts a comment line. Floats are written with 17 significant digits.
//
// Throws ParseError (with line number), DanglingReference, InvalidPose when
// a quaternion norm deviates from 1 by more than 1e-3, IoError.
SceneMap LoadMap(const std::string& path);
SceneMap ParseMap(const std::string& text);

// `comments` are emitted as '#' lines after the version line.
void SaveMap(const SceneMap& map, const std::string& path,
             const std::vector<std::string>& comments = {});
std::string FormatMap(const SceneMap& map,
                      const std::vector<std::string>& comments = {});

}  // namespace scrfocus
