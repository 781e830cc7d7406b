#include "scrfocus/scene_map.h"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "scrfocus/errors.h"

namespace scrfocus {
namespace {

std::string FormatDouble(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> SplitTokens(const std::string& line) {
  std::vector<std::string> tokens;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) {
    tokens.push_back(tok);
  }
  return tokens;
}

double ParseDouble(const std::string& tok, int line) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0' || errno == ERANGE ||
      !std::isfinite(v)) {
    throw ParseError(line, "expected a finite number, got '" + tok + "'");
  }
  return v;
}

long long ParseInt(const std::string& tok, int line) {
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(tok.c_str(), &end, 10);
  if (end == tok.c_str() || *end != '\0' || errno == ERANGE) {
    throw ParseError(line, "expected an integer, got '" + tok + "'");
  }
  return v;
}

int ParseId(const std::string& tok, int line) {
  const long long v = ParseInt(tok, line);
  if (v < 0 || v > INT32_MAX) {
    throw ParseError(line, "id out of range: " + tok);
  }
  return static_cast<int>(v);
}

bool SameIntrinsics(const CameraIntrinsics& a, const CameraIntrinsics& b) {
  return a.fx == b.fx && a.fy == b.fy && a.cx == b.cx && a.cy == b.cy &&
         a.width == b.width && a.height == b.height;
}

}  // namespace

SceneMap SceneMap::Create(std::vector<MapPoint> points,
                          std::vector<MapImage> images) {
  SceneMap map;
  for (size_t i = 0; i < images.size(); ++i) {
    images[i].intrinsics.Validate();
    if (!map.image_index_.emplace(images[i].id, i).second) {
      throw InvalidArgument("duplicate image id " +
                            std::to_string(images[i].id));
    }
  }
  std::sort(points.begin(), points.end(),
            [](const MapPoint& a, const MapPoint& b) { return a.id < b.id; });
  ScenePoint sum = ScenePoint::Zero();
  for (size_t i = 0; i < points.size(); ++i) {
    const MapPoint& point = points[i];
    if (i > 0 && points[i - 1].id == point.id) {
      throw InvalidArgument("duplicate point id " + std::to_string(point.id));
    }
    if (point.track.empty()) {
      throw InvalidArgument("point " + std::to_string(point.id) +
                            " has an empty track");
    }
    std::set<int> seen;
    for (const TrackElement& obs : point.track) {
      if (!map.image_index_.count(obs.image_id)) {
        throw DanglingReference("point " + std::to_string(point.id) +
                                " references missing image " +
                                std::to_string(obs.image_id));
      }
      if (!seen.insert(obs.image_id).second) {
        throw InvalidArgument("point " + std::to_string(point.id) +
                              " observes image " +
                              std::to_string(obs.image_id) + " twice");
      }
      map.visibility_[obs.image_id].push_back(i);
    }
    sum += point.position;
  }
  if (!points.empty()) {
    map.scene_center_ = sum / static_cast<double>(points.size());
  }
  map.points_ = std::move(points);
  map.images_ = std::move(images);
  return map;
}

bool SceneMap::HasImage(int image_id) const {
  return image_index_.count(image_id) > 0;
}

const MapImage& SceneMap::Image(int image_id) const {
  const auto it = image_index_.find(image_id);
  if (it == image_index_.end()) {
    throw UnknownImage("unknown image id " + std::to_string(image_id));
  }
  return images_[it->second];
}

std::vector<std::pair<const MapPoint*, Pixel>> SceneMap::VisiblePoints(
    int image_id) const {
  Image(image_id);
  std::vector<std::pair<const MapPoint*, Pixel>> visible;
  const auto it = visibility_.find(image_id);
  if (it == visibility_.end()) {
    return visible;
  }
  visible.reserve(it->second.size());
  for (const size_t idx : it->second) {
    const MapPoint& point = points_[idx];
    for (const TrackElement& obs : point.track) {
      if (obs.image_id == image_id) {
        visible.emplace_back(&point, obs.pixel);
        break;
      }
    }
  }
  return visible;
}

std::vector<int> SceneMap::TrainingImageIds() const {
  std::vector<int> ids;
  for (const auto& [id, idx] : image_index_) {
    if (!images_[idx].name.starts_with(kTestImagePrefix)) {
      ids.push_back(id);
    }
  }
  return ids;
}

std::vector<int> SceneMap::TestImageIds() const {
  std::vector<int> ids;
  for (const auto& [id, idx] : image_index_) {
    if (images_[idx].name.starts_with(kTestImagePrefix)) {
      ids.push_back(id);
    }
  }
  return ids;
}

SceneMap ParseMap(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool have_version = false;
  std::map<int, CameraIntrinsics> cameras;
  std::vector<MapImage> images;
  std::vector<MapPoint> points;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    const size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') {
      continue;
    }
    const std::vector<std::string> tok = SplitTokens(line);
    if (!have_version) {
      if (tok.size() != 2 || tok[0] != "FTMAP" || tok[1] != "1") {
        throw ParseError(line_no, "expected header 'FTMAP 1'");
      }
      have_version = true;
      continue;
    }
    const std::string& kind = tok[0];
    if (kind == "CAMERA") {
      if (tok.size() != 8) {
        throw ParseError(line_no, "CAMERA expects 7 fields");
      }
      CameraIntrinsics k;
      k.fx = ParseDouble(tok[2], line_no);
      k.fy = ParseDouble(tok[3], line_no);
      k.cx = ParseDouble(tok[4], line_no);
      k.cy = ParseDouble(tok[5], line_no);
      k.width = static_cast<int>(ParseInt(tok[6], line_no));
      k.height = static_cast<int>(ParseInt(tok[7], line_no));
      try {
        k.Validate();
      } catch (const InvalidArgument& e) {
        throw ParseError(line_no, e.what());
      }
      if (!cameras.emplace(ParseId(tok[1], line_no), k).second) {
        throw ParseError(line_no, "duplicate camera id " + tok[1]);
      }
    } else if (kind == "IMAGE") {
      if (tok.size() < 11) {
        throw ParseError(line_no, "IMAGE expects at least 10 fields");
      }
      MapImage image;
      image.id = ParseId(tok[1], line_no);
      const int camera_id = ParseId(tok[2], line_no);
      const auto cam = cameras.find(camera_id);
      if (cam == cameras.end()) {
        throw DanglingReference("line " + std::to_string(line_no) +
                                ": image references missing camera " +
                                tok[2]);
      }
      image.intrinsics = cam->second;
      const Eigen::Quaterniond q(
          ParseDouble(tok[3], line_no), ParseDouble(tok[4], line_no),
          ParseDouble(tok[5], line_no), ParseDouble(tok[6], line_no));
      if (std::abs(q.norm() - 1.0) > 1e-3) {
        throw InvalidPose("line " + std::to_string(line_no) +
                          ": quaternion norm deviates from 1");
      }
      image.pose = Pose(q, Eigen::Vector3d(ParseDouble(tok[7], line_no),
                                           ParseDouble(tok[8], line_no),
                                           ParseDouble(tok[9], line_no)));
      image.name = tok[10];
      for (size_t i = 11; i < tok.size(); ++i) {
        image.name += " " + tok[i];
      }
      images.push_back(std::move(image));
    } else if (kind == "POINT") {
      if (tok.size() < 5 || (tok.size() - 5) % 3 != 0) {
        throw ParseError(line_no,
                         "POINT expects id, XYZ and (image u v) triples");
      }
      MapPoint point;
      point.id = ParseId(tok[1], line_no);
      point.position = ScenePoint(ParseDouble(tok[2], line_no),
                                  ParseDouble(tok[3], line_no),
                                  ParseDouble(tok[4], line_no));
      for (size_t i = 5; i < tok.size(); i += 3) {
        point.track.push_back(
            {ParseId(tok[i], line_no),
             Pixel(ParseDouble(tok[i + 1], line_no),
                   ParseDouble(tok[i + 2], line_no))});
      }
      if (point.track.empty()) {
        throw ParseError(line_no, "POINT has an empty track");
      }
      points.push_back(std::move(point));
    } else {
      throw ParseError(line_no, "unknown record '" + kind + "'");
    }
  }
  if (!have_version) {
    throw ParseError(std::max(line_no, 1), "missing 'FTMAP 1' header");
  }
  return SceneMap::Create(std::move(points), std::move(images));
}

SceneMap LoadMap(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) {
    throw IoError("cannot open map file " + path);
  }
  std::stringstream buffer;
  buffer << file.rdbuf();
  return ParseMap(buffer.str());
}

std::string FormatMap(const SceneMap& map,
                      const std::vector<std::string>& comments) {
  std::ostringstream out;
  out << "FTMAP 1\n";
  for (const std::string& c : comments) {
    out << "# " << c << "\n";
  }
  // Cameras are deduplicated in order of first use.
  std::vector<CameraIntrinsics> cameras;
  std::vector<int> image_camera;
  for (const MapImage& image : map.images()) {
    int id = -1;
    for (size_t c = 0; c < cameras.size(); ++c) {
      if (SameIntrinsics(cameras[c], image.intrinsics)) {
        id = static_cast<int>(c);
        break;
      }
    }
    if (id < 0) {
      id = static_cast<int>(cameras.size());
      cameras.push_back(image.intrinsics);
    }
    image_camera.push_back(id);
  }
  for (size_t c = 0; c < cameras.size(); ++c) {
    const CameraIntrinsics& k = cameras[c];
    out << "CAMERA " << c << ' ' << FormatDouble(k.fx) << ' '
        << FormatDouble(k.fy) << ' ' << FormatDouble(k.cx) << ' '
        << FormatDouble(k.cy) << ' ' << k.width << ' ' << k.height << '\n';
  }
  for (size_t i = 0; i < map.images().size(); ++i) {
    const MapImage& image = map.images()[i];
    const Eigen::Quaterniond& q = image.pose.rotation;
    const Eigen::Vector3d& t = image.pose.translation;
    out << "IMAGE " << image.id << ' ' << image_camera[i] << ' '
        << FormatDouble(q.w()) << ' ' << FormatDouble(q.x()) << ' '
        << FormatDouble(q.y()) << ' ' << FormatDouble(q.z()) << ' '
        << FormatDouble(t.x()) << ' ' << FormatDouble(t.y()) << ' '
        << FormatDouble(t.z()) << ' ' << image.name << '\n';
  }
  for (const MapPoint& point : map.points()) {
    out << "POINT " << point.id << ' ' << FormatDouble(point.position.x())
        << ' ' << FormatDouble(point.position.y()) << ' '
        << FormatDouble(point.position.z());
    for (const TrackElement& obs : point.track) {
      out << ' ' << obs.image_id << ' ' << FormatDouble(obs.pixel.x()) << ' '
          << FormatDouble(obs.pixel.y());
    }
    out << '\n';
  }
  return out.str();
}

void SaveMap(const SceneMap& map, const std::string& path,
             const std::vector<std::string>& comments) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) {
    throw IoError("cannot write map file " + path);
  }
  file << FormatMap(map, comments);
  if (!file) {
    throw IoError("failed writing map file " + path);
  }
}

}  // namespace scrfocus
