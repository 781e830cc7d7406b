#include "scrfocus/config_io.h"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "scrfocus/errors.h"

namespace scrfocus {
namespace {

template <typename T>
void Get(const nlohmann::json& j, const char* key, T& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    it->get_to(out);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("config field '") + key + "': " + e.what());
  }
}

}  // namespace

void to_json(nlohmann::json& j, const ObservationParams& p) {
  j = {{"descriptor_dim", p.descriptor_dim},
       {"noise_sigma", p.noise_sigma},
       {"ambiguous_pool", p.ambiguous_pool},
       {"feature_radius", p.feature_radius},
       {"stride", p.stride},
       {"seed", p.seed}};
}

void from_json(const nlohmann::json& j, ObservationParams& p) {
  Get(j, "descriptor_dim", p.descriptor_dim);
  Get(j, "noise_sigma", p.noise_sigma);
  Get(j, "ambiguous_pool", p.ambiguous_pool);
  Get(j, "feature_radius", p.feature_radius);
  Get(j, "stride", p.stride);
  Get(j, "seed", p.seed);
}

void to_json(nlohmann::json& j, const TrajectoryConfig& c) {
  j = {{"orbit_radius", c.orbit_radius},
       {"look_at", {c.look_at.x(), c.look_at.y(), c.look_at.z()}},
       {"arc_degrees", c.arc_degrees},
       {"elevation_jitter", c.elevation_jitter},
       {"look_at_jitter", c.look_at_jitter},
       {"test_radius_scale", c.test_radius_scale},
       {"test_height_offset", c.test_height_offset}};
}

void from_json(const nlohmann::json& j, TrajectoryConfig& c) {
  Get(j, "orbit_radius", c.orbit_radius);
  if (j.contains("look_at")) {
    const std::vector<double> v = j.at("look_at").get<std::vector<double>>();
    if (v.size() != 3) throw InvalidArgument("look_at needs 3 values");
    c.look_at = Eigen::Vector3d(v[0], v[1], v[2]);
  }
  Get(j, "arc_degrees", c.arc_degrees);
  Get(j, "elevation_jitter", c.elevation_jitter);
  Get(j, "look_at_jitter", c.look_at_jitter);
  Get(j, "test_radius_scale", c.test_radius_scale);
  Get(j, "test_height_offset", c.test_height_offset);
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = {{"n_points", c.n_points},
       {"n_images", c.n_images},
       {"n_test_images", c.n_test_images},
       {"descriptor_dim", c.descriptor_dim},
       {"noise_sigma", c.noise_sigma},
       {"ambiguous_pool", c.ambiguous_pool},
       {"structured_fraction", c.structured_fraction},
       {"relief", c.relief},
       {"trajectory", c.trajectory},
       {"width", c.width},
       {"height", c.height},
       {"focal", c.focal},
       {"feature_radius", c.feature_radius},
       {"stride", c.stride},
       {"min_visible_points", c.min_visible_points},
       {"rng_seed", c.rng_seed}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
  Get(j, "n_points", c.n_points);
  Get(j, "n_images", c.n_images);
  Get(j, "n_test_images", c.n_test_images);
  Get(j, "descriptor_dim", c.descriptor_dim);
  Get(j, "noise_sigma", c.noise_sigma);
  Get(j, "ambiguous_pool", c.ambiguous_pool);
  Get(j, "structured_fraction", c.structured_fraction);
  Get(j, "relief", c.relief);
  Get(j, "trajectory", c.trajectory);
  Get(j, "width", c.width);
  Get(j, "height", c.height);
  Get(j, "focal", c.focal);
  Get(j, "feature_radius", c.feature_radius);
  Get(j, "stride", c.stride);
  Get(j, "min_visible_points", c.min_visible_points);
  Get(j, "rng_seed", c.rng_seed);
}

void to_json(nlohmann::json& j, const AugmentationConfig& c) {
  j = {{"enabled", c.enabled},
       {"max_rotation_deg", c.max_rotation_deg},
       {"min_scale", c.min_scale},
       {"max_scale", c.max_scale}};
}

void from_json(const nlohmann::json& j, AugmentationConfig& c) {
  Get(j, "enabled", c.enabled);
  Get(j, "max_rotation_deg", c.max_rotation_deg);
  Get(j, "min_scale", c.min_scale);
  Get(j, "max_scale", c.max_scale);
}

void to_json(nlohmann::json& j, const BufferConfig& c) {
  j = {{"strategy", StrategyName(c.strategy)},
       {"rho", c.rho},
       {"target_size", c.target_size},
       {"passes", c.passes},
       {"augmentation", c.augmentation},
       {"min_track_length", c.min_track_length},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, BufferConfig& c) {
  if (j.contains("strategy")) {
    c.strategy = ParseStrategy(j.at("strategy").get<std::string>());
  }
  Get(j, "rho", c.rho);
  Get(j, "target_size", c.target_size);
  Get(j, "passes", c.passes);
  Get(j, "augmentation", c.augmentation);
  Get(j, "min_track_length", c.min_track_length);
  Get(j, "seed", c.seed);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"passes", c.passes},
       {"batch_size", c.batch_size},
       {"peak_lr", c.peak_lr},
       {"tau", c.tau},
       {"soft_clamp", c.soft_clamp},
       {"fallback_depth", c.fallback_depth},
       {"hidden", c.hidden},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  Get(j, "passes", c.passes);
  Get(j, "batch_size", c.batch_size);
  Get(j, "peak_lr", c.peak_lr);
  Get(j, "tau", c.tau);
  Get(j, "soft_clamp", c.soft_clamp);
  Get(j, "fallback_depth", c.fallback_depth);
  Get(j, "hidden", c.hidden);
  Get(j, "seed", c.seed);
}

void to_json(nlohmann::json& j, const RansacConfig& c) {
  j = {{"max_hypotheses", c.max_hypotheses},
       {"inlier_threshold", c.inlier_threshold},
       {"refinement_rounds", c.refinement_rounds},
       {"min_inliers", c.min_inliers},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, RansacConfig& c) {
  Get(j, "max_hypotheses", c.max_hypotheses);
  Get(j, "inlier_threshold", c.inlier_threshold);
  Get(j, "refinement_rounds", c.refinement_rounds);
  Get(j, "min_inliers", c.min_inliers);
  Get(j, "seed", c.seed);
}

void to_json(nlohmann::json& j, const SuiteConfig& c) {
  j = {{"scene", c.scene},         {"sequences", c.sequences},
       {"buffer", c.buffer},       {"train", c.train},
       {"ransac", c.ransac},       {"query_cap", c.query_cap},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SuiteConfig& c) {
  Get(j, "scene", c.scene);
  Get(j, "sequences", c.sequences);
  Get(j, "buffer", c.buffer);
  Get(j, "train", c.train);
  Get(j, "ransac", c.ransac);
  Get(j, "query_cap", c.query_cap);
  Get(j, "seed", c.seed);
}

std::string ConfigHash(const nlohmann::json& config) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string MetaPath(const std::string& artifact_path) {
  return artifact_path + ".meta.json";
}

void WriteMeta(const std::string& artifact_path, uint64_t seed,
               const nlohmann::json& config) {
  nlohmann::json meta = {{"seed", seed},
                         {"config_hash", ConfigHash(config)},
                         {"config", config}};
  WriteTextFile(MetaPath(artifact_path), meta.dump(2) + "\n");
}

nlohmann::json ReadJsonFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(0, path + ": " + e.what());
  }
}

void WriteTextFile(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace scrfocus
