#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "scrfocus/localizer.h"
#include "scrfocus/observation.h"
#include "scrfocus/pipeline.h"
#include "scrfocus/sampler.h"
#include "scrfocus/scr_head.h"
#include "scrfocus/synthetic.h"

namespace scrfocus {

// JSON forms of the configuration structs. Readers accept partial objects;
// missing keys keep the value already present in the target.
void to_json(nlohmann::json& j, const ObservationParams& p);
void from_json(const nlohmann::json& j, ObservationParams& p);
void to_json(nlohmann::json& j, const TrajectoryConfig& c);
void from_json(const nlohmann::json& j, TrajectoryConfig& c);
void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);
void to_json(nlohmann::json& j, const AugmentationConfig& c);
void from_json(const nlohmann::json& j, AugmentationConfig& c);
void to_json(nlohmann::json& j, const BufferConfig& c);
void from_json(const nlohmann::json& j, BufferConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const RansacConfig& c);
void from_json(const nlohmann::json& j, RansacConfig& c);
void to_json(nlohmann::json& j, const SuiteConfig& c);
void from_json(const nlohmann::json& j, SuiteConfig& c);

// 64-bit FNV-1a of the compact dump (keys sorted), as 16 hex digits.
std::string ConfigHash(const nlohmann::json& config);

// Sidecar "<path>.meta.json" recording the producing seed and config hash
// of a binary artifact.
std::string MetaPath(const std::string& artifact_path);
void WriteMeta(const std::string& artifact_path, uint64_t seed,
               const nlohmann::json& config);
nlohmann::json ReadJsonFile(const std::string& path);
void WriteTextFile(const std::string& path, const std::string& text);

}  // namespace scrfocus
