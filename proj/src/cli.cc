#include "scrfocus/cli.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "scrfocus/config_io.h"
#include "scrfocus/errors.h"
#include "scrfocus/eval.h"
#include "scrfocus/pipeline.h"
#include "scrfocus/plot.h"
#include "scrfocus/scene_map.h"

namespace scrfocus {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Files written by the running command, removed again on failure.
class Outputs {
 public:
  void Prepare(const std::string& dir) {
    dir_ = dir;
    if (!fs::exists(dir_)) {
      fs::create_directories(dir_);
      created_dir_ = true;
    } else if (!fs::is_directory(dir_)) {
      throw IoError(dir + " is not a directory");
    }
  }

  std::string Path(const std::string& name) {
    const fs::path p = dir_ / name;
    written_.push_back(p);
    return p.string();
  }

  void Text(const std::string& name, const std::string& text) {
    WriteTextFile(Path(name), text);
  }

  void Rollback() {
    std::error_code ec;
    for (const fs::path& p : written_) fs::remove(p, ec);
    if (created_dir_ && fs::is_empty(dir_, ec)) fs::remove(dir_, ec);
  }

  std::vector<std::string> Names() const {
    std::vector<std::string> out;
    for (const fs::path& p : written_) out.push_back(p.string());
    return out;
  }

 private:
  fs::path dir_;
  bool created_dir_ = false;
  std::vector<fs::path> written_;
};

struct Common {
  uint64_t seed = 0;
  std::string out = ".";
  std::string format = "csv";
  int threads = 1;
};

void AddSeed(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Random seed")->capture_default_str();
}

void AddOut(CLI::App* app, Common& c) {
  app->add_option("--out", c.out, "Output directory")->capture_default_str();
}

void AddFormat(CLI::App* app, Common& c) {
  app->add_option("--format", c.format, "Report format")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
}

void AddThreads(CLI::App* app, Common& c) {
  app->add_option("--threads", c.threads, "Worker threads (results do not depend on it)")
      ->check(CLI::Range(1, 256))
      ->capture_default_str();
}

void AddSceneOptions(CLI::App* app, SynthConfig& s) {
  app->add_option("--points", s.n_points, "Map points")->capture_default_str();
  app->add_option("--images", s.n_images, "Training images")->capture_default_str();
  app->add_option("--test-images", s.n_test_images, "Held-out images")
      ->capture_default_str();
  app->add_option("--dim", s.descriptor_dim, "Descriptor dimension")
      ->capture_default_str();
  app->add_option("--noise", s.noise_sigma, "Descriptor noise sigma")
      ->capture_default_str();
  app->add_option("--pool", s.ambiguous_pool, "Ambiguous background descriptors")
      ->capture_default_str();
  app->add_option("--width", s.width, "Frame width")->capture_default_str();
  app->add_option("--height", s.height, "Frame height")->capture_default_str();
  app->add_option("--focal", s.focal, "Focal length (px)")->capture_default_str();
  app->add_option("--stride", s.stride, "Descriptor grid stride")->capture_default_str();
  app->add_option("--feature-radius", s.feature_radius,
                  "Radius within which a point dominates appearance")
      ->capture_default_str();
}

void AddRansacOptions(CLI::App* app, RansacConfig& r, int& query_cap) {
  app->add_option("--hypotheses", r.max_hypotheses, "RANSAC minimal samples")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app->add_option("--threshold", r.inlier_threshold, "Inlier threshold (px)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app->add_option("--min-inliers", r.min_inliers, "Minimum inliers")
      ->capture_default_str();
  app->add_option("--query-cap", query_cap, "Query pixels per frame")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

std::string Fnv(const std::string& bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

std::string ReadText(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A map file with the observation world that goes with it.
struct LoadedScene {
  SceneMap map;
  ObservationWorld world;
  std::string map_hash;
};

std::unique_ptr<LoadedScene> LoadScene(const std::string& map_path,
                                       std::string world_path) {
  if (world_path.empty()) {
    world_path = (fs::path(map_path).parent_path() / "world.json").string();
  }
  auto scene = std::make_unique<LoadedScene>();
  const std::string text = ReadText(map_path);
  scene->map = ParseMap(text);
  scene->map_hash = Fnv(text);
  const json w = ReadJsonFile(world_path);
  if (!w.contains("observation")) {
    throw InvalidArgument(world_path + " has no observation parameters");
  }
  ObservationParams params;
  w.at("observation").get_to(params);
  std::vector<int> ids;
  for (const MapPoint& p : scene->map.points()) ids.push_back(p.id);
  scene->world = ObservationWorld::Generate(params, ids);
  return scene;
}

std::vector<std::string> MetaComments(uint64_t seed, const std::string& hash) {
  return {"seed: " + std::to_string(seed), "config_hash: " + hash};
}

std::string FormatNumber(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// --- subcommands -------------------------------------------------------

void RunSynth(const Common& c, SynthConfig cfg, Outputs& outputs,
              std::ostream& out) {
  cfg.rng_seed = c.seed;
  const SyntheticScene scene = GenerateSynthetic(cfg);
  const json config = cfg;
  const std::string hash = ConfigHash(config);
  outputs.Prepare(c.out);
  outputs.Text("map.txt", FormatMap(scene.map, MetaComments(c.seed, hash)));
  const json world = {{"seed", c.seed},
                      {"config_hash", hash},
                      {"synth", config},
                      {"observation", cfg.Observation()}};
  outputs.Text("world.json", world.dump(2) + "\n");
  out << "scene: " << scene.map.points().size() << " points, "
      << scene.map.TrainingImageIds().size() << " training and "
      << scene.map.TestImageIds().size() << " held-out images\n";
}

void RunBuffer(const Common& c, const std::string& map_path,
               const std::string& world_path, BufferConfig bc,
               const std::string& strategy, Outputs& outputs,
               std::ostream& out) {
  bc.strategy = ParseStrategy(strategy);
  bc.seed = c.seed;
  bc.num_threads = c.threads;
  const auto scene = LoadScene(map_path, world_path);
  const ObservationModel model(scene->world, scene->map);
  BufferReport report;
  const TrainingBuffer buffer = BuildBuffer(model, bc, &report);
  const json config = {{"buffer", bc},
                       {"map_hash", scene->map_hash},
                       {"observation", scene->world.params}};
  outputs.Prepare(c.out);
  const std::string path = outputs.Path("buffer.bin");
  WriteBuffer(buffer, path);
  outputs.Path("buffer.bin.meta.json");
  WriteMeta(path, c.seed, config);
  out << "buffer: " << buffer.instances.size() << " instances from "
      << report.jobs - report.skipped << " of " << report.jobs << " jobs\n";
}

void RunTrain(const Common& c, const std::string& buffer_path,
              const std::string& map_path, TrainConfig tc, bool hard_clamp,
              Outputs& outputs, std::ostream& out) {
  tc.seed = c.seed;
  tc.num_threads = c.threads;
  tc.soft_clamp = !hard_clamp;
  const std::string bytes = ReadText(buffer_path);
  const TrainingBuffer buffer = DeserializeBuffer(bytes);
  const SceneMap map = LoadMap(map_path);
  TrainReport report;
  const ScrHead head = Train(buffer, map.scene_center(), tc, &report);
  const json config = {
      {"train", tc}, {"buffer_hash", Fnv(bytes)}, {"map_hash", Fnv(ReadText(map_path))}};
  outputs.Prepare(c.out);
  const std::string path = outputs.Path("head.bin");
  WriteHead(head, path);
  outputs.Path("head.bin.meta.json");
  WriteMeta(path, c.seed, config);
  for (size_t i = 0; i < report.pass_loss.size(); ++i) {
    out << "pass " << i + 1 << " loss " << FormatNumber(report.pass_loss[i]) << "\n";
  }
}

std::vector<ScrHead> LoadHeads(const std::vector<std::string>& paths) {
  std::vector<ScrHead> heads;
  for (const std::string& p : paths) heads.push_back(ReadHead(p));
  return heads;
}

json HeadHashes(const std::vector<std::string>& paths) {
  json out = json::array();
  for (const std::string& p : paths) out.push_back(Fnv(ReadText(p)));
  return out;
}

std::vector<int> SelectImages(const SceneMap& map, const std::string& which) {
  if (which == "train") return map.TrainingImageIds();
  if (which == "test") return map.TestImageIds();
  std::vector<int> all;
  for (const MapImage& im : map.images()) all.push_back(im.id);
  return all;
}

void RunLocalize(const Common& c, const std::string& map_path,
                 const std::string& world_path,
                 const std::vector<std::string>& head_paths,
                 const std::string& which, RansacConfig rc, int query_cap,
                 Outputs& outputs, std::ostream& out) {
  rc.seed = c.seed;
  const auto scene = LoadScene(map_path, world_path);
  const ObservationModel model(scene->world, scene->map);
  const std::vector<ScrHead> heads = LoadHeads(head_paths);
  std::vector<FrameRecord> records;
  const SequenceResult result = LocalizeImages(
      heads, model, SelectImages(scene->map, which), rc, query_cap, &records);
  const json config = {{"ransac", rc},
                       {"query_cap", query_cap},
                       {"images", which},
                       {"map_hash", scene->map_hash},
                       {"heads", HeadHashes(head_paths)}};
  const std::string hash = ConfigHash(config);
  outputs.Prepare(c.out);
  if (c.format == "json") {
    nlohmann::ordered_json doc;
    doc["seed"] = c.seed;
    doc["config_hash"] = hash;
    doc["frames"] = nlohmann::ordered_json::array();
    for (const FrameRecord& r : records) {
      nlohmann::ordered_json f;
      f["image_id"] = r.image_id;
      f["name"] = scene->map.Image(r.image_id).name;
      f["success"] = r.success;
      if (r.success) {
        const Eigen::Quaterniond& q = r.estimate.rotation;
        const Eigen::Vector3d& t = r.estimate.translation;
        f["head"] = r.head_index;
        f["inliers"] = r.inliers;
        f["mean_inlier_px"] = r.mean_inlier_error;
        f["pose"] = {q.w(), q.x(), q.y(), q.z(), t.x(), t.y(), t.z()};
        f["rot_err_deg"] = r.error.rotation_deg;
        f["trans_err"] = r.error.translation;
      }
      doc["frames"].push_back(std::move(f));
    }
    outputs.Text("localize.json", doc.dump(2) + "\n");
  } else {
    std::ostringstream s;
    s << "# seed: " << c.seed << "\n# config_hash: " << hash << "\n";
    s << "image_id,name,success,head,inliers,mean_inlier_px,qw,qx,qy,qz,tx,ty,"
         "tz,rot_err_deg,trans_err\n";
    for (const FrameRecord& r : records) {
      s << r.image_id << ',' << scene->map.Image(r.image_id).name << ','
        << (r.success ? 1 : 0);
      if (r.success) {
        const Eigen::Quaterniond& q = r.estimate.rotation;
        const Eigen::Vector3d& t = r.estimate.translation;
        s << ',' << r.head_index << ',' << r.inliers << ','
          << FormatNumber(r.mean_inlier_error);
        for (const double v : {q.w(), q.x(), q.y(), q.z(), t.x(), t.y(), t.z()}) {
          s << ',' << FormatNumber(v);
        }
        s << ',' << FormatNumber(r.error.rotation_deg) << ','
          << FormatNumber(r.error.translation);
      } else {
        s << ",,,,,,,,,,,,";
      }
      s << "\n";
    }
    outputs.Text("localize.csv", s.str());
  }
  out << "localized " << result.errors.size() << " of " << result.frames()
      << " frames\n";
  if (!result.errors.empty()) {
    const auto [rot, trans] = MedianErrors(result);
    out << "median rotation " << FormatNumber(rot) << " deg, translation "
        << FormatNumber(trans) << "\n";
  }
}

void WriteReport(const Common& c, const std::string& stem,
                 const std::vector<ReportRow>& rows, const ReportMeta& meta,
                 Outputs& outputs) {
  if (c.format == "json") {
    outputs.Text(stem + ".json", FormatReportJson(rows, meta));
  } else {
    outputs.Text(stem + ".csv", FormatReportCsv(rows, meta));
  }
}

void RunEval(const Common& c, const std::string& map_path,
             const std::string& world_path,
             const std::vector<std::string>& head_paths,
             const std::string& buffer_path, const std::string& sequence,
             RansacConfig rc, int query_cap, Outputs& outputs,
             std::ostream& out) {
  rc.seed = c.seed;
  const auto scene = LoadScene(map_path, world_path);
  const ObservationModel model(scene->world, scene->map);
  const std::vector<ScrHead> heads = LoadHeads(head_paths);
  const SequenceResult result = LocalizeImages(
      heads, model, scene->map.TestImageIds(), rc, query_cap);
  ReprojectionStats stats{std::nan(""), std::nan("")};
  SamplingStrategy strategy = SamplingStrategy::kFocus;
  double rho = std::nan("");
  json config = {{"ransac", rc},
                 {"query_cap", query_cap},
                 {"map_hash", scene->map_hash},
                 {"heads", HeadHashes(head_paths)}};
  if (!buffer_path.empty()) {
    const std::string bytes = ReadText(buffer_path);
    const TrainingBuffer buffer = DeserializeBuffer(bytes);
    stats = BufferReprojectionStats(heads.front(), buffer);
    strategy = buffer.strategy;
    rho = buffer.rho;
    config["buffer_hash"] = Fnv(bytes);
  }
  ReportRow row = EvaluateHead(sequence, rho, strategy, stats, result);
  if (buffer_path.empty()) row.strategy = "unknown";
  const ReportMeta meta{c.seed, ConfigHash(config)};
  outputs.Prepare(c.out);
  WriteReport(c, "report", {row}, meta, outputs);
  out << FormatReportCsv({row}, meta);
}

SuiteConfig PrepareSuite(SuiteConfig cfg, const Common& c) {
  cfg.seed = c.seed;
  cfg.buffer.num_threads = c.threads;
  cfg.train.num_threads = c.threads;
  return cfg;
}

void RunAblate(const Common& c, SuiteConfig cfg, const std::vector<double>& radii,
               Outputs& outputs, std::ostream& out) {
  cfg = PrepareSuite(cfg, c);
  const AblationResult result = RunAblation(cfg, radii);
  json config = cfg;
  config["radii"] = radii;
  const ReportMeta meta{c.seed, ConfigHash(config)};
  outputs.Prepare(c.out);
  const double best = radii[result.scores.argmin];
  if (c.format == "json") {
    nlohmann::ordered_json doc =
        nlohmann::ordered_json::parse(FormatReportJson(result.rows, meta));
    doc["scores"] = nlohmann::ordered_json::array();
    for (size_t i = 0; i < radii.size(); ++i) {
      doc["scores"].push_back({{"rho", radii[i]}, {"score", result.scores.scores[i]}});
    }
    doc["argmin"] = best;
    outputs.Text("ablation.json", doc.dump(2) + "\n");
  } else {
    outputs.Text("ablation.csv", FormatReportCsv(result.rows, meta));
    std::ostringstream s;
    s << "# seed: " << meta.seed << "\n# config_hash: " << meta.config_hash
      << "\nrho,score\n";
    for (size_t i = 0; i < radii.size(); ++i) {
      s << FormatNumber(radii[i]) << ',' << FormatNumber(result.scores.scores[i])
        << "\n";
    }
    s << "argmin," << FormatNumber(best) << "\n";
    outputs.Text("ablation_scores.csv", s.str());
  }
  for (size_t i = 0; i < radii.size(); ++i) {
    out << "rho " << FormatNumber(radii[i]) << " score "
        << FormatNumber(result.scores.scores[i]) << "\n";
  }
  out << "argmin rho " << FormatNumber(best) << "\n";
}

void RunCompareCommand(const Common& c, SuiteConfig cfg, Outputs& outputs,
                       std::ostream& out) {
  cfg = PrepareSuite(cfg, c);
  const CompareResult result = RunCompare(cfg);
  // Everything but the sampling strategy: both rows must share it.
  json shared = cfg;
  shared["buffer"].erase("strategy");
  const std::string hash = ConfigHash(shared);
  const ReportMeta meta{c.seed, hash};
  outputs.Prepare(c.out);
  if (c.format == "json") {
    nlohmann::ordered_json doc =
        nlohmann::ordered_json::parse(FormatReportJson(result.rows, meta));
    doc["strategy_config_hash"] = {{"focus", hash}, {"random", hash}};
    doc["pooled_median_trans"] = {{"focus", result.pooled_trans_focus},
                                  {"random", result.pooled_trans_random}};
    outputs.Text("compare.json", doc.dump(2) + "\n");
  } else {
    std::string csv = FormatReportCsv(result.rows, meta);
    const std::string extra =
        "# config_hash[focus]: " + hash + "\n# config_hash[random]: " + hash +
        "\n# pooled_median_trans[focus]: " +
        FormatNumber(result.pooled_trans_focus) +
        "\n# pooled_median_trans[random]: " +
        FormatNumber(result.pooled_trans_random) + "\n";
    const size_t header = csv.find(kReportHeader);
    csv.insert(header, extra);
    outputs.Text("compare.csv", csv);
  }
  out << FormatReportCsv(result.rows, meta);
  out << "pooled median translation: focus "
      << FormatNumber(result.pooled_trans_focus) << ", random "
      << FormatNumber(result.pooled_trans_random) << "\n";
}

void RunPlot(const Common& c, const std::string& input, Outputs& outputs,
             std::ostream& out) {
  const std::string text = ReadText(input);
  std::string svg;
  const bool is_json = fs::path(input).extension() == ".json";
  if (is_json) {
    const json doc = json::parse(text);
    if (doc.contains("scores")) {
      std::vector<double> radii;
      std::vector<double> scores;
      for (const json& s : doc.at("scores")) {
        radii.push_back(s.at("rho").get<double>());
        scores.push_back(s.at("score").get<double>());
      }
      const double best = doc.at("argmin").get<double>();
      const int argmin = static_cast<int>(
          std::find(radii.begin(), radii.end(), best) - radii.begin());
      svg = AblationPlotSvg(radii, scores, argmin);
    } else {
      std::vector<ReportRow> rows;
      for (const json& r : doc.at("rows")) {
        ReportRow row;
        row.sequence = r.at("sequence").get<std::string>();
        row.strategy = r.at("strategy").get<std::string>();
        auto num = [&](const char* key) {
          return r.at(key).is_null() ? std::nan("") : r.at(key).get<double>();
        };
        row.median_trans = num("median_trans");
        row.median_reproj_px = num("median_reproj_px");
        rows.push_back(row);
      }
      svg = ReportPlotSvg(rows);
    }
  } else if (text.find("\nrho,score\n") != std::string::npos) {
    std::istringstream in(text);
    std::string line;
    std::vector<double> radii;
    std::vector<double> scores;
    double best = std::nan("");
    bool in_rows = false;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      if (line == "rho,score") {
        in_rows = true;
        continue;
      }
      if (!in_rows) continue;
      const size_t comma = line.find(',');
      if (comma == std::string::npos) throw ParseError(0, "malformed score row");
      const std::string key = line.substr(0, comma);
      const double value = std::stod(line.substr(comma + 1));
      if (key == "argmin") {
        best = value;
      } else {
        radii.push_back(std::stod(key));
        scores.push_back(value);
      }
    }
    const int argmin = static_cast<int>(
        std::find(radii.begin(), radii.end(), best) - radii.begin());
    svg = AblationPlotSvg(radii, scores, argmin);
  } else {
    svg = ReportPlotSvg(ParseReportCsv(text));
  }
  outputs.Prepare(c.out);
  const std::string name = fs::path(input).stem().string() + ".svg";
  outputs.Text(name, svg);
  out << "wrote " << (fs::path(c.out) / name).string() << "\n";
}

void AddSuiteOptions(CLI::App* app, SuiteConfig& s) {
  AddSceneOptions(app, s.scene);
  app->add_option("--sequences", s.sequences, "Synthetic sequences")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app->add_option("--buffer-size", s.buffer.target_size, "Buffer instances")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app->add_option("--buffer-passes", s.buffer.passes,
                  "Shuffled passes over the training images when filling")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app->add_option("--passes", s.train.passes, "Training passes over the buffer")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app->add_option("--batch", s.train.batch_size, "Batch size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app->add_option("--lr", s.train.peak_lr, "Peak learning rate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  AddRansacOptions(app, s.ransac, s.query_cap);
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err) {
  CLI::App app{"Scene coordinate regression with focused training-pixel sampling",
               "scrfocus"};
  app.require_subcommand(1);

  Common common;

  const SynthConfig default_scene = DefaultSuite().scene;
  SynthConfig synth_cfg = default_scene;
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic scene");
  AddSeed(synth, common);
  AddOut(synth, common);
  AddSceneOptions(synth, synth_cfg);

  std::string map_path;
  std::string world_path;
  BufferConfig buffer_cfg;
  std::string strategy = "focus";
  bool no_augment = false;
  CLI::App* buffer = app.add_subcommand("buffer", "Build a training buffer");
  AddSeed(buffer, common);
  AddOut(buffer, common);
  AddThreads(buffer, common);
  buffer->add_option("--map", map_path, "Map file")->required()->check(CLI::ExistingFile);
  buffer->add_option("--world", world_path,
                     "Observation world (default: world.json next to the map)");
  buffer->add_option("--strategy", strategy, "Sampling strategy")
      ->check(CLI::IsMember({"focus", "random"}))
      ->capture_default_str();
  buffer->add_option("--rho", buffer_cfg.rho, "Sampling radius (px)")
      ->capture_default_str();
  buffer->add_option("--buffer-size", buffer_cfg.target_size, "Buffer instances")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  buffer->add_option("--buffer-passes", buffer_cfg.passes,
                     "Shuffled passes over the training images")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  buffer->add_flag("--no-augment", no_augment, "Disable rotation/scale augmentation");

  std::string buffer_path;
  TrainConfig train_cfg;
  bool hard_clamp = false;
  CLI::App* train = app.add_subcommand("train", "Train a regression head");
  AddSeed(train, common);
  AddOut(train, common);
  AddThreads(train, common);
  train->add_option("--buffer", buffer_path, "Buffer file")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--map", map_path, "Map file (scene center)")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--passes", train_cfg.passes, "Passes over the buffer")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train->add_option("--batch", train_cfg.batch_size,
                    "Batch size (capped at buffer size / 10)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train->add_option("--lr", train_cfg.peak_lr, "Peak learning rate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train->add_option("--tau", train_cfg.tau, "Loss clamp (px)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train->add_flag("--hard-clamp", hard_clamp, "Use min(r, tau) instead of tanh");

  std::vector<std::string> head_paths;
  std::string which = "test";
  RansacConfig ransac_cfg;
  int query_cap = 4096;
  CLI::App* localize = app.add_subcommand("localize", "Localize frames of a map");
  AddSeed(localize, common);
  AddOut(localize, common);
  AddFormat(localize, common);
  localize->add_option("--map", map_path, "Map file")->required()->check(CLI::ExistingFile);
  localize->add_option("--world", world_path, "Observation world");
  localize->add_option("--head", head_paths, "Head file(s); several form an ensemble")
      ->required()
      ->delimiter(',')
      ->check(CLI::ExistingFile);
  localize->add_option("--images", which, "Frames to localize")
      ->check(CLI::IsMember({"test", "train", "all"}))
      ->capture_default_str();
  AddRansacOptions(localize, ransac_cfg, query_cap);

  std::string sequence = "seq0";
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a head on held-out frames");
  AddSeed(eval, common);
  AddOut(eval, common);
  AddFormat(eval, common);
  eval->add_option("--map", map_path, "Map file")->required()->check(CLI::ExistingFile);
  eval->add_option("--world", world_path, "Observation world");
  eval->add_option("--head", head_paths, "Head file(s)")
      ->required()
      ->delimiter(',')
      ->check(CLI::ExistingFile);
  eval->add_option("--buffer", buffer_path,
                   "Training buffer for reprojection statistics")
      ->check(CLI::ExistingFile);
  eval->add_option("--sequence", sequence, "Sequence name in the report")
      ->capture_default_str();
  AddRansacOptions(eval, ransac_cfg, query_cap);

  SuiteConfig suite_cfg = DefaultSuite();
  std::vector<double> radii = {1, 2, 5, 10, 20, 1000};
  CLI::App* ablate = app.add_subcommand("ablate", "Sampling radius ablation");
  AddSeed(ablate, common);
  AddOut(ablate, common);
  AddFormat(ablate, common);
  AddThreads(ablate, common);
  AddSuiteOptions(ablate, suite_cfg);
  ablate->add_option("--radii", radii, "Sampling radii")
      ->delimiter(',')
      ->capture_default_str();

  CLI::App* compare = app.add_subcommand("compare", "Focus against random sampling");
  AddSeed(compare, common);
  AddOut(compare, common);
  AddFormat(compare, common);
  AddThreads(compare, common);
  AddSuiteOptions(compare, suite_cfg);
  compare->add_option("--rho", suite_cfg.buffer.rho, "Focus sampling radius (px)")
      ->capture_default_str();

  std::string input;
  CLI::App* plot = app.add_subcommand("plot", "Render a report as SVG");
  AddOut(plot, common);
  plot->add_option("--input", input, "Ablation scores or report file")
      ->required()
      ->check(CLI::ExistingFile);

  std::vector<std::string> argv_storage = {"scrfocus"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (std::string& a : argv_storage) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    CLI::App* failed = &app;
    for (CLI::App* sub : app.get_subcommands()) failed = sub;
    err << failed->help();
    return 2;
  }

  Outputs outputs;
  try {
    if (synth->parsed()) {
      RunSynth(common, synth_cfg, outputs, out);
    } else if (buffer->parsed()) {
      buffer_cfg.augmentation.enabled = !no_augment;
      RunBuffer(common, map_path, world_path, buffer_cfg, strategy, outputs, out);
    } else if (train->parsed()) {
      RunTrain(common, buffer_path, map_path, train_cfg, hard_clamp, outputs, out);
    } else if (localize->parsed()) {
      RunLocalize(common, map_path, world_path, head_paths, which, ransac_cfg,
                  query_cap, outputs, out);
    } else if (eval->parsed()) {
      RunEval(common, map_path, world_path, head_paths, buffer_path, sequence,
              ransac_cfg, query_cap, outputs, out);
    } else if (ablate->parsed()) {
      RunAblate(common, suite_cfg, radii, outputs, out);
    } else if (compare->parsed()) {
      RunCompareCommand(common, suite_cfg, outputs, out);
    } else if (plot->parsed()) {
      RunPlot(common, input, outputs, out);
    }
  } catch (const std::exception& e) {
    outputs.Rollback();
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace scrfocus
