#include "scrfocus/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "scrfocus/errors.h"

namespace scrfocus {
namespace {

std::string FormatNumber(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

nlohmann::json JsonNumber(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

double ParseNumber(const std::string& s) {
  if (s == "nan") return std::nan("");
  size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument(s);
  return v;
}

}  // namespace

PoseError ComputePoseError(const Pose& est, const Pose& gt) {
  PoseError e;
  e.rotation_deg = RotationAngleBetween(gt, est) * 180.0 / M_PI;
  e.translation = (est.Center() - gt.Center()).norm();
  return e;
}

double Median(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("median of an empty list");
  const size_t n = values.size();
  const size_t mid = n / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double upper = values[mid];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lower + upper);
}

std::pair<double, double> MedianErrors(const SequenceResult& result) {
  if (result.errors.empty()) {
    throw NoSuccessfulFrames("no successfully localized frame");
  }
  std::vector<double> rot;
  std::vector<double> trans;
  for (const PoseError& e : result.errors) {
    rot.push_back(e.rotation_deg);
    trans.push_back(e.translation);
  }
  return {Median(std::move(rot)), Median(std::move(trans))};
}

double Accuracy(const SequenceResult& result, double rot_thresh_deg,
                double trans_thresh) {
  if (result.frames() == 0) throw InvalidArgument("no frames evaluated");
  int good = 0;
  for (const PoseError& e : result.errors) {
    if (e.rotation_deg < rot_thresh_deg && e.translation < trans_thresh) ++good;
  }
  return static_cast<double>(good) / result.frames();
}

std::vector<double> BufferReprojectionErrors(const ScrHead& head,
                                             const TrainingBuffer& buffer) {
  const size_t n = buffer.instances.size();
  std::vector<double> errors(n);
  constexpr size_t kChunk = 4096;
  Eigen::MatrixXf batch;
  for (size_t begin = 0; begin < n; begin += kChunk) {
    const size_t end = std::min(n, begin + kChunk);
    batch.resize(buffer.descriptor_dim, static_cast<Eigen::Index>(end - begin));
    for (size_t i = begin; i < end; ++i) {
      batch.col(static_cast<Eigen::Index>(i - begin)) =
          buffer.instances[i].descriptor;
    }
    const Eigen::MatrixXf pred = PredictBatch(head, batch);
    for (size_t i = begin; i < end; ++i) {
      const BufferInstance& inst = buffer.instances[i];
      const CameraIntrinsics k = inst.Intrinsics();
      const std::optional<double> r = ReprojectionResidual(
          pred.col(static_cast<Eigen::Index>(i - begin)).cast<double>(),
          inst.PixelD(), k, inst.CameraPose());
      errors[i] = r ? *r : std::hypot(2.0 * k.cx, 2.0 * k.cy);
    }
  }
  return errors;
}

ReprojectionStats BufferReprojectionStats(const ScrHead& head,
                                          const TrainingBuffer& buffer) {
  if (buffer.instances.empty()) throw InvalidArgument("empty buffer");
  std::vector<double> errors = BufferReprojectionErrors(head, buffer);
  ReprojectionStats s;
  double sum = 0.0;
  for (const double e : errors) sum += e;
  s.mean = sum / errors.size();
  s.median = Median(std::move(errors));
  return s;
}

AblationScores RhoAblationAggregate(const std::vector<std::vector<double>>& errors,
                                    bool sample_std) {
  if (errors.empty() || errors.front().empty()) {
    throw InvalidArgument("ablation needs at least one sequence and radius");
  }
  const size_t radii = errors.front().size();
  const size_t seqs = errors.size();
  if (sample_std && seqs < 2) {
    throw InvalidArgument("sample deviation needs two sequences");
  }
  std::vector<std::vector<double>> normalized(seqs);
  for (size_t s = 0; s < seqs; ++s) {
    if (errors[s].size() != radii) throw InvalidArgument("ragged error matrix");
    for (const double e : errors[s]) {
      if (!(e > 0.0) || !std::isfinite(e)) {
        throw InvalidArgument("ablation errors must be positive and finite");
      }
    }
    const double lo = *std::min_element(errors[s].begin(), errors[s].end());
    for (const double e : errors[s]) normalized[s].push_back(e / lo);
  }
  AblationScores out;
  for (size_t r = 0; r < radii; ++r) {
    double mean = 0.0;
    for (size_t s = 0; s < seqs; ++s) mean += normalized[s][r];
    mean /= seqs;
    double var = 0.0;
    for (size_t s = 0; s < seqs; ++s) {
      var += (normalized[s][r] - mean) * (normalized[s][r] - mean);
    }
    var /= sample_std ? seqs - 1 : seqs;
    out.scores.push_back(mean + std::sqrt(var));
  }
  for (size_t r = 1; r < radii; ++r) {
    if (out.scores[r] < out.scores[out.argmin]) out.argmin = static_cast<int>(r);
  }
  return out;
}

std::string FormatReportCsv(const std::vector<ReportRow>& rows,
                            const ReportMeta& meta) {
  std::ostringstream out;
  out << "# seed: " << meta.seed << "\n";
  out << "# config_hash: " << meta.config_hash << "\n";
  out << kReportHeader << "\n";
  for (const ReportRow& r : rows) {
    out << r.sequence << ',' << FormatNumber(r.rho) << ',' << r.strategy << ','
        << FormatNumber(r.median_rot_deg) << ',' << FormatNumber(r.median_trans)
        << ',' << FormatNumber(r.accuracy) << ','
        << FormatNumber(r.mean_reproj_px) << ','
        << FormatNumber(r.median_reproj_px) << ',' << r.frames << ','
        << r.failures << "\n";
  }
  return out.str();
}

std::string FormatReportJson(const std::vector<ReportRow>& rows,
                             const ReportMeta& meta) {
  nlohmann::ordered_json doc;
  doc["seed"] = meta.seed;
  doc["config_hash"] = meta.config_hash;
  doc["rows"] = nlohmann::ordered_json::array();
  for (const ReportRow& r : rows) {
    nlohmann::ordered_json row;
    row["sequence"] = r.sequence;
    row["rho"] = JsonNumber(r.rho);
    row["strategy"] = r.strategy;
    row["median_rot_deg"] = JsonNumber(r.median_rot_deg);
    row["median_trans"] = JsonNumber(r.median_trans);
    row["accuracy"] = JsonNumber(r.accuracy);
    row["mean_reproj_px"] = JsonNumber(r.mean_reproj_px);
    row["median_reproj_px"] = JsonNumber(r.median_reproj_px);
    row["frames"] = r.frames;
    row["failures"] = r.failures;
    doc["rows"].push_back(std::move(row));
  }
  return doc.dump(2) + "\n";
}

std::vector<ReportRow> ParseReportCsv(const std::string& text,
                                      ReportMeta* meta) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (meta && line.rfind("# seed: ", 0) == 0) {
        meta->seed = std::stoull(line.substr(8));
      } else if (meta && line.rfind("# config_hash: ", 0) == 0) {
        meta->config_hash = line.substr(15);
      }
      continue;
    }
    if (!header_seen) {
      if (line != kReportHeader) throw ParseError(line_no, "unexpected header");
      header_seen = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) f.push_back(field);
    if (f.size() != 10) throw ParseError(line_no, "expected 10 fields");
    try {
      ReportRow r;
      r.sequence = f[0];
      r.rho = ParseNumber(f[1]);
      r.strategy = f[2];
      r.median_rot_deg = ParseNumber(f[3]);
      r.median_trans = ParseNumber(f[4]);
      r.accuracy = ParseNumber(f[5]);
      r.mean_reproj_px = ParseNumber(f[6]);
      r.median_reproj_px = ParseNumber(f[7]);
      r.frames = std::stoi(f[8]);
      r.failures = std::stoi(f[9]);
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw ParseError(line_no, "malformed number");
    }
  }
  if (!header_seen) throw ParseError(line_no, "missing header");
  return rows;
}

}  // namespace scrfocus
