#include "scrfocus/scr_head.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

#include "scrfocus/binary_io.h"
#include "scrfocus/errors.h"
#include "scrfocus/parallel.h"
#include "scrfocus/random.h"

namespace scrfocus {
namespace {

constexpr std::string_view kHeadMagic = "FTHEAD1";
constexpr uint64_t kInitStream = 0x1417;
constexpr uint64_t kEpochStream = 0xe90c;
// Gradient terms are summed per fixed-size chunk and reduced in chunk
// order, which keeps training independent of the thread count.
constexpr int kChunk = 1024;

template <typename T>
T Sign(T v) {
  return static_cast<T>((v > T(0)) - (v < T(0)));
}

// Per-instance geometry in the working precision.
template <typename T>
struct InstanceGeometry {
  Eigen::Matrix<T, 3, 3> r_cw;
  Eigen::Matrix<T, 3, 1> t_cw;
  T fx, fy, cx, cy;
  T u, v;
  Eigen::Matrix<T, 3, 1> fallback;
};

template <typename T>
struct PreparedData {
  typename MlpHead<T>::Matrix descriptors;  // D x N
  std::vector<InstanceGeometry<T>> geometry;
};

template <typename T>
PreparedData<T> Prepare(std::span<const BufferInstance> instances, int dim,
                        double fallback_depth) {
  PreparedData<T> data;
  data.descriptors.resize(dim, static_cast<Eigen::Index>(instances.size()));
  data.geometry.resize(instances.size());
  for (size_t i = 0; i < instances.size(); ++i) {
    const BufferInstance& inst = instances[i];
    if (inst.descriptor.size() != dim) {
      throw DimMismatch("instance descriptor dimension " +
                        std::to_string(inst.descriptor.size()) +
                        " does not match head input " + std::to_string(dim));
    }
    data.descriptors.col(i) = inst.descriptor.cast<T>();
    const Pose h = inst.CameraPose();
    const CameraIntrinsics k = inst.Intrinsics();
    const Eigen::Matrix3d r_cw = h.RotationMatrix().transpose();
    InstanceGeometry<T>& g = data.geometry[i];
    g.r_cw = r_cw.cast<T>();
    g.t_cw = (-(r_cw * h.translation)).cast<T>();
    g.fx = static_cast<T>(k.fx);
    g.fy = static_cast<T>(k.fy);
    g.cx = static_cast<T>(k.cx);
    g.cy = static_cast<T>(k.cy);
    g.u = static_cast<T>(inst.pixel[0]);
    g.v = static_cast<T>(inst.pixel[1]);
    g.fallback = BackprojectRay(inst.PixelD(), k, h, fallback_depth).cast<T>();
  }
  return data;
}

// Loss of one prediction and its gradient with respect to the prediction.
template <typename T>
T InstanceLoss(const Eigen::Matrix<T, 3, 1>& x, const InstanceGeometry<T>& g,
               const LossConfig& cfg, Eigen::Matrix<T, 3, 1>* grad) {
  const Eigen::Matrix<T, 3, 1> xc = g.r_cw * x + g.t_cw;
  if (xc.z() > static_cast<T>(cfg.z_min)) {
    const T inv_z = T(1) / xc.z();
    const T du = g.fx * xc.x() * inv_z + g.cx - g.u;
    const T dv = g.fy * xc.y() * inv_z + g.cy - g.v;
    const T r = std::abs(du) + std::abs(dv);
    const T tau = static_cast<T>(cfg.tau);
    T loss;
    T dloss_dr;
    if (cfg.soft_clamp) {
      const T th = std::tanh(r / tau);
      loss = tau * th;
      dloss_dr = T(1) - th * th;
    } else {
      loss = std::min(r, tau);
      dloss_dr = r < tau ? T(1) : T(0);
    }
    if (grad) {
      const T su = Sign(du) * dloss_dr;
      const T sv = Sign(dv) * dloss_dr;
      Eigen::Matrix<T, 3, 1> g_cam;
      g_cam << su * g.fx * inv_z, sv * g.fy * inv_z,
          -(su * g.fx * xc.x() + sv * g.fy * xc.y()) * inv_z * inv_z;
      *grad = g.r_cw.transpose() * g_cam;
    }
    return loss;
  }
  const Eigen::Matrix<T, 3, 1> diff = x - g.fallback;
  if (grad) {
    *grad = diff.unaryExpr([](T v) { return Sign(v); });
  }
  return diff.cwiseAbs().sum();
}

template <typename T>
void ZeroLike(const MlpHead<T>& head, MlpHead<T>* out) {
  out->weights.clear();
  out->biases.clear();
  for (const auto& w : head.weights) {
    out->weights.push_back(MlpHead<T>::Matrix::Zero(w.rows(), w.cols()));
  }
  for (const auto& b : head.biases) {
    out->biases.push_back(MlpHead<T>::Vector::Zero(b.size()));
  }
  out->offset.setZero();
}

// Adds the summed gradient of columns `cols` of `data` into `grad` and
// returns the summed loss.
template <typename T>
double AccumulateChunk(const MlpHead<T>& head, const PreparedData<T>& data,
                       std::span<const int> cols, const LossConfig& cfg,
                       MlpHead<T>* grad) {
  using Matrix = typename MlpHead<T>::Matrix;
  const int n = static_cast<int>(cols.size());
  const int layers = head.num_layers();
  std::vector<Matrix> acts(layers);  // inputs to each layer
  acts[0].resize(head.input_dim(), n);
  for (int i = 0; i < n; ++i) acts[0].col(i) = data.descriptors.col(cols[i]);
  Matrix z;
  for (int l = 0; l < layers; ++l) {
    z.noalias() = head.weights[l] * acts[l];
    z.colwise() += head.biases[l];
    if (l + 1 < layers) {
      acts[l + 1] = z.cwiseMax(T(0));
    }
  }
  Matrix delta(3, n);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::Matrix<T, 3, 1> x = z.col(i) + head.offset;
    Eigen::Matrix<T, 3, 1> g;
    loss += static_cast<double>(InstanceLoss(x, data.geometry[cols[i]], cfg, &g));
    delta.col(i) = g;
  }
  for (int l = layers - 1; l >= 0; --l) {
    grad->weights[l].noalias() += delta * acts[l].transpose();
    grad->biases[l] += delta.rowwise().sum();
    if (l > 0) {
      Matrix prev = head.weights[l].transpose() * delta;
      delta = prev.cwiseProduct(
          acts[l].unaryExpr([](T a) { return a > T(0) ? T(1) : T(0); }));
    }
  }
  return loss;
}

// Mean loss and mean gradient over `cols`, chunked and reduced in order.
template <typename T>
double BatchGradient(const MlpHead<T>& head, const PreparedData<T>& data,
                     std::span<const int> cols, const LossConfig& cfg,
                     int num_threads, MlpHead<T>* grad) {
  const size_t chunks = (cols.size() + kChunk - 1) / kChunk;
  std::vector<MlpHead<T>> partial(chunks);
  std::vector<double> losses(chunks, 0.0);
  ParallelFor(chunks, num_threads, [&](size_t c) {
    ZeroLike(head, &partial[c]);
    const size_t begin = c * kChunk;
    const size_t end = std::min(cols.size(), begin + kChunk);
    losses[c] = AccumulateChunk(head, data, cols.subspan(begin, end - begin),
                                cfg, &partial[c]);
  });
  ZeroLike(head, grad);
  double loss = 0.0;
  for (size_t c = 0; c < chunks; ++c) {
    for (int l = 0; l < head.num_layers(); ++l) {
      grad->weights[l] += partial[c].weights[l];
      grad->biases[l] += partial[c].biases[l];
    }
    loss += losses[c];
  }
  const T inv = T(1) / static_cast<T>(cols.size());
  for (int l = 0; l < head.num_layers(); ++l) {
    grad->weights[l] *= inv;
    grad->biases[l] *= inv;
  }
  return loss / static_cast<double>(cols.size());
}

double OneCycleLr(double peak, int step, int total) {
  // Cosine warm-up from peak/25 over the first 30% of steps, then cosine
  // annealing to peak/1e4.
  const double start = peak / 25.0;
  const double end = peak / 1e4;
  const int warm = std::max(1, static_cast<int>(0.3 * total));
  auto cos_interp = [](double a, double b, double t) {
    return b + (a - b) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
  };
  if (step < warm) {
    return cos_interp(start, peak, static_cast<double>(step) / warm);
  }
  const int rest = std::max(1, total - warm);
  return cos_interp(peak, end, static_cast<double>(step - warm) / rest);
}

double MedianDepth(const TrainingBuffer& buffer, const Eigen::Vector3d& center) {
  std::vector<double> depths;
  depths.reserve(buffer.instances.size());
  for (const BufferInstance& inst : buffer.instances) {
    const double z = inst.CameraPose().WorldToCamera(center).z();
    if (z > 0.0) depths.push_back(z);
  }
  if (depths.empty()) return 1.0;
  const size_t mid = depths.size() / 2;
  std::nth_element(depths.begin(), depths.begin() + mid, depths.end());
  return depths[mid];
}

}  // namespace

std::vector<int> DefaultLayerWidths(int descriptor_dim) {
  return {descriptor_dim, 128, 128, 128, 3};
}

template <typename T>
MlpHead<T> MlpHead<T>::Zeros(const std::vector<int>& widths,
                             const Eigen::Vector3d& offset) {
  if (widths.size() < 2 || widths.back() != 3) {
    throw InvalidArgument("layer widths must end with 3 outputs");
  }
  MlpHead head;
  for (size_t l = 0; l + 1 < widths.size(); ++l) {
    if (widths[l] < 1) throw InvalidArgument("layer widths must be positive");
    head.weights.push_back(Matrix::Zero(widths[l + 1], widths[l]));
    head.biases.push_back(Vector::Zero(widths[l + 1]));
  }
  head.offset = offset.cast<T>();
  return head;
}

template <typename T>
MlpHead<T> MlpHead<T>::Initialize(const std::vector<int>& widths,
                                  const Eigen::Vector3d& offset,
                                  uint64_t seed) {
  MlpHead head = Zeros(widths, offset);
  for (int l = 0; l < head.num_layers(); ++l) {
    Rng rng(HashSeed({seed, kInitStream, static_cast<uint64_t>(l)}));
    const double bound = std::sqrt(6.0 / head.weights[l].cols());
    // Row-major fill order, matching the file layout.
    for (Eigen::Index r = 0; r < head.weights[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < head.weights[l].cols(); ++c) {
        head.weights[l](r, c) = static_cast<T>(rng.Uniform(-bound, bound));
      }
    }
  }
  return head;
}

template <typename T>
void MlpHead<T>::Validate() const {
  if (weights.empty() || weights.size() != biases.size()) {
    throw InvalidArgument("head has no layers or mismatched biases");
  }
  for (size_t l = 0; l < weights.size(); ++l) {
    if (biases[l].size() != weights[l].rows() ||
        (l > 0 && weights[l].cols() != weights[l - 1].rows())) {
      throw InvalidArgument("inconsistent layer shapes at layer " +
                            std::to_string(l));
    }
    if (!weights[l].allFinite() || !biases[l].allFinite()) {
      throw InvalidArgument("non-finite head parameters");
    }
  }
  if (weights.back().rows() != 3) {
    throw InvalidArgument("head must output 3 values");
  }
  if (!offset.allFinite()) throw InvalidArgument("non-finite head offset");
}

template <typename T>
typename MlpHead<T>::Matrix PredictBatch(
    const MlpHead<T>& head, const typename MlpHead<T>::Matrix& descriptors) {
  if (descriptors.rows() != head.input_dim()) {
    throw DimMismatch("descriptor dimension " +
                      std::to_string(descriptors.rows()) +
                      " does not match head input " +
                      std::to_string(head.input_dim()));
  }
  typename MlpHead<T>::Matrix a = descriptors;
  for (int l = 0; l < head.num_layers(); ++l) {
    typename MlpHead<T>::Matrix z = head.weights[l] * a;
    z.colwise() += head.biases[l];
    a = l + 1 < head.num_layers() ? z.cwiseMax(T(0)) : z;
  }
  a.colwise() += head.offset;
  return a;
}

template <typename T>
ScenePoint Predict(const MlpHead<T>& head, const Descriptor& d) {
  const typename MlpHead<T>::Matrix x = d.cast<T>();
  return PredictBatch(head, x).col(0).template cast<double>();
}

template <typename T>
double Loss(const MlpHead<T>& head, const BufferInstance& instance,
            const LossConfig& cfg) {
  const PreparedData<T> data = Prepare<T>(std::span(&instance, 1),
                                          head.input_dim(), cfg.fallback_depth);
  const Eigen::Matrix<T, 3, 1> x =
      PredictBatch(head, data.descriptors).col(0);
  return static_cast<double>(InstanceLoss<T>(x, data.geometry[0], cfg, nullptr));
}

template <typename T>
LossGradientResult<T> LossGradient(const MlpHead<T>& head,
                                   std::span<const BufferInstance> batch,
                                   const LossConfig& cfg) {
  if (batch.empty()) {
    throw InvalidArgument("loss gradient needs a non-empty batch");
  }
  const PreparedData<T> data =
      Prepare<T>(batch, head.input_dim(), cfg.fallback_depth);
  std::vector<int> cols(batch.size());
  for (size_t i = 0; i < cols.size(); ++i) cols[i] = static_cast<int>(i);
  LossGradientResult<T> result;
  result.mean_loss = BatchGradient(head, data, cols, cfg, 1, &result.gradient);
  return result;
}

template struct MlpHead<float>;
template struct MlpHead<double>;
template ScenePoint Predict(const MlpHead<float>&, const Descriptor&);
template ScenePoint Predict(const MlpHead<double>&, const Descriptor&);
template MlpHead<float>::Matrix PredictBatch(const MlpHead<float>&,
                                             const MlpHead<float>::Matrix&);
template MlpHead<double>::Matrix PredictBatch(const MlpHead<double>&,
                                              const MlpHead<double>::Matrix&);
template double Loss(const MlpHead<float>&, const BufferInstance&,
                     const LossConfig&);
template double Loss(const MlpHead<double>&, const BufferInstance&,
                     const LossConfig&);
template LossGradientResult<float> LossGradient(const MlpHead<float>&,
                                                std::span<const BufferInstance>,
                                                const LossConfig&);
template LossGradientResult<double> LossGradient(
    const MlpHead<double>&, std::span<const BufferInstance>, const LossConfig&);

ScrHead Train(const TrainingBuffer& buffer, const Eigen::Vector3d& scene_center,
              const TrainConfig& cfg, TrainReport* report) {
  const auto start = std::chrono::steady_clock::now();
  if (buffer.instances.empty()) {
    throw InvalidArgument("cannot train on an empty buffer");
  }
  if (cfg.passes < 1 || cfg.batch_size < 1 || !(cfg.tau > 0.0)) {
    throw InvalidArgument("passes, batch_size and tau must be positive");
  }
  const int n = static_cast<int>(buffer.instances.size());
  const int batch = std::min(cfg.batch_size, std::max(1, n / 10));

  LossConfig loss_cfg;
  loss_cfg.tau = cfg.tau;
  loss_cfg.soft_clamp = cfg.soft_clamp;
  loss_cfg.fallback_depth = cfg.fallback_depth > 0.0
                                ? cfg.fallback_depth
                                : MedianDepth(buffer, scene_center);

  std::vector<int> widths = {buffer.descriptor_dim};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(3);
  ScrHead head = ScrHead::Initialize(widths, scene_center, cfg.seed);

  const PreparedData<float> data = Prepare<float>(
      buffer.instances, buffer.descriptor_dim, loss_cfg.fallback_depth);

  ScrHead m;
  ScrHead v;
  ZeroLike(head, &m);
  ZeroLike(head, &v);
  constexpr float kBeta1 = 0.9f;
  constexpr float kBeta2 = 0.999f;
  constexpr float kEps = 1e-8f;

  const int batches_per_pass = (n + batch - 1) / batch;
  const int total_steps = batches_per_pass * cfg.passes;
  std::vector<int> order(n);
  ScrHead grad;
  TrainReport local;
  local.batch_size = batch;
  local.fallback_depth = loss_cfg.fallback_depth;
  int step = 0;
  for (int pass = 0; pass < cfg.passes; ++pass) {
    for (int i = 0; i < n; ++i) order[i] = i;
    Rng rng(HashSeed({cfg.seed, kEpochStream, static_cast<uint64_t>(pass)}));
    for (int i = n; i > 1; --i) {
      std::swap(order[i - 1], order[rng.UniformInt(i)]);
    }
    double pass_loss = 0.0;
    for (int b = 0; b < batches_per_pass; ++b) {
      const int begin = b * batch;
      const int count = std::min(batch, n - begin);
      const std::span<const int> cols(order.data() + begin, count);
      const double loss =
          BatchGradient(head, data, cols, loss_cfg, cfg.num_threads, &grad);
      if (!std::isfinite(loss)) {
        throw NonFiniteLoss("non-finite loss at pass " + std::to_string(pass) +
                            ", batch " + std::to_string(b));
      }
      pass_loss += loss * count;

      ++step;
      const float lr =
          static_cast<float>(OneCycleLr(cfg.peak_lr, step - 1, total_steps));
      const float c1 = 1.0f / (1.0f - std::pow(kBeta1, static_cast<float>(step)));
      const float c2 = 1.0f / (1.0f - std::pow(kBeta2, static_cast<float>(step)));
      auto update = [&](auto& param, auto& mom, auto& vel, const auto& g) {
        mom = kBeta1 * mom + (1.0f - kBeta1) * g;
        vel = kBeta2 * vel + (1.0f - kBeta2) * g.cwiseProduct(g);
        param.array() -= lr * (mom.array() * c1) /
                         ((vel.array() * c2).sqrt() + kEps);
      };
      for (int l = 0; l < head.num_layers(); ++l) {
        update(head.weights[l], m.weights[l], v.weights[l], grad.weights[l]);
        update(head.biases[l], m.biases[l], v.biases[l], grad.biases[l]);
      }
    }
    local.pass_loss.push_back(pass_loss / n);
  }
  local.steps = step;
  local.wall_seconds = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - start)
                           .count();
  if (report) *report = std::move(local);
  return head;
}

std::string SerializeHead(const ScrHead& head) {
  head.Validate();
  ByteWriter w;
  w.Bytes(kHeadMagic);
  w.U32(static_cast<uint32_t>(head.num_layers()));
  for (int l = 0; l < head.num_layers(); ++l) {
    const auto& wl = head.weights[l];
    w.U32(static_cast<uint32_t>(wl.rows()));
    w.U32(static_cast<uint32_t>(wl.cols()));
    for (Eigen::Index r = 0; r < wl.rows(); ++r) {
      for (Eigen::Index c = 0; c < wl.cols(); ++c) w.F32(wl(r, c));
    }
    for (Eigen::Index r = 0; r < wl.rows(); ++r) w.F32(head.biases[l][r]);
  }
  for (int i = 0; i < 3; ++i) w.F32(head.offset[i]);
  return w.Release();
}

ScrHead DeserializeHead(const std::string& bytes) {
  ByteReader r(bytes);
  if (r.Bytes(kHeadMagic.size()) != kHeadMagic) {
    throw ParseError(0, "not a head file (bad magic)");
  }
  ScrHead head;
  const uint32_t layers = r.U32();
  if (layers == 0 || layers > 64) {
    throw ParseError(0, "implausible layer count");
  }
  for (uint32_t l = 0; l < layers; ++l) {
    const uint32_t rows = r.U32();
    const uint32_t cols = r.U32();
    if (rows == 0 || cols == 0 ||
        static_cast<uint64_t>(rows) * cols * 4 > r.remaining()) {
      throw ParseError(0, "implausible layer shape");
    }
    ScrHead::Matrix w(rows, cols);
    for (uint32_t i = 0; i < rows; ++i) {
      for (uint32_t j = 0; j < cols; ++j) w(i, j) = r.F32();
    }
    ScrHead::Vector b(rows);
    for (uint32_t i = 0; i < rows; ++i) b[i] = r.F32();
    head.weights.push_back(std::move(w));
    head.biases.push_back(std::move(b));
  }
  for (int i = 0; i < 3; ++i) head.offset[i] = r.F32();
  if (r.remaining() != 0) {
    throw ParseError(0, "trailing bytes in head file");
  }
  try {
    head.Validate();
  } catch (const InvalidArgument& e) {
    throw ParseError(0, e.what());
  }
  return head;
}

void WriteHead(const ScrHead& head, const std::string& path) {
  WriteFileBytes(path, SerializeHead(head));
}

ScrHead ReadHead(const std::string& path) {
  return DeserializeHead(ReadFileBytes(path));
}

}  // namespace scrfocus
