#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "scrfocus/geometry.h"
#include "scrfocus/sampler.h"

namespace scrfocus {

// Multi-layer perceptron mapping a descriptor to a scene coordinate:
// rectified-linear hidden layers, linear output, plus a constant offset
// (the scene center of the training map). Layer l maps
// weights[l].cols() inputs to weights[l].rows() outputs.
template <typename T>
struct MlpHead {
  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  Eigen::Matrix<T, 3, 1> offset = Eigen::Matrix<T, 3, 1>::Zero();

  int input_dim() const {
    return weights.empty() ? 0 : static_cast<int>(weights.front().cols());
  }
  int num_layers() const { return static_cast<int>(weights.size()); }

  // Zero weights and biases for the given widths (input, hidden..., 3).
  static MlpHead Zeros(const std::vector<int>& widths,
                       const Eigen::Vector3d& offset);
  // Uniform fan-in scaled initialization: U(-sqrt(6/fan_in), sqrt(6/fan_in))
  // weights, zero biases.
  static MlpHead Initialize(const std::vector<int>& widths,
                            const Eigen::Vector3d& offset, uint64_t seed);

  // Throws InvalidArgument on inconsistent shapes or non-finite values.
  void Validate() const;

  template <typename U>
  MlpHead<U> Cast() const {
    MlpHead<U> out;
    for (const Matrix& w : weights) out.weights.push_back(w.template cast<U>());
    for (const Vector& b : biases) out.biases.push_back(b.template cast<U>());
    out.offset = offset.template cast<U>();
    return out;
  }
};

using ScrHead = MlpHead<float>;

std::vector<int> DefaultLayerWidths(int descriptor_dim);

// Forward pass. Throws DimMismatch.
template <typename T>
ScenePoint Predict(const MlpHead<T>& head, const Descriptor& d);
// Batched forward pass over the columns of `descriptors` (D x N); returns
// 3 x N scene coordinates.
template <typename T>
typename MlpHead<T>::Matrix PredictBatch(
    const MlpHead<T>& head, const typename MlpHead<T>::Matrix& descriptors);

struct LossConfig {
  double tau = 50.0;         // clamp, pixels
  bool soft_clamp = true;    // tau * tanh(r / tau), else min(r, tau)
  double fallback_depth = 5.0;  // camera depth of the behind-camera target
  double z_min = kMinDepth;
};

// Clamped L1 reprojection loss of the prediction for one instance. When the
// prediction is behind the camera, the loss is the L1 distance (scene
// units) to the point at fallback_depth on the instance's pixel ray.
template <typename T>
double Loss(const MlpHead<T>& head, const BufferInstance& instance,
            const LossConfig& cfg);

template <typename T>
struct LossGradientResult {
  MlpHead<T> gradient;  // offset entry is always zero
  double mean_loss = 0.0;
};

// Mean loss and mean gradient over a non-empty batch.
template <typename T>
LossGradientResult<T> LossGradient(const MlpHead<T>& head,
                                   std::span<const BufferInstance> batch,
                                   const LossConfig& cfg);

struct TrainConfig {
  int passes = 16;
  int batch_size = 5120;  // capped at max(1, buffer size / 10)
  double peak_lr = 3e-3;
  double tau = 50.0;
  bool soft_clamp = true;
  // Depth of the behind-camera fallback target; <= 0 selects the median
  // camera depth of the scene center over the buffer.
  double fallback_depth = 0.0;
  std::vector<int> hidden = {128, 128, 128};
  uint64_t seed = 0;
  int num_threads = 1;
};

struct TrainReport {
  std::vector<double> pass_loss;  // mean training loss per pass
  double wall_seconds = 0.0;
  int steps = 0;
  int batch_size = 0;
  double fallback_depth = 0.0;
};

// Adam with a one-cycle learning-rate schedule over cfg.passes shuffled
// passes. Bit-reproducible for a fixed seed, independent of num_threads.
// Throws InvalidArgument, NonFiniteLoss.
ScrHead Train(const TrainingBuffer& buffer, const Eigen::Vector3d& scene_center,
              const TrainConfig& cfg, TrainReport* report = nullptr);

// Binary head file: "FTHEAD1", u32 layer count, per layer u32 rows,
// u32 cols, f32 weights (row-major), f32 biases; then 3 x f32 offset.
std::string SerializeHead(const ScrHead& head);
ScrHead DeserializeHead(const std::string& bytes);
void WriteHead(const ScrHead& head, const std::string& path);
ScrHead ReadHead(const std::string& path);

}  // namespace scrfocus
