// Copyright 2026 The OrganSeg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// A small convolutional classifier over binary shape images, implemented
// from scratch: NHWC float tensors, 3x3 same-padded convolutions lowered to
// GEMM, 2x2 max pooling, dense layers, inverted dropout and a softmax head
// trained with momentum SGD on cross-entropy.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "organseg/organs.hpp"
#include "organseg/raster.hpp"
#include "organseg/rng.hpp"

namespace organseg::shapenet {

// Output order: Brain, Heart, Liver, Kidney, Spine, None.
inline constexpr int kNumClasses = 6;
inline constexpr int kNoneClass = 5;
inline constexpr int kDefaultInputSide = 64;

inline constexpr int class_of(OrganId id) { return index_of(id); }

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, float fill = 0.0f);
  Tensor(std::vector<int> shape, std::vector<float> data);

  const std::vector<int>& shape() const { return shape_; }
  int dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // Same buffer, new shape with equal element count.
  void reshape(std::vector<int> shape);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<int> shape_;
  std::vector<float> data_;
};

enum class LayerKind : std::uint8_t {
  kConv3x3,
  kRelu,
  kMaxPool2x2,
  kFlatten,
  kDense,
  kDropout,
  kSoftmax
};

struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  int units = 0;      // conv output channels or dense width
  float rate = 0.0f;  // dropout probability

  static LayerSpec conv3x3(int channels) { return {LayerKind::kConv3x3, channels, 0.0f}; }
  static LayerSpec relu() { return {LayerKind::kRelu, 0, 0.0f}; }
  static LayerSpec maxpool2x2() { return {LayerKind::kMaxPool2x2, 0, 0.0f}; }
  static LayerSpec flatten() { return {LayerKind::kFlatten, 0, 0.0f}; }
  static LayerSpec dense(int units) { return {LayerKind::kDense, units, 0.0f}; }
  static LayerSpec dropout(float rate) { return {LayerKind::kDropout, 0, rate}; }
  static LayerSpec softmax() { return {LayerKind::kSoftmax, 0, 0.0f}; }

  bool has_params() const {
    return kind == LayerKind::kConv3x3 || kind == LayerKind::kDense;
  }
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// The conv-stage / dense-head family every saved network belongs to:
//   [conv3x3(c), relu, maxpool2x2] per conv channel entry, flatten,
//   [dense(u), relu] per dense entry, dropout, dense(6), softmax.
struct ArchitectureOptions {
  int input_side = kDefaultInputSide;
  std::vector<int> conv_channels{32, 32, 64};
  std::vector<int> dense_units{128, 64};
  float dropout = 0.5f;
};

std::vector<LayerSpec> standard_layers(const ArchitectureOptions& opts);

// Channel widths used when a sweep asks for `stages` conv stages.
std::vector<int> conv_channels_for_stages(int stages);

class ShapeNet {
 public:
  // Validates that the layers chain on a side x side x 1 input and end in a
  // 6-way softmax. Parameters start at zero. Throws ShapeError.
  ShapeNet(int input_side, std::vector<LayerSpec> layers);

  int input_side() const { return input_side_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }

  // Weight then bias for every conv and dense layer, in layer order. Conv
  // weights are [3, 3, in, out]; dense weights are [in, out].
  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }

  // Per-sample activation shape after each layer.
  const std::vector<std::vector<int>>& activation_shapes() const {
    return shapes_;
  }

  void set_dropout_rate(float rate);

  // He-normal weights, zero biases.
  void he_initialize(std::uint64_t seed);

  friend bool operator==(const ShapeNet&, const ShapeNet&) = default;

 private:
  int input_side_;
  std::vector<LayerSpec> layers_;
  std::vector<std::vector<int>> shapes_;
  std::vector<Tensor> params_;
};

ShapeNet make_network(const ArchitectureOptions& opts, std::uint64_t seed);

// Three conv stages (32, 32, 64), dense 128 and 64, dropout 0.5, 6-way
// softmax on a kDefaultInputSide square input.
ShapeNet default_architecture(std::uint64_t seed);

// batch is (n, side, side, 1); returns (n, 6) probabilities. Dropout is active
// only in train mode, which then requires `rng`. Throws ShapeError.
Tensor forward(const ShapeNet& net, const Tensor& batch, bool train_mode,
               Rng* rng = nullptr);

// Mean of -ln p[label]. Throws ArgumentError for labels outside 0..5.
double cross_entropy_loss(const Tensor& probs, std::span<const int> labels);

struct Gradients {
  std::vector<Tensor> params;  // aligned with ShapeNet::params()
  Tensor logits;               // d loss / d pre-softmax logits
  Tensor probs;
  double loss = 0.0;
};

// Train-mode forward then exact backpropagation of the mean cross-entropy.
// The dropout masks are drawn from `rng` once and reused by the backward pass.
Gradients backward(const ShapeNet& net, const Tensor& batch,
                   std::span<const int> labels, Rng& rng);

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 32;
  int epochs = 70;
  std::uint64_t seed = 1;
  float dropout = 0.5f;
};

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;  // train-mode predictions over the epoch
};

// Labelled shape images, each side x side floats in [0, 1].
struct ShapeDataset {
  int side = kDefaultInputSide;
  std::vector<float> images;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  void add(std::span<const float> image, int label);
  std::span<const float> image(std::size_t i) const;
  Tensor batch(std::span<const std::size_t> indices) const;
};

// Stateful SGD loop. Running e1 epochs then e2 more is bit-identical to a
// fresh run of e1 + e2 epochs with the same seed.
class Trainer {
 public:
  Trainer(ShapeNet net, const TrainConfig& cfg);

  // Throws ArgumentError on an empty or mislabelled dataset, TrainingError on
  // a non-finite loss.
  void run_epochs(const ShapeDataset& data, int epochs);

  const ShapeNet& net() const { return net_; }
  ShapeNet& net() { return net_; }
  int epochs_done() const { return static_cast<int>(history_.size()); }
  const std::vector<EpochStats>& history() const { return history_; }

 private:
  ShapeNet net_;
  TrainConfig cfg_;
  Rng rng_;
  std::vector<Tensor> velocity_;
  std::vector<EpochStats> history_;
};

struct TrainResult {
  ShapeNet net;
  std::vector<EpochStats> history;
};

TrainResult train(ShapeNet net, const ShapeDataset& data,
                  const TrainConfig& cfg);

struct Prediction {
  int label = 0;
  float probability = 0.0f;
  std::array<float, kNumClasses> probs{};
};

// BitMask -> 0/1 plane -> bilinear resize to side x side.
void shape_plane(const BitMask& shape, int side, std::span<float> out);
Tensor shape_tensor(const BitMask& shape, int side);

// Eval-mode argmax; ties go to the lowest class index.
Prediction predict_class(const ShapeNet& net, const BitMask& shape);
Prediction predict_class(const ShapeNet& net, const Tensor& sample);
std::vector<Prediction> predict_batch(const ShapeNet& net, const Tensor& batch);

// "OSNW1", u32 parametrized-layer count, then for each weight and bias
// tensor: u32 rank, u32 dims, float32 values; all little-endian.
void save_weights(const ShapeNet& net, const std::filesystem::path& path);

// Rebuilds the network from the stored tensor shapes (standard family).
// Throws FormatError.
ShapeNet load_weights(const std::filesystem::path& path);

// As above, and additionally requires the layers of `expected`.
ShapeNet load_weights(const std::filesystem::path& path,
                      const std::vector<LayerSpec>& expected);

// Largest |analytic - numeric| / max(|numeric|, floor) over a seeded sample of
// up to 200 coordinates per parameter tensor, numeric gradients from central
// differences of step `eps`. Coordinates whose +-eps probes change a ReLU
// sign or a max-pool winner are skipped when `skip_kinks` is set, since the
// loss is not differentiable across those points. `tamper` may corrupt the
// analytic gradients.
struct GradientCheckOptions {
  double eps = 1e-2;
  double floor = 1e-3;
  std::size_t coords_per_tensor = 200;
  std::uint64_t seed = 1;
  bool skip_kinks = true;
  std::function<void(std::vector<Tensor>&)> tamper;
};

double gradient_check(const ShapeNet& net, const Tensor& sample, int label,
                      const GradientCheckOptions& opts);

}  // namespace organseg::shapenet
