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

#include "organseg/shapenet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "organseg/binio.hpp"
#include "organseg/error.hpp"
#include "organseg/simd/kernels.hpp"

namespace organseg::shapenet {
namespace {

std::size_t product(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i)
    s += (i ? "," : "") + std::to_string(shape[i]);
  return s + ")";
}

}  // namespace

Tensor::Tensor(std::vector<int> shape, float fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(std::vector<int> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != product(shape_))
    throw ShapeError("tensor buffer does not match shape " + shape_str(shape_));
}

void Tensor::reshape(std::vector<int> shape) {
  if (product(shape) != data_.size())
    throw ShapeError("cannot reshape to " + shape_str(shape));
  shape_ = std::move(shape);
}

std::vector<LayerSpec> standard_layers(const ArchitectureOptions& opts) {
  std::vector<LayerSpec> layers;
  for (int c : opts.conv_channels) {
    layers.push_back(LayerSpec::conv3x3(c));
    layers.push_back(LayerSpec::relu());
    layers.push_back(LayerSpec::maxpool2x2());
  }
  layers.push_back(LayerSpec::flatten());
  for (int u : opts.dense_units) {
    layers.push_back(LayerSpec::dense(u));
    layers.push_back(LayerSpec::relu());
  }
  layers.push_back(LayerSpec::dropout(opts.dropout));
  layers.push_back(LayerSpec::dense(kNumClasses));
  layers.push_back(LayerSpec::softmax());
  return layers;
}

std::vector<int> conv_channels_for_stages(int stages) {
  static constexpr int kWidths[] = {32, 32, 64, 64, 64, 64};
  if (stages < 1 || stages > 6)
    throw ArgumentError("conv stage count must be in 1..6");
  return {kWidths, kWidths + stages};
}

ShapeNet::ShapeNet(int input_side, std::vector<LayerSpec> layers)
    : input_side_(input_side), layers_(std::move(layers)) {
  if (input_side < 1) throw ShapeError("input side must be positive");
  std::vector<int> shape = {input_side, input_side, 1};
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    const std::string where = "layer " + std::to_string(i) + ": ";
    switch (l.kind) {
      case LayerKind::kConv3x3:
        if (shape.size() != 3) throw ShapeError(where + "conv needs an HWC input");
        if (l.units < 1) throw ShapeError(where + "conv needs >= 1 channel");
        params_.emplace_back(std::vector<int>{3, 3, shape[2], l.units});
        params_.emplace_back(std::vector<int>{l.units});
        shape[2] = l.units;
        break;
      case LayerKind::kMaxPool2x2:
        if (shape.size() != 3 || shape[0] % 2 || shape[1] % 2)
          throw ShapeError(where + "max pool needs an even HWC input, got " +
                           shape_str(shape));
        shape[0] /= 2;
        shape[1] /= 2;
        break;
      case LayerKind::kFlatten:
        shape = {static_cast<int>(product(shape))};
        break;
      case LayerKind::kDense:
        if (shape.size() != 1) throw ShapeError(where + "dense needs a flat input");
        if (l.units < 1) throw ShapeError(where + "dense needs >= 1 unit");
        params_.emplace_back(std::vector<int>{shape[0], l.units});
        params_.emplace_back(std::vector<int>{l.units});
        shape[0] = l.units;
        break;
      case LayerKind::kDropout:
        if (!(l.rate >= 0.0f && l.rate < 1.0f))
          throw ShapeError(where + "dropout rate must be in [0, 1)");
        break;
      case LayerKind::kRelu:
        break;
      case LayerKind::kSoftmax:
        if (i + 1 != layers_.size()) throw ShapeError(where + "softmax must be last");
        break;
    }
    shapes_.push_back(shape);
  }
  if (layers_.empty() || layers_.back().kind != LayerKind::kSoftmax ||
      shape != std::vector<int>{kNumClasses})
    throw ShapeError("network must end in a 6-way softmax, got " +
                     shape_str(shape));
}

void ShapeNet::set_dropout_rate(float rate) {
  if (!(rate >= 0.0f && rate < 1.0f))
    throw ArgumentError("dropout rate must be in [0, 1)");
  for (auto& l : layers_)
    if (l.kind == LayerKind::kDropout) l.rate = rate;
}

void ShapeNet::he_initialize(std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t p = 0; p < params_.size(); p += 2) {
    Tensor& w = params_[p];
    const std::size_t fan_in = w.size() / static_cast<std::size_t>(w.shape().back());
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (float& v : w.values()) v = static_cast<float>(sd * rng.normal());
    std::fill(params_[p + 1].values().begin(), params_[p + 1].values().end(),
              0.0f);
  }
}

ShapeNet make_network(const ArchitectureOptions& opts, std::uint64_t seed) {
  ShapeNet net(opts.input_side, standard_layers(opts));
  net.he_initialize(seed);
  return net;
}

ShapeNet default_architecture(std::uint64_t seed) {
  return make_network(ArchitectureOptions{}, seed);
}

namespace {

// Activations and per-layer state kept for the backward pass.
struct Trace {
  std::vector<Tensor> acts;  // acts[i] is the input of layer i
  std::vector<std::vector<std::uint32_t>> argmax;
  std::vector<std::vector<float>> dropout;
};

void im2col(const float* in, int h, int w, int c, float* cols) {
  if (c == 1) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float* row = cols + (static_cast<std::size_t>(y) * w + x) * 9;
        for (int ky = 0; ky < 3; ++ky) {
          const int sy = y + ky - 1;
          for (int kx = 0; kx < 3; ++kx) {
            const int sx = x + kx - 1;
            row[ky * 3 + kx] = (sy < 0 || sy >= h || sx < 0 || sx >= w)
                                   ? 0.0f
                                   : in[static_cast<std::size_t>(sy) * w + sx];
          }
        }
      }
    return;
  }
  const std::size_t k = 9 * static_cast<std::size_t>(c);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float* row = cols + (static_cast<std::size_t>(y) * w + x) * k;
      for (int ky = 0; ky < 3; ++ky) {
        const int sy = y + ky - 1;
        for (int kx = 0; kx < 3; ++kx) {
          const int sx = x + kx - 1;
          float* dst = row + (ky * 3 + kx) * c;
          if (sy < 0 || sy >= h || sx < 0 || sx >= w) {
            std::fill(dst, dst + c, 0.0f);
          } else {
            const float* src = in + (static_cast<std::size_t>(sy) * w + sx) * c;
            std::copy(src, src + c, dst);
          }
        }
      }
    }
  }
}

void col2im_add(const float* cols, int h, int w, int c, float* out) {
  const std::size_t k = 9 * static_cast<std::size_t>(c);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float* row = cols + (static_cast<std::size_t>(y) * w + x) * k;
      for (int ky = 0; ky < 3; ++ky) {
        const int sy = y + ky - 1;
        if (sy < 0 || sy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int sx = x + kx - 1;
          if (sx < 0 || sx >= w) continue;
          const float* src = row + (ky * 3 + kx) * c;
          float* dst = out + (static_cast<std::size_t>(sy) * w + sx) * c;
          for (int ci = 0; ci < c; ++ci) dst[ci] += src[ci];
        }
      }
    }
  }
}

void transpose(const float* src, int rows, int cols, float* dst) {
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      dst[static_cast<std::size_t>(c) * rows + r] =
          src[static_cast<std::size_t>(r) * cols + c];
}

std::vector<int> with_batch(int n, const std::vector<int>& shape) {
  std::vector<int> out{n};
  out.insert(out.end(), shape.begin(), shape.end());
  return out;
}

Tensor run_forward(const ShapeNet& net, const Tensor& batch, bool train_mode,
                   Rng* rng, Trace* trace) {
  const int side = net.input_side();
  if (batch.rank() != 4 || batch.dim(1) != side || batch.dim(2) != side ||
      batch.dim(3) != 1 || batch.dim(0) < 1)
    throw ShapeError("expected batch (n," + std::to_string(side) + "," +
                     std::to_string(side) + ",1), got " +
                     shape_str(batch.shape()));
  const auto& k = simd::kernels();
  const int n = batch.dim(0);
  const auto& layers = net.layers();
  const auto& shapes = net.activation_shapes();
  if (trace) {
    trace->acts.clear();
    trace->argmax.assign(layers.size(), {});
    trace->dropout.assign(layers.size(), {});
  }

  Tensor cur = batch;
  std::vector<int> in_shape = {side, side, 1};
  std::size_t param = 0;
  std::vector<float> cols;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const auto& l = layers[li];
    const auto& out_shape = shapes[li];
    // Without a trace, element-wise layers run in place.
    if (!trace && (l.kind == LayerKind::kRelu || l.kind == LayerKind::kFlatten ||
                   (l.kind == LayerKind::kDropout && !train_mode))) {
      if (l.kind == LayerKind::kRelu) k.relu(cur.data(), cur.size());
      cur.reshape(with_batch(n, out_shape));
      in_shape = out_shape;
      continue;
    }
    Tensor next;
    switch (l.kind) {
      case LayerKind::kConv3x3: {
        const int h = in_shape[0], w = in_shape[1], cin = in_shape[2];
        const int cout = l.units;
        const Tensor& wt = net.params()[param];
        const Tensor& bias = net.params()[param + 1];
        param += 2;
        const std::size_t hw = static_cast<std::size_t>(h) * w;
        next = Tensor(with_batch(n, out_shape));
        cols.resize(hw * 9 * cin);
        for (int s = 0; s < n; ++s) {
          im2col(cur.data() + s * hw * cin, h, w, cin, cols.data());
          float* out = next.data() + s * hw * cout;
          k.gemm(static_cast<int>(hw), cout, 9 * cin, cols.data(), 9 * cin,
                 wt.data(), cout, out, cout, false);
          k.add_bias(out, bias.data(), hw, cout);
        }
        break;
      }
      case LayerKind::kRelu:
        // In place; the backward pass reads the sign pattern from the output.
        next = std::move(cur);
        k.relu(next.data(), next.size());
        break;
      case LayerKind::kMaxPool2x2: {
        const int h = in_shape[0], w = in_shape[1], c = in_shape[2];
        const std::size_t in_sz = static_cast<std::size_t>(h) * w * c;
        const std::size_t out_sz = in_sz / 4;
        next = Tensor(with_batch(n, out_shape));
        std::vector<std::uint32_t> idx(out_sz * n);
        for (int s = 0; s < n; ++s)
          k.maxpool2x2(cur.data() + s * in_sz, h, w, c,
                       next.data() + s * out_sz, idx.data() + s * out_sz);
        if (trace) trace->argmax[li] = std::move(idx);
        break;
      }
      case LayerKind::kFlatten:
        next = std::move(cur);
        next.reshape(with_batch(n, out_shape));
        break;
      case LayerKind::kDense: {
        const int in = in_shape[0], out = l.units;
        const Tensor& wt = net.params()[param];
        const Tensor& bias = net.params()[param + 1];
        param += 2;
        next = Tensor(with_batch(n, out_shape));
        k.gemm(n, out, in, cur.data(), in, wt.data(), out, next.data(), out,
               false);
        k.add_bias(next.data(), bias.data(), n, out);
        break;
      }
      case LayerKind::kDropout: {
        next = cur;
        if (train_mode && l.rate > 0.0f) {
          if (!rng) throw ArgumentError("train-mode dropout needs an rng");
          const float keep_scale = 1.0f / (1.0f - l.rate);
          std::vector<float> mask(next.size());
          for (std::size_t i = 0; i < mask.size(); ++i) {
            mask[i] = rng->uniform() < l.rate ? 0.0f : keep_scale;
            next[i] *= mask[i];
          }
          if (trace) trace->dropout[li] = std::move(mask);
        }
        break;
      }
      case LayerKind::kSoftmax: {
        const int classes = in_shape[0];
        next = Tensor(with_batch(n, out_shape));
        for (int s = 0; s < n; ++s) {
          const float* z = cur.data() + static_cast<std::size_t>(s) * classes;
          float* p = next.data() + static_cast<std::size_t>(s) * classes;
          const float zmax = *std::max_element(z, z + classes);
          double sum = 0.0;
          std::array<double, kNumClasses> e{};
          for (int c = 0; c < classes; ++c) sum += (e[c] = std::exp(double(z[c]) - zmax));
          for (int c = 0; c < classes; ++c) p[c] = static_cast<float>(e[c] / sum);
        }
        break;
      }
    }
    if (trace)
      trace->acts.push_back(std::move(cur));
    cur = std::move(next);
    in_shape = out_shape;
  }
  return cur;
}

}  // namespace

namespace {

// Eval-mode forward that pushes one sample at a time through the conv stages
// so feature maps stay cache resident. Same arithmetic as run_forward.
Tensor forward_eval(const ShapeNet& net, const Tensor& batch) {
  const auto& k = simd::kernels();
  const int n = batch.dim(0);
  const int side = net.input_side();
  const auto& layers = net.layers();
  const auto& shapes = net.activation_shapes();
  std::size_t flat_at = 0;
  while (layers[flat_at].kind != LayerKind::kFlatten &&
         layers[flat_at].kind != LayerKind::kDense)
    ++flat_at;
  const std::size_t flat = flat_at == 0
                               ? static_cast<std::size_t>(side) * side
                               : product(shapes[flat_at - 1]);
  std::vector<float> head(flat * n);
  std::vector<float> a, b, cols;
  std::vector<std::uint32_t> argmax;
  const std::size_t plane = static_cast<std::size_t>(side) * side;
  std::size_t param = 0;
  for (int s = 0; s < n; ++s) {
    a.assign(batch.data() + s * plane, batch.data() + (s + 1) * plane);
    std::vector<int> in_shape = {side, side, 1};
    param = 0;
    for (std::size_t li = 0; li < flat_at; ++li) {
      const auto& l = layers[li];
      const int h = in_shape[0], w = in_shape[1], c = in_shape[2];
      const std::size_t hw = static_cast<std::size_t>(h) * w;
      switch (l.kind) {
        case LayerKind::kConv3x3: {
          cols.resize(hw * 9 * c);
          im2col(a.data(), h, w, c, cols.data());
          b.resize(hw * l.units);
          k.gemm(static_cast<int>(hw), l.units, 9 * c, cols.data(), 9 * c,
                 net.params()[param].data(), l.units, b.data(), l.units, false);
          k.add_bias(b.data(), net.params()[param + 1].data(), hw, l.units);
          param += 2;
          std::swap(a, b);
          break;
        }
        case LayerKind::kRelu:
          k.relu(a.data(), a.size());
          break;
        case LayerKind::kMaxPool2x2:
          b.resize(a.size() / 4);
          argmax.resize(b.size());
          k.maxpool2x2(a.data(), h, w, c, b.data(), argmax.data());
          std::swap(a, b);
          break;
        default:
          break;
      }
      in_shape = shapes[li];
    }
    std::copy(a.begin(), a.end(), head.begin() + s * flat);
  }

  std::size_t width = flat;
  for (std::size_t li = flat_at; li < layers.size(); ++li) {
    const auto& l = layers[li];
    switch (l.kind) {
      case LayerKind::kDense: {
        std::vector<float> out(static_cast<std::size_t>(n) * l.units);
        k.gemm(n, l.units, static_cast<int>(width), head.data(),
               static_cast<int>(width), net.params()[param].data(), l.units,
               out.data(), l.units, false);
        k.add_bias(out.data(), net.params()[param + 1].data(), n, l.units);
        param += 2;
        head = std::move(out);
        width = static_cast<std::size_t>(l.units);
        break;
      }
      case LayerKind::kRelu:
        k.relu(head.data(), head.size());
        break;
      case LayerKind::kSoftmax: {
        Tensor probs({n, kNumClasses});
        for (int s = 0; s < n; ++s) {
          const float* z = head.data() + static_cast<std::size_t>(s) * width;
          float* p = probs.data() + static_cast<std::size_t>(s) * kNumClasses;
          const float zmax = *std::max_element(z, z + kNumClasses);
          double sum = 0.0;
          std::array<double, kNumClasses> e{};
          for (int c = 0; c < kNumClasses; ++c)
            sum += (e[c] = std::exp(double(z[c]) - zmax));
          for (int c = 0; c < kNumClasses; ++c)
            p[c] = static_cast<float>(e[c] / sum);
        }
        return probs;
      }
      default:
        break;
    }
  }
  throw ShapeError("network has no softmax head");
}

void check_batch(const ShapeNet& net, const Tensor& batch) {
  const int side = net.input_side();
  if (batch.rank() != 4 || batch.dim(1) != side || batch.dim(2) != side ||
      batch.dim(3) != 1 || batch.dim(0) < 1)
    throw ShapeError("expected batch (n," + std::to_string(side) + "," +
                     std::to_string(side) + ",1), got " +
                     shape_str(batch.shape()));
}

}  // namespace

Tensor forward(const ShapeNet& net, const Tensor& batch, bool train_mode,
               Rng* rng) {
  if (!train_mode) {
    check_batch(net, batch);
    return forward_eval(net, batch);
  }
  return run_forward(net, batch, train_mode, rng, nullptr);
}

double cross_entropy_loss(const Tensor& probs, std::span<const int> labels) {
  if (probs.rank() != 2 || static_cast<std::size_t>(probs.dim(0)) != labels.size())
    throw ArgumentError("probabilities and labels disagree in batch size");
  const int classes = probs.dim(1);
  double total = 0.0;
  for (std::size_t s = 0; s < labels.size(); ++s) {
    if (labels[s] < 0 || labels[s] >= classes)
      throw ArgumentError("label " + std::to_string(labels[s]) + " out of range");
    const double p = probs[s * classes + labels[s]];
    total += p > 0.0 ? -std::log(p) : 104.0;  // -ln(FLT_TRUE_MIN)
  }
  return std::max(0.0, total / static_cast<double>(labels.size()));
}

Gradients backward(const ShapeNet& net, const Tensor& batch,
                   std::span<const int> labels, Rng& rng) {
  Trace trace;
  Gradients g;
  g.probs = run_forward(net, batch, true, &rng, &trace);
  const int n = batch.dim(0);
  if (labels.size() != static_cast<std::size_t>(n))
    throw ShapeError("label count does not match batch size");
  g.loss = cross_entropy_loss(g.probs, labels);

  const auto& k = simd::kernels();
  const auto& layers = net.layers();
  const auto& shapes = net.activation_shapes();
  for (const auto& p : net.params()) g.params.emplace_back(p.shape());

  // Softmax + cross-entropy: d/dz = (p - onehot) / n.
  Tensor grad = g.probs;
  for (int s = 0; s < n; ++s) grad[s * kNumClasses + labels[s]] -= 1.0f;
  const float inv_n = 1.0f / static_cast<float>(n);
  for (float& v : grad.values()) v *= inv_n;
  g.logits = grad;

  std::size_t param = net.params().size();
  std::vector<float> cols, cols_t, dcols, w_t;
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& l = layers[li];
    if (l.kind == LayerKind::kSoftmax) continue;
    const Tensor& input = trace.acts[li];
    const std::vector<int>& in_shape =
        li == 0 ? std::vector<int>{net.input_side(), net.input_side(), 1}
                : shapes[li - 1];
    const bool need_input_grad = li > 0;
    Tensor gin(with_batch(n, in_shape));
    switch (l.kind) {
      case LayerKind::kConv3x3: {
        param -= 2;
        const int h = in_shape[0], w = in_shape[1], cin = in_shape[2];
        const int cout = l.units;
        const int kk = 9 * cin;
        const Tensor& wt = net.params()[param];
        Tensor& dw = g.params[param];
        Tensor& db = g.params[param + 1];
        const std::size_t hw = static_cast<std::size_t>(h) * w;
        cols.resize(hw * kk);
        dcols.resize(hw * kk);
        w_t.resize(static_cast<std::size_t>(kk) * cout);
        transpose(wt.data(), kk, cout, w_t.data());
        // The weight gradient is cols^T * dY summed over samples. With few
        // input taps it is formed directly, otherwise as (dY^T * cols)^T so
        // only the narrow dY block is transposed.
        const bool narrow = kk <= cout;
        std::vector<float> dw_t(narrow ? 0 : static_cast<std::size_t>(cout) * kk, 0.0f);
        cols_t.resize(narrow ? hw * kk : hw * cout);
        for (int s = 0; s < n; ++s) {
          const float* dy = grad.data() + s * hw * cout;
          im2col(input.data() + s * hw * cin, h, w, cin, cols.data());
          if (narrow) {
            transpose(cols.data(), static_cast<int>(hw), kk, cols_t.data());
            k.gemm(kk, cout, static_cast<int>(hw), cols_t.data(),
                   static_cast<int>(hw), dy, cout, dw.data(), cout, true);
          } else {
            transpose(dy, static_cast<int>(hw), cout, cols_t.data());
            k.gemm(cout, kk, static_cast<int>(hw), cols_t.data(),
                   static_cast<int>(hw), cols.data(), kk, dw_t.data(), kk, true);
          }
          for (std::size_t p = 0; p < hw; ++p)
            for (int c = 0; c < cout; ++c) db[c] += dy[p * cout + c];
          if (need_input_grad) {
            k.gemm(static_cast<int>(hw), kk, cout, dy, cout, w_t.data(), kk,
                   dcols.data(), kk, false);
            col2im_add(dcols.data(), h, w, cin, gin.data() + s * hw * cin);
          }
        }
        if (!narrow) transpose(dw_t.data(), cout, kk, dw.data());
        break;
      }
      case LayerKind::kRelu:
        std::copy(grad.values().begin(), grad.values().end(), gin.data());
        // The output of a ReLU is positive exactly where its input is.
        k.relu_backward(trace.acts[li + 1].data(), gin.data(), gin.size());
        break;
      case LayerKind::kMaxPool2x2: {
        const std::size_t in_sz = product(in_shape);
        const std::size_t out_sz = in_sz / 4;
        const auto& idx = trace.argmax[li];
        for (int s = 0; s < n; ++s) {
          float* gi = gin.data() + s * in_sz;
          const float* go = grad.data() + s * out_sz;
          const std::uint32_t* ix = idx.data() + s * out_sz;
          for (std::size_t o = 0; o < out_sz; ++o) gi[ix[o]] += go[o];
        }
        break;
      }
      case LayerKind::kFlatten:
        std::copy(grad.values().begin(), grad.values().end(), gin.data());
        break;
      case LayerKind::kDense: {
        param -= 2;
        const int in = in_shape[0], out = l.units;
        const Tensor& wt = net.params()[param];
        Tensor& dw = g.params[param];
        Tensor& db = g.params[param + 1];
        cols_t.resize(static_cast<std::size_t>(in) * n);
        transpose(input.data(), n, in, cols_t.data());
        k.gemm(in, out, n, cols_t.data(), n, grad.data(), out, dw.data(), out,
               false);
        for (int s = 0; s < n; ++s)
          for (int c = 0; c < out; ++c) db[c] += grad[s * out + c];
        if (need_input_grad) {
          w_t.resize(static_cast<std::size_t>(in) * out);
          transpose(wt.data(), in, out, w_t.data());
          k.gemm(n, in, out, grad.data(), out, w_t.data(), in, gin.data(), in,
                 false);
        }
        break;
      }
      case LayerKind::kDropout: {
        std::copy(grad.values().begin(), grad.values().end(), gin.data());
        const auto& mask = trace.dropout[li];
        if (!mask.empty())
          for (std::size_t i = 0; i < mask.size(); ++i) gin[i] *= mask[i];
        break;
      }
      case LayerKind::kSoftmax:
        break;
    }
    grad = std::move(gin);
  }
  return g;
}

void ShapeDataset::add(std::span<const float> image, int label) {
  if (image.size() != static_cast<std::size_t>(side) * side)
    throw ArgumentError("shape image does not match dataset side");
  images.insert(images.end(), image.begin(), image.end());
  labels.push_back(label);
}

std::span<const float> ShapeDataset::image(std::size_t i) const {
  const std::size_t sz = static_cast<std::size_t>(side) * side;
  return std::span<const float>(images).subspan(i * sz, sz);
}

Tensor ShapeDataset::batch(std::span<const std::size_t> indices) const {
  const std::size_t sz = static_cast<std::size_t>(side) * side;
  Tensor t({static_cast<int>(indices.size()), side, side, 1});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto img = image(indices[i]);
    std::copy(img.begin(), img.end(), t.data() + i * sz);
  }
  return t;
}

Trainer::Trainer(ShapeNet net, const TrainConfig& cfg)
    : net_(std::move(net)), cfg_(cfg), rng_(cfg.seed) {
  if (!(cfg.learning_rate > 0.0)) throw ArgumentError("learning rate must be > 0");
  if (cfg.epochs < 0) throw ArgumentError("epochs must be >= 0");
  if (cfg.batch_size < 1) throw ArgumentError("batch size must be >= 1");
  net_.set_dropout_rate(cfg.dropout);
  for (const auto& p : net_.params()) velocity_.emplace_back(p.shape());
}

void Trainer::run_epochs(const ShapeDataset& data, int epochs) {
  if (epochs <= 0) return;
  if (data.size() == 0) throw ArgumentError("empty training set");
  if (data.side != net_.input_side())
    throw ArgumentError("dataset side does not match network input");
  for (int y : data.labels)
    if (y < 0 || y >= kNumClasses) throw ArgumentError("label out of range");

  const auto& k = simd::kernels();
  std::vector<std::size_t> order(data.size());
  std::vector<int> labels;
  for (int e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng_.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg_.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg_.batch_size));
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      labels.clear();
      for (std::size_t i : idx) labels.push_back(data.labels[i]);
      const Tensor batch = data.batch(idx);
      Gradients g = backward(net_, batch, labels, rng_);
      if (!std::isfinite(g.loss))
        throw TrainingError("non-finite training loss at epoch " +
                            std::to_string(history_.size() + 1));
      loss_sum += g.loss * static_cast<double>(idx.size());
      for (std::size_t s = 0; s < idx.size(); ++s) {
        const float* p = g.probs.data() + s * kNumClasses;
        if (std::max_element(p, p + kNumClasses) - p == labels[s]) ++correct;
      }
      for (std::size_t p = 0; p < velocity_.size(); ++p)
        k.sgd_momentum(net_.params()[p].data(), velocity_[p].data(),
                       g.params[p].data(), velocity_[p].size(),
                       static_cast<float>(cfg_.learning_rate),
                       static_cast<float>(cfg_.momentum));
    }
    for (const auto& p : net_.params())
      for (float v : p.values())
        if (!std::isfinite(v)) throw TrainingError("weights diverged");
    const double n = static_cast<double>(data.size());
    history_.push_back({loss_sum / n, static_cast<double>(correct) / n});
  }
}

TrainResult train(ShapeNet net, const ShapeDataset& data,
                  const TrainConfig& cfg) {
  if (data.size() == 0) throw ArgumentError("empty training set");
  Trainer trainer(std::move(net), cfg);
  trainer.run_epochs(data, cfg.epochs);
  return {trainer.net(), trainer.history()};
}

void shape_plane(const BitMask& shape, int side, std::span<float> out) {
  if (shape.width() < 1 || shape.height() < 1)
    throw ArgumentError("shape image is empty");
  std::vector<float> plane(shape.bits().size());
  std::transform(shape.bits().begin(), shape.bits().end(), plane.begin(),
                 [](std::uint8_t b) { return b ? 1.0f : 0.0f; });
  raster::resize_plane(plane, shape.width(), shape.height(), out, side, side);
}

Tensor shape_tensor(const BitMask& shape, int side) {
  Tensor t({1, side, side, 1});
  shape_plane(shape, side, t.values());
  return t;
}

std::vector<Prediction> predict_batch(const ShapeNet& net,
                                      const Tensor& batch) {
  const Tensor probs = forward(net, batch, false);
  std::vector<Prediction> out(static_cast<std::size_t>(batch.dim(0)));
  for (std::size_t s = 0; s < out.size(); ++s) {
    auto& pr = out[s];
    std::copy_n(probs.data() + s * kNumClasses, kNumClasses, pr.probs.begin());
    pr.label = 0;
    for (int c = 1; c < kNumClasses; ++c)
      if (pr.probs[c] > pr.probs[pr.label]) pr.label = c;
    pr.probability = pr.probs[pr.label];
  }
  return out;
}

Prediction predict_class(const ShapeNet& net, const Tensor& sample) {
  return predict_batch(net, sample).front();
}

Prediction predict_class(const ShapeNet& net, const BitMask& shape) {
  return predict_class(net, shape_tensor(shape, net.input_side()));
}

namespace {
constexpr char kWeightsMagic[] = "OSNW1";
}

void save_weights(const ShapeNet& net, const std::filesystem::path& path) {
  binio::Writer w;
  w.bytes(kWeightsMagic);
  w.u32(static_cast<std::uint32_t>(net.params().size() / 2));
  for (const auto& t : net.params()) {
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.values()) w.f32(v);
  }
  w.save(path);
}

ShapeNet load_weights(const std::filesystem::path& path) {
  const std::string name = path.string();
  auto r = binio::Reader::open(path);
  r.expect_magic(kWeightsMagic);
  const std::uint32_t layer_count = r.u32();
  if (layer_count == 0 || layer_count > 64)
    throw FormatError(name + ": implausible layer count");
  std::vector<Tensor> tensors;
  for (std::uint32_t i = 0; i < 2 * layer_count; ++i) {
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 4) throw FormatError(name + ": bad tensor rank");
    std::vector<int> shape;
    std::size_t count = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = r.u32();
      if (dim == 0 || dim > (1u << 24)) throw FormatError(name + ": bad tensor dim");
      shape.push_back(static_cast<int>(dim));
      count *= dim;
      if (count > (std::size_t{1} << 28)) throw FormatError(name + ": tensor too large");
    }
    std::vector<float> data(count);
    for (float& v : data) v = r.f32();
    tensors.emplace_back(std::move(shape), std::move(data));
  }
  if (!r.at_end())
    throw FormatError(name + ": payload longer than the declared layer count");

  ArchitectureOptions opts;
  opts.conv_channels.clear();
  opts.dense_units.clear();
  int channels = 1;
  std::size_t i = 0;
  for (; i < tensors.size() && tensors[i].rank() == 4; i += 2) {
    const auto& s = tensors[i].shape();
    if (s[0] != 3 || s[1] != 3 || s[2] != channels)
      throw FormatError(name + ": conv tensor " + shape_str(s) + " does not chain");
    if (tensors[i + 1].shape() != std::vector<int>{s[3]})
      throw FormatError(name + ": conv bias shape mismatch");
    opts.conv_channels.push_back(s[3]);
    channels = s[3];
  }
  const std::size_t first_dense = i;
  for (; i < tensors.size(); i += 2) {
    const auto& s = tensors[i].shape();
    if (s.size() != 2 || tensors[i + 1].shape() != std::vector<int>{s[1]})
      throw FormatError(name + ": dense tensor " + shape_str(s) + " malformed");
    opts.dense_units.push_back(s[1]);
  }
  if (first_dense == tensors.size() || opts.dense_units.back() != kNumClasses)
    throw FormatError(name + ": network must end in a 6-unit dense layer");
  opts.dense_units.pop_back();

  const int flat = tensors[first_dense].dim(0);
  const int cells = flat / channels;
  const int cell_side = static_cast<int>(std::lround(std::sqrt(double(cells))));
  if (cell_side * cell_side * channels != flat)
    throw FormatError(name + ": dense input is not a square feature map");
  opts.input_side = cell_side << opts.conv_channels.size();

  try {
    ShapeNet net(opts.input_side, standard_layers(opts));
    if (net.params().size() != tensors.size())
      throw FormatError(name + ": tensor count mismatch");
    for (std::size_t t = 0; t < tensors.size(); ++t) {
      if (net.params()[t].shape() != tensors[t].shape())
        throw FormatError(name + ": tensor shapes do not chain");
      net.params()[t] = std::move(tensors[t]);
    }
    return net;
  } catch (const ShapeError& e) {
    throw FormatError(name + ": " + e.what());
  }
}

ShapeNet load_weights(const std::filesystem::path& path,
                      const std::vector<LayerSpec>& expected) {
  ShapeNet net = load_weights(path);
  auto strip = [](std::vector<LayerSpec> layers) {
    for (auto& l : layers) l.rate = 0.0f;
    return layers;
  };
  if (strip(net.layers()) != strip(expected))
    throw FormatError(path.string() +
                      ": stored layers do not match the declared architecture");
  for (std::size_t i = 0; i < expected.size(); ++i)
    if (expected[i].kind == LayerKind::kDropout)
      net.set_dropout_rate(expected[i].rate);
  return net;
}

namespace {

// ReLU input signs and max-pool winners of a train-mode forward pass.
std::vector<std::uint32_t> activation_pattern(const ShapeNet& net,
                                              const Tensor& sample,
                                              std::uint64_t seed) {
  Trace trace;
  Rng rng(seed);
  run_forward(net, sample, true, &rng, &trace);
  std::vector<std::uint32_t> pattern;
  for (std::size_t li = 0; li < net.layers().size(); ++li) {
    if (net.layers()[li].kind == LayerKind::kRelu)
      for (float v : trace.acts[li + 1].values()) pattern.push_back(v > 0.0f);
    const auto& idx = trace.argmax[li];
    pattern.insert(pattern.end(), idx.begin(), idx.end());
  }
  return pattern;
}

}  // namespace

double gradient_check(const ShapeNet& net, const Tensor& sample, int label,
                      const GradientCheckOptions& opts) {
  if (!(opts.eps > 0.0)) throw ArgumentError("finite-difference step must be > 0");
  if (!(opts.floor > 0.0)) throw ArgumentError("relative-error floor must be > 0");
  const std::vector<int> labels{label};
  Rng analytic_rng(opts.seed);
  Gradients g = backward(net, sample, labels, analytic_rng);
  if (opts.tamper) opts.tamper(g.params);

  ShapeNet probe = net;
  const auto base_pattern =
      opts.skip_kinks ? activation_pattern(net, sample, opts.seed)
                      : std::vector<std::uint32_t>{};
  auto loss_at = [&](bool* kink) {
    Rng rng(opts.seed);
    const double loss =
        cross_entropy_loss(forward(probe, sample, true, &rng), labels);
    if (opts.skip_kinks &&
        activation_pattern(probe, sample, opts.seed) != base_pattern)
      *kink = true;
    return loss;
  };
  Rng pick(opts.seed ^ 0x9E3779B97F4A7C15ull);
  double worst = 0.0;
  for (std::size_t t = 0; t < probe.params().size(); ++t) {
    Tensor& w = probe.params()[t];
    std::vector<std::size_t> coords(w.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > opts.coords_per_tensor) {
      pick.shuffle(coords.begin(), coords.end());
      coords.resize(opts.coords_per_tensor);
    }
    for (std::size_t c : coords) {
      const float saved = w[c];
      bool kink = false;
      w[c] = static_cast<float>(saved + opts.eps);
      const double plus = loss_at(&kink);
      w[c] = static_cast<float>(saved - opts.eps);
      const double minus = loss_at(&kink);
      w[c] = saved;
      if (kink) continue;
      const double numeric = (plus - minus) / (2.0 * opts.eps);
      const double analytic = g.params[t][c];
      const double err = std::abs(analytic - numeric) /
                         std::max(std::abs(numeric), opts.floor);
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace organseg::shapenet
