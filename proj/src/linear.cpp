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

#include "organseg/linear.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "organseg/error.hpp"
#include "organseg/rng.hpp"

namespace organseg::linear {

int SoftmaxModel::predict(std::span<const float> x) const {
  int best = 0;
  float best_score = 0.0f;
  for (int k = 0; k < classes; ++k) {
    const float* w = weights.data() + static_cast<std::size_t>(k) * features;
    float s = w[0] * x[0];
    for (int f = 1; f < features; ++f) s = s + w[f] * x[f];
    s = s + bias[k];
    if (k == 0 || s > best_score) {
      best_score = s;
      best = k;
    }
  }
  return best;
}

FitResult fit_softmax(std::span<const float> features, int n_features,
                      std::span<const int> labels, int classes,
                      const SgdConfig& cfg) {
  if (labels.empty()) throw ArgumentError("no training samples");
  if (n_features < 1 || classes < 2)
    throw ArgumentError("need at least one feature and two classes");
  if (features.size() != labels.size() * static_cast<std::size_t>(n_features))
    throw ArgumentError("feature matrix does not match label count");
  if (cfg.epochs < 1 || !(cfg.learning_rate > 0.0))
    throw ArgumentError("epochs must be >= 1 and learning rate > 0");
  std::set<int> present;
  for (int y : labels) {
    if (y < 0 || y >= classes) throw ArgumentError("label out of range");
    present.insert(y);
  }
  if (present.size() < 2)
    throw TrainingError("training data contains a single class");

  const std::size_t n = labels.size();
  const std::size_t nf = static_cast<std::size_t>(n_features);
  std::vector<double> w(static_cast<std::size_t>(classes) * nf, 0.0);
  std::vector<double> b(classes, 0.0);
  std::vector<double> p(classes);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(cfg.seed);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    const double lr = cfg.learning_rate / (1.0 + 0.05 * epoch);
    for (std::size_t idx : order) {
      const float* x = features.data() + idx * nf;
      double zmax = -1e300;
      for (int k = 0; k < classes; ++k) {
        double z = b[k];
        for (std::size_t f = 0; f < nf; ++f) z += w[k * nf + f] * x[f];
        p[k] = z;
        zmax = std::max(zmax, z);
      }
      double sum = 0.0;
      for (int k = 0; k < classes; ++k) sum += (p[k] = std::exp(p[k] - zmax));
      for (int k = 0; k < classes; ++k) {
        const double g = p[k] / sum - (k == labels[idx] ? 1.0 : 0.0);
        if (g == 0.0) continue;
        for (std::size_t f = 0; f < nf; ++f) w[k * nf + f] -= lr * g * x[f];
        b[k] -= lr * g;
      }
    }
    for (double v : w)
      if (!std::isfinite(v)) throw TrainingError("softmax fit diverged");
  }

  FitResult result;
  result.model.classes = classes;
  result.model.features = n_features;
  result.model.weights.assign(w.begin(), w.end());
  result.model.bias.assign(b.begin(), b.end());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (result.model.predict(features.subspan(i * nf, nf)) == labels[i])
      ++correct;
  result.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return result;
}

}  // namespace organseg::linear
