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

// Multinomial logistic regression fit by seeded SGD. Backs both the pixel
// color classifier and the position + color pixel baseline.

#include <cstdint>
#include <span>
#include <vector>

namespace organseg::linear {

struct SoftmaxModel {
  int classes = 0;
  int features = 0;
  std::vector<float> weights;  // classes x features, row-major
  std::vector<float> bias;     // classes

  // Argmax of the class scores; ties go to the lowest class index. Scores
  // are accumulated in float, feature order, bias last.
  int predict(std::span<const float> x) const;

  friend bool operator==(const SoftmaxModel&, const SoftmaxModel&) = default;
};

struct SgdConfig {
  int epochs = 20;
  double learning_rate = 0.5;
  std::uint64_t seed = 1;
};

struct FitResult {
  SoftmaxModel model;
  double accuracy = 0.0;  // on the training set, using predict()
};

// features is n x n_features row-major. Throws ArgumentError on empty or
// inconsistent input and TrainingError when fewer than two classes are
// present or the fit diverges.
FitResult fit_softmax(std::span<const float> features, int n_features,
                      std::span<const int> labels, int classes,
                      const SgdConfig& cfg);

}  // namespace organseg::linear
