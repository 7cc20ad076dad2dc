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

// Overlap scores for binary masks, per-organ evaluation tables and the
// depth / epoch sweep of the shape network.

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "organseg/organs.hpp"
#include "organseg/pipeline.hpp"
#include "organseg/raster.hpp"
#include "organseg/shapenet.hpp"

namespace organseg::metrics {

// 2 |A & B| / (|A| + |B|); 1 when both are empty. Throws ArgumentError on a
// size mismatch.
double dice(const BitMask& pred, const BitMask& truth);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f_score = 0.0;
};

// Precision is 1 for an empty prediction of an empty truth and 0 for an
// empty prediction otherwise; recall mirrors it. F is 0 when P + R is 0.
Prf prf(const BitMask& pred, const BitMask& truth);

struct ScoreRow {
  OrganId organ = OrganId::kBrain;
  int n = 0;
  double dice = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f_score = 0.0;
};

// Running per-organ means. Rows come out in organ order.
class Evaluator {
 public:
  // Not-found results count as empty predictions.
  void add(const pipeline::SegmentationResult& result, const BitMask& truth);
  void add(OrganId organ, const BitMask& pred, const BitMask& truth);

  bool empty() const;
  std::vector<ScoreRow> rows() const;

 private:
  struct Sums {
    int n = 0;
    double dice = 0, precision = 0, recall = 0, f_score = 0;
  };
  std::array<Sums, 5> sums_{};
};

// Throws ArgumentError on empty input.
std::vector<ScoreRow> evaluate_dataset(
    std::span<const std::pair<pipeline::SegmentationResult, BitMask>> results);

// organ,n,dice,precision,recall,f_score with 6 decimals.
std::string scores_csv(std::span<const ScoreRow> rows);

// Fraction of samples whose eval-mode argmax equals the label.
double classification_accuracy(const shapenet::ShapeNet& net,
                               const shapenet::ShapeDataset& data);

struct SweepGrid {
  std::vector<int> conv_stages;
  std::vector<int> epochs;
};

struct SweepPoint {
  int conv_stages = 0;
  int epochs = 0;
  double shape_accuracy = 0.0;
  double mean_dice = 0.0;
};

struct SweepHooks {
  // Fresh network with the given number of conv stages.
  std::function<shapenet::ShapeNet(int stages, std::uint64_t seed)> make_net;
  std::function<double(const shapenet::ShapeNet&)> shape_accuracy;
  std::function<double(const shapenet::ShapeNet&)> mean_dice;
};

// One row per grid point, stage counts outer and epochs inner, in the order
// given. Each point equals a fresh seeded training run of that many epochs;
// the runs of one stage count share a trainer that is advanced through the
// epoch counts in ascending order. Throws ArgumentError on an empty grid.
std::vector<SweepPoint> sweep(const SweepGrid& grid,
                              const shapenet::ShapeDataset& train_data,
                              const SweepHooks& hooks,
                              const shapenet::TrainConfig& cfg);

// conv_stages,epochs,shape_accuracy,mean_dice with 6 decimals.
std::string sweep_csv(std::span<const SweepPoint> points);

}  // namespace organseg::metrics
