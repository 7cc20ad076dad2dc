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

#include "organseg/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "organseg/error.hpp"

namespace organseg::metrics {
namespace {

struct Counts {
  std::size_t pred = 0, truth = 0, both = 0;
};

Counts count(const BitMask& pred, const BitMask& truth) {
  if (pred.width() != truth.width() || pred.height() != truth.height())
    throw ArgumentError("mask sizes differ");
  Counts c;
  const auto p = pred.bits(), t = truth.bits();
  for (std::size_t i = 0; i < p.size(); ++i) {
    c.pred += p[i];
    c.truth += t[i];
    c.both += p[i] & t[i];
  }
  return c;
}

std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

double dice(const BitMask& pred, const BitMask& truth) {
  const Counts c = count(pred, truth);
  if (c.pred + c.truth == 0) return 1.0;
  return 2.0 * static_cast<double>(c.both) / static_cast<double>(c.pred + c.truth);
}

Prf prf(const BitMask& pred, const BitMask& truth) {
  const Counts c = count(pred, truth);
  Prf r;
  const bool both_empty = c.pred == 0 && c.truth == 0;
  r.precision = c.pred == 0 ? (both_empty ? 1.0 : 0.0)
                            : static_cast<double>(c.both) / static_cast<double>(c.pred);
  r.recall = c.truth == 0 ? (both_empty ? 1.0 : 0.0)
                          : static_cast<double>(c.both) / static_cast<double>(c.truth);
  const double s = r.precision + r.recall;
  r.f_score = s == 0.0 ? 0.0 : 2.0 * r.precision * r.recall / s;
  return r;
}

void Evaluator::add(const pipeline::SegmentationResult& result,
                    const BitMask& truth) {
  if (result.found) {
    add(result.organ, result.mask, truth);
  } else {
    add(result.organ, BitMask(truth.width(), truth.height()), truth);
  }
}

void Evaluator::add(OrganId organ, const BitMask& pred, const BitMask& truth) {
  const Prf p = prf(pred, truth);
  auto& s = sums_[index_of(organ)];
  ++s.n;
  s.dice += dice(pred, truth);
  s.precision += p.precision;
  s.recall += p.recall;
  s.f_score += p.f_score;
}

bool Evaluator::empty() const {
  return std::all_of(sums_.begin(), sums_.end(),
                     [](const Sums& s) { return s.n == 0; });
}

std::vector<ScoreRow> Evaluator::rows() const {
  std::vector<ScoreRow> out;
  for (OrganId id : kAllOrgans) {
    const auto& s = sums_[index_of(id)];
    if (s.n == 0) continue;
    const double n = s.n;
    out.push_back({id, s.n, s.dice / n, s.precision / n, s.recall / n, s.f_score / n});
  }
  return out;
}

std::vector<ScoreRow> evaluate_dataset(
    std::span<const std::pair<pipeline::SegmentationResult, BitMask>> results) {
  if (results.empty()) throw ArgumentError("nothing to evaluate");
  Evaluator e;
  for (const auto& [r, truth] : results) e.add(r, truth);
  return e.rows();
}

std::string scores_csv(std::span<const ScoreRow> rows) {
  std::ostringstream out;
  out << "organ,n,dice,precision,recall,f_score\n";
  for (const auto& r : rows)
    out << organ_name(r.organ) << ',' << r.n << ',' << fixed6(r.dice) << ','
        << fixed6(r.precision) << ',' << fixed6(r.recall) << ','
        << fixed6(r.f_score) << '\n';
  return out.str();
}

double classification_accuracy(const shapenet::ShapeNet& net,
                               const shapenet::ShapeDataset& data) {
  if (data.size() == 0) throw ArgumentError("empty evaluation set");
  constexpr std::size_t kChunk = 64;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + kChunk); ++i)
      idx.push_back(i);
    const auto preds = shapenet::predict_batch(net, data.batch(idx));
    for (std::size_t i = 0; i < idx.size(); ++i)
      if (preds[i].label == data.labels[idx[i]]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::vector<SweepPoint> sweep(const SweepGrid& grid,
                              const shapenet::ShapeDataset& train_data,
                              const SweepHooks& hooks,
                              const shapenet::TrainConfig& cfg) {
  if (grid.conv_stages.empty() || grid.epochs.empty())
    throw ArgumentError("sweep grid is empty");
  for (int e : grid.epochs)
    if (e < 0) throw ArgumentError("epoch counts must be >= 0");
  if (!hooks.make_net || !hooks.shape_accuracy || !hooks.mean_dice)
    throw ArgumentError("sweep hooks are incomplete");

  std::vector<SweepPoint> out;
  for (int stages : grid.conv_stages) {
    std::vector<int> ascending = grid.epochs;
    std::sort(ascending.begin(), ascending.end());
    ascending.erase(std::unique(ascending.begin(), ascending.end()), ascending.end());
    shapenet::Trainer trainer(hooks.make_net(stages, cfg.seed), cfg);
    std::map<int, SweepPoint> at;
    for (int e : ascending) {
      trainer.run_epochs(train_data, e - trainer.epochs_done());
      at[e] = {stages, e, hooks.shape_accuracy(trainer.net()),
               hooks.mean_dice(trainer.net())};
    }
    for (int e : grid.epochs) out.push_back(at[e]);
  }
  return out;
}

std::string sweep_csv(std::span<const SweepPoint> points) {
  std::ostringstream out;
  out << "conv_stages,epochs,shape_accuracy,mean_dice\n";
  for (const auto& p : points)
    out << p.conv_stages << ',' << p.epochs << ',' << fixed6(p.shape_accuracy)
        << ',' << fixed6(p.mean_dice) << '\n';
  return out.str();
}

}  // namespace organseg::metrics
