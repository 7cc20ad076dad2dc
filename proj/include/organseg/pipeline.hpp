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

// End-to-end organ localization: scan the fixed-size candidate boxes of an
// organ's plausible region, color-filter each into a shape image, score it
// with the shape network, keep the best box and extract the organ mask from
// it. Also hosts the position + color pixel baseline and the builders that
// turn annotated images into training sets.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "organseg/anatomy.hpp"
#include "organseg/chroma.hpp"
#include "organseg/linear.hpp"
#include "organseg/phantom.hpp"
#include "organseg/raster.hpp"
#include "organseg/rng.hpp"
#include "organseg/shapenet.hpp"

namespace organseg::pipeline {

struct PipelineConfig {
  int stride = 10;
  double threshold = 0.5;
  bool largest_component = true;
  int batch_size = 32;  // candidates per network call; results do not depend on it

  // Throws ArgumentError.
  void validate() const;
};

struct SegmentationResult {
  OrganId organ = OrganId::kBrain;
  bool found = false;
  Rect box{0, 0, 0, 0};
  BitMask mask;        // full frame
  float score = 0.0f;  // probability of the organ's class for `box`
};

struct CandidateScore {
  Rect box;
  float score = 0.0f;
};

// Organ-class probability of every candidate box, in scan order.
std::vector<CandidateScore> score_candidates(const RasterImage& img,
                                             OrganId organ,
                                             const anatomy::Registry& registry,
                                             const chroma::ColorModel& color,
                                             const shapenet::ShapeNet& net,
                                             const PipelineConfig& cfg);

// Throws ArgumentError unless img is 2000 x 1000.
SegmentationResult segment_organ(const RasterImage& img, OrganId organ,
                                 const anatomy::Registry& registry,
                                 const chroma::ColorModel& color,
                                 const shapenet::ShapeNet& net,
                                 const PipelineConfig& cfg);

// One result per registry organ, in registry order.
std::vector<SegmentationResult> segment_all_organs(
    const RasterImage& img, const anatomy::Registry& registry,
    const chroma::ColorModel& color, const shapenet::ShapeNet& net,
    const PipelineConfig& cfg);

// Keeps the largest 4-connected component; on equal sizes the one whose
// first pixel comes first in row-major order wins.
BitMask largest_component(const BitMask& mask);

// Results table: organ,found,box_x,box_y,box_w,box_h,score.
std::string results_csv(std::span<const SegmentationResult> results);

struct ResultRow {
  OrganId organ = OrganId::kBrain;
  bool found = false;
  Rect box{0, 0, 0, 0};
  float score = 0.0f;
};

// Throws IoError and ParseError.
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);

// Writes <stem>.results.csv and <stem>.<Organ>.png for every result.
void write_results(std::span<const SegmentationResult> results,
                   const std::filesystem::path& dir, const std::string& stem);

// Pixel baseline: multinomial logistic over (x / 2000, y / 1000, r / 255,
// g / 255, b / 255) with the shape-network class order (5 organs, None).
struct BaselineModel {
  linear::SoftmaxModel model;
};

struct BaselineSample {
  int x = 0, y = 0;
  Rgb rgb;
  int label = shapenet::kNoneClass;
};

BaselineModel train_baseline(std::span<const BaselineSample> samples,
                             const linear::SgdConfig& cfg);

// Full-frame mask of pixels whose predicted class is `organ`.
BitMask baseline_pixel_segment(const RasterImage& img, OrganId organ,
                               const BaselineModel& model);

// Training-set construction from annotated images.

// `per_class` pixels for each color category, drawn uniformly from the
// union of that category's organ masks; BACKGROUND from all other pixels.
// Categories without annotated pixels are skipped.
void add_color_samples(const phantom::PhantomTruth& truth,
                       const anatomy::Registry& registry, int per_class,
                       Rng& rng, std::vector<chroma::PixelSample>& out);

// `per_class` pixels per organ mask and `per_class` unannotated pixels.
void add_baseline_samples(const phantom::PhantomTruth& truth, int per_class,
                          Rng& rng, std::vector<BaselineSample>& out);

struct ShapeSampling {
  int stride = 10;
  int positives = 2;  // the true box plus further near-complete grid boxes
  int negatives = 3;  // partial or empty boxes, labelled None
  double complete = 0.98;  // organ fraction a positive box must contain
  double partial = 0.90;   // organ fraction a negative box may contain
};

// Shape images cut from the candidate grid of every registry organ. A box
// is labelled with the searched organ when it holds at least `complete` of
// it, else with another organ of the same color category that it holds
// completely, else None when no same-category organ exceeds `partial`.
// Boxes between the two thresholds are not used.
void add_shape_samples(const phantom::PhantomTruth& truth,
                       const anatomy::Registry& registry,
                       const chroma::ColorModel& color,
                       const ShapeSampling& sampling, Rng& rng,
                       shapenet::ShapeDataset& out);

}  // namespace organseg::pipeline
