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

#include "organseg/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "organseg/anatomy.hpp"
#include "organseg/chroma.hpp"
#include "organseg/error.hpp"
#include "organseg/metrics.hpp"
#include "organseg/phantom.hpp"
#include "organseg/pipeline.hpp"
#include "organseg/shapenet.hpp"

namespace organseg::cli {
namespace {

namespace fs = std::filesystem;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError(path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError(path.string() + ": cannot write");
  f << text;
  if (!f) throw IoError(path.string() + ": write failed");
}

anatomy::Registry load_registry(const std::string& path) {
  if (path.empty()) return anatomy::builtin_registry();
  return anatomy::parse_registry(read_text(path));
}

struct SynthArgs {
  int n = 10;
  std::uint64_t seed = 42;
  std::string out;
  int noise = 12;
  double clutter = 0.6;
};

struct ColorArgs {
  std::string manifest, out;
  std::uint64_t seed = 1;
  int per_class = 200;
  int epochs = 20;
  double lr = 0.5;
};

struct ShapeArgs {
  std::string manifest, color_model, out, registry;
  int epochs = 70;
  std::uint64_t seed = 1;
  int stride = 10;
  int stages = 3;
  int batch = 32;
  double lr = 0.01;
  int side = shapenet::kDefaultInputSide;
};

struct SegmentArgs {
  std::vector<std::string> images;
  std::string organ = "all";
  std::string registry, color_model, shape_model, out;
  int stride = 10;
  double threshold = 0.5;
  bool no_component = false;
};

struct EvaluateArgs {
  std::string results, manifest, out;
};

struct SweepArgs {
  std::string manifest, color_model, out, registry;
  std::vector<int> stages{2, 3, 4};
  std::vector<int> epochs{10, 40, 70};
  std::uint64_t seed = 1;
  int stride = 10;
  int eval_images = 0;
};

struct StatsArgs {
  std::string annotations, out, registry;
};

shapenet::ShapeDataset build_shape_set(const std::vector<phantom::ManifestImage>& images,
                                       const anatomy::Registry& registry,
                                       const chroma::ColorModel& color, int side,
                                       int stride, std::uint64_t seed) {
  shapenet::ShapeDataset ds;
  ds.side = side;
  Rng rng(seed);
  pipeline::ShapeSampling sampling;
  sampling.stride = stride;
  for (const auto& img : images) {
    const auto truth = phantom::load_truth(img, registry);
    pipeline::add_shape_samples(truth, registry, color, sampling, rng, ds);
  }
  return ds;
}

shapenet::ShapeNet make_net(int stages, int side, std::uint64_t seed) {
  shapenet::ArchitectureOptions opts;
  opts.input_side = side;
  opts.conv_channels = shapenet::conv_channels_for_stages(stages);
  return shapenet::make_network(opts, seed);
}

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  phantom::PhantomParams p;
  p.seed = a.seed;
  p.noise = a.noise;
  p.clutter_ratio = a.clutter;
  const auto manifest =
      phantom::generate_dataset(a.n, p, anatomy::builtin_registry(), a.out);
  out << "images=" << a.n << '\n' << "manifest=" << manifest.generic_string() << '\n';
  return kOk;
}

int cmd_train_color(const ColorArgs& a, std::ostream& out) {
  const auto registry = anatomy::builtin_registry();
  const auto images = phantom::group_by_image(phantom::read_manifest(a.manifest));
  std::vector<chroma::PixelSample> samples;
  Rng rng(a.seed);
  for (const auto& img : images)
    pipeline::add_color_samples(phantom::load_truth(img, registry), registry,
                                a.per_class, rng, samples);
  const auto fit = chroma::train_color_model(samples, {a.epochs, a.lr, a.seed});
  chroma::save_color_model(fit.model, a.out);
  out << "samples=" << samples.size() << '\n'
      << "train_accuracy=" << fit.accuracy << '\n'
      << "model=" << a.out << '\n';
  return kOk;
}

int cmd_train_shape(const ShapeArgs& a, std::ostream& out) {
  const auto registry = load_registry(a.registry);
  const auto color = chroma::load_color_model(a.color_model);
  const auto images = phantom::group_by_image(phantom::read_manifest(a.manifest));
  const auto ds = build_shape_set(images, registry, color, a.side, a.stride, a.seed);
  shapenet::TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.seed = a.seed;
  cfg.batch_size = a.batch;
  cfg.learning_rate = a.lr;
  const auto result = shapenet::train(make_net(a.stages, a.side, a.seed), ds, cfg);
  shapenet::save_weights(result.net, a.out);
  out << "samples=" << ds.size() << '\n' << "epochs=" << a.epochs << '\n';
  if (!result.history.empty())
    out << "final_loss=" << result.history.back().loss << '\n'
        << "train_accuracy=" << result.history.back().accuracy << '\n';
  out << "model=" << a.out << '\n';
  return kOk;
}

int cmd_segment(const SegmentArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<OrganId> organs;
  const auto registry = load_registry(a.registry);
  if (a.organ == "all") {
    for (const auto& spec : registry) organs.push_back(spec.organ);
  } else if (const auto id = parse_organ_relaxed(a.organ)) {
    organs.push_back(*id);
  } else {
    err << "error: unknown organ '" << a.organ << "'\n";
    return kUsage;
  }
  pipeline::PipelineConfig cfg;
  cfg.stride = a.stride;
  cfg.threshold = a.threshold;
  cfg.largest_component = !a.no_component;
  cfg.validate();
  const auto color = chroma::load_color_model(a.color_model);
  const auto net = shapenet::load_weights(a.shape_model);
  for (const auto& image_path : a.images) {
    const auto img = raster::resize_canonical(raster::load_image(image_path));
    std::vector<pipeline::SegmentationResult> results;
    for (OrganId id : organs)
      results.push_back(pipeline::segment_organ(img, id, registry, color, net, cfg));
    const std::string stem = fs::path(image_path).stem().string();
    pipeline::write_results(results, a.out, stem);
    for (const auto& r : results)
      out << "image=" << stem << " organ=" << organ_name(r.organ)
          << " found=" << (r.found ? 1 : 0) << " box=" << r.box.x << ','
          << r.box.y << ',' << r.box.w << ',' << r.box.h << " score=" << r.score
          << '\n';
  }
  return kOk;
}

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream& err) {
  const auto registry = anatomy::builtin_registry();
  const auto images = phantom::group_by_image(phantom::read_manifest(a.manifest));
  metrics::Evaluator ev;
  int matched = 0;
  for (const auto& img : images) {
    const std::string stem = img.image_path.stem().string();
    const fs::path csv = fs::path(a.results) / (stem + ".results.csv");
    if (!fs::exists(csv)) continue;
    ++matched;
    for (const auto& row : pipeline::read_results_csv(csv)) {
      BitMask truth(kCanonicalWidth, kCanonicalHeight);
      if (const auto* m = img.find(row.organ); m && m->present)
        truth = raster::decode_mask(m->mask_path);
      BitMask pred(truth.width(), truth.height());
      if (row.found)
        pred = raster::decode_mask(fs::path(a.results) /
                                   (stem + "." + std::string(organ_name(row.organ)) + ".png"));
      ev.add(row.organ, pred, truth);
    }
  }
  if (matched == 0 || ev.empty()) {
    err << "error: no results in " << a.results << " match the manifest\n";
    return kData;
  }
  const auto rows = ev.rows();
  write_text(a.out, metrics::scores_csv(rows));
  out << "images=" << matched << '\n';
  for (const auto& r : rows)
    out << "organ=" << organ_name(r.organ) << " n=" << r.n << " dice=" << r.dice
        << " precision=" << r.precision << " recall=" << r.recall
        << " f_score=" << r.f_score << '\n';
  out << "report=" << a.out << '\n';
  return kOk;
}

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
  const auto registry = load_registry(a.registry);
  const auto color = chroma::load_color_model(a.color_model);
  const auto images = phantom::group_by_image(phantom::read_manifest(a.manifest));
  if (images.size() < 2) throw ArgumentError("sweep needs at least two images");
  const std::size_t half = images.size() / 2;
  const std::vector<phantom::ManifestImage> train(images.begin(), images.begin() + half);
  std::vector<phantom::ManifestImage> eval(images.begin() + half, images.end());
  const int side = shapenet::kDefaultInputSide;
  const auto train_set = build_shape_set(train, registry, color, side, a.stride, a.seed);
  const auto eval_set = build_shape_set(eval, registry, color, side, a.stride, a.seed + 1);
  if (a.eval_images > 0 && static_cast<std::size_t>(a.eval_images) < eval.size())
    eval.resize(a.eval_images);
  std::vector<phantom::PhantomTruth> truths;
  for (const auto& img : eval) truths.push_back(phantom::load_truth(img, registry));

  pipeline::PipelineConfig cfg;
  cfg.stride = a.stride;
  metrics::SweepHooks hooks;
  hooks.make_net = [&](int stages, std::uint64_t seed) {
    return make_net(stages, side, seed);
  };
  hooks.shape_accuracy = [&](const shapenet::ShapeNet& net) {
    return metrics::classification_accuracy(net, eval_set);
  };
  hooks.mean_dice = [&](const shapenet::ShapeNet& net) {
    metrics::Evaluator ev;
    for (const auto& t : truths)
      for (const auto& r : pipeline::segment_all_organs(t.image, registry, color, net, cfg))
        ev.add(r, t.at(r.organ).mask);
    double sum = 0.0;
    const auto rows = ev.rows();
    for (const auto& row : rows) sum += row.dice;
    return sum / static_cast<double>(rows.size());
  };
  shapenet::TrainConfig tc;
  tc.seed = a.seed;
  const auto points = metrics::sweep({a.stages, a.epochs}, train_set, hooks, tc);
  write_text(a.out, metrics::sweep_csv(points));
  for (const auto& p : points)
    out << "conv_stages=" << p.conv_stages << " epochs=" << p.epochs
        << " shape_accuracy=" << p.shape_accuracy << " mean_dice=" << p.mean_dice
        << '\n';
  out << "report=" << a.out << '\n';
  return kOk;
}

int cmd_stats(const StatsArgs& a, std::ostream& out) {
  std::istringstream in(read_text(a.annotations));
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "empty annotation file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::map<std::string, std::size_t> col;
  {
    std::stringstream ss(line);
    std::size_t i = 0;
    for (std::string c; std::getline(ss, c, ','); ++i) col[c] = i;
  }
  for (const char* need : {"organ", "box_x", "box_y"})
    if (!col.count(need))
      throw ParseError(1, std::string("annotation header lacks '") + need + "'");
  std::array<std::vector<anatomy::Corner>, 5> corners;
  for (int no = 2; std::getline(in, line); ++no) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() < col.size()) throw ParseError(no, "too few columns");
    const auto organ = parse_organ(cells[col["organ"]]);
    if (!organ) throw ParseError(no, "unknown organ '" + cells[col["organ"]] + "'");
    if (col.count("present") && cells[col["present"]] == "0") continue;
    try {
      std::size_t used_a = 0, used_b = 0;
      const double x = std::stod(cells[col["box_x"]], &used_a);
      const double y = std::stod(cells[col["box_y"]], &used_b);
      if (used_a != cells[col["box_x"]].size() || used_b != cells[col["box_y"]].size())
        throw std::invalid_argument("trailing");
      corners[index_of(*organ)].push_back({x, y});
    } catch (const std::exception&) {
      throw ParseError(no, "malformed corner");
    }
  }
  const auto base = load_registry(a.registry);
  std::vector<anatomy::OrganSpec> specs;
  for (const auto& spec : base) {
    anatomy::OrganSpec s = spec;
    const auto& c = corners[index_of(spec.organ)];
    if (!c.empty()) s.region = anatomy::plausible_region_from_stats(c);
    out << "organ=" << organ_name(s.organ) << " n=" << c.size() << " region="
        << s.region.amin << ',' << s.region.bmin << ':' << s.region.amax << ','
        << s.region.bmax << '\n';
    specs.push_back(s);
  }
  const anatomy::Registry derived(std::move(specs));
  write_text(a.out, anatomy::serialize_registry(derived));
  out << "registry=" << a.out << '\n';
  return kOk;
}

std::vector<int> parse_int_list(const std::string& text, const char* what) {
  std::vector<int> out;
  std::stringstream ss(text);
  for (std::string c; std::getline(ss, c, ',');) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(c, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != c.size())
      throw ArgumentError(std::string("bad ") + what + " list '" + text + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ArgumentError(std::string("empty ") + what + " list");
  return out;
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Organ localization and segmentation for whole-body sections",
               "organseg"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write a phantom dataset and its manifest");
  s->add_option("--n", synth.n, "Number of images")->default_val(10)->check(CLI::PositiveNumber);
  s->add_option("--seed", synth.seed, "Seed of image 0; image i uses seed + i")->default_val(42);
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--noise", synth.noise, "Per-channel color jitter")->default_val(12)->check(CLI::Range(0, 255));
  s->add_option("--clutter", synth.clutter, "Distractor area per organ area")->default_val(0.6)->check(CLI::NonNegativeNumber);

  ColorArgs color;
  auto* c = app.add_subcommand("train-color", "Fit the pixel color model");
  c->add_option("--manifest", color.manifest, "Dataset manifest")->required();
  c->add_option("--out", color.out, "Color model file")->required();
  c->add_option("--seed", color.seed, "Sampling and SGD seed")->default_val(1);
  c->add_option("--per-class", color.per_class, "Pixels per category per image")->default_val(200)->check(CLI::PositiveNumber);
  c->add_option("--epochs", color.epochs, "SGD epochs")->default_val(20)->check(CLI::NonNegativeNumber);
  c->add_option("--lr", color.lr, "Learning rate")->default_val(0.5)->check(CLI::PositiveNumber);

  ShapeArgs shape;
  auto* t = app.add_subcommand("train-shape", "Train the shape classifier");
  t->add_option("--manifest", shape.manifest, "Dataset manifest")->required();
  t->add_option("--color-model", shape.color_model, "Color model used to cut shape images")->required();
  t->add_option("--out", shape.out, "Weights file")->required();
  t->add_option("--epochs", shape.epochs, "Training epochs")->default_val(70)->check(CLI::NonNegativeNumber);
  t->add_option("--seed", shape.seed, "Sampling, initialization and SGD seed")->default_val(1);
  t->add_option("--stride", shape.stride, "Candidate grid stride")->default_val(10)->check(CLI::PositiveNumber);
  t->add_option("--stages", shape.stages, "Conv stages")->default_val(3)->check(CLI::Range(1, 6));
  t->add_option("--batch", shape.batch, "Mini-batch size")->default_val(32)->check(CLI::PositiveNumber);
  t->add_option("--lr", shape.lr, "Learning rate")->default_val(0.01)->check(CLI::PositiveNumber);
  t->add_option("--side", shape.side, "Network input side")->default_val(shapenet::kDefaultInputSide)->check(CLI::Range(8, 512));
  t->add_option("--registry", shape.registry, "Registry file (default: built-in priors)");

  SegmentArgs seg;
  auto* g = app.add_subcommand("segment", "Locate and segment organs in images");
  g->add_option("--image", seg.images, "Input image (repeatable)")->required();
  g->add_option("--organ", seg.organ, "Organ name or 'all'")->default_val("all");
  g->add_option("--registry", seg.registry, "Registry file (default: built-in priors)");
  g->add_option("--color-model", seg.color_model, "Color model file")->required();
  g->add_option("--shape-model", seg.shape_model, "Shape network weights")->required();
  g->add_option("--stride", seg.stride, "Candidate grid stride")->default_val(10)->check(CLI::PositiveNumber);
  g->add_option("--threshold", seg.threshold, "Minimum organ probability")->default_val(0.5)->check(CLI::Range(0.0, 1.0));
  g->add_flag("--no-component-filter", seg.no_component, "Keep every category pixel of the box");
  g->add_option("--out", seg.out, "Output directory")->required();

  EvaluateArgs eva;
  auto* e = app.add_subcommand("evaluate", "Score segmentation results against a manifest");
  e->add_option("--results", eva.results, "Directory written by segment")->required();
  e->add_option("--manifest", eva.manifest, "Ground-truth manifest")->required();
  e->add_option("--out", eva.out, "Report CSV")->required();

  SweepArgs sw;
  std::string stages_text = "2,3,4", epochs_text = "10,40,70";
  auto* w = app.add_subcommand("sweep", "Accuracy and dice over conv depth and epochs");
  w->add_option("--manifest", sw.manifest, "Dataset manifest; first half trains, second half evaluates")->required();
  w->add_option("--color-model", sw.color_model, "Color model file")->required();
  w->add_option("--stages", stages_text, "Comma-separated conv stage counts")->default_val("2,3,4");
  w->add_option("--epochs", epochs_text, "Comma-separated epoch counts")->default_val("10,40,70");
  w->add_option("--seed", sw.seed, "Seed")->default_val(1);
  w->add_option("--stride", sw.stride, "Candidate grid stride")->default_val(10)->check(CLI::PositiveNumber);
  w->add_option("--eval-images", sw.eval_images, "Limit on images segmented per grid point (0: all)")->default_val(0)->check(CLI::NonNegativeNumber);
  w->add_option("--registry", sw.registry, "Registry file (default: built-in priors)");
  w->add_option("--out", sw.out, "Report CSV")->required();

  StatsArgs st;
  auto* r = app.add_subcommand("stats", "Derive plausible regions from annotated box corners");
  r->add_option("--annotations", st.annotations, "CSV with organ,box_x,box_y columns")->required();
  r->add_option("--registry", st.registry, "Registry supplying box sizes (default: built-in)");
  r->add_option("--out", st.out, "Registry file to write")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, out);
    if (c->parsed()) return cmd_train_color(color, out);
    if (t->parsed()) return cmd_train_shape(shape, out);
    if (g->parsed()) return cmd_segment(seg, out, err);
    if (e->parsed()) return cmd_evaluate(eva, out, err);
    if (w->parsed()) {
      sw.stages = parse_int_list(stages_text, "stage");
      sw.epochs = parse_int_list(epochs_text, "epoch");
      return cmd_sweep(sw, out);
    }
    if (r->parsed()) return cmd_stats(st, out);
  } catch (const ArgumentError& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsage;
  } catch (const TrainingError& ex) {
    err << "error: " << ex.what() << '\n';
    return kTraining;
  } catch (const Error& ex) {
    err << "error: " << ex.what() << '\n';
    return kData;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kData;
  }
  return kUsage;
}

}  // namespace organseg::cli
