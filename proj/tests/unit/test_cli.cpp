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


#include <doctest.h>

#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "organseg/anatomy.hpp"
#include "organseg/cli.hpp"
#include "organseg/pipeline.hpp"
#include "support.hpp"

using namespace organseg;
using organseg::testing::TempDir;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

Run run(std::initializer_list<std::string> args) {
  const std::vector<std::string> v(args);
  std::ostringstream out, err;
  Run r;
  r.code = cli::run(v, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::set<std::string> listing(const std::filesystem::path& dir) {
  std::set<std::string> names;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    names.insert(std::filesystem::relative(e.path(), dir).generic_string());
  return names;
}

std::string read(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Every non-empty stdout line is a run of key=value tokens.
bool key_value_lines(const std::string& text) {
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    std::istringstream tokens(line);
    for (std::string t; tokens >> t;)
      if (t.find('=') == std::string::npos || t.front() == '=') return false;
  }
  return true;
}

}  // namespace

TEST_CASE("usage handling") {
  CHECK(run({"--help"}).code == cli::kOk);
  const Run help = run({"segment", "--help"});
  CHECK(help.code == cli::kOk);
  CHECK(help.out.find("--shape-model") != std::string::npos);
  CHECK(run({"synth", "--help"}).code == cli::kOk);

  const Run bogus = run({"frobnicate"});
  CHECK(bogus.code == cli::kUsage);
  CHECK_FALSE(bogus.err.empty());
  CHECK(run({"synth", "--out", "x", "--bogus"}).code == cli::kUsage);
  CHECK(run({"synth"}).code == cli::kUsage);
  CHECK(run({}).code == cli::kUsage);
  CHECK(run({"synth", "--n", "0", "--out", "x"}).code == cli::kUsage);
}

TEST_CASE("smoke chain") {
  TempDir d;
  const std::string data = (d / "data").string();
  const Run synth = run({"synth", "--n", "4", "--seed", "42", "--out", data});
  REQUIRE(synth.code == cli::kOk);
  CHECK(synth.out.find("images=4") != std::string::npos);
  CHECK(key_value_lines(synth.out));
  CHECK(listing(d.path()).count("data/manifest.csv") == 1);
  const std::string manifest = data + "/manifest.csv";

  const std::string color = (d / "color.bin").string();
  const Run tc = run({"train-color", "--manifest", manifest, "--out", color, "--seed", "3"});
  REQUIRE(tc.code == cli::kOk);
  CHECK(key_value_lines(tc.out));

  const std::string shape = (d / "shape.bin").string();
  const Run ts = run({"train-shape", "--manifest", manifest, "--color-model", color, "--out", shape,
                      "--epochs", "2", "--seed", "5", "--stride", "20"});
  REQUIRE(ts.code == cli::kOk);
  CHECK(ts.out.find("epochs=2") != std::string::npos);
  CHECK(key_value_lines(ts.out));

  const std::string seg = (d / "seg").string();
  const Run sg = run({"segment", "--image", data + "/phantom_0003.png", "--organ", "all",
                      "--color-model", color, "--shape-model", shape, "--stride", "40",
                      "--threshold", "0.5", "--out", seg});
  REQUIRE(sg.code == cli::kOk);
  CHECK(key_value_lines(sg.out));
  const auto files = listing(seg);
  CHECK(files.count("phantom_0003.results.csv") == 1);
  for (OrganId id : kAllOrgans)
    CHECK(files.count("phantom_0003." + std::string(organ_name(id)) + ".png") == 1);
  CHECK(pipeline::read_results_csv(std::filesystem::path(seg) / "phantom_0003.results.csv").size() == 5);

  const std::string report = (d / "report.csv").string();
  const Run ev = run({"evaluate", "--results", seg, "--manifest", manifest, "--out", report});
  REQUIRE(ev.code == cli::kOk);
  CHECK(ev.out.find("images=1") != std::string::npos);
  CHECK(key_value_lines(ev.out));
  std::istringstream rep(read(report));
  std::string line;
  std::getline(rep, line);
  CHECK(line == "organ,n,dice,precision,recall,f_score");
  int rows = 0;
  while (std::getline(rep, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 5);
  }
  CHECK(rows == 5);

  // Nothing was written outside the named targets.
  std::set<std::string> top;
  for (const auto& e : std::filesystem::directory_iterator(d.path()))
    top.insert(e.path().filename().string());
  CHECK(top == std::set<std::string>{"data", "color.bin", "shape.bin", "seg", "report.csv"});

  SUBCASE("single organ and error paths") {
    const std::string one = (d / "one").string();
    const Run brain = run({"segment", "--image", data + "/phantom_0000.png", "--organ", "Brain",
                           "--color-model", color, "--shape-model", shape, "--stride", "40",
                           "--out", one});
    CHECK(brain.code == cli::kOk);
    CHECK(listing(one).size() == 2);

    CHECK(run({"segment", "--image", data + "/phantom_0000.png", "--organ", "Pancreas",
               "--color-model", color, "--shape-model", shape, "--out", one})
              .code == cli::kUsage);
    CHECK(run({"segment", "--image", data + "/missing.png", "--color-model", color,
               "--shape-model", shape, "--out", one})
              .code == cli::kData);
    CHECK(run({"segment", "--image", data + "/phantom_0000.png", "--color-model", shape,
               "--shape-model", shape, "--out", one})
              .code == cli::kData);
    CHECK(run({"train-color", "--manifest", data + "/nope.csv", "--out", color}).code == cli::kData);
    CHECK(run({"train-shape", "--manifest", manifest, "--color-model", color, "--out",
               (d / "div.bin").string(), "--epochs", "3", "--lr", "1e30", "--stride", "40"})
              .code == cli::kTraining);
    CHECK(run({"evaluate", "--results", one, "--manifest", data + "/nope.csv", "--out", report})
              .code == cli::kData);
    const std::string empty_dir = (d / "empty").string();
    std::filesystem::create_directories(empty_dir);
    CHECK(run({"evaluate", "--results", empty_dir, "--manifest", manifest, "--out", report}).code ==
          cli::kData);
  }

  SUBCASE("sweep") {
    const std::string sw = (d / "sweep.csv").string();
    const Run r = run({"sweep", "--manifest", manifest, "--color-model", color, "--stages", "1,2",
                       "--epochs", "0,1", "--seed", "2", "--stride", "40", "--eval-images", "1",
                       "--out", sw});
    REQUIRE(r.code == cli::kOk);
    CHECK(key_value_lines(r.out));
    std::istringstream in(read(sw));
    std::getline(in, line);
    CHECK(line == "conv_stages,epochs,shape_accuracy,mean_dice");
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line.substr(0, line.find(',', line.find(',') + 1)));
    CHECK(lines == std::vector<std::string>{"1,0", "1,1", "2,0", "2,1"});
    CHECK(run({"sweep", "--manifest", manifest, "--color-model", color, "--stages", "2,x",
               "--out", sw})
              .code == cli::kUsage);
  }
}

TEST_CASE("runs are reproducible") {
  TempDir a, b;
  for (const TempDir* d : {&a, &b}) {
    const std::string data = (*d / "data").string();
    REQUIRE(run({"synth", "--n", "2", "--seed", "7", "--out", data}).code == 0);
    REQUIRE(run({"train-color", "--manifest", data + "/manifest.csv", "--out",
                 (*d / "c.bin").string()})
                .code == 0);
    REQUIRE(run({"train-shape", "--manifest", data + "/manifest.csv", "--color-model",
                 (*d / "c.bin").string(), "--out", (*d / "s.bin").string(), "--epochs", "1",
                 "--stride", "40"})
                .code == 0);
  }
  const auto files = listing(a.path());
  CHECK(files == listing(b.path()));
  for (const auto& f : files)
    if (std::filesystem::is_regular_file(a / f)) CHECK(read(a / f) == read(b / f));
}

TEST_CASE("stats derives regions from annotated corners") {
  TempDir d;
  std::ofstream(d / "ann.csv") << "image,organ,box_x,box_y,present\n"
                                  "a,Brain,0,0,1\n"
                                  "b,Brain,20,0,1\n"
                                  "c,Heart,900,500,0\n"
                                  "d,Spine,100,200,1\n";
  const std::string out = (d / "reg.txt").string();
  const Run r = run({"stats", "--annotations", (d / "ann.csv").string(), "--out", out});
  REQUIRE(r.code == cli::kOk);
  CHECK(key_value_lines(r.out));
  const auto reg = anatomy::parse_registry(read(out));
  const auto builtin = anatomy::builtin_registry();
  CHECK(reg.at(OrganId::kBrain).region == anatomy::PlausibleRegion{0, 0, 60, 0});
  CHECK(reg.at(OrganId::kSpine).region == anatomy::PlausibleRegion{100, 200, 100, 200});
  // Organs without usable annotations keep their priors.
  CHECK(reg.at(OrganId::kHeart) == builtin.at(OrganId::kHeart));
  CHECK(reg.at(OrganId::kBrain).box_w == builtin.at(OrganId::kBrain).box_w);

  std::ofstream(d / "bad.csv") << "organ,box_x\nBrain,1\n";
  CHECK(run({"stats", "--annotations", (d / "bad.csv").string(), "--out", out}).code == cli::kData);
  std::ofstream(d / "bad2.csv") << "organ,box_x,box_y\nBrain,1,zz\n";
  CHECK(run({"stats", "--annotations", (d / "bad2.csv").string(), "--out", out}).code == cli::kData);
}
