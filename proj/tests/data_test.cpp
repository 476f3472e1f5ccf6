// Copyright 2026 The cvse Authors.
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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "cvse/data.hpp"
#include "cvse/error.hpp"
#include "cvse/rng.hpp"
#include "support/naive.hpp"
#include "support/tempdir.hpp"

using namespace cvse;

namespace {

FeatureTable sample_table() {
  FeatureTable table;
  table.ids = {"a", "b", "c"};
  table.features = Matrix(3, 2);
  table.features << 1.5, -2.0, 0.0, 3.25, -0.5, 0.125;
  return table;
}

// Two images, three captions (image a has two), plus a third test image
// with one caption so every split is populated.
void write_sample_dataset(const std::filesystem::path& dir) {
  FeatureTable images;
  images.ids = {"img_a", "img_b", "img_c"};
  images.features = Matrix(3, 2);
  images.features << 1, 0, 0, 1, 1, 1;

  FeatureTable captions;
  captions.ids = {"cap_0", "cap_1", "cap_2", "cap_3"};
  captions.features = Matrix(4, 3);
  captions.features << 1, 0, 0, 0, 1, 0, 0, 0, 1, 1, 1, 0;

  DatasetPaths paths = dataset_paths(dir);
  write_feature_file(paths.images, images);
  write_feature_file(paths.captions, captions);
  std::ofstream pairing(paths.pairing);
  pairing << "cap_0\timg_a\ncap_1\timg_a\ncap_2\timg_b\ncap_3\timg_c\n";
  pairing.close();
  std::ofstream split(paths.split);
  split << "img_a\ttrain\nimg_b\tval\nimg_c\ttest\n";
}

}  // namespace

TEST_CASE("feature files round-trip exactly") {
  support::TempDir tmp("fvt");
  FeatureTable table = sample_table();
  auto path = tmp.path() / "x.fvt";
  write_feature_file(path, table);
  FeatureTable loaded = load_feature_file(path);
  CHECK(loaded.ids == table.ids);
  CHECK(loaded.features.rows() == 3);
  CHECK(loaded.features.cols() == 2);
  CHECK((loaded.features - table.features).cwiseAbs().maxCoeff() == 0.0);

  auto path2 = tmp.path() / "y.fvt";
  write_feature_file(path2, table);
  CHECK(support::read_bytes(path) == support::read_bytes(path2));
}

TEST_CASE("feature file writer validates its input") {
  support::TempDir tmp("fvt-bad-in");
  FeatureTable dup = sample_table();
  dup.ids[2] = "a";
  CHECK_THROWS_AS(write_feature_file(tmp.path() / "d.fvt", dup), DataError);

  FeatureTable blank = sample_table();
  blank.ids[1] = "";
  CHECK_THROWS_AS(write_feature_file(tmp.path() / "b.fvt", blank), ConfigError);

  FeatureTable inf = sample_table();
  inf.features(0, 0) = std::nan("");
  CHECK_THROWS_AS(write_feature_file(tmp.path() / "n.fvt", inf), ConfigError);

  FeatureTable skew = sample_table();
  skew.ids.pop_back();
  CHECK_THROWS_AS(write_feature_file(tmp.path() / "s.fvt", skew), ConfigError);
}

TEST_CASE("feature file loader rejects every corruption mode") {
  support::TempDir tmp("fvt-bad");
  auto path = tmp.path() / "x.fvt";
  write_feature_file(path, sample_table());
  std::string bytes = support::read_bytes(path);

  auto expect_reject = [&](std::string mutated, const char* label) {
    auto bad = tmp.path() / (std::string(label) + ".fvt");
    support::write_bytes(bad, mutated);
    CHECK_THROWS_AS(load_feature_file(bad), DataError);
  };

  std::string magic = bytes;
  magic[0] = 'Z';
  expect_reject(magic, "magic");

  std::string flip = bytes;
  flip[bytes.size() / 2] = static_cast<char>(flip[bytes.size() / 2] ^ 0x10);
  expect_reject(flip, "flip");

  expect_reject(bytes.substr(0, bytes.size() - 6), "trunc");
  expect_reject(bytes.substr(0, 3), "stub");
  CHECK_THROWS_AS(load_feature_file(tmp.path() / "missing.fvt"), DataError);
}

TEST_CASE("split names round-trip") {
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    CHECK(split_from_name(split_name(s)) == s);
  }
  CHECK_THROWS_AS(split_from_name("dev"), DataError);
}

TEST_CASE("dataset loads with cross-file validation intact") {
  support::TempDir tmp("ds");
  write_sample_dataset(tmp.path());
  PairedDataset ds = load_dataset_dir(tmp.path());

  CHECK(ds.images.rows() == 3);
  CHECK(ds.captions.rows() == 4);
  CHECK(ds.caption_image == std::vector<Index>{0, 0, 1, 2});
  CHECK(ds.image_split ==
        std::vector<Split>{Split::kTrain, Split::kVal, Split::kTest});
  CHECK(ds.caption_split(1) == Split::kTrain);
  CHECK(ds.split_images(Split::kVal) == std::vector<Index>{1});
  CHECK(ds.split_captions(Split::kTrain) == std::vector<Index>{0, 1});
}

TEST_CASE("dataset writer and loader round-trip") {
  support::TempDir tmp("ds-rt");
  SynthConfig cfg;
  cfg.images = 12;
  cfg.captions_per_image = 2;
  cfg.latent_dim = 3;
  cfg.image_dim = 5;
  cfg.text_dim = 4;
  PairedDataset ds = synth_generate(cfg);
  write_dataset(tmp.path() / "out", ds);
  PairedDataset loaded = load_dataset_dir(tmp.path() / "out");
  CHECK(loaded.images.ids == ds.images.ids);
  CHECK(loaded.captions.ids == ds.captions.ids);
  CHECK(loaded.caption_image == ds.caption_image);
  CHECK(loaded.image_split == ds.image_split);
  CHECK((loaded.images.features - ds.images.features).cwiseAbs().maxCoeff() == 0.0);
  CHECK((loaded.captions.features - ds.captions.features).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("dataset loader rejects inconsistent files") {
  support::TempDir tmp("ds-bad");
  write_sample_dataset(tmp.path());
  DatasetPaths paths = dataset_paths(tmp.path());

  auto reload = [&]() { return load_dataset_dir(tmp.path()); };
  CHECK_NOTHROW(reload());

  SUBCASE("pairing references an unknown image") {
    std::ofstream(paths.pairing) << "cap_0\timg_a\ncap_1\timg_a\ncap_2\timg_b\ncap_3\timg_z\n";
    CHECK_THROWS_AS(reload(), DataError);
  }
  SUBCASE("pairing references an unknown caption") {
    std::ofstream(paths.pairing) << "cap_0\timg_a\ncap_1\timg_a\ncap_2\timg_b\ncap_9\timg_c\n";
    CHECK_THROWS_AS(reload(), DataError);
  }
  SUBCASE("caption paired twice") {
    std::ofstream(paths.pairing)
        << "cap_0\timg_a\ncap_1\timg_a\ncap_2\timg_b\ncap_3\timg_c\ncap_0\timg_b\n";
    CHECK_THROWS_AS(reload(), DataError);
  }
  SUBCASE("caption never paired") {
    std::ofstream(paths.pairing) << "cap_0\timg_a\ncap_1\timg_a\ncap_2\timg_b\n";
    CHECK_THROWS_AS(reload(), DataError);
  }
  SUBCASE("image without captions") {
    std::ofstream(paths.pairing) << "cap_0\timg_a\ncap_1\timg_a\ncap_2\timg_a\ncap_3\timg_a\n";
    CHECK_THROWS_AS(reload(), DataError);
  }
  SUBCASE("malformed pairing line names its number") {
    std::ofstream(paths.pairing) << "cap_0\timg_a\ncap_1 img_a\ncap_2\timg_b\ncap_3\timg_c\n";
    try {
      reload();
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }
  SUBCASE("split misses an image") {
    std::ofstream(paths.split) << "img_a\ttrain\nimg_b\tval\n";
    CHECK_THROWS_AS(reload(), DataError);
  }
  SUBCASE("split assigns an image twice") {
    std::ofstream(paths.split) << "img_a\ttrain\nimg_b\tval\nimg_c\ttest\nimg_a\tval\n";
    CHECK_THROWS_AS(reload(), DataError);
  }
  SUBCASE("split names an unknown image") {
    std::ofstream(paths.split) << "img_a\ttrain\nimg_b\tval\nimg_c\ttest\nimg_q\ttest\n";
    CHECK_THROWS_AS(reload(), DataError);
  }
  SUBCASE("split uses an unknown label") {
    std::ofstream(paths.split) << "img_a\ttrain\nimg_b\tval\nimg_c\tholdout\n";
    CHECK_THROWS_AS(reload(), DataError);
  }
}

TEST_CASE("batches cover each split pair exactly once when sizes divide") {
  SynthConfig cfg;
  cfg.images = 20;
  cfg.captions_per_image = 3;
  cfg.latent_dim = 4;
  cfg.image_dim = 6;
  cfg.text_dim = 5;
  PairedDataset ds = synth_generate(cfg);

  std::vector<Index> train_caps = ds.split_captions(Split::kTrain);
  REQUIRE(train_caps.size() == 48);  // 16 train images x 3 captions

  Rng rng(4);
  std::vector<MiniBatch> batches = make_batches(ds, Split::kTrain, 8, rng);
  CHECK(batches.size() == 6);
  std::multiset<Index> seen;
  for (const MiniBatch& b : batches) {
    REQUIRE(b.caption_rows.size() == 8);
    REQUIRE(b.image_rows.size() == 8);
    CHECK(b.image_feats.rows() == 8);
    CHECK(b.text_feats.rows() == 8);
    for (std::size_t k = 0; k < b.caption_rows.size(); ++k) {
      Index cap = b.caption_rows[k];
      seen.insert(cap);
      CHECK(b.image_rows[k] == ds.caption_image[static_cast<std::size_t>(cap)]);
      CHECK((b.text_feats.row(static_cast<Index>(k)) -
             ds.captions.features.row(cap)).cwiseAbs().maxCoeff() == 0.0);
      CHECK((b.image_feats.row(static_cast<Index>(k)) -
             ds.images.features.row(b.image_rows[k])).cwiseAbs().maxCoeff() == 0.0);
    }
  }
  std::multiset<Index> want(train_caps.begin(), train_caps.end());
  CHECK(seen == want);
}

TEST_CASE("a short remainder batch is dropped") {
  SynthConfig cfg;
  cfg.images = 10;
  cfg.captions_per_image = 1;
  cfg.latent_dim = 3;
  cfg.image_dim = 4;
  cfg.text_dim = 4;
  PairedDataset ds = synth_generate(cfg);
  REQUIRE(ds.split_captions(Split::kTrain).size() == 8);

  Rng rng(9);
  std::vector<MiniBatch> batches = make_batches(ds, Split::kTrain, 3, rng);
  CHECK(batches.size() == 2);  // 8 = 3 + 3 + dropped 2
}

TEST_CASE("batching is seed-deterministic and seed-sensitive") {
  SynthConfig cfg;
  cfg.images = 15;
  cfg.captions_per_image = 2;
  cfg.latent_dim = 3;
  cfg.image_dim = 4;
  cfg.text_dim = 4;
  PairedDataset ds = synth_generate(cfg);

  Rng r1(5), r2(5), r3(6);
  auto b1 = make_batches(ds, Split::kTrain, 4, r1);
  auto b2 = make_batches(ds, Split::kTrain, 4, r2);
  auto b3 = make_batches(ds, Split::kTrain, 4, r3);
  REQUIRE(b1.size() == b2.size());
  bool same = true, differs = false;
  for (std::size_t i = 0; i < b1.size(); ++i) {
    same = same && b1[i].caption_rows == b2[i].caption_rows;
    if (i < b3.size()) differs = differs || b1[i].caption_rows != b3[i].caption_rows;
  }
  CHECK(same);
  CHECK(differs);
}

TEST_CASE("make_batches rejects undersized requests") {
  SynthConfig cfg;
  cfg.images = 6;
  cfg.captions_per_image = 1;
  cfg.latent_dim = 2;
  cfg.image_dim = 3;
  cfg.text_dim = 3;
  PairedDataset ds = synth_generate(cfg);
  Rng rng(1);
  CHECK_THROWS_AS(make_batches(ds, Split::kTrain, 1, rng), ConfigError);
  // A batch size above the split size leaves nothing to emit.
  CHECK(make_batches(ds, Split::kTrain, 100, rng).empty());
}

TEST_CASE("synthetic corpus has the advertised shape") {
  SynthConfig cfg;
  cfg.images = 30;
  cfg.captions_per_image = 4;
  cfg.latent_dim = 5;
  cfg.image_dim = 7;
  cfg.text_dim = 6;
  cfg.seed = 77;
  PairedDataset ds = synth_generate(cfg);

  CHECK(ds.images.rows() == 30);
  CHECK(ds.captions.rows() == 120);
  CHECK(ds.images.dim() == 7);
  CHECK(ds.captions.dim() == 6);

  // Splits: val and test take images/10 each, train the rest.
  CHECK(ds.split_images(Split::kVal).size() == 3);
  CHECK(ds.split_images(Split::kTest).size() == 3);
  CHECK(ds.split_images(Split::kTrain).size() == 24);

  // Ids are unique and captions point at their own image block.
  std::set<std::string> ids(ds.images.ids.begin(), ds.images.ids.end());
  CHECK(ids.size() == 30);
  for (Index c = 0; c < ds.captions.rows(); ++c) {
    CHECK(ds.caption_image[static_cast<std::size_t>(c)] == c / 4);
  }
}

TEST_CASE("synthetic corpus is seed-deterministic") {
  SynthConfig cfg;
  cfg.images = 8;
  cfg.captions_per_image = 2;
  cfg.latent_dim = 3;
  cfg.image_dim = 4;
  cfg.text_dim = 4;
  PairedDataset a = synth_generate(cfg);
  PairedDataset b = synth_generate(cfg);
  CHECK((a.images.features - b.images.features).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.captions.features - b.captions.features).cwiseAbs().maxCoeff() == 0.0);

  cfg.seed = 2;
  PairedDataset c = synth_generate(cfg);
  CHECK((a.images.features - c.images.features).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("synthetic paired views align better than chance") {
  SynthConfig cfg;
  cfg.images = 40;
  cfg.captions_per_image = 2;
  cfg.latent_dim = 6;
  cfg.image_dim = 10;
  cfg.text_dim = 9;
  cfg.noise_sigma = 0.05;
  PairedDataset ds = synth_generate(cfg);

  // The latent construction leaves paired rows correlated through the
  // shared latent vector even though the two views live in different
  // spaces; a least-squares map from text to image space must beat noise.
  Matrix caps = ds.captions.features;
  Matrix imgs(ds.captions.rows(), ds.images.dim());
  for (Index c = 0; c < ds.captions.rows(); ++c) {
    imgs.row(c) = ds.images.features.row(ds.caption_image[static_cast<std::size_t>(c)]);
  }
  Matrix map = caps.colPivHouseholderQr().solve(imgs);
  double residual = (caps * map - imgs).norm() / imgs.norm();
  CHECK(residual < 0.5);
}

TEST_CASE("synth config validation") {
  SynthConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.images = 2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SynthConfig{};
  cfg.noise_sigma = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SynthConfig{};
  cfg.captions_per_image = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
