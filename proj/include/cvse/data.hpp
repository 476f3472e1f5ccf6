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

#ifndef CVSE_DATA_HPP_
#define CVSE_DATA_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cvse/rng.hpp"
#include "cvse/types.hpp"

namespace cvse {

// Precomputed feature vectors keyed by string id; row order is the file
// order and ids are unique.
struct FeatureTable {
  std::vector<std::string> ids;
  Matrix features;  // one row per id

  Index rows() const { return features.rows(); }
  Index dim() const { return features.cols(); }
};

void write_feature_file(const std::filesystem::path& path, const FeatureTable& table);
FeatureTable load_feature_file(const std::filesystem::path& path);

enum class Split { kTrain, kVal, kTest };

std::string split_name(Split split);
Split split_from_name(const std::string& name);

// Images with their captions (several captions per image), plus a per-image
// split assignment that captions inherit.
struct PairedDataset {
  FeatureTable images;
  FeatureTable captions;
  std::vector<Index> caption_image;  // caption row -> image row
  std::vector<Split> image_split;

  Split caption_split(Index caption_row) const {
    return image_split[static_cast<std::size_t>(caption_image[static_cast<std::size_t>(caption_row)])];
  }
  std::vector<Index> split_images(Split split) const;
  std::vector<Index> split_captions(Split split) const;
};

// caption_id<TAB>image_id lines.
void write_pairing_file(const std::filesystem::path& path,
                        const std::vector<std::string>& caption_ids,
                        const std::vector<std::string>& image_ids,
                        const std::vector<Index>& caption_image);

// image_id<TAB>{train|val|test} lines.
void write_split_file(const std::filesystem::path& path, const std::vector<std::string>& image_ids,
                      const std::vector<Split>& image_split);

// Loads and cross-validates the four-file dataset layout. Every caption must
// map to a known image, every image needs at least one caption, and every
// image needs a split assignment.
PairedDataset load_dataset(const std::filesystem::path& images_path,
                           const std::filesystem::path& captions_path,
                           const std::filesystem::path& pairing_path,
                           const std::filesystem::path& split_path);

struct MiniBatch {
  std::vector<Index> caption_rows;  // into captions
  std::vector<Index> image_rows;    // matching image per caption
  Matrix image_feats, text_feats;
};

// One shuffled epoch over all (image, caption) pairs of the split, cut into
// batches of exactly batch_size; a short remainder is dropped.
std::vector<MiniBatch> make_batches(const PairedDataset& ds, Split split, Index batch_size,
                                    Rng& rng);

// Synthetic paired corpus: both modalities are noisy linear views of a
// shared latent vector, so a linear model can align them.
struct SynthConfig {
  Index images = 1000;
  Index captions_per_image = 5;
  Index latent_dim = 16;
  Index image_dim = 64;
  Index text_dim = 48;
  double noise_sigma = 0.1;
  std::uint64_t seed = 1;

  void validate() const;
};

PairedDataset synth_generate(const SynthConfig& config);

struct DatasetPaths {
  std::filesystem::path images, captions, pairing, split;
};

// Standard file names under a dataset directory.
DatasetPaths dataset_paths(const std::filesystem::path& dir);

void write_dataset(const std::filesystem::path& dir, const PairedDataset& ds);
PairedDataset load_dataset_dir(const std::filesystem::path& dir);

}  // namespace cvse

#endif  // CVSE_DATA_HPP_
