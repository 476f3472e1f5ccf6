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

#include "cvse/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "cvse/error.hpp"
#include "binary_io.hpp"

namespace cvse {
namespace {

constexpr char kFeatureMagic[4] = {'F', 'V', 'T', '1'};
constexpr std::uint32_t kFeatureVersion = 1;

std::unordered_map<std::string, Index> id_index(const std::vector<std::string>& ids,
                                                const char* what) {
  std::unordered_map<std::string, Index> index;
  index.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!index.emplace(ids[i], static_cast<Index>(i)).second) {
      throw DataError(std::string(what) + ": duplicate id '" + ids[i] + "'");
    }
  }
  return index;
}

std::vector<std::string> read_lines(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw DataError(std::string(what) + ": cannot open '" + path.string() + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

struct TabLine {
  std::string left, right;
};

TabLine split_tab(const std::string& line, std::size_t lineno, const char* what) {
  auto tab = line.find('\t');
  if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
    throw DataError(std::string(what) + ": line " + std::to_string(lineno) +
                    " is not two tab-separated fields");
  }
  return {line.substr(0, tab), line.substr(tab + 1)};
}

}  // namespace

void write_feature_file(const std::filesystem::path& path, const FeatureTable& table) {
  if (table.rows() != static_cast<Index>(table.ids.size())) {
    throw ConfigError("feature table: " + std::to_string(table.ids.size()) + " ids but " +
                      std::to_string(table.rows()) + " feature rows");
  }
  if (table.rows() < 1 || table.dim() < 1) {
    throw ConfigError("feature table: needs at least one row and one dimension");
  }
  id_index(table.ids, "feature table");

  detail::ByteWriter writer;
  writer.put_bytes(kFeatureMagic, 4);
  writer.put_u32(kFeatureVersion);
  writer.put_u64(static_cast<std::uint64_t>(table.rows()));
  writer.put_u64(static_cast<std::uint64_t>(table.dim()));
  for (Index r = 0; r < table.rows(); ++r) {
    const std::string& id = table.ids[static_cast<std::size_t>(r)];
    if (id.empty() || id.size() > 0xFFFF) {
      throw ConfigError("feature table: id '" + id + "' has unsupported length");
    }
    if (!table.features.row(r).allFinite()) {
      throw ConfigError("feature table: row '" + id + "' contains non-finite values");
    }
    writer.put_u16(static_cast<std::uint16_t>(id.size()));
    writer.put_string(id);
    for (Index c = 0; c < table.dim(); ++c) {
      writer.put_f64(table.features(r, c));
    }
  }
  writer.write_with_crc(path);
}

FeatureTable load_feature_file(const std::filesystem::path& path) {
  detail::ByteReader reader = detail::ByteReader::load_checked(path, "feature file");
  std::string magic = reader.get_bytes(4);
  if (magic != std::string(kFeatureMagic, 4)) {
    throw DataError("feature file: '" + path.string() + "' does not start with the expected magic");
  }
  std::uint32_t version = reader.get_u32();
  if (version != kFeatureVersion) {
    throw DataError("feature file: unsupported version " + std::to_string(version) +
                    " (supported: " + std::to_string(kFeatureVersion) + ")");
  }
  std::uint64_t rows = reader.get_u64();
  std::uint64_t dim = reader.get_u64();
  if (rows < 1 || dim < 1) {
    throw DataError("feature file: declares " + std::to_string(rows) + " rows of dim " +
                    std::to_string(dim));
  }

  FeatureTable table;
  table.ids.reserve(rows);
  table.features.resize(static_cast<Index>(rows), static_cast<Index>(dim));
  std::unordered_set<std::string> seen;
  for (std::uint64_t r = 0; r < rows; ++r) {
    std::uint16_t id_len = reader.get_u16();
    std::string id = reader.get_bytes(id_len);
    if (id.empty()) throw DataError("feature file: row " + std::to_string(r) + " has an empty id");
    if (!seen.insert(id).second) throw DataError("feature file: duplicate id '" + id + "'");
    for (std::uint64_t c = 0; c < dim; ++c) {
      double v = reader.get_f64();
      if (!std::isfinite(v)) {
        throw DataError("feature file: non-finite value in row '" + id + "'");
      }
      table.features(static_cast<Index>(r), static_cast<Index>(c)) = v;
    }
    table.ids.push_back(std::move(id));
  }
  if (!reader.done()) {
    throw DataError("feature file: " + std::to_string(reader.remaining()) +
                    " unexpected trailing bytes");
  }
  return table;
}

std::string split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  throw ConfigError("split_name: unknown split");
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw DataError("unknown split '" + name + "' (expected train, val, or test)");
}

std::vector<Index> PairedDataset::split_images(Split split) const {
  std::vector<Index> rows;
  for (std::size_t i = 0; i < image_split.size(); ++i) {
    if (image_split[i] == split) rows.push_back(static_cast<Index>(i));
  }
  return rows;
}

std::vector<Index> PairedDataset::split_captions(Split split) const {
  std::vector<Index> rows;
  for (std::size_t c = 0; c < caption_image.size(); ++c) {
    if (caption_split(static_cast<Index>(c)) == split) rows.push_back(static_cast<Index>(c));
  }
  return rows;
}

void write_pairing_file(const std::filesystem::path& path,
                        const std::vector<std::string>& caption_ids,
                        const std::vector<std::string>& image_ids,
                        const std::vector<Index>& caption_image) {
  if (caption_ids.size() != caption_image.size()) {
    throw ConfigError("pairing: " + std::to_string(caption_ids.size()) + " caption ids but " +
                      std::to_string(caption_image.size()) + " assignments");
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("pairing: cannot open '" + path.string() + "' for writing");
  for (std::size_t c = 0; c < caption_ids.size(); ++c) {
    out << caption_ids[c] << '\t' << image_ids.at(static_cast<std::size_t>(caption_image[c]))
        << '\n';
  }
  if (!out) throw DataError("pairing: failed writing '" + path.string() + "'");
}

void write_split_file(const std::filesystem::path& path, const std::vector<std::string>& image_ids,
                      const std::vector<Split>& image_split) {
  if (image_ids.size() != image_split.size()) {
    throw ConfigError("split file: " + std::to_string(image_ids.size()) + " image ids but " +
                      std::to_string(image_split.size()) + " assignments");
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("split file: cannot open '" + path.string() + "' for writing");
  for (std::size_t i = 0; i < image_ids.size(); ++i) {
    out << image_ids[i] << '\t' << split_name(image_split[i]) << '\n';
  }
  if (!out) throw DataError("split file: failed writing '" + path.string() + "'");
}

PairedDataset load_dataset(const std::filesystem::path& images_path,
                           const std::filesystem::path& captions_path,
                           const std::filesystem::path& pairing_path,
                           const std::filesystem::path& split_path) {
  PairedDataset ds;
  ds.images = load_feature_file(images_path);
  ds.captions = load_feature_file(captions_path);
  auto image_index = id_index(ds.images.ids, "images");
  auto caption_index = id_index(ds.captions.ids, "captions");

  // caption_id -> image_id pairing.
  ds.caption_image.assign(ds.captions.ids.size(), -1);
  std::vector<int> captions_per_image(ds.images.ids.size(), 0);
  {
    auto lines = read_lines(pairing_path, "pairing");
    std::size_t lineno = 0;
    for (const std::string& line : lines) {
      ++lineno;
      if (line.empty()) continue;
      TabLine fields = split_tab(line, lineno, "pairing");
      auto cap = caption_index.find(fields.left);
      if (cap == caption_index.end()) {
        throw DataError("pairing: unknown caption id '" + fields.left + "'");
      }
      auto img = image_index.find(fields.right);
      if (img == image_index.end()) {
        throw DataError("pairing: unknown image id '" + fields.right + "'");
      }
      Index& slot = ds.caption_image[static_cast<std::size_t>(cap->second)];
      if (slot != -1) {
        throw DataError("pairing: caption '" + fields.left + "' is paired more than once");
      }
      slot = img->second;
      captions_per_image[static_cast<std::size_t>(img->second)] += 1;
    }
  }
  for (std::size_t c = 0; c < ds.caption_image.size(); ++c) {
    if (ds.caption_image[c] == -1) {
      throw DataError("pairing: caption '" + ds.captions.ids[c] + "' has no image");
    }
  }
  for (std::size_t i = 0; i < captions_per_image.size(); ++i) {
    if (captions_per_image[i] == 0) {
      throw DataError("pairing: image '" + ds.images.ids[i] + "' has no captions");
    }
  }

  // image_id -> split assignment.
  std::vector<int> assigned(ds.images.ids.size(), 0);
  ds.image_split.assign(ds.images.ids.size(), Split::kTrain);
  {
    auto lines = read_lines(split_path, "split file");
    std::size_t lineno = 0;
    for (const std::string& line : lines) {
      ++lineno;
      if (line.empty()) continue;
      TabLine fields = split_tab(line, lineno, "split file");
      auto img = image_index.find(fields.left);
      if (img == image_index.end()) {
        throw DataError("split file: unknown image id '" + fields.left + "'");
      }
      std::size_t row = static_cast<std::size_t>(img->second);
      if (assigned[row]) {
        throw DataError("split file: image '" + fields.left + "' is assigned more than once");
      }
      assigned[row] = 1;
      ds.image_split[row] = split_from_name(fields.right);
    }
  }
  for (std::size_t i = 0; i < assigned.size(); ++i) {
    if (!assigned[i]) {
      throw DataError("split file: image '" + ds.images.ids[i] + "' has no split assignment");
    }
  }
  return ds;
}

std::vector<MiniBatch> make_batches(const PairedDataset& ds, Split split, Index batch_size,
                                    Rng& rng) {
  if (batch_size < 2) {
    throw ConfigError("make_batches: batch size must be >= 2, got " + std::to_string(batch_size));
  }
  std::vector<Index> pairs = ds.split_captions(split);
  if (pairs.empty()) {
    throw DataError("make_batches: split '" + split_name(split) + "' has no pairs");
  }
  rng.shuffle(pairs);

  const std::size_t n_batches = pairs.size() / static_cast<std::size_t>(batch_size);
  std::vector<MiniBatch> batches;
  batches.reserve(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) {
    MiniBatch batch;
    batch.caption_rows.assign(pairs.begin() + static_cast<std::ptrdiff_t>(b * batch_size),
                              pairs.begin() + static_cast<std::ptrdiff_t>((b + 1) * batch_size));
    batch.image_rows.reserve(batch.caption_rows.size());
    batch.image_feats.resize(batch_size, ds.images.dim());
    batch.text_feats.resize(batch_size, ds.captions.dim());
    for (Index i = 0; i < batch_size; ++i) {
      Index cap = batch.caption_rows[static_cast<std::size_t>(i)];
      Index img = ds.caption_image[static_cast<std::size_t>(cap)];
      batch.image_rows.push_back(img);
      batch.image_feats.row(i) = ds.images.features.row(img);
      batch.text_feats.row(i) = ds.captions.features.row(cap);
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

void SynthConfig::validate() const {
  if (images < 3) throw ConfigError("synth: needs at least 3 images, got " + std::to_string(images));
  if (captions_per_image < 1) throw ConfigError("synth: captions_per_image must be >= 1");
  if (latent_dim < 1 || image_dim < 1 || text_dim < 1) {
    throw ConfigError("synth: all dims must be >= 1");
  }
  if (!std::isfinite(noise_sigma) || noise_sigma < 0.0) {
    throw ConfigError("synth: noise_sigma must be finite and >= 0");
  }
}

PairedDataset synth_generate(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);

  Matrix image_map(config.image_dim, config.latent_dim);
  for (Index r = 0; r < image_map.rows(); ++r) {
    for (Index c = 0; c < image_map.cols(); ++c) image_map(r, c) = rng.next_normal();
  }
  Matrix text_map(config.text_dim, config.latent_dim);
  for (Index r = 0; r < text_map.rows(); ++r) {
    for (Index c = 0; c < text_map.cols(); ++c) text_map(r, c) = rng.next_normal();
  }

  PairedDataset ds;
  ds.images.ids.reserve(config.images);
  ds.images.features.resize(config.images, config.image_dim);
  ds.captions.ids.reserve(config.images * config.captions_per_image);
  ds.captions.features.resize(config.images * config.captions_per_image, config.text_dim);
  ds.caption_image.reserve(config.images * config.captions_per_image);

  char id_buf[32];
  Vector latent(config.latent_dim);
  for (Index m = 0; m < config.images; ++m) {
    for (Index k = 0; k < config.latent_dim; ++k) latent(k) = rng.next_normal();
    std::snprintf(id_buf, sizeof(id_buf), "img%06lld", static_cast<long long>(m));
    ds.images.ids.emplace_back(id_buf);
    for (Index c = 0; c < config.image_dim; ++c) {
      ds.images.features(m, c) =
          image_map.row(c).dot(latent) + config.noise_sigma * rng.next_normal();
    }
    for (Index k = 0; k < config.captions_per_image; ++k) {
      std::snprintf(id_buf, sizeof(id_buf), "cap%06lld_%lld", static_cast<long long>(m),
                    static_cast<long long>(k));
      ds.captions.ids.emplace_back(id_buf);
      Index row = m * config.captions_per_image + k;
      for (Index c = 0; c < config.text_dim; ++c) {
        ds.captions.features(row, c) =
            text_map.row(c).dot(latent) + config.noise_sigma * rng.next_normal();
      }
      ds.caption_image.push_back(m);
    }
  }

  // 80/10/10 by image position; val and test always get at least one image.
  Index n_val = std::max<Index>(1, config.images / 10);
  Index n_test = std::max<Index>(1, config.images / 10);
  Index n_train = config.images - n_val - n_test;
  ds.image_split.assign(static_cast<std::size_t>(config.images), Split::kTrain);
  for (Index i = n_train; i < n_train + n_val; ++i) {
    ds.image_split[static_cast<std::size_t>(i)] = Split::kVal;
  }
  for (Index i = n_train + n_val; i < config.images; ++i) {
    ds.image_split[static_cast<std::size_t>(i)] = Split::kTest;
  }
  return ds;
}

DatasetPaths dataset_paths(const std::filesystem::path& dir) {
  return {dir / "images.fvt", dir / "captions.fvt", dir / "pairing.tsv", dir / "splits.tsv"};
}

void write_dataset(const std::filesystem::path& dir, const PairedDataset& ds) {
  std::filesystem::create_directories(dir);
  DatasetPaths paths = dataset_paths(dir);
  write_feature_file(paths.images, ds.images);
  write_feature_file(paths.captions, ds.captions);
  write_pairing_file(paths.pairing, ds.captions.ids, ds.images.ids, ds.caption_image);
  write_split_file(paths.split, ds.images.ids, ds.image_split);
}

PairedDataset load_dataset_dir(const std::filesystem::path& dir) {
  DatasetPaths paths = dataset_paths(dir);
  return load_dataset(paths.images, paths.captions, paths.pairing, paths.split);
}

}  // namespace cvse
