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

#include "cvse/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "cvse/error.hpp"
#include "cvse/numerics.hpp"

namespace cvse {
namespace {

void check_mapping(const MatrixRef& sim, std::span<const Index> caption_image, const char* who) {
  if (static_cast<Index>(caption_image.size()) != sim.cols()) {
    throw ConfigError(std::string(who) + ": mapping covers " +
                      std::to_string(caption_image.size()) + " captions but the matrix has " +
                      std::to_string(sim.cols()) + " columns");
  }
  for (std::size_t j = 0; j < caption_image.size(); ++j) {
    if (caption_image[j] < 0 || caption_image[j] >= sim.rows()) {
      throw ConfigError(std::string(who) + ": caption " + std::to_string(j) +
                        " maps to image " + std::to_string(caption_image[j]) +
                        " outside the gallery of " + std::to_string(sim.rows()));
    }
  }
}

// Rank of entry `own` in descending order of `scores`, ties going to the
// lower index. Rank 1 is best.
template <typename Accessor>
Index rank_of(Index own, Index n, Accessor score) {
  const double own_score = score(own);
  Index rank = 1;
  for (Index t = 0; t < n; ++t) {
    if (t == own) continue;
    if (score(t) > own_score || (score(t) == own_score && t < own)) ++rank;
  }
  return rank;
}

double percent(Index hits, Index total) {
  return 100.0 * static_cast<double>(hits) / static_cast<double>(total);
}

void append_metric(std::string& out, const char* name, double value) {
  char line[96];
  std::snprintf(line, sizeof(line), "%s=%.1f\n", name, value);
  out += line;
  std::snprintf(line, sizeof(line), "%s.raw=%.17g\n", name, value);
  out += line;
}

}  // namespace

RetrievalReport RetrievalReport::make(double i2t1, double i2t5, double i2t10, double t2i1,
                                      double t2i5, double t2i10) {
  RetrievalReport r;
  r.i2t_r1 = i2t1;
  r.i2t_r5 = i2t5;
  r.i2t_r10 = i2t10;
  r.t2i_r1 = t2i1;
  r.t2i_r5 = t2i5;
  r.t2i_r10 = t2i10;
  r.rsum = i2t1 + i2t5 + i2t10 + t2i1 + t2i5 + t2i10;
  return r;
}

double recall_i2t(const MatrixRef& sim, std::span<const Index> caption_image, int k) {
  if (k < 1) throw ConfigError("recall_i2t: k must be >= 1");
  check_mapping(sim, caption_image, "recall_i2t");
  const Index n_img = sim.rows();
  const Index n_cap = sim.cols();

  std::vector<char> has_caption(static_cast<std::size_t>(n_img), 0);
  for (Index img : caption_image) has_caption[static_cast<std::size_t>(img)] = 1;
  for (Index i = 0; i < n_img; ++i) {
    if (!has_caption[static_cast<std::size_t>(i)]) {
      throw ConfigError("recall_i2t: image " + std::to_string(i) + " has no captions");
    }
  }

  Index hits = 0;
  for (Index i = 0; i < n_img; ++i) {
    Index best_rank = n_cap + 1;
    for (Index j = 0; j < n_cap; ++j) {
      if (caption_image[static_cast<std::size_t>(j)] != i) continue;
      best_rank = std::min(best_rank, rank_of(j, n_cap, [&](Index t) { return sim(i, t); }));
    }
    if (best_rank <= k) ++hits;
  }
  return percent(hits, n_img);
}

double recall_t2i(const MatrixRef& sim, std::span<const Index> caption_image, int k) {
  if (k < 1) throw ConfigError("recall_t2i: k must be >= 1");
  check_mapping(sim, caption_image, "recall_t2i");
  const Index n_img = sim.rows();
  const Index n_cap = sim.cols();

  Index hits = 0;
  for (Index j = 0; j < n_cap; ++j) {
    const Index own = caption_image[static_cast<std::size_t>(j)];
    Index rank = rank_of(own, n_img, [&](Index t) { return sim(t, j); });
    if (rank <= k) ++hits;
  }
  return percent(hits, n_cap);
}

RetrievalReport report_from_similarity(const MatrixRef& sim,
                                       std::span<const Index> caption_image) {
  return RetrievalReport::make(
      recall_i2t(sim, caption_image, 1), recall_i2t(sim, caption_image, 5),
      recall_i2t(sim, caption_image, 10), recall_t2i(sim, caption_image, 1),
      recall_t2i(sim, caption_image, 5), recall_t2i(sim, caption_image, 10));
}

namespace {

RetrievalReport score_image_block(const EmbeddingNetwork& net, const PairedDataset& ds,
                                  const std::vector<Index>& image_rows) {
  // Gather the block's captions in caption-table order.
  std::vector<Index> position(ds.images.ids.size(), -1);
  for (std::size_t p = 0; p < image_rows.size(); ++p) {
    position[static_cast<std::size_t>(image_rows[p])] = static_cast<Index>(p);
  }
  std::vector<Index> caption_rows;
  std::vector<Index> caption_image;
  for (std::size_t c = 0; c < ds.caption_image.size(); ++c) {
    Index pos = position[static_cast<std::size_t>(ds.caption_image[c])];
    if (pos >= 0) {
      caption_rows.push_back(static_cast<Index>(c));
      caption_image.push_back(pos);
    }
  }

  Matrix image_feats(static_cast<Index>(image_rows.size()), ds.images.dim());
  for (std::size_t p = 0; p < image_rows.size(); ++p) {
    image_feats.row(static_cast<Index>(p)) = ds.images.features.row(image_rows[p]);
  }
  Matrix text_feats(static_cast<Index>(caption_rows.size()), ds.captions.dim());
  for (std::size_t p = 0; p < caption_rows.size(); ++p) {
    text_feats.row(static_cast<Index>(p)) = ds.captions.features.row(caption_rows[p]);
  }

  RowNormalized image_unit = row_l2_normalize(embed_images(net, image_feats));
  RowNormalized text_unit = row_l2_normalize(embed_texts(net, text_feats));
  Matrix sim = image_unit.unit * text_unit.unit.transpose();
  return report_from_similarity(sim, caption_image);
}

}  // namespace

RetrievalReport evaluate(const EmbeddingNetwork& net, const PairedDataset& ds, Split split) {
  std::vector<Index> image_rows = ds.split_images(split);
  if (image_rows.empty()) {
    throw DataError("evaluate: split '" + split_name(split) + "' has no images");
  }
  return score_image_block(net, ds, image_rows);
}

std::vector<RetrievalReport> evaluate_folds(const EmbeddingNetwork& net, const PairedDataset& ds,
                                            Split split, int folds, Index fold_size) {
  if (folds < 1) throw ConfigError("evaluate_folds: fold count must be >= 1");
  if (fold_size < 1) throw ConfigError("evaluate_folds: fold size must be >= 1");
  std::vector<Index> image_rows = ds.split_images(split);
  if (static_cast<std::size_t>(folds) * static_cast<std::size_t>(fold_size) > image_rows.size()) {
    throw ConfigError("evaluate_folds: " + std::to_string(folds) + " folds of " +
                      std::to_string(fold_size) + " images exceed the " +
                      std::to_string(image_rows.size()) + " images in split '" +
                      split_name(split) + "'");
  }
  std::sort(image_rows.begin(), image_rows.end(), [&](Index a, Index b) {
    return ds.images.ids[static_cast<std::size_t>(a)] < ds.images.ids[static_cast<std::size_t>(b)];
  });

  std::vector<RetrievalReport> reports;
  reports.reserve(static_cast<std::size_t>(folds));
  for (int f = 0; f < folds; ++f) {
    std::vector<Index> block(
        image_rows.begin() + static_cast<std::ptrdiff_t>(f) * fold_size,
        image_rows.begin() + static_cast<std::ptrdiff_t>(f + 1) * fold_size);
    reports.push_back(score_image_block(net, ds, block));
  }
  return reports;
}

RetrievalReport fold_average(std::span<const RetrievalReport> reports) {
  if (reports.empty()) throw ConfigError("fold_average: no reports");
  double n = static_cast<double>(reports.size());
  double i2t1 = 0, i2t5 = 0, i2t10 = 0, t2i1 = 0, t2i5 = 0, t2i10 = 0;
  for (const RetrievalReport& r : reports) {
    i2t1 += r.i2t_r1;
    i2t5 += r.i2t_r5;
    i2t10 += r.i2t_r10;
    t2i1 += r.t2i_r1;
    t2i5 += r.t2i_r5;
    t2i10 += r.t2i_r10;
  }
  return RetrievalReport::make(i2t1 / n, i2t5 / n, i2t10 / n, t2i1 / n, t2i5 / n, t2i10 / n);
}

RunAggregate aggregate_runs(std::span<const RetrievalReport> runs) {
  if (runs.empty()) throw ConfigError("aggregate_runs: no runs");
  RunAggregate agg;
  agg.mean = fold_average(runs);

  const double n = static_cast<double>(runs.size());
  auto pop_std = [&](auto metric) {
    double mu = 0;
    for (const RetrievalReport& r : runs) mu += metric(r);
    mu /= n;
    double acc = 0;
    for (const RetrievalReport& r : runs) {
      double d = metric(r) - mu;
      acc += d * d;
    }
    return std::sqrt(acc / n);
  };
  agg.stddev.i2t_r1 = pop_std([](const RetrievalReport& r) { return r.i2t_r1; });
  agg.stddev.i2t_r5 = pop_std([](const RetrievalReport& r) { return r.i2t_r5; });
  agg.stddev.i2t_r10 = pop_std([](const RetrievalReport& r) { return r.i2t_r10; });
  agg.stddev.t2i_r1 = pop_std([](const RetrievalReport& r) { return r.t2i_r1; });
  agg.stddev.t2i_r5 = pop_std([](const RetrievalReport& r) { return r.t2i_r5; });
  agg.stddev.t2i_r10 = pop_std([](const RetrievalReport& r) { return r.t2i_r10; });
  agg.stddev.rsum = pop_std([](const RetrievalReport& r) { return r.rsum; });

  // Median by rsum order statistic; equal rsums keep the earliest run.
  std::vector<std::size_t> order(runs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return runs[a].rsum < runs[b].rsum; });
  agg.median_run = order[(order.size() - 1) / 2];
  return agg;
}

std::string format_report_table(std::span<const RetrievalReport> reports,
                                std::span<const std::string> labels) {
  if (!labels.empty() && labels.size() != reports.size()) {
    throw ConfigError("format_report_table: " + std::to_string(labels.size()) + " labels for " +
                      std::to_string(reports.size()) + " reports");
  }
  std::size_t width = 8;
  for (const std::string& label : labels) width = std::max(width, label.size() + 2);

  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-*s %28s   %28s   %7s\n", static_cast<int>(width), "",
                "image-to-text", "text-to-image", "");
  out += line;
  std::snprintf(line, sizeof(line), "%-*s %8s %8s %8s   %8s %8s %8s   %7s\n",
                static_cast<int>(width), "", "R@1", "R@5", "R@10", "R@1", "R@5", "R@10", "R@sum");
  out += line;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const RetrievalReport& r = reports[i];
    const char* label = labels.empty() ? "" : labels[i].c_str();
    std::snprintf(line, sizeof(line),
                  "%-*s %8.1f %8.1f %8.1f   %8.1f %8.1f %8.1f   %7.1f\n",
                  static_cast<int>(width), label, r.i2t_r1, r.i2t_r5, r.i2t_r10, r.t2i_r1,
                  r.t2i_r5, r.t2i_r10, r.rsum);
    out += line;
  }
  return out;
}

std::string format_report_record(const RetrievalReport& report) {
  std::string out;
  append_metric(out, "i2t_r1", report.i2t_r1);
  append_metric(out, "i2t_r5", report.i2t_r5);
  append_metric(out, "i2t_r10", report.i2t_r10);
  append_metric(out, "t2i_r1", report.t2i_r1);
  append_metric(out, "t2i_r5", report.t2i_r5);
  append_metric(out, "t2i_r10", report.t2i_r10);
  append_metric(out, "rsum", report.rsum);
  return out;
}

}  // namespace cvse
