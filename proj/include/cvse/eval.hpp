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

#ifndef CVSE_EVAL_HPP_
#define CVSE_EVAL_HPP_

#include <span>
#include <string>
#include <vector>

#include "cvse/data.hpp"
#include "cvse/model.hpp"
#include "cvse/types.hpp"

namespace cvse {

// Retrieval recalls in percent. rsum is always the sum of the six recalls.
struct RetrievalReport {
  double i2t_r1 = 0, i2t_r5 = 0, i2t_r10 = 0;
  double t2i_r1 = 0, t2i_r5 = 0, t2i_r10 = 0;
  double rsum = 0;

  static RetrievalReport make(double i2t1, double i2t5, double i2t10, double t2i1, double t2i5,
                              double t2i10);
};

// Image-to-text recall@k over an images x captions similarity matrix:
// a query image scores if any of its captions ranks in the top k. Ranking is
// by similarity descending, ties broken toward the lower column index.
double recall_i2t(const MatrixRef& sim, std::span<const Index> caption_image, int k);

// Caption-to-image recall@k; ties break toward the lower row index.
double recall_t2i(const MatrixRef& sim, std::span<const Index> caption_image, int k);

RetrievalReport report_from_similarity(const MatrixRef& sim,
                                       std::span<const Index> caption_image);

// Embeds one split of the dataset and scores retrieval over it.
RetrievalReport evaluate(const EmbeddingNetwork& net, const PairedDataset& ds, Split split);

// Splits the gallery into consecutive fixed-size blocks of images (id
// order) and scores each block separately.
std::vector<RetrievalReport> evaluate_folds(const EmbeddingNetwork& net, const PairedDataset& ds,
                                            Split split, int folds, Index fold_size);

// Per-metric mean across folds; rsum is recomputed from the averaged
// recalls (which equals the average of the fold rsums).
RetrievalReport fold_average(std::span<const RetrievalReport> reports);

// Per-metric spread statistics; rsum here is the spread of the run rsums,
// not a sum of columns.
struct ReportStats {
  double i2t_r1 = 0, i2t_r5 = 0, i2t_r10 = 0;
  double t2i_r1 = 0, t2i_r5 = 0, t2i_r10 = 0;
  double rsum = 0;
};

struct RunAggregate {
  RetrievalReport mean;
  ReportStats stddev;       // population standard deviation
  std::size_t median_run;   // run whose rsum is the middle order statistic
};

RunAggregate aggregate_runs(std::span<const RetrievalReport> runs);

// Fixed-width table, one row per report.
std::string format_report_table(std::span<const RetrievalReport> reports,
                                std::span<const std::string> labels);

// name=value record: each metric rendered at one decimal plus a .raw line
// with full precision.
std::string format_report_record(const RetrievalReport& report);

}  // namespace cvse

#endif  // CVSE_EVAL_HPP_
