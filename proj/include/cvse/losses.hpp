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

#ifndef CVSE_LOSSES_HPP_
#define CVSE_LOSSES_HPP_

#include <span>
#include <string>
#include <vector>

#include "cvse/types.hpp"

namespace cvse {

// Batch losses over an NxN image/caption cosine-similarity matrix.
//   kSh       sum of hinges over all negatives
//   kMh       max of hinges (hardest negative only)
//   kCsn      temperature-scaled NCE over all negatives
//   kCmnTilde unclamped hardest-negative NCE (can go negative)
//   kCmn      margin-clamped hardest-negative NCE
//   kMvn      NCE with negatives drawn from both modalities
enum class LossKind { kSh, kMh, kCsn, kCmnTilde, kCmn, kMvn };

std::string loss_kind_name(LossKind kind);
LossKind loss_kind_from_name(const std::string& name);

struct LossConfig {
  LossKind kind = LossKind::kCmn;
  double margin = 0.2;       // used by kSh, kMh, kCmn
  double temperature = 0.1;  // used by kCsn, kCmnTilde, kCmn, kMvn

  void validate() const;
};

// Cosine similarities S(i,j) between image row i and caption row j, with the
// unit rows and norms cached for gradient propagation.
struct SimilarityMatrix {
  Matrix values;
  Matrix image_unit, text_unit;
  Vector image_norms, text_norms;

  Index size() const { return values.rows(); }
};

SimilarityMatrix similarity_matrix(const MatrixRef& image_embed, const MatrixRef& text_embed);

// Maps d(loss)/d(values) back to gradients on the raw embeddings.
void similarity_backward(const SimilarityMatrix& sim, const MatrixRef& d_values,
                         Matrix* d_image_embed, Matrix* d_text_embed);

// Hardest in-batch negatives under a fixed similarity matrix; ties resolve
// to the lowest index.
struct HardNegatives {
  std::vector<Index> hardest_text;   // per image row: most similar non-own caption
  std::vector<Index> hardest_image;  // per caption column: most similar non-own image
};

HardNegatives hardest_negatives(const MatrixRef& sim, std::span<const Index> groups = {});
HardNegatives hardest_negatives(const SimilarityMatrix& sim);

// Loss value plus the gradient of d(loss)/d(S) for an explicit similarity
// matrix. `groups` optionally tags each pair with its image identity; pairs
// sharing a group are never used as negatives for each other.
struct SimilarityGrad {
  double value = 0.0;
  Matrix d_sim;
};

SimilarityGrad sum_hinge_core(const MatrixRef& sim, double margin,
                              std::span<const Index> groups = {});
SimilarityGrad max_hinge_core(const MatrixRef& sim, double margin,
                              std::span<const Index> groups = {});
SimilarityGrad nce_sum_core(const MatrixRef& sim, double temperature,
                            std::span<const Index> groups = {});
SimilarityGrad nce_max_unclamped_core(const MatrixRef& sim, double temperature,
                                      std::span<const Index> groups = {});
SimilarityGrad nce_max_clamped_core(const MatrixRef& sim, double margin, double temperature,
                                    std::span<const Index> groups = {});

// Multi-modal NCE also needs within-modality similarities; gradients come
// back for all three matrices (within-modality diagonals stay zero).
struct MvnGrad {
  double value = 0.0;
  Matrix d_cross, d_image_within, d_text_within;
};

MvnGrad mvn_core(const MatrixRef& cross, const MatrixRef& image_within,
                 const MatrixRef& text_within, double temperature,
                 std::span<const Index> groups = {});

// Loss value plus gradients with respect to the raw (pre-normalization)
// embedding rows.
struct LossOutput {
  double value = 0.0;
  Matrix d_image_embed, d_text_embed;
};

LossOutput loss_sh(const SimilarityMatrix& sim, const LossConfig& cfg);
LossOutput loss_mh(const SimilarityMatrix& sim, const LossConfig& cfg);
LossOutput loss_csn(const SimilarityMatrix& sim, const LossConfig& cfg);
LossOutput loss_cmn_tilde(const SimilarityMatrix& sim, const LossConfig& cfg);
LossOutput loss_cmn(const SimilarityMatrix& sim, const LossConfig& cfg);
LossOutput loss_mvn(const MatrixRef& image_embed, const MatrixRef& text_embed,
                    const LossConfig& cfg);

// Dispatch on cfg.kind, starting from raw embeddings.
LossOutput compute_loss(const MatrixRef& image_embed, const MatrixRef& text_embed,
                        const LossConfig& cfg, std::span<const Index> groups = {});

// Value-only variant (no gradients), for probes and finite differences.
double compute_loss_value(const MatrixRef& image_embed, const MatrixRef& text_embed,
                          const LossConfig& cfg, std::span<const Index> groups = {});

}  // namespace cvse

#endif  // CVSE_LOSSES_HPP_
