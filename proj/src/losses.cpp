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

#include "cvse/losses.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "cvse/error.hpp"
#include "cvse/numerics.hpp"

namespace cvse {
namespace {

std::string shape_str(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

void check_square(const MatrixRef& sim, const char* who) {
  if (sim.rows() != sim.cols() || sim.rows() < 1) {
    throw ConfigError(std::string(who) + ": similarity matrix must be square and non-empty, got " +
                      shape_str(sim.rows(), sim.cols()));
  }
}

void check_groups(std::span<const Index> groups, Index n, const char* who) {
  if (!groups.empty() && static_cast<Index>(groups.size()) != n) {
    throw ConfigError(std::string(who) + ": group tags cover " + std::to_string(groups.size()) +
                      " pairs but the batch has " + std::to_string(n));
  }
}

// Pairs sharing an image never serve as negatives for each other.
inline bool masked(std::span<const Index> groups, Index i, Index j) {
  return !groups.empty() && i != j && groups[i] == groups[j];
}

// Log-sum-exp with the running max subtracted before exponentiation.
struct LogSumExp {
  void add(double term) { terms.push_back(term); }
  double finish() {
    double m = -std::numeric_limits<double>::infinity();
    for (double t : terms) m = std::max(m, t);
    double s = 0.0;
    for (double t : terms) s += std::exp(t - m);
    lse = m + std::log(s);
    return lse;
  }
  double prob(std::size_t idx) const { return std::exp(terms[idx] - lse); }

  std::vector<double> terms;
  double lse = 0.0;
};

Matrix unnormalize_rows(const Matrix& unit, const Vector& norms, const Matrix& d_unit) {
  Matrix d_raw(d_unit.rows(), d_unit.cols());
  for (Index i = 0; i < d_unit.rows(); ++i) {
    double along = unit.row(i).dot(d_unit.row(i));
    d_raw.row(i) = (d_unit.row(i) - along * unit.row(i)) / norms(i);
  }
  return d_raw;
}

LossOutput output_from_sim_grad(const SimilarityMatrix& sim, const SimilarityGrad& core) {
  LossOutput out;
  out.value = core.value;
  similarity_backward(sim, core.d_sim, &out.d_image_embed, &out.d_text_embed);
  return out;
}

}  // namespace

std::string loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::kSh: return "sh";
    case LossKind::kMh: return "mh";
    case LossKind::kCsn: return "csn";
    case LossKind::kCmnTilde: return "cmn_tilde";
    case LossKind::kCmn: return "cmn";
    case LossKind::kMvn: return "mvn";
  }
  throw ConfigError("loss_kind_name: unknown kind");
}

LossKind loss_kind_from_name(const std::string& name) {
  if (name == "sh") return LossKind::kSh;
  if (name == "mh") return LossKind::kMh;
  if (name == "csn") return LossKind::kCsn;
  if (name == "cmn_tilde" || name == "cmn-tilde") return LossKind::kCmnTilde;
  if (name == "cmn") return LossKind::kCmn;
  if (name == "mvn") return LossKind::kMvn;
  throw ConfigError("unknown loss kind '" + name +
                    "' (expected sh, mh, csn, cmn_tilde, cmn, or mvn)");
}

void LossConfig::validate() const {
  if (!std::isfinite(margin) || margin < 0.0) {
    throw ConfigError("loss config: margin must be finite and >= 0, got " +
                      std::to_string(margin));
  }
  if (!std::isfinite(temperature) || temperature <= 0.0) {
    throw ConfigError("loss config: temperature must be finite and > 0, got " +
                      std::to_string(temperature));
  }
}

SimilarityMatrix similarity_matrix(const MatrixRef& image_embed, const MatrixRef& text_embed) {
  if (image_embed.rows() != text_embed.rows()) {
    throw ConfigError("similarity_matrix: image batch has " + std::to_string(image_embed.rows()) +
                      " rows but text batch has " + std::to_string(text_embed.rows()));
  }
  if (image_embed.cols() != text_embed.cols()) {
    throw ConfigError("similarity_matrix: image embedding dim " +
                      std::to_string(image_embed.cols()) + " does not match text dim " +
                      std::to_string(text_embed.cols()));
  }
  if (image_embed.rows() < 1) throw ConfigError("similarity_matrix: empty batch");

  SimilarityMatrix sim;
  sim.image_norms = image_embed.rowwise().norm();
  sim.text_norms = text_embed.rowwise().norm();
  for (Index i = 0; i < image_embed.rows(); ++i) {
    if (!(sim.image_norms(i) > kNormEpsilon)) {
      throw NumericError("similarity_matrix: image row " + std::to_string(i) +
                         " has near-zero norm");
    }
    if (!(sim.text_norms(i) > kNormEpsilon)) {
      throw NumericError("similarity_matrix: text row " + std::to_string(i) +
                         " has near-zero norm");
    }
  }
  sim.image_unit = sim.image_norms.cwiseInverse().asDiagonal() * image_embed;
  sim.text_unit = sim.text_norms.cwiseInverse().asDiagonal() * text_embed;
  sim.values = sim.image_unit * sim.text_unit.transpose();
  return sim;
}

void similarity_backward(const SimilarityMatrix& sim, const MatrixRef& d_values,
                         Matrix* d_image_embed, Matrix* d_text_embed) {
  if (d_values.rows() != sim.values.rows() || d_values.cols() != sim.values.cols()) {
    throw ConfigError("similarity_backward: gradient shape " +
                      shape_str(d_values.rows(), d_values.cols()) + " does not match values " +
                      shape_str(sim.values.rows(), sim.values.cols()));
  }
  Matrix d_unit_image = d_values * sim.text_unit;
  Matrix d_unit_text = d_values.transpose() * sim.image_unit;
  if (d_image_embed) *d_image_embed = unnormalize_rows(sim.image_unit, sim.image_norms, d_unit_image);
  if (d_text_embed) *d_text_embed = unnormalize_rows(sim.text_unit, sim.text_norms, d_unit_text);
}

HardNegatives hardest_negatives(const MatrixRef& sim, std::span<const Index> groups) {
  check_square(sim, "hardest_negatives");
  check_groups(groups, sim.rows(), "hardest_negatives");
  const Index n = sim.rows();
  if (n < 2) throw ConfigError("hardest_negatives: need at least 2 pairs, got 1");

  HardNegatives hard;
  hard.hardest_text.resize(static_cast<std::size_t>(n));
  hard.hardest_image.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    Index best_col = -1, best_row = -1;
    for (Index k = 0; k < n; ++k) {
      if (k == i || masked(groups, i, k)) continue;
      if (best_col < 0 || sim(i, k) > sim(i, best_col)) best_col = k;
      if (best_row < 0 || sim(k, i) > sim(best_row, i)) best_row = k;
    }
    if (best_col < 0) {
      throw DataError("hardest_negatives: pair " + std::to_string(i) +
                      " has no admissible negative in the batch");
    }
    hard.hardest_text[static_cast<std::size_t>(i)] = best_col;
    hard.hardest_image[static_cast<std::size_t>(i)] = best_row;
  }
  return hard;
}

HardNegatives hardest_negatives(const SimilarityMatrix& sim) {
  return hardest_negatives(MatrixRef(sim.values));
}

SimilarityGrad sum_hinge_core(const MatrixRef& sim, double margin, std::span<const Index> groups) {
  check_square(sim, "sum_hinge_core");
  check_groups(groups, sim.rows(), "sum_hinge_core");
  const Index n = sim.rows();
  if (n < 2) throw ConfigError("sum_hinge_core: need at least 2 pairs, got 1");
  SimilarityGrad out;
  out.d_sim = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    const double pos = sim(i, i);
    for (Index k = 0; k < n; ++k) {
      if (k == i || masked(groups, i, k)) continue;
      const double caption_negative = margin + sim(i, k) - pos;
      if (caption_negative > 0.0) {
        out.value += caption_negative;
        out.d_sim(i, k) += 1.0;
        out.d_sim(i, i) -= 1.0;
      }
      const double image_negative = margin + sim(k, i) - pos;
      if (image_negative > 0.0) {
        out.value += image_negative;
        out.d_sim(k, i) += 1.0;
        out.d_sim(i, i) -= 1.0;
      }
    }
  }
  out.value /= static_cast<double>(n);
  out.d_sim /= static_cast<double>(n);
  return out;
}

SimilarityGrad max_hinge_core(const MatrixRef& sim, double margin, std::span<const Index> groups) {
  check_square(sim, "max_hinge_core");
  const Index n = sim.rows();
  HardNegatives hard = hardest_negatives(sim, groups);
  SimilarityGrad out;
  out.d_sim = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    const double pos = sim(i, i);
    const Index c = hard.hardest_text[static_cast<std::size_t>(i)];
    const Index r = hard.hardest_image[static_cast<std::size_t>(i)];
    const double caption_bracket = margin + sim(i, c) - pos;
    if (caption_bracket > 0.0) {
      out.value += caption_bracket;
      out.d_sim(i, c) += 1.0;
      out.d_sim(i, i) -= 1.0;
    }
    const double image_bracket = margin + sim(r, i) - pos;
    if (image_bracket > 0.0) {
      out.value += image_bracket;
      out.d_sim(r, i) += 1.0;
      out.d_sim(i, i) -= 1.0;
    }
  }
  out.value /= static_cast<double>(n);
  out.d_sim /= static_cast<double>(n);
  return out;
}

SimilarityGrad nce_sum_core(const MatrixRef& sim, double temperature,
                            std::span<const Index> groups) {
  check_square(sim, "nce_sum_core");
  check_groups(groups, sim.rows(), "nce_sum_core");
  const Index n = sim.rows();
  const double inv_tau = 1.0 / temperature;
  SimilarityGrad out;
  out.d_sim = Matrix::Zero(n, n);

  // Image anchors walk row i; caption anchors walk column i. The positive
  // term stays in every denominator, masked negatives drop out.
  for (Index i = 0; i < n; ++i) {
    LogSumExp row_lse, col_lse;
    std::vector<Index> row_ids, col_ids;
    for (Index k = 0; k < n; ++k) {
      if (k != i && masked(groups, i, k)) continue;
      row_lse.add(sim(i, k) * inv_tau);
      row_ids.push_back(k);
      col_lse.add(sim(k, i) * inv_tau);
      col_ids.push_back(k);
    }
    out.value += row_lse.finish() - sim(i, i) * inv_tau;
    out.value += col_lse.finish() - sim(i, i) * inv_tau;
    for (std::size_t t = 0; t < row_ids.size(); ++t) {
      out.d_sim(i, row_ids[t]) += row_lse.prob(t) * inv_tau;
      out.d_sim(col_ids[t], i) += col_lse.prob(t) * inv_tau;
    }
    out.d_sim(i, i) -= 2.0 * inv_tau;
  }
  out.value /= static_cast<double>(n);
  out.d_sim /= static_cast<double>(n);
  return out;
}

SimilarityGrad nce_max_unclamped_core(const MatrixRef& sim, double temperature,
                                      std::span<const Index> groups) {
  check_square(sim, "nce_max_unclamped_core");
  const Index n = sim.rows();
  HardNegatives hard = hardest_negatives(sim, groups);
  const double inv_tau = 1.0 / temperature;
  SimilarityGrad out;
  out.d_sim = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    const Index c = hard.hardest_text[static_cast<std::size_t>(i)];
    const Index r = hard.hardest_image[static_cast<std::size_t>(i)];
    out.value += (sim(i, c) - sim(i, i)) * inv_tau;
    out.value += (sim(r, i) - sim(i, i)) * inv_tau;
    out.d_sim(i, c) += inv_tau;
    out.d_sim(r, i) += inv_tau;
    out.d_sim(i, i) -= 2.0 * inv_tau;
  }
  out.value /= static_cast<double>(n);
  out.d_sim /= static_cast<double>(n);
  return out;
}

SimilarityGrad nce_max_clamped_core(const MatrixRef& sim, double margin, double temperature,
                                    std::span<const Index> groups) {
  check_square(sim, "nce_max_clamped_core");
  const Index n = sim.rows();
  HardNegatives hard = hardest_negatives(sim, groups);
  const double inv_tau = 1.0 / temperature;
  SimilarityGrad out;
  out.d_sim = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    const double pos = sim(i, i);
    const Index c = hard.hardest_text[static_cast<std::size_t>(i)];
    const Index r = hard.hardest_image[static_cast<std::size_t>(i)];
    const double caption_bracket = margin + sim(i, c) - pos;
    if (caption_bracket > 0.0) {
      out.value += caption_bracket * inv_tau;
      out.d_sim(i, c) += inv_tau;
      out.d_sim(i, i) -= inv_tau;
    }
    const double image_bracket = margin + sim(r, i) - pos;
    if (image_bracket > 0.0) {
      out.value += image_bracket * inv_tau;
      out.d_sim(r, i) += inv_tau;
      out.d_sim(i, i) -= inv_tau;
    }
  }
  out.value /= static_cast<double>(n);
  out.d_sim /= static_cast<double>(n);
  return out;
}

MvnGrad mvn_core(const MatrixRef& cross, const MatrixRef& image_within,
                 const MatrixRef& text_within, double temperature,
                 std::span<const Index> groups) {
  check_square(cross, "mvn_core");
  check_groups(groups, cross.rows(), "mvn_core");
  const Index n = cross.rows();
  if (image_within.rows() != n || image_within.cols() != n || text_within.rows() != n ||
      text_within.cols() != n) {
    throw ConfigError("mvn_core: within-modality matrices must match the cross matrix shape " +
                      shape_str(n, n));
  }
  const double inv_tau = 1.0 / temperature;
  MvnGrad out;
  out.d_cross = Matrix::Zero(n, n);
  out.d_image_within = Matrix::Zero(n, n);
  out.d_text_within = Matrix::Zero(n, n);

  for (Index i = 0; i < n; ++i) {
    // Image anchor: its caption against all captions plus all other images.
    {
      LogSumExp lse;
      std::vector<std::pair<bool, Index>> ids;  // (is_cross, index)
      for (Index k = 0; k < n; ++k) {
        if (k != i && masked(groups, i, k)) continue;
        lse.add(cross(i, k) * inv_tau);
        ids.emplace_back(true, k);
      }
      for (Index j = 0; j < n; ++j) {
        if (j == i || masked(groups, i, j)) continue;
        lse.add(image_within(i, j) * inv_tau);
        ids.emplace_back(false, j);
      }
      out.value += lse.finish() - cross(i, i) * inv_tau;
      for (std::size_t t = 0; t < ids.size(); ++t) {
        const double g = lse.prob(t) * inv_tau;
        if (ids[t].first) {
          out.d_cross(i, ids[t].second) += g;
        } else {
          out.d_image_within(i, ids[t].second) += g;
        }
      }
      out.d_cross(i, i) -= inv_tau;
    }
    // Caption anchor: its image against all images plus all other captions.
    {
      LogSumExp lse;
      std::vector<std::pair<bool, Index>> ids;
      for (Index k = 0; k < n; ++k) {
        if (k != i && masked(groups, i, k)) continue;
        lse.add(cross(k, i) * inv_tau);
        ids.emplace_back(true, k);
      }
      for (Index j = 0; j < n; ++j) {
        if (j == i || masked(groups, i, j)) continue;
        lse.add(text_within(i, j) * inv_tau);
        ids.emplace_back(false, j);
      }
      out.value += lse.finish() - cross(i, i) * inv_tau;
      for (std::size_t t = 0; t < ids.size(); ++t) {
        const double g = lse.prob(t) * inv_tau;
        if (ids[t].first) {
          out.d_cross(ids[t].second, i) += g;
        } else {
          out.d_text_within(i, ids[t].second) += g;
        }
      }
      out.d_cross(i, i) -= inv_tau;
    }
  }
  const double scale = 1.0 / static_cast<double>(n);
  out.value *= scale;
  out.d_cross *= scale;
  out.d_image_within *= scale;
  out.d_text_within *= scale;
  return out;
}

LossOutput loss_sh(const SimilarityMatrix& sim, const LossConfig& cfg) {
  cfg.validate();
  return output_from_sim_grad(sim, sum_hinge_core(sim.values, cfg.margin));
}

LossOutput loss_mh(const SimilarityMatrix& sim, const LossConfig& cfg) {
  cfg.validate();
  return output_from_sim_grad(sim, max_hinge_core(sim.values, cfg.margin));
}

LossOutput loss_csn(const SimilarityMatrix& sim, const LossConfig& cfg) {
  cfg.validate();
  return output_from_sim_grad(sim, nce_sum_core(sim.values, cfg.temperature));
}

LossOutput loss_cmn_tilde(const SimilarityMatrix& sim, const LossConfig& cfg) {
  cfg.validate();
  return output_from_sim_grad(sim, nce_max_unclamped_core(sim.values, cfg.temperature));
}

LossOutput loss_cmn(const SimilarityMatrix& sim, const LossConfig& cfg) {
  cfg.validate();
  return output_from_sim_grad(sim, nce_max_clamped_core(sim.values, cfg.margin, cfg.temperature));
}

namespace {

LossOutput loss_mvn_impl(const MatrixRef& image_embed, const MatrixRef& text_embed,
                         const LossConfig& cfg, std::span<const Index> groups) {
  cfg.validate();
  SimilarityMatrix sim = similarity_matrix(image_embed, text_embed);
  Matrix image_within = sim.image_unit * sim.image_unit.transpose();
  Matrix text_within = sim.text_unit * sim.text_unit.transpose();
  MvnGrad core = mvn_core(sim.values, image_within, text_within, cfg.temperature, groups);

  Matrix d_unit_image = core.d_cross * sim.text_unit +
                        (core.d_image_within + core.d_image_within.transpose()) * sim.image_unit;
  Matrix d_unit_text = core.d_cross.transpose() * sim.image_unit +
                       (core.d_text_within + core.d_text_within.transpose()) * sim.text_unit;
  LossOutput out;
  out.value = core.value;
  out.d_image_embed = unnormalize_rows(sim.image_unit, sim.image_norms, d_unit_image);
  out.d_text_embed = unnormalize_rows(sim.text_unit, sim.text_norms, d_unit_text);
  return out;
}

SimilarityGrad core_for(const SimilarityMatrix& sim, const LossConfig& cfg,
                        std::span<const Index> groups) {
  switch (cfg.kind) {
    case LossKind::kSh: return sum_hinge_core(sim.values, cfg.margin, groups);
    case LossKind::kMh: return max_hinge_core(sim.values, cfg.margin, groups);
    case LossKind::kCsn: return nce_sum_core(sim.values, cfg.temperature, groups);
    case LossKind::kCmnTilde: return nce_max_unclamped_core(sim.values, cfg.temperature, groups);
    case LossKind::kCmn:
      return nce_max_clamped_core(sim.values, cfg.margin, cfg.temperature, groups);
    case LossKind::kMvn: break;
  }
  throw ConfigError("compute_loss: unhandled loss kind");
}

}  // namespace

LossOutput loss_mvn(const MatrixRef& image_embed, const MatrixRef& text_embed,
                    const LossConfig& cfg) {
  return loss_mvn_impl(image_embed, text_embed, cfg, {});
}

LossOutput compute_loss(const MatrixRef& image_embed, const MatrixRef& text_embed,
                        const LossConfig& cfg, std::span<const Index> groups) {
  cfg.validate();
  if (cfg.kind == LossKind::kMvn) return loss_mvn_impl(image_embed, text_embed, cfg, groups);
  SimilarityMatrix sim = similarity_matrix(image_embed, text_embed);
  return output_from_sim_grad(sim, core_for(sim, cfg, groups));
}

double compute_loss_value(const MatrixRef& image_embed, const MatrixRef& text_embed,
                          const LossConfig& cfg, std::span<const Index> groups) {
  cfg.validate();
  SimilarityMatrix sim = similarity_matrix(image_embed, text_embed);
  if (cfg.kind == LossKind::kMvn) {
    Matrix image_within = sim.image_unit * sim.image_unit.transpose();
    Matrix text_within = sim.text_unit * sim.text_unit.transpose();
    return mvn_core(sim.values, image_within, text_within, cfg.temperature, groups).value;
  }
  return core_for(sim, cfg, groups).value;
}

}  // namespace cvse
