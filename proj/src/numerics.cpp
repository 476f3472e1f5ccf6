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

#include "cvse/numerics.hpp"

#include <cmath>
#include <string>

#include "cvse/error.hpp"

namespace cvse {
namespace {

std::string shape_str(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace

Matrix matmul(const MatrixRef& a, const MatrixRef& b) {
  if (a.cols() != b.rows()) {
    throw ConfigError("matmul: incompatible shapes " + shape_str(a.rows(), a.cols()) + " and " +
                      shape_str(b.rows(), b.cols()));
  }
  return a * b;
}

RowNormalized row_l2_normalize(const MatrixRef& a) {
  RowNormalized out;
  out.norms = a.rowwise().norm();
  for (Index i = 0; i < a.rows(); ++i) {
    if (!(out.norms(i) > kNormEpsilon)) {
      throw NumericError("row_l2_normalize: row " + std::to_string(i) +
                         " has near-zero norm " + std::to_string(out.norms(i)));
    }
  }
  out.unit = out.norms.cwiseInverse().asDiagonal() * a;
  return out;
}

Matrix row_l2_normalize_backward(const RowNormalized& normalized, const MatrixRef& d_unit) {
  if (d_unit.rows() != normalized.unit.rows() || d_unit.cols() != normalized.unit.cols()) {
    throw ConfigError("row_l2_normalize_backward: gradient shape " +
                      shape_str(d_unit.rows(), d_unit.cols()) + " does not match value shape " +
                      shape_str(normalized.unit.rows(), normalized.unit.cols()));
  }
  // d(raw row) = (g - (g . u) u) / norm for unit row u and upstream g.
  Matrix d_raw(d_unit.rows(), d_unit.cols());
  for (Index i = 0; i < d_unit.rows(); ++i) {
    double along = normalized.unit.row(i).dot(d_unit.row(i));
    d_raw.row(i) = (d_unit.row(i) - along * normalized.unit.row(i)) / normalized.norms(i);
  }
  return d_raw;
}

Index argmax_excluding(const VectorRef& values, Index excluded) {
  if (values.size() < 2) {
    throw ConfigError("argmax_excluding: need at least 2 entries, got " +
                      std::to_string(values.size()));
  }
  if (excluded < 0 || excluded >= values.size()) {
    throw ConfigError("argmax_excluding: excluded index " + std::to_string(excluded) +
                      " out of range for size " + std::to_string(values.size()));
  }
  Index best = -1;
  for (Index k = 0; k < values.size(); ++k) {
    if (k == excluded) continue;
    if (best < 0 || values(k) > values(best)) best = k;
  }
  return best;
}

Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& x, double h) {
  if (!(h > 0)) throw ConfigError("finite_diff_grad: step must be positive");
  Matrix grad(x.rows(), x.cols());
  Matrix probe = x;
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) {
      double saved = probe(i, j);
      probe(i, j) = saved + h;
      double up = f(probe);
      probe(i, j) = saved - h;
      double down = f(probe);
      probe(i, j) = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("finite_diff_grad: non-finite evaluation at entry (" +
                           std::to_string(i) + "," + std::to_string(j) + ")");
      }
      grad(i, j) = (up - down) / (2.0 * h);
    }
  }
  return grad;
}

}  // namespace cvse
