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

#ifndef CVSE_NUMERICS_HPP_
#define CVSE_NUMERICS_HPP_

#include <functional>

#include "cvse/types.hpp"

namespace cvse {

// Rows with L2 norm at or below this are rejected as degenerate.
inline constexpr double kNormEpsilon = 1e-12;

// Shape-checked product a * b; rejects mismatched inner dims naming both
// shapes.
Matrix matmul(const MatrixRef& a, const MatrixRef& b);

struct RowNormalized {
  Matrix unit;   // rows scaled to unit L2 norm
  Vector norms;  // original row norms
};

// Normalizes every row to unit length; a row at or below kNormEpsilon is
// rejected naming its index.
RowNormalized row_l2_normalize(const MatrixRef& a);

// Gradient of the row normalization: given d(loss)/d(unit rows), returns
// d(loss)/d(raw rows).
Matrix row_l2_normalize_backward(const RowNormalized& normalized, const MatrixRef& d_unit);

// Index of the largest entry with one index excluded; ties resolve to the
// lowest index. Needs at least two entries.
Index argmax_excluding(const VectorRef& values, Index excluded);

// Central-difference gradient of a scalar function, step h per coordinate.
Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& x,
                        double h = 1e-5);

}  // namespace cvse

#endif  // CVSE_NUMERICS_HPP_
