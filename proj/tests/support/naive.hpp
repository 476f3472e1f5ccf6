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
//
// Brute-force reference implementations: scalar loops, direct exp/log, and
// sort-based ranking. Deliberately slow and independent of the library's
// vectorized code paths.

#ifndef CVSE_TESTS_SUPPORT_NAIVE_HPP_
#define CVSE_TESTS_SUPPORT_NAIVE_HPP_

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cvse/rng.hpp"
#include "cvse/types.hpp"

namespace cvse::naive {

inline double cosine(const Matrix& a, Index i, const Matrix& b, Index j) {
  double dot = 0, na = 0, nb = 0;
  for (Index k = 0; k < a.cols(); ++k) {
    dot += a(i, k) * b(j, k);
    na += a(i, k) * a(i, k);
    nb += b(j, k) * b(j, k);
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

inline Matrix similarity(const Matrix& zi, const Matrix& zc) {
  Matrix s(zi.rows(), zc.rows());
  for (Index i = 0; i < zi.rows(); ++i) {
    for (Index j = 0; j < zc.rows(); ++j) s(i, j) = cosine(zi, i, zc, j);
  }
  return s;
}

inline Index hardest_caption(const Matrix& s, Index i) {
  Index best = -1;
  for (Index k = 0; k < s.cols(); ++k) {
    if (k == i) continue;
    if (best < 0 || s(i, k) > s(i, best)) best = k;
  }
  return best;
}

inline Index hardest_image(const Matrix& s, Index j) {
  Index best = -1;
  for (Index k = 0; k < s.rows(); ++k) {
    if (k == j) continue;
    if (best < 0 || s(k, j) > s(best, j)) best = k;
  }
  return best;
}

inline double positive_part(double x) { return x > 0.0 ? x : 0.0; }

inline double sum_hinge(const Matrix& s, double margin) {
  const Index n = s.rows();
  double total = 0;
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < n; ++k) {
      if (k == i) continue;
      total += positive_part(margin + s(i, k) - s(i, i));
      total += positive_part(margin + s(k, i) - s(i, i));
    }
  }
  return total / static_cast<double>(n);
}

inline double max_hinge(const Matrix& s, double margin) {
  const Index n = s.rows();
  double total = 0;
  for (Index i = 0; i < n; ++i) {
    total += positive_part(margin + s(i, hardest_caption(s, i)) - s(i, i));
    total += positive_part(margin + s(hardest_image(s, i), i) - s(i, i));
  }
  return total / static_cast<double>(n);
}

inline double nce_sum(const Matrix& s, double tau) {
  const Index n = s.rows();
  double total = 0;
  for (Index i = 0; i < n; ++i) {
    double row_den = 0, col_den = 0;
    for (Index k = 0; k < n; ++k) {
      row_den += std::exp(s(i, k) / tau);
      col_den += std::exp(s(k, i) / tau);
    }
    total += -std::log(std::exp(s(i, i) / tau) / row_den);
    total += -std::log(std::exp(s(i, i) / tau) / col_den);
  }
  return total / static_cast<double>(n);
}

inline double nce_max_unclamped(const Matrix& s, double tau) {
  const Index n = s.rows();
  double total = 0;
  for (Index i = 0; i < n; ++i) {
    total += (s(i, hardest_caption(s, i)) - s(i, i)) / tau;
    total += (s(hardest_image(s, i), i) - s(i, i)) / tau;
  }
  return total / static_cast<double>(n);
}

inline double nce_max_clamped(const Matrix& s, double margin, double tau) {
  const Index n = s.rows();
  double total = 0;
  for (Index i = 0; i < n; ++i) {
    total += positive_part((margin + s(i, hardest_caption(s, i)) - s(i, i)) / tau);
    total += positive_part((margin + s(hardest_image(s, i), i) - s(i, i)) / tau);
  }
  return total / static_cast<double>(n);
}

// Denominators take the positive plus every cross-modal and within-modal
// competitor of the anchor.
inline double mvn(const Matrix& zi, const Matrix& zc, double tau) {
  const Index n = zi.rows();
  double total = 0;
  for (Index i = 0; i < n; ++i) {
    double den_img = 0;
    for (Index k = 0; k < n; ++k) den_img += std::exp(cosine(zi, i, zc, k) / tau);
    for (Index j = 0; j < n; ++j) {
      if (j != i) den_img += std::exp(cosine(zi, i, zi, j) / tau);
    }
    total += -std::log(std::exp(cosine(zi, i, zc, i) / tau) / den_img);

    double den_cap = 0;
    for (Index k = 0; k < n; ++k) den_cap += std::exp(cosine(zi, k, zc, i) / tau);
    for (Index j = 0; j < n; ++j) {
      if (j != i) den_cap += std::exp(cosine(zc, i, zc, j) / tau);
    }
    total += -std::log(std::exp(cosine(zi, i, zc, i) / tau) / den_cap);
  }
  return total / static_cast<double>(n);
}

// Full argsort ranking with the tie rule (higher score first, then lower
// index), then scan for the queried item.
inline Index sorted_rank(const std::vector<double>& scores, Index own) {
  std::vector<Index> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    if (scores[static_cast<std::size_t>(a)] != scores[static_cast<std::size_t>(b)]) {
      return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
    }
    return a < b;
  });
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    if (order[pos] == own) return static_cast<Index>(pos) + 1;
  }
  return static_cast<Index>(order.size()) + 1;
}

inline double recall_i2t(const Matrix& sim, const std::vector<Index>& caption_image, int k) {
  Index hits = 0;
  for (Index i = 0; i < sim.rows(); ++i) {
    Index best = sim.cols() + 1;
    for (Index j = 0; j < sim.cols(); ++j) {
      if (caption_image[static_cast<std::size_t>(j)] != i) continue;
      std::vector<double> scores(static_cast<std::size_t>(sim.cols()));
      for (Index t = 0; t < sim.cols(); ++t) scores[static_cast<std::size_t>(t)] = sim(i, t);
      best = std::min(best, sorted_rank(scores, j));
    }
    if (best <= k) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(sim.rows());
}

inline double recall_t2i(const Matrix& sim, const std::vector<Index>& caption_image, int k) {
  Index hits = 0;
  for (Index j = 0; j < sim.cols(); ++j) {
    std::vector<double> scores(static_cast<std::size_t>(sim.rows()));
    for (Index t = 0; t < sim.rows(); ++t) scores[static_cast<std::size_t>(t)] = sim(t, j);
    if (sorted_rank(scores, caption_image[static_cast<std::size_t>(j)]) <= k) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(sim.cols());
}

inline Matrix random_matrix(Rng& rng, Index rows, Index cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = scale * rng.next_normal();
  }
  return m;
}

// Smallest margin-bracket magnitude, hardest-negative runner-up gap, and
// top-two similarity gap; finite-difference checks need these away from
// zero so the probe never crosses a kink.
inline double kink_distance(const Matrix& s, double margin) {
  const Index n = s.rows();
  double dist = 1e9;
  auto consider = [&](double x) { dist = std::min(dist, std::abs(x)); };
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < n; ++k) {
      if (k == i) continue;
      consider(margin + s(i, k) - s(i, i));
      consider(margin + s(k, i) - s(i, i));
    }
    Index c = hardest_caption(s, i);
    Index r = hardest_image(s, i);
    for (Index k = 0; k < n; ++k) {
      if (k == i || k == c) continue;
      consider(s(i, c) - s(i, k));
    }
    for (Index k = 0; k < n; ++k) {
      if (k == i || k == r) continue;
      consider(s(r, i) - s(k, i));
    }
  }
  return dist;
}

inline bool gradients_close(const Matrix& analytic, const Matrix& numeric, double rel = 1e-5,
                            double abs_floor = 1e-7) {
  for (Index i = 0; i < analytic.rows(); ++i) {
    for (Index j = 0; j < analytic.cols(); ++j) {
      double a = analytic(i, j), f = numeric(i, j);
      double tol = std::max(abs_floor, rel * std::max(std::abs(a), std::abs(f)));
      if (std::abs(a - f) > tol) return false;
    }
  }
  return true;
}

}  // namespace cvse::naive

#endif  // CVSE_TESTS_SUPPORT_NAIVE_HPP_
