#pragma once

#include <algorithm>
#include <limits>
#include <span>
#include <vector>

#include "drivestyle/errors.hpp"

namespace drivestyle {

// Cost-minimizing assignment for a rectangular matrix (Jonker-Volgenant style
// potentials, O(n^3)). Returns assignment[row] = column, or -1 when the row is
// padded out of a rectangular instance.
inline std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
  const int n_rows = static_cast<int>(cost.size());
  const int n_cols = n_rows ? static_cast<int>(cost[0].size()) : 0;
  if (n_rows == 0 || n_cols == 0) return {};
  const int dim = std::max(n_rows, n_cols);
  const double kPad = 0.0;  // dummy rows/cols cost nothing, real entries shifted non-negative

  double min_entry = 0.0;
  for (const auto& row : cost) {
    for (double v : row) min_entry = std::min(min_entry, v);
  }

  // 1-indexed potentials with a virtual 0 row/column.
  std::vector<double> u(static_cast<std::size_t>(dim) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(dim) + 1, 0.0);
  std::vector<int> match(static_cast<std::size_t>(dim) + 1, 0);  // match[col] = row
  std::vector<int> way(static_cast<std::size_t>(dim) + 1, 0);

  auto entry = [&](int i, int j) {  // 1-indexed
    if (i <= n_rows && j <= n_cols) return cost[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j - 1)] - min_entry;
    return kPad;
  };

  for (int i = 1; i <= dim; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> min_v(static_cast<std::size_t>(dim) + 1,
                              std::numeric_limits<double>::infinity());
    std::vector<bool> used(static_cast<std::size_t>(dim) + 1, false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const int i0 = match[static_cast<std::size_t>(j0)];
      double delta = std::numeric_limits<double>::infinity();
      int j1 = -1;
      for (int j = 1; j <= dim; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = entry(i0, j) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < min_v[static_cast<std::size_t>(j)]) {
          min_v[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (min_v[static_cast<std::size_t>(j)] < delta) {
          delta = min_v[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= dim; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(match[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          min_v[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0);
  }

  std::vector<int> assignment(static_cast<std::size_t>(n_rows), -1);
  for (int j = 1; j <= dim; ++j) {
    const int i = match[static_cast<std::size_t>(j)];
    if (i >= 1 && i <= n_rows && j <= n_cols) assignment[static_cast<std::size_t>(i - 1)] = j - 1;
  }
  return assignment;
}

// Fraction of timesteps where predicted labels match the truth under the best
// one-to-one cluster relabeling. The standard segmentation recovery score.
inline double hungarian_matched_accuracy(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) {
    fail(errc::length_mismatch, "truth and prediction lengths differ");
  }
  if (truth.empty()) fail(errc::empty_input, "empty label sequences");
  int k_true = 0, k_pred = 0;
  for (int v : truth) k_true = std::max(k_true, v + 1);
  for (int v : predicted) k_pred = std::max(k_pred, v + 1);

  std::vector<std::vector<double>> overlap(static_cast<std::size_t>(k_true),
                                           std::vector<double>(static_cast<std::size_t>(k_pred), 0.0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    overlap[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])] += 1.0;
  }
  // maximize overlap == minimize negated overlap
  std::vector<std::vector<double>> negated = overlap;
  for (auto& row : negated) {
    for (double& x : row) x = -x;
  }
  const std::vector<int> assign = hungarian(negated);
  double matched = 0.0;
  for (int i = 0; i < k_true; ++i) {
    if (assign[static_cast<std::size_t>(i)] >= 0) {
      matched += overlap[static_cast<std::size_t>(i)][static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
    }
  }
  return matched / static_cast<double>(truth.size());
}

}  // namespace drivestyle
