#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "drivestyle/errors.hpp"
#include "drivestyle/hmm.hpp"
#include "drivestyle/rng.hpp"
#include "drivestyle/series.hpp"

namespace drivestyle {

// K cluster means spread so the minimum pairwise distance equals
// `separation`, with unit emission covariance that makes `separation` a
// sigma-distance. K <= 5 uses regular-simplex vertices; larger K falls back
// to normalized {-1,0,1}^4 lattice directions.
inline std::vector<Eigen::Vector4d> spread_means(int num_states, double separation) {
  if (num_states < 1) fail(errc::bad_config, "need at least one state");
  if (num_states == 1) return {Eigen::Vector4d::Zero()};
  std::vector<Eigen::Vector4d> pts;

  if (num_states <= kChannels + 1) {
    // regular simplex via Helmert coordinates of e_i - centroid in R^K
    const int k = num_states;
    for (int i = 0; i < k; ++i) {
      Eigen::Vector4d v = Eigen::Vector4d::Zero();
      for (int j = 1; j < k; ++j) {
        // Helmert direction j has j leading ones then -j, scaled to unit norm.
        double coord = 0.0;
        if (i < j) coord = 1.0;
        if (i == j) coord = -static_cast<double>(j);
        v[j - 1] = coord / std::sqrt(static_cast<double>(j) * (j + 1));
      }
      pts.push_back(v);
    }
  } else {
    if (num_states > 80) fail(errc::bad_config, "at most 80 synthetic states supported");
    for (int i = 0; i < num_states; ++i) {
      int code = i + 1;  // skip the all-zero point
      Eigen::Vector4d v;
      for (int c = 0; c < kChannels; ++c) {
        const int digit = code % 3;
        code /= 3;
        v[c] = digit == 0 ? 0.0 : (digit == 1 ? 1.0 : -1.0);
      }
      pts.push_back(v.normalized());
    }
  }

  double min_dist = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < pts.size(); ++a) {
    for (std::size_t b = a + 1; b < pts.size(); ++b) {
      min_dist = std::min(min_dist, (pts[a] - pts[b]).norm());
    }
  }
  for (auto& p : pts) p *= separation / min_dist;
  return pts;
}

// Sticky K-state generator: diagonal self_prob, off-diagonal mass spread
// uniformly, uniform initial distribution, unit-covariance Gaussians.
inline std::pair<TransitionMatrix, EmissionParams> synth_model(int num_states, double self_prob,
                                                               double separation) {
  if (num_states < 1) fail(errc::bad_config, "states must be >= 1");
  if (self_prob < 0.0 || self_prob >= 1.0) fail(errc::bad_config, "self-prob must be in [0, 1)");
  TransitionMatrix t;
  if (num_states == 1) {
    t.rows = Eigen::MatrixXd::Ones(1, 1);
    t.initial = Eigen::VectorXd::Ones(1);
  } else {
    const double off = (1.0 - self_prob) / (num_states - 1);
    t.rows = Eigen::MatrixXd::Constant(num_states, num_states, off);
    t.rows.diagonal().setConstant(self_prob);
    t.initial = Eigen::VectorXd::Constant(num_states, 1.0 / num_states);
  }
  EmissionParams emit;
  for (const auto& mean : spread_means(num_states, separation)) {
    GaussianParams g;
    g.mean = mean;
    g.cov = Eigen::Matrix4d::Identity();
    emit.push_back(g);
  }
  return {std::move(t), std::move(emit)};
}

// Draw (series, ground-truth labels) from the synthetic model at 10 Hz.
inline std::pair<DrivingSeries, StateSequence> synth_series(int num_states, Eigen::Index length,
                                                            double self_prob, double separation,
                                                            std::uint64_t seed,
                                                            double rate_hz = 10.0) {
  if (length < 2) fail(errc::bad_config, "length must be >= 2");
  const auto [trans, emit] = synth_model(num_states, self_prob, separation);
  Rng rng = Rng::substream(seed, "synth");
  auto [labels, obs] = generate(trans, emit, length, rng);

  Eigen::VectorXd ts(length);
  for (Eigen::Index i = 0; i < length; ++i) ts[i] = static_cast<double>(i) / rate_hz;
  DrivingSeries s = finalize_series(std::move(ts), std::move(obs), "synth");
  return {std::move(s), std::move(labels)};
}

}  // namespace drivestyle
