#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "drivestyle/errors.hpp"
#include "drivestyle/rng.hpp"
#include "drivestyle/series.hpp"

namespace drivestyle {

// Row-stochastic transition matrix plus a distinct initial-state row.
struct TransitionMatrix {
  Eigen::MatrixXd rows;      // K x K, each row on the simplex
  Eigen::VectorXd initial;   // K, on the simplex

  int num_states() const { return static_cast<int>(rows.rows()); }
};

inline void validate(const TransitionMatrix& t) {
  const Eigen::Index k = t.rows.rows();
  if (k == 0 || t.rows.cols() != k || t.initial.size() != k) {
    fail(errc::dimension_mismatch, "transition matrix must be K x K with K initial entries");
  }
  if ((t.rows.array() < 0.0).any() || (t.initial.array() < 0.0).any()) {
    fail(errc::dimension_mismatch, "negative probability entry");
  }
  for (Eigen::Index i = 0; i < k; ++i) {
    if (std::abs(t.rows.row(i).sum() - 1.0) > 1e-10) {
      fail(errc::dimension_mismatch, "transition row " + std::to_string(i) + " does not sum to 1");
    }
  }
  if (std::abs(t.initial.sum() - 1.0) > 1e-10) {
    fail(errc::dimension_mismatch, "initial distribution does not sum to 1");
  }
}

// Gaussian emission for one state.
struct GaussianParams {
  Eigen::Vector4d mean = Eigen::Vector4d::Zero();
  Eigen::Matrix4d cov = Eigen::Matrix4d::Identity();
};

using EmissionParams = std::vector<GaussianParams>;

struct StateSequence {
  std::vector<int> labels;

  Eigen::Index size() const { return static_cast<Eigen::Index>(labels.size()); }
};

inline constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)

// Cached Cholesky factorization for repeated log-density evaluation.
// Construction fails with NonSPDCovariance instead of silently regularizing.
class GaussianDensity {
 public:
  explicit GaussianDensity(const GaussianParams& p) : mean_(p.mean) {
    const double scale = 1.0 + p.cov.cwiseAbs().maxCoeff();
    if ((p.cov - p.cov.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
      fail(errc::non_spd_covariance, "covariance not symmetric");
    }
    Eigen::LLT<Eigen::Matrix4d> llt(p.cov);
    if (llt.info() != Eigen::Success) {
      fail(errc::non_spd_covariance, "Cholesky factorization failed");
    }
    lower_ = llt.matrixL();
    double log_det = 0.0;
    for (int i = 0; i < kChannels; ++i) log_det += std::log(lower_(i, i));
    log_norm_ = -0.5 * kChannels * kLog2Pi - log_det;
  }

  double log_density(const Eigen::Vector4d& x) const {
    const Eigen::Vector4d z = lower_.triangularView<Eigen::Lower>().solve(x - mean_);
    return log_norm_ - 0.5 * z.squaredNorm();
  }

  const Eigen::Matrix4d& cholesky_lower() const { return lower_; }

 private:
  Eigen::Vector4d mean_;
  Eigen::Matrix4d lower_;
  double log_norm_ = 0.0;
};

namespace detail {

inline void check_hmm_dims(const ObsMatrix& obs, const TransitionMatrix& trans,
                           const EmissionParams& emit) {
  validate(trans);
  if (obs.rows() < 1) fail(errc::dimension_mismatch, "need at least one observation");
  if (static_cast<int>(emit.size()) != trans.num_states()) {
    fail(errc::dimension_mismatch, "emission count " + std::to_string(emit.size()) +
                                       " != state count " + std::to_string(trans.num_states()));
  }
}

// T x K matrix of per-state Gaussian log-densities.
inline Eigen::MatrixXd emission_log_densities(const ObsMatrix& obs, const EmissionParams& emit) {
  std::vector<GaussianDensity> dens;
  dens.reserve(emit.size());
  for (const auto& p : emit) dens.emplace_back(p);
  Eigen::MatrixXd out(obs.rows(), static_cast<Eigen::Index>(emit.size()));
  for (Eigen::Index t = 0; t < obs.rows(); ++t) {
    const Eigen::Vector4d x = obs.row(t).transpose();
    for (std::size_t k = 0; k < dens.size(); ++k) {
      out(t, static_cast<Eigen::Index>(k)) = dens[k].log_density(x);
    }
  }
  return out;
}

inline double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;  // all -inf
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace detail

// log P(O) by the forward recursion. Messages are renormalized every step so
// sequences of 1e5 frames stay well inside double range.
inline double forward_log_likelihood(const ObsMatrix& obs, const TransitionMatrix& trans,
                                     const EmissionParams& emit) {
  detail::check_hmm_dims(obs, trans, emit);
  const Eigen::Index T = obs.rows();
  const Eigen::Index K = trans.rows.rows();
  const Eigen::MatrixXd log_e = detail::emission_log_densities(obs, emit);

  double log_prob = 0.0;
  Eigen::VectorXd alpha(K);  // normalized filtered weights
  Eigen::VectorXd work(K);
  for (Eigen::Index t = 0; t < T; ++t) {
    if (t == 0) {
      work = trans.initial;
    } else {
      work = trans.rows.transpose() * alpha;
    }
    for (Eigen::Index k = 0; k < K; ++k) {
      work[k] = (work[k] > 0.0 ? std::log(work[k]) : -std::numeric_limits<double>::infinity()) +
                log_e(t, k);
    }
    const double step = detail::log_sum_exp(work);
    log_prob += step;
    alpha = (work.array() - step).exp();
    const double total = alpha.sum();
    alpha /= total;
    log_prob += std::log(total);  // ~0, keeps alpha exactly normalized
  }
  return log_prob;
}

inline constexpr std::uint64_t kBruteForceCap = 1000000;

// Literal enumeration of all K^T state paths; the test oracle for the
// forward recursion.
inline double brute_force_likelihood(const ObsMatrix& obs, const TransitionMatrix& trans,
                                     const EmissionParams& emit) {
  detail::check_hmm_dims(obs, trans, emit);
  const Eigen::Index T = obs.rows();
  const Eigen::Index K = trans.rows.rows();

  std::uint64_t paths = 1;
  for (Eigen::Index t = 0; t < T; ++t) {
    paths *= static_cast<std::uint64_t>(K);
    if (paths > kBruteForceCap) {
      fail(errc::too_large, "K^T exceeds " + std::to_string(kBruteForceCap) + " paths");
    }
  }

  const Eigen::MatrixXd log_e = detail::emission_log_densities(obs, emit);
  Eigen::VectorXd log_path(static_cast<Eigen::Index>(paths));
  std::vector<int> state(static_cast<std::size_t>(T));
  for (std::uint64_t p = 0; p < paths; ++p) {
    std::uint64_t code = p;
    for (Eigen::Index t = 0; t < T; ++t) {
      state[static_cast<std::size_t>(t)] = static_cast<int>(code % static_cast<std::uint64_t>(K));
      code /= static_cast<std::uint64_t>(K);
    }
    double lp = std::log(trans.initial[state[0]]) + log_e(0, state[0]);
    for (Eigen::Index t = 1; t < T; ++t) {
      lp += std::log(trans.rows(state[static_cast<std::size_t>(t - 1)],
                                state[static_cast<std::size_t>(t)]));
      lp += log_e(t, state[static_cast<std::size_t>(t)]);
    }
    log_path[static_cast<Eigen::Index>(p)] = lp;
  }
  return detail::log_sum_exp(log_path);
}

// Draw from the exact posterior P(X | O, pi, theta): backward message passing
// then forward sampling. Deterministic given the rng state.
inline StateSequence sample_state_sequence(const ObsMatrix& obs, const TransitionMatrix& trans,
                                           const EmissionParams& emit, Rng& rng) {
  detail::check_hmm_dims(obs, trans, emit);
  const Eigen::Index T = obs.rows();
  const Eigen::Index K = trans.rows.rows();
  const Eigen::MatrixXd log_e = detail::emission_log_densities(obs, emit);

  // Scaled emission weights: exp(log_e - rowmax), so each row's max is 1.
  Eigen::MatrixXd e_scaled(T, K);
  for (Eigen::Index t = 0; t < T; ++t) {
    const double m = log_e.row(t).maxCoeff();
    e_scaled.row(t) = (log_e.row(t).array() - m).exp();
  }

  // msg(t, i) proportional to P(o_{t+1:T} | x_t = i), renormalized per step.
  Eigen::MatrixXd msg(T, K);
  msg.row(T - 1).setOnes();
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    const Eigen::VectorXd fused =
        e_scaled.row(t + 1).transpose().cwiseProduct(msg.row(t + 1).transpose());
    Eigen::VectorXd m = trans.rows * fused;
    const double total = m.sum();
    if (total > 0.0) {
      msg.row(t) = m / total;
    } else {
      // Severe underflow: renormalize in log space for this step.
      Eigen::VectorXd lw(K);
      for (Eigen::Index i = 0; i < K; ++i) {
        Eigen::VectorXd terms(K);
        for (Eigen::Index j = 0; j < K; ++j) {
          const double lt = trans.rows(i, j) > 0.0 ? std::log(trans.rows(i, j))
                                                   : -std::numeric_limits<double>::infinity();
          const double lm = msg(t + 1, j) > 0.0 ? std::log(msg(t + 1, j))
                                                : -std::numeric_limits<double>::infinity();
          terms[j] = lt + std::log(e_scaled(t + 1, j)) + lm;
        }
        lw[i] = detail::log_sum_exp(terms);
      }
      const double shift = lw.maxCoeff();
      msg.row(t) = (lw.array() - shift).exp();
      msg.row(t) /= msg.row(t).sum();
    }
  }

  StateSequence seq;
  seq.labels.resize(static_cast<std::size_t>(T));
  Eigen::VectorXd w(K);
  for (Eigen::Index t = 0; t < T; ++t) {
    if (t == 0) {
      w = trans.initial;
    } else {
      w = trans.rows.row(seq.labels[static_cast<std::size_t>(t - 1)]).transpose();
    }
    w = w.cwiseProduct(e_scaled.row(t).transpose()).cwiseProduct(msg.row(t).transpose());
    const double total = w.sum();
    if (total <= 0.0) {
      // Fall back to the argmax of the log weights; deterministic.
      Eigen::Index best = 0;
      double best_lw = -std::numeric_limits<double>::infinity();
      for (Eigen::Index k = 0; k < K; ++k) {
        const double prior = t == 0 ? trans.initial[k]
                                    : trans.rows(seq.labels[static_cast<std::size_t>(t - 1)], k);
        if (prior <= 0.0 || msg(t, k) <= 0.0) continue;
        const double lw = std::log(prior) + log_e(t, k) + std::log(msg(t, k));
        if (lw > best_lw) {
          best_lw = lw;
          best = k;
        }
      }
      seq.labels[static_cast<std::size_t>(t)] = static_cast<int>(best);
      continue;
    }
    seq.labels[static_cast<std::size_t>(t)] =
        rng.categorical(std::span<const double>(w.data(), static_cast<std::size_t>(K)));
  }
  return seq;
}

// Ancestral draw of (labels, observations) from the model.
inline std::pair<StateSequence, ObsMatrix> generate(const TransitionMatrix& trans,
                                                    const EmissionParams& emit, Eigen::Index T,
                                                    Rng& rng) {
  validate(trans);
  if (static_cast<int>(emit.size()) != trans.num_states()) {
    fail(errc::dimension_mismatch, "emission count != state count");
  }
  const Eigen::Index K = trans.rows.rows();
  std::vector<Eigen::Matrix4d> lower(emit.size());
  for (std::size_t k = 0; k < emit.size(); ++k) {
    lower[k] = GaussianDensity(emit[k]).cholesky_lower();
  }

  StateSequence seq;
  seq.labels.resize(static_cast<std::size_t>(T));
  ObsMatrix obs(T, kChannels);
  int state = 0;
  for (Eigen::Index t = 0; t < T; ++t) {
    if (t == 0) {
      state = rng.categorical(
          std::span<const double>(trans.initial.data(), static_cast<std::size_t>(K)));
    } else {
      const Eigen::VectorXd row = trans.rows.row(state).transpose();
      state = rng.categorical(std::span<const double>(row.data(), static_cast<std::size_t>(K)));
    }
    seq.labels[static_cast<std::size_t>(t)] = state;
    Eigen::Vector4d z;
    for (int c = 0; c < kChannels; ++c) z[c] = rng.normal();
    obs.row(t) = (emit[static_cast<std::size_t>(state)].mean +
                  lower[static_cast<std::size_t>(state)] * z)
                     .transpose();
  }
  return {std::move(seq), std::move(obs)};
}

}  // namespace drivestyle
