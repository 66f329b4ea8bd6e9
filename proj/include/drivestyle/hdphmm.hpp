#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "drivestyle/errors.hpp"
#include "drivestyle/hmm.hpp"
#include "drivestyle/rng.hpp"
#include "drivestyle/series.hpp"

namespace drivestyle {

// Priors and truncation level of the weak-limit sticky HDP-HMM.
// alpha: per-row DP concentration, gamma: top-level DP concentration,
// kappa: extra prior mass on self-transitions. The Normal-Inverse-Wishart
// base measure covers the Gaussian emission parameters.
struct Hyperparameters {
  double alpha = 1.0;
  double gamma = 1.0;
  double kappa = 10.0;
  Eigen::Vector4d niw_mean0 = Eigen::Vector4d::Zero();
  double niw_scale0 = 0.01;
  double niw_dof0 = 7.0;  // dim + 3
  Eigen::Matrix4d niw_psi0 = Eigen::Matrix4d::Identity();
  int truncation_L = 20;
  bool diagonal_emissions = false;
};

inline void validate(const Hyperparameters& h) {
  if (h.alpha <= 0.0) fail(errc::bad_hyperparameters, "alpha must be positive");
  if (h.gamma <= 0.0) fail(errc::bad_hyperparameters, "gamma must be positive");
  if (h.kappa < 0.0) fail(errc::bad_hyperparameters, "kappa must be nonnegative");
  if (h.niw_scale0 <= 0.0) fail(errc::bad_hyperparameters, "niw_scale0 must be positive");
  if (h.niw_dof0 <= kChannels + 1) {
    fail(errc::bad_hyperparameters, "niw_dof0 must exceed dim + 1 = " + std::to_string(kChannels + 1));
  }
  if (h.truncation_L < 2) fail(errc::bad_hyperparameters, "truncation_L must be at least 2");
  Eigen::LLT<Eigen::Matrix4d> llt(h.niw_psi0);
  if (llt.info() != Eigen::Success) fail(errc::non_spd_psi, "niw_psi0 is not SPD");
}

// Weakly informative, scale-adaptive defaults: prior mean at the data mean,
// prior scatter at 0.75 of the data covariance.
inline Hyperparameters default_hyperparameters(const ObsMatrix& obs) {
  Hyperparameters h;
  h.niw_mean0 = obs.colwise().mean().transpose();
  const Eigen::MatrixXd centered = obs.rowwise() - obs.colwise().mean();
  Eigen::Matrix4d cov = centered.transpose() * centered /
                        std::max<double>(1.0, static_cast<double>(obs.rows() - 1));
  h.niw_psi0 = 0.75 * cov;
  // keep psi0 SPD for degenerate channels
  const double jitter = 1e-6 * std::max(1.0, h.niw_psi0.trace() / kChannels);
  for (int tries = 0; tries < 8; ++tries) {
    Eigen::LLT<Eigen::Matrix4d> llt(h.niw_psi0);
    if (llt.info() == Eigen::Success) break;
    h.niw_psi0 += jitter * std::pow(10.0, tries) * Eigen::Matrix4d::Identity();
  }
  return h;
}

// Truncated stick-breaking weights; remainder is the unbroken stick mass.
struct GlobalWeights {
  Eigen::VectorXd beta;
  double remainder = 0.0;

  // Remainder folded into the last slot, so downstream Dirichlet draws see a
  // full simplex.
  Eigen::VectorXd folded() const {
    Eigen::VectorXd b = beta;
    b[b.size() - 1] += remainder;
    return b;
  }
};

// beta_i = nu_i * prod_{l<i} (1 - nu_l); the deterministic core of the
// stick-breaking construction, exposed so forced stick sequences are testable.
inline GlobalWeights weights_from_sticks(std::span<const double> nu) {
  GlobalWeights w;
  w.beta.resize(static_cast<Eigen::Index>(nu.size()));
  double stick = 1.0;
  for (std::size_t i = 0; i < nu.size(); ++i) {
    w.beta[static_cast<Eigen::Index>(i)] = nu[i] * stick;
    stick -= w.beta[static_cast<Eigen::Index>(i)];
  }
  w.remainder = stick;
  return w;
}

inline GlobalWeights break_sticks(double gamma, int truncation, Rng& rng) {
  if (truncation < 2) fail(errc::bad_hyperparameters, "truncation must be at least 2");
  std::vector<double> nu(static_cast<std::size_t>(truncation));
  for (double& v : nu) v = rng.beta(1.0, gamma);
  return weights_from_sticks(nu);
}

// One transition row under the sticky prior: under weak-limit truncation the
// DP(alpha+kappa, (alpha*beta + kappa*delta_i)/(alpha+kappa)) posterior row is
// Dirichlet(alpha*beta_j + kappa*[j==i] + counts_j).
inline Eigen::VectorXd sample_transition_row(int self_index, const GlobalWeights& weights,
                                             double alpha, double kappa,
                                             const Eigen::VectorXi& counts_row, Rng& rng) {
  const Eigen::VectorXd b = weights.folded();
  const Eigen::Index L = b.size();
  if (counts_row.size() != L) fail(errc::dimension_mismatch, "counts row size != truncation");
  std::vector<double> conc(static_cast<std::size_t>(L));
  for (Eigen::Index j = 0; j < L; ++j) {
    conc[static_cast<std::size_t>(j)] = alpha * b[j] +
                                        (j == self_index ? kappa : 0.0) +
                                        static_cast<double>(counts_row[j]);
  }
  const auto draw = rng.dirichlet(conc);
  return Eigen::Map<const Eigen::VectorXd>(draw.data(), L);
}

// ---------------------------------------------------------------------------
// Normal-Inverse-Wishart conjugate machinery
// ---------------------------------------------------------------------------

struct NiwParams {
  Eigen::Vector4d mean = Eigen::Vector4d::Zero();
  double scale = 1.0;  // pseudo-count on the mean
  double dof = 7.0;
  Eigen::Matrix4d psi = Eigen::Matrix4d::Identity();
};

inline NiwParams niw_prior(const Hyperparameters& h) {
  return {h.niw_mean0, h.niw_scale0, h.niw_dof0, h.niw_psi0};
}

// Conjugate update given n observations with sample mean and centered scatter.
inline NiwParams niw_posterior(const NiwParams& prior, double n, const Eigen::Vector4d& sample_mean,
                               const Eigen::Matrix4d& scatter) {
  if (n <= 0.0) return prior;
  NiwParams post;
  post.scale = prior.scale + n;
  post.dof = prior.dof + n;
  post.mean = (prior.scale * prior.mean + n * sample_mean) / post.scale;
  const Eigen::Vector4d d = sample_mean - prior.mean;
  post.psi = prior.psi + scatter + (prior.scale * n / post.scale) * (d * d.transpose());
  return post;
}

// Inverse-Wishart draw via the Bartlett decomposition of the Wishart of the
// inverse scale matrix.
inline Eigen::Matrix4d sample_inverse_wishart(const Eigen::Matrix4d& psi, double dof, Rng& rng) {
  Eigen::LLT<Eigen::Matrix4d> psi_llt(psi);
  if (psi_llt.info() != Eigen::Success) fail(errc::non_spd_psi, "IW scale matrix not SPD");
  Eigen::Matrix4d psi_inv = psi_llt.solve(Eigen::Matrix4d::Identity());
  psi_inv = 0.5 * (psi_inv + psi_inv.transpose());
  Eigen::LLT<Eigen::Matrix4d> inv_llt(psi_inv);
  if (inv_llt.info() != Eigen::Success) fail(errc::non_spd_psi, "IW inverse scale not SPD");
  const Eigen::Matrix4d c = inv_llt.matrixL();

  Eigen::Matrix4d a = Eigen::Matrix4d::Zero();
  for (int i = 0; i < kChannels; ++i) {
    a(i, i) = std::sqrt(rng.chi_square(dof - i));
    for (int j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  const Eigen::Matrix4d ca = c * a;
  const Eigen::Matrix4d w = ca * ca.transpose();
  Eigen::LLT<Eigen::Matrix4d> w_llt(w);
  Eigen::Matrix4d sigma = w_llt.solve(Eigen::Matrix4d::Identity());
  return 0.5 * (sigma + sigma.transpose());
}

// One (mean, covariance) draw from a NIW. Diagonal mode replaces the IW with
// independent per-channel inverse-gamma draws on the psi diagonal.
inline GaussianParams sample_niw(const NiwParams& p, bool diagonal, Rng& rng) {
  GaussianParams g;
  if (diagonal) {
    g.cov.setZero();
    for (int c = 0; c < kChannels; ++c) {
      g.cov(c, c) = 0.5 * p.psi(c, c) / rng.gamma(0.5 * p.dof);
    }
    for (int c = 0; c < kChannels; ++c) {
      g.mean[c] = rng.normal(p.mean[c], std::sqrt(g.cov(c, c) / p.scale));
    }
    return g;
  }
  g.cov = sample_inverse_wishart(p.psi, p.dof, rng);
  Eigen::LLT<Eigen::Matrix4d> llt(g.cov / p.scale);
  if (llt.info() != Eigen::Success) fail(errc::non_spd_covariance, "sampled covariance not SPD");
  Eigen::Vector4d z;
  for (int c = 0; c < kChannels; ++c) z[c] = rng.normal();
  g.mean = p.mean + Eigen::Matrix4d(llt.matrixL()) * z;
  return g;
}

// Per-state NIW posterior draws. States with no assigned observations draw
// from the prior.
inline EmissionParams sample_emission_params(const ObsMatrix& obs, std::span<const int> labels,
                                             const Hyperparameters& hyper, Rng& rng) {
  const int L = hyper.truncation_L;
  const NiwParams prior = niw_prior(hyper);
  std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(L));
  for (std::size_t t = 0; t < labels.size(); ++t) {
    members[static_cast<std::size_t>(labels[t])].push_back(static_cast<Eigen::Index>(t));
  }
  EmissionParams emit(static_cast<std::size_t>(L));
  for (int k = 0; k < L; ++k) {
    const auto& idx = members[static_cast<std::size_t>(k)];
    if (idx.empty()) {
      emit[static_cast<std::size_t>(k)] = sample_niw(prior, hyper.diagonal_emissions, rng);
      continue;
    }
    Eigen::Vector4d mean = Eigen::Vector4d::Zero();
    for (Eigen::Index t : idx) mean += obs.row(t).transpose();
    mean /= static_cast<double>(idx.size());
    Eigen::Matrix4d scatter = Eigen::Matrix4d::Zero();
    for (Eigen::Index t : idx) {
      const Eigen::Vector4d d = obs.row(t).transpose() - mean;
      scatter += d * d.transpose();
    }
    const NiwParams post = niw_posterior(prior, static_cast<double>(idx.size()), mean, scatter);
    emit[static_cast<std::size_t>(k)] = sample_niw(post, hyper.diagonal_emissions, rng);
  }
  return emit;
}

// ---------------------------------------------------------------------------
// Auxiliary table counts and global weights
// ---------------------------------------------------------------------------

inline Eigen::MatrixXi count_transitions(std::span<const int> labels, int truncation) {
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(truncation, truncation);
  for (std::size_t t = 0; t + 1 < labels.size(); ++t) {
    ++counts(labels[t], labels[t + 1]);
  }
  return counts;
}

// CRP table counts linking transition counts to the global-weight posterior:
// m[i][j] customers-per-table simulation with concentration alpha*beta_j
// (+kappa on the diagonal), then the sticky override thins diagonal tables
// with probability kappa/(kappa + alpha*beta_i).
inline Eigen::MatrixXi sample_aux_counts(const Eigen::MatrixXi& counts, const GlobalWeights& weights,
                                         double alpha, double kappa, Rng& rng) {
  const Eigen::Index L = counts.rows();
  const Eigen::VectorXd b = weights.folded();
  Eigen::MatrixXi m = Eigen::MatrixXi::Zero(L, L);
  for (Eigen::Index i = 0; i < L; ++i) {
    for (Eigen::Index j = 0; j < L; ++j) {
      const int c = counts(i, j);
      if (c == 0) continue;
      const double rho = alpha * b[j] + (i == j ? kappa : 0.0);
      int tables = 1;  // the first customer always opens a table
      for (int n = 2; n <= c; ++n) {
        if (rng.bernoulli(rho / (n - 1 + rho))) ++tables;
      }
      m(i, j) = tables;
    }
  }
  if (kappa > 0.0) {
    for (Eigen::Index i = 0; i < L; ++i) {
      const double keep = alpha * b[i] / (alpha * b[i] + kappa);
      int kept = 0;
      for (int t = 0; t < m(i, i); ++t) {
        if (rng.bernoulli(keep)) ++kept;
      }
      m(i, i) = kept;
    }
  }
  return m;
}

// Weak-limit posterior of the global weights: Dirichlet(mbar_j + gamma/L)
// over the column sums of the (sticky-corrected) table counts.
inline GlobalWeights resample_global_weights(const Eigen::MatrixXi& aux_table_counts, double gamma,
                                             Rng& rng) {
  const Eigen::Index L = aux_table_counts.cols();
  std::vector<double> conc(static_cast<std::size_t>(L));
  for (Eigen::Index j = 0; j < L; ++j) {
    conc[static_cast<std::size_t>(j)] =
        static_cast<double>(aux_table_counts.col(j).sum()) + gamma / static_cast<double>(L);
  }
  const auto draw = rng.dirichlet(conc);
  GlobalWeights w;
  w.beta = Eigen::Map<const Eigen::VectorXd>(draw.data(), L);
  w.remainder = 0.0;
  return w;
}

// ---------------------------------------------------------------------------
// Model state, joint density, blocked sweep
// ---------------------------------------------------------------------------

struct ModelState {
  GlobalWeights weights;
  TransitionMatrix trans;            // L x L; initial row kept equal to folded beta
  EmissionParams emit;               // L states
  StateSequence labels;
  Eigen::MatrixXi transition_counts; // L x L
  Eigen::MatrixXi aux_table_counts;  // L x L, sticky-corrected
};

namespace detail {

inline double clamped_log(double x) { return std::log(std::max(x, 1e-300)); }

}  // namespace detail

// Complete-data log density log p(labels, obs | beta, pi, theta): the label
// chain under the current transition rows plus the emission likelihood.
// Parameter prior terms are deliberately excluded; with sub-1 Dirichlet
// concentrations their near-boundary densities would dwarf the data term and
// turn best-sample selection into prior noise. Used to pick the point
// segmentation and to trace sampler progress.
inline double joint_log_density(const ModelState& state, const ObsMatrix& obs,
                                const Hyperparameters& hyper) {
  (void)hyper;
  const Eigen::VectorXd b = state.weights.folded();
  double lp = 0.0;

  const auto& z = state.labels.labels;
  lp += detail::clamped_log(b[z.front()]);
  for (std::size_t t = 0; t + 1 < z.size(); ++t) {
    lp += detail::clamped_log(state.trans.rows(z[t], z[t + 1]));
  }

  std::vector<GaussianDensity> dens;
  dens.reserve(state.emit.size());
  for (const auto& g : state.emit) dens.emplace_back(g);
  for (std::size_t t = 0; t < z.size(); ++t) {
    lp += dens[static_cast<std::size_t>(z[t])].log_density(
        obs.row(static_cast<Eigen::Index>(t)).transpose());
  }
  return lp;
}

// One full blocked Gibbs sweep: labels -> transition counts -> auxiliary
// table counts -> global weights -> transition rows -> emission parameters.
inline ModelState gibbs_sweep(const ModelState& prev, const ObsMatrix& obs,
                              const Hyperparameters& hyper, Rng& rng) {
  const int L = hyper.truncation_L;
  ModelState next;

  next.labels = sample_state_sequence(obs, prev.trans, prev.emit, rng);
  next.transition_counts = count_transitions(next.labels.labels, L);
  next.aux_table_counts =
      sample_aux_counts(next.transition_counts, prev.weights, hyper.alpha, hyper.kappa, rng);
  next.weights = resample_global_weights(next.aux_table_counts, hyper.gamma, rng);

  next.trans.rows.resize(L, L);
  for (int i = 0; i < L; ++i) {
    next.trans.rows.row(i) =
        sample_transition_row(i, next.weights, hyper.alpha, hyper.kappa,
                              next.transition_counts.row(i).transpose(), rng)
            .transpose();
  }
  next.trans.initial = next.weights.folded();

  next.emit = sample_emission_params(obs, next.labels.labels, hyper, rng);
  return next;
}

// Diffuse, seed-reproducible start: uniform labels over min(L, 10) states,
// stick-breaking weights, then one parameter pass conditioned on them.
inline ModelState init_state(const ObsMatrix& obs, const Hyperparameters& hyper, Rng& rng) {
  const int L = hyper.truncation_L;
  ModelState st;
  const int k0 = std::min(L, 10);
  st.labels.labels.resize(static_cast<std::size_t>(obs.rows()));
  for (int& z : st.labels.labels) z = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(k0)));
  st.weights = break_sticks(hyper.gamma, L, rng);
  st.transition_counts = count_transitions(st.labels.labels, L);
  st.aux_table_counts =
      sample_aux_counts(st.transition_counts, st.weights, hyper.alpha, hyper.kappa, rng);
  st.trans.rows.resize(L, L);
  for (int i = 0; i < L; ++i) {
    st.trans.rows.row(i) = sample_transition_row(i, st.weights, hyper.alpha, hyper.kappa,
                                                 st.transition_counts.row(i).transpose(), rng)
                               .transpose();
  }
  st.trans.initial = st.weights.folded();
  st.emit = sample_emission_params(obs, st.labels.labels, hyper, rng);
  return st;
}

struct FitResult {
  ModelState final_state;
  std::vector<int> labels_map;   // dense ids, descending occupancy
  int occupied_clusters = 0;
  std::vector<double> trace;     // joint log density per iteration
  double best_joint = -std::numeric_limits<double>::infinity();
  int best_iteration = -1;       // 1-based sweep index of the reported sample
  std::uint64_t seed = 0;
  Hyperparameters hyper;
  int iterations = 0;
  int burn_in = 0;
};

// Relabel to dense 0..K-1 ids ordered by descending occupancy (ties by
// ascending original id).
inline std::vector<int> relabel_dense(std::span<const int> labels, int truncation) {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(truncation), 0);
  for (int z : labels) ++counts[static_cast<std::size_t>(z)];
  std::vector<int> order(static_cast<std::size_t>(truncation));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (counts[static_cast<std::size_t>(a)] != counts[static_cast<std::size_t>(b)]) {
      return counts[static_cast<std::size_t>(a)] > counts[static_cast<std::size_t>(b)];
    }
    return a < b;
  });
  std::vector<int> dense(static_cast<std::size_t>(truncation), -1);
  int next_id = 0;
  for (int old : order) {
    if (counts[static_cast<std::size_t>(old)] > 0) dense[static_cast<std::size_t>(old)] = next_id++;
  }
  std::vector<int> out(labels.size());
  for (std::size_t t = 0; t < labels.size(); ++t) {
    out[t] = dense[static_cast<std::size_t>(labels[t])];
  }
  return out;
}

// Full blocked-Gibbs run. The reported segmentation is the post-burn-in
// sample with the highest joint log density, not the last sample.
inline FitResult fit(const DrivingSeries& series, const Hyperparameters& hyper, int iterations,
                     int burn_in, std::uint64_t seed) {
  validate(hyper);
  if (burn_in < 0 || iterations <= burn_in) {
    fail(errc::bad_config, "iterations (" + std::to_string(iterations) +
                               ") must exceed burn_in (" + std::to_string(burn_in) + ")");
  }
  const ObsMatrix& obs = series.channels;

  Rng init_rng = Rng::substream(seed, "init");
  Rng sweep_rng = Rng::substream(seed, "sweeps");

  FitResult result;
  result.seed = seed;
  result.hyper = hyper;
  result.iterations = iterations;
  result.burn_in = burn_in;

  ModelState state = init_state(obs, hyper, init_rng);
  std::vector<int> best_labels;
  for (int it = 1; it <= iterations; ++it) {
    try {
      state = gibbs_sweep(state, obs, hyper, sweep_rng);
    } catch (const error& e) {
      fail(e.code(), e.message() + " (at iteration " + std::to_string(it) + ")");
    }
    const double joint = joint_log_density(state, obs, hyper);
    result.trace.push_back(joint);
    if (it > burn_in && joint > result.best_joint) {
      result.best_joint = joint;
      result.best_iteration = it;
      best_labels = state.labels.labels;
    }
  }
  result.final_state = std::move(state);
  result.labels_map = relabel_dense(best_labels, hyper.truncation_L);
  int max_id = -1;
  for (int z : result.labels_map) max_id = std::max(max_id, z);
  result.occupied_clusters = max_id + 1;
  return result;
}

// ---------------------------------------------------------------------------
// Segmentation utilities
// ---------------------------------------------------------------------------

// Maximal run of one cluster id over the half-open timestep interval
// [begin, end).
struct Segment {
  int cluster_id = 0;
  Eigen::Index begin = 0;
  Eigen::Index end = 0;

  Eigen::Index length() const { return end - begin; }
};

inline std::vector<Segment> extract_segments(std::span<const int> labels) {
  if (labels.empty()) fail(errc::empty_input, "no labels to segment");
  std::vector<Segment> out;
  Segment cur{labels[0], 0, 1};
  for (std::size_t t = 1; t < labels.size(); ++t) {
    if (labels[t] == cur.cluster_id) {
      ++cur.end;
    } else {
      out.push_back(cur);
      cur = {labels[t], static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(t + 1)};
    }
  }
  out.push_back(cur);
  return out;
}

// Per-cluster aggregates in the units of the series passed in.
struct ClusterSummary {
  int cluster_id = 0;
  double occupancy = 0.0;
  std::int64_t count = 0;
  Eigen::Vector4d mean = Eigen::Vector4d::Zero();
  Eigen::Vector4d stddev = Eigen::Vector4d::Zero();
  std::vector<Segment> segments;
};

inline std::vector<ClusterSummary> summarize_clusters(const DrivingSeries& series,
                                                      std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != series.size()) {
    fail(errc::length_mismatch, "labels length " + std::to_string(labels.size()) +
                                    " != series length " + std::to_string(series.size()));
  }
  const auto segments = extract_segments(labels);
  int max_id = -1;
  for (int z : labels) {
    if (z < 0) fail(errc::unknown_cluster, "negative cluster id");
    max_id = std::max(max_id, z);
  }

  std::vector<ClusterSummary> out;
  for (int id = 0; id <= max_id; ++id) {
    ClusterSummary s;
    s.cluster_id = id;
    Eigen::Vector4d sum = Eigen::Vector4d::Zero();
    for (std::size_t t = 0; t < labels.size(); ++t) {
      if (labels[t] != id) continue;
      ++s.count;
      sum += series.channels.row(static_cast<Eigen::Index>(t)).transpose();
    }
    if (s.count == 0) continue;  // ids with no frames are omitted
    s.mean = sum / static_cast<double>(s.count);
    Eigen::Vector4d ss = Eigen::Vector4d::Zero();
    for (std::size_t t = 0; t < labels.size(); ++t) {
      if (labels[t] != id) continue;
      const Eigen::Vector4d d = series.channels.row(static_cast<Eigen::Index>(t)).transpose() - s.mean;
      ss += d.cwiseProduct(d);
    }
    s.stddev = (ss / static_cast<double>(std::max<std::int64_t>(1, s.count - 1))).cwiseSqrt();
    s.occupancy = static_cast<double>(s.count) / static_cast<double>(labels.size());
    for (const Segment& seg : segments) {
      if (seg.cluster_id == id) s.segments.push_back(seg);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace drivestyle
