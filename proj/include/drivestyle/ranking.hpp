#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "drivestyle/errors.hpp"
#include "drivestyle/hdphmm.hpp"
#include "drivestyle/series.hpp"

namespace drivestyle {

// Urgency levels from the four-way a_f sign split plus the stop-prediction
// sub-levels. L3_1/L4_1 are the stopping variants.
enum class Level { L1, L2, L3_1, L3_2, L4_1, L4_2 };

enum class CoarseLevel { VerySafe, Safe, Dangerous, VeryDangerous };

inline const char* to_string(Level level) {
  switch (level) {
    case Level::L1: return "L1";
    case Level::L2: return "L2";
    case Level::L3_1: return "L3_1";
    case Level::L3_2: return "L3_2";
    case Level::L4_1: return "L4_1";
    case Level::L4_2: return "L4_2";
  }
  return "?";
}

inline const char* to_string(CoarseLevel coarse) {
  switch (coarse) {
    case CoarseLevel::VerySafe: return "VerySafe";
    case CoarseLevel::Safe: return "Safe";
    case CoarseLevel::Dangerous: return "Dangerous";
    case CoarseLevel::VeryDangerous: return "VeryDangerous";
  }
  return "?";
}

inline CoarseLevel coarse_of(Level level) {
  switch (level) {
    case Level::L1: return CoarseLevel::VerySafe;
    case Level::L2: return CoarseLevel::Safe;
    case Level::L3_1:
    case Level::L3_2: return CoarseLevel::Dangerous;
    case Level::L4_1:
    case Level::L4_2: return CoarseLevel::VeryDangerous;
  }
  return CoarseLevel::VeryDangerous;
}

// Safest-first position of each level: L1 < L2 < L3_2 < L3_1 < L4_2 < L4_1.
// The stopping sub-levels are the riskier ones within their pair.
inline int level_safety_rank(Level level) {
  switch (level) {
    case Level::L1: return 0;
    case Level::L2: return 1;
    case Level::L3_2: return 2;
    case Level::L3_1: return 3;
    case Level::L4_2: return 4;
    case Level::L4_1: return 5;
  }
  return 5;
}

// First/second-half mean signs of a_f over a segment. P stands for
// accelerating-or-flat (mean above -deadband), N for braking.
enum class SignPattern { PP, PN, NP, NN };

inline const char* to_string(SignPattern p) {
  switch (p) {
    case SignPattern::PP: return "PP";
    case SignPattern::PN: return "PN";
    case SignPattern::NP: return "NP";
    case SignPattern::NN: return "NN";
  }
  return "?";
}

// Danger order used to break pattern-vote ties: NN > NP > PN > PP.
inline int pattern_danger(SignPattern p) {
  switch (p) {
    case SignPattern::PP: return 0;
    case SignPattern::PN: return 1;
    case SignPattern::NP: return 2;
    case SignPattern::NN: return 3;
  }
  return 3;
}

struct RankingConfig {
  double deadband = 0.05;       // m/s^2, |mean a_f| below this counts as non-braking
  double stop_threshold = 0.5;  // m/s, observed minimum at or below means "will stop"
};

namespace detail {

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// First half gets the middle sample of odd-length segments, so it is never
// empty; a single-sample segment reuses its first-half sign for both halves.
inline std::size_t half_split(std::size_t n) { return (n + 1) / 2; }

}  // namespace detail

// Sign pattern of one segment's a_f trace.
inline SignPattern segment_sign_pattern(std::span<const double> segment_af, double deadband) {
  if (segment_af.empty()) fail(errc::empty_cluster, "segment has no samples");
  const std::size_t split = detail::half_split(segment_af.size());
  const double first_mean = detail::mean_of(segment_af.subspan(0, split));
  const bool first_neg = first_mean < -deadband;
  bool second_neg = first_neg;
  if (split < segment_af.size()) {
    second_neg = detail::mean_of(segment_af.subspan(split)) < -deadband;
  }
  if (!first_neg && !second_neg) return SignPattern::PP;
  if (!first_neg && second_neg) return SignPattern::PN;
  if (first_neg && !second_neg) return SignPattern::NP;
  return SignPattern::NN;
}

// Majority vote over a cluster's segments; ties resolve toward the more
// dangerous pattern.
inline SignPattern classify_sign_pattern(std::span<const std::span<const double>> segments_af,
                                         double deadband) {
  if (segments_af.empty()) fail(errc::empty_cluster, "cluster has no segments");
  std::array<int, 4> votes{};
  for (const auto& seg : segments_af) {
    ++votes[static_cast<std::size_t>(pattern_danger(segment_sign_pattern(seg, deadband)))];
  }
  int best = 0;
  for (int danger = 1; danger < 4; ++danger) {
    if (votes[static_cast<std::size_t>(danger)] >= votes[static_cast<std::size_t>(best)]) {
      best = danger;  // >= keeps the more dangerous pattern on ties
    }
  }
  switch (best) {
    case 0: return SignPattern::PP;
    case 1: return SignPattern::PN;
    case 2: return SignPattern::NP;
    default: return SignPattern::NN;
  }
}

// True when the observed minimum velocity reaches the stop threshold
// (boundary inclusive). No kinematic extrapolation.
inline bool will_stop(std::span<const double> vf_part, double stop_threshold) {
  if (vf_part.empty()) fail(errc::empty_part, "no velocities to test for stopping");
  double lowest = vf_part.front();
  for (double v : vf_part) lowest = std::min(lowest, v);
  return lowest <= stop_threshold;
}

struct LevelAssignment {
  int cluster_id = 0;
  Level level = Level::L1;
  CoarseLevel coarse = CoarseLevel::VerySafe;
  double score = 0.0;     // mean v_f for L1/L2, mean decelerating a_f for L3/L4
  double occupancy = 0.0;
};

// Runs the decision tree for one cluster. Works in the units of the series
// passed in, which must be original physical units for the thresholds to
// mean anything.
inline LevelAssignment assign_level(const DrivingSeries& series, const ClusterSummary& cluster,
                                    const RankingConfig& config = {}) {
  if (cluster.segments.empty() || cluster.count == 0) {
    fail(errc::empty_cluster, "cluster " + std::to_string(cluster.cluster_id) + " has no frames");
  }

  std::vector<std::vector<double>> af_segments;
  std::vector<double> af_all, vf_all;
  std::vector<double> af_first, vf_first;  // pooled first halves
  for (const Segment& seg : cluster.segments) {
    std::vector<double> af;
    for (Eigen::Index t = seg.begin; t < seg.end; ++t) {
      af.push_back(series.channels(t, kAf));
      af_all.push_back(series.channels(t, kAf));
      vf_all.push_back(series.channels(t, kVf));
    }
    const std::size_t split = detail::half_split(af.size());
    for (std::size_t i = 0; i < split; ++i) {
      af_first.push_back(af[i]);
      vf_first.push_back(series.channels(seg.begin + static_cast<Eigen::Index>(i), kVf));
    }
    af_segments.push_back(std::move(af));
  }
  std::vector<std::span<const double>> views;
  views.reserve(af_segments.size());
  for (const auto& seg : af_segments) views.emplace_back(seg);

  const SignPattern pattern = classify_sign_pattern(views, config.deadband);

  LevelAssignment a;
  a.cluster_id = cluster.cluster_id;
  a.occupancy = cluster.occupancy;
  switch (pattern) {
    case SignPattern::PP:
      a.level = Level::L1;
      a.score = detail::mean_of(vf_all);
      break;
    case SignPattern::PN:
      // safe at first: compare velocity over the accelerating (first) part
      a.level = Level::L2;
      a.score = detail::mean_of(vf_first);
      break;
    case SignPattern::NP:
      // decelerating first part decides the sub-level and the score
      a.level = will_stop(vf_first, config.stop_threshold) ? Level::L3_1 : Level::L3_2;
      a.score = detail::mean_of(af_first);
      break;
    case SignPattern::NN:
      a.level = will_stop(vf_all, config.stop_threshold) ? Level::L4_1 : Level::L4_2;
      a.score = detail::mean_of(af_all);
      break;
  }
  a.coarse = coarse_of(a.level);
  return a;
}

struct UrgencyRanking {
  std::vector<LevelAssignment> order;            // safest first
  std::array<double, 4> coarse_occupancy{};      // indexed by CoarseLevel
};

// Total order: level rank first, then mean velocity ascending inside L1/L2
// (slower is safer), mean deceleration descending inside L3/L4 (milder
// braking is safer), cluster id as the final tie-break.
inline UrgencyRanking rank_clusters(std::vector<LevelAssignment> assignments) {
  if (assignments.empty()) fail(errc::empty_cluster, "nothing to rank");
  std::set<int> ids;
  for (const auto& a : assignments) {
    if (!ids.insert(a.cluster_id).second) {
      fail(errc::duplicate_cluster, "cluster id " + std::to_string(a.cluster_id) + " repeated");
    }
  }
  std::sort(assignments.begin(), assignments.end(),
            [](const LevelAssignment& a, const LevelAssignment& b) {
              const int ra = level_safety_rank(a.level);
              const int rb = level_safety_rank(b.level);
              if (ra != rb) return ra < rb;
              if (a.score != b.score) {
                const bool velocity_level = a.level == Level::L1 || a.level == Level::L2;
                return velocity_level ? a.score < b.score : a.score > b.score;
              }
              return a.cluster_id < b.cluster_id;
            });
  UrgencyRanking r;
  r.order = std::move(assignments);
  for (const auto& a : r.order) {
    r.coarse_occupancy[static_cast<std::size_t>(a.coarse)] += a.occupancy;
  }
  return r;
}

// Convenience: summarize, assign, rank in one step.
inline UrgencyRanking rank_series(const DrivingSeries& series, std::span<const int> labels,
                                  const RankingConfig& config = {}) {
  const auto summaries = summarize_clusters(series, labels);
  std::vector<LevelAssignment> assignments;
  assignments.reserve(summaries.size());
  for (const auto& s : summaries) assignments.push_back(assign_level(series, s, config));
  return rank_clusters(std::move(assignments));
}

}  // namespace drivestyle
