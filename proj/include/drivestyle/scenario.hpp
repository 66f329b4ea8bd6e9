#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "drivestyle/errors.hpp"
#include "drivestyle/ranking.hpp"
#include "drivestyle/series.hpp"

namespace drivestyle {

enum class ObjectType { car, van, truck, pedestrian, cyclist, tram, misc, none };

inline const char* to_string(ObjectType t) {
  switch (t) {
    case ObjectType::car: return "car";
    case ObjectType::van: return "van";
    case ObjectType::truck: return "truck";
    case ObjectType::pedestrian: return "pedestrian";
    case ObjectType::cyclist: return "cyclist";
    case ObjectType::tram: return "tram";
    case ObjectType::misc: return "misc";
    case ObjectType::none: return "none";
  }
  return "?";
}

// One labeled 3D box in the sensor frame (x right, y down, z forward).
struct BoundingBox {
  int frame = 0;
  int track_id = -1;
  ObjectType type = ObjectType::misc;
  Eigen::Vector3d location = Eigen::Vector3d::Zero();
  double observation_angle = 0.0;  // radians in [-pi, pi]
};

// Per-frame scene features: box count plus distance/type/angle of the
// nearest box.
struct ScenarioFrame {
  int number = 0;
  double distance = std::numeric_limits<double>::infinity();
  ObjectType type = ObjectType::none;
  double angle = 0.0;
  std::optional<int> nearest_id;
};

namespace detail {

inline std::optional<ObjectType> object_type_from(std::string_view name) {
  std::string lower;
  lower.reserve(name.size());
  for (char c : name) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (lower == "car") return ObjectType::car;
  if (lower == "van") return ObjectType::van;
  if (lower == "truck") return ObjectType::truck;
  if (lower == "pedestrian") return ObjectType::pedestrian;
  if (lower == "person_sitting") return ObjectType::pedestrian;  // KITTI subtype
  if (lower == "cyclist") return ObjectType::cyclist;
  if (lower == "tram") return ObjectType::tram;
  if (lower == "misc") return ObjectType::misc;
  return std::nullopt;
}

}  // namespace detail

// KITTI tracking label format, one box per line:
// frame track_id type truncated occluded alpha bbox(4) dims(3) location(3) rot_y
// DontCare rows are skipped. Returns boxes grouped by frame index.
inline std::vector<std::vector<BoundingBox>> parse_label_frames(std::istream& in) {
  std::vector<std::vector<BoundingBox>> frames;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = detail::split_ws(detail::strip_cr(line));
    if (fields.empty()) continue;
    if (fields.size() < 17) {
      fail(errc::malformed_line, "label line " + std::to_string(line_no) + " has " +
                                     std::to_string(fields.size()) + " fields, need 17");
    }
    std::string type_name(fields[2]);
    if (type_name == "DontCare") continue;
    const auto type = detail::object_type_from(type_name);
    if (!type) {
      fail(errc::unknown_type, "unknown object type '" + type_name + "' at line " +
                                   std::to_string(line_no));
    }
    BoundingBox box;
    box.frame = static_cast<int>(detail::parse_double(fields[0], errc::malformed_line, line_no));
    box.track_id = static_cast<int>(detail::parse_double(fields[1], errc::malformed_line, line_no));
    box.type = *type;
    box.observation_angle = detail::parse_double(fields[5], errc::malformed_line, line_no);
    for (int c = 0; c < 3; ++c) {
      box.location[c] = detail::parse_double(fields[static_cast<std::size_t>(13 + c)],
                                             errc::malformed_line, line_no);
    }
    if (box.frame < 0) fail(errc::malformed_line, "negative frame at line " + std::to_string(line_no));
    if (!box.location.allFinite()) {
      fail(errc::malformed_line, "non-finite location at line " + std::to_string(line_no));
    }
    if (std::abs(box.observation_angle) > std::numbers::pi + 1e-9) {
      fail(errc::malformed_line, "angle outside [-pi, pi] at line " + std::to_string(line_no));
    }
    if (static_cast<std::size_t>(box.frame) >= frames.size()) {
      frames.resize(static_cast<std::size_t>(box.frame) + 1);
    }
    frames[static_cast<std::size_t>(box.frame)].push_back(box);
  }
  return frames;
}

// Ground-plane distance sqrt(x^2 + z^2); KITTI's y axis is vertical.
inline double ground_distance(const BoundingBox& box) {
  return std::hypot(box.location[0], box.location[2]);
}

// Per-frame features over exactly frame_count frames; unlabeled frames get
// number=0 with the infinite-distance sentinel.
inline std::vector<ScenarioFrame> extract_features(
    std::span<const std::vector<BoundingBox>> boxes_per_frame, std::size_t frame_count) {
  if (boxes_per_frame.size() > frame_count) {
    fail(errc::length_mismatch, "scene has " + std::to_string(boxes_per_frame.size()) +
                                    " labeled frames but only " + std::to_string(frame_count) +
                                    " kinematic frames");
  }
  std::vector<ScenarioFrame> out(frame_count);
  for (std::size_t f = 0; f < boxes_per_frame.size(); ++f) {
    const auto& boxes = boxes_per_frame[f];
    ScenarioFrame& frame = out[f];
    frame.number = static_cast<int>(boxes.size());
    const BoundingBox* nearest = nullptr;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& box : boxes) {
      const double d = ground_distance(box);
      if (d < best) {
        best = d;
        nearest = &box;
      }
    }
    if (nearest != nullptr) {
      frame.distance = best;
      frame.type = nearest->type;
      frame.angle = nearest->observation_angle;
      frame.nearest_id = nearest->track_id;
    }
  }
  return out;
}

// One joined frame of the risk timeline.
struct RiskFrame {
  double t = 0.0;
  int cluster_id = 0;
  Level level = Level::L1;
  CoarseLevel coarse = CoarseLevel::VerySafe;
  ScenarioFrame scene;
};

struct RiskTimeline {
  std::vector<RiskFrame> frames;
};

// Frame-aligned join of cluster labels, their urgency levels, and the scene
// features.
inline RiskTimeline build_risk_timeline(const Eigen::VectorXd& timestamps,
                                        std::span<const int> labels, const UrgencyRanking& ranking,
                                        std::span<const ScenarioFrame> scenes) {
  if (labels.size() != scenes.size() ||
      static_cast<std::size_t>(timestamps.size()) != labels.size()) {
    fail(errc::length_mismatch, "labels (" + std::to_string(labels.size()) + "), scenes (" +
                                    std::to_string(scenes.size()) + ") and timestamps (" +
                                    std::to_string(timestamps.size()) + ") must align");
  }
  std::map<int, const LevelAssignment*> by_id;
  for (const auto& a : ranking.order) by_id[a.cluster_id] = &a;

  RiskTimeline tl;
  tl.frames.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto it = by_id.find(labels[i]);
    if (it == by_id.end()) {
      fail(errc::unknown_cluster, "cluster " + std::to_string(labels[i]) +
                                      " at frame " + std::to_string(i) + " missing from ranking");
    }
    RiskFrame f;
    f.t = timestamps[static_cast<Eigen::Index>(i)];
    f.cluster_id = labels[i];
    f.level = it->second->level;
    f.coarse = it->second->coarse;
    f.scene = scenes[i];
    tl.frames.push_back(f);
  }
  return tl;
}

// Pearson / Spearman coefficients with explicit degeneracy flags.
struct Correlation {
  std::optional<double> value;
  bool insufficient_data = false;
  bool insufficient_variance = false;
};

namespace detail {

inline Correlation pearson(std::span<const double> x, std::span<const double> y) {
  Correlation c;
  if (x.size() < 3) {
    c.insufficient_data = true;
    return c;
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) {
    c.insufficient_variance = true;
    return c;
  }
  c.value = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  return c;
}

// Average ranks (ties share the mean rank), then Pearson on the ranks.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size(), 0.0);
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double shared = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = shared;
    i = j + 1;
  }
  return ranks;
}

inline Correlation spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() < 3) {
    Correlation c;
    c.insufficient_data = true;
    return c;
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

}  // namespace detail

struct CorrelationPair {
  Correlation pearson_vf_number, pearson_vf_distance;
  Correlation spearman_vf_number, spearman_vf_distance;
};

struct LevelSceneStats {
  std::optional<double> mean_number;
  std::optional<double> mean_distance;  // over frames that have a nearest box
};

// The scene-vs-style relationship report: global and per-cluster coefficients
// of v_f against Number and Distance, per-coarse-level scene means, per-type
// frequencies of the nearest object, and the nearest-object change count.
struct Report {
  CorrelationPair global;
  std::map<int, CorrelationPair> per_cluster;
  std::map<CoarseLevel, LevelSceneStats> per_level;
  std::map<ObjectType, std::int64_t> nearest_type_counts;
  std::int64_t nearest_changes = 0;
};

namespace detail {

inline CorrelationPair correlate_frames(std::span<const double> vf,
                                        std::span<const ScenarioFrame> scenes,
                                        std::span<const std::size_t> rows) {
  std::vector<double> v_all, num_all, v_near, dist_near;
  for (std::size_t i : rows) {
    v_all.push_back(vf[i]);
    num_all.push_back(static_cast<double>(scenes[i].number));
    if (scenes[i].number > 0) {  // sentinel frames never enter distance stats
      v_near.push_back(vf[i]);
      dist_near.push_back(scenes[i].distance);
    }
  }
  CorrelationPair p;
  p.pearson_vf_number = pearson(v_all, num_all);
  p.spearman_vf_number = spearman(v_all, num_all);
  p.pearson_vf_distance = pearson(v_near, dist_near);
  p.spearman_vf_distance = spearman(v_near, dist_near);
  return p;
}

}  // namespace detail

inline Report correlation_report(const DrivingSeries& series,
                                 std::span<const ScenarioFrame> scenes,
                                 const RiskTimeline& timeline) {
  const std::size_t n = static_cast<std::size_t>(series.size());
  if (scenes.size() != n || timeline.frames.size() != n) {
    fail(errc::length_mismatch, "series, scenes, and timeline must have equal length");
  }
  std::vector<double> vf(n);
  for (std::size_t i = 0; i < n; ++i) vf[i] = series.channels(static_cast<Eigen::Index>(i), kVf);

  Report report;
  std::vector<std::size_t> all_rows(n);
  for (std::size_t i = 0; i < n; ++i) all_rows[i] = i;
  report.global = detail::correlate_frames(vf, scenes, all_rows);

  std::map<int, std::vector<std::size_t>> cluster_rows;
  std::map<CoarseLevel, std::vector<std::size_t>> level_rows;
  for (std::size_t i = 0; i < n; ++i) {
    cluster_rows[timeline.frames[i].cluster_id].push_back(i);
    level_rows[timeline.frames[i].coarse].push_back(i);
  }
  for (const auto& [id, rows] : cluster_rows) {
    report.per_cluster[id] = detail::correlate_frames(vf, scenes, rows);
  }
  for (const auto& [coarse, rows] : level_rows) {
    LevelSceneStats stats;
    double num_sum = 0.0, dist_sum = 0.0;
    std::int64_t dist_count = 0;
    for (std::size_t i : rows) {
      num_sum += scenes[i].number;
      if (scenes[i].number > 0) {
        dist_sum += scenes[i].distance;
        ++dist_count;
      }
    }
    stats.mean_number = num_sum / static_cast<double>(rows.size());
    if (dist_count > 0) stats.mean_distance = dist_sum / static_cast<double>(dist_count);
    report.per_level[coarse] = stats;
  }

  bool have_prev = false;
  int prev_id = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (scenes[i].nearest_id) {
      ++report.nearest_type_counts[scenes[i].type];
      if (have_prev && prev_id != *scenes[i].nearest_id) ++report.nearest_changes;
      prev_id = *scenes[i].nearest_id;
      have_prev = true;
    } else {
      have_prev = false;
    }
  }
  return report;
}

}  // namespace drivestyle
