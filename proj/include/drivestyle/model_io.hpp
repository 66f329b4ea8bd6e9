#pragma once

#include <json.hpp>

#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "drivestyle/errors.hpp"
#include "drivestyle/hdphmm.hpp"
#include "drivestyle/ranking.hpp"
#include "drivestyle/scenario.hpp"
#include "drivestyle/series.hpp"

namespace drivestyle {

using nlohmann::json;

namespace detail {

inline json vec_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline json vec4_to_json(const Eigen::Vector4d& v) {
  return json::array({v[0], v[1], v[2], v[3]});
}

// row-major flattening for matrices
inline json mat_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::VectorXd vec_from_json(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

inline Eigen::Vector4d vec4_from_json(const json& j) {
  if (j.size() != 4) fail(errc::bad_config, "expected a 4-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

inline Eigen::MatrixXd mat_from_json(const json& j) {
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = j[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

inline Eigen::Matrix4d mat4_from_json(const json& j) {
  const Eigen::MatrixXd m = mat_from_json(j);
  if (m.rows() != 4 || m.cols() != 4) fail(errc::bad_config, "expected a 4x4 matrix");
  return m;
}

}  // namespace detail

inline json hyper_to_json(const Hyperparameters& h) {
  return json{{"alpha", h.alpha},
              {"gamma", h.gamma},
              {"kappa", h.kappa},
              {"niw_mean0", detail::vec4_to_json(h.niw_mean0)},
              {"niw_scale0", h.niw_scale0},
              {"niw_dof0", h.niw_dof0},
              {"niw_psi0", detail::mat_to_json(h.niw_psi0)},
              {"truncation_L", h.truncation_L},
              {"emission_mode", h.diagonal_emissions ? "diagonal" : "full"}};
}

inline Hyperparameters hyper_from_json(const json& j) {
  Hyperparameters h;
  h.alpha = j.at("alpha").get<double>();
  h.gamma = j.at("gamma").get<double>();
  h.kappa = j.at("kappa").get<double>();
  h.niw_mean0 = detail::vec4_from_json(j.at("niw_mean0"));
  h.niw_scale0 = j.at("niw_scale0").get<double>();
  h.niw_dof0 = j.at("niw_dof0").get<double>();
  h.niw_psi0 = detail::mat4_from_json(j.at("niw_psi0"));
  h.truncation_L = j.at("truncation_L").get<int>();
  h.diagonal_emissions = j.at("emission_mode").get<std::string>() == "diagonal";
  return h;
}

// Full model document: config echo, final sampler state, the dense
// segmentation labels, and the joint-density trace.
inline json model_to_json(const FitResult& fit, const ChannelTransform& transform) {
  json config = hyper_to_json(fit.hyper);
  config["iterations"] = fit.iterations;
  config["burn_in"] = fit.burn_in;
  config["standardize"] = json{{"enabled", transform.enabled},
                               {"mean", detail::vec4_to_json(transform.mean)},
                               {"scale", detail::vec4_to_json(transform.scale)}};

  json means = json::array();
  json covs = json::array();
  for (const auto& g : fit.final_state.emit) {
    means.push_back(detail::vec4_to_json(g.mean));
    covs.push_back(detail::mat_to_json(g.cov));
  }

  return json{{"config", std::move(config)},
              {"weights", json{{"beta", detail::vec_to_json(fit.final_state.weights.beta)},
                               {"remainder", fit.final_state.weights.remainder}}},
              {"trans", json{{"rows", detail::mat_to_json(fit.final_state.trans.rows)},
                             {"initial", detail::vec_to_json(fit.final_state.trans.initial)}}},
              {"emit", json{{"means", std::move(means)}, {"covariances", std::move(covs)}}},
              {"labels", fit.labels_map},
              {"trace", fit.trace},
              {"best_joint", fit.best_joint},
              {"best_iteration", fit.best_iteration},
              {"occupied_clusters", fit.occupied_clusters},
              {"seed", fit.seed}};
}

// Segmentation file: CSV `t,cluster_id`.
inline void write_segmentation_csv(std::ostream& out, const Eigen::VectorXd& timestamps,
                                   std::span<const int> labels) {
  if (static_cast<std::size_t>(timestamps.size()) != labels.size()) {
    fail(errc::length_mismatch, "timestamps and labels differ in length");
  }
  out << "t,cluster_id\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << detail::format_double(timestamps[static_cast<Eigen::Index>(i)]) << ',' << labels[i] << '\n';
  }
}

struct Segmentation {
  Eigen::VectorXd timestamps;
  std::vector<int> labels;
};

inline Segmentation read_segmentation_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) fail(errc::empty_input, "no header row");
  if (detail::strip_cr(line) != "t,cluster_id") {
    fail(errc::malformed_row, "expected header 't,cluster_id', got '" + line + "'");
  }
  std::vector<double> ts;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = detail::strip_cr(line);
    if (body.empty()) continue;
    const auto cells = detail::split(body, ',');
    if (cells.size() != 2) fail(errc::malformed_row, "expected 2 cells at line " + std::to_string(line_no));
    ts.push_back(detail::parse_double(cells[0], errc::malformed_row, line_no));
    labels.push_back(static_cast<int>(detail::parse_double(cells[1], errc::malformed_row, line_no)));
  }
  if (labels.empty()) fail(errc::empty_input, "no segmentation rows");
  Segmentation seg;
  seg.timestamps = Eigen::Map<const Eigen::VectorXd>(ts.data(), static_cast<Eigen::Index>(ts.size()));
  seg.labels = std::move(labels);
  return seg;
}

// Ranking file: clusters with levels and scores plus the safest-first order.
inline json ranking_to_json(const UrgencyRanking& ranking) {
  json clusters = json::array();
  json order = json::array();
  for (const auto& a : ranking.order) {
    clusters.push_back(json{{"id", a.cluster_id},
                            {"level", to_string(a.level)},
                            {"coarse", to_string(a.coarse)},
                            {"score", a.score},
                            {"occupancy", a.occupancy}});
    order.push_back(a.cluster_id);
  }
  json coarse = json::object();
  const CoarseLevel levels[] = {CoarseLevel::VerySafe, CoarseLevel::Safe, CoarseLevel::Dangerous,
                                CoarseLevel::VeryDangerous};
  for (const CoarseLevel c : levels) {
    coarse[to_string(c)] = ranking.coarse_occupancy[static_cast<std::size_t>(c)];
  }
  return json{{"clusters", std::move(clusters)},
              {"order", std::move(order)},
              {"coarse_occupancy", std::move(coarse)}};
}

inline std::optional<Level> level_from_string(std::string_view s) {
  if (s == "L1") return Level::L1;
  if (s == "L2") return Level::L2;
  if (s == "L3_1") return Level::L3_1;
  if (s == "L3_2") return Level::L3_2;
  if (s == "L4_1") return Level::L4_1;
  if (s == "L4_2") return Level::L4_2;
  return std::nullopt;
}

inline UrgencyRanking ranking_from_json(const json& j) {
  std::vector<LevelAssignment> assignments;
  for (const auto& c : j.at("clusters")) {
    LevelAssignment a;
    a.cluster_id = c.at("id").get<int>();
    const auto level = level_from_string(c.at("level").get<std::string>());
    if (!level) fail(errc::bad_config, "unknown level '" + c.at("level").get<std::string>() + "'");
    a.level = *level;
    a.coarse = coarse_of(a.level);
    a.score = c.at("score").get<double>();
    a.occupancy = c.at("occupancy").get<double>();
    assignments.push_back(a);
  }
  return rank_clusters(std::move(assignments));
}

// Occupancy plot data: CSV `coarse_level,cluster_id,occupancy,rank`.
inline void write_occupancy_csv(std::ostream& out, const UrgencyRanking& ranking) {
  out << "coarse_level,cluster_id,occupancy,rank\n";
  for (std::size_t i = 0; i < ranking.order.size(); ++i) {
    const auto& a = ranking.order[i];
    out << to_string(a.coarse) << ',' << a.cluster_id << ',' << detail::format_double(a.occupancy)
        << ',' << i << '\n';
  }
}

// Timeline file: CSV `t,cluster_id,level,coarse,number,distance,type,angle`,
// with an empty distance field on frames that have no boxes.
inline void write_timeline_csv(std::ostream& out, const RiskTimeline& timeline) {
  out << "t,cluster_id,level,coarse,number,distance,type,angle\n";
  for (const auto& f : timeline.frames) {
    out << detail::format_double(f.t) << ',' << f.cluster_id << ',' << to_string(f.level) << ','
        << to_string(f.coarse) << ',' << f.scene.number << ',';
    if (f.scene.number > 0) out << detail::format_double(f.scene.distance);
    out << ',' << to_string(f.scene.type) << ',' << detail::format_double(f.scene.angle) << '\n';
  }
}

namespace detail {

inline json correlation_to_json(const Correlation& c) {
  if (c.value.has_value()) return *c.value;
  return nullptr;
}

inline void add_pair(json& target, const char* name, const Correlation& c) {
  target[name] = correlation_to_json(c);
  if (c.insufficient_data) target[std::string(name) + "_flag"] = "insufficient_data";
  if (c.insufficient_variance) target[std::string(name) + "_flag"] = "insufficient_variance";
}

inline json correlation_pair_to_json(const CorrelationPair& p) {
  json out = json::object();
  add_pair(out, "pearson_vf_number", p.pearson_vf_number);
  add_pair(out, "pearson_vf_distance", p.pearson_vf_distance);
  add_pair(out, "spearman_vf_number", p.spearman_vf_number);
  add_pair(out, "spearman_vf_distance", p.spearman_vf_distance);
  return out;
}

}  // namespace detail

inline json report_to_json(const Report& report) {
  json per_cluster = json::object();
  for (const auto& [id, pair] : report.per_cluster) {
    per_cluster[std::to_string(id)] = detail::correlation_pair_to_json(pair);
  }
  json per_level = json::object();
  for (const auto& [coarse, stats] : report.per_level) {
    json entry = json::object();
    entry["mean_number"] = stats.mean_number.has_value() ? json(*stats.mean_number) : json(nullptr);
    entry["mean_distance"] =
        stats.mean_distance.has_value() ? json(*stats.mean_distance) : json(nullptr);
    per_level[to_string(coarse)] = std::move(entry);
  }
  json types = json::object();
  for (const auto& [type, count] : report.nearest_type_counts) {
    types[to_string(type)] = count;
  }
  return json{{"global", detail::correlation_pair_to_json(report.global)},
              {"per_cluster", std::move(per_cluster)},
              {"per_level", std::move(per_level)},
              {"nearest_type_counts", std::move(types)},
              {"nearest_changes", report.nearest_changes}};
}

// ---------------------------------------------------------------------------
// small file helpers
// ---------------------------------------------------------------------------

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io_failure, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::io_failure, "cannot write " + path);
  out << content;
  if (!out) fail(errc::io_failure, "failed writing " + path);
}

}  // namespace drivestyle
