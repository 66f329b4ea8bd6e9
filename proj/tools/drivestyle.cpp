// drivestyle: segment driving kinematics into style clusters with a sticky
// HDP-HMM, rank the clusters by urgency, and map scene features onto the
// ranked timeline.
//
// Subcommands: ingest | fit | rank | map | synth. Exit codes: 0 success,
// 2 usage/config/input error, 3 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "drivestyle/errors.hpp"
#include "drivestyle/hdphmm.hpp"
#include "drivestyle/log.hpp"
#include "drivestyle/model_io.hpp"
#include "drivestyle/ranking.hpp"
#include "drivestyle/scenario.hpp"
#include "drivestyle/series.hpp"
#include "drivestyle/synthetic.hpp"

namespace ds = drivestyle;
using nlohmann::json;

namespace {

// Everything the pipeline can be configured with; config-file values are
// loaded first, command-line flags override them.
struct RunConfig {
  std::uint64_t seed = 42;
  double alpha = 1.0;
  double gamma = 1.0;
  double kappa = 10.0;
  int truncation = 20;
  double niw_scale0 = 0.01;
  double niw_dof0 = 7.0;
  std::optional<Eigen::Vector4d> niw_mean0;   // default: data mean
  std::optional<Eigen::Matrix4d> niw_psi0;    // default: 0.75 * data covariance
  int iterations = 300;
  int burn_in = 150;
  int chains = 1;
  bool standardize = false;
  std::string emission_mode = "full";
  double deadband = 0.05;
  double stop_threshold = 0.5;
  int frame_offset = 0;
  double rate_hz = 10.0;
  ds::OxtsColumns oxts;
};

RunConfig load_config_file(const std::string& path) {
  RunConfig c;
  json j;
  try {
    j = json::parse(ds::read_file(path));
  } catch (const json::exception& e) {
    ds::fail(ds::errc::bad_config, "config " + path + ": " + e.what());
  }
  auto get = [&](const char* key, auto& slot) {
    if (j.contains(key)) slot = j.at(key).get<std::decay_t<decltype(slot)>>();
  };
  get("seed", c.seed);
  get("alpha", c.alpha);
  get("gamma", c.gamma);
  get("kappa", c.kappa);
  get("truncation_L", c.truncation);
  get("niw_scale0", c.niw_scale0);
  get("niw_dof0", c.niw_dof0);
  get("iterations", c.iterations);
  get("burn_in", c.burn_in);
  get("chains", c.chains);
  get("standardize", c.standardize);
  get("emission_mode", c.emission_mode);
  get("deadband", c.deadband);
  get("stop_threshold", c.stop_threshold);
  get("frame_offset", c.frame_offset);
  get("rate_hz", c.rate_hz);
  get("oxts_vf", c.oxts.vf);
  get("oxts_vl", c.oxts.vl);
  get("oxts_af", c.oxts.af);
  get("oxts_al", c.oxts.al);
  if (j.contains("niw_mean0")) c.niw_mean0 = ds::detail::vec4_from_json(j.at("niw_mean0"));
  if (j.contains("niw_psi0")) c.niw_psi0 = ds::detail::mat4_from_json(j.at("niw_psi0"));
  return c;
}

ds::DrivingSeries load_series_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) ds::fail(ds::errc::io_failure, "input not found: " + path);
  return ds::parse_csv(in, path);
}

ds::Hyperparameters hyper_from(const RunConfig& cfg, const ds::ObsMatrix& obs) {
  ds::Hyperparameters h = ds::default_hyperparameters(obs);
  h.alpha = cfg.alpha;
  h.gamma = cfg.gamma;
  h.kappa = cfg.kappa;
  h.truncation_L = cfg.truncation;
  h.niw_scale0 = cfg.niw_scale0;
  h.niw_dof0 = cfg.niw_dof0;
  if (cfg.niw_mean0) h.niw_mean0 = *cfg.niw_mean0;
  if (cfg.niw_psi0) h.niw_psi0 = *cfg.niw_psi0;
  if (cfg.emission_mode == "diagonal") {
    h.diagonal_emissions = true;
  } else if (cfg.emission_mode != "full") {
    ds::fail(ds::errc::bad_config, "emission_mode must be 'full' or 'diagonal'");
  }
  return h;
}

json channel_ranges(const ds::DrivingSeries& s) {
  json out = json::object();
  for (int c = 0; c < ds::kChannels; ++c) {
    out[ds::kChannelNames[static_cast<std::size_t>(c)]] =
        json{{"min", s.channels.col(c).minCoeff()}, {"max", s.channels.col(c).maxCoeff()}};
  }
  return out;
}

void print_summary(const json& summary) { std::cout << summary.dump() << std::endl; }

int cmd_ingest(const RunConfig& cfg, const std::string& input, const std::string& format,
               const std::string& out_path, bool derive) {
  ds::DrivingSeries series;
  if (format == "csv") {
    series = load_series_csv(input);
  } else if (format == "oxts") {
    const std::filesystem::path p(input);
    if (std::filesystem::is_directory(p)) {
      series = ds::load_oxts_dir(p, cfg.rate_hz, cfg.oxts);
    } else if (std::filesystem::is_regular_file(p)) {
      std::ifstream in(p);
      std::vector<std::string> lines;
      std::string line;
      while (std::getline(in, line)) {
        if (!line.empty()) lines.push_back(line);
      }
      series = ds::parse_oxts(lines, cfg.rate_hz, cfg.oxts, input);
    } else {
      ds::fail(ds::errc::io_failure, "input not found: " + input);
    }
  } else {
    ds::fail(ds::errc::bad_config, "format must be 'csv' or 'oxts'");
  }
  if (derive) series = ds::derive_accel(series);

  std::ostringstream csv;
  ds::serialize_csv(series, csv);
  ds::write_file(out_path, csv.str());
  ds::log(ds::LogLevel::info, "ingested " + std::to_string(series.size()) + " frames from " + input);
  print_summary(json{{"command", "ingest"},
                     {"rows", series.size()},
                     {"dt", series.dt()},
                     {"channels", channel_ranges(series)},
                     {"out", out_path}});
  return 0;
}

int cmd_fit(const RunConfig& cfg, const std::string& input, const std::string& model_path,
            const std::string& labels_path) {
  const ds::DrivingSeries original = load_series_csv(input);
  const auto [series, transform] = ds::standardize(original, cfg.standardize);
  const ds::Hyperparameters hyper = hyper_from(cfg, series.channels);
  if (cfg.chains < 1) ds::fail(ds::errc::bad_config, "chains must be >= 1");
  if (cfg.burn_in < 0 || cfg.iterations <= cfg.burn_in) {
    ds::fail(ds::errc::bad_config, "iterations must exceed burn_in");
  }

  // chain 0 reuses the master seed so --chains 1 matches a plain run
  std::vector<std::uint64_t> chain_seeds;
  for (int c = 0; c < cfg.chains; ++c) {
    chain_seeds.push_back(c == 0 ? cfg.seed
                                 : ds::mix64(cfg.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(c))));
  }
  std::vector<std::future<ds::FitResult>> futures;
  for (std::uint64_t chain_seed : chain_seeds) {
    futures.push_back(std::async(std::launch::async, [&, chain_seed] {
      return ds::fit(series, hyper, cfg.iterations, cfg.burn_in, chain_seed);
    }));
  }
  std::vector<ds::FitResult> results;
  for (auto& f : futures) results.push_back(f.get());

  // keep the chain with the highest final joint log density
  std::size_t best = 0;
  for (std::size_t c = 1; c < results.size(); ++c) {
    if (results[c].trace.back() > results[best].trace.back()) best = c;
  }
  const ds::FitResult& fit_result = results[best];
  ds::log(ds::LogLevel::info, "kept chain " + std::to_string(best) + " of " +
                                  std::to_string(cfg.chains) + " (final joint " +
                                  std::to_string(fit_result.trace.back()) + ")");

  ds::write_file(model_path, ds::model_to_json(fit_result, transform).dump(2) + "\n");
  std::ostringstream seg;
  ds::write_segmentation_csv(seg, original.timestamps, fit_result.labels_map);
  ds::write_file(labels_path, seg.str());

  print_summary(json{{"command", "fit"},
                     {"rows", original.size()},
                     {"occupied_clusters", fit_result.occupied_clusters},
                     {"iterations", cfg.iterations},
                     {"burn_in", cfg.burn_in},
                     {"chains", cfg.chains},
                     {"seed", cfg.seed},
                     {"best_joint", fit_result.best_joint},
                     {"final_joint", fit_result.trace.back()},
                     {"model", model_path},
                     {"labels", labels_path}});
  return 0;
}

int cmd_rank(const RunConfig& cfg, const std::string& input, const std::string& labels_path,
             const std::string& out_path, const std::string& occupancy_path) {
  const ds::DrivingSeries series = load_series_csv(input);
  std::ifstream labels_in(labels_path);
  if (!labels_in) ds::fail(ds::errc::io_failure, "labels not found: " + labels_path);
  const ds::Segmentation seg = ds::read_segmentation_csv(labels_in);
  if (static_cast<Eigen::Index>(seg.labels.size()) != series.size()) {
    ds::fail(ds::errc::length_mismatch, "labels (" + std::to_string(seg.labels.size()) +
                                            ") do not match series (" +
                                            std::to_string(series.size()) + ")");
  }

  int max_id = 0;
  for (int z : seg.labels) max_id = std::max(max_id, z);
  const auto summaries = ds::summarize_clusters(series, seg.labels);
  if (static_cast<int>(summaries.size()) != max_id + 1) {
    ds::log(ds::LogLevel::warn, "labels reference " + std::to_string(max_id + 1) +
                                    " ids but only " + std::to_string(summaries.size()) +
                                    " clusters have frames; empty ids omitted");
  }
  const ds::RankingConfig rank_cfg{cfg.deadband, cfg.stop_threshold};
  std::vector<ds::LevelAssignment> assignments;
  for (const auto& s : summaries) assignments.push_back(ds::assign_level(series, s, rank_cfg));
  const ds::UrgencyRanking ranking = ds::rank_clusters(std::move(assignments));

  ds::write_file(out_path, ds::ranking_to_json(ranking).dump(2) + "\n");
  std::ostringstream occ;
  ds::write_occupancy_csv(occ, ranking);
  ds::write_file(occupancy_path, occ.str());

  json order = json::array();
  for (const auto& a : ranking.order) order.push_back(a.cluster_id);
  print_summary(json{{"command", "rank"},
                     {"clusters", ranking.order.size()},
                     {"order", std::move(order)},
                     {"out", out_path},
                     {"occupancy", occupancy_path}});
  return 0;
}

int cmd_map(const RunConfig& cfg, const std::string& input, const std::string& labels_path,
            const std::string& ranking_path, const std::string& scene_path,
            const std::string& timeline_path, const std::string& report_path) {
  const ds::DrivingSeries series = load_series_csv(input);
  std::ifstream labels_in(labels_path);
  if (!labels_in) ds::fail(ds::errc::io_failure, "labels not found: " + labels_path);
  const ds::Segmentation seg = ds::read_segmentation_csv(labels_in);
  if (static_cast<Eigen::Index>(seg.labels.size()) != series.size()) {
    ds::fail(ds::errc::length_mismatch, "labels do not match series length");
  }

  json ranking_json;
  try {
    ranking_json = json::parse(ds::read_file(ranking_path));
  } catch (const json::exception& e) {
    ds::fail(ds::errc::bad_config, "ranking " + ranking_path + ": " + e.what());
  }
  const ds::UrgencyRanking ranking = ds::ranking_from_json(ranking_json);

  std::ifstream scene_in(scene_path);
  if (!scene_in) ds::fail(ds::errc::io_failure, "scene labels not found: " + scene_path);
  const auto labeled_frames = ds::parse_label_frames(scene_in);

  // scene frame f lines up with kinematic row f + frame_offset
  std::vector<std::vector<ds::BoundingBox>> shifted;
  for (std::size_t f = 0; f < labeled_frames.size(); ++f) {
    const long long target = static_cast<long long>(f) + cfg.frame_offset;
    if (target < 0) {
      if (!labeled_frames[f].empty()) {
        ds::log(ds::LogLevel::warn, "dropping boxes at scene frame " + std::to_string(f) +
                                        " shifted before the series start");
      }
      continue;
    }
    if (static_cast<std::size_t>(target) >= shifted.size()) {
      shifted.resize(static_cast<std::size_t>(target) + 1);
    }
    shifted[static_cast<std::size_t>(target)] = labeled_frames[f];
  }

  const auto scenes = ds::extract_features(shifted, static_cast<std::size_t>(series.size()));
  const ds::RiskTimeline timeline =
      ds::build_risk_timeline(series.timestamps, seg.labels, ranking, scenes);
  const ds::Report report = ds::correlation_report(series, scenes, timeline);

  std::ostringstream tl;
  ds::write_timeline_csv(tl, timeline);
  ds::write_file(timeline_path, tl.str());
  ds::write_file(report_path, ds::report_to_json(report).dump(2) + "\n");

  print_summary(json{{"command", "map"},
                     {"frames", timeline.frames.size()},
                     {"nearest_changes", report.nearest_changes},
                     {"timeline", timeline_path},
                     {"report", report_path}});
  return 0;
}

int cmd_synth(const RunConfig& cfg, int states, long long length, double self_prob,
              double separation, const std::string& out_path, const std::string& truth_path) {
  if (states < 1) ds::fail(ds::errc::bad_config, "states must be >= 1");
  if (self_prob < 0.0 || self_prob >= 1.0) ds::fail(ds::errc::bad_config, "self-prob must be in [0, 1)");
  const auto [series, truth] = ds::synth_series(states, static_cast<Eigen::Index>(length),
                                                self_prob, separation, cfg.seed, cfg.rate_hz);
  std::ostringstream csv;
  ds::serialize_csv(series, csv);
  ds::write_file(out_path, csv.str());
  std::ostringstream truth_csv;
  ds::write_segmentation_csv(truth_csv, series.timestamps, truth.labels);
  ds::write_file(truth_path, truth_csv.str());
  print_summary(json{{"command", "synth"},
                     {"states", states},
                     {"length", length},
                     {"self_prob", self_prob},
                     {"separation", separation},
                     {"seed", cfg.seed},
                     {"out", out_path},
                     {"truth", truth_path}});
  return 0;
}

// --config is resolved before CLI11 parses, so flags override file values.
RunConfig preload_config(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string_view(argv[i]) == "--config") return load_config_file(argv[i + 1]);
  }
  return RunConfig{};
}

}  // namespace

int main(int argc, char** argv) {
  try {
    RunConfig cfg = preload_config(argc, argv);

    CLI::App app{"driving-style clustering, urgency ranking, and scenario mapping"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "JSON config file (flags override its values)");
    // the file itself was already loaded by preload_config; registering the
    // flag everywhere just lets it appear before or after the subcommand
    auto add_config_flag = [&](CLI::App* sub) {
      sub->add_option("--config", config_path, "JSON config file (flags override its values)");
    };

    // ingest
    auto* ingest = app.add_subcommand("ingest", "parse a driving log into canonical CSV");
    add_config_flag(ingest);
    std::string in_path, out_path, format = "csv";
    bool derive = false;
    ingest->add_option("--input", in_path, "input file or oxts directory")->required();
    ingest->add_option("--format", format, "input format: csv|oxts")->check(CLI::IsMember({"csv", "oxts"}));
    ingest->add_option("--out", out_path, "canonical CSV output path")->required();
    ingest->add_option("--rate-hz", cfg.rate_hz, "oxts acquisition rate [Hz]");
    ingest->add_flag("--derive-accel", derive, "recompute a_f/a_l from velocity differences");
    ingest->add_option("--oxts-vf", cfg.oxts.vf, "oxts column of forward velocity");
    ingest->add_option("--oxts-vl", cfg.oxts.vl, "oxts column of leftward velocity");
    ingest->add_option("--oxts-af", cfg.oxts.af, "oxts column of forward acceleration");
    ingest->add_option("--oxts-al", cfg.oxts.al, "oxts column of leftward acceleration");

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "run the sticky HDP-HMM blocked Gibbs sampler");
    add_config_flag(fit_cmd);
    std::string model_path, labels_path;
    fit_cmd->add_option("--input", in_path, "canonical CSV input")->required();
    fit_cmd->add_option("--out", model_path, "model JSON output")->required();
    fit_cmd->add_option("--labels", labels_path, "segmentation CSV output (t,cluster_id)")->required();
    fit_cmd->add_option("--seed", cfg.seed, "random seed (all streams derive from it)");
    fit_cmd->add_option("--iters", cfg.iterations, "Gibbs sweeps");
    fit_cmd->add_option("--burn-in", cfg.burn_in, "sweeps discarded before picking the best sample");
    fit_cmd->add_option("--truncation", cfg.truncation, "weak-limit truncation L");
    fit_cmd->add_option("--alpha", cfg.alpha, "transition DP concentration");
    fit_cmd->add_option("--gamma", cfg.gamma, "top-level DP concentration");
    fit_cmd->add_option("--kappa", cfg.kappa, "sticky self-transition mass");
    fit_cmd->add_option("--chains", cfg.chains, "independent seeded chains run concurrently");
    fit_cmd->add_flag("--standardize", cfg.standardize, "z-score channels before sampling");
    fit_cmd->add_option("--emission-mode", cfg.emission_mode, "full|diagonal covariance")
        ->check(CLI::IsMember({"full", "diagonal"}));

    // rank
    auto* rank_cmd = app.add_subcommand("rank", "rank clusters by urgency level");
    add_config_flag(rank_cmd);
    std::string ranking_path, occupancy_path;
    rank_cmd->add_option("--input", in_path, "canonical CSV input (original units)")->required();
    rank_cmd->add_option("--labels", labels_path, "segmentation CSV from fit")->required();
    rank_cmd->add_option("--out", ranking_path, "ranking JSON output")->required();
    rank_cmd->add_option("--occupancy", occupancy_path, "occupancy CSV output (default <out>.occupancy.csv)");
    rank_cmd->add_option("--deadband", cfg.deadband, "a_f mean deadband [m/s^2]");
    rank_cmd->add_option("--stop-threshold", cfg.stop_threshold, "stop-prediction velocity threshold [m/s]");

    // map
    auto* map_cmd = app.add_subcommand("map", "join scene features with the ranked timeline");
    add_config_flag(map_cmd);
    std::string scene_path, timeline_path, report_path;
    map_cmd->add_option("--input", in_path, "canonical CSV input")->required();
    map_cmd->add_option("--labels", labels_path, "segmentation CSV from fit")->required();
    map_cmd->add_option("--ranking", ranking_path, "ranking JSON from rank")->required();
    map_cmd->add_option("--scene", scene_path, "KITTI tracking label file")->required();
    map_cmd->add_option("--out-timeline", timeline_path, "risk timeline CSV output")->required();
    map_cmd->add_option("--out-report", report_path, "correlation report JSON output")->required();
    map_cmd->add_option("--frame-offset", cfg.frame_offset,
                        "shift applied to scene frame indices [frames]");

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a sticky-HMM benchmark series");
    add_config_flag(synth_cmd);
    int states = 3;
    long long length = 2000;
    double self_prob = 0.95, separation = 10.0;
    std::string truth_path;
    synth_cmd->add_option("--states", states, "number of generating states")->required();
    synth_cmd->add_option("--length", length, "series length [frames]")->required();
    synth_cmd->add_option("--seed", cfg.seed, "random seed");
    synth_cmd->add_option("--self-prob", self_prob, "diagonal self-transition probability");
    synth_cmd->add_option("--separation", separation, "minimum mean separation [sigma]");
    synth_cmd->add_option("--out", out_path, "data CSV output")->required();
    synth_cmd->add_option("--out-truth", truth_path, "ground-truth labels CSV output")->required();

    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e);
      return code == 0 ? 0 : 2;  // --help exits 0, any parse error is a usage error
    }

    if (ingest->parsed()) return cmd_ingest(cfg, in_path, format, out_path, derive);
    if (fit_cmd->parsed()) return cmd_fit(cfg, in_path, model_path, labels_path);
    if (rank_cmd->parsed()) {
      if (occupancy_path.empty()) occupancy_path = ranking_path + ".occupancy.csv";
      return cmd_rank(cfg, in_path, labels_path, ranking_path, occupancy_path);
    }
    if (map_cmd->parsed()) {
      return cmd_map(cfg, in_path, labels_path, ranking_path, scene_path, timeline_path,
                     report_path);
    }
    if (synth_cmd->parsed()) {
      return cmd_synth(cfg, states, length, self_prob, separation, out_path, truth_path);
    }
    return 2;
  } catch (const ds::error& e) {
    ds::log(ds::LogLevel::error, e.what());
    return e.numerical() ? 3 : 2;
  } catch (const std::exception& e) {
    ds::log(ds::LogLevel::error, e.what());
    return 2;
  }
}
