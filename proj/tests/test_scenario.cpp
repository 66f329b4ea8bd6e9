#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "drivestyle/errors.hpp"
#include "drivestyle/rng.hpp"
#include "drivestyle/scenario.hpp"

using namespace drivestyle;

namespace {

// One tracking-format label line.
std::string label_line(int frame, int track, const std::string& type, double alpha, double x,
                       double y, double z) {
  std::ostringstream out;
  out << frame << ' ' << track << ' ' << type << " 0 0 " << alpha
      << " 0 0 50 50 1.5 1.6 4.0 " << x << ' ' << y << ' ' << z << " 0.0";
  return out.str();
}

DrivingSeries series_with_vf(const std::vector<double>& vf) {
  Eigen::VectorXd ts(static_cast<Eigen::Index>(vf.size()));
  ObsMatrix ch(static_cast<Eigen::Index>(vf.size()), kChannels);
  ch.setZero();
  for (std::size_t i = 0; i < vf.size(); ++i) {
    ts[static_cast<Eigen::Index>(i)] = 0.1 * static_cast<double>(i);
    ch(static_cast<Eigen::Index>(i), kVf) = vf[i];
  }
  return finalize_series(std::move(ts), std::move(ch), "fixture");
}

UrgencyRanking single_cluster_ranking(int id, Level level) {
  LevelAssignment a;
  a.cluster_id = id;
  a.level = level;
  a.coarse = coarse_of(level);
  a.score = 1.0;
  a.occupancy = 1.0;
  return rank_clusters({a});
}

}  // namespace

TEST_SUITE_BEGIN("scenario");

TEST_CASE("parse_label_frames extracts type, angle, and location") {
  std::istringstream in(label_line(2, 7, "Cyclist", -1.2, 2.0, 1.5, 10.0) + "\n");
  const auto frames = parse_label_frames(in);
  REQUIRE(frames.size() == 3);
  CHECK(frames[0].empty());
  CHECK(frames[1].empty());
  REQUIRE(frames[2].size() == 1);
  const BoundingBox& box = frames[2][0];
  CHECK(box.type == ObjectType::cyclist);
  CHECK(box.track_id == 7);
  CHECK(box.observation_angle == doctest::Approx(-1.2));
  CHECK(box.location[0] == doctest::Approx(2.0));
  CHECK(box.location[1] == doctest::Approx(1.5));
  CHECK(box.location[2] == doctest::Approx(10.0));
}

TEST_CASE("DontCare rows are skipped") {
  std::istringstream in(label_line(0, -1, "DontCare", 0.0, 1, 1, 1) + "\n" +
                        label_line(0, 3, "Car", 0.1, 5, 1, 5) + "\n");
  const auto frames = parse_label_frames(in);
  REQUIRE(frames.size() == 1);
  CHECK(frames[0].size() == 1);
  CHECK(frames[0][0].type == ObjectType::car);
}

TEST_CASE("an empty label file yields zero frames") {
  std::istringstream in("");
  const auto frames = parse_label_frames(in);
  CHECK(frames.empty());
  const auto features = extract_features(frames, 5);
  REQUIRE(features.size() == 5);
  for (const auto& f : features) {
    CHECK(f.number == 0);
    CHECK(std::isinf(f.distance));
    CHECK(f.type == ObjectType::none);
    CHECK(f.angle == 0.0);
    CHECK_FALSE(f.nearest_id.has_value());
  }
}

TEST_CASE("unknown object types are rejected") {
  std::istringstream in(label_line(0, 1, "Spaceship", 0.0, 1, 1, 1) + "\n");
  CHECK_THROWS_WITH_AS(parse_label_frames(in), doctest::Contains("UnknownType"), error);
}

TEST_CASE("short label lines are rejected") {
  std::istringstream in("0 1 Car 0 0\n");
  CHECK_THROWS_WITH_AS(parse_label_frames(in), doctest::Contains("MalformedLine"), error);
}

TEST_CASE("ground-plane distance ignores the vertical axis") {
  std::istringstream in(label_line(0, 1, "Car", 0.0, 3.0, 99.0, 4.0) + "\n");
  const auto frames = parse_label_frames(in);
  const auto features = extract_features(frames, 1);
  CHECK(features[0].number == 1);
  CHECK(features[0].distance == doctest::Approx(5.0));  // sqrt(9 + 16)
}

TEST_CASE("the nearest box wins distance, type, and angle") {
  std::istringstream in(label_line(0, 1, "Car", 0.3, 5.0, 1.0, 0.0) + "\n" +
                        label_line(0, 2, "Pedestrian", -0.8, 2.0, 1.0, 0.0) + "\n");
  const auto frames = parse_label_frames(in);
  const auto features = extract_features(frames, 1);
  CHECK(features[0].number == 2);
  CHECK(features[0].distance == doctest::Approx(2.0));
  CHECK(features[0].type == ObjectType::pedestrian);
  CHECK(features[0].angle == doctest::Approx(-0.8));
  CHECK(features[0].nearest_id == 2);
}

TEST_CASE("nearest distance matches a brute-force recheck on random scenes") {
  Rng rng(401);
  std::vector<std::vector<BoundingBox>> frames(30);
  for (auto& frame_boxes : frames) {
    const int n = static_cast<int>(rng.uniform_int(5));
    for (int b = 0; b < n; ++b) {
      BoundingBox box;
      box.frame = 0;
      box.track_id = b;
      box.type = ObjectType::car;
      box.location << rng.normal(0, 10), rng.normal(0, 2), rng.normal(0, 10);
      box.observation_angle = rng.uniform(-3.0, 3.0);
      frame_boxes.push_back(box);
    }
  }
  const auto features = extract_features(frames, 30);
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (frames[f].empty()) {
      CHECK(features[f].number == 0);
      continue;
    }
    double best = std::numeric_limits<double>::infinity();
    for (const auto& box : frames[f]) {
      best = std::min(best, std::sqrt(box.location[0] * box.location[0] +
                                      box.location[2] * box.location[2]));
    }
    CHECK(features[f].distance == doctest::Approx(best));
  }
}

TEST_CASE("more labeled frames than kinematic frames is an error") {
  const std::vector<std::vector<BoundingBox>> frames(10);
  CHECK_THROWS_WITH_AS(extract_features(frames, 5), doctest::Contains("LengthMismatch"), error);
}

TEST_CASE("risk timeline joins cluster levels with scene features") {
  const DrivingSeries series = series_with_vf({5, 5, 5});
  const std::vector<int> labels = {0, 0, 0};
  const UrgencyRanking ranking = single_cluster_ranking(0, Level::L4_1);
  std::vector<ScenarioFrame> scenes(3);
  scenes[1].number = 1;
  scenes[1].distance = 3.2;
  scenes[1].type = ObjectType::car;
  const RiskTimeline tl = build_risk_timeline(series.timestamps, labels, ranking, scenes);
  REQUIRE(tl.frames.size() == 3);
  CHECK(tl.frames[1].coarse == CoarseLevel::VeryDangerous);
  CHECK(tl.frames[1].scene.distance == doctest::Approx(3.2));
  CHECK(tl.frames[0].level == Level::L4_1);
}

TEST_CASE("a uniformly safe cluster yields a uniformly safe timeline") {
  const DrivingSeries series = series_with_vf({5, 5, 5, 5});
  const std::vector<int> labels = {0, 0, 0, 0};
  const UrgencyRanking ranking = single_cluster_ranking(0, Level::L1);
  const std::vector<ScenarioFrame> scenes(4);
  const RiskTimeline tl = build_risk_timeline(series.timestamps, labels, ranking, scenes);
  for (const auto& f : tl.frames) CHECK(f.coarse == CoarseLevel::VerySafe);
}

TEST_CASE("mismatched label/scene lengths are rejected") {
  const DrivingSeries series = series_with_vf({5, 5, 5});
  const std::vector<int> labels = {0, 0, 0};
  const UrgencyRanking ranking = single_cluster_ranking(0, Level::L1);
  const std::vector<ScenarioFrame> scenes(2);
  CHECK_THROWS_WITH_AS(build_risk_timeline(series.timestamps, labels, ranking, scenes),
                       doctest::Contains("LengthMismatch"), error);
}

TEST_CASE("labels missing from the ranking are rejected") {
  const DrivingSeries series = series_with_vf({5, 5, 5});
  const std::vector<int> labels = {0, 1, 0};
  const UrgencyRanking ranking = single_cluster_ranking(0, Level::L1);
  const std::vector<ScenarioFrame> scenes(3);
  CHECK_THROWS_WITH_AS(build_risk_timeline(series.timestamps, labels, ranking, scenes),
                       doctest::Contains("UnknownCluster"), error);
}

TEST_CASE("perfectly linear v_f vs distance gives Pearson exactly 1") {
  const int n = 20;
  std::vector<double> vf(n);
  std::vector<ScenarioFrame> scenes(n);
  for (int i = 0; i < n; ++i) {
    vf[static_cast<std::size_t>(i)] = 2.0 + i;
    scenes[static_cast<std::size_t>(i)].number = 1;
    scenes[static_cast<std::size_t>(i)].distance = 2.0 + i;  // equal to v_f
    scenes[static_cast<std::size_t>(i)].nearest_id = 1;
    scenes[static_cast<std::size_t>(i)].type = ObjectType::car;
  }
  const DrivingSeries series = series_with_vf(vf);
  const std::vector<int> labels(n, 0);
  const RiskTimeline tl =
      build_risk_timeline(series.timestamps, labels, single_cluster_ranking(0, Level::L1), scenes);
  const Report report = correlation_report(series, scenes, tl);
  REQUIRE(report.global.pearson_vf_distance.value.has_value());
  CHECK(*report.global.pearson_vf_distance.value == doctest::Approx(1.0).epsilon(1e-12));
  REQUIRE(report.global.spearman_vf_distance.value.has_value());
  CHECK(*report.global.spearman_vf_distance.value == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("spearman of a strictly monotone nonlinear pair is exactly 1") {
  const int n = 15;
  std::vector<double> vf(n);
  std::vector<ScenarioFrame> scenes(n);
  for (int i = 0; i < n; ++i) {
    vf[static_cast<std::size_t>(i)] = static_cast<double>(i);
    scenes[static_cast<std::size_t>(i)].number = 1;
    scenes[static_cast<std::size_t>(i)].distance = std::exp(0.3 * i);  // monotone, nonlinear
    scenes[static_cast<std::size_t>(i)].nearest_id = 1;
  }
  const DrivingSeries series = series_with_vf(vf);
  const std::vector<int> labels(n, 0);
  const RiskTimeline tl =
      build_risk_timeline(series.timestamps, labels, single_cluster_ranking(0, Level::L1), scenes);
  const Report report = correlation_report(series, scenes, tl);
  CHECK(*report.global.spearman_vf_distance.value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(*report.global.pearson_vf_distance.value < 1.0);
}

TEST_CASE("constant v_f yields null coefficients with the variance flag") {
  const int n = 10;
  std::vector<double> vf(n, 7.0);
  std::vector<ScenarioFrame> scenes(n);
  for (int i = 0; i < n; ++i) {
    scenes[static_cast<std::size_t>(i)].number = 1 + i % 3;
    scenes[static_cast<std::size_t>(i)].distance = 5.0 + i;
    scenes[static_cast<std::size_t>(i)].nearest_id = 1;
  }
  const DrivingSeries series = series_with_vf(vf);
  const std::vector<int> labels(n, 0);
  const RiskTimeline tl =
      build_risk_timeline(series.timestamps, labels, single_cluster_ranking(0, Level::L1), scenes);
  const Report report = correlation_report(series, scenes, tl);
  CHECK_FALSE(report.global.pearson_vf_number.value.has_value());
  CHECK(report.global.pearson_vf_number.insufficient_variance);
}

TEST_CASE("fewer than three usable frames yields the insufficient-data flag") {
  const std::vector<double> vf = {3, 4, 5, 6};
  std::vector<ScenarioFrame> scenes(4);
  scenes[0].number = 1;
  scenes[0].distance = 9.0;
  scenes[0].nearest_id = 0;
  scenes[1].number = 1;
  scenes[1].distance = 8.0;
  scenes[1].nearest_id = 0;
  const DrivingSeries series = series_with_vf(vf);
  const std::vector<int> labels(4, 0);
  const RiskTimeline tl =
      build_risk_timeline(series.timestamps, labels, single_cluster_ranking(0, Level::L1), scenes);
  const Report report = correlation_report(series, scenes, tl);
  CHECK_FALSE(report.global.pearson_vf_distance.value.has_value());
  CHECK(report.global.pearson_vf_distance.insufficient_data);
  // number correlation still has 4 rows
  CHECK(report.global.pearson_vf_number.value.has_value());
}

TEST_CASE("number stepping up while v_f ramps down gives a negative correlation") {
  const int n = 40;
  std::vector<double> vf(n);
  std::vector<ScenarioFrame> scenes(n);
  Rng rng(402);
  for (int i = 0; i < n; ++i) {
    vf[static_cast<std::size_t>(i)] = 15.0 - 0.3 * i + 0.05 * rng.normal();
    scenes[static_cast<std::size_t>(i)].number = 1 + (i * 5) / n;  // steps 1 -> 5
    scenes[static_cast<std::size_t>(i)].distance = 40.0 - 0.8 * i;
    scenes[static_cast<std::size_t>(i)].nearest_id = 1;
  }
  const DrivingSeries series = series_with_vf(vf);
  const std::vector<int> labels(n, 0);
  const RiskTimeline tl =
      build_risk_timeline(series.timestamps, labels, single_cluster_ranking(0, Level::L2), scenes);
  const Report report = correlation_report(series, scenes, tl);
  CHECK(*report.global.pearson_vf_number.value < 0.0);
  CHECK(*report.global.pearson_vf_distance.value > 0.0);
  // bounds
  CHECK(*report.global.pearson_vf_number.value >= -1.0);
  CHECK(*report.global.pearson_vf_distance.value <= 1.0);
}

TEST_CASE("frames without boxes never enter distance statistics") {
  const int n = 12;
  std::vector<double> vf(n);
  std::vector<ScenarioFrame> scenes(n);
  for (int i = 0; i < n; ++i) {
    vf[static_cast<std::size_t>(i)] = 1.0 + i;
    if (i % 2 == 0) {
      scenes[static_cast<std::size_t>(i)].number = 1;
      scenes[static_cast<std::size_t>(i)].distance = 10.0;  // constant over boxed frames
      scenes[static_cast<std::size_t>(i)].nearest_id = 1;
    }
  }
  const DrivingSeries series = series_with_vf(vf);
  const std::vector<int> labels(n, 0);
  const RiskTimeline tl =
      build_risk_timeline(series.timestamps, labels, single_cluster_ranking(0, Level::L1), scenes);
  const Report report = correlation_report(series, scenes, tl);
  // distance is constant across usable frames -> variance flag, not polluted
  // by the infinite sentinels
  CHECK_FALSE(report.global.pearson_vf_distance.value.has_value());
  CHECK(report.global.pearson_vf_distance.insufficient_variance);
  REQUIRE(report.per_level.count(CoarseLevel::VerySafe) == 1);
  CHECK(*report.per_level.at(CoarseLevel::VerySafe).mean_distance == doctest::Approx(10.0));
}

TEST_CASE("nearest-object changes are counted over consecutive tracked frames") {
  const int n = 6;
  std::vector<double> vf(n, 5.0);
  std::vector<ScenarioFrame> scenes(n);
  const int ids[] = {1, 1, 2, -9, 3, 3};  // -9 marks a frame without boxes
  for (int i = 0; i < n; ++i) {
    if (ids[i] != -9) {
      scenes[static_cast<std::size_t>(i)].number = 1;
      scenes[static_cast<std::size_t>(i)].distance = 4.0;
      scenes[static_cast<std::size_t>(i)].nearest_id = ids[i];
      scenes[static_cast<std::size_t>(i)].type = ObjectType::car;
    }
  }
  const DrivingSeries series = series_with_vf(vf);
  const std::vector<int> labels(n, 0);
  const RiskTimeline tl =
      build_risk_timeline(series.timestamps, labels, single_cluster_ranking(0, Level::L1), scenes);
  const Report report = correlation_report(series, scenes, tl);
  // 1->2 counts; the gap resets tracking, so 2->3 across the gap does not
  CHECK(report.nearest_changes == 1);
  CHECK(report.nearest_type_counts.at(ObjectType::car) == 5);
}

TEST_SUITE_END();
