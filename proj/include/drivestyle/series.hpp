#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "drivestyle/errors.hpp"

namespace drivestyle {

inline constexpr int kChannels = 4;

// Channel layout of every kinematic sample: forward/leftward velocity (m/s)
// and forward/leftward acceleration (m/s^2).
enum Channel : int { kVf = 0, kVl = 1, kAf = 2, kAl = 3 };

inline constexpr std::array<const char*, kChannels> kChannelNames = {"v_f", "v_l", "a_f", "a_l"};

using ObsMatrix = Eigen::Matrix<double, Eigen::Dynamic, kChannels>;

// Uniformly sampled multivariate kinematic time series.
struct DrivingSeries {
  Eigen::VectorXd timestamps;  // seconds, strictly increasing, uniform step
  ObsMatrix channels;          // one row per timestep
  double sample_rate_hz = 0.0;
  std::string source_id;

  Eigen::Index size() const { return timestamps.size(); }
  double dt() const { return 1.0 / sample_rate_hz; }
};

namespace detail {

inline double parse_double(std::string_view token, errc code, std::size_t line_no) {
  double value = 0.0;
  const char* begin = token.data();
  const char* end = begin + token.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) {
    fail(code, "cannot parse number '" + std::string(token) + "' at line " + std::to_string(line_no));
  }
  return value;
}

inline std::string format_double(double v) {
  std::array<char, 32> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string_view strip_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

}  // namespace detail

// Infers dt as the median timestamp delta and checks the series invariants:
// strictly increasing time, uniform step within 1e-3 relative, finite values,
// length >= 2. Non-uniform logs are rejected, never resampled.
inline DrivingSeries finalize_series(Eigen::VectorXd timestamps, ObsMatrix channels,
                                     std::string source_id) {
  const Eigen::Index n = timestamps.size();
  if (n < 2) fail(errc::empty_input, "series needs at least 2 samples, got " + std::to_string(n));
  if (channels.rows() != n) fail(errc::length_mismatch, "timestamps and channels disagree");

  std::vector<double> deltas(static_cast<std::size_t>(n - 1));
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    deltas[static_cast<std::size_t>(i)] = timestamps[i + 1] - timestamps[i];
    if (deltas[static_cast<std::size_t>(i)] <= 0.0) {
      fail(errc::non_monotonic_time, "timestamps not strictly increasing at row " + std::to_string(i + 1));
    }
  }
  std::vector<double> sorted = deltas;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double dt = sorted[sorted.size() / 2];
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (std::abs(deltas[i] - dt) / dt > 1e-3) {
      fail(errc::non_uniform_time, "non-uniform step at row " + std::to_string(i + 1) + " (delta " +
                                       detail::format_double(deltas[i]) + " vs dt " +
                                       detail::format_double(dt) + ")");
    }
  }
  if (!channels.allFinite()) fail(errc::malformed_row, "non-finite channel value");

  DrivingSeries s;
  s.timestamps = std::move(timestamps);
  s.channels = std::move(channels);
  s.sample_rate_hz = 1.0 / dt;
  s.source_id = std::move(source_id);
  return s;
}

// CSV format: header `t,v_f,v_l,a_f,a_l`, one numeric row per timestep.
inline DrivingSeries parse_csv(std::istream& in, std::string source_id = "csv") {
  std::string line;
  if (!std::getline(in, line)) fail(errc::empty_input, "no header row");
  if (detail::strip_cr(line) != "t,v_f,v_l,a_f,a_l") {
    fail(errc::malformed_row, "expected header 't,v_f,v_l,a_f,a_l', got '" + line + "'");
  }

  std::vector<double> times;
  std::vector<std::array<double, kChannels>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view body = detail::strip_cr(line);
    if (body.empty()) continue;
    const auto cells = detail::split(body, ',');
    if (cells.size() != 1 + kChannels) {
      fail(errc::malformed_row, "expected 5 cells at line " + std::to_string(line_no));
    }
    times.push_back(detail::parse_double(cells[0], errc::malformed_row, line_no));
    std::array<double, kChannels> row{};
    for (int c = 0; c < kChannels; ++c) {
      row[static_cast<std::size_t>(c)] =
          detail::parse_double(cells[static_cast<std::size_t>(c) + 1], errc::malformed_row, line_no);
    }
    rows.push_back(row);
  }
  if (times.empty()) fail(errc::empty_input, "header only, no data rows");

  Eigen::VectorXd ts(static_cast<Eigen::Index>(times.size()));
  ObsMatrix ch(static_cast<Eigen::Index>(rows.size()), kChannels);
  for (std::size_t i = 0; i < times.size(); ++i) {
    ts[static_cast<Eigen::Index>(i)] = times[i];
    for (int c = 0; c < kChannels; ++c) {
      ch(static_cast<Eigen::Index>(i), c) = rows[i][static_cast<std::size_t>(c)];
    }
  }
  return finalize_series(std::move(ts), std::move(ch), std::move(source_id));
}

inline void serialize_csv(const DrivingSeries& s, std::ostream& out) {
  out << "t,v_f,v_l,a_f,a_l\n";
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    out << detail::format_double(s.timestamps[i]);
    for (int c = 0; c < kChannels; ++c) out << ',' << detail::format_double(s.channels(i, c));
    out << '\n';
  }
}

inline std::string serialize_csv(const DrivingSeries& s) {
  std::ostringstream out;
  serialize_csv(s, out);
  return out.str();
}

// Field positions inside one oxts record (KITTI raw layout by default).
struct OxtsColumns {
  int vf = 8;
  int vl = 9;
  int af = 14;
  int al = 15;
};

inline constexpr int kOxtsMinFields = 17;

// One whitespace-delimited oxts record per line; timestamps are synthesized
// as i / rate_hz since the raw format carries no time column.
inline DrivingSeries parse_oxts(std::span<const std::string> records, double rate_hz = 10.0,
                                const OxtsColumns& cols = {}, std::string source_id = "oxts") {
  if (records.empty()) fail(errc::empty_input, "no oxts records");
  if (rate_hz <= 0.0) fail(errc::bad_config, "rate_hz must be positive");

  Eigen::VectorXd ts(static_cast<Eigen::Index>(records.size()));
  ObsMatrix ch(static_cast<Eigen::Index>(records.size()), kChannels);
  const std::array<int, kChannels> pick = {cols.vf, cols.vl, cols.af, cols.al};
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto fields = detail::split_ws(detail::strip_cr(records[i]));
    if (fields.size() < kOxtsMinFields) {
      fail(errc::short_line, "oxts line " + std::to_string(i + 1) + " has " +
                                 std::to_string(fields.size()) + " fields, need >= " +
                                 std::to_string(kOxtsMinFields));
    }
    ts[static_cast<Eigen::Index>(i)] = static_cast<double>(i) / rate_hz;
    for (int c = 0; c < kChannels; ++c) {
      const int idx = pick[static_cast<std::size_t>(c)];
      if (idx < 0 || idx >= static_cast<int>(fields.size())) {
        fail(errc::short_line, "oxts column " + std::to_string(idx) + " out of range at line " +
                                   std::to_string(i + 1));
      }
      ch(static_cast<Eigen::Index>(i), c) =
          detail::parse_double(fields[static_cast<std::size_t>(idx)], errc::non_numeric_field, i + 1);
    }
  }
  return finalize_series(std::move(ts), std::move(ch), std::move(source_id));
}

// Directory mode: one `NNNNNNNNNN.txt` record file per frame, lexicographic order.
inline DrivingSeries load_oxts_dir(const std::filesystem::path& dir, double rate_hz = 10.0,
                                   const OxtsColumns& cols = {}) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<std::string> records;
  records.reserve(files.size());
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) fail(errc::io_failure, "cannot open " + f.string());
    std::string line;
    if (std::getline(in, line) && !detail::strip_cr(line).empty()) records.push_back(line);
  }
  return parse_oxts(records, rate_hz, cols, dir.string());
}

// Replaces both acceleration channels with central differences of the
// velocities (one-sided at the endpoints). Fallback for sources that do not
// log accelerations.
inline DrivingSeries derive_accel(const DrivingSeries& s) {
  const Eigen::Index n = s.size();
  if (n < 3) fail(errc::too_short, "derive_accel needs at least 3 samples, got " + std::to_string(n));
  DrivingSeries out = s;
  const double dt = s.dt();
  const std::array<std::pair<int, int>, 2> map = {{{kVf, kAf}, {kVl, kAl}}};
  for (const auto& [vc, ac] : map) {
    out.channels(0, ac) = (s.channels(1, vc) - s.channels(0, vc)) / dt;
    for (Eigen::Index i = 1; i + 1 < n; ++i) {
      out.channels(i, ac) = (s.channels(i + 1, vc) - s.channels(i - 1, vc)) / (2.0 * dt);
    }
    out.channels(n - 1, ac) = (s.channels(n - 1, vc) - s.channels(n - 2, vc)) / dt;
  }
  return out;
}

// Per-channel affine record so cluster summaries and ranking can always be
// produced in original physical units.
struct ChannelTransform {
  Eigen::Vector4d mean = Eigen::Vector4d::Zero();
  Eigen::Vector4d scale = Eigen::Vector4d::Ones();
  bool enabled = false;
};

// Z-scores each channel when enabled (sample standard deviation, n-1
// denominator). Channels with std below 1e-9 keep scale 1.
inline std::pair<DrivingSeries, ChannelTransform> standardize(const DrivingSeries& s, bool enabled) {
  ChannelTransform t;
  t.enabled = enabled;
  const double n = static_cast<double>(s.size());
  for (int c = 0; c < kChannels; ++c) {
    t.mean[c] = s.channels.col(c).mean();
    const double ss = (s.channels.col(c).array() - t.mean[c]).square().sum();
    const double sd = std::sqrt(ss / (n - 1.0));
    t.scale[c] = (enabled && sd >= 1e-9) ? sd : 1.0;
  }
  if (!enabled) return {s, t};
  DrivingSeries out = s;
  for (int c = 0; c < kChannels; ++c) {
    out.channels.col(c) = (s.channels.col(c).array() - t.mean[c]) / t.scale[c];
  }
  return {std::move(out), t};
}

inline DrivingSeries destandardize(const DrivingSeries& s, const ChannelTransform& t) {
  if (!t.enabled) return s;
  DrivingSeries out = s;
  for (int c = 0; c < kChannels; ++c) {
    out.channels.col(c) = s.channels.col(c).array() * t.scale[c] + t.mean[c];
  }
  return out;
}

}  // namespace drivestyle
