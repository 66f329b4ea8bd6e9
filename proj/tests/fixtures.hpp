#pragma once

// Deterministic fixtures shared by the acceptance suite and the bundled
// sample data: a kinematically plausible 100 s urban drive (stop-and-go with
// acceleration, cruising, braking-to-stop, and gentle turns) and a matching
// synthetic scene label file.

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "drivestyle/rng.hpp"
#include "drivestyle/series.hpp"

namespace fixtures {

// Target forward acceleration profile [m/s^2] over 100 s.
inline double drive_accel_profile(double t) {
  if (t < 15.0) return 0.8;                    // pull away, 0 -> 12 m/s
  if (t < 30.0) return 0.0;                    // cruise
  if (t < 38.0) return -1.0;                   // moderate braking, 12 -> 4
  if (t < 48.0) return 1.0;                    // back up to 14
  if (t < 60.0) return 0.0;                    // cruise
  if (t < 66.0) return -2.33;                  // hard brake to standstill
  if (t < 72.0) return 0.0;                    // stopped
  if (t < 87.0) return 0.87;                   // pull away again, 0 -> 13
  return -0.54;                                // gentle fade, 13 -> 6
}

// Lateral velocity: two gentle turns.
inline double drive_lateral_profile(double t) {
  if (t >= 40.0 && t < 46.0) return 0.6 * std::sin((t - 40.0) / 6.0 * 3.14159265358979);
  if (t >= 75.0 && t < 82.0) return -0.5 * std::sin((t - 75.0) / 7.0 * 3.14159265358979);
  return 0.0;
}

inline drivestyle::DrivingSeries make_sample_drive(int frames = 1000, double rate_hz = 10.0) {
  drivestyle::Rng noise(20240817);
  const double dt = 1.0 / rate_hz;
  Eigen::VectorXd ts(frames);
  drivestyle::ObsMatrix ch(frames, drivestyle::kChannels);

  double vf = 0.0;
  double vl_prev = 0.0;
  for (int i = 0; i < frames; ++i) {
    const double t = i * dt;
    ts[i] = t;
    double af = drive_accel_profile(t);
    if (vf <= 0.0 && af < 0.0) af = 0.0;  // cannot brake below standstill
    const double vl = drive_lateral_profile(t);
    const double al = (vl - vl_prev) / dt;
    vl_prev = vl;

    ch(i, drivestyle::kVf) = std::max(0.0, vf + 0.05 * noise.normal());
    ch(i, drivestyle::kVl) = vl + 0.03 * noise.normal();
    ch(i, drivestyle::kAf) = af + 0.08 * noise.normal();
    ch(i, drivestyle::kAl) = al + 0.05 * noise.normal();

    vf = std::max(0.0, vf + af * dt);
  }
  return drivestyle::finalize_series(std::move(ts), std::move(ch), "sample_drive");
}

// KITTI-tracking-format scene over the same clock. Objects overlap in time so
// the nearest box changes hands while tracked: a cyclist holds station until
// an approaching car undercuts it during the hard-brake window, pedestrians
// cross while the ego is stopped, and a van recedes at the end.
inline std::string make_sample_scene(int frames = 1000) {
  std::ostringstream out;
  auto line = [&](int frame, int track, const char* type, double alpha, double x, double z) {
    out << frame << ' ' << track << ' ' << type << " 0 0 " << alpha
        << " 0 0 60 40 1.6 1.7 4.2 " << x << " 1.6 " << z << " 0.0\n";
  };
  for (int f = 0; f < frames; ++f) {
    const double t = f * 0.1;
    if (t >= 5.0 && t < 12.0) {
      line(f, 6, "Van", -0.1, 1.2, 25.0 - 0.5 * (t - 5.0));
    }
    if (t >= 18.0 && t < 26.0) {
      line(f, 7, "Car", 0.2, 0.9, 35.0 - 1.0 * (t - 18.0));
    }
    if (t >= 30.0 && t < 66.0) {
      line(f, 1, "Cyclist", -0.4, 3.0, 12.0 + 0.8 * std::sin(0.35 * t));
    }
    if (t >= 50.0 && t < 67.0) {
      // closes from 45 m to about 6 m; becomes the nearest box around t=64
      line(f, 2, "Car", 0.05, 0.8, 45.0 - 2.3 * (t - 50.0));
    }
    if (t >= 66.0 && t < 73.0) {
      line(f, 3, "Pedestrian", 1.1, -3.0 + 0.6 * (t - 66.0), 8.0);
    }
    if (t >= 68.0 && t < 74.0) {
      line(f, 4, "Pedestrian", 0.9, 2.0, 10.0);
    }
    if (t >= 84.0) {
      line(f, 5, "Van", -0.2, 1.5, 30.0 + 0.4 * (t - 84.0));
    }
  }
  return out.str();
}

}  // namespace fixtures
