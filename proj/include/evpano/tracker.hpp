#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "evpano/events.hpp"
#include "evpano/geometry.hpp"
#include "evpano/map.hpp"

namespace evpano {

class SingularSystem : public std::runtime_error {
 public:
  SingularSystem() : std::runtime_error("damped normal equations are singular") {}
};

struct TrackerConfig {
  double alpha = 1.0;  // pull towards the previous pose
  double beta = 0.4;   // Nesterov momentum
  int max_iters = 10;
  double min_valid_fraction = 0.1;

  void validate() const;
};

struct TrackResult {
  Pose pose;
  /// Mean of squared residuals over the whole packet; events that fall
  /// outside the map count as 1.
  double mean_residual = 1.0;
  double valid_fraction = 0.0;
  int iterations_used = 0;
  bool low_confidence = false;
};

struct ResidualSet {
  std::vector<double> r;
  std::vector<std::uint8_t> valid;
};

/// r_n = 1 - M(phi(x_n, theta)); events whose projection lacks a map
/// gradient are masked invalid.
ResidualSet residuals(std::span<const Event> events, const Pose& theta, const PanoramicMap& map,
                      const CameraIntrinsics& intr);

struct NormalEquations {
  Mat3 JtJ = Mat3::Zero();
  Vec3 Jtr = Vec3::Zero();
  double sum_sq_residual = 0.0;  // over valid events only
  std::size_t valid = 0;
  std::size_t total = 0;
};

/// Accumulates J^T J and J^T r with J_n = -grad M . dphi/dtheta, one event at
/// a time.
NormalEquations normal_equations(std::span<const Event> events, const Pose& theta,
                                 const PanoramicMap& map, const CameraIntrinsics& intr);

/// theta_k - (J^T J + alpha I)^-1 (J^T r + alpha (theta_k - theta_prev)).
Pose gn_step(const Pose& theta_k, const Pose& theta_prev, const Mat3& JtJ, const Vec3& Jtr, double alpha);

/// Runs cfg.max_iters Nesterov-accelerated damped Gauss-Newton iterations
/// starting from `theta_prev`. Packets with too few usable events return
/// `theta_prev` flagged low-confidence.
TrackResult track_packet(std::span<const Event> events, const Pose& theta_prev, const PanoramicMap& map,
                         const CameraIntrinsics& intr, const TrackerConfig& cfg);

/// Same as track_packet but also records every iterate theta_1..theta_k.
TrackResult track_packet(std::span<const Event> events, const Pose& theta_prev, const PanoramicMap& map,
                         const CameraIntrinsics& intr, const TrackerConfig& cfg,
                         std::vector<Pose>* iterates);

}  // namespace evpano
