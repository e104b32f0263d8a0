#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "evpano/geometry.hpp"

namespace evpano {

class NoOverlap : public std::runtime_error {
 public:
  NoOverlap() : std::runtime_error("estimated and ground-truth trajectories do not overlap in time") {}
};

class Degenerate : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AlignedPair {
  double t = 0.0;
  Vec3 est_dir;
  Vec3 gt_dir;
};

/// Camera forward axis (0,0,1) rotated into the world frame.
Vec3 viewing_direction(const Pose& pose);

struct TemporalAlignment {
  std::vector<AlignedPair> pairs;
  double offset = 0.0;  // seconds added to estimated timestamps
};

struct TemporalAlignOptions {
  bool fit_offset = true;
  double max_offset = 0.050;
  double offset_step = 0.001;
};

/// Pairs each estimated sample with ground truth slerped at its (offset)
/// timestamp. When fitting, the offset minimises the median angular error
/// after a least-squares global rotation.
TemporalAlignment temporal_align(std::span<const TimedPose> est, std::span<const TimedPose> gt,
                                 const TemporalAlignOptions& opts = {});

/// Rotation R minimising sum |R est_dir - gt_dir|^2 (Kabsch, det +1).
/// Throws Degenerate when the directions do not span two dimensions.
Mat3 fit_rotation(std::span<const AlignedPair> pairs);

struct RansacResult {
  Mat3 rotation = Mat3::Identity();
  std::vector<std::size_t> inliers;
  std::size_t sample_inliers = 0;  // inliers of the best minimal-sample model
};

struct RansacOptions {
  int iterations = 1000;
  double inlier_threshold_deg = 5.0;
  std::uint64_t seed = 7;
};

/// Rotation mapping estimated directions onto ground truth, from 2-pair
/// minimal samples and a refit on the largest inlier set.
RansacResult ransac_global_rotation(std::span<const AlignedPair> pairs, const RansacOptions& opts = {});

struct ErrorStats {
  double mean = 0.0;
  double median = 0.0;
  std::vector<double> errors_deg;
  std::array<std::size_t, 180> histogram{};  // 1 degree bins over [0, 180]
};

ErrorStats angular_error_stats(std::span<const AlignedPair> pairs, const Mat3& rotation);

/// Angle between two directions in degrees.
double angle_deg(const Vec3& a, const Vec3& b);

struct EvaluationReport {
  ErrorStats stats;
  RansacResult ransac;
  double offset = 0.0;
  std::size_t pairs = 0;
};

EvaluationReport evaluate_trajectory(std::span<const TimedPose> est, std::span<const TimedPose> gt,
                                     const TemporalAlignOptions& align = {}, const RansacOptions& ransac = {});

void write_report(std::ostream& out, const EvaluationReport& report);
void write_histogram_csv(std::ostream& out, const ErrorStats& stats);

}  // namespace evpano
