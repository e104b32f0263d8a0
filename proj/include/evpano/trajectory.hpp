#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "evpano/geometry.hpp"

namespace evpano {

/// Component order of the quaternion in 8-column ground-truth files.
enum class QuatOrder { XYZW, WXYZ };

QuatOrder parse_quat_order(const std::string& s);

/// Reads a timestamped orientation file. The layout is inferred from the
/// column count of the first data line:
///   4 columns  `t wx wy wz`                 (axis-angle)
///   5 columns  `t qw qx qy qz`
///   8 columns  `t px py pz q q q q`          (translation ignored; quaternion
///                                             order given by `order`)
/// Samples must be sorted by time.
std::vector<TimedPose> parse_trajectory(std::istream& in, QuatOrder order = QuatOrder::XYZW);
std::vector<TimedPose> load_trajectory(const std::string& path, QuatOrder order = QuatOrder::XYZW);

/// `t wx wy wz` lines.
void write_axis_angle_trajectory(std::ostream& out, std::span<const TimedPose> poses);

/// `t px py pz qx qy qz qw` lines with zero translation.
void write_ground_truth(std::ostream& out, std::span<const TimedPose> poses);

/// Spherical interpolation between two orientations, s in [0, 1].
Pose slerp(const Pose& a, const Pose& b, double s);

/// Orientation at time t by slerp between the bracketing samples. Times
/// outside the span clamp to the ends.
Pose interpolate(std::span<const TimedPose> traj, double t);

}  // namespace evpano
