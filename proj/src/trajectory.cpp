#include "evpano/trajectory.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace evpano {

QuatOrder parse_quat_order(const std::string& s) {
  if (s == "xyzw") return QuatOrder::XYZW;
  if (s == "wxyz") return QuatOrder::WXYZ;
  throw ConfigError("quaternion order must be 'xyzw' or 'wxyz', got '" + s + "'");
}

namespace {

Pose pose_from_quaternion(double w, double x, double y, double z, std::size_t line) {
  Eigen::Quaterniond q(w, x, y, z);
  const double n = q.norm();
  if (!(n > 1e-9)) throw std::runtime_error("zero quaternion at line " + std::to_string(line));
  q.coeffs() /= n;
  return Pose(axis_angle_from_rotation(q.toRotationMatrix()));
}

}  // namespace

std::vector<TimedPose> parse_trajectory(std::istream& in, QuatOrder order) {
  std::vector<TimedPose> out;
  std::string line;
  std::size_t n = 0;
  std::size_t columns = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<double> v;
    double x;
    while (ls >> x) v.push_back(x);
    if (!ls.eof()) throw std::runtime_error("trajectory: malformed line " + std::to_string(n));
    if (v.empty()) continue;
    if (columns == 0) {
      columns = v.size();
      if (columns != 4 && columns != 5 && columns != 8)
        throw std::runtime_error("trajectory: expected 4, 5 or 8 columns, got " + std::to_string(columns));
    }
    if (v.size() != columns) throw std::runtime_error("trajectory: inconsistent columns at line " + std::to_string(n));

    TimedPose tp;
    tp.t = v[0];
    if (columns == 4) {
      tp.pose = Pose(v[1], v[2], v[3]);
    } else if (columns == 5) {
      tp.pose = pose_from_quaternion(v[1], v[2], v[3], v[4], n);
    } else if (order == QuatOrder::XYZW) {
      tp.pose = pose_from_quaternion(v[7], v[4], v[5], v[6], n);
    } else {
      tp.pose = pose_from_quaternion(v[4], v[5], v[6], v[7], n);
    }
    if (!out.empty() && tp.t < out.back().t)
      throw std::runtime_error("trajectory: timestamps not sorted at line " + std::to_string(n));
    out.push_back(tp);
  }
  return out;
}

std::vector<TimedPose> load_trajectory(const std::string& path, QuatOrder order) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trajectory: " + path);
  return parse_trajectory(in, order);
}

void write_axis_angle_trajectory(std::ostream& out, std::span<const TimedPose> poses) {
  char buf[128];
  for (const auto& p : poses) {
    const int len = std::snprintf(buf, sizeof(buf), "%.9f %.15g %.15g %.15g\n", p.t, p.pose.theta.x(),
                                  p.pose.theta.y(), p.pose.theta.z());
    out.write(buf, len);
  }
}

void write_ground_truth(std::ostream& out, std::span<const TimedPose> poses) {
  char buf[160];
  for (const auto& p : poses) {
    const Eigen::Quaterniond q(p.pose.rotation());
    const int len = std::snprintf(buf, sizeof(buf), "%.9f 0 0 0 %.15g %.15g %.15g %.15g\n", p.t, q.x(), q.y(),
                                  q.z(), q.w());
    out.write(buf, len);
  }
}

Pose slerp(const Pose& a, const Pose& b, double s) {
  // Relative rotation keeps the interpolation on the short arc.
  const Mat3 Ra = a.rotation();
  const Vec3 delta = axis_angle_from_rotation(Ra.transpose() * b.rotation());
  return Pose(axis_angle_from_rotation(Ra * rotation_from_axis_angle(s * delta)));
}

Pose interpolate(std::span<const TimedPose> traj, double t) {
  if (traj.empty()) throw std::invalid_argument("interpolate: empty trajectory");
  if (t <= traj.front().t) return traj.front().pose;
  if (t >= traj.back().t) return traj.back().pose;
  auto it = std::upper_bound(traj.begin(), traj.end(), t, [](double x, const TimedPose& p) { return x < p.t; });
  const TimedPose& hi = *it;
  const TimedPose& lo = *(it - 1);
  const double span = hi.t - lo.t;
  const double s = span > 0.0 ? (t - lo.t) / span : 0.0;
  return slerp(lo.pose, hi.pose, s);
}

}  // namespace evpano
