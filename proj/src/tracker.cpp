#include "evpano/tracker.hpp"

#include <Eigen/LU>

#include <cmath>

namespace evpano {

void TrackerConfig::validate() const {
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must be in [0, 1]");
  if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
  if (!(min_valid_fraction >= 0.0 && min_valid_fraction <= 1.0))
    throw ConfigError("min_valid_fraction must be in [0, 1]");
}

ResidualSet residuals(std::span<const Event> events, const Pose& theta, const PanoramicMap& map,
                      const CameraIntrinsics& intr) {
  const PoseProjector proj(theta, intr, map.geometry());
  ResidualSet out;
  out.r.resize(events.size(), 1.0);
  out.valid.resize(events.size(), 0);
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto v = proj(events[i].x, events[i].y);
    if (!v || !map.gradient_in_bounds(*v)) continue;
    out.r[i] = 1.0 - *map.try_value(*v);
    out.valid[i] = 1;
  }
  return out;
}

NormalEquations normal_equations(std::span<const Event> events, const Pose& theta,
                                 const PanoramicMap& map, const CameraIntrinsics& intr) {
  const MapGeometry& geom = map.geometry();
  const PoseProjector proj(theta, intr, geom);
  const Mat3 Jl = left_jacobian(theta.theta);

  NormalEquations ne;
  ne.total = events.size();
  for (const Event& e : events) {
    const Vec3 X = proj.ray(e.x, e.y);
    const auto v = try_project_ray(X, geom);
    if (!v || !map.gradient_in_bounds(*v)) continue;
    const double r = 1.0 - *map.try_value(*v);
    const Vec2 g = *map.try_gradient(*v);

    // dr/dtheta = -g^T P'(X) (-[X]x) J_l = (P'^T g x X)^T J_l
    const Vec3 w = projection_jacobian_point(X, geom).transpose() * g;
    const Eigen::RowVector3d row = w.cross(X).transpose() * Jl;

    ne.JtJ.noalias() += row.transpose() * row;
    ne.Jtr.noalias() += row.transpose() * r;
    ne.sum_sq_residual += r * r;
    ++ne.valid;
  }
  return ne;
}

Pose gn_step(const Pose& theta_k, const Pose& theta_prev, const Mat3& JtJ, const Vec3& Jtr, double alpha) {
  const Mat3 H = JtJ + alpha * Mat3::Identity();
  const Vec3 rhs = Jtr + alpha * (theta_k.theta - theta_prev.theta);
  const Eigen::FullPivLU<Mat3> lu(H);
  if (!lu.isInvertible()) throw SingularSystem();
  return Pose(theta_k.theta - lu.solve(rhs));
}

TrackResult track_packet(std::span<const Event> events, const Pose& theta_prev, const PanoramicMap& map,
                         const CameraIntrinsics& intr, const TrackerConfig& cfg) {
  return track_packet(events, theta_prev, map, intr, cfg, nullptr);
}

TrackResult track_packet(std::span<const Event> events, const Pose& theta_prev, const PanoramicMap& map,
                         const CameraIntrinsics& intr, const TrackerConfig& cfg,
                         std::vector<Pose>* iterates) {
  TrackResult result;
  result.pose = theta_prev;
  if (events.empty()) {
    result.low_confidence = true;
    return result;
  }

  Pose current = theta_prev;
  Pose previous = theta_prev;
  for (int k = 0; k < cfg.max_iters; ++k) {
    const Pose look_ahead(current.theta + cfg.beta * (current.theta - previous.theta));
    const NormalEquations ne = normal_equations(events, look_ahead, map, intr);
    const double valid_fraction = static_cast<double>(ne.valid) / static_cast<double>(ne.total);
    if (valid_fraction < cfg.min_valid_fraction || ne.valid == 0) {
      if (k == 0) {
        result.valid_fraction = valid_fraction;
        result.mean_residual =
            (ne.sum_sq_residual + static_cast<double>(ne.total - ne.valid)) / static_cast<double>(ne.total);
        result.low_confidence = true;
        return result;
      }
      break;
    }
    Pose next;
    try {
      next = gn_step(look_ahead, theta_prev, ne.JtJ, ne.Jtr, cfg.alpha);
    } catch (const SingularSystem&) {
      if (k == 0) {
        result.low_confidence = true;
        return result;
      }
      break;
    }
    previous = current;
    current = next;
    result.iterations_used = k + 1;
    if (iterates) iterates->push_back(current);
  }

  const ResidualSet rs = residuals(events, current, map, intr);
  double sum = 0.0;
  std::size_t valid = 0;
  for (std::size_t i = 0; i < rs.r.size(); ++i) {
    sum += rs.r[i] * rs.r[i];
    valid += rs.valid[i];
  }
  result.pose = current;
  result.mean_residual = sum / static_cast<double>(events.size());
  result.valid_fraction = static_cast<double>(valid) / static_cast<double>(events.size());
  return result;
}

}  // namespace evpano
