#include "evpano/geometry.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <vector>

namespace evpano {

Mat3 CameraIntrinsics::K() const {
  Mat3 K;
  K << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return K;
}

Mat3 CameraIntrinsics::K_inverse() const {
  Mat3 Ki;
  Ki << 1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0;
  return Ki;
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ConfigError("focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ConfigError("sensor resolution must be positive");
  if (!std::isfinite(cx) || !std::isfinite(cy)) throw ConfigError("principal point must be finite");
}

Mat3 Pose::rotation() const { return rotation_from_axis_angle(theta); }

MapGeometry MapGeometry::for_camera(const CameraIntrinsics& intr, double upsample) {
  if (!(upsample >= 1.0)) throw ConfigError("upsample factor must be >= 1");
  auto even = [](double x) { return std::max(2, 2 * static_cast<int>(std::lround(0.5 * x))); };
  MapGeometry g;
  g.width = even(2.0 * std::numbers::pi * intr.fx * upsample);
  g.height = even(std::numbers::pi * intr.fy * upsample);
  return g;
}

Mat3 skew(const Vec3& x) {
  Mat3 S;
  S << 0.0, -x.z(), x.y(), x.z(), 0.0, -x.x(), -x.y(), x.x(), 0.0;
  return S;
}

Mat3 rotation_from_axis_angle(const Vec3& theta) {
  const double a2 = theta.squaredNorm();
  const Mat3 S = skew(theta);
  double A, B;
  if (a2 < 1e-8) {
    // Taylor terms up to a^4 keep the error below double precision here.
    A = 1.0 - a2 / 6.0 + a2 * a2 / 120.0;
    B = 0.5 - a2 / 24.0 + a2 * a2 / 720.0;
  } else {
    const double a = std::sqrt(a2);
    A = std::sin(a) / a;
    B = (1.0 - std::cos(a)) / a2;
  }
  return Mat3::Identity() + A * S + B * S * S;
}

Vec3 axis_angle_from_rotation(const Mat3& R) {
  const Eigen::AngleAxisd aa(R);
  return aa.axis() * aa.angle();
}

Mat3 left_jacobian(const Vec3& theta) {
  const double a2 = theta.squaredNorm();
  const Mat3 S = skew(theta);
  double B, C;
  if (a2 < 1e-8) {
    B = 0.5 - a2 / 24.0;
    C = 1.0 / 6.0 - a2 / 120.0;
  } else {
    const double a = std::sqrt(a2);
    B = (1.0 - std::cos(a)) / a2;
    C = (a - std::sin(a)) / (a2 * a);
  }
  return Mat3::Identity() + B * S + C * S * S;
}

Vec3 backproject(const Vec2& pixel, const CameraIntrinsics& intr) {
  return {(pixel.x() - intr.cx) / intr.fx, (pixel.y() - intr.cy) / intr.fy, 1.0};
}

std::optional<MapPoint> try_project_ray(const Vec3& X, const MapGeometry& geom) {
  const double rho2 = X.x() * X.x() + X.z() * X.z();
  if (!(rho2 >= kPoleEpsilon)) return std::nullopt;
  const double px = geom.px();
  const double py = geom.py();
  MapPoint m;
  m.u = wrap_u(px * (1.0 + std::atan2(X.x(), X.z()) / std::numbers::pi), geom.width);
  m.v = py * (1.0 + X.y() / std::sqrt(rho2));
  return m;
}

MapPoint project_ray(const Vec3& X, const MapGeometry& geom) {
  if (auto m = try_project_ray(X, geom)) return *m;
  throw PoleSingularity();
}

MapPoint project(const Vec2& pixel, const Pose& pose, const CameraIntrinsics& intr,
                 const MapGeometry& geom) {
  return project_ray(pose.rotation() * backproject(pixel, intr), geom);
}

double wrap_u(double u, double width) {
  double w = std::fmod(u, width);
  if (w < 0.0) w += width;
  // fmod of a tiny negative number can round back up to width.
  if (w >= width) w -= width;
  return w;
}

double wrapped_du(double a, double b, double width) {
  double d = std::fmod(a - b, width);
  if (d > 0.5 * width) d -= width;
  if (d < -0.5 * width) d += width;
  return d;
}

Mat23 projection_jacobian_point(const Vec3& X, const MapGeometry& geom) {
  const double rho2 = X.x() * X.x() + X.z() * X.z();
  if (!(rho2 >= kPoleEpsilon)) throw PoleSingularity();
  const double rho = std::sqrt(rho2);
  const double rho3 = rho2 * rho;
  const double ku = geom.px() / std::numbers::pi;
  const double py = geom.py();
  Mat23 J;
  J << ku * X.z() / rho2, 0.0, -ku * X.x() / rho2,
      -py * X.y() * X.x() / rho3, py / rho, -py * X.y() * X.z() / rho3;
  return J;
}

Mat93 rotation_jacobian(const Pose& theta0) {
  const Mat3 R = theta0.rotation();
  Mat93 J;
  for (int i = 0; i < 3; ++i) J.block<3, 3>(3 * i, 0) = -skew(R.col(i));
  return J;
}

Mat39 transform_jacobian(const Vec3& X) {
  Mat39 J = Mat39::Zero();
  for (int i = 0; i < 3; ++i) J.block<3, 3>(0, 3 * i) = X(i) * Mat3::Identity();
  return J;
}

Mat23 projection_jacobian_pose(const Vec2& pixel, const Pose& pose, const CameraIntrinsics& intr,
                               const MapGeometry& geom) {
  const Vec3 X = backproject(pixel, intr);
  const Vec3 Xr = pose.rotation() * X;
  return projection_jacobian_point(Xr, geom) * transform_jacobian(X) * rotation_jacobian(pose) *
         left_jacobian(pose.theta);
}

PoseProjector::PoseProjector(const Pose& pose, const CameraIntrinsics& intr, const MapGeometry& geom)
    : R_(pose.rotation()), RKinv_(R_ * intr.K_inverse()), geom_(geom) {}

CameraIntrinsics parse_calibration(std::istream& in) {
  std::vector<double> values;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ConfigError("calibration: not a number: '" + tok + "'");
      }
    }
  }
  CameraIntrinsics intr;
  if (values.size() != 4 && values.size() != 6 && values.size() != 9) {
    throw ConfigError("calibration: expected 'fx fy cx cy [width height]', got " +
                      std::to_string(values.size()) + " numbers");
  }
  intr.fx = values[0];
  intr.fy = values[1];
  intr.cx = values[2];
  intr.cy = values[3];
  if (values.size() == 6) {
    if (values[4] != std::floor(values[4]) || values[5] != std::floor(values[5]))
      throw ConfigError("calibration: width and height must be integers");
    intr.width = static_cast<int>(values[4]);
    intr.height = static_cast<int>(values[5]);
  }
  intr.validate();
  return intr;
}

CameraIntrinsics load_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open calibration file: " + path);
  return parse_calibration(in);
}

}  // namespace evpano
