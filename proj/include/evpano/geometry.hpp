#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>

namespace evpano {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat39 = Eigen::Matrix<double, 3, 9>;
using Mat93 = Eigen::Matrix<double, 9, 3>;

/// Squared horizontal ray length below which a ray is considered to point
/// along the cylinder axis.
inline constexpr double kPoleEpsilon = 1e-12;

class PoleSingularity : public std::runtime_error {
 public:
  PoleSingularity() : std::runtime_error("ray points along the cylinder axis") {}
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Pinhole intrinsics plus sensor resolution. Lens distortion is not modelled.
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 240;
  int height = 180;

  Mat3 K() const;
  Mat3 K_inverse() const;
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  void validate() const;
};

/// Camera orientation as an axis-angle vector (radians). The rotation maps
/// camera rays into the panorama frame.
struct Pose {
  Vec3 theta = Vec3::Zero();

  Pose() = default;
  explicit Pose(const Vec3& t) : theta(t) {}
  Pose(double x, double y, double z) : theta(x, y, z) {}

  Mat3 rotation() const;
};

struct TimedPose {
  double t = 0.0;
  Pose pose;
};

/// Continuous panorama coordinates in map pixels. `u` wraps modulo the map
/// width.
struct MapPoint {
  double u = 0.0;
  double v = 0.0;
};

/// Size and center of a cylindrical panorama.
struct MapGeometry {
  int width = 0;
  int height = 0;

  double px() const { return 0.5 * width; }
  double py() const { return 0.5 * height; }

  /// Default panorama size for a camera: one map pixel per camera pixel
  /// horizontally at upsample 1, both dimensions rounded to even numbers.
  static MapGeometry for_camera(const CameraIntrinsics& intr, double upsample);
};

Mat3 skew(const Vec3& x);

/// Rodrigues' formula, exact for any angle including zero.
Mat3 rotation_from_axis_angle(const Vec3& theta);

/// Inverse of rotation_from_axis_angle, angle in [0, pi].
Vec3 axis_angle_from_rotation(const Mat3& R);

/// Left Jacobian of SO(3): exp(theta + d) ~= exp(J_l(theta) d) exp(theta).
Mat3 left_jacobian(const Vec3& theta);

Vec3 backproject(const Vec2& pixel, const CameraIntrinsics& intr);

/// Cylindrical projection of an already rotated ray.
MapPoint project_ray(const Vec3& X, const MapGeometry& geom);
std::optional<MapPoint> try_project_ray(const Vec3& X, const MapGeometry& geom);

MapPoint project(const Vec2& pixel, const Pose& pose, const CameraIntrinsics& intr,
                 const MapGeometry& geom);

/// Wraps `u` into [0, width).
double wrap_u(double u, double width);

/// Signed horizontal difference a - b taken the short way around the seam.
double wrapped_du(double a, double b, double width);

/// d(project_ray)/dX at the rotated ray X.
Mat23 projection_jacobian_point(const Vec3& X, const MapGeometry& geom);

/// Stacked (-[r1]x; -[r2]x; -[r3]x) for the columns r_i of exp([theta0]x).
/// This is the derivative of exp([d]x) R with respect to d at d = 0.
Mat93 rotation_jacobian(const Pose& theta0);

/// X^T kron I3: derivative of T*X with respect to the column-stacked T.
Mat39 transform_jacobian(const Vec3& X);

/// Full derivative of project() with respect to the axis-angle vector,
/// chained as point * transform * rotation * left_jacobian.
Mat23 projection_jacobian_pose(const Vec2& pixel, const Pose& pose, const CameraIntrinsics& intr,
                               const MapGeometry& geom);

/// Precomputes R K^-1 for one pose so per-pixel projection is a 3x3 product
/// plus the cylinder formula.
class PoseProjector {
 public:
  PoseProjector(const Pose& pose, const CameraIntrinsics& intr, const MapGeometry& geom);

  Vec3 ray(double x, double y) const { return RKinv_ * Vec3(x, y, 1.0); }
  std::optional<MapPoint> operator()(double x, double y) const { return try_project_ray(ray(x, y), geom_); }

  const Mat3& rotation() const { return R_; }
  const MapGeometry& geometry() const { return geom_; }

 private:
  Mat3 R_;
  Mat3 RKinv_;
  MapGeometry geom_;
};

/// Reads `fx fy cx cy [width height]`. The nine-number layout of public
/// event-camera datasets (`fx fy cx cy k1 k2 p1 p2 k3`) is also accepted and
/// the distortion terms are ignored. Lines starting with '#' are comments.
CameraIntrinsics parse_calibration(std::istream& in);
CameraIntrinsics load_calibration(const std::string& path);

}  // namespace evpano
