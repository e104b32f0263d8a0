#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "evpano/geometry.hpp"
#include "evpano/image.hpp"

namespace evpano {

class OutOfBounds : public std::runtime_error {
 public:
  OutOfBounds() : std::runtime_error("map point outside the vertical map range") {}
};

/// Panoramic event-probability map M = O / N.
///
/// O accumulates event occurrences, N accumulates the length of camera path
/// swept over each position, in camera pixels (map pixels / upsample).
/// Pixel (i, j) sits at continuous coordinate (i, j); the horizontal axis
/// wraps around, the vertical one does not. Deposits use bilinear weights up to an upsample factor of 1.5 and a
/// truncated Gaussian (sigma = upsample / 2, radius 2 sigma) above that, so
/// that sparse camera samples still cover a super-resolved grid.
///
/// Single writer; reads during updates are not synchronised.
class PanoramicMap {
 public:
  PanoramicMap(MapGeometry geom, double upsample);
  static PanoramicMap for_camera(const CameraIntrinsics& intr, double upsample = 1.0);

  const MapGeometry& geometry() const { return geom_; }
  int width() const { return geom_.width; }
  int height() const { return geom_.height; }
  double upsample() const { return upsample_; }
  bool gaussian_splat() const { return upsample_ > 1.5; }

  /// Bilinear interpolation of the per-pixel ratio, clamped to [0, 1];
  /// pixels without normalization mass read as 0.
  double value(const MapPoint& v) const;
  std::optional<double> try_value(const MapPoint& v) const;

  /// Central differences of value() with a one-pixel step.
  Vec2 gradient(const MapPoint& v) const;
  std::optional<Vec2> try_gradient(const MapPoint& v) const;

  bool value_in_bounds(const MapPoint& v) const { return v.v >= 0.0 && v.v <= geom_.height - 1; }
  bool gradient_in_bounds(const MapPoint& v) const { return v.v >= 1.0 && v.v <= geom_.height - 2; }

  /// Adds one unit of occurrence mass at `v`. Returns false (and counts a
  /// dropped event) when `v` is outside the vertical range.
  bool update_occurrence(const MapPoint& v);

  /// Adds `amount` of normalization mass at `v` with the occurrence splat.
  bool seed_normalization(const MapPoint& v, double amount);

  /// For every camera pixel on a `stride` grid, deposits the length of its
  /// path from `prev` to `now` at its projection under `now`. Lengths are in
  /// camera-pixel units (map pixels / upsample) so M keeps the same scale at
  /// any upsampling factor. Deposits are scaled by stride^2 to keep the
  /// density comparable.
  void update_normalization(const Pose& now, const Pose& prev, const CameraIntrinsics& intr,
                            int stride = 1);

  double occurrence(int x, int y) const { return occ_[index(x, y)]; }
  double normalization(int x, int y) const { return norm_[index(x, y)]; }
  /// Unclamped-then-clamped ratio at an integer pixel (0 where N == 0).
  double ratio(int x, int y) const;

  std::span<const double> occurrences() const { return occ_; }
  std::span<const double> normalizations() const { return norm_; }
  std::size_t dropped_events() const { return dropped_; }

  /// 8-bit rendering of M; N == 0 pixels are black.
  GrayImage export_image() const;

  /// `EVMAP1 width height upsample\n`, then O and N as little-endian float32,
  /// row-major.
  void save_checkpoint(std::ostream& out) const;
  static PanoramicMap load_checkpoint(std::istream& in);

 private:
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * geom_.width + x; }
  int wrap_x(int x) const {
    x %= geom_.width;
    return x < 0 ? x + geom_.width : x;
  }
  double ratio_unchecked(std::size_t i) const;
  bool deposit(std::vector<double>& grid, const MapPoint& v, double mass);

  MapGeometry geom_;
  double upsample_;
  std::vector<double> occ_;
  std::vector<double> norm_;
  std::size_t dropped_ = 0;
  std::vector<double> kernel_;  // scratch for Gaussian weights
};

}  // namespace evpano
