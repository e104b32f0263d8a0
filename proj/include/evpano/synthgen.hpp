#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "evpano/events.hpp"
#include "evpano/geometry.hpp"
#include "evpano/image.hpp"

namespace evpano {

class DegenerateTrajectory : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Log-intensity panorama laid out on a cylindrical map grid, with its
/// gradient (per map pixel) precomputed by central differences. The
/// horizontal axis wraps; vertical borders use one-sided differences.
class SynthPanorama {
 public:
  SynthPanorama(MapGeometry geom, std::vector<double> log_intensity);

  /// 8/16-bit image: intensity scaled to (0, 1] as (raw + 1) / (maxval + 1),
  /// then logged.
  static SynthPanorama from_image(const GrayImage& img);

  const MapGeometry& geometry() const { return geom_; }
  double log_intensity(int x, int y) const { return log_i_[idx(x, y)]; }
  Vec2 gradient_at(int x, int y) const { return {gx_[idx(x, y)], gy_[idx(x, y)]}; }

  /// Bilinear interpolation of the gradient; zero outside the vertical range.
  Vec2 gradient(const MapPoint& v) const;

  /// Renders exp(log I) rescaled to 8 bits, for inspection.
  GrayImage to_image() const;

 private:
  std::size_t idx(int x, int y) const { return static_cast<std::size_t>(y) * geom_.width + x; }

  MapGeometry geom_;
  std::vector<double> log_i_;
  std::vector<double> gx_;
  std::vector<double> gy_;
};

/// Sum of Gaussian bumps in log-intensity, wrapped horizontally.
struct BlobTexture {
  int count = 400;
  double sigma_min = 3.0;
  double sigma_max = 8.0;
  double amplitude = 2.5;  // peak |log-intensity| per bump
  std::uint64_t seed = 1;
};

SynthPanorama make_blob_panorama(const MapGeometry& geom, const BlobTexture& tex);

struct SynthConfig {
  double contrast_threshold = 0.15;  // C, log-intensity units
  double segment_length = 1.0;       // r, map pixels
  double noise_rate = 0.0;           // spurious events per pixel per second

  void validate() const;
};

/// Probability that a uniformly random unit motion direction s satisfies
/// |<grad, s>| > C: 1 - (2/pi) asin(C / |grad|), zero when |grad| <= C.
double event_probability(double grad_mag, double C);

/// Brute-force estimate of event_probability: fraction of `n_samples`
/// uniformly random unit directions that exceed the threshold.
double monte_carlo_event_probability(const Vec2& grad, double C, std::size_t n_samples, std::uint64_t seed);

struct SynthOutput {
  std::vector<Event> events;
  std::vector<TimedPose> ground_truth;  // 200 Hz resampling of the input path
};

/// Simulates events for a rotating camera looking at `pano`.
///
/// Each camera pixel's path through the panorama is cut into segments of
/// exactly `segment_length` map pixels. A segment fires one event when the
/// log-intensity change predicted by the panorama gradient at its midpoint
/// exceeds C; polarity is the sign of that change. Uniform Poisson noise is
/// added at `noise_rate`. Output is sorted by timestamp.
SynthOutput generate_events(const SynthPanorama& pano, std::span<const TimedPose> trajectory,
                            const CameraIntrinsics& intr, const SynthConfig& cfg, std::uint64_t seed);

/// Poisson noise events, uniform over the sensor and over [t0, t1).
std::vector<Event> uniform_noise_events(const CameraIntrinsics& intr, double t0, double t1, double rate_per_pixel,
                                        std::uint64_t seed);

/// Merges two timestamp-sorted streams.
std::vector<Event> merge_streams(std::span<const Event> a, std::span<const Event> b);

/// Yaw/pitch shake about the initial orientation. Both axes follow
/// amplitude * envelope(t) * sin(2 pi f t); the envelope ramps smoothly from
/// 0 to 1 over `ramp` seconds after an initial `hold`. A small circular jitter runs throughout so the
/// camera never rests.
struct ShakeMotion {
  double duration = 10.0;
  double rate_hz = 1000.0;
  double yaw_amplitude_deg = 30.0;
  double yaw_frequency_hz = 1.0;
  double pitch_amplitude_deg = 8.0;
  double pitch_frequency_hz = 0.7;
  double jitter_amplitude_deg = 0.5;
  double jitter_frequency_hz = 5.0;
  double hold = 0.5;
  double ramp = 1.0;
};

std::vector<TimedPose> shake_trajectory(const ShakeMotion& motion);

/// Rotation by `yaw` about the vertical (+y) axis after `pitch` about +x.
Pose yaw_pitch_pose(double yaw, double pitch);

}  // namespace evpano
