#include "evpano/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "evpano/trajectory.hpp"

namespace evpano {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic uniform in [0, 1) for a (seed, stream, index) triple.
double hash_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  const std::uint64_t h = splitmix64(splitmix64(seed ^ splitmix64(stream)) ^ index);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

}  // namespace

SynthPanorama::SynthPanorama(MapGeometry geom, std::vector<double> log_intensity)
    : geom_(geom), log_i_(std::move(log_intensity)) {
  if (geom_.width < 2 || geom_.height < 2) throw ConfigError("panorama must be at least 2x2");
  if (log_i_.size() != static_cast<std::size_t>(geom_.width) * geom_.height)
    throw ConfigError("panorama size does not match its geometry");
  gx_.resize(log_i_.size());
  gy_.resize(log_i_.size());
  const int w = geom_.width;
  const int h = geom_.height;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int xl = x == 0 ? w - 1 : x - 1;
      const int xr = x == w - 1 ? 0 : x + 1;
      gx_[idx(x, y)] = 0.5 * (log_i_[idx(xr, y)] - log_i_[idx(xl, y)]);
      if (y == 0) {
        gy_[idx(x, y)] = log_i_[idx(x, 1)] - log_i_[idx(x, 0)];
      } else if (y == h - 1) {
        gy_[idx(x, y)] = log_i_[idx(x, y)] - log_i_[idx(x, y - 1)];
      } else {
        gy_[idx(x, y)] = 0.5 * (log_i_[idx(x, y + 1)] - log_i_[idx(x, y - 1)]);
      }
    }
  }
}

SynthPanorama SynthPanorama::from_image(const GrayImage& img) {
  std::vector<double> li(img.pixels.size());
  const double scale = 1.0 / (static_cast<double>(img.maxval) + 1.0);
  for (std::size_t i = 0; i < li.size(); ++i) li[i] = std::log((img.pixels[i] + 1.0) * scale);
  return SynthPanorama(MapGeometry{img.width, img.height}, std::move(li));
}

Vec2 SynthPanorama::gradient(const MapPoint& v) const {
  if (!(v.v >= 0.0 && v.v <= geom_.height - 1)) return Vec2::Zero();
  const double u = wrap_u(v.u, geom_.width);
  const double fu = std::floor(u);
  const double fv = std::floor(v.v);
  const double a = u - fu;
  const double b = v.v - fv;
  const int x0 = static_cast<int>(fu);
  const int x1 = x0 + 1 == geom_.width ? 0 : x0 + 1;
  const int y0 = static_cast<int>(fv);
  const int y1 = std::min(y0 + 1, geom_.height - 1);
  const double w00 = (1 - a) * (1 - b), w10 = a * (1 - b), w01 = (1 - a) * b, w11 = a * b;
  const std::size_t i00 = idx(x0, y0), i10 = idx(x1, y0), i01 = idx(x0, y1), i11 = idx(x1, y1);
  return {w00 * gx_[i00] + w10 * gx_[i10] + w01 * gx_[i01] + w11 * gx_[i11],
          w00 * gy_[i00] + w10 * gy_[i10] + w01 * gy_[i01] + w11 * gy_[i11]};
}

GrayImage SynthPanorama::to_image() const {
  const auto [lo, hi] = std::minmax_element(log_i_.begin(), log_i_.end());
  const double range = *hi - *lo;
  GrayImage img;
  img.width = geom_.width;
  img.height = geom_.height;
  img.maxval = 255;
  img.pixels.resize(log_i_.size());
  for (std::size_t i = 0; i < log_i_.size(); ++i) {
    const double s = range > 0.0 ? (std::exp(log_i_[i] - *hi) - std::exp(-range)) / (1.0 - std::exp(-range)) : 1.0;
    img.pixels[i] = static_cast<std::uint16_t>(std::lround(255.0 * std::clamp(s, 0.0, 1.0)));
  }
  return img;
}

SynthPanorama make_blob_panorama(const MapGeometry& geom, const BlobTexture& tex) {
  std::vector<double> li(static_cast<std::size_t>(geom.width) * geom.height, 0.0);
  std::mt19937_64 rng(tex.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int k = 0; k < tex.count; ++k) {
    const double cu = unit(rng) * geom.width;
    const double cv = unit(rng) * geom.height;
    const double sigma = tex.sigma_min + unit(rng) * (tex.sigma_max - tex.sigma_min);
    const double amp = (unit(rng) < 0.5 ? -1.0 : 1.0) * tex.amplitude * (0.5 + 0.5 * unit(rng));
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    const int y0 = std::max(0, static_cast<int>(cv) - r);
    const int y1 = std::min(geom.height - 1, static_cast<int>(cv) + r);
    for (int y = y0; y <= y1; ++y) {
      for (int dx = -r; dx <= r; ++dx) {
        const int xi = static_cast<int>(std::floor(cu)) + dx;
        const double du = xi - cu;
        const double dv = y - cv;
        const int x = ((xi % geom.width) + geom.width) % geom.width;
        li[static_cast<std::size_t>(y) * geom.width + x] += amp * std::exp(-(du * du + dv * dv) / (2 * sigma * sigma));
      }
    }
  }
  return SynthPanorama(geom, std::move(li));
}

void SynthConfig::validate() const {
  if (!(contrast_threshold > 0.0)) throw ConfigError("contrast threshold must be > 0");
  if (!(segment_length > 0.0)) throw ConfigError("segment length must be > 0");
  if (!(noise_rate >= 0.0)) throw ConfigError("noise rate must be >= 0");
}

double event_probability(double grad_mag, double C) {
  if (grad_mag <= C || grad_mag <= 0.0) return 0.0;
  return 1.0 - (2.0 / std::numbers::pi) * std::asin(C / grad_mag);
}

double monte_carlo_event_probability(const Vec2& grad, double C, std::size_t n_samples, std::uint64_t seed) {
  if (n_samples == 0) throw std::invalid_argument("n_samples must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double a = angle(rng);
    if (std::abs(grad.x() * std::cos(a) + grad.y() * std::sin(a)) > C) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n_samples);
}

std::vector<Event> uniform_noise_events(const CameraIntrinsics& intr, double t0, double t1, double rate_per_pixel,
                                        std::uint64_t seed) {
  std::vector<Event> out;
  if (!(rate_per_pixel > 0.0) || !(t1 > t0)) return out;
  const double lambda = rate_per_pixel * (t1 - t0);
  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      const std::uint64_t pixel = static_cast<std::uint64_t>(y) * intr.width + x;
      std::mt19937_64 rng(splitmix64(seed ^ splitmix64(pixel + 0x51ed2701ULL)));
      std::poisson_distribution<int> count(lambda);
      std::uniform_real_distribution<double> when(t0, t1);
      const int n = count(rng);
      for (int k = 0; k < n; ++k) out.push_back(Event{when(rng), x, y, (rng() & 1) ? 1 : -1});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
  return out;
}

std::vector<Event> merge_streams(std::span<const Event> a, std::span<const Event> b) {
  std::vector<Event> out(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), out.begin(),
             [](const Event& l, const Event& r) { return l.t < r.t; });
  return out;
}

SynthOutput generate_events(const SynthPanorama& pano, std::span<const TimedPose> trajectory,
                            const CameraIntrinsics& intr, const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  intr.validate();
  if (trajectory.size() < 2) throw DegenerateTrajectory("trajectory needs at least two samples");
  for (std::size_t i = 1; i < trajectory.size(); ++i)
    if (!(trajectory[i].t > trajectory[i - 1].t))
      throw DegenerateTrajectory("trajectory timestamps must be strictly increasing");

  const MapGeometry& geom = pano.geometry();
  const double W = geom.width;
  const double r = cfg.segment_length;
  const double C = cfg.contrast_threshold;
  const Mat3 Kinv = intr.K_inverse();
  const std::size_t n_pix = static_cast<std::size_t>(intr.width) * intr.height;

  // Per-pixel walk state. `acc` is path length since the last cut; starting
  // offsets are staggered so pixels moving in lockstep do not fire at the
  // same instant. The first (partial) segment of each walk is not tested.
  struct Walk {
    double u, v;          // position at the previous sub-step
    double cut_u, cut_v;  // start of the current segment
    double cut_t;
    double acc;
    bool active = false;
    bool primed = false;
  };
  std::vector<Walk> walks(n_pix);

  SynthOutput out;
  std::uint64_t restarts = 0;

  auto step_pixel = [&](std::size_t i, int x, int y, const std::optional<MapPoint>& cur, double t_prev,
                        double t_now) {
    Walk& w = walks[i];
    if (!cur || !(cur->v >= 0.0 && cur->v <= geom.height - 1)) {
      w.active = false;
      return;
    }
    if (!w.active) {
      w = Walk{cur->u, cur->v, cur->u, cur->v, t_now, hash_uniform(seed, i, restarts++) * r, true, false};
      return;
    }
    double pu = w.u, pv = w.v, pt = t_prev;
    double du = wrapped_du(cur->u, pu, W);
    double dv = cur->v - pv;
    double d = std::sqrt(du * du + dv * dv);
    while (d > 0.0 && w.acc + d >= r) {
      const double f = (r - w.acc) / d;
      const double nu = pu + f * du;
      const double nv = pv + f * dv;
      const double nt = pt + f * (t_now - pt);
      if (w.primed) {
        const double su = wrapped_du(nu, w.cut_u, W);
        const double sv = nv - w.cut_v;
        const Vec2 g = pano.gradient({w.cut_u + 0.5 * su, w.cut_v + 0.5 * sv});
        const double change = g.x() * su + g.y() * sv;
        if (std::abs(change) > C) out.events.push_back(Event{0.5 * (w.cut_t + nt), x, y, change > 0.0 ? 1 : -1});
      }
      w.primed = true;
      w.cut_u = nu;
      w.cut_v = nv;
      w.cut_t = nt;
      w.acc = 0.0;
      pu = nu;
      pv = nv;
      pt = nt;
      du = wrapped_du(cur->u, pu, W);
      dv = cur->v - pv;
      d = std::sqrt(du * du + dv * dv);
    }
    w.acc += d;
    w.u = cur->u;
    w.v = cur->v;
  };

  // Initial positions.
  {
    const Mat3 RK = trajectory.front().pose.rotation() * Kinv;
    std::size_t i = 0;
    for (int y = 0; y < intr.height; ++y)
      for (int x = 0; x < intr.width; ++x, ++i)
        step_pixel(i, x, y, try_project_ray(RK * Vec3(x, y, 1.0), geom), trajectory.front().t, trajectory.front().t);
  }

  const double probe_x[3] = {0.0, 0.5 * (intr.width - 1), static_cast<double>(intr.width - 1)};
  const double probe_y[3] = {0.0, 0.5 * (intr.height - 1), static_cast<double>(intr.height - 1)};

  for (std::size_t seg = 0; seg + 1 < trajectory.size(); ++seg) {
    const TimedPose& a = trajectory[seg];
    const TimedPose& b = trajectory[seg + 1];
    const Mat3 Ra = a.pose.rotation();
    const Mat3 Rb = b.pose.rotation();
    const Vec3 delta = axis_angle_from_rotation(Ra.transpose() * Rb);

    double max_disp = 0.0;
    for (double px : probe_x) {
      for (double py : probe_y) {
        const Vec3 X = Kinv * Vec3(px, py, 1.0);
        const auto ma = try_project_ray(Ra * X, geom);
        const auto mb = try_project_ray(Rb * X, geom);
        if (!ma || !mb) continue;
        max_disp = std::max(max_disp, std::hypot(wrapped_du(mb->u, ma->u, W), mb->v - ma->v));
      }
    }
    if (delta.norm() == 0.0) continue;
    const int n_sub = std::max(1, static_cast<int>(std::ceil(1.5 * max_disp / r)));

    double t_prev = a.t;
    for (int k = 1; k <= n_sub; ++k) {
      const double s = static_cast<double>(k) / n_sub;
      const double t_now = a.t + s * (b.t - a.t);
      const Mat3 RK = Ra * rotation_from_axis_angle(s * delta) * Kinv;
      std::size_t i = 0;
      for (int y = 0; y < intr.height; ++y)
        for (int x = 0; x < intr.width; ++x, ++i)
          step_pixel(i, x, y, try_project_ray(RK * Vec3(x, y, 1.0), geom), t_prev, t_now);
      t_prev = t_now;
    }
  }

  std::stable_sort(out.events.begin(), out.events.end(), [](const Event& l, const Event& r) { return l.t < r.t; });

  if (cfg.noise_rate > 0.0) {
    const auto noise =
        uniform_noise_events(intr, trajectory.front().t, trajectory.back().t, cfg.noise_rate, splitmix64(seed + 1));
    out.events = merge_streams(out.events, noise);
  }

  const double t0 = trajectory.front().t;
  const double t1 = trajectory.back().t;
  for (long k = 0;; ++k) {
    const double t = t0 + static_cast<double>(k) / 200.0;
    if (t > t1 + 1e-12) break;
    out.ground_truth.push_back({t, interpolate(trajectory, t)});
  }
  return out;
}

Pose yaw_pitch_pose(double yaw, double pitch) {
  const Mat3 R = rotation_from_axis_angle(Vec3(0.0, yaw, 0.0)) * rotation_from_axis_angle(Vec3(pitch, 0.0, 0.0));
  return Pose(axis_angle_from_rotation(R));
}

std::vector<TimedPose> shake_trajectory(const ShakeMotion& m) {
  constexpr double deg = std::numbers::pi / 180.0;
  const double two_pi = 2.0 * std::numbers::pi;
  const auto n = static_cast<long>(std::llround(m.duration * m.rate_hz));
  std::vector<TimedPose> out;
  out.reserve(static_cast<std::size_t>(n) + 1);
  for (long k = 0; k <= n; ++k) {
    const double t = static_cast<double>(k) / m.rate_hz;
    const double env = m.ramp > 0.0 ? smoothstep((t - m.hold) / m.ramp) : (t >= m.hold ? 1.0 : 0.0);
    const double jitter = two_pi * m.jitter_frequency_hz * t;
    const double yaw = env * m.yaw_amplitude_deg * std::sin(two_pi * m.yaw_frequency_hz * t) +
                       m.jitter_amplitude_deg * std::sin(jitter);
    const double pitch = env * m.pitch_amplitude_deg * std::sin(two_pi * m.pitch_frequency_hz * t) +
                         m.jitter_amplitude_deg * (1.0 - std::cos(jitter));
    out.push_back({t, yaw_pitch_pose(yaw * deg, pitch * deg)});
  }
  return out;
}

}  // namespace evpano
