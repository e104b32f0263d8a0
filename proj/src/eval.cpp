#include "evpano/eval.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>

#include "evpano/trajectory.hpp"

namespace evpano {

Vec3 viewing_direction(const Pose& pose) { return pose.rotation().col(2).normalized(); }

double angle_deg(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b)) * 180.0 / std::numbers::pi;
}

namespace {

std::vector<AlignedPair> pairs_at_offset(std::span<const TimedPose> est, std::span<const TimedPose> gt,
                                         double offset) {
  std::vector<AlignedPair> pairs;
  const double lo = gt.front().t;
  const double hi = gt.back().t;
  for (const TimedPose& e : est) {
    const double t = e.t + offset;
    if (t < lo || t > hi) continue;
    pairs.push_back({e.t, viewing_direction(e.pose), viewing_direction(interpolate(gt, t))});
  }
  return pairs;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
  return m;
}

bool spans_plane(std::span<const AlignedPair> pairs, bool use_est) {
  const Vec3& first = use_est ? pairs.front().est_dir : pairs.front().gt_dir;
  for (const auto& p : pairs) {
    if (first.cross(use_est ? p.est_dir : p.gt_dir).norm() > 1e-9) return true;
  }
  return false;
}

std::size_t count_inliers(std::span<const AlignedPair> pairs, const Mat3& R, double threshold_deg,
                          std::vector<std::size_t>* inliers) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (angle_deg(R * pairs[i].est_dir, pairs[i].gt_dir) < threshold_deg) {
      ++n;
      if (inliers) inliers->push_back(i);
    }
  }
  return n;
}

}  // namespace

Mat3 fit_rotation(std::span<const AlignedPair> pairs) {
  if (pairs.size() < 2 || !spans_plane(pairs, true) || !spans_plane(pairs, false))
    throw Degenerate("direction pairs are collinear");
  Mat3 H = Mat3::Zero();
  for (const auto& p : pairs) H += p.est_dir * p.gt_dir.transpose();
  const Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 U = svd.matrixU();
  const Mat3 V = svd.matrixV();
  Mat3 D = Mat3::Identity();
  D(2, 2) = (V * U.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return V * D * U.transpose();
}

TemporalAlignment temporal_align(std::span<const TimedPose> est, std::span<const TimedPose> gt,
                                 const TemporalAlignOptions& opts) {
  if (est.empty() || gt.empty()) throw NoOverlap();
  if (est.back().t < gt.front().t || est.front().t > gt.back().t) throw NoOverlap();

  TemporalAlignment best;
  best.pairs = pairs_at_offset(est, gt, 0.0);
  if (!opts.fit_offset) {
    if (best.pairs.empty()) throw NoOverlap();
    return best;
  }

  double best_median = INFINITY;
  const int steps = static_cast<int>(std::lround(opts.max_offset / opts.offset_step));
  // Visit 0, -1, +1, -2, +2, ... so ties resolve towards the smallest shift.
  for (int i = 0; i <= 2 * steps; ++i) {
    const int k = (i % 2 == 1) ? -(i + 1) / 2 : i / 2;
    const double offset = k * opts.offset_step;
    auto pairs = pairs_at_offset(est, gt, offset);
    if (pairs.size() < 2) continue;
    Mat3 R;
    try {
      R = fit_rotation(pairs);
    } catch (const Degenerate&) {
      R = Mat3::Identity();
    }
    std::vector<double> errs;
    errs.reserve(pairs.size());
    for (const auto& p : pairs) errs.push_back(angle_deg(R * p.est_dir, p.gt_dir));
    const double med = median_of(std::move(errs));
    if (med < best_median - 1e-12) {
      best_median = med;
      best.pairs = std::move(pairs);
      best.offset = offset;
    }
  }
  if (best.pairs.empty()) throw NoOverlap();
  return best;
}

RansacResult ransac_global_rotation(std::span<const AlignedPair> pairs, const RansacOptions& opts) {
  if (pairs.size() < 2) throw Degenerate("RANSAC needs at least two pairs");
  std::mt19937_64 rng(opts.seed);
  std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);

  RansacResult result;
  bool found = false;
  for (int it = 0; it < opts.iterations; ++it) {
    const std::size_t i = pick(rng);
    std::size_t j = pick(rng);
    if (i == j) continue;
    const AlignedPair sample[2] = {pairs[i], pairs[j]};
    if (sample[0].est_dir.cross(sample[1].est_dir).norm() < 1e-9 ||
        sample[0].gt_dir.cross(sample[1].gt_dir).norm() < 1e-9)
      continue;
    const Mat3 R = fit_rotation(sample);
    const std::size_t n = count_inliers(pairs, R, opts.inlier_threshold_deg, nullptr);
    if (!found || n > result.sample_inliers) {
      found = true;
      result.sample_inliers = n;
      result.rotation = R;
    }
  }
  if (!found) throw Degenerate("every RANSAC sample was collinear");

  count_inliers(pairs, result.rotation, opts.inlier_threshold_deg, &result.inliers);
  if (result.inliers.size() >= 2) {
    std::vector<AlignedPair> in;
    in.reserve(result.inliers.size());
    for (auto k : result.inliers) in.push_back(pairs[k]);
    try {
      const Mat3 refit = fit_rotation(in);
      std::vector<std::size_t> refit_inliers;
      count_inliers(pairs, refit, opts.inlier_threshold_deg, &refit_inliers);
      if (refit_inliers.size() >= result.inliers.size()) {
        result.rotation = refit;
        result.inliers = std::move(refit_inliers);
      }
    } catch (const Degenerate&) {
      // Collinear inlier set: keep the sample model.
    }
  }
  return result;
}

ErrorStats angular_error_stats(std::span<const AlignedPair> pairs, const Mat3& rotation) {
  ErrorStats s;
  s.errors_deg.reserve(pairs.size());
  double sum = 0.0;
  for (const auto& p : pairs) {
    const double e = angle_deg(rotation * p.est_dir, p.gt_dir);
    s.errors_deg.push_back(e);
    sum += e;
    const auto bin = std::min<std::size_t>(179, static_cast<std::size_t>(std::floor(e)));
    ++s.histogram[bin];
  }
  if (!pairs.empty()) {
    s.mean = sum / static_cast<double>(pairs.size());
    s.median = median_of(s.errors_deg);
  }
  return s;
}

EvaluationReport evaluate_trajectory(std::span<const TimedPose> est, std::span<const TimedPose> gt,
                                     const TemporalAlignOptions& align, const RansacOptions& ransac) {
  EvaluationReport rep;
  const TemporalAlignment ta = temporal_align(est, gt, align);
  rep.offset = ta.offset;
  rep.pairs = ta.pairs.size();
  rep.ransac = ransac_global_rotation(ta.pairs, ransac);
  rep.stats = angular_error_stats(ta.pairs, rep.ransac.rotation);
  return rep;
}

void write_report(std::ostream& out, const EvaluationReport& r) {
  const double inlier_fraction =
      r.pairs == 0 ? 0.0 : static_cast<double>(r.ransac.inliers.size()) / static_cast<double>(r.pairs);
  std::size_t below5 = 0;
  for (std::size_t b = 0; b < 5; ++b) below5 += r.stats.histogram[b];
  out << "pairs            " << r.pairs << "\n"
      << "mean_error_deg   " << r.stats.mean << "\n"
      << "median_error_deg " << r.stats.median << "\n"
      << "below_5deg       " << (r.pairs ? static_cast<double>(below5) / static_cast<double>(r.pairs) : 0.0) << "\n"
      << "inlier_fraction  " << inlier_fraction << "\n"
      << "time_offset_s    " << r.offset << "\n";
}

void write_histogram_csv(std::ostream& out, const ErrorStats& stats) {
  out << "bin_deg,count\n";
  for (std::size_t b = 0; b < stats.histogram.size(); ++b) out << b << "," << stats.histogram[b] << "\n";
}

}  // namespace evpano
