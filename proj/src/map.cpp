#include "evpano/map.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace evpano {

PanoramicMap::PanoramicMap(MapGeometry geom, double upsample)
    : geom_(geom),
      upsample_(upsample),
      occ_(static_cast<std::size_t>(geom.width) * geom.height, 0.0),
      norm_(static_cast<std::size_t>(geom.width) * geom.height, 0.0) {
  if (geom.width < 2 || geom.height < 3) throw ConfigError("map must be at least 2x3 pixels");
  if (!(upsample >= 1.0)) throw ConfigError("upsample factor must be >= 1");
}

PanoramicMap PanoramicMap::for_camera(const CameraIntrinsics& intr, double upsample) {
  return PanoramicMap(MapGeometry::for_camera(intr, upsample), upsample);
}

double PanoramicMap::ratio_unchecked(std::size_t i) const {
  const double n = norm_[i];
  if (n <= 0.0) return 0.0;
  return std::min(1.0, occ_[i] / n);
}

double PanoramicMap::ratio(int x, int y) const { return ratio_unchecked(index(wrap_x(x), y)); }

std::optional<double> PanoramicMap::try_value(const MapPoint& v) const {
  if (!value_in_bounds(v)) return std::nullopt;
  const double u = wrap_u(v.u, geom_.width);
  const double fu = std::floor(u);
  const double fv = std::floor(v.v);
  const double a = u - fu;
  const double b = v.v - fv;
  const int x0 = static_cast<int>(fu);
  const int x1 = x0 + 1 == geom_.width ? 0 : x0 + 1;
  const int y0 = static_cast<int>(fv);
  const int y1 = std::min(y0 + 1, geom_.height - 1);
  const double m00 = ratio_unchecked(index(x0, y0));
  const double m10 = ratio_unchecked(index(x1, y0));
  const double m01 = ratio_unchecked(index(x0, y1));
  const double m11 = ratio_unchecked(index(x1, y1));
  const double m = (1.0 - b) * ((1.0 - a) * m00 + a * m10) + b * ((1.0 - a) * m01 + a * m11);
  return std::clamp(m, 0.0, 1.0);
}

double PanoramicMap::value(const MapPoint& v) const {
  if (auto m = try_value(v)) return *m;
  throw OutOfBounds();
}

std::optional<Vec2> PanoramicMap::try_gradient(const MapPoint& v) const {
  if (!gradient_in_bounds(v)) return std::nullopt;
  const double gx = 0.5 * (*try_value({v.u + 1.0, v.v}) - *try_value({v.u - 1.0, v.v}));
  const double gy = 0.5 * (*try_value({v.u, v.v + 1.0}) - *try_value({v.u, v.v - 1.0}));
  return Vec2(gx, gy);
}

Vec2 PanoramicMap::gradient(const MapPoint& v) const {
  if (auto g = try_gradient(v)) return *g;
  throw OutOfBounds();
}

bool PanoramicMap::deposit(std::vector<double>& grid, const MapPoint& v, double mass) {
  if (!value_in_bounds(v)) return false;
  const double u = wrap_u(v.u, geom_.width);

  if (!gaussian_splat()) {
    const double fu = std::floor(u);
    const double fv = std::floor(v.v);
    const double a = u - fu;
    const double b = v.v - fv;
    const int x0 = static_cast<int>(fu);
    const int x1 = x0 + 1 == geom_.width ? 0 : x0 + 1;
    const int y0 = static_cast<int>(fv);
    grid[index(x0, y0)] += mass * (1.0 - a) * (1.0 - b);
    grid[index(x1, y0)] += mass * a * (1.0 - b);
    if (b > 0.0) {
      grid[index(x0, y0 + 1)] += mass * (1.0 - a) * b;
      grid[index(x1, y0 + 1)] += mass * a * b;
    }
    return true;
  }

  const double sigma = 0.5 * upsample_;
  const double radius = 2.0 * sigma;
  const int xa = static_cast<int>(std::ceil(u - radius));
  const int xb = static_cast<int>(std::floor(u + radius));
  const int ya = std::max(0, static_cast<int>(std::ceil(v.v - radius)));
  const int yb = std::min(geom_.height - 1, static_cast<int>(std::floor(v.v + radius)));
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);

  kernel_.clear();
  double total = 0.0;
  for (int y = ya; y <= yb; ++y) {
    for (int x = xa; x <= xb; ++x) {
      const double du = x - u;
      const double dv = y - v.v;
      const double d2 = du * du + dv * dv;
      const double w = d2 <= radius * radius ? std::exp(-d2 * inv2s2) : 0.0;
      kernel_.push_back(w);
      total += w;
    }
  }
  const double scale = mass / total;
  std::size_t k = 0;
  for (int y = ya; y <= yb; ++y) {
    for (int x = xa; x <= xb; ++x, ++k) {
      if (kernel_[k] > 0.0) grid[index(wrap_x(x), y)] += scale * kernel_[k];
    }
  }
  return true;
}

bool PanoramicMap::update_occurrence(const MapPoint& v) {
  if (deposit(occ_, v, 1.0)) return true;
  ++dropped_;
  return false;
}

bool PanoramicMap::seed_normalization(const MapPoint& v, double amount) {
  return deposit(norm_, v, amount);
}

void PanoramicMap::update_normalization(const Pose& now, const Pose& prev, const CameraIntrinsics& intr,
                                        int stride) {
  if (stride < 1) throw ConfigError("normalization stride must be >= 1");
  const PoseProjector proj_now(now, intr, geom_);
  const PoseProjector proj_prev(prev, intr, geom_);
  const double weight = static_cast<double>(stride) * stride / upsample_;
  for (int y = 0; y < intr.height; y += stride) {
    for (int x = 0; x < intr.width; x += stride) {
      const auto a = proj_now(x, y);
      const auto b = proj_prev(x, y);
      if (!a || !b) continue;
      const double du = wrapped_du(a->u, b->u, geom_.width);
      const double dv = a->v - b->v;
      const double len = std::sqrt(du * du + dv * dv);
      if (len == 0.0) continue;
      deposit(norm_, *a, weight * len);
    }
  }
}

GrayImage PanoramicMap::export_image() const {
  GrayImage img;
  img.width = geom_.width;
  img.height = geom_.height;
  img.maxval = 255;
  img.pixels.resize(occ_.size());
  for (std::size_t i = 0; i < occ_.size(); ++i)
    img.pixels[i] = static_cast<std::uint16_t>(std::lround(255.0 * ratio_unchecked(i)));
  return img;
}

namespace {

void write_f32le(std::ostream& out, std::span<const double> grid) {
  std::string buf(grid.size() * 4, '\0');
  for (std::size_t i = 0; i < grid.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(grid[i]));
    for (int k = 0; k < 4; ++k) buf[4 * i + k] = static_cast<char>((bits >> (8 * k)) & 0xff);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void read_f32le(std::istream& in, std::vector<double>& grid) {
  std::string buf(grid.size() * 4, '\0');
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!in) throw std::runtime_error("truncated map checkpoint");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    std::uint32_t bits = 0;
    for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[4 * i + k])) << (8 * k);
    grid[i] = std::bit_cast<float>(bits);
  }
}

}  // namespace

void PanoramicMap::save_checkpoint(std::ostream& out) const {
  std::ostringstream header;
  header.precision(17);
  header << "EVMAP1 " << geom_.width << " " << geom_.height << " " << upsample_ << "\n";
  out << header.str();
  write_f32le(out, occ_);
  write_f32le(out, norm_);
}

PanoramicMap PanoramicMap::load_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty map checkpoint");
  std::istringstream hs(line);
  std::string magic;
  MapGeometry g;
  double upsample = 0.0;
  if (!(hs >> magic >> g.width >> g.height >> upsample) || magic != "EVMAP1")
    throw std::runtime_error("bad map checkpoint header");
  PanoramicMap m(g, upsample);
  read_f32le(in, m.occ_);
  read_f32le(in, m.norm_);
  return m;
}

}  // namespace evpano
