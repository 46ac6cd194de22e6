#include "tdpmix/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace tdpmix {

namespace {

constexpr double kMinScale = 1e-6;

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Matrix3 translation(double tx, double ty) { return {1, 0, tx, 0, 1, ty, 0, 0, 1}; }

}  // namespace

// ---------------------------------------------------------------------------

TransformFamily::TransformFamily(std::string name, Vector scale_hints)
    : name_(std::move(name)), hints_(std::move(scale_hints)) {}

bool TransformFamily::valid(std::span<const double> rho) const {
  return rho.size() == dim() && all_finite(rho);
}

void TransformFamily::check(std::span<const double> rho) const {
  if (rho.size() != dim()) {
    throw DimensionError(name_ + ": expected " + std::to_string(dim()) + " parameters, got " +
                         std::to_string(rho.size()));
  }
  if (!valid(rho)) throw TransformError(name_ + ": parameters outside the admissible set");
}

void TransformFamily::check_item(const DataItem& item, DataKind kind) const {
  if (item.kind != kind) {
    throw DimensionError(name_ + ": cannot transform " + to_string(item.kind) + " items");
  }
}

Params TransformFamily::random_params(double magnitude, Rng& rng) const {
  Params rho(dim(), 0.0);
  if (magnitude <= 0.0) return rho;
  for (int attempt = 0;; ++attempt) {
    if (attempt > 0 && attempt % 1000 == 0) magnitude *= 0.5;
    for (std::size_t d = 0; d < dim(); ++d) rho[d] = sample_normal(0.0, magnitude * hints_[d], rng);
    if (valid(rho)) return rho;
  }
}

// ---------------------------------------------------------------------------

IdentityFamily::IdentityFamily() : TransformFamily("identity", {}) {}

DataItem IdentityFamily::apply(const DataItem& item, std::span<const double> rho) const {
  check(rho);
  return item;
}

DataItem IdentityFamily::apply_inverse(const DataItem& item, std::span<const double> rho) const {
  check(rho);
  return item;
}

std::optional<Params> IdentityFamily::invert(std::span<const double> rho) const {
  check(rho);
  return Params{};
}

// ---------------------------------------------------------------------------

Rotation2D::Rotation2D(double angle_hint) : TransformFamily("rotation2d", {angle_hint}) {}

DataItem Rotation2D::apply(const DataItem& item, std::span<const double> rho) const {
  check(rho);
  check_item(item, DataKind::points2d);
  const double c = std::cos(rho[0]);
  const double s = std::sin(rho[0]);
  const double x = item.values[0];
  const double y = item.values[1];
  return make_point(c * x - s * y, s * x + c * y);
}

DataItem Rotation2D::apply_inverse(const DataItem& item, std::span<const double> rho) const {
  check(rho);
  const double neg[1] = {-rho[0]};
  return apply(item, neg);
}

std::optional<Params> Rotation2D::invert(std::span<const double> rho) const {
  check(rho);
  return Params{-rho[0]};
}

// ---------------------------------------------------------------------------

Matrix3 matmul(const Matrix3& a, const Matrix3& b) {
  Matrix3 c{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a[i * 3 + k] * b[k * 3 + j];
      c[i * 3 + j] = s;
    }
  }
  return c;
}

Matrix3 inverse(const Matrix3& m) {
  const double det = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
                     m[2] * (m[3] * m[7] - m[4] * m[6]);
  if (std::abs(det) < 1e-300) throw TransformError("singular matrix");
  const double inv = 1.0 / det;
  return {(m[4] * m[8] - m[5] * m[7]) * inv, (m[2] * m[7] - m[1] * m[8]) * inv,
          (m[1] * m[5] - m[2] * m[4]) * inv, (m[5] * m[6] - m[3] * m[8]) * inv,
          (m[0] * m[8] - m[2] * m[6]) * inv, (m[2] * m[3] - m[0] * m[5]) * inv,
          (m[3] * m[7] - m[4] * m[6]) * inv, (m[1] * m[6] - m[0] * m[7]) * inv,
          (m[0] * m[4] - m[1] * m[3]) * inv};
}

AffineImage::AffineImage(int width, int height) : AffineImage(width, height, Hints{}) {}

AffineImage::AffineImage(int width, int height, Hints hints)
    : TransformFamily("affine7", {hints.translation, hints.translation, hints.rotation,
                                  hints.log_scale, hints.log_scale, hints.shear, hints.shear}),
      width_(width),
      height_(height) {
  if (width <= 0 || height <= 0) throw DimensionError("affine7 needs a positive image size");
}

bool AffineImage::valid(std::span<const double> rho) const {
  if (!TransformFamily::valid(rho)) return false;
  const double sx = std::exp(rho[3]);
  const double sy = std::exp(rho[4]);
  if (sx < kMinScale || sy < kMinScale || sx > 1.0 / kMinScale || sy > 1.0 / kMinScale) {
    return false;
  }
  return 1.0 - rho[5] * rho[6] > kMinScale;
}

std::array<Matrix3, 6> AffineImage::factors(std::span<const double> rho) const {
  check(rho);
  const double cx = 0.5 * (width_ - 1);
  const double cy = 0.5 * (height_ - 1);
  const double c = std::cos(rho[2]);
  const double s = std::sin(rho[2]);
  return {translation(cx, cy),
          translation(rho[0], rho[1]),
          Matrix3{c, -s, 0, s, c, 0, 0, 0, 1},
          Matrix3{1, rho[5], 0, rho[6], 1, 0, 0, 0, 1},
          Matrix3{std::exp(rho[3]), 0, 0, 0, std::exp(rho[4]), 0, 0, 0, 1},
          translation(-cx, -cy)};
}

Matrix3 AffineImage::matrix(std::span<const double> rho) const {
  const auto f = factors(rho);
  Matrix3 m = f[0];
  for (std::size_t i = 1; i < f.size(); ++i) m = matmul(m, f[i]);
  return m;
}

Matrix3 AffineImage::matrix_inverse(std::span<const double> rho) const {
  return inverse(matrix(rho));
}

Params AffineImage::decompose(const Matrix3& m) const {
  const double cx = 0.5 * (width_ - 1);
  const double cy = 0.5 * (height_ - 1);
  const Matrix3 local = matmul(matmul(translation(-cx, -cy), m), translation(cx, cy));
  const double a00 = local[0], a01 = local[1], a10 = local[3], a11 = local[4];
  // local linear part = R(theta) * [[sx, h*sy], [0, sy]]
  const double sx = std::hypot(a00, a10);
  const double theta = std::atan2(a10, a00);
  const double c = std::cos(theta), s = std::sin(theta);
  const double u01 = c * a01 + s * a11;
  const double u11 = -s * a01 + c * a11;
  if (sx < kMinScale || u11 < kMinScale) {
    throw TransformError("affine7: matrix is not decomposable into the family");
  }
  return {local[2], local[5], theta, std::log(sx), std::log(u11), u01 / u11, 0.0};
}

std::optional<Params> AffineImage::invert(std::span<const double> rho) const {
  return decompose(matrix_inverse(rho));
}

DataItem AffineImage::warp(const DataItem& src, const Matrix3& map) {
  const int w = src.width;
  const int h = src.height;
  const double* in = src.values.data();
  DataItem out{DataKind::images, w, h, Vector(static_cast<std::size_t>(w) * h, 0.0)};
  double* dst = out.values.data();
  auto at = [&](int xi, int yi) -> double {
    return (xi >= 0 && xi < w && yi >= 0 && yi < h) ? in[yi * w + xi] : 0.0;
  };
  for (int row = 0; row < h; ++row) {
    double sx = map[1] * row + map[2];
    double sy = map[4] * row + map[5];
    for (int col = 0; col < w; ++col, sx += map[0], sy += map[3]) {
      if (sx <= -1.0 || sy <= -1.0 || sx >= w || sy >= h) continue;
      const double fx0 = std::floor(sx);
      const double fy0 = std::floor(sy);
      const int x0 = static_cast<int>(fx0);
      const int y0 = static_cast<int>(fy0);
      const double ax = sx - fx0;
      const double ay = sy - fy0;
      double v;
      if (x0 >= 0 && y0 >= 0 && x0 + 1 < w && y0 + 1 < h) {
        const double* p = in + y0 * w + x0;
        v = (1 - ay) * ((1 - ax) * p[0] + ax * p[1]) + ay * ((1 - ax) * p[w] + ax * p[w + 1]);
      } else {
        v = (1 - ay) * ((1 - ax) * at(x0, y0) + ax * at(x0 + 1, y0)) +
            ay * ((1 - ax) * at(x0, y0 + 1) + ax * at(x0 + 1, y0 + 1));
      }
      dst[row * w + col] = v;
    }
  }
  return out;
}

DataItem AffineImage::apply(const DataItem& item, std::span<const double> rho) const {
  check_item(item, DataKind::images);
  if (item.width != width_ || item.height != height_) {
    throw DimensionError("affine7: image size does not match the family");
  }
  return warp(item, matrix_inverse(rho));
}

DataItem AffineImage::apply_inverse(const DataItem& item, std::span<const double> rho) const {
  check_item(item, DataKind::images);
  if (item.width != width_ || item.height != height_) {
    throw DimensionError("affine7: image size does not match the family");
  }
  return warp(item, matrix(rho));
}

// ---------------------------------------------------------------------------

namespace {

Vector curve_hints(double amplitude_scale, const CurveWarp::Hints& hints, bool with_amplitude) {
  Vector v;
  for (std::size_t k = 1; k <= CurveWarp::kWarpTerms; ++k) {
    v.push_back(hints.warp / (static_cast<double>(k) * std::numbers::pi));
  }
  if (with_amplitude) {
    for (std::size_t k = 0; k < CurveWarp::kAmplitudeBases; ++k) v.push_back(hints.amplitude);
  }
  v.push_back(hints.log_scale);
  v.push_back(hints.translation * amplitude_scale);
  return v;
}

double cubic_bspline(double t) {
  const double a = std::abs(t);
  if (a < 1.0) return (4.0 - 6.0 * a * a + 3.0 * a * a * a) / 6.0;
  if (a < 2.0) {
    const double r = 2.0 - a;
    return r * r * r / 6.0;
  }
  return 0.0;
}

}  // namespace

double sample_linear(std::span<const double> values, double pos) {
  const std::size_t n = values.size();
  if (n == 0) throw DimensionError("sample_linear on an empty curve");
  if (!(pos > 0.0)) return values.front();
  const double last = static_cast<double>(n - 1);
  if (pos >= last) return values.back();
  const double f = std::floor(pos);
  const std::size_t i = static_cast<std::size_t>(f);
  const double a = pos - f;
  return (1.0 - a) * values[i] + a * values[i + 1];
}

CurveWarp::CurveWarp(double amplitude_scale) : CurveWarp(amplitude_scale, Hints{}) {}

CurveWarp::CurveWarp(double amplitude_scale, Hints hints)
    : CurveWarp("curve14", curve_hints(amplitude_scale, hints, true), amplitude_scale) {}

CurveWarp::CurveWarp(std::string name, Vector hints, double amplitude_scale)
    : TransformFamily(std::move(name), std::move(hints)), amplitude_scale_(amplitude_scale) {}

Params CurveWarp::expand(std::span<const double> rho) const {
  return Params(rho.begin(), rho.end());
}

double CurveWarp::warp(std::span<const double> full, double u) {
  double w = u;
  for (std::size_t k = 0; k < kWarpTerms; ++k) {
    w += full[k] * std::sin(static_cast<double>(k + 1) * std::numbers::pi * u);
  }
  return w;
}

double CurveWarp::warp_derivative(std::span<const double> full, double u) {
  double d = 1.0;
  for (std::size_t k = 0; k < kWarpTerms; ++k) {
    const double kp = static_cast<double>(k + 1) * std::numbers::pi;
    d += full[k] * kp * std::cos(kp * u);
  }
  return d;
}

double CurveWarp::warp_slope_bound(std::span<const double> full) {
  double s = 0.0;
  for (std::size_t k = 0; k < kWarpTerms; ++k) {
    s += static_cast<double>(k + 1) * std::numbers::pi * std::abs(full[k]);
  }
  return s;
}

double CurveWarp::inverse_warp(std::span<const double> full, double v) {
  if (v <= 0.0) return 0.0;
  if (v >= 1.0) return 1.0;
  double lo = 0.0, hi = 1.0, u = v;
  for (int iter = 0; iter < 60; ++iter) {
    const double f = warp(full, u) - v;
    if (f == 0.0) return u;
    if (f > 0.0) {
      hi = u;
    } else {
      lo = u;
    }
    double next = u - f / warp_derivative(full, u);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - u) < 1e-15) return next;
    u = next;
  }
  return u;
}

double CurveWarp::basis(std::size_t k, double u) {
  const double spacing = 1.0 / static_cast<double>(kAmplitudeBases - 1);
  return cubic_bspline((u - static_cast<double>(k) * spacing) / spacing);
}

double CurveWarp::log_amplitude(std::span<const double> full, double u) {
  double a = 0.0;
  for (std::size_t k = 0; k < kAmplitudeBases; ++k) {
    const double d = full[kWarpTerms + k];
    if (d != 0.0) a += d * basis(k, u);
  }
  return a;
}

bool CurveWarp::valid(std::span<const double> rho) const {
  if (!TransformFamily::valid(rho)) return false;
  const Params full = expand(rho);
  return warp_slope_bound(full) < 1.0 && std::exp(full[12]) >= kMinScale;
}

DataItem CurveWarp::apply(const DataItem& item, std::span<const double> rho) const {
  check_item(item, DataKind::curves);
  check(rho);
  const Params full = expand(rho);
  const std::size_t n = item.values.size();
  if (n < 2) throw DimensionError(name() + ": curves need at least 2 samples");
  const double last = static_cast<double>(n - 1);
  const double s = full[12];
  const double t = full[13];
  DataItem out = item;
  for (std::size_t j = 0; j < n; ++j) {
    const double u = static_cast<double>(j) / last;
    const double v = sample_linear(item.values, warp(full, u) * last);
    out.values[j] = std::exp(s + log_amplitude(full, u)) * v + t;
  }
  return out;
}

DataItem CurveWarp::apply_inverse(const DataItem& item, std::span<const double> rho) const {
  check_item(item, DataKind::curves);
  check(rho);
  const Params full = expand(rho);
  const std::size_t n = item.values.size();
  if (n < 2) throw DimensionError(name() + ": curves need at least 2 samples");
  const double last = static_cast<double>(n - 1);
  const double s = full[12];
  const double t = full[13];
  DataItem out = item;
  for (std::size_t j = 0; j < n; ++j) {
    const double u = inverse_warp(full, static_cast<double>(j) / last);
    const double x = sample_linear(item.values, u * last);
    out.values[j] = std::exp(-s - log_amplitude(full, u)) * (x - t);
  }
  return out;
}

std::optional<Params> CurveWarp::invert(std::span<const double> rho) const {
  check(rho);
  return std::nullopt;
}

Params CurveWarp::random_params(double magnitude, Rng& rng) const {
  return TransformFamily::random_params(magnitude, rng);
}

CurveWarpNoAmplitude::CurveWarpNoAmplitude(double amplitude_scale)
    : CurveWarpNoAmplitude(amplitude_scale, Hints{}) {}

CurveWarpNoAmplitude::CurveWarpNoAmplitude(double amplitude_scale, Hints hints)
    : CurveWarp("curve13-noamp", curve_hints(amplitude_scale, hints, false), amplitude_scale) {}

Params CurveWarpNoAmplitude::expand(std::span<const double> rho) const {
  Params full(kFullDim, 0.0);
  for (std::size_t k = 0; k < kWarpTerms; ++k) full[k] = rho[k];
  full[12] = rho[4];
  full[13] = rho[5];
  return full;
}

// ---------------------------------------------------------------------------

FamilyPtr make_family(const std::string& name, const FamilyShape& shape) {
  if (name == "identity") return std::make_shared<IdentityFamily>();
  if (name == "rotation2d") return std::make_shared<Rotation2D>();
  if (name == "affine7") {
    AffineImage::Hints hints;
    hints.translation = 0.02 * std::max(shape.width, shape.height);
    return std::make_shared<AffineImage>(shape.width, shape.height, hints);
  }
  if (name == "curve14") return std::make_shared<CurveWarp>(shape.amplitude_scale);
  if (name == "curve13-noamp") return std::make_shared<CurveWarpNoAmplitude>(shape.amplitude_scale);
  throw ConfigError("unknown transformation family '" + name + "'");
}

}  // namespace tdpmix
