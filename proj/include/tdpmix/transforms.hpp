#pragma once

// Transformation families tau(item, rho). Families are black boxes to the
// samplers: they expose their parameter dimension, per-dimension scale hints,
// application, inverse application and a parameter-validity check. The zero
// vector is the identity for every family.

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <string>

#include "tdpmix/common.hpp"

namespace tdpmix {

using Params = Vector;

class TransformFamily {
 public:
  TransformFamily(std::string name, Vector scale_hints);
  virtual ~TransformFamily() = default;

  const std::string& name() const { return name_; }
  std::size_t dim() const { return hints_.size(); }
  std::span<const double> scale_hints() const { return hints_; }
  Params identity() const { return Params(dim(), 0.0); }

  // True when rho lies in the family's admissible set.
  virtual bool valid(std::span<const double> rho) const;
  // Throws DimensionError / TransformError when rho is not admissible.
  void check(std::span<const double> rho) const;

  // x = tau(y, rho)
  virtual DataItem apply(const DataItem& item, std::span<const double> rho) const = 0;
  // y = tau(x, rho^{-1})
  virtual DataItem apply_inverse(const DataItem& item, std::span<const double> rho) const = 0;
  // Closed-form parameter vector of the inverse transform when the family is
  // closed under inversion; std::nullopt otherwise (apply_inverse still works).
  virtual std::optional<Params> invert(std::span<const double> rho) const = 0;

  // Zero-mean Gaussian draw with std = magnitude * hint per dimension,
  // rejection-sampled into the valid set.
  virtual Params random_params(double magnitude, Rng& rng) const;

 protected:
  void check_item(const DataItem& item, DataKind kind) const;

 private:
  std::string name_;
  Vector hints_;
};

using FamilyPtr = std::shared_ptr<const TransformFamily>;

// Dimension-0 family; reduces the mixture to plain clustering.
class IdentityFamily final : public TransformFamily {
 public:
  IdentityFamily();
  DataItem apply(const DataItem& item, std::span<const double> rho) const override;
  DataItem apply_inverse(const DataItem& item, std::span<const double> rho) const override;
  std::optional<Params> invert(std::span<const double> rho) const override;
};

// Rotation of 2D points about the origin; rho = (angle in radians).
class Rotation2D final : public TransformFamily {
 public:
  explicit Rotation2D(double angle_hint = 0.7853981633974483);
  DataItem apply(const DataItem& item, std::span<const double> rho) const override;
  DataItem apply_inverse(const DataItem& item, std::span<const double> rho) const override;
  std::optional<Params> invert(std::span<const double> rho) const override;
};

using Matrix3 = std::array<double, 9>;  // row-major

Matrix3 matmul(const Matrix3& a, const Matrix3& b);
Matrix3 inverse(const Matrix3& m);

// Seven-parameter affine image warp, rho = (tx, ty, theta, log sx, log sy, hx, hy).
// Forward matrix: T(center) * T(t) * R(theta) * Shear(hx, hy) * Scale(sx, sy) * T(-center),
// mapping coordinates of the canonical image onto the observed image.
class AffineImage final : public TransformFamily {
 public:
  struct Hints {
    double translation = 0.5;
    double rotation = 0.1;
    double log_scale = 0.02;
    double shear = 0.05;
  };

  AffineImage(int width, int height);
  AffineImage(int width, int height, Hints hints);

  int width() const { return width_; }
  int height() const { return height_; }

  bool valid(std::span<const double> rho) const override;
  DataItem apply(const DataItem& item, std::span<const double> rho) const override;
  DataItem apply_inverse(const DataItem& item, std::span<const double> rho) const override;
  std::optional<Params> invert(std::span<const double> rho) const override;

  Matrix3 matrix(std::span<const double> rho) const;
  Matrix3 matrix_inverse(std::span<const double> rho) const;
  // Factor matrices in composition order (centre, translate, rotate, shear, scale, uncentre).
  std::array<Matrix3, 6> factors(std::span<const double> rho) const;
  // Recovers rho from a forward matrix of this family (shear hy is set to 0).
  Params decompose(const Matrix3& m) const;

  // Output pixel p takes the bilinear sample of the source at map(p), zero outside.
  static DataItem warp(const DataItem& src, const Matrix3& output_to_source);

 private:
  int width_;
  int height_;
};

// Fourteen-parameter curve transform:
//   y(u) = exp(s) * exp(sum_k d_k B_k(u)) * x(w(u)) + t,
//   w(u) = u + sum_{k=1..4} c_k sin(k pi u), u in [0,1],
// rho = (c1..c4, d1..d8, s, t). B_k are 8 evenly spaced cubic B-splines.
class CurveWarp : public TransformFamily {
 public:
  static constexpr std::size_t kWarpTerms = 4;
  static constexpr std::size_t kAmplitudeBases = 8;
  static constexpr std::size_t kFullDim = 14;

  struct Hints {
    double warp = 0.3;  // c_k hint is warp / (k pi)
    double amplitude = 0.25;
    double log_scale = 0.25;
    double translation = 0.25;  // multiplied by amplitude_scale
  };

  explicit CurveWarp(double amplitude_scale = 1.0);
  CurveWarp(double amplitude_scale, Hints hints);

  bool valid(std::span<const double> rho) const override;
  DataItem apply(const DataItem& item, std::span<const double> rho) const override;
  DataItem apply_inverse(const DataItem& item, std::span<const double> rho) const override;
  // The inverse of a sinusoidal warp is not itself sinusoidal.
  std::optional<Params> invert(std::span<const double> rho) const override;
  Params random_params(double magnitude, Rng& rng) const override;

  double amplitude_scale() const { return amplitude_scale_; }

  // Expands family parameters to the full 14-vector (identity for curve14).
  virtual Params expand(std::span<const double> rho) const;

  static double warp(std::span<const double> full, double u);
  static double warp_derivative(std::span<const double> full, double u);
  // Solves w(u) = v for u on [0,1] (Newton refinement of a bracketing guess).
  static double inverse_warp(std::span<const double> full, double v);
  static double basis(std::size_t k, double u);
  static double log_amplitude(std::span<const double> full, double u);
  // sum_k k pi |c_k|; the warp is strictly increasing when this is < 1.
  static double warp_slope_bound(std::span<const double> full);

 protected:
  CurveWarp(std::string name, Vector hints, double amplitude_scale);

 private:
  double amplitude_scale_;
};

// curve14 with the 8 non-linear amplitude parameters frozen at zero;
// rho = (c1..c4, s, t).
class CurveWarpNoAmplitude final : public CurveWarp {
 public:
  explicit CurveWarpNoAmplitude(double amplitude_scale = 1.0);
  CurveWarpNoAmplitude(double amplitude_scale, Hints hints);
  Params expand(std::span<const double> rho) const override;
};

// Builds a family by CLI name: identity, rotation2d, affine7, curve14, curve13-noamp.
// Image families need the image size; curve families use amplitude_scale.
struct FamilyShape {
  int width = 0;
  int height = 0;
  double amplitude_scale = 1.0;
};
FamilyPtr make_family(const std::string& name, const FamilyShape& shape);

// Linear interpolation of a uniformly sampled curve at fractional index pos,
// clamped to the end samples.
double sample_linear(std::span<const double> values, double pos);

}  // namespace tdpmix
