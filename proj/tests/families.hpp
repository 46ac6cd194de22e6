#pragma once

// Test-only transformation families with closed-form behaviour.

#include "tdpmix/transforms.hpp"

namespace testfam {

// x = y + rho on every coordinate of a curve.
class Shift : public tdpmix::TransformFamily {
 public:
  explicit Shift(double hint = 1.0) : TransformFamily("shift", {hint}) {}

  tdpmix::DataItem apply(const tdpmix::DataItem& item,
                         std::span<const double> rho) const override {
    check(rho);
    tdpmix::DataItem out = item;
    for (double& v : out.values) v += rho[0];
    return out;
  }
  tdpmix::DataItem apply_inverse(const tdpmix::DataItem& item,
                                 std::span<const double> rho) const override {
    check(rho);
    tdpmix::DataItem out = item;
    for (double& v : out.values) v -= rho[0];
    return out;
  }
  std::optional<tdpmix::Params> invert(std::span<const double> rho) const override {
    return tdpmix::Params{-rho[0]};
  }
};

// Shift that fails for any non-zero rho on items whose first value is 99.
class Poisoned : public Shift {
 public:
  tdpmix::DataItem apply_inverse(const tdpmix::DataItem& item,
                                 std::span<const double> rho) const override {
    if (item.values[0] == 99.0 && rho[0] != 0.0) throw tdpmix::TransformError("poisoned item");
    return Shift::apply_inverse(item, rho);
  }
};

}  // namespace testfam
