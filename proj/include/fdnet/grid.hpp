#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "fdnet/errors.hpp"

namespace fdnet {

/// Uniform spatial discretization of [0, length] with num_points nodes.
/// x(0) == 0 and x(num_points - 1) == length hold exactly.
struct Grid1D {
  std::int64_t num_points = 31;
  double length = std::numbers::pi;

  double dx() const { return length / static_cast<double>(num_points - 1); }

  double x(std::int64_t i) const {
    // i/(M-1) evaluates to exactly 1 at the right endpoint.
    return length * (static_cast<double>(i) / static_cast<double>(num_points - 1));
  }

  void validate() const {
    if (num_points < 2) throw ConfigError("grid: num_points must be >= 2");
    if (!(length > 0.0) || !std::isfinite(length)) {
      throw ConfigError("grid: length must be positive and finite");
    }
  }

  bool operator==(const Grid1D&) const = default;
};

}  // namespace fdnet
