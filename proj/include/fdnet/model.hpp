#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fdnet/errors.hpp"
#include "fdnet/grid.hpp"

namespace fdnet {

inline constexpr int kNumChannels = 2;
inline constexpr int kNumParams = 16;  // 2 channels * (3 + 2 + 2) stencil weights + 2 aggregation weights

/// One trainable derivative-mimicking stencil: a size-3 interior filter plus
/// independent size-2 filters for the two boundary nodes.
template <class T>
struct BasicFilter {
  std::array<T, 3> interior{};        ///< weights for (u[i-1], u[i], u[i+1])
  std::array<T, 2> left_boundary{};   ///< weights for (u[0], u[1]) -> out[0]
  std::array<T, 2> right_boundary{};  ///< weights for (u[M-2], u[M-1]) -> out[M-1]

  bool operator==(const BasicFilter&) const = default;
};

/// All trainable weights of the network: two filter channels, the two
/// pointwise aggregation weights that merge them, and the number of
/// auxiliary sub-steps composed per data interval. The parameter vector has
/// length 16 regardless of grid size or k; there are no biases and no
/// activation functions.
template <class T>
struct BasicParams {
  std::array<BasicFilter<T>, kNumChannels> filters{};
  std::array<T, kNumChannels> agg{};  ///< aggregation weights c1, c2
  int k = 1;                          ///< auxiliary steps per data interval

  bool operator==(const BasicParams&) const = default;
};

using DerivativeFilter = BasicFilter<double>;
using FDNetParams = BasicParams<double>;
using ParamVector = std::array<double, kNumParams>;

// ---------------------------------------------------------------------------
// Kernels, generic over the scalar type so the differentiation module can
// run them on dual numbers. All loops use a fixed evaluation order; the
// double instantiation is the production forward pass.
// ---------------------------------------------------------------------------

/// out[i] = f.interior . (u[i-1], u[i], u[i+1]) on the interior, size-2
/// boundary stencils at the ends. Requires u.size() >= 3.
template <class T>
void apply_filter_span(std::span<const T> u, const BasicFilter<T>& f,
                       std::span<T> out) {
  const std::size_t m = u.size();
  out[0] = f.left_boundary[0] * u[0] + f.left_boundary[1] * u[1];
  for (std::size_t i = 1; i + 1 < m; ++i) {
    out[i] = (f.interior[0] * u[i - 1] + f.interior[1] * u[i]) +
             f.interior[2] * u[i + 1];
  }
  out[m - 1] = f.right_boundary[0] * u[m - 2] + f.right_boundary[1] * u[m - 1];
}

/// Transpose of apply_filter_span as a linear map in u (scatter form).
template <class T>
void apply_filter_transpose_span(std::span<const T> lam, const BasicFilter<T>& f,
                                 std::span<T> out) {
  const std::size_t m = lam.size();
  for (std::size_t i = 0; i < m; ++i) out[i] = T{};
  out[0] += f.left_boundary[0] * lam[0];
  out[1] += f.left_boundary[1] * lam[0];
  for (std::size_t i = 1; i + 1 < m; ++i) {
    out[i - 1] += f.interior[0] * lam[i];
    out[i] += f.interior[1] * lam[i];
    out[i + 1] += f.interior[2] * lam[i];
  }
  out[m - 2] += f.right_boundary[0] * lam[m - 1];
  out[m - 1] += f.right_boundary[1] * lam[m - 1];
}

/// Residual update u' = u + c1 F1(u) + c2 F2(u). feat0/feat1 receive the two
/// filter responses (the backward pass reuses them).
template <class T>
void auxiliary_step_span(std::span<const T> u, const BasicParams<T>& p,
                         std::span<T> feat0, std::span<T> feat1,
                         std::span<T> out) {
  apply_filter_span(u, p.filters[0], feat0);
  apply_filter_span(u, p.filters[1], feat1);
  const std::size_t m = u.size();
  for (std::size_t i = 0; i < m; ++i) {
    out[i] = u[i] + (p.agg[0] * feat0[i] + p.agg[1] * feat1[i]);
  }
}

/// Flattening order: filters[0].interior, filters[0].left_boundary,
/// filters[0].right_boundary, filters[1].{...}, agg. This is also the
/// drawing order of init_params and the coordinate order of gradients.
template <class T>
std::array<T, kNumParams> flatten_params(const BasicParams<T>& p) {
  std::array<T, kNumParams> out{};
  std::size_t n = 0;
  for (const auto& f : p.filters) {
    for (const auto& w : f.interior) out[n++] = w;
    for (const auto& w : f.left_boundary) out[n++] = w;
    for (const auto& w : f.right_boundary) out[n++] = w;
  }
  for (const auto& c : p.agg) out[n++] = c;
  return out;
}

template <class T>
BasicParams<T> unflatten_params(const std::array<T, kNumParams>& v, int k) {
  BasicParams<T> p;
  p.k = k;
  std::size_t n = 0;
  for (auto& f : p.filters) {
    for (auto& w : f.interior) w = v[n++];
    for (auto& w : f.left_boundary) w = v[n++];
    for (auto& w : f.right_boundary) w = v[n++];
  }
  for (auto& c : p.agg) c = v[n++];
  return p;
}

// ---------------------------------------------------------------------------
// Public double-precision operations.
// ---------------------------------------------------------------------------

std::vector<double> apply_filter(std::span<const double> u, const DerivativeFilter& f);

/// One auxiliary sub-step; linear in u for fixed parameters.
std::vector<double> auxiliary_step(std::span<const double> u, const FDNetParams& p);

/// Advances one full data interval by composing k auxiliary steps.
std::vector<double> forward_step(std::span<const double> u, const FDNetParams& p);

/// A sequence of spatial fields, laid out [time][space].
struct FieldSeries {
  std::int64_t num_points = 0;
  std::vector<double> values;

  FieldSeries() = default;
  FieldSeries(std::int64_t snapshots, std::int64_t points)
      : num_points(points),
        values(static_cast<std::size_t>(snapshots * points), 0.0) {}

  std::int64_t num_snapshots() const {
    return num_points == 0 ? 0 : static_cast<std::int64_t>(values.size()) / num_points;
  }
  std::span<const double> snapshot(std::int64_t j) const {
    return {values.data() + j * num_points, static_cast<std::size_t>(num_points)};
  }
  std::span<double> snapshot(std::int64_t j) {
    return {values.data() + j * num_points, static_cast<std::size_t>(num_points)};
  }

  bool operator==(const FieldSeries&) const = default;
};

/// Iterated prediction: seq[0] = u0, seq[j+1] = forward_step(seq[j]).
/// Throws DivergenceError (with the failing step index) on non-finite state.
FieldSeries rollout(std::span<const double> u0, const FDNetParams& p,
                    std::int64_t n_steps);

/// Non-throwing rollout used by evaluation: the series stops at the last
/// finite snapshot and diverged_at records the first bad step, if any.
struct PartialRollout {
  FieldSeries series;
  std::optional<std::int64_t> diverged_at;
};
PartialRollout rollout_partial(std::span<const double> u0, const FDNetParams& p,
                               std::int64_t n_steps);

/// Interior stencils and aggregation weights i.i.d. Normal(0, scale^2)
/// (16 draws in flattening order); boundary stencils start at zero so the
/// step matrix's boundary self-couplings begin at exactly 1.
/// scale = 0 yields the identity network.
FDNetParams init_params(std::uint64_t seed, int k, double scale);

/// Parameters that reproduce the classical explicit scheme: channel 2
/// carries the (1, -2, 1) stencil, aggregation alpha/k per sub-step,
/// all boundary weights zero. With k = 1 a forward_step is bit-identical
/// to one explicit Euler update on zero-boundary data.
FDNetParams euler_params(double alpha, int k = 1);

ParamVector to_param_vector(const FDNetParams& p);
FDNetParams params_from_vector(const ParamVector& v, int k);

/// JSON document with the 16 named weights, k, format version, and optional
/// grid metadata. Doubles are encoded as shortest round-trip decimals, so
/// save/load reproduces every weight bit-exactly.
std::string params_to_json(const FDNetParams& p,
                           const std::optional<Grid1D>& grid = std::nullopt);
FDNetParams params_from_json(const std::string& text,
                             std::optional<Grid1D>* grid_out = nullptr);

void save_params(const FDNetParams& p, const std::filesystem::path& path,
                 const std::optional<Grid1D>& grid = std::nullopt);
FDNetParams load_params(const std::filesystem::path& path,
                        std::optional<Grid1D>* grid_out = nullptr);

}  // namespace fdnet
