#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fdnet/grid.hpp"

namespace fdnet {

/// Mode amplitudes defining one sample's initial condition.
struct SampleSpec {
  std::vector<double> coeffs;  ///< C_m, one amplitude per Fourier mode
  std::uint64_t seed = 0;      ///< per-sample stream that produced coeffs

  int num_modes() const { return static_cast<int>(coeffs.size()); }
  bool operator==(const SampleSpec&) const = default;
};

/// Physical and temporal parameters shared by every sample of a dataset.
struct PhysicsConfig {
  double beta = 2.0e-4;           ///< thermal conductivity
  double dt = 1.0;                ///< snapshot interval
  std::int64_t num_steps = 1000;  ///< snapshots stored after t = 0
  Grid1D grid{};

  void validate() const;
  bool operator==(const PhysicsConfig&) const = default;
};

/// Generation parameters kept for provenance and bit-exact round trips.
struct DatasetProvenance {
  int num_modes = 5;
  std::uint64_t coeff_seed = 0;
  double split_ratio = 0.75;
  std::uint64_t split_seed = 0;

  bool operator==(const DatasetProvenance&) const = default;
};

/// Simulated temperature series, laid out [sample][time][space], plus the
/// train/test split and the specs that generated each sample.
struct Dataset {
  PhysicsConfig physics;
  DatasetProvenance provenance;
  std::vector<SampleSpec> specs;
  std::vector<std::int64_t> train_indices;
  std::vector<std::int64_t> test_indices;
  std::vector<double> values;  ///< flat row-major [s][t][x]

  std::int64_t num_samples() const { return static_cast<std::int64_t>(specs.size()); }
  std::int64_t num_snapshots() const { return physics.num_steps + 1; }
  std::int64_t num_points() const { return physics.grid.num_points; }

  std::span<const double> snapshot(std::int64_t sample, std::int64_t time) const;

  /// Largest absolute value stored in the dataset.
  double max_abs() const;

  bool operator==(const Dataset&) const = default;
};

/// Closed-form heat equation solution on the grid:
///   u(x_i, t) = sum_m C_m sin(m pi x_i / L) exp(-beta (m pi / L)^2 t)
/// with both endpoints pinned to exactly zero.
std::vector<double> analytic_solution(const SampleSpec& spec,
                                      const PhysicsConfig& physics, double t);

/// Draws per-sample mode amplitudes from seeded normal streams (stream s is
/// seeded with coeff_seed + s), evaluates snapshots at t = 0, dt, ..,
/// num_steps*dt, and splits samples into train/test by a seeded shuffle.
Dataset generate_dataset(std::int64_t num_samples, const PhysicsConfig& physics,
                         int num_modes, std::uint64_t coeff_seed,
                         double split_ratio, std::uint64_t split_seed);

/// Two-part .fdds file: one line of UTF-8 JSON manifest, then a raw
/// little-endian float64 payload in [sample][time][space] order.
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Manifest JSON for a dataset (also reused for config fingerprints).
std::string dataset_manifest_json(const Dataset& dataset);

}  // namespace fdnet
