#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fdnet/heat_data.hpp"
#include "fdnet/model.hpp"

namespace fdnet {

/// alpha = beta * dt / dx^2; the explicit scheme is stable iff alpha <= 0.5.
struct StabilityParams {
  double alpha = 0.0;
  bool stable = true;
};

StabilityParams stability_alpha(double beta, double dt, double dx);

/// Classical explicit update u <- u + alpha*(u[i-1] - 2 u[i] + u[i+1]) on the
/// interior with boundary nodes held at zero. Never throws on blow-up:
/// non-finite values propagate and are reported by the caller.
FieldSeries euler_rollout(std::span<const double> u0, double alpha,
                          std::int64_t n_steps);

/// Root mean squared error over all snapshots except the t=0 seed,
/// and all spatial points. Shapes must match.
double rollout_rmse(const FieldSeries& predicted, const FieldSeries& truth);

struct EvalOptions {
  int batch_size = 0;  ///< recorded in the report, not used for evaluation
  /// A rollout counts as diverged when a non-finite value appears or its
  /// max-abs exceeds divergence_factor times the dataset's max-abs.
  double divergence_factor = 100.0;
};

/// RMSE of iterated full-sequence prediction against ground truth over the
/// test split (one Table 1 cell).
struct RolloutReport {
  std::string method;  ///< fdnet-trcg | fdnet-adam | euler
  int k = 0;
  int batch_size = 0;
  double rmse = 0.0;
  std::vector<double> per_sample_rmse;
  bool diverged = false;
  std::string fingerprint;
};

/// Rolls every test sample from its t=0 snapshot over the full horizon and
/// aggregates the squared errors. Non-finite snapshots are excluded with a
/// warning; finite prefixes still contribute.
RolloutReport evaluate_model(const FDNetParams& p, const Dataset& dataset,
                             const std::string& method_label,
                             const EvalOptions& options = {});

std::string report_to_json(const RolloutReport& report);
void save_report(const RolloutReport& report, const std::filesystem::path& path);

/// One Table 1 row; nullopt cells render as DIVERGED.
struct Table1Row {
  int batch_size = 0;
  std::optional<double> k1;
  std::optional<double> k10;
  std::optional<double> k20;
  std::optional<double> euler;
};

/// CSV with header batch_size,k1,k10,k20,euler.
void write_table1_csv(std::ostream& out, const std::vector<Table1Row>& rows);
void write_table1_csv(const std::vector<Table1Row>& rows,
                      const std::filesystem::path& path);

/// FNV-1a hash used for config fingerprints, rendered as fixed-width hex.
std::string fingerprint_hex(std::string_view text);

}  // namespace fdnet
