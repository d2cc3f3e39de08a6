#include "fdnet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>

#include "json.hpp"
#include "text_util.hpp"

namespace fdnet {

namespace {

std::string cell_text(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return "DIVERGED";
  return detail::format_double(*v);
}

}  // namespace

StabilityParams stability_alpha(double beta, double dt, double dx) {
  if (!(beta > 0.0) || !(dt > 0.0) || !(dx > 0.0)) {
    throw InvalidInputError("stability_alpha: beta, dt, dx must all be positive");
  }
  const double alpha = beta * dt / (dx * dx);
  return {alpha, alpha <= 0.5};
}

FieldSeries euler_rollout(std::span<const double> u0, double alpha,
                          std::int64_t n_steps) {
  if (u0.size() < 3) throw InvalidInputError("euler_rollout: need at least 3 points");
  if (n_steps < 1) throw InvalidInputError("euler_rollout: n_steps must be >= 1");

  const auto m = static_cast<std::int64_t>(u0.size());
  FieldSeries series(n_steps + 1, m);
  std::copy(u0.begin(), u0.end(), series.snapshot(0).begin());
  for (std::int64_t j = 0; j < n_steps; ++j) {
    std::span<const double> u = series.snapshot(j);
    std::span<double> next = series.snapshot(j + 1);
    next[0] = 0.0;
    for (std::int64_t i = 1; i + 1 < m; ++i) {
      const double lap = (u[i - 1] - 2.0 * u[i]) + u[i + 1];
      next[i] = u[i] + alpha * lap;
    }
    next[m - 1] = 0.0;
  }
  return series;
}

double rollout_rmse(const FieldSeries& predicted, const FieldSeries& truth) {
  if (predicted.num_points != truth.num_points ||
      predicted.num_snapshots() != truth.num_snapshots()) {
    throw InvalidInputError("rollout_rmse: shape mismatch");
  }
  const std::int64_t snapshots = predicted.num_snapshots();
  if (snapshots < 2) throw InvalidInputError("rollout_rmse: need at least 2 snapshots");

  // The t=0 snapshot is the given seed, not a prediction.
  const auto skip = static_cast<std::size_t>(predicted.num_points);
  double sse = 0.0;
  for (std::size_t i = skip; i < predicted.values.size(); ++i) {
    const double e = predicted.values[i] - truth.values[i];
    sse += e * e;
  }
  return std::sqrt(sse / static_cast<double>(predicted.values.size() - skip));
}

RolloutReport evaluate_model(const FDNetParams& p, const Dataset& dataset,
                             const std::string& method_label,
                             const EvalOptions& options) {
  if (dataset.test_indices.empty()) {
    throw InvalidInputError("evaluate_model: test split is empty");
  }

  const std::int64_t m = dataset.num_points();
  const std::int64_t horizon = dataset.physics.num_steps;
  const double blowup_limit = options.divergence_factor * dataset.max_abs();

  RolloutReport report;
  report.method = method_label;
  report.k = p.k;
  report.batch_size = options.batch_size;
  report.fingerprint =
      fingerprint_hex(params_to_json(p) + dataset_manifest_json(dataset));

  double total_sse = 0.0;
  std::int64_t total_count = 0;
  for (const std::int64_t sample : dataset.test_indices) {
    const PartialRollout rolled = rollout_partial(dataset.snapshot(sample, 0), p, horizon);
    if (rolled.diverged_at) {
      report.diverged = true;
      std::cerr << "warning: rollout for test sample " << sample
                << " went non-finite at step " << *rolled.diverged_at
                << "; excluding the remainder\n";
    }

    double sample_sse = 0.0;
    std::int64_t sample_count = 0;
    double sample_max = 0.0;
    const std::int64_t predicted_snapshots = rolled.series.num_snapshots();
    for (std::int64_t t = 1; t < predicted_snapshots; ++t) {
      std::span<const double> pred = rolled.series.snapshot(t);
      std::span<const double> truth = dataset.snapshot(sample, t);
      for (std::int64_t i = 0; i < m; ++i) {
        const double e = pred[i] - truth[i];
        sample_sse += e * e;
        sample_max = std::max(sample_max, std::abs(pred[i]));
      }
      sample_count += m;
    }
    if (sample_max > blowup_limit) report.diverged = true;

    total_sse += sample_sse;
    total_count += sample_count;
    report.per_sample_rmse.push_back(
        sample_count > 0 ? std::sqrt(sample_sse / static_cast<double>(sample_count))
                         : std::numeric_limits<double>::infinity());
  }

  if (total_count == 0) {
    std::cerr << "warning: no finite predictions; RMSE undefined\n";
    report.rmse = std::numeric_limits<double>::infinity();
    report.diverged = true;
  } else {
    report.rmse = std::sqrt(total_sse / static_cast<double>(total_count));
  }
  return report;
}

std::string report_to_json(const RolloutReport& report) {
  const nlohmann::json doc = {
      {"method", report.method},
      {"k", report.k},
      {"batch_size", report.batch_size},
      {"rmse", report.rmse},
      {"per_sample_rmse", report.per_sample_rmse},
      {"diverged", report.diverged},
      {"fingerprint", report.fingerprint},
  };
  return doc.dump(2) + "\n";
}

void save_report(const RolloutReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("save_report: cannot open '" + path.string() + "'");
  out << report_to_json(report);
  out.flush();
  if (!out) throw IoError("save_report: write failed for '" + path.string() + "'");
}

void write_table1_csv(std::ostream& out, const std::vector<Table1Row>& rows) {
  out << "batch_size,k1,k10,k20,euler\n";
  for (const Table1Row& row : rows) {
    out << row.batch_size << ',' << cell_text(row.k1) << ',' << cell_text(row.k10)
        << ',' << cell_text(row.k20) << ',' << cell_text(row.euler) << '\n';
  }
}

void write_table1_csv(const std::vector<Table1Row>& rows,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("write_table1_csv: cannot open '" + path.string() + "'");
  write_table1_csv(out, rows);
  out.flush();
  if (!out) throw IoError("write_table1_csv: write failed for '" + path.string() + "'");
}

std::string fingerprint_hex(std::string_view text) {
  // FNV-1a, 64-bit.
  std::uint64_t hash = 1469598103934665603ull;
  for (const char c : text) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 1099511628211ull;
  }
  char buf[17];
  static const char* digits = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    buf[i] = digits[hash & 0xf];
    hash >>= 4;
  }
  buf[16] = '\0';
  return std::string(buf, 16);
}

}  // namespace fdnet
