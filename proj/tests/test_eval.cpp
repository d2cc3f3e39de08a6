#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "fdnet/eval.hpp"
#include "fdnet/heat_data.hpp"
#include "fdnet/rng.hpp"
#include "oracles.hpp"

using namespace fdnet;

namespace {

PhysicsConfig physics_with(double dt, std::int64_t num_steps) {
  PhysicsConfig physics;
  physics.beta = 2.0e-4;
  physics.dt = dt;
  physics.num_steps = num_steps;
  physics.grid = Grid1D{31, std::numbers::pi};
  return physics;
}

FieldSeries series_from(const std::vector<std::vector<double>>& rows) {
  FieldSeries s(static_cast<std::int64_t>(rows.size()),
                static_cast<std::int64_t>(rows.front().size()));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    std::copy(rows[j].begin(), rows[j].end(),
              s.snapshot(static_cast<std::int64_t>(j)).begin());
  }
  return s;
}

}  // namespace

TEST_CASE("stability alpha matches the reference parameter values") {
  const double dx = std::numbers::pi / 30.0;
  const StabilityParams stable = stability_alpha(2.0e-4, 1.0, dx);
  CHECK(stable.alpha == doctest::Approx(0.018238).epsilon(1e-4));
  CHECK(stable.stable);

  const StabilityParams unstable = stability_alpha(2.0e-4, 200.0, dx);
  CHECK(unstable.alpha == doctest::Approx(3.64756).epsilon(1e-4));
  CHECK_FALSE(unstable.stable);

  // The boundary alpha = 0.5 counts as stable.
  const StabilityParams edge = stability_alpha(0.5, 1.0, 1.0);
  CHECK(edge.alpha == 0.5);
  CHECK(edge.stable);

  CHECK_THROWS_AS(stability_alpha(0.0, 1.0, 1.0), InvalidInputError);
}

TEST_CASE("euler rollout of the zero field stays zero") {
  const std::vector<double> u0(31, 0.0);
  const FieldSeries seq = euler_rollout(u0, 3.6, 50);
  for (double v : seq.values) CHECK(v == 0.0);
}

TEST_CASE("stable euler rollout tracks the analytic solution at t = 1000") {
  const PhysicsConfig physics = physics_with(1.0, 1000);
  const SampleSpec spec{{1.0}, 0};
  const auto u0 = analytic_solution(spec, physics, 0.0);
  const StabilityParams st = stability_alpha(physics.beta, physics.dt,
                                             physics.grid.dx());
  REQUIRE(st.stable);

  const FieldSeries rolled = euler_rollout(u0, st.alpha, 1000);
  const auto truth = analytic_solution(spec, physics, 1000.0);
  double max_abs = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    max_abs = std::max(max_abs, std::abs(rolled.snapshot(1000)[static_cast<std::int64_t>(i)] -
                                         truth[i]));
  }
  CHECK(max_abs < 2e-2);
}

TEST_CASE("unstable euler amplifies the highest resolvable mode geometrically") {
  const Grid1D grid{31, std::numbers::pi};
  const double alpha = 3.64756;  // well past 0.5 + margin
  std::vector<double> u0(31);
  for (std::int64_t i = 0; i < 31; ++i) {
    u0[static_cast<std::size_t>(i)] = std::sin(29.0 * std::numbers::pi * grid.x(i) /
                                               grid.length);
  }
  u0.front() = 0.0;
  u0.back() = 0.0;

  const FieldSeries seq = euler_rollout(u0, alpha, 12);
  double prev = 0.0;
  for (double v : seq.snapshot(0)) prev = std::max(prev, std::abs(v));
  for (std::int64_t j = 1; j <= 12; ++j) {
    double cur = 0.0;
    for (double v : seq.snapshot(j)) cur = std::max(cur, std::abs(v));
    CHECK(cur > 1.5 * prev);  // growth ratio strictly above 1 each step
    prev = cur;
  }
}

TEST_CASE("halving dt halves the euler time-stepping error") {
  // Reference is the exact solution of the semi-discrete system, which
  // isolates time-stepping error from the fixed spatial discretization error.
  const Grid1D grid{31, std::numbers::pi};
  const double beta = 2.0e-4;
  std::vector<double> u0(31);
  for (std::int64_t i = 0; i < 31; ++i) {
    u0[static_cast<std::size_t>(i)] = std::sin(grid.x(i)) - 0.5 * std::sin(3.0 * grid.x(i));
  }
  u0.front() = 0.0;
  u0.back() = 0.0;

  auto rmse_at_dt = [&](double dt, std::int64_t steps) {
    const double alpha = beta * dt / (grid.dx() * grid.dx());
    const FieldSeries rolled = euler_rollout(u0, alpha, steps);
    double sse = 0.0;
    for (std::int64_t j = 1; j <= steps; ++j) {
      const auto ref = oracles::semidiscrete_solution(u0, grid.length, beta,
                                                      dt * static_cast<double>(j));
      for (std::int64_t i = 0; i < 31; ++i) {
        const double e = rolled.snapshot(j)[i] - ref[static_cast<std::size_t>(i)];
        sse += e * e;
      }
    }
    return std::sqrt(sse / static_cast<double>(steps * 31));
  };

  const double coarse = rmse_at_dt(25.0, 40);
  const double medium = rmse_at_dt(12.5, 80);
  const double fine = rmse_at_dt(6.25, 160);
  CHECK(medium < coarse);
  CHECK(fine < medium);
  CHECK(coarse / medium == doctest::Approx(2.0).epsilon(0.2));
  CHECK(medium / fine == doctest::Approx(2.0).epsilon(0.2));
}

TEST_CASE("rollout rmse definition and edge cases") {
  SUBCASE("identical sequences give zero") {
    const auto s = series_from({{0.0, 1.0}, {2.0, 3.0}});
    CHECK(rollout_rmse(s, s) == 0.0);
  }
  SUBCASE("constant offset e gives e") {
    const auto truth = series_from({{0.0, 1.0, 2.0}, {2.0, 3.0, 1.0}, {0.5, 0.25, 0.75}});
    auto pred = truth;
    for (double& v : pred.values) v += 0.125;
    CHECK(rollout_rmse(pred, truth) == doctest::Approx(0.125).epsilon(1e-14));
  }
  SUBCASE("hand-computed 2x2 example") {
    // Errors (0,0) on the first predicted snapshot and (3,4) on the second:
    // sqrt((9+16)/4) = 2.5.
    const auto truth = series_from({{9.0, 9.0}, {1.0, 1.0}, {1.0, 1.0}});
    const auto pred = series_from({{9.0, 9.0}, {1.0, 1.0}, {4.0, 5.0}});
    CHECK(rollout_rmse(pred, truth) == doctest::Approx(2.5).epsilon(1e-14));
  }
  SUBCASE("shape mismatch is rejected") {
    const auto a = series_from({{0.0, 1.0}, {2.0, 3.0}});
    const auto b = series_from({{0.0, 1.0, 2.0}, {2.0, 3.0, 4.0}});
    CHECK_THROWS_AS(rollout_rmse(a, b), InvalidInputError);
  }
}

TEST_CASE("identity parameters reproduce the frozen-field baseline RMSE") {
  const Dataset ds = generate_dataset(12, physics_with(1.0, 40), 4, 21, 0.75, 3);
  FDNetParams p = init_params(1, 1, 0.3);
  p.agg = {0.0, 0.0};  // identity network freezes the seed snapshot

  const RolloutReport report = evaluate_model(p, ds, "fdnet-trcg");

  // Direct computation of the frozen-field error from the dataset.
  double sse = 0.0;
  std::int64_t count = 0;
  for (std::int64_t s : ds.test_indices) {
    const auto seed_snapshot = ds.snapshot(s, 0);
    for (std::int64_t t = 1; t <= ds.physics.num_steps; ++t) {
      const auto truth = ds.snapshot(s, t);
      for (std::int64_t i = 0; i < ds.num_points(); ++i) {
        const double e = seed_snapshot[i] - truth[i];
        sse += e * e;
        ++count;
      }
    }
  }
  const double expected = std::sqrt(sse / static_cast<double>(count));
  CHECK(report.rmse == doctest::Approx(expected).epsilon(1e-13));
  CHECK_FALSE(report.diverged);
  CHECK(report.method == "fdnet-trcg");
  CHECK(report.per_sample_rmse.size() == ds.test_indices.size());
}

TEST_CASE("rmse is invariant under test-sample enumeration order") {
  Dataset ds = generate_dataset(10, physics_with(1.0, 20), 3, 5, 0.6, 8);
  const FDNetParams p = euler_params(0.02);
  const RolloutReport before = evaluate_model(p, ds, "euler");
  std::reverse(ds.test_indices.begin(), ds.test_indices.end());
  const RolloutReport after = evaluate_model(p, ds, "euler");
  CHECK(before.rmse == doctest::Approx(after.rmse).epsilon(1e-15));
}

TEST_CASE("euler embedding and euler_rollout report identical RMSE") {
  const Dataset ds = generate_dataset(8, physics_with(1.0, 100), 5, 33, 0.75, 2);
  const StabilityParams st =
      stability_alpha(ds.physics.beta, ds.physics.dt, ds.physics.grid.dx());
  const RolloutReport via_net = evaluate_model(euler_params(st.alpha), ds, "euler");

  double sse = 0.0;
  std::int64_t count = 0;
  for (std::int64_t s : ds.test_indices) {
    const FieldSeries rolled = euler_rollout(ds.snapshot(s, 0), st.alpha,
                                             ds.physics.num_steps);
    for (std::int64_t t = 1; t <= ds.physics.num_steps; ++t) {
      for (std::int64_t i = 0; i < ds.num_points(); ++i) {
        const double e = rolled.snapshot(t)[i] - ds.snapshot(s, t)[i];
        sse += e * e;
        ++count;
      }
    }
  }
  const double direct = std::sqrt(sse / static_cast<double>(count));
  CHECK(std::abs(via_net.rmse - direct) <= 1e-12 * std::max(1.0, direct));
}

TEST_CASE("blow-up beyond the dataset range sets the diverged flag") {
  const Dataset ds = generate_dataset(6, physics_with(200.0, 5), 12, 11, 0.75, 13);
  const StabilityParams st =
      stability_alpha(ds.physics.beta, ds.physics.dt, ds.physics.grid.dx());
  REQUIRE_FALSE(st.stable);
  const RolloutReport report = evaluate_model(euler_params(st.alpha), ds, "euler");
  CHECK(report.diverged);
  CHECK(report.rmse > 10.0);
  CHECK(std::isfinite(report.rmse));  // finite blow-up still yields a number
}

TEST_CASE("overflowing rollouts set the diverged flag and render as DIVERGED") {
  const Dataset ds = generate_dataset(6, physics_with(1.0, 5), 3, 4, 0.6, 2);
  FDNetParams p;  // overflows a few steps in
  p.k = 4;
  p.filters[0].interior = {1e60, 1e60, 1e60};
  p.agg = {1.0, 0.0};
  const RolloutReport report = evaluate_model(p, ds, "fdnet-trcg");
  CHECK(report.diverged);
  // Any surviving prefix has magnitudes whose squares overflow, so the
  // aggregate is non-finite and the table writer prints DIVERGED.
  CHECK_FALSE(std::isfinite(report.rmse));
  std::ostringstream out;
  std::vector<Table1Row> rows(1);
  rows[0].batch_size = 32;
  rows[0].k1 = std::isfinite(report.rmse) ? std::optional<double>(report.rmse)
                                          : std::nullopt;
  write_table1_csv(out, rows);
  CHECK(out.str().find("DIVERGED") != std::string::npos);
}

TEST_CASE("table1 csv renders DIVERGED cells and the pinned header") {
  std::ostringstream out;
  std::vector<Table1Row> rows(1);
  rows[0].batch_size = 32;
  rows[0].k1 = 0.0345;
  rows[0].k10 = 0.0037;
  rows[0].k20 = 0.0028;
  rows[0].euler = std::nullopt;
  write_table1_csv(out, rows);
  CHECK(out.str() == "batch_size,k1,k10,k20,euler\n32,0.0345,0.0037,0.0028,DIVERGED\n");
}

TEST_CASE("report serializes to JSON with a stable fingerprint") {
  const Dataset ds = generate_dataset(6, physics_with(1.0, 10), 3, 2, 0.6, 4);
  const FDNetParams p = init_params(9, 2, 0.05);
  const RolloutReport a = evaluate_model(p, ds, "fdnet-trcg");
  const RolloutReport b = evaluate_model(p, ds, "fdnet-trcg");
  CHECK(a.fingerprint == b.fingerprint);
  CHECK(report_to_json(a) == report_to_json(b));
  CHECK(report_to_json(a).find("\"rmse\"") != std::string::npos);
}
