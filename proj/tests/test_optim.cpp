#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "doctest.h"
#include "fdnet/heat_data.hpp"
#include "fdnet/optim.hpp"
#include "fdnet/rng.hpp"
#include "oracles.hpp"

using namespace fdnet;

namespace {

PhysicsConfig tiny_physics(std::int64_t num_steps) {
  PhysicsConfig physics;
  physics.num_steps = num_steps;
  physics.grid = Grid1D{31, std::numbers::pi};
  return physics;
}

std::function<Vector(const Vector&)> matrix_hvp(const oracles::Mat& h) {
  return [h](const Vector& v) { return oracles::matvec(h, v); };
}

double model_of(const oracles::Mat& h, const Vector& g, const Vector& p) {
  return oracles::model_value(h, g, p);
}

/// Best point along -g inside the radius (the Cauchy point).
double cauchy_model_value(const oracles::Mat& h, const Vector& g, double delta) {
  const double gg = oracles::dot(g, g);
  const double ghg = oracles::dot(g, oracles::matvec(h, g));
  const double gnorm = std::sqrt(gg);
  double tau = delta / gnorm;
  if (ghg > 0.0) tau = std::min(tau, gg / ghg);
  Vector p(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) p[i] = -tau * g[i];
  return model_of(h, g, p);
}

/// Deterministic full-batch quadratic 0.5 (x-c)^T H (x-c) as a BatchProvider.
BatchProvider quadratic_provider(const oracles::Mat& h, const Vector& center) {
  return [h, center]() {
    BatchFunctions fns;
    fns.epoch_fraction = 1.0;
    fns.loss = [h, center](const Vector& x) {
      Vector d(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] - center[i];
      return 0.5 * oracles::dot(d, oracles::matvec(h, d));
    };
    fns.loss_and_gradient = [h, center, loss = fns.loss](const Vector& x) {
      Vector d(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] - center[i];
      return std::make_pair(loss(x), oracles::matvec(h, d));
    };
    fns.hessian_vector = [h](const Vector&, const Vector& v) {
      return oracles::matvec(h, v);
    };
    return fns;
  };
}

}  // namespace

// ---------------------------------------------------------------------------
// Mini-batch sampler
// ---------------------------------------------------------------------------

TEST_CASE("sampler draws the requested number of valid pairs") {
  const Dataset ds = generate_dataset(20, tiny_physics(50), 4, 7, 0.75, 11);
  MiniBatchSampler sampler(ds, 64, 46);
  const auto batch = sample_minibatch(sampler);
  REQUIRE(batch.size() == 64);
  for (const TrainingPair& pair : batch) {
    CHECK(pair.time_index >= 0);
    CHECK(pair.time_index < ds.physics.num_steps);  // a successor exists
    const bool in_train =
        std::find(ds.train_indices.begin(), ds.train_indices.end(), pair.sample_id) !=
        ds.train_indices.end();
    CHECK(in_train);
    // The target really is the successor snapshot.
    CHECK(pair.target.data() == ds.snapshot(pair.sample_id, pair.time_index + 1).data());
  }
}

TEST_CASE("sampler streams are deterministic per seed") {
  const Dataset ds = generate_dataset(10, tiny_physics(20), 3, 1, 0.7, 2);
  MiniBatchSampler a(ds, 32, 99);
  MiniBatchSampler b(ds, 32, 99);
  for (int round = 0; round < 3; ++round) {
    const auto batch_a = a.next();
    const auto batch_b = b.next();
    for (std::size_t i = 0; i < batch_a.size(); ++i) {
      CHECK(batch_a[i].sample_id == batch_b[i].sample_id);
      CHECK(batch_a[i].time_index == batch_b[i].time_index);
    }
  }
}

TEST_CASE("sampler with a single train sample and two snapshots") {
  const Dataset ds = generate_dataset(2, tiny_physics(1), 2, 5, 0.5, 9);
  REQUIRE(ds.train_indices.size() == 1);
  MiniBatchSampler sampler(ds, 16, 3);
  for (const TrainingPair& pair : sampler.next()) {
    CHECK(pair.sample_id == ds.train_indices.front());
    CHECK(pair.time_index == 0);
  }
  CHECK(sampler.num_train_pairs() == 1);
}

TEST_CASE("sampler rejects an empty batch size") {
  const Dataset ds = generate_dataset(4, tiny_physics(3), 2, 5, 0.5, 9);
  CHECK_THROWS_AS(MiniBatchSampler(ds, 0, 1), ConfigError);
}

// ---------------------------------------------------------------------------
// ADAM
// ---------------------------------------------------------------------------

TEST_CASE("adam with zero gradient leaves parameters unchanged") {
  const Vector x = {1.0, -2.0, 3.0};
  const auto [x1, state] = adam_step(x, AdamState{}, Vector(3, 0.0), AdamConfig{});
  CHECK(x1 == x);
  CHECK(state.t == 1);
}

TEST_CASE("adam per-coordinate step magnitude approaches the learning rate") {
  AdamConfig cfg;
  cfg.learning_rate = 1e-3;
  Vector x(4, 0.0);
  const Vector g = {0.3, -0.9, 2.5, 0.01};
  AdamState state;
  Vector prev = x;
  for (int i = 0; i < 5000; ++i) {
    prev = x;
    auto [nx, ns] = adam_step(x, std::move(state), g, cfg);
    x = std::move(nx);
    state = std::move(ns);
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(std::abs(x[i] - prev[i]) == doctest::Approx(cfg.learning_rate).epsilon(0.01));
  }
}

TEST_CASE("adam matches the textbook recurrence and minimizes a sphere") {
  AdamConfig cfg;
  cfg.learning_rate = 1e-2;
  Vector x(16, 1.0);
  AdamState state;

  // Independent scalar recurrence, iterated alongside the implementation.
  double xr = 1.0, mr = 0.0, vr = 0.0;
  for (int t = 1; t <= 20; ++t) {
    const double g = xr;
    mr = cfg.beta1 * mr + (1 - cfg.beta1) * g;
    vr = cfg.beta2 * vr + (1 - cfg.beta2) * g * g;
    const double mhat = mr / (1 - std::pow(cfg.beta1, t));
    const double vhat = vr / (1 - std::pow(cfg.beta2, t));
    xr -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);

    auto [nx, ns] = adam_step(x, std::move(state), x, cfg);
    x = std::move(nx);
    state = std::move(ns);
    CHECK(x[0] == doctest::Approx(xr).epsilon(1e-14));
  }

  for (int t = 20; t < 5000; ++t) {
    auto [nx, ns] = adam_step(x, std::move(state), x, cfg);
    x = std::move(nx);
    state = std::move(ns);
  }
  CHECK(oracles::norm(x) < 1e-3);
}

TEST_CASE("adam with zero learning rate never moves") {
  const Dataset ds = generate_dataset(4, tiny_physics(5), 3, 2, 0.5, 7);
  MiniBatchSampler sampler(ds, 8, 5);
  AdamConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 2;
  const FDNetParams p0 = init_params(3, 2, 0.1);
  const TrainOutcome outcome = adam_train(p0, sampler, cfg, LossConfig{});
  CHECK(outcome.params == p0);
  CHECK_FALSE(outcome.diverged);
}

// ---------------------------------------------------------------------------
// Steihaug-CG
// ---------------------------------------------------------------------------

TEST_CASE("steihaug: identity curvature with an interior Newton point") {
  const oracles::Mat h = {{1.0, 0.0}, {0.0, 1.0}};
  const Vector g = {3.0, -4.0};  // ||g|| = 5 <= delta
  const SteihaugResult r = steihaug_cg(g, matrix_hvp(h), 10.0, 1e-12, 50);
  CHECK(r.status == CgStatus::converged);
  CHECK(r.step[0] == doctest::Approx(-3.0).epsilon(1e-12));
  CHECK(r.step[1] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(r.model_decrease == doctest::Approx(12.5).epsilon(1e-12));
}

TEST_CASE("steihaug: identity curvature truncated at a small radius") {
  const oracles::Mat h = {{1.0, 0.0}, {0.0, 1.0}};
  const Vector g = {3.0, -4.0};
  const double delta = 0.1 * oracles::norm(g);
  const SteihaugResult r = steihaug_cg(g, matrix_hvp(h), delta, 1e-12, 50);
  CHECK(r.status == CgStatus::hit_boundary);
  CHECK(oracles::norm(r.step) == doctest::Approx(delta).epsilon(1e-12));
  // The step is the boundary point along -g.
  CHECK(r.step[0] == doctest::Approx(-delta * 3.0 / 5.0).epsilon(1e-12));
  CHECK(r.step[1] == doctest::Approx(delta * 4.0 / 5.0).epsilon(1e-12));
}

TEST_CASE("steihaug: indefinite diagonal with the gradient along the stable axis") {
  // d0 = -g has positive curvature and the first CG step lands exactly on the
  // boundary, so the method stops there with the Cauchy-point model value.
  const oracles::Mat h = {{1.0, 0.0}, {0.0, -1.0}};
  const Vector g = {1.0, 0.0};
  const SteihaugResult r = steihaug_cg(g, matrix_hvp(h), 1.0, 1e-12, 50);
  CHECK(oracles::norm(r.step) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.status == CgStatus::hit_boundary);
  const double m_step = model_of(h, g, r.step);
  CHECK(m_step == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(m_step <= cauchy_model_value(h, g, 1.0) + 1e-12);
}

TEST_CASE("steihaug: negative curvature along the first direction") {
  const oracles::Mat h = {{-2.0, 0.0}, {0.0, 1.0}};
  const Vector g = {1.0, 0.2};
  const SteihaugResult r = steihaug_cg(g, matrix_hvp(h), 2.0, 1e-12, 50);
  CHECK(r.status == CgStatus::negative_curvature);
  CHECK(oracles::norm(r.step) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(model_of(h, g, r.step) <= cauchy_model_value(h, g, 2.0) + 1e-12);
}

TEST_CASE("steihaug feasibility, monotone norms and Cauchy decrease on random systems") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = (trial % 2 == 0) ? 2 : 3;
    oracles::Mat h = oracles::zeros(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i; j < n; ++j) {
        h[i][j] = h[j][i] = 2.0 * rng.normal();
      }
      if (trial % 3 == 0) h[i][i] += 3.0;  // mix in some definite systems
    }
    Vector g(n);
    for (auto& v : g) v = rng.normal();
    if (oracles::norm(g) == 0.0) continue;
    const double delta = 0.1 + 2.0 * rng.uniform01();

    const SteihaugResult r = steihaug_cg(g, matrix_hvp(h), delta, 1e-10, 50);
    CHECK(oracles::norm(r.step) <= delta * (1.0 + 1e-12));
    for (std::size_t i = 1; i < r.iterate_norms.size(); ++i) {
      CHECK(r.iterate_norms[i] >= r.iterate_norms[i - 1] - 1e-12 * delta);
    }
    CHECK(model_of(h, g, r.step) <= cauchy_model_value(h, g, delta) + 1e-10);
    CHECK(r.model_decrease >= -1e-12);
    CHECK(r.model_decrease ==
          doctest::Approx(-model_of(h, g, r.step)).epsilon(1e-9));
  }
}

TEST_CASE("steihaug equals the global subproblem solution when CG converges inside") {
  Rng rng(7);
  int interior_cases = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = (trial % 2 == 0) ? 2 : 3;
    oracles::Mat h = oracles::zeros(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i; j < n; ++j) h[i][j] = h[j][i] = rng.normal();
      h[i][i] += 4.0;  // diagonally dominant, positive definite
    }
    Vector g(n);
    for (auto& v : g) v = rng.normal();
    if (oracles::norm(g) == 0.0) continue;

    const double delta = 10.0 + 10.0 * rng.uniform01();
    const SteihaugResult r = steihaug_cg(g, matrix_hvp(h), delta, 1e-13, 100);
    if (r.status != CgStatus::converged) continue;
    ++interior_cases;
    const oracles::TrsSolution opt = oracles::trs_global(h, g, delta);
    CHECK(std::abs(model_of(h, g, r.step) - opt.model) < 1e-6);
  }
  CHECK(interior_cases > 50);
}

TEST_CASE("steihaug rejects bad inputs and non-finite oracles") {
  CHECK_THROWS_AS(steihaug_cg({1.0, 0.0}, matrix_hvp({{1, 0}, {0, 1}}), -1.0, 1e-8, 10),
                  InvalidInputError);
  auto nan_oracle = [](const Vector& v) {
    return Vector(v.size(), std::numeric_limits<double>::quiet_NaN());
  };
  CHECK_THROWS_AS(steihaug_cg({1.0, 0.0}, nan_oracle, 1.0, 1e-8, 10),
                  CurvatureOracleError);
}

// ---------------------------------------------------------------------------
// Trust-region loop
// ---------------------------------------------------------------------------

TEST_CASE("trcg converges on a deterministic convex quadratic") {
  const oracles::Mat h = {{4.0, 1.0, 0.0}, {1.0, 3.0, 0.5}, {0.0, 0.5, 2.0}};
  const Vector center = {1.0, -2.0, 0.5};
  TrustRegionConfig cfg;
  cfg.epoch_budget = 80.0;  // roughly 20+ outer iterations at <= 3 passes each

  const MinimizeResult res =
      trcg_minimize(Vector{0.0, 0.0, 0.0}, quadratic_provider(h, center), cfg);
  CHECK_FALSE(res.diverged);
  REQUIRE(res.x.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::abs(res.x[i] - center[i]) < 1e-8);
  }

  // Convergence well within the first 20 outer iterations.
  REQUIRE(!res.trace.records.empty());
  bool converged_by_20 = false;
  for (const TraceRecord& rec : res.trace.records) {
    if (rec.iter <= 20 && rec.loss < 1e-16) converged_by_20 = true;
  }
  CHECK(converged_by_20);

  double prev = std::numeric_limits<double>::infinity();
  for (const TraceRecord& rec : res.trace.records) {
    CHECK(rec.loss <= prev * (1.0 + 1e-12));  // non-increasing on a quadratic
    prev = rec.loss;
    REQUIRE(rec.delta.has_value());
    CHECK(*rec.delta > 0.0);
    CHECK(*rec.delta <= cfg.delta_max);
    CHECK(rec.epoch >= rec.outer_epoch);
  }
}

TEST_CASE("trcg returns immediately from a stationary start") {
  const oracles::Mat h = {{2.0, 0.0}, {0.0, 2.0}};
  const Vector center = {0.25, -0.75};
  TrustRegionConfig cfg;
  cfg.epoch_budget = 10.0;
  const MinimizeResult res = trcg_minimize(center, quadratic_provider(h, center), cfg);
  CHECK(res.x == center);
  REQUIRE(res.trace.records.size() == 1);
  CHECK(res.trace.records[0].step_norm == 0.0);
  CHECK_FALSE(res.trace.records[0].rho.has_value());
}

TEST_CASE("accepted trcg steps never increase the mini-batch loss") {
  const Dataset ds = generate_dataset(10, tiny_physics(30), 4, 3, 0.7, 1);
  MiniBatchSampler sampler(ds, 16, 46);
  TrustRegionConfig cfg;
  cfg.epoch_budget = 3.0;
  const TrainOutcome outcome =
      trcg_train(init_params(46, 4, 0.1), sampler, cfg, LossConfig{});
  CHECK_FALSE(outcome.diverged);
  CHECK(outcome.trace.records.size() > 10);
  for (const TraceRecord& rec : outcome.trace.records) {
    REQUIRE(rec.rho.has_value());
    REQUIRE(rec.delta.has_value());
    CHECK(*rec.delta > 0.0);
    CHECK(*rec.delta <= cfg.delta_max);
    CHECK(rec.epoch >= rec.outer_epoch);
  }
  // Epoch accounting is non-decreasing along the trace.
  for (std::size_t i = 1; i < outcome.trace.records.size(); ++i) {
    CHECK(outcome.trace.records[i].epoch >= outcome.trace.records[i - 1].epoch);
  }
}

TEST_CASE("trainers are deterministic end to end") {
  const Dataset ds = generate_dataset(8, tiny_physics(20), 3, 9, 0.75, 4);
  TrustRegionConfig cfg;
  cfg.epoch_budget = 1.0;

  MiniBatchSampler s1(ds, 8, 46);
  MiniBatchSampler s2(ds, 8, 46);
  const TrainOutcome a = trcg_train(init_params(46, 3, 0.1), s1, cfg, LossConfig{});
  const TrainOutcome b = trcg_train(init_params(46, 3, 0.1), s2, cfg, LossConfig{});
  CHECK(a.params == b.params);
  REQUIRE(a.trace.records.size() == b.trace.records.size());
  for (std::size_t i = 0; i < a.trace.records.size(); ++i) {
    CHECK(a.trace.records[i].loss == b.trace.records[i].loss);
  }

  AdamConfig adam_cfg;
  adam_cfg.epochs = 1;
  MiniBatchSampler s3(ds, 8, 46);
  MiniBatchSampler s4(ds, 8, 46);
  const TrainOutcome c = adam_train(init_params(46, 3, 0.1), s3, adam_cfg, LossConfig{});
  const TrainOutcome d = adam_train(init_params(46, 3, 0.1), s4, adam_cfg, LossConfig{});
  CHECK(c.params == d.params);
}

TEST_CASE("trace CSV uses the documented header and one row per record") {
  TrainTrace trace;
  TraceRecord rec;
  rec.iter = 1;
  rec.epoch = 0.5;
  rec.outer_epoch = 0.25;
  rec.loss = 0.125;
  rec.step_norm = 0.0625;
  rec.delta = 1.0;
  rec.rho = 0.9;
  rec.cg_status = CgStatus::converged;
  trace.records.push_back(rec);
  rec.iter = 2;
  rec.test_rmse = 0.03125;
  trace.records.push_back(rec);

  const auto path = std::filesystem::temp_directory_path() / "fdnet_trace_test.csv";
  write_trace_csv(trace, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "iter,epoch,loss,test_rmse,step_norm,delta,rho,cg_status");
  std::getline(in, line);
  CHECK(line == "1,0.5,0.125,,0.0625,1,0.9,converged");
  std::getline(in, line);
  CHECK(line == "2,0.5,0.125,0.03125,0.0625,1,0.9,converged");
}
