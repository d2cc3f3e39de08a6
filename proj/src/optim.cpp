#include "fdnet/optim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>

#include "text_util.hpp"

namespace fdnet {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double dot(const Vector& a, const Vector& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(const Vector& a) { return std::sqrt(dot(a, a)); }

bool all_finite(const Vector& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

/// Positive root of ||z + tau*d||^2 = delta^2 (requires ||z|| <= delta).
double boundary_tau(const Vector& z, const Vector& d, double delta) {
  const double dd = dot(d, d);
  const double zd = dot(z, d);
  const double zz = dot(z, z);
  const double disc = std::max(0.0, zd * zd + dd * (delta * delta - zz));
  return (-zd + std::sqrt(disc)) / dd;
}

Vector to_vector(const ParamVector& p) { return Vector(p.begin(), p.end()); }

ParamVector to_array(const Vector& v) {
  ParamVector out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

std::string optional_cell(const std::optional<double>& v) {
  return v ? detail::format_double(*v) : std::string();
}

/// Shared mini-batch -> oracle bundle wiring for both trainers.
BatchFunctions make_batch_functions(MiniBatchSampler& sampler, int k,
                                    const LossConfig& loss_cfg) {
  auto pairs = std::make_shared<std::vector<TrainingPair>>(sampler.next());
  BatchFunctions fns;
  fns.epoch_fraction = sampler.epoch_fraction_per_batch();
  fns.loss = [pairs, k, loss_cfg](const Vector& x) {
    return batch_loss(params_from_vector(to_array(x), k), *pairs, loss_cfg);
  };
  fns.loss_and_gradient = [pairs, k, loss_cfg](const Vector& x) {
    const LossGrad lg =
        batch_loss_and_gradient(params_from_vector(to_array(x), k), *pairs, loss_cfg);
    return std::make_pair(lg.loss, to_vector(lg.grad));
  };
  fns.hessian_vector = [pairs, k, loss_cfg](const Vector& x, const Vector& v) {
    return to_vector(batch_hvp(params_from_vector(to_array(x), k), *pairs, loss_cfg,
                               to_array(v)));
  };
  return fns;
}

}  // namespace

// ---------------------------------------------------------------------------
// Mini-batch sampling
// ---------------------------------------------------------------------------

MiniBatchSampler::MiniBatchSampler(const Dataset& dataset, std::int64_t batch_size,
                                   std::uint64_t seed)
    : dataset_(&dataset), batch_size_(batch_size), rng_(seed) {
  if (batch_size < 1) throw ConfigError("sampler: batch_size must be >= 1");
  if (dataset.train_indices.empty()) throw ConfigError("sampler: train split is empty");
  if (dataset.physics.num_steps < 1) {
    throw ConfigError("sampler: dataset has no successor snapshots");
  }
}

std::int64_t MiniBatchSampler::num_train_pairs() const {
  return static_cast<std::int64_t>(dataset_->train_indices.size()) *
         dataset_->physics.num_steps;
}

double MiniBatchSampler::epoch_fraction_per_batch() const {
  return static_cast<double>(batch_size_) / static_cast<double>(num_train_pairs());
}

std::vector<TrainingPair> MiniBatchSampler::next() {
  std::vector<TrainingPair> batch;
  batch.reserve(static_cast<std::size_t>(batch_size_));
  const auto num_train = static_cast<std::uint64_t>(dataset_->train_indices.size());
  const auto num_intervals = static_cast<std::uint64_t>(dataset_->physics.num_steps);
  for (std::int64_t b = 0; b < batch_size_; ++b) {
    const std::int64_t sample =
        dataset_->train_indices[static_cast<std::size_t>(rng_.below(num_train))];
    const auto t = static_cast<std::int64_t>(rng_.below(num_intervals));
    batch.push_back({dataset_->snapshot(sample, t), dataset_->snapshot(sample, t + 1),
                     sample, t});
  }
  return batch;
}

// ---------------------------------------------------------------------------
// ADAM
// ---------------------------------------------------------------------------

void AdamConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("adam: learning_rate must be finite and >= 0");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam: beta1 must be in [0,1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam: beta2 must be in [0,1)");
  if (!(epsilon > 0.0)) throw ConfigError("adam: epsilon must be > 0");
  if (epochs < 1) throw ConfigError("adam: epochs must be >= 1");
}

std::pair<Vector, AdamState> adam_step(const Vector& x, AdamState state,
                                       const Vector& gradient, const AdamConfig& cfg) {
  cfg.validate();
  if (state.m.empty()) state.m.assign(x.size(), 0.0);
  if (state.v.empty()) state.v.assign(x.size(), 0.0);
  if (state.m.size() != x.size() || gradient.size() != x.size()) {
    throw InvalidInputError("adam_step: dimension mismatch");
  }

  state.t += 1;
  const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * gradient[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * gradient[i] * gradient[i];
    const double m_hat = state.m[i] / bias1;
    const double v_hat = state.v[i] / bias2;
    out[i] = x[i] - cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
  return {std::move(out), std::move(state)};
}

// ---------------------------------------------------------------------------
// Steihaug-CG
// ---------------------------------------------------------------------------

void TrustRegionConfig::validate() const {
  if (!(delta0 > 0.0) || !(delta_max > 0.0) || delta0 > delta_max) {
    throw ConfigError("trcg: need 0 < delta0 <= delta_max");
  }
  if (!(eta_accept >= 0.0 && eta_accept < shrink_threshold &&
        shrink_threshold < expand_threshold && expand_threshold < 1.0)) {
    throw ConfigError("trcg: need 0 <= eta_accept < shrink < expand < 1");
  }
  if (cg_max_iters < 1) throw ConfigError("trcg: cg_max_iters must be >= 1");
  if (!(cg_tol_factor > 0.0 && cg_tol_factor < 1.0)) {
    throw ConfigError("trcg: cg_tol_factor must lie in (0,1)");
  }
  if (!(epoch_budget > 0.0)) throw ConfigError("trcg: epoch_budget must be > 0");
}

std::string to_string(CgStatus status) {
  switch (status) {
    case CgStatus::converged: return "converged";
    case CgStatus::hit_boundary: return "hit_boundary";
    case CgStatus::negative_curvature: return "negative_curvature";
    case CgStatus::max_iters: return "max_iters";
  }
  return "unknown";
}

SteihaugResult steihaug_cg(const Vector& g,
                           const std::function<Vector(const Vector&)>& hvp,
                           double delta, double tol, int max_iters) {
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw InvalidInputError("steihaug_cg: delta must be positive and finite");
  }
  if (!all_finite(g)) throw InvalidInputError("steihaug_cg: non-finite gradient");
  if (max_iters < 1) throw InvalidInputError("steihaug_cg: max_iters must be >= 1");

  const std::size_t n = g.size();
  SteihaugResult result;
  result.step.assign(n, 0.0);

  Vector z(n, 0.0);   // current CG iterate
  Vector hz(n, 0.0);  // H z, maintained incrementally for the model value
  Vector r = g;       // residual g + H z
  Vector d(n);        // search direction
  for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];

  double rr = dot(r, r);
  if (std::sqrt(rr) == 0.0) {
    result.status = CgStatus::converged;
    return result;
  }

  Vector hd(n);
  auto finish = [&](Vector p, Vector hp, CgStatus status) {
    result.step_norm = norm(p);
    result.iterate_norms.push_back(result.step_norm);
    const double model = dot(g, p) + 0.5 * dot(p, hp);
    result.model_decrease = -model;
    result.step = std::move(p);
    result.status = status;
    return result;
  };

  for (int iter = 0; iter < max_iters; ++iter) {
    hd = hvp(d);
    ++result.iterations;
    if (!all_finite(hd)) {
      throw CurvatureOracleError("steihaug_cg: Hessian-vector product is non-finite");
    }

    const double curvature = dot(d, hd);
    if (curvature <= 0.0) {
      const double tau = boundary_tau(z, d, delta);
      Vector p = z;
      Vector hp = hz;
      for (std::size_t i = 0; i < n; ++i) {
        p[i] += tau * d[i];
        hp[i] += tau * hd[i];
      }
      return finish(std::move(p), std::move(hp), CgStatus::negative_curvature);
    }

    const double alpha = rr / curvature;
    Vector z_next = z;
    for (std::size_t i = 0; i < n; ++i) z_next[i] += alpha * d[i];
    if (norm(z_next) >= delta) {
      const double tau = boundary_tau(z, d, delta);
      Vector p = z;
      Vector hp = hz;
      for (std::size_t i = 0; i < n; ++i) {
        p[i] += tau * d[i];
        hp[i] += tau * hd[i];
      }
      return finish(std::move(p), std::move(hp), CgStatus::hit_boundary);
    }

    z = std::move(z_next);
    for (std::size_t i = 0; i < n; ++i) {
      hz[i] += alpha * hd[i];
      r[i] += alpha * hd[i];
    }
    result.iterate_norms.push_back(norm(z));

    const double rr_next = dot(r, r);
    if (std::sqrt(rr_next) < tol) {
      Vector hp = hz;
      return finish(Vector(z), std::move(hp), CgStatus::converged);
    }
    const double beta = rr_next / rr;
    rr = rr_next;
    for (std::size_t i = 0; i < n; ++i) d[i] = -r[i] + beta * d[i];
  }

  Vector hp = hz;
  return finish(Vector(z), std::move(hp), CgStatus::max_iters);
}

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

namespace {

struct LoopState {
  double best_loss = kInf;
  Vector best_x;
  int consecutive_bad = 0;

  /// Returns true when the run should abort as diverged.
  bool note_bad_iteration() { return ++consecutive_bad >= 5; }
  void note_good_iteration(double loss, const Vector& x) {
    consecutive_bad = 0;
    if (loss < best_loss) {
      best_loss = loss;
      best_x = x;
    }
  }
};

}  // namespace

MinimizeResult trcg_minimize(Vector x0, const BatchProvider& next_batch,
                             const TrustRegionConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  MinimizeResult result;
  result.x = std::move(x0);

  LoopState loop;
  loop.best_x = result.x;
  double delta = cfg.delta0;
  double epoch = 0.0;
  double outer_epoch = 0.0;
  std::int64_t iter = 0;

  while (epoch < cfg.epoch_budget) {
    ++iter;
    BatchFunctions batch = next_batch();

    double loss0 = kInf;
    Vector gradient;
    bool bad = false;
    try {
      auto lg = batch.loss_and_gradient(result.x);
      loss0 = lg.first;
      gradient = std::move(lg.second);
      bad = !std::isfinite(loss0) || !all_finite(gradient);
    } catch (const DivergenceError&) {
      bad = true;
    }
    epoch += batch.epoch_fraction;
    outer_epoch += batch.epoch_fraction;
    if (bad) {
      if (loop.note_bad_iteration()) {
        result.x = loop.best_x;
        result.diverged = true;
        result.message = "trcg: persistent non-finite losses; returning best parameters";
        return result;
      }
      continue;
    }
    loop.note_good_iteration(loss0, result.x);

    const double gnorm = norm(gradient);
    if (gnorm == 0.0) {
      TraceRecord rec;
      rec.iter = iter;
      rec.epoch = epoch;
      rec.outer_epoch = outer_epoch;
      rec.loss = loss0;
      rec.delta = delta;
      result.trace.records.push_back(rec);
      result.message = "trcg: stationary point (zero gradient)";
      return result;
    }

    const double tol = cfg.cg_tol_factor * std::min(1.0, std::sqrt(gnorm)) * gnorm;
    SteihaugResult cg;
    try {
      cg = steihaug_cg(
          gradient,
          [&](const Vector& v) { return batch.hessian_vector(result.x, v); }, delta,
          tol, cfg.cg_max_iters);
    } catch (const CurvatureOracleError&) {
      if (loop.note_bad_iteration()) {
        result.x = loop.best_x;
        result.diverged = true;
        result.message = "trcg: persistent non-finite curvature; returning best parameters";
        return result;
      }
      continue;
    }
    epoch += batch.epoch_fraction * static_cast<double>(cg.iterations);

    Vector candidate = result.x;
    for (std::size_t i = 0; i < candidate.size(); ++i) candidate[i] += cg.step[i];
    double loss1 = kInf;
    try {
      loss1 = batch.loss(candidate);
    } catch (const DivergenceError&) {
      loss1 = kInf;
    }

    double rho = -kInf;
    if (std::isfinite(loss1) && cg.model_decrease > 0.0) {
      rho = (loss0 - loss1) / cg.model_decrease;
    }
    const bool accepted = rho > cfg.eta_accept;
    if (accepted) result.x = std::move(candidate);

    const double delta_used = delta;
    if (rho < cfg.shrink_threshold) {
      // Radius stays strictly positive even after many consecutive rejections.
      delta = std::max(delta / 4.0, std::numeric_limits<double>::min());
    } else if (rho > cfg.expand_threshold && cg.step_norm >= 0.99 * delta) {
      delta = std::min(2.0 * delta, cfg.delta_max);
    }

    TraceRecord rec;
    rec.iter = iter;
    rec.epoch = epoch;
    rec.outer_epoch = outer_epoch;
    rec.loss = accepted ? loss1 : loss0;
    rec.step_norm = cg.step_norm;
    rec.delta = delta_used;
    rec.rho = rho;
    rec.cg_status = cg.status;
    const bool final_iter = epoch >= cfg.epoch_budget;
    if (hooks.metric && hooks.metric_interval > 0 &&
        (iter % hooks.metric_interval == 0 || final_iter)) {
      rec.test_rmse = hooks.metric(result.x);
    }
    result.trace.records.push_back(rec);
  }
  return result;
}

MinimizeResult adam_minimize(Vector x0, const BatchProvider& next_batch,
                             const AdamConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  MinimizeResult result;
  result.x = std::move(x0);

  LoopState loop;
  loop.best_x = result.x;
  AdamState state;
  double epoch = 0.0;

  BatchFunctions batch = next_batch();
  const double frac = batch.epoch_fraction;
  const std::int64_t iterations =
      frac > 0.0
          ? static_cast<std::int64_t>(
                std::ceil(static_cast<double>(cfg.epochs) / frac))
          : cfg.epochs;
  const auto iters_per_epoch =
      frac > 0.0 ? static_cast<std::int64_t>(std::llround(1.0 / frac)) : 1;
  const std::int64_t record_every = std::max<std::int64_t>(1, iters_per_epoch / 4);
  std::int64_t last_metric_iter = 0;

  for (std::int64_t iter = 1; iter <= iterations; ++iter) {
    if (iter > 1) batch = next_batch();

    double loss = kInf;
    Vector gradient;
    bool bad = false;
    try {
      auto lg = batch.loss_and_gradient(result.x);
      loss = lg.first;
      gradient = std::move(lg.second);
      bad = !std::isfinite(loss) || !all_finite(gradient);
    } catch (const DivergenceError&) {
      bad = true;
    }
    epoch += frac;
    if (bad) {
      if (loop.note_bad_iteration()) {
        result.x = loop.best_x;
        result.diverged = true;
        result.message = "adam: persistent non-finite losses; returning best parameters";
        return result;
      }
      continue;
    }
    loop.note_good_iteration(loss, result.x);

    auto [next_x, next_state] = adam_step(result.x, std::move(state), gradient, cfg);
    double step_norm = 0.0;
    for (std::size_t i = 0; i < next_x.size(); ++i) {
      const double dx = next_x[i] - result.x[i];
      step_norm += dx * dx;
    }
    step_norm = std::sqrt(step_norm);
    result.x = std::move(next_x);
    state = std::move(next_state);

    const bool final_iter = iter == iterations;
    if (iter % record_every == 0 || final_iter) {
      TraceRecord rec;
      rec.iter = iter;
      rec.epoch = epoch;
      rec.outer_epoch = epoch;
      rec.loss = loss;
      rec.step_norm = step_norm;
      if (hooks.metric && hooks.metric_interval > 0 &&
          (iter - last_metric_iter >= hooks.metric_interval || final_iter)) {
        rec.test_rmse = hooks.metric(result.x);
        last_metric_iter = iter;
      }
      result.trace.records.push_back(rec);
    }
  }
  return result;
}

void write_trace_csv(const TrainTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("write_trace_csv: cannot open '" + path.string() + "'");
  out << "iter,epoch,loss,test_rmse,step_norm,delta,rho,cg_status\n";
  for (const TraceRecord& rec : trace.records) {
    out << rec.iter << ',' << detail::format_double(rec.epoch) << ','
        << detail::format_double(rec.loss) << ',' << optional_cell(rec.test_rmse) << ','
        << detail::format_double(rec.step_norm) << ',' << optional_cell(rec.delta) << ','
        << optional_cell(rec.rho) << ','
        << (rec.cg_status ? to_string(*rec.cg_status) : std::string()) << '\n';
  }
  out.flush();
  if (!out) throw IoError("write_trace_csv: write failed for '" + path.string() + "'");
}

TrainOutcome trcg_train(const FDNetParams& p0, MiniBatchSampler& sampler,
                        const TrustRegionConfig& cfg, const LossConfig& loss_cfg,
                        const TrainHooks& hooks) {
  loss_cfg.validate();
  auto provider = [&]() { return make_batch_functions(sampler, p0.k, loss_cfg); };
  MinimizeResult res = trcg_minimize(to_vector(to_param_vector(p0)), provider, cfg, hooks);
  return {params_from_vector(to_array(res.x), p0.k), std::move(res.trace), res.diverged,
          std::move(res.message)};
}

TrainOutcome adam_train(const FDNetParams& p0, MiniBatchSampler& sampler,
                        const AdamConfig& cfg, const LossConfig& loss_cfg,
                        const TrainHooks& hooks) {
  loss_cfg.validate();
  auto provider = [&]() { return make_batch_functions(sampler, p0.k, loss_cfg); };
  MinimizeResult res = adam_minimize(to_vector(to_param_vector(p0)), provider, cfg, hooks);
  return {params_from_vector(to_array(res.x), p0.k), std::move(res.trace), res.diverged,
          std::move(res.message)};
}

}  // namespace fdnet
