#include "fdnet/loss.hpp"

#include <cmath>
#include <string>

namespace fdnet {

namespace {

// Dual number carrying a value and one tangent. Running the reverse-mode
// gradient on duals seeded with tangent v yields the exact directional
// derivative of the gradient, i.e. the Hessian-vector product H*v.
struct Dual {
  double v = 0.0;
  double d = 0.0;

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit lift of constants
  Dual(double value, double tangent) : v(value), d(tangent) {}

  Dual& operator+=(const Dual& o) {
    v += o.v;
    d += o.d;
    return *this;
  }
};

inline Dual operator+(Dual a, const Dual& b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator-(Dual a, const Dual& b) { return {a.v - b.v, a.d - b.d}; }
inline Dual operator*(const Dual& a, const Dual& b) {
  return {a.v * b.v, a.v * b.d + a.d * b.v};
}
inline Dual operator*(double s, const Dual& a) { return {s * a.v, s * a.d}; }
inline Dual operator-(const Dual& a) { return {-a.v, -a.d}; }

inline double value_of(double x) { return x; }
inline double value_of(const Dual& x) { return x.v; }

template <class T>
struct Workspace {
  std::vector<T> states;  // (k+1) x M forward states
  std::vector<T> feats;   // 2 x k x M filter responses
  std::vector<T> lam;     // adjoint of the current state
  std::vector<T> lam_in;  // adjoint pulled back one step
  std::vector<T> scratch;

  void resize(std::size_t m, int k) {
    states.resize((static_cast<std::size_t>(k) + 1) * m);
    feats.resize(2 * static_cast<std::size_t>(k) * m);
    lam.resize(m);
    lam_in.resize(m);
    scratch.resize(m);
  }
};

// Forward through the k auxiliary steps, then (optionally) reverse-accumulate
// the parameter gradient. Returns the pair's unnormalized weighted squared
// error, sum_i w_i (yhat_i - y_i)^2.
template <class T>
T accumulate_pair(const BasicParams<T>& p, const TrainingPair& pair,
                  double boundary_weight, bool want_grad, BasicParams<T>* grad,
                  Workspace<T>& ws) {
  const std::size_t m = pair.input.size();
  const int k = p.k;
  ws.resize(m, k);

  auto state = [&](int j) {
    return std::span<T>(ws.states.data() + static_cast<std::size_t>(j) * m, m);
  };
  auto feat = [&](int channel, int j) {
    return std::span<T>(
        ws.feats.data() + (static_cast<std::size_t>(channel) * k + j) * m, m);
  };

  std::span<T> u0 = state(0);
  for (std::size_t i = 0; i < m; ++i) u0[i] = T(pair.input[i]);

  for (int j = 0; j < k; ++j) {
    std::span<const T> u = state(j);
    std::span<T> out = state(j + 1);
    std::span<T> f0 = feat(0, j);
    std::span<T> f1 = feat(1, j);
    apply_filter_span<T>(u, p.filters[0], f0);
    apply_filter_span<T>(u, p.filters[1], f1);
    for (std::size_t i = 0; i < m; ++i) {
      out[i] = u[i] + (p.agg[0] * f0[i] + p.agg[1] * f1[i]);
    }
  }

  std::span<const T> prediction = state(k);
  T loss_acc{};
  for (std::size_t i = 0; i < m; ++i) {
    const double w = (i == 0 || i + 1 == m) ? boundary_weight : 1.0;
    const T r = prediction[i] - T(pair.target[i]);
    if (!std::isfinite(value_of(r))) {
      throw DivergenceError("batch loss: non-finite network output for sample " +
                                std::to_string(pair.sample_id) + " at time index " +
                                std::to_string(pair.time_index),
                            pair.time_index);
    }
    loss_acc += (w * r) * r;
    ws.lam[i] = (2.0 * w) * r;
  }
  if (!want_grad) return loss_acc;

  // Reverse sweep. ws.lam holds dL/d(state j+1) while processing step j.
  for (int j = k - 1; j >= 0; --j) {
    std::span<const T> u = state(j);
    std::span<const T> lam(ws.lam);

    for (int channel = 0; channel < kNumChannels; ++channel) {
      std::span<const T> f = feat(channel, j);
      T agg_grad{};
      for (std::size_t i = 0; i < m; ++i) agg_grad += lam[i] * f[i];
      grad->agg[static_cast<std::size_t>(channel)] += agg_grad;
    }

    // The stencil correlations sum_i lam_i * u_neighbor are shared by both
    // channels; each channel scales them by its aggregation weight.
    T s_left{}, s_center{}, s_right{};
    for (std::size_t i = 1; i + 1 < m; ++i) {
      s_left += lam[i] * u[i - 1];
      s_center += lam[i] * u[i];
      s_right += lam[i] * u[i + 1];
    }
    const T b_l0 = lam[0] * u[0];
    const T b_l1 = lam[0] * u[1];
    const T b_r0 = lam[m - 1] * u[m - 2];
    const T b_r1 = lam[m - 1] * u[m - 1];
    for (int channel = 0; channel < kNumChannels; ++channel) {
      const T c = p.agg[static_cast<std::size_t>(channel)];
      auto& fg = grad->filters[static_cast<std::size_t>(channel)];
      fg.interior[0] += c * s_left;
      fg.interior[1] += c * s_center;
      fg.interior[2] += c * s_right;
      fg.left_boundary[0] += c * b_l0;
      fg.left_boundary[1] += c * b_l1;
      fg.right_boundary[0] += c * b_r0;
      fg.right_boundary[1] += c * b_r1;
    }

    if (j > 0) {
      // lam_in = lam + c1 F1^T lam + c2 F2^T lam
      apply_filter_transpose_span<T>(lam, p.filters[0], std::span<T>(ws.lam_in));
      apply_filter_transpose_span<T>(lam, p.filters[1], std::span<T>(ws.scratch));
      for (std::size_t i = 0; i < m; ++i) {
        ws.lam_in[i] = ws.lam[i] + (p.agg[0] * ws.lam_in[i] + p.agg[1] * ws.scratch[i]);
      }
      ws.lam.swap(ws.lam_in);
    }
  }
  return loss_acc;
}

void validate_batch(std::span<const TrainingPair> batch) {
  if (batch.empty()) throw InvalidInputError("batch must be nonempty");
  const std::size_t m = batch.front().input.size();
  if (m < 3) throw InvalidInputError("batch: fields must have at least 3 points");
  for (const auto& pair : batch) {
    if (pair.input.size() != m || pair.target.size() != m) {
      throw InvalidInputError("batch: inconsistent field lengths");
    }
  }
}

template <class T>
std::pair<T, std::array<T, kNumParams>> run_batch(const BasicParams<T>& p,
                                                  std::span<const TrainingPair> batch,
                                                  const LossConfig& cfg,
                                                  bool want_grad) {
  validate_batch(batch);
  cfg.validate();
  if (p.k < 1) throw InvalidInputError("params: k must be >= 1");

  const std::size_t m = batch.front().input.size();
  const double norm = 1.0 / (static_cast<double>(batch.size()) * static_cast<double>(m));

  BasicParams<T> grad;
  grad.k = p.k;
  Workspace<T> ws;
  T loss_acc{};
  for (const auto& pair : batch) {
    loss_acc += accumulate_pair<T>(p, pair, cfg.boundary_weight, want_grad, &grad, ws);
  }

  std::array<T, kNumParams> grad_flat = flatten_params(grad);
  for (auto& g : grad_flat) g = norm * g;
  return {norm * loss_acc, grad_flat};
}

}  // namespace

void LossConfig::validate() const {
  if (!std::isfinite(boundary_weight) || boundary_weight < 1.0) {
    throw ConfigError("loss: boundary_weight must be finite and >= 1");
  }
}

double batch_loss(const FDNetParams& p, std::span<const TrainingPair> batch,
                  const LossConfig& cfg) {
  return run_batch<double>(p, batch, cfg, /*want_grad=*/false).first;
}

ParamVector batch_gradient(const FDNetParams& p, std::span<const TrainingPair> batch,
                           const LossConfig& cfg) {
  return run_batch<double>(p, batch, cfg, /*want_grad=*/true).second;
}

LossGrad batch_loss_and_gradient(const FDNetParams& p,
                                 std::span<const TrainingPair> batch,
                                 const LossConfig& cfg) {
  auto [loss, grad] = run_batch<double>(p, batch, cfg, /*want_grad=*/true);
  return {loss, grad};
}

ParamVector batch_hvp(const FDNetParams& p, std::span<const TrainingPair> batch,
                      const LossConfig& cfg, const ParamVector& v) {
  for (double t : v) {
    if (!std::isfinite(t)) throw InvalidInputError("batch_hvp: non-finite direction");
  }

  const ParamVector primal = to_param_vector(p);
  std::array<Dual, kNumParams> seeded{};
  for (int i = 0; i < kNumParams; ++i) {
    seeded[static_cast<std::size_t>(i)] =
        Dual(primal[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(i)]);
  }
  const BasicParams<Dual> dual_params = unflatten_params(seeded, p.k);

  auto [loss, grad] = run_batch<Dual>(dual_params, batch, cfg, /*want_grad=*/true);
  (void)loss;
  ParamVector hvp{};
  for (int i = 0; i < kNumParams; ++i) {
    hvp[static_cast<std::size_t>(i)] = grad[static_cast<std::size_t>(i)].d;
  }
  return hvp;
}

}  // namespace fdnet
