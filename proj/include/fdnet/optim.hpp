#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fdnet/heat_data.hpp"
#include "fdnet/loss.hpp"
#include "fdnet/model.hpp"
#include "fdnet/rng.hpp"

namespace fdnet {

// ---------------------------------------------------------------------------
// Mini-batch sampling
// ---------------------------------------------------------------------------

/// Draws training pairs uniformly with replacement over (train sample,
/// time index) from a dataset's train split; the stream is seeded and
/// platform-independent.
class MiniBatchSampler {
 public:
  MiniBatchSampler(const Dataset& dataset, std::int64_t batch_size,
                   std::uint64_t seed);

  std::vector<TrainingPair> next();

  std::int64_t batch_size() const { return batch_size_; }
  std::int64_t num_train_pairs() const;
  double epoch_fraction_per_batch() const;
  const Dataset& dataset() const { return *dataset_; }

 private:
  const Dataset* dataset_;
  std::int64_t batch_size_;
  Rng rng_;
};

inline std::vector<TrainingPair> sample_minibatch(MiniBatchSampler& sampler) {
  return sampler.next();
}

// ---------------------------------------------------------------------------
// ADAM
// ---------------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1.0e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1.0e-8;
  std::int64_t epochs = 200;

  void validate() const;
};

using Vector = std::vector<double>;

struct AdamState {
  Vector m;  ///< first-moment accumulator
  Vector v;  ///< second-moment accumulator
  std::int64_t t = 0;
};

/// One bias-corrected ADAM update; returns the new point and state.
std::pair<Vector, AdamState> adam_step(const Vector& x, AdamState state,
                                       const Vector& gradient,
                                       const AdamConfig& cfg);

// ---------------------------------------------------------------------------
// Trust-Region Steihaug-CG
// ---------------------------------------------------------------------------

struct TrustRegionConfig {
  double delta0 = 1.0;
  double delta_max = 100.0;
  double eta_accept = 1.0e-4;
  double shrink_threshold = 0.25;
  double expand_threshold = 0.75;
  int cg_max_iters = 16;
  double cg_tol_factor = 0.1;
  double epoch_budget = 3.0;  ///< fractional epochs, oracle-pass accounting

  void validate() const;
};

enum class CgStatus { converged, hit_boundary, negative_curvature, max_iters };
std::string to_string(CgStatus status);

struct SteihaugResult {
  Vector step;
  CgStatus status = CgStatus::converged;
  int iterations = 0;        ///< number of Hessian-vector products consumed
  double model_decrease = 0; ///< m(0) - m(p) >= 0
  double step_norm = 0.0;
  std::vector<double> iterate_norms;  ///< ||z_j|| per accepted CG iterate
};

/// Approximately solves min_p g.p + 0.5 p.H.p subject to ||p|| <= delta by
/// conjugate gradients started at zero. Stops on the trust-region boundary
/// along the current direction when negative curvature shows up or an
/// iterate crosses the boundary.
SteihaugResult steihaug_cg(const Vector& g,
                           const std::function<Vector(const Vector&)>& hvp,
                           double delta, double tol, int max_iters);

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

/// One record per logged iteration. epoch counts oracle passes
/// (gradient + CG Hessian-vector products, each scaled by batch coverage);
/// outer_epoch counts gradient evaluations only.
struct TraceRecord {
  std::int64_t iter = 0;
  double epoch = 0.0;
  double outer_epoch = 0.0;
  double loss = 0.0;
  std::optional<double> test_rmse;
  double step_norm = 0.0;
  std::optional<double> delta;
  std::optional<double> rho;
  std::optional<CgStatus> cg_status;
};

struct TrainTrace {
  std::vector<TraceRecord> records;
};

/// CSV with header iter,epoch,loss,test_rmse,step_norm,delta,rho,cg_status.
/// Optional fields serialize as empty cells.
void write_trace_csv(const TrainTrace& trace, const std::filesystem::path& path);

/// Oracles for one mini-batch. epoch_fraction is the share of an epoch one
/// pass over this batch consumes (0 for synthetic objectives).
struct BatchFunctions {
  std::function<double(const Vector&)> loss;
  std::function<std::pair<double, Vector>(const Vector&)> loss_and_gradient;
  std::function<Vector(const Vector&, const Vector&)> hessian_vector;
  double epoch_fraction = 0.0;
};

/// Called once per optimizer iteration to draw a fresh mini-batch.
using BatchProvider = std::function<BatchFunctions()>;

/// Optional progress metric (e.g. full-test rollout RMSE), evaluated every
/// metric_interval iterations and on the final record.
struct TrainHooks {
  std::function<double(const Vector&)> metric;
  std::int64_t metric_interval = 0;
};

struct MinimizeResult {
  Vector x;
  TrainTrace trace;
  bool diverged = false;
  std::string message;
};

/// Generic stochastic TRCG loop over any oracle family (used directly by the
/// tests with synthetic quadratics, and by trcg_train with FD-Net oracles).
MinimizeResult trcg_minimize(Vector x0, const BatchProvider& next_batch,
                             const TrustRegionConfig& cfg,
                             const TrainHooks& hooks = {});

/// Generic ADAM loop; runs ceil(epochs / epoch_fraction) iterations.
MinimizeResult adam_minimize(Vector x0, const BatchProvider& next_batch,
                             const AdamConfig& cfg, const TrainHooks& hooks = {});

struct TrainOutcome {
  FDNetParams params;
  TrainTrace trace;
  bool diverged = false;
  std::string message;
};

/// Stochastic trust-region training of FD-Net: every iteration draws one
/// mini-batch, computes the gradient, runs Steihaug-CG with tolerance
/// cg_tol_factor * min(1, sqrt(||g||)) * ||g||, and accepts the step iff
/// rho > eta_accept. Runs until the oracle-pass epoch budget is exhausted.
TrainOutcome trcg_train(const FDNetParams& p0, MiniBatchSampler& sampler,
                        const TrustRegionConfig& cfg, const LossConfig& loss_cfg,
                        const TrainHooks& hooks = {});

/// Mini-batch ADAM training of FD-Net for the configured number of epochs.
TrainOutcome adam_train(const FDNetParams& p0, MiniBatchSampler& sampler,
                        const AdamConfig& cfg, const LossConfig& loss_cfg,
                        const TrainHooks& hooks = {});

}  // namespace fdnet
