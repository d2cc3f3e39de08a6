#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "fdnet/model.hpp"

namespace fdnet {

/// One supervised transition (u(., t_i), u(., t_i + dt)) with provenance.
/// The spans alias dataset storage; the dataset must outlive the pair.
struct TrainingPair {
  std::span<const double> input;
  std::span<const double> target;
  std::int64_t sample_id = 0;
  std::int64_t time_index = 0;
};

/// Boundary-weighted MSE configuration. The two boundary residuals are
/// multiplied by boundary_weight; interior residuals have weight 1.
struct LossConfig {
  double boundary_weight = 10.0;

  void validate() const;
};

/// L = 1/(B*M) * sum over pairs and points of w_i (yhat_i - y_i)^2, where
/// yhat = forward_step(input). Throws DivergenceError on non-finite output.
double batch_loss(const FDNetParams& p, std::span<const TrainingPair> batch,
                  const LossConfig& cfg);

/// Exact dL/dtheta by reverse accumulation through the k-step composition.
/// Coordinates follow the flattening order documented in model.hpp.
ParamVector batch_gradient(const FDNetParams& p, std::span<const TrainingPair> batch,
                           const LossConfig& cfg);

/// Loss and gradient from a single pass (what the trainers consume).
struct LossGrad {
  double loss = 0.0;
  ParamVector grad{};
};
LossGrad batch_loss_and_gradient(const FDNetParams& p,
                                 std::span<const TrainingPair> batch,
                                 const LossConfig& cfg);

/// Exact H*v without materializing H: the reverse-mode gradient is evaluated
/// on dual numbers seeded with tangent v (forward-over-reverse).
ParamVector batch_hvp(const FDNetParams& p, std::span<const TrainingPair> batch,
                      const LossConfig& cfg, const ParamVector& v);

}  // namespace fdnet
