#pragma once

#include <string>
#include <vector>

#include "ecpenet/autograd.h"
#include "ecpenet/network.h"

namespace ecpenet {

struct LossConfig {
  double lambda = 0.1;  // dark-channel sparsity weight
  double omega = 0.1;   // bright-channel sparsity weight
  int scales = 3;
  bool ecp_enabled = true;

  void validate() const;
  /// Effective weights; both are zero when the prior is disabled.
  double effective_lambda() const { return ecp_enabled ? lambda : 0.0; }
  double effective_omega() const { return ecp_enabled ? omega : 0.0; }

  /// The alternative weighting lambda = omega = 0.2.
  static LossConfig alternative();
};

/// Per-scale terms of the regularized multi-scale objective (all means of
/// absolute values). `dark`/`bright` are zero when the prior is disabled.
struct LossBreakdown {
  std::vector<double> recon;
  std::vector<double> dark;
  std::vector<double> bright;
  double lambda = 0;
  double omega = 0;
  double total = 0;

  /// total recomputed from the components.
  double recomputed_total() const;
  /// One "key=value" record, e.g. for the training log.
  std::string to_record() const;
};

template <typename T>
struct LossResult {
  Var<T> total;
  LossBreakdown breakdown;
};

/// sum_j mean|y_j - yhat_j| + lambda * mean|D_j| + omega * mean|1 - B_j|.
/// Terms whose weight is zero are reported but not added to the graph, so the
/// differentiable total is then bit-equal to the reconstruction-only loss.
template <typename T>
LossResult<T> multiscale_loss(std::span<const Var<T>> predictions, std::span<const Var<T>> targets,
                              std::span<const Var<T>> dark, std::span<const Var<T>> bright,
                              const LossConfig& config);

/// Convenience overload for a network output and per-scale target tensors.
template <typename T>
LossResult<T> multiscale_loss(const NetworkOutput<T>& output, const std::vector<Tensor<T>>& targets,
                              const LossConfig& config);

}  // namespace ecpenet
