#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecpenet/checkpoint.h"
#include "ecpenet/data.h"
#include "ecpenet/network.h"
#include "ecpenet/objective.h"
#include "ecpenet/run_config.h"

namespace ecpenet {

/// A NaN or infinity surfaced during training; the message names the tensor.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::int64_t t = 0;

  static AdamState zeros(std::span<Parameter<T>* const> params);
};

/// One bias-corrected Adam update of every parameter from its `grad`.
template <typename T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state, const TrainConfig& config);

struct LogRecord {
  std::int64_t iteration = 0;
  LossBreakdown loss;
  double seconds = 0;

  std::string to_line() const;
};

/// Restores parameter values by name. The checkpoint's parameter set must
/// equal the network's exactly.
template <typename T>
void load_parameters(const Checkpoint& checkpoint, NetworkParams<T>& params);

/// Rebuilds the network (configuration and weights) stored in a checkpoint.
template <typename T>
NetworkParams<T> network_from_checkpoint(const Checkpoint& checkpoint);

/// Single-precision training loop: sample, pyramid, forward, loss, backward,
/// Adam. Deterministic given the config and dataset; a checkpoint captures
/// everything needed to continue bit-identically.
class Trainer {
 public:
  Trainer(RunConfig config, std::vector<BlurPair> dataset);
  /// Resumes from a checkpoint written by checkpoint().
  Trainer(const Checkpoint& checkpoint, std::vector<BlurPair> dataset);

  LogRecord step();
  /// Steps until `iteration() == until`, invoking `on_step` after each one.
  void run(std::int64_t until, const std::function<void(const LogRecord&)>& on_step = {});

  Checkpoint checkpoint() const;

  /// Changes the recorded iteration budget, e.g. when a resumed run is extended.
  void set_iteration_budget(std::int64_t iterations);

  std::int64_t iteration() const { return iteration_; }
  const RunConfig& config() const { return config_; }
  NetworkParams<float>& params() { return params_; }
  const AdamState<float>& adam() const { return adam_; }

 private:
  RunConfig config_;
  std::vector<BlurPair> dataset_;
  NetworkParams<float> params_;
  AdamState<float> adam_;
  Rng rng_;
  std::int64_t iteration_ = 0;
};

/// Forward pass on one blurred image; returns the finest-scale prediction.
template <typename T>
Image deblur(NetworkParams<T>& params, const Image& blurred);

struct TrainResult {
  Checkpoint final;
  std::vector<LogRecord> log;
};

TrainResult train(const RunConfig& config, std::vector<BlurPair> dataset,
                  const std::function<void(const LogRecord&)>& on_step = {});

}  // namespace ecpenet
