#include "ecpenet/training.h"

#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

namespace ecpenet {

template <typename T>
AdamState<T> AdamState<T>::zeros(std::span<Parameter<T>* const> params) {
  AdamState<T> s;
  for (const Parameter<T>* p : params) {
    s.m.emplace_back(p->value.shape());
    s.v.emplace_back(p->value.shape());
  }
  return s;
}

template <typename T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state, const TrainConfig& config) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ContractViolation("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                            " tensors for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter<T>& p = *params[i];
    if (p.grad.shape() != p.value.shape() || state.m[i].shape() != p.value.shape() ||
        state.v[i].shape() != p.value.shape()) {
      throw ContractViolation("adam_step: shape mismatch for parameter '" + p.name + "'");
    }
  }
  state.t += 1;
  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = *params[i];
    Tensor<T>& m = state.m[i];
    Tensor<T>& v = state.v[i];
    for (std::int64_t k = 0; k < p.value.numel(); ++k) {
      const double g = p.grad[k];
      const double mk = b1 * m[k] + (1.0 - b1) * g;
      const double vk = b2 * v[k] + (1.0 - b2) * g * g;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double m_hat = mk / c1;
      const double v_hat = vk / c2;
      p.value[k] = static_cast<T>(p.value[k] - config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon));
    }
  }
}

std::string LogRecord::to_line() const {
  std::ostringstream os;
  os.precision(9);
  os << "iter=" << iteration << ' ' << loss.to_record() << " seconds=" << seconds;
  return os.str();
}

template <typename T>
void load_parameters(const Checkpoint& checkpoint, NetworkParams<T>& params) {
  std::set<std::string> stored, wanted;
  for (const CheckpointEntry& e : checkpoint.entries) {
    if (e.name.starts_with("param/")) stored.insert(e.name.substr(6));
  }
  for (Parameter<T>* p : params.parameters()) wanted.insert(p->name);
  if (stored != wanted) {
    std::string missing, unexpected;
    for (const std::string& n : wanted) {
      if (!stored.contains(n)) missing += (missing.empty() ? "" : ", ") + n;
    }
    for (const std::string& n : stored) {
      if (!wanted.contains(n)) unexpected += (unexpected.empty() ? "" : ", ") + n;
    }
    throw CheckpointError("parameter-name mismatch between checkpoint and network; missing: [" + missing +
                          "] unexpected: [" + unexpected + "]");
  }
  // Read everything before touching the network so a failure leaves it unchanged.
  std::vector<Tensor<T>> values;
  for (Parameter<T>* p : params.parameters()) {
    values.push_back(checkpoint.get_tensor<T>("param/" + p->name, p->value.shape()));
  }
  std::size_t i = 0;
  for (Parameter<T>* p : params.parameters()) p->value = std::move(values[i++]);
}

template <typename T>
NetworkParams<T> network_from_checkpoint(const Checkpoint& checkpoint) {
  RunConfig config = RunConfig::parse(checkpoint.get_text("meta/config"));
  config.resolve();
  NetworkParams<T> params(config.network);
  load_parameters(checkpoint, params);
  return params;
}

namespace {

RunConfig resolved(RunConfig config) {
  config.resolve();
  return config;
}

}  // namespace

Trainer::Trainer(RunConfig config, std::vector<BlurPair> dataset)
    : config_(resolved(std::move(config))),
      dataset_(std::move(dataset)),
      params_(build_network<float>(config_.network, config_.train.seed)),
      rng_(config_.train.seed) {
  require(!dataset_.empty(), "train: dataset is empty");
  adam_ = AdamState<float>::zeros(params_.parameters());
}

Trainer::Trainer(const Checkpoint& checkpoint, std::vector<BlurPair> dataset)
    : config_(resolved(RunConfig::parse(checkpoint.get_text("meta/config")))),
      dataset_(std::move(dataset)),
      params_(config_.network) {
  require(!dataset_.empty(), "train: dataset is empty");
  load_parameters(checkpoint, params_);
  adam_.t = checkpoint.get_int("adam/t");
  for (Parameter<float>* p : params_.parameters()) {
    adam_.m.push_back(checkpoint.get_tensor<float>("adam_m/" + p->name, p->value.shape()));
    adam_.v.push_back(checkpoint.get_tensor<float>("adam_v/" + p->name, p->value.shape()));
  }
  std::istringstream rng_state(checkpoint.get_text("meta/rng"));
  rng_state >> rng_;
  if (!rng_state) throw CheckpointError("checkpoint generator state is malformed");
  iteration_ = checkpoint.get_int("meta/iteration");
}

LogRecord Trainer::step() {
  const auto start = std::chrono::steady_clock::now();
  const int scales = config_.network.scales;
  std::vector<std::vector<Image>> blurred(static_cast<std::size_t>(scales));
  std::vector<std::vector<Image>> sharp(static_cast<std::size_t>(scales));
  // One patch side for the whole batch, bounded by the smallest pair.
  std::int64_t patch = config_.train.patch_size;
  for (const BlurPair& p : dataset_) patch = std::min({patch, p.sharp.shape().h, p.sharp.shape().w});
  for (int b = 0; b < config_.train.batch_size; ++b) {
    BlurPair pair = dataset_[static_cast<std::size_t>(uniform_index(rng_, static_cast<std::int64_t>(dataset_.size())))];
    if (config_.train.patch_size > 0) {
      pair = std::move(crop_patches(pair, patch, 1, rng_).front());
    }
    if (config_.train.augment) pair = augment(pair, rng_);
    ScalePyramid x = build_pyramid(pair.blurred, scales);
    ScalePyramid y = build_pyramid(pair.sharp, scales);
    for (int j = 0; j < scales; ++j) {
      blurred[static_cast<std::size_t>(j)].push_back(std::move(x.levels[static_cast<std::size_t>(j)]));
      sharp[static_cast<std::size_t>(j)].push_back(std::move(y.levels[static_cast<std::size_t>(j)]));
    }
  }
  std::vector<Tensor<float>> inputs, targets;
  for (int j = 0; j < scales; ++j) {
    inputs.push_back(stack<float>(blurred[static_cast<std::size_t>(j)]));
    targets.push_back(stack<float>(sharp[static_cast<std::size_t>(j)]));
  }

  Tape<float> tape;
  const NetworkOutput<float> out = forward(tape, params_, inputs);
  const LossResult<float> loss = multiscale_loss(out, targets, config_.loss);
  if (const std::size_t bad = tape.first_non_finite(); bad != tape.size()) {
    throw NumericError("non-finite value in '" + std::string(tape.op(bad)) + "' node #" + std::to_string(bad) +
                       " at iteration " + std::to_string(iteration_ + 1));
  }
  params_.store().zero_grad();
  tape.backward(loss.total);
  for (Parameter<float>* p : params_.parameters()) {
    if (!p->grad.all_finite()) {
      throw NumericError("non-finite gradient for parameter '" + p->name + "' at iteration " +
                         std::to_string(iteration_ + 1));
    }
  }
  adam_step<float>(params_.parameters(), adam_, config_.train);
  ++iteration_;

  LogRecord record;
  record.iteration = iteration_;
  record.loss = loss.breakdown;
  record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return record;
}

void Trainer::set_iteration_budget(std::int64_t iterations) {
  config_.train.iterations = iterations;
  config_.train.validate();
}

void Trainer::run(std::int64_t until, const std::function<void(const LogRecord&)>& on_step) {
  while (iteration_ < until) {
    const LogRecord r = step();
    if (on_step) on_step(r);
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  ck.put_text("meta/config", config_.to_text());
  ck.put_int("meta/iteration", iteration_);
  std::ostringstream rng_state;
  rng_state << rng_;
  ck.put_text("meta/rng", rng_state.str());
  ck.put_int("adam/t", adam_.t);
  const ParameterStore<float>& store = params_.store();
  for (std::size_t i = 0; i < store.size(); ++i) ck.put_tensor("param/" + store[i].name, store[i].value);
  for (std::size_t i = 0; i < store.size(); ++i) ck.put_tensor("adam_m/" + store[i].name, adam_.m[i]);
  for (std::size_t i = 0; i < store.size(); ++i) ck.put_tensor("adam_v/" + store[i].name, adam_.v[i]);
  return ck;
}

template <typename T>
Image deblur(NetworkParams<T>& params, const Image& blurred) {
  const ScalePyramid pyramid = build_pyramid(blurred, params.config().scales);
  std::vector<Tensor<T>> inputs;
  for (const Image& level : pyramid.levels) inputs.push_back(level.cast<T>());
  Tape<T> tape;
  const NetworkOutput<T> out = forward(tape, params, inputs);
  return out.predictions.front().value().template cast<double>();
}

TrainResult train(const RunConfig& config, std::vector<BlurPair> dataset,
                  const std::function<void(const LogRecord&)>& on_step) {
  Trainer trainer(config, std::move(dataset));
  TrainResult result;
  trainer.run(trainer.config().train.iterations, [&](const LogRecord& r) {
    result.log.push_back(r);
    if (on_step) on_step(r);
  });
  result.final = trainer.checkpoint();
  return result;
}

template struct AdamState<float>;
template struct AdamState<double>;

#define ECPENET_INSTANTIATE(T)                                                                \
  template void adam_step(std::span<Parameter<T>* const>, AdamState<T>&, const TrainConfig&); \
  template void load_parameters(const Checkpoint&, NetworkParams<T>&);                        \
  template NetworkParams<T> network_from_checkpoint(const Checkpoint&);                       \
  template Image deblur(NetworkParams<T>&, const Image&);

ECPENET_INSTANTIATE(float)
ECPENET_INSTANTIATE(double)

#undef ECPENET_INSTANTIATE

}  // namespace ecpenet
