#include "ecpenet/objective.h"

#include <sstream>

namespace ecpenet {

void LossConfig::validate() const {
  require(lambda >= 0, "loss config: lambda must be non-negative");
  require(omega >= 0, "loss config: omega must be non-negative");
  require(scales >= 1, "loss config: scales must be positive");
}

LossConfig LossConfig::alternative() {
  LossConfig c;
  c.lambda = 0.2;
  c.omega = 0.2;
  return c;
}

double LossBreakdown::recomputed_total() const {
  double t = 0;
  for (std::size_t j = 0; j < recon.size(); ++j) t += recon[j] + lambda * dark[j] + omega * bright[j];
  return t;
}

std::string LossBreakdown::to_record() const {
  std::ostringstream os;
  os.precision(17);
  os << "total=" << total;
  for (std::size_t j = 0; j < recon.size(); ++j) {
    os << " recon" << j << '=' << recon[j] << " dark" << j << '=' << dark[j] << " bright" << j << '='
       << bright[j];
  }
  return os.str();
}

namespace {

template <typename T>
void check_unit_range(const Var<T>& map, const char* what, std::size_t scale) {
  for (T v : map.value().data()) {
    if (!(v >= T(0) && v <= T(1))) {
      throw ContractViolation(std::string("multiscale_loss: ") + what + " map at scale " +
                              std::to_string(scale) + " leaves [0, 1]");
    }
  }
}

}  // namespace

template <typename T>
LossResult<T> multiscale_loss(std::span<const Var<T>> predictions, std::span<const Var<T>> targets,
                              std::span<const Var<T>> dark, std::span<const Var<T>> bright,
                              const LossConfig& config) {
  config.validate();
  const std::size_t scales = predictions.size();
  require(scales > 0, "multiscale_loss: no scales");
  require(static_cast<int>(scales) == config.scales,
          "multiscale_loss: " + std::to_string(scales) + " predictions for " +
              std::to_string(config.scales) + " configured scales");
  require(targets.size() == scales, "multiscale_loss: target count differs from prediction count");
  if (config.ecp_enabled) {
    require(dark.size() == scales && bright.size() == scales,
            "multiscale_loss: prior maps missing for some scale");
  }

  LossResult<T> result;
  LossBreakdown& b = result.breakdown;
  b.lambda = config.effective_lambda();
  b.omega = config.effective_omega();
  std::vector<Var<T>> terms;
  std::vector<T> weights;
  for (std::size_t j = 0; j < scales; ++j) {
    if (predictions[j].shape() != targets[j].shape()) {
      throw ContractViolation("multiscale_loss: scale " + std::to_string(j) + " prediction " +
                              predictions[j].shape().str() + " vs target " + targets[j].shape().str());
    }
    Var<T> recon = l1_distance(targets[j], predictions[j]);
    terms.push_back(recon);
    weights.push_back(T(1));
    b.recon.push_back(recon.value()[0]);
    if (!config.ecp_enabled) {
      b.dark.push_back(0);
      b.bright.push_back(0);
      continue;
    }
    check_unit_range(dark[j], "dark", j);
    check_unit_range(bright[j], "bright", j);
    Var<T> d = l1_to_constant(dark[j], T(0));
    Var<T> br = l1_to_constant(bright[j], T(1));
    b.dark.push_back(d.value()[0]);
    b.bright.push_back(br.value()[0]);
    if (b.lambda != 0) {
      terms.push_back(d);
      weights.push_back(static_cast<T>(b.lambda));
    }
    if (b.omega != 0) {
      terms.push_back(br);
      weights.push_back(static_cast<T>(b.omega));
    }
  }
  result.total = weighted_sum<T>(terms, weights);
  b.total = b.recomputed_total();
  return result;
}

template <typename T>
LossResult<T> multiscale_loss(const NetworkOutput<T>& output, const std::vector<Tensor<T>>& targets,
                              const LossConfig& config) {
  require(!output.predictions.empty(), "multiscale_loss: empty network output");
  Tape<T>& tape = output.predictions.front().tape();
  std::vector<Var<T>> target_vars, dark, bright;
  for (const Tensor<T>& t : targets) target_vars.push_back(tape.constant(t));
  for (const ExtremeVar<T>& d : output.dark) dark.push_back(d.values);
  for (const ExtremeVar<T>& b : output.bright) bright.push_back(b.values);
  return multiscale_loss<T>(output.predictions, target_vars, dark, bright, config);
}

#define ECPENET_INSTANTIATE(T)                                                                    \
  template LossResult<T> multiscale_loss(std::span<const Var<T>>, std::span<const Var<T>>,        \
                                         std::span<const Var<T>>, std::span<const Var<T>>,        \
                                         const LossConfig&);                                      \
  template LossResult<T> multiscale_loss(const NetworkOutput<T>&, const std::vector<Tensor<T>>&, \
                                         const LossConfig&);

ECPENET_INSTANTIATE(float)
ECPENET_INSTANTIATE(double)

#undef ECPENET_INSTANTIATE

}  // namespace ecpenet
