#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ecpenet/ecpel.h"

namespace ecpenet {

struct GradcheckCase {
  std::string name;
  std::string group;  // primitive, extractor, ecpel or network
  double max_relative_error = 0;
  double tolerance = 0;
  bool passed = false;
  /// Sampled elements rejected because their +-h interval straddles a kink.
  int skipped = 0;
};

struct GradcheckReport {
  std::uint64_t seed = 0;
  std::vector<GradcheckCase> cases;

  bool passed() const;
  std::string render() const;
};

struct GradcheckOptions {
  /// Restricts the run to cases whose group or name equals this; empty runs all.
  std::string only;
  /// Routing rule used by every extractor inside the checked graphs.
  ExtractBackwardFn<double> extract_backward = &ecpenet::extract_backward<double>;
};

inline constexpr double kPrimitiveTolerance = 1e-4;
inline constexpr double kNetworkTolerance = 1e-3;
inline constexpr double kFiniteDifferenceStep = 1e-5;

/// Analytic against central-difference gradients in double precision.
GradcheckReport gradcheck_suite(std::uint64_t seed, const GradcheckOptions& options = {});

}  // namespace ecpenet
