#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "ecpenet/network.h"
#include "ecpenet/objective.h"

namespace ecpenet {

/// Malformed configuration text; the message carries the line number.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 10;
  std::int64_t iterations = 600000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_interval = 0;  // 0 disables intermediate checkpoints
  std::int64_t log_interval = 100;
  std::int64_t patch_size = 64;          // 0 trains on whole images
  bool augment = true;

  void validate() const;
};

struct DataConfig {
  std::string dir;               // sharp/ + blur/ dataset; empty means procedural
  int count = 20;                // procedural pair count
  std::int64_t image_size = 96;  // procedural blurred image side
  int kernel_size = 9;           // maximum blur kernel support (odd)
  double noise_sigma = 0.01;
  bool delta_kernel = false;

  void validate() const;
};

/// Fully resolved settings of one run. Text form is flat `key = value` lines
/// grouped under `[network]`, `[loss]`, `[train]` and `[data]` sections, with
/// `seed` at the top level; `#` starts a comment.
struct RunConfig {
  NetworkConfig network;
  LossConfig loss;
  TrainConfig train;
  DataConfig data;

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  /// Sets `section.key` (or `seed`) from its textual value.
  void set(const std::string& key, const std::string& value);

  /// Copies shared fields into the sub-configs (loss scales / prior flag),
  /// fills default windows for the scale count, and validates everything.
  void resolve();

  /// Canonical text; parse(to_text()) reproduces this config exactly.
  std::string to_text() const;

  /// Windows for `scales` levels, finest first: 31, 19, 11, then shrinking by 8 (min 3).
  static std::vector<int> default_windows(int scales);

 private:
  bool windows_set_ = false;
};

}  // namespace ecpenet
