#include "ecpenet/run_config.h"

#include <charconv>
#include <fstream>
#include <sstream>

namespace ecpenet {

void TrainConfig::validate() const {
  require(learning_rate > 0, "train config: learning_rate must be positive");
  require(batch_size >= 1, "train config: batch_size must be >= 1");
  require(iterations >= 0, "train config: iterations must be >= 0");
  require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "train config: betas must be in [0, 1)");
  require(epsilon > 0, "train config: epsilon must be positive");
  require(checkpoint_interval >= 0, "train config: checkpoint_interval must be >= 0");
  require(log_interval >= 1, "train config: log_interval must be >= 1");
  require(patch_size >= 0, "train config: patch_size must be >= 0");
}

void DataConfig::validate() const {
  require(count >= 1, "data config: count must be >= 1");
  require(image_size >= 1, "data config: image_size must be >= 1");
  require(kernel_size >= 3 && kernel_size % 2 == 1, "data config: kernel_size must be odd and >= 3");
  require(noise_sigma >= 0, "data config: noise_sigma must be >= 0");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

template <typename I>
I parse_int(const std::string& key, const std::string& value) {
  I out{};
  const auto r = std::from_chars(value.data(), value.data() + value.size(), out);
  if (r.ec != std::errc() || r.ptr != value.data() + value.size()) {
    throw ConfigError(key + ": expected an integer, got '" + value + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  double out = 0;
  const auto r = std::from_chars(value.data(), value.data() + value.size(), out);
  if (r.ec != std::errc() || r.ptr != value.data() + value.size()) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
  return out;
}

bool parse_flag(const std::string& key, const std::string& value) {
  if (value == "on" || value == "true" || value == "1") return true;
  if (value == "off" || value == "false" || value == "0") return false;
  throw ConfigError(key + ": expected on/off, got '" + value + "'");
}

std::vector<int> parse_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int<int>(key, trim(item)));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

const char* flag(bool v) { return v ? "on" : "off"; }

}  // namespace

std::vector<int> RunConfig::default_windows(int scales) {
  std::vector<int> out;
  int w = 31;
  for (int j = 0; j < scales; ++j) {
    out.push_back(w);
    w = j == 0 ? 19 : (j == 1 ? 11 : std::max(3, w - 8));
  }
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "seed") {
    train.seed = parse_int<std::uint64_t>(key, value);
  } else if (key == "network.scales") {
    network.scales = parse_int<int>(key, value);
  } else if (key == "network.channels") {
    network.channels = parse_int<int>(key, value);
  } else if (key == "network.rir_blocks") {
    network.rir_blocks = parse_int<int>(key, value);
  } else if (key == "network.res_blocks_per_rir") {
    network.res_blocks_per_rir = parse_int<int>(key, value);
  } else if (key == "network.windows") {
    network.windows = parse_list(key, value);
    windows_set_ = true;
  } else if (key == "network.ecp") {
    network.ecp_enabled = parse_flag(key, value);
  } else if (key == "network.ife") {
    network.ife_enabled = parse_flag(key, value);
  } else if (key == "loss.lambda") {
    loss.lambda = parse_double(key, value);
  } else if (key == "loss.omega") {
    loss.omega = parse_double(key, value);
  } else if (key == "train.learning_rate") {
    train.learning_rate = parse_double(key, value);
  } else if (key == "train.batch_size") {
    train.batch_size = parse_int<int>(key, value);
  } else if (key == "train.iterations") {
    train.iterations = parse_int<std::int64_t>(key, value);
  } else if (key == "train.beta1") {
    train.beta1 = parse_double(key, value);
  } else if (key == "train.beta2") {
    train.beta2 = parse_double(key, value);
  } else if (key == "train.epsilon") {
    train.epsilon = parse_double(key, value);
  } else if (key == "train.checkpoint_interval") {
    train.checkpoint_interval = parse_int<std::int64_t>(key, value);
  } else if (key == "train.log_interval") {
    train.log_interval = parse_int<std::int64_t>(key, value);
  } else if (key == "train.patch_size") {
    train.patch_size = parse_int<std::int64_t>(key, value);
  } else if (key == "train.augment") {
    train.augment = parse_flag(key, value);
  } else if (key == "data.dir") {
    data.dir = value;
  } else if (key == "data.count") {
    data.count = parse_int<int>(key, value);
  } else if (key == "data.image_size") {
    data.image_size = parse_int<std::int64_t>(key, value);
  } else if (key == "data.kernel_size") {
    data.kernel_size = parse_int<int>(key, value);
  } else if (key == "data.noise_sigma") {
    data.noise_sigma = parse_double(key, value);
  } else if (key == "data.delta_kernel") {
    data.delta_kernel = parse_flag(key, value);
  } else {
    throw ConfigError("unknown key '" + key + "'");
  }
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string raw, section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      config.set(section.empty() ? key : section + "." + key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return config;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void RunConfig::resolve() {
  if (!windows_set_ || static_cast<int>(network.windows.size()) != network.scales) {
    if (windows_set_ && static_cast<int>(network.windows.size()) != network.scales) {
      throw ContractViolation("network config: windows has " + std::to_string(network.windows.size()) +
                              " entries for " + std::to_string(network.scales) + " scales");
    }
    network.windows = default_windows(network.scales);
  }
  loss.scales = network.scales;
  loss.ecp_enabled = network.ecp_enabled;
  network.validate();
  loss.validate();
  train.validate();
  data.validate();
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << "seed = " << train.seed << "\n\n[network]\n"
     << "scales = " << network.scales << "\nchannels = " << network.channels
     << "\nrir_blocks = " << network.rir_blocks << "\nres_blocks_per_rir = " << network.res_blocks_per_rir
     << "\nwindows = ";
  for (std::size_t i = 0; i < network.windows.size(); ++i) os << (i ? ", " : "") << network.windows[i];
  os << "\necp = " << flag(network.ecp_enabled) << "\nife = " << flag(network.ife_enabled) << "\n\n[loss]\n"
     << "lambda = " << format(loss.lambda) << "\nomega = " << format(loss.omega) << "\n\n[train]\n"
     << "learning_rate = " << format(train.learning_rate) << "\nbatch_size = " << train.batch_size
     << "\niterations = " << train.iterations << "\nbeta1 = " << format(train.beta1)
     << "\nbeta2 = " << format(train.beta2) << "\nepsilon = " << format(train.epsilon)
     << "\ncheckpoint_interval = " << train.checkpoint_interval << "\nlog_interval = " << train.log_interval
     << "\npatch_size = " << train.patch_size << "\naugment = " << flag(train.augment) << "\n\n[data]\n"
     << "dir = " << data.dir << "\ncount = " << data.count << "\nimage_size = " << data.image_size
     << "\nkernel_size = " << data.kernel_size << "\nnoise_sigma = " << format(data.noise_sigma)
     << "\ndelta_kernel = " << flag(data.delta_kernel) << "\n";
  return os.str();
}

}  // namespace ecpenet
