// ecpenet: synthesize data, train, deblur, check gradients, print prior statistics.

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ecpenet/checkpoint.h"
#include "ecpenet/data.h"
#include "ecpenet/gradcheck.h"
#include "ecpenet/image_io.h"
#include "ecpenet/metrics.h"
#include "ecpenet/run_config.h"
#include "ecpenet/training.h"

namespace fs = std::filesystem;
using namespace ecpenet;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

std::string pair_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04zu.png", i);
  return buf;
}

// Flags shared by the commands that resolve a RunConfig.
struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> ecp, ife;
  std::optional<int> scales;
  std::optional<std::int64_t> iters;
  std::optional<double> lr, lambda, omega;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "Configuration file (key = value with [sections])");
    app->add_option("--seed", seed, "Random seed");
    app->add_option("--ecp", ecp, "Extreme channel prior layers")->check(CLI::IsMember({"on", "off"}));
    app->add_option("--ife", ife, "Fine-to-coarse encoder injection")->check(CLI::IsMember({"on", "off"}));
    app->add_option("--scales", scales, "Number of pyramid scales");
    app->add_option("--iters", iters, "Training iterations");
    app->add_option("--lr", lr, "Learning rate");
    app->add_option("--lambda", lambda, "Dark-channel loss weight");
    app->add_option("--omega", omega, "Bright-channel loss weight");
  }

  // Defaults, then the file, then flags.
  RunConfig resolve() const {
    RunConfig c = config.empty() ? RunConfig{} : RunConfig::load(config);
    if (seed) c.set("seed", std::to_string(*seed));
    if (ecp) c.set("network.ecp", *ecp);
    if (ife) c.set("network.ife", *ife);
    if (scales) c.set("network.scales", std::to_string(*scales));
    if (iters) c.set("train.iterations", std::to_string(*iters));
    if (lr) c.set("train.learning_rate", fmt(*lr));
    if (lambda) c.set("loss.lambda", fmt(*lambda));
    if (omega) c.set("loss.omega", fmt(*omega));
    c.resolve();
    return c;
  }
};

SynthOptions synth_options(const DataConfig& d) {
  SynthOptions o;
  o.count = d.count;
  o.image_size = d.image_size;
  o.kernel_size = d.kernel_size;
  o.noise_sigma = d.noise_sigma;
  o.delta_kernel = d.delta_kernel;
  return o;
}

std::vector<fs::path> image_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".png" || ext == ".ppm" || ext == ".pgm")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---- synth ----

struct SynthArgs {
  Overrides o;
  std::string out;
  std::string sharp_dir;
  std::optional<int> count, kernel;
  std::optional<std::int64_t> size;
  std::optional<double> noise;
  bool delta = false;
};

int cmd_synth(const SynthArgs& a) {
  RunConfig config = a.o.resolve();
  if (a.count) config.data.count = *a.count;
  if (a.size) config.data.image_size = *a.size;
  if (a.kernel) config.data.kernel_size = *a.kernel;
  if (a.noise) config.data.noise_sigma = *a.noise;
  if (a.delta) config.data.delta_kernel = true;
  config.data.validate();
  if (a.out.empty()) throw UsageError("synth: --out is required");

  std::vector<Image> sources;
  if (!a.sharp_dir.empty()) {
    for (const fs::path& p : image_files(a.sharp_dir)) sources.push_back(read_image(p));
    if (sources.empty()) throw DataError("no images in " + a.sharp_dir);
  }
  const SynthOptions options = synth_options(config.data);
  const std::vector<BlurPair> pairs = synth_dataset(options, config.train.seed, sources);

  const fs::path out(a.out);
  if (fs::exists(out)) throw DataError("output " + out.string() + " already exists");
  const fs::path staging = out.string() + ".partial";
  fs::remove_all(staging);
  try {
    fs::create_directories(staging / "sharp");
    fs::create_directories(staging / "blur");
    std::ostringstream manifest;
    manifest << "# ecpenet synthetic dataset\nseed = " << config.train.seed << "\nsource = "
             << (sources.empty() ? "procedural" : a.sharp_dir) << "\ncount = " << pairs.size()
             << "\nimage_size = " << config.data.image_size << "\nkernel_size = " << config.data.kernel_size
             << "\nnoise_sigma = " << fmt(config.data.noise_sigma)
             << "\ndelta_kernel = " << (config.data.delta_kernel ? "on" : "off") << "\n\n";
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const BlurPair& p = pairs[i];
      write_png(staging / "sharp" / pair_name(i), p.sharp);
      write_png(staging / "blur" / pair_name(i), p.blurred);
      manifest << "pair " << pair_name(i) << " kernel " << p.kernel.height << "x" << p.kernel.width
               << " sum=" << fmt(p.kernel.sum()) << " noise_sigma=" << fmt(p.noise_sigma) << " taps=";
      for (std::size_t k = 0; k < p.kernel.taps.size(); ++k) manifest << (k ? "," : "") << fmt(p.kernel.taps[k]);
      manifest << '\n';
    }
    const std::string text = manifest.str();
    write_file_atomic(staging / "manifest.txt", std::vector<std::uint8_t>(text.begin(), text.end()));
    fs::rename(staging, out);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    throw;
  }
  std::cout << "wrote " << pairs.size() << " pairs to " << out.string() << '\n';
  return kOk;
}

// ---- train ----

struct TrainArgs {
  Overrides o;
  std::string out = "run";
  std::string data;
  std::string resume;
};

double held_out_psnr(NetworkParams<float>& params, const BlurPair& pair) {
  const Image restored = deblur(params, pair.blurred);
  const Shape s = restored.shape();
  return psnr(restored, crop(pair.sharp, 0, 0, s.h, s.w));
}

int cmd_train(const TrainArgs& a) {
  std::optional<Checkpoint> resume;
  RunConfig config;
  if (a.resume.empty()) {
    config = a.o.resolve();
  } else {
    // Everything comes from the checkpoint except a longer iteration budget.
    resume = load_checkpoint(a.resume);
    config = RunConfig::parse(resume->get_text("meta/config"));
    if (a.o.iters) config.train.iterations = *a.o.iters;
    config.resolve();
  }
  if (!a.data.empty()) config.data.dir = a.data;

  std::vector<BlurPair> dataset;
  if (config.data.dir.empty()) {
    SynthOptions options = synth_options(config.data);
    options.count += 1;  // the extra pair is held out
    dataset = synth_dataset(options, config.train.seed);
  } else {
    dataset = load_dataset(config.data.dir);
  }
  BlurPair held_out = dataset.back();
  if (dataset.size() > 1) dataset.pop_back();

  std::optional<Trainer> trainer;
  if (resume) {
    trainer.emplace(*resume, std::move(dataset));
    trainer->set_iteration_budget(config.train.iterations);
  } else {
    trainer.emplace(config, std::move(dataset));
  }

  const fs::path out(a.out);
  fs::create_directories(out);
  const std::string echo = trainer->config().to_text();
  write_file_atomic(out / "config.txt", std::vector<std::uint8_t>(echo.begin(), echo.end()));

  std::string log;
  const std::int64_t interval = config.train.checkpoint_interval;
  trainer->run(config.train.iterations, [&](const LogRecord& r) {
    log += r.to_line() + '\n';
    if (r.iteration % config.train.log_interval == 0 || r.iteration == config.train.iterations) {
      std::cout << r.to_line() << " heldout_psnr=" << fixed(held_out_psnr(trainer->params(), held_out), 3)
                << std::endl;
    }
    if (interval > 0 && r.iteration % interval == 0) {
      save_checkpoint(trainer->checkpoint(), out / ("checkpoint_" + std::to_string(r.iteration) + ".ecpn"));
    }
  });
  save_checkpoint(trainer->checkpoint(), out / "checkpoint.ecpn");
  // Appends so that resumed runs keep one continuous record.
  std::ofstream(out / "log.txt", std::ios::app) << log;
  std::cout << "checkpoint " << (out / "checkpoint.ecpn").string() << " at iteration " << trainer->iteration()
            << '\n';
  return kOk;
}

// ---- infer ----

struct InferArgs {
  std::string checkpoint, input, out;
};

int cmd_infer(const InferArgs& a) {
  NetworkParams<float> params = network_from_checkpoint<float>(load_checkpoint(a.checkpoint));
  const Image blurred = read_image(a.input);
  const std::int64_t unit = std::int64_t{1} << (params.config().scales - 1);
  const Shape s = blurred.shape();
  if (s.h % unit != 0 || s.w % unit != 0) {
    std::cerr << "warning: cropping " << s.h << "x" << s.w << " to " << s.h / unit * unit << "x" << s.w / unit * unit
              << " (multiple of " << unit << ")\n";
  }
  write_image(a.out, deblur(params, blurred));
  return kOk;
}

// ---- gradcheck ----

int cmd_gradcheck(std::uint64_t seed, const std::string& only) {
  GradcheckOptions options;
  options.only = only;
  const GradcheckReport report = gradcheck_suite(seed, options);
  if (report.cases.empty()) throw UsageError("gradcheck: no case or group named '" + only + "'");
  std::cout << report.render();
  return report.passed() ? kOk : kNumeric;
}

// ---- stats ----

struct StatsArgs {
  std::vector<std::string> inputs;
  std::string pairs;
  int window = 15;
};

void print_stats(const std::string& name, const ChannelStats& s) {
  std::cout << name << "  dark=" << fixed(s.mean_dark, 6) << "  bright=" << fixed(s.mean_bright, 6) << '\n';
}

int cmd_stats(const StatsArgs& a) {
  if (a.window < 1 || a.window % 2 == 0) throw UsageError("stats: --window must be a positive odd integer");
  if (a.inputs.empty() && a.pairs.empty()) throw UsageError("stats: give image paths or --pairs <dataset dir>");
  std::vector<fs::path> files;
  for (const std::string& in : a.inputs) {
    if (fs::is_directory(in)) {
      for (const fs::path& p : image_files(in)) files.push_back(p);
    } else {
      files.push_back(in);
    }
  }
  double dark = 0, bright = 0;
  for (const fs::path& p : files) {
    const ChannelStats s = channel_stats(read_image(p), a.window);
    print_stats(p.string(), s);
    dark += s.mean_dark;
    bright += s.mean_bright;
  }
  if (!files.empty()) {
    const double n = static_cast<double>(files.size());
    std::cout << "mean over " << files.size() << " images  dark=" << fixed(dark / n, 6)
              << "  bright=" << fixed(bright / n, 6) << '\n';
  }
  if (!a.pairs.empty()) {
    const std::vector<BlurPair> pairs = load_dataset(a.pairs);
    int consistent = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const ChannelStats sharp = channel_stats(pairs[i].sharp, a.window);
      const ChannelStats blurred = channel_stats(pairs[i].blurred, a.window);
      const bool ok = blurred.mean_dark >= sharp.mean_dark && blurred.mean_bright <= sharp.mean_bright;
      consistent += ok ? 1 : 0;
      std::cout << "pair " << i << "  sharp dark/bright=" << fixed(sharp.mean_dark, 6) << "/"
                << fixed(sharp.mean_bright, 6) << "  blurred dark/bright=" << fixed(blurred.mean_dark, 6) << "/"
                << fixed(blurred.mean_bright, 6) << "  " << (ok ? "consistent" : "inconsistent") << '\n';
    }
    std::cout << "verdict: " << consistent << "/" << pairs.size()
              << " pairs have a less dark and less bright blurred image\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ECPeNet image deblurring"};
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Write a synthetic sharp/blur dataset");
  synth.o.attach(synth_cmd);
  synth_cmd->add_option("--out", synth.out, "Output dataset directory")->required();
  synth_cmd->add_option("--sharp", synth.sharp_dir, "Blur these sharp images instead of procedural scenes");
  synth_cmd->add_option("--count", synth.count, "Number of procedural pairs");
  synth_cmd->add_option("--size", synth.size, "Side of each procedural pair");
  synth_cmd->add_option("--kernel", synth.kernel, "Maximum kernel support (odd)");
  synth_cmd->add_option("--noise", synth.noise, "Gaussian noise sigma");
  synth_cmd->add_flag("--delta", synth.delta, "Use the identity kernel");

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a network");
  train.o.attach(train_cmd);
  train_cmd->add_option("--out", train.out, "Run directory for checkpoints and the log");
  train_cmd->add_option("--data", train.data, "Dataset directory (sharp/ and blur/); procedural if omitted");
  train_cmd->add_option("--resume", train.resume, "Continue from this checkpoint");

  InferArgs infer;
  CLI::App* infer_cmd = app.add_subcommand("infer", "Deblur one image");
  infer_cmd->add_option("--checkpoint", infer.checkpoint, "Trained checkpoint")->required();
  infer_cmd->add_option("--input", infer.input, "Blurred image")->required();
  infer_cmd->add_option("--out", infer.out, "Output image (.png or .ppm)")->required();

  std::uint64_t gc_seed = 0;
  std::string gc_case;
  CLI::App* gc_cmd = app.add_subcommand("gradcheck", "Compare analytic and numeric gradients");
  gc_cmd->add_option("--seed", gc_seed, "Random seed");
  gc_cmd->add_option("--case", gc_case, "Run only this case or group (primitive, extractor, ecpel, network)");

  StatsArgs stats;
  CLI::App* stats_cmd = app.add_subcommand("stats", "Dark/bright channel statistics");
  stats_cmd->add_option("inputs", stats.inputs, "Images or directories");
  stats_cmd->add_option("--window", stats.window, "Extractor window (odd)");
  stats_cmd->add_option("--pairs", stats.pairs, "Dataset directory to compare sharp and blurred images");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (synth_cmd->parsed()) return cmd_synth(synth);
    if (train_cmd->parsed()) return cmd_train(train);
    if (infer_cmd->parsed()) return cmd_infer(infer);
    if (gc_cmd->parsed()) return cmd_gradcheck(gc_seed, gc_case);
    if (stats_cmd->parsed()) return cmd_stats(stats);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const ContractViolation& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << '\n';
    return kNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "filesystem error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
