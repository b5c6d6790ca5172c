#pragma once

// Run configuration: one flat key=value text file (full-line # comments,
// blank lines ignored) plus command-line overrides. Every field is validated
// against the owning module's preconditions at load time; unknown keys are
// rejected.

#include <gdiff/common.hpp>

#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace gdiff {

struct RunConfig {
  // grid
  double fps = 30.0;
  Eigen::Index window_len = 150;
  Eigen::Index seed_len = 30;
  Eigen::Index stride = 30;
  // audio features
  int n_fft = 1024;
  Eigen::Index n_mels = 27;       // D_a
  Eigen::Index context_dim = 64;  // D_c
  // diffusion
  int diffusion_steps = 1000;  // T
  double cosine_s = 0.008;
  double huber_delta = 1.0;
  double p_uncond = 0.1;
  double guidance = 1.0;
  // denoiser
  Eigen::Index hidden = 256;
  Eigen::Index depth = 4;
  Eigen::Index time_dim = 64;
  Eigen::Index seed_summary_dim = 128;
  Eigen::Index kernel = 5;
  // optimization
  double lr = 3e-5;
  double weight_decay = 0.01;
  Eigen::Index batch_size = 32;
  long train_steps = 3000;
  long checkpoint_every = 1000;
  double early_stop_loss = 0.0;  // 0 disables; otherwise stop when the
                                 // 200-step moving average drops below it
  Eigen::Index seed_pool_size = 32;
  std::uint64_t rng_seed = 1;
  // toy data
  Eigen::Index toy_dialogs = 8;
  double toy_seconds = 20.0;
  // paths and selectors
  std::string data_dir;  // provider tables; empty means the shipped default
  std::string dataset;
  std::string cache_dir;
  std::string checkpoint;
  std::string metrics_log;
  std::string out;
  std::string dialog;
  std::string split = "train";
  double duration_s = 20.0;

  Eigen::Index gen_len() const { return window_len - seed_len; }

  void validate() const {
    if (fps <= 0.0) throw std::invalid_argument("config: fps must be > 0");
    if (window_len <= seed_len) throw std::invalid_argument("config: window_len must exceed seed_len");
    if (seed_len < 1) throw std::invalid_argument("config: seed_len must be >= 1");
    if (stride < 1) throw std::invalid_argument("config: stride must be >= 1");
    if (n_fft < 2 || (n_fft & (n_fft - 1)) != 0)
      throw std::invalid_argument("config: n_fft must be a power of two");
    if (n_mels < 1) throw std::invalid_argument("config: n_mels must be >= 1");
    if (context_dim < 1) throw std::invalid_argument("config: context_dim must be >= 1");
    if (diffusion_steps < 1) throw std::invalid_argument("config: diffusion_steps must be >= 1");
    if (huber_delta <= 0.0) throw std::invalid_argument("config: huber_delta must be > 0");
    if (p_uncond < 0.0 || p_uncond > 1.0)
      throw std::invalid_argument("config: p_uncond must be in [0, 1]");
    if (hidden < 1 || depth < 1 || time_dim < 1 || seed_summary_dim < 1)
      throw std::invalid_argument("config: denoiser sizes must be >= 1");
    if (time_dim % 2 != 0) throw std::invalid_argument("config: time_dim must be even");
    if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("config: kernel must be odd");
    if (lr <= 0.0) throw std::invalid_argument("config: lr must be > 0");
    if (weight_decay < 0.0) throw std::invalid_argument("config: weight_decay must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (train_steps < 0) throw std::invalid_argument("config: train_steps must be >= 0");
    if (checkpoint_every < 1) throw std::invalid_argument("config: checkpoint_every must be >= 1");
    if (seed_pool_size < 1) throw std::invalid_argument("config: seed_pool_size must be >= 1");
    if (toy_dialogs < 1) throw std::invalid_argument("config: toy_dialogs must be >= 1");
    if (toy_seconds <= 0.0) throw std::invalid_argument("config: toy_seconds must be > 0");
    if (duration_s <= 0.0) throw std::invalid_argument("config: duration_s must be > 0");
    if (split != "train" && split != "val" && split != "test")
      throw std::invalid_argument("config: split must be train, val, or test");
  }

  std::string resolved_data_dir() const {
#ifdef GDIFF_DATA_DIR
    return data_dir.empty() ? GDIFF_DATA_DIR : data_dir;
#else
    if (data_dir.empty()) throw std::invalid_argument("config: data_dir is required");
    return data_dir;
#endif
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

// Apply "key=value" pairs onto a RunConfig, rejecting unknown keys and
// malformed numbers. Shared by the config-file loader and --set overrides.
inline void config_set(RunConfig& cfg, const std::string& key, const std::string& value,
                       int line_no = 0) {
  auto parse_f = [&](const char* what) {
    try {
      std::size_t used = 0;
      double v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ParseError("config key '" + key + "': expected " + what + ", got '" + value + "'",
                       line_no);
    }
  };
  auto parse_i = [&]() -> long long {
    try {
      std::size_t used = 0;
      long long v = std::stoll(value, &used);
      if (used != value.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ParseError("config key '" + key + "': expected an integer, got '" + value + "'",
                       line_no);
    }
  };

  if (key == "fps") cfg.fps = parse_f("a number");
  else if (key == "window_len") cfg.window_len = parse_i();
  else if (key == "seed_len") cfg.seed_len = parse_i();
  else if (key == "stride") cfg.stride = parse_i();
  else if (key == "n_fft") cfg.n_fft = static_cast<int>(parse_i());
  else if (key == "n_mels") cfg.n_mels = parse_i();
  else if (key == "context_dim") cfg.context_dim = parse_i();
  else if (key == "diffusion_steps") cfg.diffusion_steps = static_cast<int>(parse_i());
  else if (key == "cosine_s") cfg.cosine_s = parse_f("a number");
  else if (key == "huber_delta") cfg.huber_delta = parse_f("a number");
  else if (key == "p_uncond") cfg.p_uncond = parse_f("a number");
  else if (key == "guidance") cfg.guidance = parse_f("a number");
  else if (key == "hidden") cfg.hidden = parse_i();
  else if (key == "depth") cfg.depth = parse_i();
  else if (key == "time_dim") cfg.time_dim = parse_i();
  else if (key == "seed_summary_dim") cfg.seed_summary_dim = parse_i();
  else if (key == "kernel") cfg.kernel = parse_i();
  else if (key == "lr") cfg.lr = parse_f("a number");
  else if (key == "weight_decay") cfg.weight_decay = parse_f("a number");
  else if (key == "batch_size") cfg.batch_size = parse_i();
  else if (key == "train_steps") cfg.train_steps = parse_i();
  else if (key == "checkpoint_every") cfg.checkpoint_every = parse_i();
  else if (key == "early_stop_loss") cfg.early_stop_loss = parse_f("a number");
  else if (key == "seed_pool_size") cfg.seed_pool_size = parse_i();
  else if (key == "rng_seed") cfg.rng_seed = static_cast<std::uint64_t>(parse_i());
  else if (key == "toy_dialogs") cfg.toy_dialogs = parse_i();
  else if (key == "toy_seconds") cfg.toy_seconds = parse_f("a number");
  else if (key == "data_dir") cfg.data_dir = value;
  else if (key == "dataset") cfg.dataset = value;
  else if (key == "cache_dir") cfg.cache_dir = value;
  else if (key == "checkpoint") cfg.checkpoint = value;
  else if (key == "metrics_log") cfg.metrics_log = value;
  else if (key == "out") cfg.out = value;
  else if (key == "dialog") cfg.dialog = value;
  else if (key == "split") cfg.split = value;
  else if (key == "duration_s") cfg.duration_s = parse_f("a number");
  else throw ParseError("unknown config key '" + key + "'", line_no);
}

inline RunConfig parse_config(std::string_view text, RunConfig base = {}) {
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
    std::string key = detail::trim(t.substr(0, eq));
    std::string value = detail::trim(t.substr(eq + 1));
    if (key.empty()) throw ParseError("empty config key", line_no);
    config_set(base, key, value, line_no);
  }
  return base;
}

// Serialize back to the same grammar (used for checkpoint metadata).
inline std::string config_to_text(const RunConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "fps = " << c.fps << "\n";
  out << "window_len = " << c.window_len << "\n";
  out << "seed_len = " << c.seed_len << "\n";
  out << "stride = " << c.stride << "\n";
  out << "n_fft = " << c.n_fft << "\n";
  out << "n_mels = " << c.n_mels << "\n";
  out << "context_dim = " << c.context_dim << "\n";
  out << "diffusion_steps = " << c.diffusion_steps << "\n";
  out << "cosine_s = " << c.cosine_s << "\n";
  out << "huber_delta = " << c.huber_delta << "\n";
  out << "p_uncond = " << c.p_uncond << "\n";
  out << "guidance = " << c.guidance << "\n";
  out << "hidden = " << c.hidden << "\n";
  out << "depth = " << c.depth << "\n";
  out << "time_dim = " << c.time_dim << "\n";
  out << "seed_summary_dim = " << c.seed_summary_dim << "\n";
  out << "kernel = " << c.kernel << "\n";
  out << "lr = " << c.lr << "\n";
  out << "weight_decay = " << c.weight_decay << "\n";
  out << "batch_size = " << c.batch_size << "\n";
  out << "train_steps = " << c.train_steps << "\n";
  out << "checkpoint_every = " << c.checkpoint_every << "\n";
  out << "early_stop_loss = " << c.early_stop_loss << "\n";
  out << "seed_pool_size = " << c.seed_pool_size << "\n";
  out << "rng_seed = " << c.rng_seed << "\n";
  return out.str();
}

}  // namespace gdiff
