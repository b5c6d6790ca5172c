#pragma once

// The training loop: minibatch window sampling, noising, forward/backward,
// AdamW updates, CSV logging, and periodic checkpoints. Fully deterministic
// for a fixed (rng_seed, data order); logs carry no timestamps.

#include <gdiff/checkpoint.hpp>
#include <gdiff/dataset.hpp>
#include <gdiff/denoiser.hpp>
#include <gdiff/diffusion.hpp>

#include <deque>
#include <fstream>
#include <string>
#include <vector>

namespace gdiff {

struct WindowStep {
  double loss = 0.0;
  TensorSet grads;
};

// One window's loss and gradients. Consumes the rng exactly like
// training_step_target: timestep, noise matrix, condition-mask coin.
inline WindowStep train_step_window(const DenoiserParams& params, const TrainingWindow& window,
                                    Rng& rng, const NoiseSchedule& sched, double p_uncond,
                                    double delta) {
  int t = draw_timestep(rng, sched);
  Mat noise = rng.normal_matrix(window.target_frames.rows(), window.target_frames.cols());
  Mat x_t = q_sample(window.target_frames, t, noise, sched);
  bool mask = rng.uniform01() < p_uncond;
  ConditionVector cond{window.frame_conditions, window.clip_condition};
  ForwardTrace trace = forward_traced(params, x_t, t, window.seed_frames, cond, mask);
  WindowStep s;
  s.loss = huber_loss(trace.out, window.target_frames, delta);
  s.grads = backward(params, trace, huber_grad(trace.out, window.target_frames, delta));
  return s;
}

inline double grad_norm(const TensorSet& g) {
  double acc = 0.0;
  g.visit([&acc](const std::string&, const Mat& m, bool) { acc += m.squaredNorm(); });
  return std::sqrt(acc);
}

// Evenly spaced window indices used as the checkpoint's seed pool.
inline std::vector<Eigen::Index> seed_pool_indices(Eigen::Index n_windows, Eigen::Index pool) {
  pool = std::min(pool, n_windows);
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < pool; ++i) idx.push_back(i * n_windows / pool);
  return idx;
}

inline Checkpoint make_checkpoint(const RunConfig& cfg, const CachedDataset& data,
                                  const DenoiserParams& params) {
  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.motion_dim = data.motion_dim;
  ckpt.condition_layout = condition_layout_descriptor(cfg.n_mels, cfg.context_dim);
  ckpt.skeleton = data.skeleton;
  ckpt.motion_stats = data.motion_stats;
  ckpt.audio_stats = data.audio_stats;
  ckpt.params = params;

  std::vector<Eigen::Index> pool =
      seed_pool_indices(static_cast<Eigen::Index>(data.windows.size()), cfg.seed_pool_size);
  ckpt.seed_pool.resize(static_cast<Eigen::Index>(pool.size()) * cfg.seed_len, data.motion_dim);
  for (std::size_t i = 0; i < pool.size(); ++i)
    ckpt.seed_pool.middleRows(static_cast<Eigen::Index>(i) * cfg.seed_len, cfg.seed_len) =
        data.windows[static_cast<std::size_t>(pool[i])].seed_frames;
  return ckpt;
}

struct TrainResult {
  long steps_run = 0;
  double final_loss = 0.0;
  std::vector<double> losses;  // one entry per executed step
};

inline TrainResult train(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.cache_dir.empty()) throw std::invalid_argument("train: config key 'cache_dir' is required");
  if (cfg.checkpoint.empty())
    throw std::invalid_argument("train: config key 'checkpoint' is required");

  CachedDataset data = load_cached_windows(cfg, "train");
  if (data.windows.empty()) throw std::runtime_error("train: cache holds no training windows");
  const Eigen::Index n_windows = static_cast<Eigen::Index>(data.windows.size());

  DenoiserConfig dcfg;
  dcfg.motion_dim = data.motion_dim;
  dcfg.audio_dim = cfg.n_mels;
  dcfg.context_dim = cfg.context_dim;
  dcfg.seed_len = cfg.seed_len;
  dcfg.hidden = cfg.hidden;
  dcfg.depth = cfg.depth;
  dcfg.time_dim = cfg.time_dim;
  dcfg.seed_summary_dim = cfg.seed_summary_dim;
  dcfg.kernel = cfg.kernel;
  DenoiserParams params = init_params(dcfg, cfg.rng_seed);

  NoiseSchedule sched = cosine_schedule(cfg.diffusion_steps, cfg.cosine_s);
  check_schedule(sched);
  AdamWConfig opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;

  const std::string log_path =
      cfg.metrics_log.empty() ? cfg.checkpoint + ".log.csv" : cfg.metrics_log;
  std::ofstream log(log_path, std::ios::binary);
  if (!log) throw std::runtime_error("cannot write " + log_path);
  log << "step,loss,grad_norm\n";

  // Conditions are shared per window across steps; build them once.
  std::vector<ConditionVector> conds;
  conds.reserve(data.windows.size());
  for (const TrainingWindow& w : data.windows)
    conds.push_back(ConditionVector{w.frame_conditions, w.clip_condition});

  // Draw order per step: batch_size window indices, then per window the
  // timestep / noise / mask stream of train_step_window. The batched
  // forward/backward is numerically equivalent to looping the per-window one.
  Rng rng(cfg.rng_seed + 1);
  TrainResult result;
  std::deque<double> recent;
  char row[96];
  const std::size_t B = static_cast<std::size_t>(cfg.batch_size);
  const Eigen::Index gen = cfg.gen_len();
  std::vector<Eigen::Index> batch(B);
  std::vector<Mat> x_ts(B);
  std::vector<BatchInput> inputs(B);
  BatchTrace trace;
  TensorSet grads = zero_tensors(dcfg);
  Mat d_out;
  for (long step = 1; step <= cfg.train_steps; ++step) {
    for (auto& b : batch) b = static_cast<Eigen::Index>(rng.uniform_int(0, n_windows - 1));
    for (std::size_t b = 0; b < B; ++b) {
      const TrainingWindow& w = data.windows[static_cast<std::size_t>(batch[b])];
      int t = draw_timestep(rng, sched);
      Mat noise = rng.normal_matrix(w.target_frames.rows(), w.target_frames.cols());
      x_ts[b] = q_sample(w.target_frames, t, noise, sched);
      bool mask = rng.uniform01() < cfg.p_uncond;
      inputs[b] = BatchInput{&x_ts[b], &w.seed_frames, &conds[static_cast<std::size_t>(batch[b])],
                             t, mask};
    }
    forward_batched(params, inputs, trace);

    double loss = 0.0;
    d_out.resize(trace.out.rows(), trace.out.cols());
    for (std::size_t b = 0; b < B; ++b) {
      const TrainingWindow& w = data.windows[static_cast<std::size_t>(batch[b])];
      auto pred = trace.out.middleRows(static_cast<Eigen::Index>(b) * gen, gen);
      loss += huber_loss(pred, w.target_frames, cfg.huber_delta);
      d_out.middleRows(static_cast<Eigen::Index>(b) * gen, gen) =
          huber_grad(pred, w.target_frames, cfg.huber_delta) / static_cast<double>(cfg.batch_size);
    }
    loss /= static_cast<double>(cfg.batch_size);
    backward_batched(params, trace, d_out, grads);

    if (!std::isfinite(loss))
      throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));
    optimizer_step(params, grads, opt);
    bool finite = true;
    params.w.visit([&finite](const std::string&, const Mat& m, bool) {
      if (!m.allFinite()) finite = false;
    });
    if (!finite)
      throw std::runtime_error("train: non-finite parameter after step " + std::to_string(step));

    std::snprintf(row, sizeof(row), "%ld,%.17g,%.17g\n", step, loss, grad_norm(grads));
    log << row;
    result.losses.push_back(loss);
    result.steps_run = step;
    result.final_loss = loss;

    if (step % cfg.checkpoint_every == 0)
      save_checkpoint(cfg.checkpoint, make_checkpoint(cfg, data, params));

    if (cfg.early_stop_loss > 0.0) {
      recent.push_back(loss);
      if (recent.size() > 200) recent.pop_front();
      if (recent.size() == 200) {
        double avg = 0.0;
        for (double v : recent) avg += v;
        if (avg / 200.0 < cfg.early_stop_loss) break;
      }
    }
  }
  save_checkpoint(cfg.checkpoint, make_checkpoint(cfg, data, params));
  return result;
}

}  // namespace gdiff
