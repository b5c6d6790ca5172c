#pragma once

// Forward noising, training-step construction, and the seeded reverse
// sampling loop. The denoiser predicts the clean signal x0 directly; the
// posterior step below is the matching DDPM parameterization. Seed frames are
// side conditioning only and are never noised.

#include <gdiff/common.hpp>
#include <gdiff/dialogue.hpp>
#include <gdiff/motion.hpp>
#include <gdiff/schedule.hpp>

#include <vector>

namespace gdiff {

// Contract for the trainable denoising network: map a noisy target block, the
// step index, the clean seed frames, and the condition to a prediction of the
// clean target block. Must be deterministic given identical inputs and
// parameters; evaluations consume no rng.
class DenoiserInterface {
 public:
  virtual ~DenoiserInterface() = default;
  virtual Mat predict_x0(const Mat& x_t, int t, const Mat& seed, const ConditionVector& cond,
                         bool cond_mask) const = 0;
};

// Predicted x0 values are clamped to this band (in normalized units) before
// each posterior step.
constexpr double kX0Clamp = 8.0;

inline Mat q_sample(const Mat& x0, int t, const Mat& noise, const NoiseSchedule& sched) {
  if (noise.rows() != x0.rows() || noise.cols() != x0.cols())
    throw DimensionError("q_sample: noise shape must match x0");
  if (t < 1 || t > sched.T) throw std::out_of_range("q_sample: t outside [1, T]");
  double ab = sched.alpha_bar[static_cast<std::size_t>(t)];
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * noise;
}

inline int draw_timestep(Rng& rng, const NoiseSchedule& sched) {
  return static_cast<int>(rng.uniform_int(1, sched.T));
}

inline double huber_loss(const Mat& pred, const Mat& target, double delta = 1.0) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw DimensionError("huber_loss: shape mismatch");
  if (delta <= 0.0) throw std::invalid_argument("huber_loss: delta must be > 0");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i)
    for (Eigen::Index j = 0; j < pred.cols(); ++j) {
      double d = pred(i, j) - target(i, j);
      double a = std::abs(d);
      sum += a <= delta ? 0.5 * d * d : delta * (a - 0.5 * delta);
    }
  return sum / static_cast<double>(pred.size());
}

// Gradient of the mean-reduced Huber loss with respect to pred.
inline Mat huber_grad(const Mat& pred, const Mat& target, double delta = 1.0) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw DimensionError("huber_grad: shape mismatch");
  Mat g(pred.rows(), pred.cols());
  double inv_n = 1.0 / static_cast<double>(pred.size());
  for (Eigen::Index i = 0; i < pred.rows(); ++i)
    for (Eigen::Index j = 0; j < pred.cols(); ++j) {
      double d = pred(i, j) - target(i, j);
      g(i, j) = (std::abs(d) <= delta ? d : (d > 0 ? delta : -delta)) * inv_n;
    }
  return g;
}

// Everything one training step needs downstream of the denoiser call. The rng
// draw order is fixed: timestep, then the noise matrix (row major), then the
// condition-mask coin.
struct LossInputs {
  Mat prediction;  // denoiser output
  Mat target;      // clean target frames
  Mat x_t;
  Mat noise;
  int t = 0;
  bool cond_mask = false;
};

inline LossInputs training_step_target(const TrainingWindow& window, Rng& rng,
                                       const NoiseSchedule& sched,
                                       const DenoiserInterface& denoiser,
                                       double p_uncond = 0.1) {
  LossInputs out;
  out.t = draw_timestep(rng, sched);
  out.noise = rng.normal_matrix(window.target_frames.rows(), window.target_frames.cols());
  out.x_t = q_sample(window.target_frames, out.t, out.noise, sched);
  out.cond_mask = rng.uniform01() < p_uncond;
  ConditionVector cond{window.frame_conditions, window.clip_condition};
  out.prediction = denoiser.predict_x0(out.x_t, out.t, window.seed_frames, cond, out.cond_mask);
  out.target = window.target_frames;
  return out;
}

// One reverse step q(x_{t-1} | x_t, x0_hat). Adds posterior noise except at
// t = 1, which returns the mean exactly.
inline Mat posterior_step(const Mat& x_t, const Mat& x0_hat, int t, const NoiseSchedule& sched,
                          Rng& rng) {
  if (t < 1 || t > sched.T) throw std::out_of_range("posterior_step: t outside [1, T]");
  double ab_t = sched.alpha_bar[static_cast<std::size_t>(t)];
  double ab_prev = sched.alpha_bar[static_cast<std::size_t>(t) - 1];
  double beta = sched.beta[static_cast<std::size_t>(t) - 1];
  double alpha = sched.alpha[static_cast<std::size_t>(t) - 1];

  double coef_x0 = std::sqrt(ab_prev) * beta / (1.0 - ab_t);
  double coef_xt = std::sqrt(alpha) * (1.0 - ab_prev) / (1.0 - ab_t);
  Mat mean = coef_x0 * x0_hat + coef_xt * x_t;
  if (t == 1) return mean;

  double var = beta * (1.0 - ab_prev) / (1.0 - ab_t);
  double sigma = std::sqrt(var);
  Mat z = rng.normal_matrix(x_t.rows(), x_t.cols());
  return mean + sigma * z;
}

// Generate one window of target frames from pure noise, conditioned on the
// clean seed. guidance != 1 blends the conditioned and null-conditioned
// predictions (classifier-free guidance); at exactly 1 the null branch is
// skipped, which leaves the rng stream unchanged because denoiser calls
// consume no rng.
inline Mat sample_window(const DenoiserInterface& denoiser, const Mat& seed,
                         const ConditionVector& cond, const NoiseSchedule& sched, Rng& rng,
                         double guidance = 1.0, double x0_clamp = kX0Clamp) {
  Eigen::Index gen_rows = cond.frame_part.rows() - seed.rows();
  if (gen_rows < 1)
    throw DimensionError("sample_window: condition rows must exceed seed rows");
  Mat x = rng.normal_matrix(gen_rows, seed.cols());
  for (int t = sched.T; t >= 1; --t) {
    Mat x0_hat = denoiser.predict_x0(x, t, seed, cond, false);
    if (guidance != 1.0) {
      Mat x0_null = denoiser.predict_x0(x, t, seed, cond, true);
      x0_hat = x0_null + guidance * (x0_hat - x0_null);
    }
    x0_hat = x0_hat.cwiseMax(-x0_clamp).cwiseMin(x0_clamp);
    x = posterior_step(x, x0_hat, t, sched, rng);
  }
  return x;
}

// Chain windows into a long sequence: window k > 0 is seeded with the last
// seed-length frames generated by window k-1. Returns the concatenated target
// segments, len(conds) * N_gen rows.
inline Mat sample_long(const DenoiserInterface& denoiser, const Mat& initial_seed,
                       const std::vector<ConditionVector>& conds, const NoiseSchedule& sched,
                       Rng& rng, double guidance = 1.0) {
  if (conds.empty()) throw std::invalid_argument("sample_long: need at least one condition");
  const Eigen::Index seed_len = initial_seed.rows();
  const Eigen::Index gen_rows = conds.front().frame_part.rows() - seed_len;
  Mat out(gen_rows * static_cast<Eigen::Index>(conds.size()), initial_seed.cols());

  Mat seed = initial_seed;
  for (std::size_t k = 0; k < conds.size(); ++k) {
    Mat block = sample_window(denoiser, seed, conds[k], sched, rng, guidance);
    out.middleRows(static_cast<Eigen::Index>(k) * gen_rows, gen_rows) = block;
    seed = block.bottomRows(seed_len);
  }
  return out;
}

// Mean |delta| across the junctions between consecutively generated windows;
// reported by evaluation, not enforced anywhere.
inline double boundary_discontinuity(const Mat& long_sample, Eigen::Index gen_rows) {
  if (long_sample.rows() <= gen_rows) return 0.0;
  double acc = 0.0;
  int joins = 0;
  for (Eigen::Index r = gen_rows; r < long_sample.rows(); r += gen_rows) {
    acc += (long_sample.row(r) - long_sample.row(r - 1)).cwiseAbs().mean();
    ++joins;
  }
  return joins ? acc / joins : 0.0;
}

}  // namespace gdiff
