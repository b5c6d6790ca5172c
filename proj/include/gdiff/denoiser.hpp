#pragma once

// The trainable denoising network: a per-frame residual MLP over the
// concatenated inputs [x_t | audio | clip condition | time embedding | seed
// summary], followed by one depthwise temporal convolution and an output
// projection. Gradients are exact reverse-mode accumulation written by hand;
// the optimizer is AdamW with decoupled weight decay. Everything is double
// precision.

#include <gdiff/common.hpp>
#include <gdiff/diffusion.hpp>

#include <string>
#include <vector>

namespace gdiff {

struct DenoiserConfig {
  Eigen::Index motion_dim = 0;       // D_m
  Eigen::Index audio_dim = 27;       // D_a, per speaker
  Eigen::Index context_dim = 64;     // D_c, per speaker
  Eigen::Index seed_len = 30;        // seed frames consumed by the seed encoder
  Eigen::Index hidden = 256;
  Eigen::Index depth = 4;            // residual blocks
  Eigen::Index time_dim = 64;        // sinusoidal embedding size, even
  Eigen::Index seed_summary_dim = 128;
  Eigen::Index kernel = 5;           // temporal conv taps, odd

  Eigen::Index clip_dim() const { return clip_condition_dim(context_dim); }
  Eigen::Index input_dim() const {
    return motion_dim + 2 * audio_dim + clip_dim() + time_dim + seed_summary_dim;
  }
  void validate() const {
    if (motion_dim < 1 || audio_dim < 1 || context_dim < 1 || seed_len < 1)
      throw std::invalid_argument("denoiser config: dimensions must be >= 1");
    if (hidden < 1 || depth < 1 || time_dim < 1 || seed_summary_dim < 1)
      throw std::invalid_argument("denoiser config: sizes must be >= 1");
    if (time_dim % 2 != 0) throw std::invalid_argument("denoiser config: time_dim must be even");
    if (kernel < 1 || kernel % 2 == 0)
      throw std::invalid_argument("denoiser config: kernel must be odd");
  }
};

// All tensors of the network in one bag; the same shape is reused for
// gradients and for the two Adam moment accumulators. Biases are stored as
// 1-row matrices so every entry can be visited generically.
struct TensorSet {
  struct Block {
    Mat w1, b1, w2, b2;
  };
  Mat seed_w, seed_b;
  Mat in_w, in_b;
  std::vector<Block> blocks;
  Mat conv_k, conv_b;  // conv_k[tap, feature]
  Mat out_w, out_b;
  Mat null_embed;      // [1 x clip_dim], substituted when the condition is masked

  // Visits every tensor in a fixed order. The callback gets the tensor name,
  // the matrix, and whether weight decay applies (biases and the null
  // embedding are exempt).
  template <class Self, class F>
  static void visit_impl(Self& ts, F&& f) {
    f("seed.w", ts.seed_w, true);
    f("seed.b", ts.seed_b, false);
    f("in.w", ts.in_w, true);
    f("in.b", ts.in_b, false);
    for (std::size_t i = 0; i < ts.blocks.size(); ++i) {
      const std::string p = "block" + std::to_string(i);
      f(p + ".w1", ts.blocks[i].w1, true);
      f(p + ".b1", ts.blocks[i].b1, false);
      f(p + ".w2", ts.blocks[i].w2, true);
      f(p + ".b2", ts.blocks[i].b2, false);
    }
    f("conv.k", ts.conv_k, true);
    f("conv.b", ts.conv_b, false);
    f("out.w", ts.out_w, true);
    f("out.b", ts.out_b, false);
    f("null_embed", ts.null_embed, false);
  }
  template <class F>
  void visit(F&& f) {
    visit_impl(*this, std::forward<F>(f));
  }
  template <class F>
  void visit(F&& f) const {
    visit_impl(*this, std::forward<F>(f));
  }
};

inline TensorSet zero_tensors(const DenoiserConfig& cfg) {
  TensorSet ts;
  ts.seed_w = Mat::Zero(cfg.seed_len * cfg.motion_dim, cfg.seed_summary_dim);
  ts.seed_b = Mat::Zero(1, cfg.seed_summary_dim);
  ts.in_w = Mat::Zero(cfg.input_dim(), cfg.hidden);
  ts.in_b = Mat::Zero(1, cfg.hidden);
  ts.blocks.resize(static_cast<std::size_t>(cfg.depth));
  for (auto& b : ts.blocks) {
    b.w1 = Mat::Zero(cfg.hidden, cfg.hidden);
    b.b1 = Mat::Zero(1, cfg.hidden);
    b.w2 = Mat::Zero(cfg.hidden, cfg.hidden);
    b.b2 = Mat::Zero(1, cfg.hidden);
  }
  ts.conv_k = Mat::Zero(cfg.kernel, cfg.hidden);
  ts.conv_b = Mat::Zero(1, cfg.hidden);
  ts.out_w = Mat::Zero(cfg.hidden, cfg.motion_dim);
  ts.out_b = Mat::Zero(1, cfg.motion_dim);
  ts.null_embed = Mat::Zero(1, cfg.clip_dim());
  return ts;
}

// Weights, optimizer moments, and the step counter.
struct DenoiserParams {
  DenoiserConfig config;
  TensorSet w;
  TensorSet adam_m;
  TensorSet adam_v;
  long step = 0;
};

// Xavier-uniform weights, zero biases, zero null embedding and moments.
inline DenoiserParams init_params(const DenoiserConfig& cfg, std::uint64_t rng_seed) {
  cfg.validate();
  DenoiserParams p;
  p.config = cfg;
  p.w = zero_tensors(cfg);
  p.adam_m = zero_tensors(cfg);
  p.adam_v = zero_tensors(cfg);
  Rng rng(rng_seed);
  p.w.visit([&rng](const std::string&, Mat& m, bool is_weight) {
    if (!is_weight) return;  // biases and null embedding start at zero
    double a = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = (2.0 * rng.uniform01() - 1.0) * a;
  });
  return p;
}

// Interleaved sinusoidal step embedding: [sin(t w_0), cos(t w_0), sin(t w_1),
// cos(t w_1), ...] with w_k = 10000^(-2k / time_dim).
inline Vec time_embedding(int t, Eigen::Index time_dim) {
  if (time_dim % 2 != 0) throw std::invalid_argument("time_embedding: time_dim must be even");
  Vec e(time_dim);
  for (Eigen::Index k = 0; k < time_dim / 2; ++k) {
    double omega = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(time_dim));
    e[2 * k] = std::sin(t * omega);
    e[2 * k + 1] = std::cos(t * omega);
  }
  return e;
}

// Smooth nonlinearity (tanh-form GELU) and its derivative.
inline double gelu(double x) {
  const double c = std::sqrt(2.0 / M_PI);
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}
inline double gelu_grad(double x) {
  const double c = std::sqrt(2.0 / M_PI);
  double u = c * (x + 0.044715 * x * x * x);
  double th = std::tanh(u);
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * c * (1.0 + 3.0 * 0.044715 * x * x);
}

namespace detail {

// The tanh factor of gelu for a whole matrix. tanh(u) = 1 - 2/(exp(2u) + 1)
// lets Eigen use its vectorized exp for doubles; agrees with std::tanh to a
// few ulps and saturates cleanly.
inline Mat gelu_tanh_matrix(const Mat& pre) {
  const double c = std::sqrt(2.0 / M_PI);
  auto u = c * (pre.array() + 0.044715 * pre.array().cube());
  return (1.0 - 2.0 / ((2.0 * u).exp() + 1.0)).matrix();
}

}  // namespace detail

// Activations recorded by the forward pass; backward() consumes them.
struct ForwardTrace {
  Mat z;                       // assembled input rows [N x input_dim]
  Mat seed_flat;               // [1 x seed_len*D_m]
  std::vector<Mat> block_in;   // input to each block
  std::vector<Mat> block_pre;  // pre-activation of each block's first linear
  std::vector<Mat> block_act;  // gelu(block_pre)
  Mat trunk_out;               // after the residual blocks
  Mat conv_out;
  Mat out;                     // prediction [N x D_m]
  bool cond_mask = false;
};

namespace detail {

inline void check_forward_shapes(const DenoiserConfig& cfg, const Mat& x_t, const Mat& seed,
                                 const ConditionVector& cond) {
  if (x_t.cols() != cfg.motion_dim || seed.cols() != cfg.motion_dim)
    throw DimensionError("denoiser: motion width does not match config");
  if (seed.rows() != cfg.seed_len)
    throw DimensionError("denoiser: seed must have seed_len rows");
  if (cond.frame_part.cols() != 2 * cfg.audio_dim)
    throw DimensionError("denoiser: frame condition width must be 2*D_a");
  if (cond.frame_part.rows() != seed.rows() + x_t.rows())
    throw DimensionError("denoiser: frame condition rows must cover seed plus target");
  if (cond.clip_part.size() != cfg.clip_dim())
    throw DimensionError("denoiser: clip condition length does not match config");
}

// Depthwise temporal convolution, zero padded: y[i,f] = sum_k k[f,tap] *
// h[i+tap-center, f] + b[f].
inline Mat depthwise_conv(const Mat& h, const Mat& kernel, const Mat& bias) {
  const Eigen::Index n = h.rows(), f = h.cols(), taps = kernel.rows();
  const Eigen::Index center = taps / 2;
  Mat y = Mat::Zero(n, f);
  y.rowwise() += bias.row(0);
  for (Eigen::Index tap = 0; tap < taps; ++tap) {
    Eigen::Index shift = tap - center;
    Eigen::Index lo = std::max<Eigen::Index>(0, -shift);
    Eigen::Index hi = std::min(n, n - shift);
    if (lo >= hi) continue;
    y.middleRows(lo, hi - lo).array() +=
        h.middleRows(lo + shift, hi - lo).array().rowwise() * kernel.row(tap).array();
  }
  return y;
}

}  // namespace detail

inline ForwardTrace forward_traced(const DenoiserParams& p, const Mat& x_t, int t, const Mat& seed,
                                   const ConditionVector& cond, bool cond_mask) {
  const DenoiserConfig& cfg = p.config;
  detail::check_forward_shapes(cfg, x_t, seed, cond);
  const Eigen::Index n = x_t.rows();

  ForwardTrace tr;
  tr.cond_mask = cond_mask;
  tr.seed_flat.resize(1, cfg.seed_len * cfg.motion_dim);
  for (Eigen::Index r = 0; r < seed.rows(); ++r)
    tr.seed_flat.block(0, r * cfg.motion_dim, 1, cfg.motion_dim) = seed.row(r);
  Mat seed_summary = tr.seed_flat * p.w.seed_w + p.w.seed_b;

  Vec temb = time_embedding(t, cfg.time_dim);

  // Assemble [x_t | audio | clip-or-null | time | seed summary] per frame.
  // Target frame i is paired with condition row seed_len + i; masking swaps
  // in the learned null embedding and zeroes the audio.
  tr.z.resize(n, cfg.input_dim());
  const Eigen::Index at_audio = cfg.motion_dim;
  const Eigen::Index at_clip = at_audio + 2 * cfg.audio_dim;
  const Eigen::Index at_time = at_clip + cfg.clip_dim();
  const Eigen::Index at_seed = at_time + cfg.time_dim;
  for (Eigen::Index i = 0; i < n; ++i) {
    tr.z.block(i, 0, 1, cfg.motion_dim) = x_t.row(i);
    if (cond_mask)
      tr.z.block(i, at_audio, 1, 2 * cfg.audio_dim).setZero();
    else
      tr.z.block(i, at_audio, 1, 2 * cfg.audio_dim) = cond.frame_part.row(cfg.seed_len + i);
    if (cond_mask)
      tr.z.block(i, at_clip, 1, cfg.clip_dim()) = p.w.null_embed;
    else
      tr.z.block(i, at_clip, 1, cfg.clip_dim()) = cond.clip_part.transpose();
    tr.z.block(i, at_time, 1, cfg.time_dim) = temb.transpose();
    tr.z.block(i, at_seed, 1, cfg.seed_summary_dim) = seed_summary;
  }

  Mat h = tr.z * p.w.in_w;
  h.rowwise() += p.w.in_b.row(0);

  tr.block_in.reserve(static_cast<std::size_t>(cfg.depth));
  tr.block_pre.reserve(static_cast<std::size_t>(cfg.depth));
  tr.block_act.reserve(static_cast<std::size_t>(cfg.depth));
  for (const TensorSet::Block& b : p.w.blocks) {
    tr.block_in.push_back(h);
    Mat pre = h * b.w1;
    pre.rowwise() += b.b1.row(0);
    Mat th = detail::gelu_tanh_matrix(pre);
    Mat act = (0.5 * pre.array() * (1.0 + th.array())).matrix();
    Mat delta = act * b.w2;
    delta.rowwise() += b.b2.row(0);
    h += delta;
    tr.block_pre.push_back(std::move(pre));
    tr.block_act.push_back(std::move(act));
  }
  tr.trunk_out = h;
  tr.conv_out = detail::depthwise_conv(tr.trunk_out, p.w.conv_k, p.w.conv_b);
  tr.out = tr.conv_out * p.w.out_w;
  tr.out.rowwise() += p.w.out_b.row(0);
  return tr;
}

inline Mat forward(const DenoiserParams& p, const Mat& x_t, int t, const Mat& seed,
                   const ConditionVector& cond, bool cond_mask) {
  return forward_traced(p, x_t, t, seed, cond, cond_mask).out;
}

// Exact reverse-mode gradients of a scalar loss with upstream gradient d_out
// (dLoss/dPrediction), for every parameter tensor.
inline TensorSet backward(const DenoiserParams& p, const ForwardTrace& tr, const Mat& d_out) {
  const DenoiserConfig& cfg = p.config;
  if (d_out.rows() != tr.out.rows() || d_out.cols() != tr.out.cols())
    throw DimensionError("backward: upstream gradient shape does not match the traced forward");
  if (tr.block_in.size() != static_cast<std::size_t>(cfg.depth))
    throw std::invalid_argument("backward: trace does not match a forward of this config");

  TensorSet g = zero_tensors(cfg);

  // output projection
  g.out_w.noalias() = tr.conv_out.transpose() * d_out;
  g.out_b = d_out.colwise().sum();
  Mat d_conv = d_out * p.w.out_w.transpose();

  // depthwise conv
  const Eigen::Index n = tr.trunk_out.rows();
  const Eigen::Index center = cfg.kernel / 2;
  Mat d_trunk = Mat::Zero(n, cfg.hidden);
  g.conv_b = d_conv.colwise().sum();
  for (Eigen::Index tap = 0; tap < cfg.kernel; ++tap) {
    Eigen::Index shift = tap - center;
    Eigen::Index lo = std::max<Eigen::Index>(0, -shift);
    Eigen::Index hi = std::min(n, n - shift);
    if (lo >= hi) continue;
    g.conv_k.row(tap) = (tr.trunk_out.middleRows(lo + shift, hi - lo).array() *
                         d_conv.middleRows(lo, hi - lo).array())
                            .colwise()
                            .sum();
    d_trunk.middleRows(lo + shift, hi - lo).array() +=
        d_conv.middleRows(lo, hi - lo).array().rowwise() * p.w.conv_k.row(tap).array();
  }

  // residual blocks, reversed
  Mat d_h = d_trunk;
  for (Eigen::Index i = cfg.depth - 1; i >= 0; --i) {
    const TensorSet::Block& b = p.w.blocks[static_cast<std::size_t>(i)];
    TensorSet::Block& gb = g.blocks[static_cast<std::size_t>(i)];
    const Mat& act = tr.block_act[static_cast<std::size_t>(i)];
    const Mat& pre = tr.block_pre[static_cast<std::size_t>(i)];
    const Mat& in = tr.block_in[static_cast<std::size_t>(i)];

    gb.w2.noalias() = act.transpose() * d_h;
    gb.b2 = d_h.colwise().sum();
    Mat d_act = d_h * b.w2.transpose();
    Mat d_pre = d_act.array() * pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
    gb.w1.noalias() = in.transpose() * d_pre;
    gb.b1 = d_pre.colwise().sum();
    d_h += (d_pre * b.w1.transpose()).eval();  // residual path plus branch path
  }

  // input projection
  g.in_w.noalias() = tr.z.transpose() * d_h;
  g.in_b = d_h.colwise().sum();
  Mat d_z = d_h * p.w.in_w.transpose();

  // seed encoder: the summary was broadcast to every frame, so its gradient
  // is the column sum over frames.
  const Eigen::Index at_clip = cfg.motion_dim + 2 * cfg.audio_dim;
  const Eigen::Index at_seed = at_clip + cfg.clip_dim() + cfg.time_dim;
  Mat d_summary = d_z.block(0, at_seed, n, cfg.seed_summary_dim).colwise().sum();
  g.seed_w.noalias() = tr.seed_flat.transpose() * d_summary;
  g.seed_b = d_summary;

  if (tr.cond_mask)
    g.null_embed = d_z.block(0, at_clip, n, cfg.clip_dim()).colwise().sum();
  return g;
}

// ---------------------------------------------------------------------------
// Batched path: several windows stacked along the frame axis so the per-frame
// linear algebra runs as a few large gemms. Numerically equivalent to looping
// the single-window forward/backward (up to gemm summation order); the
// training loop uses this, the sampling path keeps the simple per-window one.
// ---------------------------------------------------------------------------

struct BatchInput {
  const Mat* x_t = nullptr;
  const Mat* seed = nullptr;
  const ConditionVector* cond = nullptr;
  int t = 0;
  bool mask = false;
};

struct BatchTrace {
  Eigen::Index batch = 0;
  Eigen::Index frames = 0;  // per window
  Mat z;
  Mat seed_flats;  // [batch x seed_len*D_m]
  std::vector<char> mask;
  std::vector<Mat> block_in, block_pre, block_th, block_act;  // th = tanh part of gelu
  Mat trunk_out, conv_out, out;
  // backward scratch, reused across steps
  Mat d_conv, d_h, d_act, d_pre;
};

namespace detail {

inline double gelu_grad_from_tanh(double x, double th) {
  const double c = std::sqrt(2.0 / M_PI);
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * c * (1.0 + 3.0 * 0.044715 * x * x);
}

}  // namespace detail

inline void forward_batched(const DenoiserParams& p, const std::vector<BatchInput>& inputs,
                            BatchTrace& tr) {
  const DenoiserConfig& cfg = p.config;
  if (inputs.empty()) throw std::invalid_argument("forward_batched: empty batch");
  const Eigen::Index B = static_cast<Eigen::Index>(inputs.size());
  const Eigen::Index N = inputs.front().x_t->rows();
  for (const BatchInput& in : inputs) {
    detail::check_forward_shapes(cfg, *in.x_t, *in.seed, *in.cond);
    if (in.x_t->rows() != N)
      throw DimensionError("forward_batched: all windows must have the same frame count");
  }

  tr.batch = B;
  tr.frames = N;
  tr.z.resize(B * N, cfg.input_dim());
  tr.seed_flats.resize(B, cfg.seed_len * cfg.motion_dim);
  tr.mask.resize(static_cast<std::size_t>(B));

  const Eigen::Index at_audio = cfg.motion_dim;
  const Eigen::Index at_clip = at_audio + 2 * cfg.audio_dim;
  const Eigen::Index at_time = at_clip + cfg.clip_dim();
  const Eigen::Index at_seed = at_time + cfg.time_dim;

  for (Eigen::Index w = 0; w < B; ++w) {
    const BatchInput& in = inputs[static_cast<std::size_t>(w)];
    tr.mask[static_cast<std::size_t>(w)] = in.mask ? 1 : 0;
    for (Eigen::Index r = 0; r < in.seed->rows(); ++r)
      tr.seed_flats.block(w, r * cfg.motion_dim, 1, cfg.motion_dim) = in.seed->row(r);
    Mat summary = tr.seed_flats.row(w) * p.w.seed_w + p.w.seed_b;
    Vec temb = time_embedding(in.t, cfg.time_dim);

    auto rows = tr.z.middleRows(w * N, N);
    rows.block(0, 0, N, cfg.motion_dim) = *in.x_t;
    if (in.mask) {
      rows.block(0, at_audio, N, 2 * cfg.audio_dim).setZero();
      rows.block(0, at_clip, N, cfg.clip_dim()) = p.w.null_embed.replicate(N, 1);
    } else {
      rows.block(0, at_audio, N, 2 * cfg.audio_dim) =
          in.cond->frame_part.middleRows(cfg.seed_len, N);
      rows.block(0, at_clip, N, cfg.clip_dim()) = in.cond->clip_part.transpose().replicate(N, 1);
    }
    rows.block(0, at_time, N, cfg.time_dim) = temb.transpose().replicate(N, 1);
    rows.block(0, at_seed, N, cfg.seed_summary_dim) = summary.replicate(N, 1);
  }

  Mat& h = tr.trunk_out;
  h.noalias() = tr.z * p.w.in_w;
  h.rowwise() += p.w.in_b.row(0);

  tr.block_in.resize(static_cast<std::size_t>(cfg.depth));
  tr.block_pre.resize(static_cast<std::size_t>(cfg.depth));
  tr.block_th.resize(static_cast<std::size_t>(cfg.depth));
  tr.block_act.resize(static_cast<std::size_t>(cfg.depth));
  for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.depth); ++i) {
    const TensorSet::Block& b = p.w.blocks[i];
    tr.block_in[i] = h;
    Mat& pre = tr.block_pre[i];
    pre.noalias() = h * b.w1;
    pre.rowwise() += b.b1.row(0);
    Mat& th = tr.block_th[i];
    th = detail::gelu_tanh_matrix(pre);
    Mat& act = tr.block_act[i];
    act = (0.5 * pre.array() * (1.0 + th.array())).matrix();
    h.noalias() += act * b.w2;
    h.rowwise() += b.b2.row(0);
  }

  tr.conv_out.resize(B * N, cfg.hidden);
  for (Eigen::Index w = 0; w < B; ++w)
    tr.conv_out.middleRows(w * N, N) =
        detail::depthwise_conv(tr.trunk_out.middleRows(w * N, N), p.w.conv_k, p.w.conv_b);
  tr.out.noalias() = tr.conv_out * p.w.out_w;
  tr.out.rowwise() += p.w.out_b.row(0);
}

// Accumulates gradients for the whole stacked batch into `g` (overwritten).
inline void backward_batched(const DenoiserParams& p, BatchTrace& tr, const Mat& d_out,
                             TensorSet& g) {
  const DenoiserConfig& cfg = p.config;
  const Eigen::Index B = tr.batch, N = tr.frames;
  if (d_out.rows() != B * N || d_out.cols() != cfg.motion_dim)
    throw DimensionError("backward_batched: upstream gradient shape mismatch");

  g.out_w.noalias() = tr.conv_out.transpose() * d_out;
  g.out_b = d_out.colwise().sum();
  tr.d_conv.noalias() = d_out * p.w.out_w.transpose();

  tr.d_h = Mat::Zero(B * N, cfg.hidden);
  g.conv_b = tr.d_conv.colwise().sum();
  g.conv_k.setZero();
  const Eigen::Index center = cfg.kernel / 2;
  for (Eigen::Index w = 0; w < B; ++w) {
    auto h_w = tr.trunk_out.middleRows(w * N, N);
    auto dy_w = tr.d_conv.middleRows(w * N, N);
    auto dh_w = tr.d_h.middleRows(w * N, N);
    for (Eigen::Index tap = 0; tap < cfg.kernel; ++tap) {
      Eigen::Index shift = tap - center;
      Eigen::Index lo = std::max<Eigen::Index>(0, -shift);
      Eigen::Index hi = std::min(N, N - shift);
      if (lo >= hi) continue;
      g.conv_k.row(tap) +=
          (h_w.middleRows(lo + shift, hi - lo).array() * dy_w.middleRows(lo, hi - lo).array())
              .colwise()
              .sum()
              .matrix();
      dh_w.middleRows(lo + shift, hi - lo).array() +=
          dy_w.middleRows(lo, hi - lo).array().rowwise() * p.w.conv_k.row(tap).array();
    }
  }

  for (Eigen::Index i = cfg.depth - 1; i >= 0; --i) {
    const TensorSet::Block& b = p.w.blocks[static_cast<std::size_t>(i)];
    TensorSet::Block& gb = g.blocks[static_cast<std::size_t>(i)];
    const Mat& pre = tr.block_pre[static_cast<std::size_t>(i)];
    const Mat& th = tr.block_th[static_cast<std::size_t>(i)];
    gb.w2.noalias() = tr.block_act[static_cast<std::size_t>(i)].transpose() * tr.d_h;
    gb.b2 = tr.d_h.colwise().sum();
    tr.d_act.noalias() = tr.d_h * b.w2.transpose();
    tr.d_pre = (tr.d_act.array() * pre.binaryExpr(th, [](double x, double t) {
                                         return detail::gelu_grad_from_tanh(x, t);
                                       }).array())
                   .matrix();
    gb.w1.noalias() = tr.block_in[static_cast<std::size_t>(i)].transpose() * tr.d_pre;
    gb.b1 = tr.d_pre.colwise().sum();
    tr.d_h.noalias() += tr.d_pre * b.w1.transpose();
  }

  g.in_w.noalias() = tr.z.transpose() * tr.d_h;
  g.in_b = tr.d_h.colwise().sum();

  // Only the broadcast seed summary and the (possibly substituted) clip slot
  // feed parameters upstream of z, and both gradients are column sums over a
  // window's rows; summing d_h first makes the projection back through in_w a
  // row-vector product per window.
  const Eigen::Index at_clip = cfg.motion_dim + 2 * cfg.audio_dim;
  const Eigen::Index at_seed = at_clip + cfg.clip_dim() + cfg.time_dim;
  g.seed_w.setZero();
  g.seed_b.setZero();
  g.null_embed.setZero();
  for (Eigen::Index w = 0; w < B; ++w) {
    Mat dh_sum = tr.d_h.middleRows(w * N, N).colwise().sum();  // [1 x hidden]
    Mat d_summary =
        dh_sum * p.w.in_w.middleRows(at_seed, cfg.seed_summary_dim).transpose();
    g.seed_w.noalias() += tr.seed_flats.row(w).transpose() * d_summary;
    g.seed_b += d_summary;
    if (tr.mask[static_cast<std::size_t>(w)])
      g.null_embed += dh_sum * p.w.in_w.middleRows(at_clip, cfg.clip_dim()).transpose();
  }
}

struct AdamWConfig {
  double lr = 3e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Decoupled weight decay, then the Adam moment update with bias correction.
inline void optimizer_step(DenoiserParams& p, const TensorSet& grads,
                           const AdamWConfig& opt = {}) {
  bool finite = true;
  grads.visit([&finite](const std::string&, const Mat& m, bool) {
    if (!m.allFinite()) finite = false;
  });
  if (!finite) throw std::runtime_error("optimizer_step: non-finite gradients");

  p.step += 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(p.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(p.step));

  struct Entry {
    Mat* w;
    const Mat* g;
    Mat* m;
    Mat* v;
    bool decay;
  };
  std::vector<Entry> entries;
  p.w.visit([&entries](const std::string&, Mat& m, bool decay) {
    entries.push_back({&m, nullptr, nullptr, nullptr, decay});
  });
  std::size_t i = 0;
  grads.visit([&entries, &i](const std::string&, const Mat& m, bool) { entries[i++].g = &m; });
  i = 0;
  p.adam_m.visit([&entries, &i](const std::string&, Mat& m, bool) { entries[i++].m = &m; });
  i = 0;
  p.adam_v.visit([&entries, &i](const std::string&, Mat& m, bool) { entries[i++].v = &m; });

  for (Entry& e : entries) {
    if (e.w->rows() != e.g->rows() || e.w->cols() != e.g->cols())
      throw DimensionError("optimizer_step: gradient shape does not match parameter");
    if (e.decay && opt.weight_decay != 0.0) *e.w *= (1.0 - opt.lr * opt.weight_decay);
    *e.m = opt.beta1 * *e.m + (1.0 - opt.beta1) * *e.g;
    *e.v = opt.beta2 * *e.v + (1.0 - opt.beta2) * e.g->array().square().matrix();
    e.w->array() -=
        opt.lr * (e.m->array() / bc1) / ((e.v->array() / bc2).sqrt() + opt.eps);
  }
}

// Adapter exposing trained parameters through the sampling-side contract.
class DenoiserModel : public DenoiserInterface {
 public:
  explicit DenoiserModel(const DenoiserParams& params) : params_(&params) {}
  Mat predict_x0(const Mat& x_t, int t, const Mat& seed, const ConditionVector& cond,
                 bool cond_mask) const override {
    return forward(*params_, x_t, t, seed, cond, cond_mask);
  }

 private:
  const DenoiserParams* params_;
};

}  // namespace gdiff
