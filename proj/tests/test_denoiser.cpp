#include <gdiff/denoiser.hpp>

#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

using namespace gdiff;

namespace {

DenoiserConfig tiny_config() {
  DenoiserConfig cfg;
  cfg.motion_dim = 3;
  cfg.audio_dim = 2;
  cfg.context_dim = 3;
  cfg.seed_len = 2;
  cfg.hidden = 8;
  cfg.depth = 1;
  cfg.time_dim = 4;
  cfg.seed_summary_dim = 6;
  cfg.kernel = 3;
  return cfg;
}

struct Batch {
  Mat x_t, seed, target;
  ConditionVector cond;
  int t;
  bool mask;
};

Batch random_batch(const DenoiserConfig& cfg, Rng& rng, Eigen::Index frames, bool mask) {
  Batch b;
  b.x_t = rng.normal_matrix(frames, cfg.motion_dim);
  b.seed = rng.normal_matrix(cfg.seed_len, cfg.motion_dim);
  b.target = rng.normal_matrix(frames, cfg.motion_dim);
  b.cond.frame_part = rng.normal_matrix(cfg.seed_len + frames, 2 * cfg.audio_dim);
  b.cond.clip_part = rng.normal_matrix(cfg.clip_dim(), 1).col(0);
  b.t = static_cast<int>(rng.uniform_int(1, 50));
  b.mask = mask;
  return b;
}

double loss_of(const DenoiserParams& p, const Batch& b) {
  return huber_loss(forward(p, b.x_t, b.t, b.seed, b.cond, b.mask), b.target);
}

// central finite differences over every entry of every tensor
double max_rel_grad_error(DenoiserParams& p, const Batch& b) {
  ForwardTrace tr = forward_traced(p, b.x_t, b.t, b.seed, b.cond, b.mask);
  TensorSet analytic = backward(p, tr, huber_grad(tr.out, b.target));

  std::vector<Mat*> params;
  p.w.visit([&params](const std::string&, Mat& m, bool) { params.push_back(&m); });
  std::vector<const Mat*> grads;
  analytic.visit([&grads](const std::string&, const Mat& m, bool) { grads.push_back(&m); });

  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Mat& w = *params[k];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        double keep = w(r, c);
        w(r, c) = keep + h;
        double up = loss_of(p, b);
        w(r, c) = keep - h;
        double down = loss_of(p, b);
        w(r, c) = keep;
        double fd = (up - down) / (2.0 * h);
        double an = (*grads[k])(r, c);
        double denom = std::max({std::abs(fd), std::abs(an), 1e-2});
        worst = std::max(worst, std::abs(fd - an) / denom);
      }
  }
  return worst;
}

}  // namespace

TEST_CASE("init_params is reproducible with zero biases and bounded weights") {
  DenoiserConfig cfg = tiny_config();
  DenoiserParams a = init_params(cfg, 42);
  DenoiserParams b = init_params(cfg, 42);
  bool identical = true;
  std::vector<const Mat*> av, bv;
  a.w.visit([&av](const std::string&, const Mat& m, bool) { av.push_back(&m); });
  b.w.visit([&bv](const std::string&, const Mat& m, bool) { bv.push_back(&m); });
  for (std::size_t i = 0; i < av.size(); ++i)
    if (!(*av[i] == *bv[i])) identical = false;
  CHECK(identical);

  DenoiserParams c = init_params(cfg, 43);
  CHECK(c.w.in_w != a.w.in_w);

  a.w.visit([](const std::string& name, const Mat& m, bool is_weight) {
    if (is_weight) {
      double bound = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
      REQUIRE(m.cwiseAbs().maxCoeff() < bound);
      REQUIRE(m.cwiseAbs().maxCoeff() > 0.0);
    } else {
      INFO(name);
      REQUIRE(m.isZero(0.0));  // biases and null embedding start at zero
    }
  });

  // the spec's 4x4 example: bound sqrt(6/8)
  DenoiserConfig cfg4 = tiny_config();
  cfg4.hidden = 4;
  DenoiserParams p4 = init_params(cfg4, 7);
  CHECK(p4.w.blocks[0].w1.rows() == 4);
  CHECK(p4.w.blocks[0].w1.cols() == 4);
  CHECK(p4.w.blocks[0].w1.cwiseAbs().maxCoeff() < std::sqrt(6.0 / 8.0));
}

TEST_CASE("time embedding closed form") {
  Vec e0 = time_embedding(0, 8);
  for (Eigen::Index k = 0; k < 4; ++k) {
    CHECK(e0[2 * k] == 0.0);
    CHECK(e0[2 * k + 1] == 1.0);
  }

  Vec e = time_embedding(1, 4);
  // independent evaluation: w_0 = 1, w_1 = 10000^(-1/2) = 0.01
  CHECK(e[0] == Catch::Approx(std::sin(1.0)).margin(1e-15));
  CHECK(e[1] == Catch::Approx(std::cos(1.0)).margin(1e-15));
  CHECK(e[2] == Catch::Approx(std::sin(0.01)).margin(1e-15));
  CHECK(e[3] == Catch::Approx(std::cos(0.01)).margin(1e-15));

  for (int t : {0, 1, 17, 999})
    CHECK(time_embedding(t, 16).norm() <= std::sqrt(16.0) + 1e-12);
  CHECK_THROWS_AS(time_embedding(1, 5), std::invalid_argument);
}

TEST_CASE("forward honors the shape contract across configurations") {
  Rng rng(19);
  for (Eigen::Index hidden : {4, 8}) {
    for (Eigen::Index depth : {1, 3}) {
      DenoiserConfig cfg = tiny_config();
      cfg.hidden = hidden;
      cfg.depth = depth;
      DenoiserParams p = init_params(cfg, 5);
      Batch b = random_batch(cfg, rng, 7, false);
      Mat out = forward(p, b.x_t, b.t, b.seed, b.cond, false);
      REQUIRE(out.rows() == 7);
      REQUIRE(out.cols() == cfg.motion_dim);
      REQUIRE(out.allFinite());
    }
  }

  DenoiserConfig cfg = tiny_config();
  DenoiserParams p = init_params(cfg, 5);
  Batch b = random_batch(cfg, rng, 5, false);
  Mat bad_seed = Mat::Zero(cfg.seed_len + 1, cfg.motion_dim);
  CHECK_THROWS_AS(forward(p, b.x_t, b.t, bad_seed, b.cond, false), DimensionError);
  ConditionVector bad_cond = b.cond;
  bad_cond.clip_part = Vec::Zero(3);
  CHECK_THROWS_AS(forward(p, b.x_t, b.t, b.seed, bad_cond, false), DimensionError);
  ConditionVector short_cond = b.cond;
  short_cond.frame_part = Mat::Zero(5, 2 * cfg.audio_dim);
  CHECK_THROWS_AS(forward(p, b.x_t, b.t, b.seed, short_cond, false), DimensionError);
}

TEST_CASE("all-zero parameters map everything to zero") {
  DenoiserConfig cfg = tiny_config();
  DenoiserParams p;
  p.config = cfg;
  p.w = zero_tensors(cfg);
  p.adam_m = zero_tensors(cfg);
  p.adam_v = zero_tensors(cfg);
  Rng rng(3);
  Batch b = random_batch(cfg, rng, 6, false);
  CHECK(forward(p, b.x_t, b.t, b.seed, b.cond, false).isZero(0.0));
}

TEST_CASE("only the temporal convolution mixes frames") {
  DenoiserConfig cfg = tiny_config();
  DenoiserParams p = init_params(cfg, 11);
  Rng rng(13);
  const Eigen::Index n = 12;
  Batch b = random_batch(cfg, rng, n, false);
  b.cond.frame_part = Mat::Ones(cfg.seed_len + n, 2 * cfg.audio_dim);  // frame-constant

  const Eigen::Index shift = 3;
  Mat shifted(n, cfg.motion_dim);
  for (Eigen::Index i = 0; i < n; ++i) shifted.row(i) = b.x_t.row((i - shift + n) % n);

  Mat out = forward(p, b.x_t, b.t, b.seed, b.cond, false);
  Mat out_shifted = forward(p, shifted, b.t, b.seed, b.cond, false);

  const Eigen::Index guard = cfg.kernel / 2;
  for (Eigen::Index i = shift + guard; i < n - guard; ++i)
    REQUIRE((out_shifted.row(i) - out.row(i - shift)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gradients match central finite differences on the tiny config") {
  DenoiserConfig cfg = tiny_config();
  Rng rng(101);
  for (int trial = 0; trial < 2; ++trial) {
    DenoiserParams p = init_params(cfg, 200 + static_cast<std::uint64_t>(trial));
    Batch b = random_batch(cfg, rng, 5, trial == 1);  // second trial masks the condition
    double err = max_rel_grad_error(p, b);
    INFO("trial " << trial << " max relative gradient error " << err);
    REQUIRE(err < 1e-4);
  }
}

TEST_CASE("zero loss yields zero gradients") {
  DenoiserConfig cfg = tiny_config();
  DenoiserParams p = init_params(cfg, 6);
  Rng rng(7);
  Batch b = random_batch(cfg, rng, 5, false);
  ForwardTrace tr = forward_traced(p, b.x_t, b.t, b.seed, b.cond, false);
  TensorSet g = backward(p, tr, huber_grad(tr.out, tr.out));
  g.visit([](const std::string&, const Mat& m, bool) { REQUIRE(m.isZero(0.0)); });
}

TEST_CASE("backward is linear in the upstream gradient") {
  DenoiserConfig cfg = tiny_config();
  DenoiserParams p = init_params(cfg, 6);
  Rng rng(17);
  Batch b = random_batch(cfg, rng, 5, false);
  ForwardTrace tr = forward_traced(p, b.x_t, b.t, b.seed, b.cond, false);
  Mat d = huber_grad(tr.out, b.target);
  TensorSet g1 = backward(p, tr, d);
  TensorSet g2 = backward(p, tr, (2.0 * d).eval());
  std::vector<const Mat*> v1, v2;
  g1.visit([&v1](const std::string&, const Mat& m, bool) { v1.push_back(&m); });
  g2.visit([&v2](const std::string&, const Mat& m, bool) { v2.push_back(&m); });
  for (std::size_t i = 0; i < v1.size(); ++i)
    REQUIRE(testutil::max_abs_diff(2.0 * *v1[i], *v2[i]) < 1e-12);
}

TEST_CASE("masked forwards ignore the clip condition contents") {
  DenoiserConfig cfg = tiny_config();
  DenoiserParams p = init_params(cfg, 21);
  Rng rng(23);
  Batch b = random_batch(cfg, rng, 5, true);
  Mat out1 = forward(p, b.x_t, b.t, b.seed, b.cond, true);
  ConditionVector other = b.cond;
  other.clip_part = rng.normal_matrix(cfg.clip_dim(), 1).col(0);
  Mat out2 = forward(p, b.x_t, b.t, b.seed, other, true);
  CHECK(out1 == out2);
  Mat out3 = forward(p, b.x_t, b.t, b.seed, other, false);
  CHECK(out1 != out3);
}

TEST_CASE("optimizer: zero gradients") {
  DenoiserConfig cfg = tiny_config();
  TensorSet zero_g = zero_tensors(cfg);

  SECTION("no decay leaves parameters untouched") {
    DenoiserParams p = init_params(cfg, 3);
    DenoiserParams before = p;
    AdamWConfig opt;
    opt.weight_decay = 0.0;
    optimizer_step(p, zero_g, opt);
    CHECK(p.step == 1);
    CHECK(p.w.in_w == before.w.in_w);
    CHECK(p.w.in_b == before.w.in_b);
    CHECK(p.w.null_embed == before.w.null_embed);
  }

  SECTION("decay-only path scales weights and spares biases") {
    DenoiserParams p = init_params(cfg, 3);
    p.w.in_b.setConstant(0.25);
    p.w.null_embed.setConstant(-0.5);
    DenoiserParams before = p;
    AdamWConfig opt;
    opt.lr = 0.1;
    opt.weight_decay = 0.5;
    optimizer_step(p, zero_g, opt);
    CHECK(testutil::max_abs_diff(p.w.in_w, (1.0 - 0.1 * 0.5) * before.w.in_w) < 1e-15);
    CHECK(p.w.in_b == before.w.in_b);          // biases exempt
    CHECK(p.w.null_embed == before.w.null_embed);  // null embedding exempt
  }
}

TEST_CASE("optimizer matches an independent scalar AdamW recurrence") {
  DenoiserConfig cfg = tiny_config();
  DenoiserParams p;
  p.config = cfg;
  p.w = zero_tensors(cfg);
  p.adam_m = zero_tensors(cfg);
  p.adam_v = zero_tensors(cfg);
  p.w.in_w(0, 0) = 1.0;

  AdamWConfig opt;
  opt.lr = 1e-2;
  opt.weight_decay = 0.1;

  // independent recurrence oracle for one scalar parameter
  double w = 1.0, m = 0.0, v = 0.0;
  Rng rng(77);
  TensorSet g = zero_tensors(cfg);
  for (int step = 1; step <= 100; ++step) {
    double grad = rng.normal();
    g.in_w(0, 0) = grad;
    optimizer_step(p, g, opt);

    w *= (1.0 - opt.lr * opt.weight_decay);
    m = opt.beta1 * m + (1.0 - opt.beta1) * grad;
    v = opt.beta2 * v + (1.0 - opt.beta2) * grad * grad;
    double mh = m / (1.0 - std::pow(opt.beta1, step));
    double vh = v / (1.0 - std::pow(opt.beta2, step));
    w -= opt.lr * mh / (std::sqrt(vh) + opt.eps);
    REQUIRE(std::abs(p.w.in_w(0, 0) - w) <= 1e-12);
  }

  // first-step closed form without decay: delta = -lr * 1 / (1 + eps)
  DenoiserParams q;
  q.config = cfg;
  q.w = zero_tensors(cfg);
  q.adam_m = zero_tensors(cfg);
  q.adam_v = zero_tensors(cfg);
  TensorSet g1 = zero_tensors(cfg);
  g1.in_b(0, 0) = 1.0;  // bias: no decay applies either way
  AdamWConfig plain;
  plain.lr = 3e-5;
  plain.weight_decay = 0.01;
  optimizer_step(q, g1, plain);
  REQUIRE(std::abs(q.w.in_b(0, 0) - (-plain.lr / (1.0 + plain.eps))) <= 1e-18);
}

TEST_CASE("optimizer rejects non-finite gradients") {
  DenoiserConfig cfg = tiny_config();
  DenoiserParams p = init_params(cfg, 1);
  TensorSet g = zero_tensors(cfg);
  g.out_w(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH(optimizer_step(p, g), Catch::Matchers::ContainsSubstring("non-finite"));
}

TEST_CASE("batched forward/backward agrees with the per-window path") {
  DenoiserConfig cfg = tiny_config();
  DenoiserParams p = init_params(cfg, 55);
  Rng rng(56);
  const Eigen::Index frames = 6;
  std::vector<Batch> batches;
  for (int i = 0; i < 3; ++i) batches.push_back(random_batch(cfg, rng, frames, i == 1));

  std::vector<BatchInput> inputs;
  for (const Batch& b : batches) inputs.push_back({&b.x_t, &b.seed, &b.cond, b.t, b.mask});
  BatchTrace trace;
  forward_batched(p, inputs, trace);

  Mat d_out(3 * frames, cfg.motion_dim);
  TensorSet summed = zero_tensors(cfg);
  std::vector<Mat*> acc;
  summed.visit([&acc](const std::string&, Mat& m, bool) { acc.push_back(&m); });
  for (std::size_t i = 0; i < batches.size(); ++i) {
    const Batch& b = batches[i];
    ForwardTrace single = forward_traced(p, b.x_t, b.t, b.seed, b.cond, b.mask);
    REQUIRE(testutil::max_abs_diff(
                trace.out.middleRows(static_cast<Eigen::Index>(i) * frames, frames), single.out) <
            1e-12);
    Mat d = huber_grad(single.out, b.target);
    d_out.middleRows(static_cast<Eigen::Index>(i) * frames, frames) = d;
    TensorSet g = backward(p, single, d);
    std::size_t slot = 0;
    g.visit([&acc, &slot](const std::string&, const Mat& m, bool) { *acc[slot++] += m; });
  }

  TensorSet batched = zero_tensors(cfg);
  backward_batched(p, trace, d_out, batched);
  std::vector<const Mat*> got, want;
  batched.visit([&got](const std::string&, const Mat& m, bool) { got.push_back(&m); });
  summed.visit([&want](const std::string&, const Mat& m, bool) { want.push_back(&m); });
  for (std::size_t i = 0; i < got.size(); ++i)
    REQUIRE(testutil::max_abs_diff(*got[i], *want[i]) < 1e-10);
}

TEST_CASE("training updates are bitwise deterministic") {
  DenoiserConfig cfg = tiny_config();
  Rng data_rng(5);
  Batch b = random_batch(cfg, data_rng, 5, false);

  auto run = [&cfg, &b]() {
    DenoiserParams p = init_params(cfg, 99);
    for (int i = 0; i < 3; ++i) {
      ForwardTrace tr = forward_traced(p, b.x_t, b.t, b.seed, b.cond, false);
      optimizer_step(p, backward(p, tr, huber_grad(tr.out, b.target)));
    }
    return p;
  };
  DenoiserParams p1 = run();
  DenoiserParams p2 = run();
  bool identical = true;
  std::vector<const Mat*> v1, v2;
  p1.w.visit([&v1](const std::string&, const Mat& m, bool) { v1.push_back(&m); });
  p2.w.visit([&v2](const std::string&, const Mat& m, bool) { v2.push_back(&m); });
  for (std::size_t i = 0; i < v1.size(); ++i)
    if (!(*v1[i] == *v2[i])) identical = false;
  CHECK(identical);
}
