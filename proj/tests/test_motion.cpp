#include <gdiff/motion.hpp>

#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

using namespace gdiff;

namespace {

// closed-form linear interpolation oracle for resample()
Mat resample_oracle(const Mat& in, double src_fps, double dst_fps) {
  Eigen::Index rows = static_cast<Eigen::Index>(std::floor(in.rows() * dst_fps / src_fps));
  Mat out(rows, in.cols());
  for (Eigen::Index k = 0; k < rows; ++k) {
    double pos = k * src_fps / dst_fps;
    Eigen::Index lo = static_cast<Eigen::Index>(std::floor(pos));
    if (lo >= in.rows() - 1) {
      out.row(k) = in.row(in.rows() - 1);
    } else {
      double f = pos - lo;
      out.row(k) = (1 - f) * in.row(lo) + f * in.row(lo + 1);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("motion_features is the identity featurization") {
  MotionClip clip;
  clip.frame_time = 1.0 / 30.0;
  clip.frames.resize(2, 9);
  clip.frames << 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 8, 7, 6, 5, 4, 3, 2, 1;
  Mat f = motion_features(clip);
  CHECK(f == clip.frames);

  MotionClip empty;
  empty.frame_time = 1.0 / 30.0;
  empty.frames.resize(2, 0);
  CHECK_THROWS_WITH(motion_features(empty), Catch::Matchers::ContainsSubstring("no feature columns"));

  CHECK(resample(f, 30.0, 30.0) == f);
}

TEST_CASE("resample decimates an even grid exactly") {
  Mat in(60, 2);
  for (Eigen::Index r = 0; r < 60; ++r) {
    in(r, 0) = static_cast<double>(r);
    in(r, 1) = static_cast<double>(r) * 2.0;
  }
  Mat out = resample(in, 60.0, 30.0);
  REQUIRE(out.rows() == 30);
  for (Eigen::Index k = 0; k < 30; ++k) REQUIRE(out.row(k) == in.row(2 * k));
}

TEST_CASE("resample upsamples with last-frame clamp") {
  Mat in(2, 1);
  in << 0.0, 10.0;
  Mat out = resample(in, 1.0, 2.0);
  REQUIRE(out.rows() == 4);
  CHECK(out(0, 0) == Catch::Approx(0.0));
  CHECK(out(1, 0) == Catch::Approx(5.0));
  CHECK(out(2, 0) == Catch::Approx(10.0));
  CHECK(out(3, 0) == Catch::Approx(10.0));  // clamped at the right boundary
  CHECK(testutil::max_abs_diff(out, resample_oracle(in, 1.0, 2.0)) == 0.0);
}

TEST_CASE("resample matches the interpolation oracle on random input") {
  Rng rng(42);
  Mat in = rng.normal_matrix(37, 4);
  for (auto [src, dst] : {std::pair{60.0, 30.0}, {30.0, 24.0}, {24.0, 30.0}, {10.0, 33.0}}) {
    Mat got = resample(in, src, dst);
    Mat want = resample_oracle(in, src, dst);
    REQUIRE(got.rows() == want.rows());
    REQUIRE(testutil::max_abs_diff(got, want) < 1e-12);
  }
  Mat one = rng.normal_matrix(1, 4);
  CHECK_THROWS_AS(resample(one, 60.0, 30.0), std::invalid_argument);
}

TEST_CASE("fit_norm_stats uses the population convention with a floored std") {
  Mat constant(4, 1);
  constant.setConstant(5.0);
  NormStats s = fit_norm_stats({constant});
  CHECK(s.mean[0] == Catch::Approx(5.0));
  CHECK(s.std[0] == kStdFloor);

  Mat pm(2, 1);
  pm << -1.0, 1.0;
  s = fit_norm_stats({pm});
  CHECK(s.mean[0] == Catch::Approx(0.0).margin(1e-15));
  CHECK(s.std[0] == Catch::Approx(1.0));

  CHECK_THROWS_AS(fit_norm_stats({}), std::invalid_argument);
}

TEST_CASE("z-scored output has zero mean and unit std") {
  Rng rng(7);
  Mat x = rng.normal_matrix(1000, 3) * 3.5;
  x.col(1).array() += 100.0;
  NormStats s = fit_norm_stats({x});
  Mat z = normalize(x, s);
  for (Eigen::Index c = 0; c < 3; ++c) {
    double mean = z.col(c).mean();
    double sd = std::sqrt((z.col(c).array() - mean).square().mean());
    REQUIRE(std::abs(mean) < 1e-9);
    REQUIRE(std::abs(sd - 1.0) < 1e-9);
  }
}

TEST_CASE("normalize and denormalize are inverse within 1e-9") {
  Rng rng(9);
  Mat x = rng.normal_matrix(50, 6) * 20.0;
  NormStats s = fit_norm_stats({x});
  CHECK(testutil::max_abs_diff(denormalize(normalize(x, s), s), x) < 1e-9);
  CHECK(testutil::max_abs_diff(normalize(denormalize(x, s), s), x) < 1e-9);

  Mat mean_row = s.mean.transpose().replicate(3, 1);
  CHECK(normalize(mean_row, s).cwiseAbs().maxCoeff() < 1e-12);
  Mat ones_row = (s.mean + s.std).transpose().replicate(3, 1);
  CHECK(testutil::max_abs_diff(normalize(ones_row, s), Mat::Ones(3, 6)) < 1e-12);

  Mat wrong = Mat::Zero(2, 5);
  CHECK_THROWS_AS(normalize(wrong, s), DimensionError);
}

TEST_CASE("make_windows offsets and shapes") {
  auto windows_for = [](Eigen::Index frames, Eigen::Index stride) {
    Mat f = Mat::Zero(frames, 2);
    Mat c = Mat::Zero(frames, 3);
    Vec clip = Vec::Ones(4);
    return make_windows(f, c, clip, 150, 30, stride, "clip");
  };

  CHECK(windows_for(180, 30).size() == 2);
  CHECK(windows_for(150, 30).size() == 1);
  CHECK(windows_for(149, 30).size() == 0);
  CHECK(windows_for(450, 150).size() == 3);

  auto ws = windows_for(180, 30);
  CHECK(ws[0].source_id == "clip#0");
  CHECK(ws[1].source_id == "clip#30");
  for (const TrainingWindow& w : ws) {
    CHECK(w.seed_frames.rows() == 30);
    CHECK(w.target_frames.rows() == 120);
    CHECK(w.frame_conditions.rows() == 150);
    CHECK(w.clip_condition.size() == 4);
  }
}

TEST_CASE("windowing is exhaustive and in bounds for lengths 149..155") {
  for (Eigen::Index len = 149; len <= 155; ++len) {
    Mat f(len, 1);
    for (Eigen::Index r = 0; r < len; ++r) f(r, 0) = static_cast<double>(r);
    Mat c = f;
    auto ws = make_windows(f, c, Vec::Zero(1), 150, 30, 30);
    Eigen::Index expected = len >= 150 ? (len - 150) / 30 + 1 : 0;
    REQUIRE(static_cast<Eigen::Index>(ws.size()) == expected);
    for (std::size_t k = 0; k < ws.size(); ++k) {
      Eigen::Index start = static_cast<Eigen::Index>(k) * 30;
      REQUIRE(ws[k].seed_frames(0, 0) == static_cast<double>(start));
      REQUIRE(ws[k].target_frames(119, 0) == static_cast<double>(start + 149));
    }
  }
}

TEST_CASE("make_windows validates its preconditions") {
  Mat f = Mat::Zero(200, 2);
  Mat c = Mat::Zero(199, 2);
  CHECK_THROWS_AS(make_windows(f, c, Vec::Zero(1)), DimensionError);
  CHECK_THROWS_AS(make_windows(f, f, Vec::Zero(1), 30, 30, 30), std::invalid_argument);
  CHECK_THROWS_AS(make_windows(f, f, Vec::Zero(1), 150, 30, 0), std::invalid_argument);
}
