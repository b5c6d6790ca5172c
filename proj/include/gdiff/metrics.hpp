#pragma once

// Objective kinematic metrics. The paper-style human study is out of reach of
// an automated toolkit, so evaluation reports motion statistics instead:
// jerk, velocity-histogram distance, window-boundary discontinuity, and the
// toy condition-response correlation.

#include <gdiff/common.hpp>

#include <algorithm>
#include <limits>
#include <vector>

namespace gdiff {

// Mean |third finite difference| over all channels; exactly 0 for constant
// (or quadratic-in-time) motion. Needs at least 4 frames.
inline double mean_abs_jerk(const Mat& frames) {
  if (frames.rows() < 4) return 0.0;
  double acc = 0.0;
  for (Eigen::Index i = 0; i + 3 < frames.rows(); ++i)
    acc += (frames.row(i + 3) - 3.0 * frames.row(i + 2) + 3.0 * frames.row(i + 1) - frames.row(i))
               .cwiseAbs()
               .sum();
  return acc / (static_cast<double>(frames.rows() - 3) * static_cast<double>(frames.cols()));
}

// Euclidean norm of the per-frame difference vector, one value per frame step.
inline std::vector<double> velocity_magnitudes(const Mat& frames) {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(std::max<Eigen::Index>(0, frames.rows() - 1)));
  for (Eigen::Index i = 0; i + 1 < frames.rows(); ++i)
    v.push_back((frames.row(i + 1) - frames.row(i)).norm());
  return v;
}

// 1-Wasserstein distance between two sample sets, computed over a shared
// equal-width histogram: sum over bins of |CDF_a - CDF_b| * bin_width.
inline double wasserstein1_hist(const std::vector<double>& a, const std::vector<double>& b,
                                int bins = 64) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("wasserstein1_hist: both sample sets must be nonempty");
  double lo = std::min(*std::min_element(a.begin(), a.end()),
                       *std::min_element(b.begin(), b.end()));
  double hi = std::max(*std::max_element(a.begin(), a.end()),
                       *std::max_element(b.begin(), b.end()));
  if (hi <= lo) return 0.0;
  double width = (hi - lo) / bins;
  std::vector<double> ha(static_cast<std::size_t>(bins), 0.0), hb(ha);
  auto fill = [&](const std::vector<double>& xs, std::vector<double>& h) {
    for (double x : xs) {
      int k = std::min(bins - 1, static_cast<int>((x - lo) / width));
      h[static_cast<std::size_t>(std::max(0, k))] += 1.0 / static_cast<double>(xs.size());
    }
  };
  fill(a, ha);
  fill(b, hb);
  double dist = 0.0, cum_a = 0.0, cum_b = 0.0;
  for (int k = 0; k < bins; ++k) {
    cum_a += ha[static_cast<std::size_t>(k)];
    cum_b += hb[static_cast<std::size_t>(k)];
    dist += std::abs(cum_a - cum_b) * width;
  }
  return dist;
}

// Average of per-channel population standard deviations; tracks the motion's
// oscillation amplitude for the toy condition-response check.
inline double mean_channel_amplitude(const Mat& frames) {
  if (frames.rows() < 1) return 0.0;
  double acc = 0.0;
  for (Eigen::Index c = 0; c < frames.cols(); ++c) {
    double mean = frames.col(c).mean();
    double var = (frames.col(c).array() - mean).square().mean();
    acc += std::sqrt(std::max(0.0, var));
  }
  return acc / static_cast<double>(frames.cols());
}

namespace detail {

inline std::vector<double> average_ranks(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&x](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    double r = 0.5 * static_cast<double>(i + j) + 1.0;  // tied values share the mean rank
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace detail

// Spearman rank correlation with tie-averaged ranks. Returns NaN below 3
// points or when either side is constant.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman: size mismatch");
  const std::size_t n = x.size();
  if (n < 3) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> rx = detail::average_ranks(x), ry = detail::average_ranks(y);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace gdiff
