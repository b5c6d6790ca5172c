#pragma once

// Cosine noise schedule. alpha_bar[t] is the cumulative signal-retention
// coefficient, indexed 0..T with alpha_bar[0] = 1; beta/alpha are per-step
// quantities indexed 0..T-1 (entry t-1 belongs to noising step t).

#include <gdiff/common.hpp>

#include <vector>

namespace gdiff {

struct NoiseSchedule {
  int T = 0;
  std::vector<double> alpha_bar;  // length T+1, alpha_bar[0] == 1
  std::vector<double> alpha;      // length T
  std::vector<double> beta;       // length T
};

constexpr double kBetaMax = 0.999;

inline NoiseSchedule cosine_schedule(int T = 1000, double s = 0.008) {
  if (T < 1) throw std::invalid_argument("cosine_schedule: T must be >= 1");
  NoiseSchedule sched;
  sched.T = T;
  sched.alpha_bar.resize(static_cast<std::size_t>(T) + 1);
  sched.alpha.resize(static_cast<std::size_t>(T));
  sched.beta.resize(static_cast<std::size_t>(T));

  auto f = [T, s](int t) {
    double u = (static_cast<double>(t) / T + s) / (1.0 + s);
    double c = std::cos(u * M_PI / 2.0);
    return c * c;
  };
  const double f0 = f(0);
  for (int t = 0; t <= T; ++t) sched.alpha_bar[static_cast<std::size_t>(t)] = f(t) / f0;
  sched.alpha_bar[0] = 1.0;  // exact by the ratio definition

  for (int t = 0; t < T; ++t) {
    double b = 1.0 - sched.alpha_bar[static_cast<std::size_t>(t) + 1] /
                         sched.alpha_bar[static_cast<std::size_t>(t)];
    sched.beta[static_cast<std::size_t>(t)] = std::min(std::max(b, 1e-12), kBetaMax);
    sched.alpha[static_cast<std::size_t>(t)] = 1.0 - sched.beta[static_cast<std::size_t>(t)];
  }
  return sched;
}

// Throws if any schedule invariant is violated; tests and the checkpoint
// loader both run this.
inline void check_schedule(const NoiseSchedule& s) {
  if (s.T < 1 || s.alpha_bar.size() != static_cast<std::size_t>(s.T) + 1 ||
      s.alpha.size() != static_cast<std::size_t>(s.T) || s.beta.size() != static_cast<std::size_t>(s.T))
    throw std::invalid_argument("schedule: wrong array lengths");
  if (s.alpha_bar[0] != 1.0) throw std::invalid_argument("schedule: alpha_bar[0] must be 1");
  for (int t = 0; t < s.T; ++t) {
    if (!(s.alpha_bar[static_cast<std::size_t>(t) + 1] < s.alpha_bar[static_cast<std::size_t>(t)]))
      throw std::invalid_argument("schedule: alpha_bar must be strictly decreasing");
    double b = s.beta[static_cast<std::size_t>(t)];
    if (!(b > 0.0) || b > kBetaMax) throw std::invalid_argument("schedule: beta out of (0, 0.999]");
    if (s.alpha[static_cast<std::size_t>(t)] != 1.0 - b)
      throw std::invalid_argument("schedule: alpha[t] must equal 1 - beta[t]");
  }
  if (!(s.alpha_bar[static_cast<std::size_t>(s.T)] < 1e-3))
    throw std::invalid_argument("schedule: alpha_bar[T] must be < 1e-3");
}

}  // namespace gdiff
