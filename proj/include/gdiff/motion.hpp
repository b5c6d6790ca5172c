#pragma once

// Motion featurization, dataset statistics, and training-window cutting.
// Features are the raw BVH channel values (root translation plus Euler
// degrees), z-scored per column; keeping them raw makes export back to BVH a
// plain denormalize.

#include <gdiff/bvh.hpp>
#include <gdiff/common.hpp>

#include <string>
#include <vector>

namespace gdiff {

constexpr double kStdFloor = 1e-6;

// Per-column mean and population standard deviation (std floored at 1e-6).
struct NormStats {
  Vec mean;
  Vec std;
};

// One training unit: 1 s of clean seed motion, 4 s of target motion, the
// per-frame conditions covering both, and the window-level condition vector.
struct TrainingWindow {
  Mat seed_frames;      // [seed_len x D_m], normalized
  Mat target_frames;    // [window_len - seed_len x D_m], normalized
  Mat frame_conditions; // [window_len x D_f]
  Vec clip_condition;
  std::string source_id;
};

inline Mat motion_features(const MotionClip& clip) {
  if (clip.frames.cols() == 0) throw std::invalid_argument("motion_features: no feature columns");
  if (clip.frames.rows() < 1) throw std::invalid_argument("motion_features: clip has no frames");
  return clip.frames;
}

// Linear interpolation along time. Output row k samples source position
// k * src_fps / dst_fps, clamping to the last frame at the right boundary.
inline Mat resample(const Mat& features, double src_fps, double dst_fps) {
  if (src_fps <= 0.0 || dst_fps <= 0.0)
    throw std::invalid_argument("resample: frame rates must be > 0");
  if (src_fps == dst_fps) return features;
  if (features.rows() < 2)
    throw std::invalid_argument("resample: need at least 2 frames to change frame rate");

  Eigen::Index out_rows = static_cast<Eigen::Index>(
      std::floor(static_cast<double>(features.rows()) * dst_fps / src_fps));
  Mat out(out_rows, features.cols());
  double step = src_fps / dst_fps;
  Eigen::Index last = features.rows() - 1;
  for (Eigen::Index k = 0; k < out_rows; ++k) {
    double pos = static_cast<double>(k) * step;
    if (pos >= static_cast<double>(last)) {
      out.row(k) = features.row(last);
      continue;
    }
    Eigen::Index lo = static_cast<Eigen::Index>(pos);
    double frac = pos - static_cast<double>(lo);
    out.row(k) = (1.0 - frac) * features.row(lo) + frac * features.row(lo + 1);
  }
  return out;
}

inline NormStats fit_norm_stats(const std::vector<Mat>& all_features) {
  Eigen::Index cols = -1;
  Eigen::Index total_rows = 0;
  for (const Mat& m : all_features) {
    if (cols < 0)
      cols = m.cols();
    else if (m.cols() != cols)
      throw DimensionError("fit_norm_stats: inconsistent column counts");
    total_rows += m.rows();
  }
  if (cols <= 0 || total_rows == 0) throw std::invalid_argument("fit_norm_stats: no data");

  Vec sum = Vec::Zero(cols);
  Vec sq_sum = Vec::Zero(cols);
  for (const Mat& m : all_features) {
    sum += m.colwise().sum().transpose();
    sq_sum += m.array().square().matrix().colwise().sum().transpose();
  }
  NormStats stats;
  stats.mean = sum / static_cast<double>(total_rows);
  Vec var = sq_sum / static_cast<double>(total_rows) - stats.mean.array().square().matrix();
  stats.std = var.array().max(0.0).sqrt().max(kStdFloor).matrix();
  return stats;
}

inline Mat normalize(const Mat& features, const NormStats& stats) {
  if (features.cols() != stats.mean.size())
    throw DimensionError("normalize: feature width does not match stats");
  return (features.rowwise() - stats.mean.transpose()).array().rowwise() /
         stats.std.transpose().array();
}

inline Mat denormalize(const Mat& features, const NormStats& stats) {
  if (features.cols() != stats.mean.size())
    throw DimensionError("denormalize: feature width does not match stats");
  return (features.array().rowwise() * stats.std.transpose().array()).matrix().rowwise() +
         stats.mean.transpose();
}

// Start offsets of every window that fits: 0, stride, 2*stride, ...
inline std::vector<Eigen::Index> window_offsets(Eigen::Index num_frames, Eigen::Index window_len,
                                                Eigen::Index stride) {
  std::vector<Eigen::Index> offsets;
  for (Eigen::Index start = 0; start + window_len <= num_frames; start += stride)
    offsets.push_back(start);
  return offsets;
}

// Cut one window at a known offset. Shared by make_windows and the dataset
// pipeline (which assigns per-window clip conditions).
inline TrainingWindow cut_window(const Mat& features, const Mat& frame_conditions,
                                 const Vec& clip_condition, Eigen::Index start,
                                 Eigen::Index window_len, Eigen::Index seed_len,
                                 const std::string& source_id) {
  TrainingWindow w;
  w.seed_frames = features.middleRows(start, seed_len);
  w.target_frames = features.middleRows(start + seed_len, window_len - seed_len);
  w.frame_conditions = frame_conditions.middleRows(start, window_len);
  w.clip_condition = clip_condition;
  w.source_id = source_id;
  return w;
}

inline std::vector<TrainingWindow> make_windows(const Mat& features, const Mat& frame_conditions,
                                                const Vec& clip_condition,
                                                Eigen::Index window_len = 150,
                                                Eigen::Index seed_len = 30,
                                                Eigen::Index stride = 30,
                                                const std::string& source_id = "") {
  if (window_len <= seed_len)
    throw std::invalid_argument("make_windows: window_len must exceed seed_len");
  if (stride < 1) throw std::invalid_argument("make_windows: stride must be >= 1");
  if (features.rows() != frame_conditions.rows())
    throw DimensionError("make_windows: features and frame_conditions row counts differ");

  std::vector<TrainingWindow> windows;
  for (Eigen::Index start : window_offsets(features.rows(), window_len, stride))
    windows.push_back(cut_window(features, frame_conditions, clip_condition, start, window_len,
                                 seed_len, source_id + "#" + std::to_string(start)));
  return windows;
}

}  // namespace gdiff
