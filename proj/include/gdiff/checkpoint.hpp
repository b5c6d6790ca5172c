#pragma once

// The "GDCK" checkpoint: everything sampling needs in one self-contained
// little-endian file — run configuration, skeleton hierarchy, normalization
// stats, schedule parameters, the condition layout descriptor, every named
// parameter/moment tensor, and a pool of seed windows drawn from the training
// data.

#include <gdiff/bvh.hpp>
#include <gdiff/cache.hpp>
#include <gdiff/config.hpp>
#include <gdiff/denoiser.hpp>
#include <gdiff/motion.hpp>
#include <gdiff/schedule.hpp>

#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace gdiff {

struct Checkpoint {
  RunConfig config;          // training-time configuration echo
  Eigen::Index motion_dim = 0;
  std::string condition_layout;
  SkeletonDef skeleton;
  NormStats motion_stats;
  NormStats audio_stats;
  DenoiserParams params;
  Mat seed_pool;             // [pool_size * seed_len x D_m], normalized units

  NoiseSchedule schedule() const {
    NoiseSchedule s = cosine_schedule(config.diffusion_steps, config.cosine_s);
    check_schedule(s);
    return s;
  }
  Eigen::Index seed_pool_count() const {
    return config.seed_len > 0 ? seed_pool.rows() / config.seed_len : 0;
  }
};

inline std::string condition_layout_descriptor(Eigen::Index audio_dim, Eigen::Index context_dim) {
  std::ostringstream s;
  s << "frame=[audio_main(" << audio_dim << ")|audio_inter(" << audio_dim << ")];clip=[intent("
    << kIntentDim << ")|emo_main(3)|emo_inter(3)|ctx_main(" << context_dim << ")|ctx_inter("
    << context_dim << ")]";
  return s.str();
}

namespace detail {

inline void write_string_block(std::ostream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string_block(std::istream& in, const char* what) {
  std::uint32_t len = read_pod<std::uint32_t>(in, what);
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw std::runtime_error(std::string("truncated read: ") + what);
  return s;
}

inline void write_stats(std::ostream& out, const NormStats& stats) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(stats.mean.size()));
  for (Eigen::Index i = 0; i < stats.mean.size(); ++i) write_pod<double>(out, stats.mean[i]);
  for (Eigen::Index i = 0; i < stats.std.size(); ++i) write_pod<double>(out, stats.std[i]);
}

inline NormStats read_stats(std::istream& in) {
  std::uint32_t dim = read_pod<std::uint32_t>(in, "stats dim");
  NormStats stats;
  stats.mean.resize(dim);
  stats.std.resize(dim);
  for (std::uint32_t i = 0; i < dim; ++i) stats.mean[i] = read_pod<double>(in, "stats mean");
  for (std::uint32_t i = 0; i < dim; ++i) stats.std[i] = read_pod<double>(in, "stats std");
  return stats;
}

inline void write_tensor(std::ostream& out, const std::string& name, const Mat& m) {
  write_string_block(out, name);
  write_pod<std::uint32_t>(out, 2);
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) write_pod<double>(out, m(r, c));
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);

  out.write("GDCK", 4);
  detail::write_pod<std::uint32_t>(out, 1);

  std::string meta = config_to_text(ckpt.config);
  meta += "motion_dim = " + std::to_string(ckpt.motion_dim) + "\n";
  meta += "step = " + std::to_string(ckpt.params.step) + "\n";
  meta += "condition_layout = " + ckpt.condition_layout + "\n";
  detail::write_string_block(out, meta);
  detail::write_string_block(out, serialize_hierarchy(ckpt.skeleton));
  detail::write_stats(out, ckpt.motion_stats);
  detail::write_stats(out, ckpt.audio_stats);

  std::uint32_t count = 1;  // seed_pool
  ckpt.params.w.visit([&count](const std::string&, const Mat&, bool) { count += 3; });
  detail::write_pod<std::uint32_t>(out, count);
  ckpt.params.w.visit(
      [&out](const std::string& name, const Mat& m, bool) { detail::write_tensor(out, name, m); });
  ckpt.params.adam_m.visit([&out](const std::string& name, const Mat& m, bool) {
    detail::write_tensor(out, "adam_m." + name, m);
  });
  ckpt.params.adam_v.visit([&out](const std::string& name, const Mat& m, bool) {
    detail::write_tensor(out, "adam_v." + name, m);
  });
  detail::write_tensor(out, "seed_pool", ckpt.seed_pool);
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "GDCK", 4) != 0)
    throw std::runtime_error(path + ": bad GDCK magic");
  std::uint32_t version = detail::read_pod<std::uint32_t>(in, "version");
  if (version != 1) throw std::runtime_error(path + ": unsupported GDCK version");

  Checkpoint ckpt;
  std::string meta = detail::read_string_block(in, "meta");
  long step = 0;
  {
    std::istringstream ms(meta);
    std::string line;
    int line_no = 0;
    while (std::getline(ms, line)) {
      ++line_no;
      std::string t = detail::trim(line);
      if (t.empty() || t[0] == '#') continue;
      std::size_t eq = t.find('=');
      if (eq == std::string::npos) throw ParseError("checkpoint meta: expected key = value", line_no);
      std::string key = detail::trim(t.substr(0, eq));
      std::string value = detail::trim(t.substr(eq + 1));
      if (key == "motion_dim") ckpt.motion_dim = std::stol(value);
      else if (key == "step") step = std::stol(value);
      else if (key == "condition_layout") ckpt.condition_layout = value;
      else config_set(ckpt.config, key, value, line_no);
    }
  }
  if (ckpt.motion_dim < 1) throw std::runtime_error(path + ": meta missing motion_dim");

  ckpt.skeleton = parse_hierarchy(detail::read_string_block(in, "hierarchy"));
  check_skeleton(ckpt.skeleton);
  ckpt.motion_stats = detail::read_stats(in);
  ckpt.audio_stats = detail::read_stats(in);

  DenoiserConfig dcfg;
  dcfg.motion_dim = ckpt.motion_dim;
  dcfg.audio_dim = ckpt.config.n_mels;
  dcfg.context_dim = ckpt.config.context_dim;
  dcfg.seed_len = ckpt.config.seed_len;
  dcfg.hidden = ckpt.config.hidden;
  dcfg.depth = ckpt.config.depth;
  dcfg.time_dim = ckpt.config.time_dim;
  dcfg.seed_summary_dim = ckpt.config.seed_summary_dim;
  dcfg.kernel = ckpt.config.kernel;
  ckpt.params.config = dcfg;
  ckpt.params.w = zero_tensors(dcfg);
  ckpt.params.adam_m = zero_tensors(dcfg);
  ckpt.params.adam_v = zero_tensors(dcfg);
  ckpt.params.step = step;

  std::map<std::string, Mat*> slots;
  ckpt.params.w.visit([&slots](const std::string& n, Mat& m, bool) { slots[n] = &m; });
  ckpt.params.adam_m.visit([&slots](const std::string& n, Mat& m, bool) { slots["adam_m." + n] = &m; });
  ckpt.params.adam_v.visit([&slots](const std::string& n, Mat& m, bool) { slots["adam_v." + n] = &m; });

  std::uint32_t count = detail::read_pod<std::uint32_t>(in, "tensor count");
  bool saw_pool = false;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = detail::read_string_block(in, "tensor name");
    std::uint32_t rank = detail::read_pod<std::uint32_t>(in, "tensor rank");
    if (rank != 2) throw std::runtime_error(path + ": tensor '" + name + "' has unsupported rank");
    std::uint64_t rows = detail::read_pod<std::uint64_t>(in, "tensor rows");
    std::uint64_t cols = detail::read_pod<std::uint64_t>(in, "tensor cols");
    Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::uint64_t r = 0; r < rows; ++r)
      for (std::uint64_t c = 0; c < cols; ++c)
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
            detail::read_pod<double>(in, "tensor value");

    if (name == "seed_pool") {
      ckpt.seed_pool = std::move(m);
      saw_pool = true;
      continue;
    }
    auto it = slots.find(name);
    if (it == slots.end()) throw std::runtime_error(path + ": unexpected tensor '" + name + "'");
    if (it->second->rows() != m.rows() || it->second->cols() != m.cols())
      throw std::runtime_error(path + ": tensor '" + name + "' has wrong shape");
    *it->second = std::move(m);
    slots.erase(it);
  }
  if (!slots.empty())
    throw std::runtime_error(path + ": missing tensor '" + slots.begin()->first + "'");
  if (!saw_pool) throw std::runtime_error(path + ": missing seed_pool tensor");
  return ckpt;
}

}  // namespace gdiff
