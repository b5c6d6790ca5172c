#pragma once

// The "GDAF" binary feature cache: a little-endian header {magic, version,
// rows, cols} followed by row-major 32-bit floats. Used for cached training
// windows and for importing externally computed features.

#include <gdiff/common.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace gdiff {

static_assert(std::endian::native == std::endian::little, "GDAF/GDCK writers assume little-endian");

namespace detail {

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in, const char* what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error(std::string("truncated read: ") + what);
  return v;
}

}  // namespace detail

inline void write_gdaf(std::ostream& out, const Mat& m) {
  out.write("GDAF", 4);
  detail::write_pod<std::uint32_t>(out, 1);
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      detail::write_pod<float>(out, static_cast<float>(m(r, c)));
}

inline void write_gdaf(const std::string& path, const Mat& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_gdaf(out, m);
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline Mat read_gdaf(std::istream& in, const std::string& what = "GDAF stream") {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "GDAF", 4) != 0)
    throw std::runtime_error(what + ": bad GDAF magic");
  std::uint32_t version = detail::read_pod<std::uint32_t>(in, "version");
  if (version != 1) throw std::runtime_error(what + ": unsupported GDAF version");
  std::uint32_t rows = detail::read_pod<std::uint32_t>(in, "rows");
  std::uint32_t cols = detail::read_pod<std::uint32_t>(in, "cols");
  Mat m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c)
      m(r, c) = detail::read_pod<float>(in, "feature value");
  return m;
}

inline Mat read_gdaf(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_gdaf(in, path);
}

}  // namespace gdiff
