#pragma once

// WAV decoding and log-mel feature extraction on the motion frame grid.
// One feature row per motion frame: the analysis window is centered on the
// frame's sample position, zero padded at clip edges, Hann windowed, and
// pushed through an HTK-mel triangular filterbank on the magnitude spectrum.

#include <gdiff/common.hpp>

#include <complex>
#include <cstring>
#include <string>
#include <vector>

namespace gdiff {

struct AudioTrack {
  Vec samples;  // mono, amplitude in [-1, 1]
  int sample_rate = 0;
};

struct AudioFrameFeatures {
  Mat frames;   // [num_motion_frames x n_mels], log-mel energies
  int hop = 0;  // samples per motion frame
};

class WavError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

// In-place iterative radix-2 FFT. Size must be a power of two.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    double ang = -2.0 * M_PI / static_cast<double>(len);
    std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

}  // namespace detail

// HTK mel scale.
inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Decode a RIFF/WAVE container holding 16-bit PCM, mono or stereo. Stereo is
// averaged down to mono; integer samples are scaled by 1/32768.
inline AudioTrack decode_wav(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw WavError("not a RIFF/WAVE file");

  bool have_fmt = false;
  std::uint16_t format_tag = 0, num_channels = 0, bits_per_sample = 0;
  std::uint32_t sample_rate = 0;
  const unsigned char* data_ptr = nullptr;
  std::uint32_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    std::uint32_t chunk_size = detail::read_u32le(hdr + 4);
    const unsigned char* body = hdr + 8;
    std::size_t avail = bytes.size() - pos - 8;

    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (chunk_size < 16 || avail < 16) throw WavError("truncated fmt chunk");
      format_tag = detail::read_u16le(body);
      num_channels = detail::read_u16le(body + 2);
      sample_rate = detail::read_u32le(body + 4);
      bits_per_sample = detail::read_u16le(body + 14);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (chunk_size > avail) throw WavError("truncated data chunk");
      data_ptr = body;
      data_size = chunk_size;
    }
    // chunks are word aligned
    pos += 8 + chunk_size + (chunk_size & 1);
  }

  if (!have_fmt) throw WavError("missing fmt chunk");
  if (data_ptr == nullptr) throw WavError("missing data chunk");
  if (format_tag != 1)
    throw WavError("non-PCM encoding (format tag " + std::to_string(format_tag) + ")");
  if (bits_per_sample != 16)
    throw WavError("unsupported bit depth " + std::to_string(bits_per_sample) +
                   " (only 16-bit PCM)");
  if (num_channels != 1 && num_channels != 2)
    throw WavError("unsupported channel count " + std::to_string(num_channels));
  if (sample_rate == 0) throw WavError("sample rate must be > 0");

  const std::size_t bytes_per_frame = 2u * num_channels;
  const std::size_t n = data_size / bytes_per_frame;
  AudioTrack track;
  track.sample_rate = static_cast<int>(sample_rate);
  track.samples.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::uint16_t ch = 0; ch < num_channels; ++ch) {
      std::int16_t raw = static_cast<std::int16_t>(
          detail::read_u16le(data_ptr + i * bytes_per_frame + 2u * ch));
      acc += static_cast<double>(raw) / 32768.0;
    }
    track.samples[static_cast<Eigen::Index>(i)] = acc / num_channels;
  }
  return track;
}

// Write a mono 16-bit PCM WAV. Samples are clipped to [-1, 32767/32768].
inline std::vector<unsigned char> encode_wav(const AudioTrack& track) {
  if (track.sample_rate <= 0) throw std::invalid_argument("encode_wav: sample rate must be > 0");
  const std::uint32_t n = static_cast<std::uint32_t>(track.samples.size());
  const std::uint32_t data_size = n * 2;
  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  auto push_u32 = [&out](std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<unsigned char>((v >> (8 * k)) & 0xFF));
  };
  auto push_u16 = [&out](std::uint16_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xFF));
    out.push_back(static_cast<unsigned char>(v >> 8));
  };
  auto push_tag = [&out](const char* tag) { out.insert(out.end(), tag, tag + 4); };

  push_tag("RIFF");
  push_u32(36 + data_size);
  push_tag("WAVE");
  push_tag("fmt ");
  push_u32(16);
  push_u16(1);  // PCM
  push_u16(1);  // mono
  push_u32(static_cast<std::uint32_t>(track.sample_rate));
  push_u32(static_cast<std::uint32_t>(track.sample_rate) * 2);
  push_u16(2);
  push_u16(16);
  push_tag("data");
  push_u32(data_size);
  for (Eigen::Index i = 0; i < track.samples.size(); ++i) {
    double v = std::llround(track.samples[i] * 32768.0);
    v = std::min(32767.0, std::max(-32768.0, v));
    push_u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  return out;
}

// Triangular HTK-mel filterbank over FFT bins [0, n_fft/2].
inline Mat mel_filterbank(int sample_rate, int n_fft, int n_mels, double fmin, double fmax) {
  const int n_bins = n_fft / 2 + 1;
  double mel_lo = hz_to_mel(fmin);
  double mel_hi = hz_to_mel(fmax);
  std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    edges[static_cast<std::size_t>(i)] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));

  Mat bank = Mat::Zero(n_mels, n_bins);
  for (int j = 0; j < n_mels; ++j) {
    double left = edges[static_cast<std::size_t>(j)];
    double center = edges[static_cast<std::size_t>(j) + 1];
    double right = edges[static_cast<std::size_t>(j) + 2];
    for (int k = 0; k < n_bins; ++k) {
      double f = static_cast<double>(k) * sample_rate / n_fft;
      if (f > left && f < center)
        bank(j, k) = (f - left) / (center - left);
      else if (f >= center && f < right)
        bank(j, k) = (right - f) / (right - center);
    }
  }
  return bank;
}

inline AudioFrameFeatures log_mel_frames(const AudioTrack& track, double fps = 30.0,
                                         int n_fft = 1024, int n_mels = 27, double fmin = 0.0,
                                         double fmax = -1.0) {
  if (track.samples.size() < n_fft)
    throw std::invalid_argument("log_mel_frames: track shorter than one FFT window");
  if (fps <= 0.0) throw std::invalid_argument("log_mel_frames: fps must be > 0");
  if (fmax < 0.0) fmax = track.sample_rate / 2.0;

  const int hop = static_cast<int>(std::llround(track.sample_rate / fps));
  const Eigen::Index num_frames = static_cast<Eigen::Index>(
      std::llround(static_cast<double>(track.samples.size()) / hop));
  const int n_bins = n_fft / 2 + 1;

  Vec hann(n_fft);
  for (int i = 0; i < n_fft; ++i)
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / (n_fft - 1));

  Mat bank = mel_filterbank(track.sample_rate, n_fft, n_mels, fmin, fmax);

  AudioFrameFeatures out;
  out.hop = hop;
  out.frames.resize(num_frames, n_mels);
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(n_fft));
  Vec mag(n_bins);
  for (Eigen::Index k = 0; k < num_frames; ++k) {
    const Eigen::Index center = k * hop;
    const Eigen::Index start = center - n_fft / 2;
    for (int i = 0; i < n_fft; ++i) {
      Eigen::Index s = start + i;
      double v = (s >= 0 && s < track.samples.size()) ? track.samples[s] : 0.0;
      buf[static_cast<std::size_t>(i)] = {v * hann[i], 0.0};
    }
    detail::fft_radix2(buf);
    for (int b = 0; b < n_bins; ++b) mag[b] = std::abs(buf[static_cast<std::size_t>(b)]);
    out.frames.row(k) = ((bank * mag).array() + 1e-6).log().transpose();
  }
  return out;
}

// Truncate or pad (repeating the last row) to exactly num_motion_frames rows.
inline Mat align_to_motion(const AudioFrameFeatures& features, Eigen::Index num_motion_frames) {
  const Mat& f = features.frames;
  if (f.rows() == 0 && num_motion_frames > 0)
    throw std::invalid_argument("align_to_motion: no feature rows to align");
  if (f.rows() >= num_motion_frames) return f.topRows(num_motion_frames);
  Mat out(num_motion_frames, f.cols());
  out.topRows(f.rows()) = f;
  for (Eigen::Index r = f.rows(); r < num_motion_frames; ++r) out.row(r) = f.row(f.rows() - 1);
  return out;
}

}  // namespace gdiff
