#include <gdiff/audio.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <vector>

using namespace gdiff;

namespace {

// hand-rolled WAV builder, independent of encode_wav
std::vector<unsigned char> build_wav(const std::vector<std::int16_t>& samples, int channels,
                                     int rate, std::uint16_t format_tag = 1,
                                     std::uint16_t bits = 16) {
  std::vector<unsigned char> b;
  auto u32 = [&b](std::uint32_t v) {
    for (int k = 0; k < 4; ++k) b.push_back(static_cast<unsigned char>((v >> (8 * k)) & 0xFF));
  };
  auto u16 = [&b](std::uint16_t v) {
    b.push_back(static_cast<unsigned char>(v & 0xFF));
    b.push_back(static_cast<unsigned char>(v >> 8));
  };
  auto tag = [&b](const char* t) { b.insert(b.end(), t, t + 4); };
  std::uint32_t data_size = static_cast<std::uint32_t>(samples.size() * 2);
  tag("RIFF");
  u32(36 + data_size);
  tag("WAVE");
  tag("fmt ");
  u32(16);
  u16(format_tag);
  u16(static_cast<std::uint16_t>(channels));
  u32(static_cast<std::uint32_t>(rate));
  u32(static_cast<std::uint32_t>(rate * channels * 2));
  u16(static_cast<std::uint16_t>(channels * 2));
  u16(bits);
  tag("data");
  u32(data_size);
  for (std::int16_t s : samples) u16(static_cast<std::uint16_t>(s));
  return b;
}

AudioTrack sine_track(double hz, double amp, double seconds, int rate) {
  AudioTrack t;
  t.sample_rate = rate;
  t.samples.resize(static_cast<Eigen::Index>(seconds * rate));
  for (Eigen::Index i = 0; i < t.samples.size(); ++i)
    t.samples[i] = amp * std::sin(2.0 * M_PI * hz * i / rate);
  return t;
}

}  // namespace

TEST_CASE("decode pcm16 mono silence") {
  std::vector<std::int16_t> samples(16000, 0);
  AudioTrack t = decode_wav(build_wav(samples, 1, 16000));
  CHECK(t.sample_rate == 16000);
  REQUIRE(t.samples.size() == 16000);
  CHECK(t.samples.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("stereo channels are averaged") {
  std::vector<std::int16_t> samples;
  for (int i = 0; i < 100; ++i) {
    samples.push_back(16384);   // +0.5
    samples.push_back(-16384);  // -0.5
  }
  AudioTrack t = decode_wav(build_wav(samples, 2, 8000));
  REQUIRE(t.samples.size() == 100);
  CHECK(t.samples.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sample scaling convention") {
  AudioTrack t = decode_wav(build_wav({-32768, 32767, 0}, 1, 8000));
  CHECK(t.samples[0] == -1.0);
  CHECK(t.samples[1] == Catch::Approx(32767.0 / 32768.0));
  CHECK(t.samples[2] == 0.0);
}

TEST_CASE("wav decode errors are distinct") {
  std::vector<std::int16_t> samples(100, 0);
  CHECK_THROWS_WITH(decode_wav(build_wav(samples, 1, 8000, 3)),
                    Catch::Matchers::ContainsSubstring("non-PCM"));
  CHECK_THROWS_WITH(decode_wav(build_wav(samples, 1, 8000, 1, 8)),
                    Catch::Matchers::ContainsSubstring("bit depth"));
  auto truncated = build_wav(samples, 1, 8000);
  truncated.resize(truncated.size() - 50);
  CHECK_THROWS_WITH(decode_wav(truncated), Catch::Matchers::ContainsSubstring("truncated"));
  std::vector<unsigned char> junk = {'J', 'U', 'N', 'K'};
  CHECK_THROWS_WITH(decode_wav(junk), Catch::Matchers::ContainsSubstring("RIFF"));
}

TEST_CASE("encode then decode recovers samples to 16-bit precision") {
  AudioTrack t = sine_track(440.0, 0.5, 0.1, 16000);
  AudioTrack back = decode_wav(encode_wav(t));
  REQUIRE(back.samples.size() == t.samples.size());
  CHECK((back.samples - t.samples).cwiseAbs().maxCoeff() < 1.0 / 32768.0);
}

TEST_CASE("440 Hz tone activates the oracle mel band in every frame") {
  AudioTrack t = sine_track(440.0, 0.5, 2.0, 16000);
  AudioFrameFeatures f = log_mel_frames(t, 30.0, 1024, 27);

  // independent HTK mel oracle: band centers are evenly spaced in mel scale
  auto mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  double mel_max = mel(8000.0);
  int expected_band = 0;
  double best = 1e300;
  for (int j = 1; j <= 27; ++j) {
    double center_mel = mel_max * j / 28.0;
    double diff = std::abs(center_mel - mel(440.0));
    if (diff < best) {
      best = diff;
      expected_band = j - 1;
    }
  }
  for (Eigen::Index r = 0; r < f.frames.rows(); ++r) {
    Eigen::Index argmax = 0;
    f.frames.row(r).maxCoeff(&argmax);
    REQUIRE(argmax == expected_band);
  }
}

TEST_CASE("silence hits the log floor everywhere") {
  AudioTrack t;
  t.sample_rate = 16000;
  t.samples = Vec::Zero(16000);
  AudioFrameFeatures f = log_mel_frames(t);
  CHECK((f.frames.array() == std::log(1e-6)).all());
}

TEST_CASE("five seconds at 30 fps gives exactly 150 rows") {
  AudioTrack t = sine_track(200.0, 0.3, 5.0, 16000);
  AudioFrameFeatures f = log_mel_frames(t);
  CHECK(f.frames.rows() == 150);
  CHECK(f.frames.cols() == 27);
  CHECK(f.hop == 533);
}

TEST_CASE("feature extraction is deterministic") {
  AudioTrack t = sine_track(330.0, 0.4, 1.0, 16000);
  Mat a = log_mel_frames(t).frames;
  Mat b = log_mel_frames(t).frames;
  CHECK(a == b);
}

TEST_CASE("doubling the waveform raises every cell above the floor") {
  AudioTrack t = sine_track(440.0, 0.25, 1.0, 16000);
  AudioTrack loud = t;
  loud.samples *= 2.0;
  Mat quiet_f = log_mel_frames(t).frames;
  Mat loud_f = log_mel_frames(loud).frames;
  const double floor_log = std::log(1e-6);
  for (Eigen::Index r = 0; r < quiet_f.rows(); ++r)
    for (Eigen::Index c = 0; c < quiet_f.cols(); ++c)
      if (quiet_f(r, c) > floor_log + 1e-3) REQUIRE(loud_f(r, c) > quiet_f(r, c));
}

TEST_CASE("short track is rejected") {
  AudioTrack t;
  t.sample_rate = 16000;
  t.samples = Vec::Zero(1000);  // < n_fft
  CHECK_THROWS_WITH(log_mel_frames(t), Catch::Matchers::ContainsSubstring("shorter"));
}

TEST_CASE("align_to_motion truncates, pads, and passes through") {
  AudioFrameFeatures f;
  f.hop = 533;
  f.frames.resize(152, 3);
  for (Eigen::Index r = 0; r < 152; ++r) f.frames.row(r).setConstant(static_cast<double>(r));

  Mat truncated = align_to_motion(f, 150);
  REQUIRE(truncated.rows() == 150);
  CHECK(truncated(149, 0) == 149.0);

  f.frames = f.frames.topRows(148).eval();
  Mat padded = align_to_motion(f, 150);
  REQUIRE(padded.rows() == 150);
  CHECK(padded(148, 0) == 147.0);
  CHECK(padded(149, 0) == 147.0);

  AudioFrameFeatures same;
  same.frames = padded;
  CHECK(align_to_motion(same, 150) == padded);

  AudioFrameFeatures empty;
  empty.frames.resize(0, 3);
  CHECK_THROWS_AS(align_to_motion(empty, 10), std::invalid_argument);
}

TEST_CASE("row count tracks duration times fps within one frame") {
  for (double seconds : {0.7, 1.3, 3.05}) {
    AudioTrack t = sine_track(100.0, 0.2, seconds, 16000);
    AudioFrameFeatures f = log_mel_frames(t);
    CHECK(std::abs(static_cast<double>(f.frames.rows()) - seconds * 30.0) <= 1.0);
  }
}
