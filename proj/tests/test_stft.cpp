#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bss/rng.hpp"
#include "bss/stft.hpp"
#include "support/oracles.hpp"
#include "support/signals.hpp"

using namespace bss;

namespace {

/// Relative L2 error between synthesized and original on the fully
/// overlapped interior (one frame skipped at each end).
double interior_roundtrip_error(const AudioBuffer& original,
                                const StftConfig& cfg) {
  const ComplexSpectrogram spec = analyze(original, cfg);
  const AudioBuffer back = synthesize(spec);
  const long out_len = static_cast<long>(back.num_samples());
  const long lo = cfg.frame_len;
  const long hi = out_len - cfg.frame_len;
  REQUIRE(hi > lo);
  double err = 0.0, ref = 0.0;
  for (std::size_t c = 0; c < original.num_channels(); ++c)
    for (long k = lo; k < hi; ++k) {
      const double d = back.samples[c][k] - original.samples[c][k];
      err += d * d;
      ref += original.samples[c][k] * original.samples[c][k];
    }
  return std::sqrt(err / ref);
}

}  // namespace

TEST_CASE("config validation") {
  StftConfig cfg;
  CHECK(cfg.bins() == 513);
  cfg.hop = 600;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = StftConfig{};
  cfg.fft_len = 256;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = StftConfig{};
  cfg.frame_len = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("all-zero signal gives all-zero spectrogram and back") {
  StftConfig cfg;
  AudioBuffer buf;
  buf.sample_rate = 16000;
  buf.samples = {std::vector<double>(4096, 0.0)};
  const ComplexSpectrogram spec = analyze(buf, cfg);
  CHECK(spec.frames() == (4096 - 512) / 256 + 1);
  for (int f = 0; f < spec.bins(); ++f)
    for (int t = 0; t < spec.frames(); ++t)
      CHECK(std::abs(spec.channels[0](f, t)) == 0.0);
  const AudioBuffer back = synthesize(spec);
  for (double x : back.samples[0]) CHECK(x == 0.0);
}

TEST_CASE("DC signal: bin zero equals the window sum in every frame") {
  StftConfig cfg;
  const Eigen::VectorXd w = make_window(cfg);
  AudioBuffer buf;
  buf.sample_rate = 16000;
  buf.samples = {std::vector<double>(2048, 1.0)};
  const ComplexSpectrogram spec = analyze(buf, cfg);
  for (int t = 0; t < spec.frames(); ++t)
    CHECK(std::abs(spec.channels[0](0, t)) ==
          doctest::Approx(w.sum()).epsilon(1e-12));
}

TEST_CASE("unit impulse at sample zero: single frame, flat magnitude w[0]") {
  StftConfig cfg;
  const Eigen::VectorXd w = make_window(cfg);
  AudioBuffer buf;
  buf.sample_rate = 16000;
  buf.samples = {std::vector<double>(1024, 0.0)};
  buf.samples[0][0] = 1.0;
  const ComplexSpectrogram spec = analyze(buf, cfg);
  REQUIRE(spec.frames() == 3);
  for (int f = 0; f < spec.bins(); ++f) {
    CHECK(std::abs(spec.channels[0](f, 0)) ==
          doctest::Approx(w(0)).epsilon(1e-12));
    CHECK(std::abs(spec.channels[0](f, 1)) == 0.0);
    CHECK(std::abs(spec.channels[0](f, 2)) == 0.0);
  }
}

TEST_CASE("analysis matches a direct windowed DFT") {
  StftConfig cfg;
  cfg.frame_len = 32;
  cfg.hop = 16;
  cfg.fft_len = 48;  // deliberately not a power of two
  Rng rng(11);
  std::vector<double> signal(80);
  for (auto& x : signal) x = rng.uniform(-1.0, 1.0);
  AudioBuffer buf{{signal}, 8000};
  const ComplexSpectrogram spec = analyze(buf, cfg);
  const Eigen::VectorXd w = make_window(cfg);
  std::vector<double> window(w.data(), w.data() + w.size());

  for (int t = 0; t < spec.frames(); ++t) {
    std::vector<double> frame(signal.begin() + t * cfg.hop,
                              signal.begin() + t * cfg.hop + cfg.frame_len);
    const auto ref = oracle::windowed_dft(frame, window, cfg.fft_len);
    for (int f = 0; f < spec.bins(); ++f)
      CHECK(std::abs(spec.channels[0](f, t) - ref[f]) < 1e-10);
  }
}

TEST_CASE("round trip on white noise, default protocol") {
  AudioBuffer buf = testsig::noise_buffer(3, 2, 3 * 16000, 16000);
  StftConfig cfg;
  CHECK(interior_roundtrip_error(buf, cfg) < 1e-8);
}

TEST_CASE("round trip across random configurations") {
  Rng rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    StftConfig cfg;
    cfg.frame_len = 16 + static_cast<int>(rng.uniform() * 200);
    cfg.hop = 1 + static_cast<int>(rng.uniform() * cfg.frame_len);
    cfg.hop = std::min(cfg.hop, cfg.frame_len);
    cfg.fft_len = cfg.frame_len + static_cast<int>(rng.uniform() * 64);
    AudioBuffer buf =
        testsig::noise_buffer(rng.next_u64(), 1, 40 * cfg.frame_len, 8000);
    CHECK(interior_roundtrip_error(buf, cfg) < 1e-8);
  }
}

TEST_CASE("single-frame spectrogram reproduces the frame") {
  StftConfig cfg;
  cfg.frame_len = 64;
  cfg.hop = 32;
  cfg.fft_len = 64;
  AudioBuffer buf = testsig::noise_buffer(5, 1, 64, 8000);
  const ComplexSpectrogram spec = analyze(buf, cfg);
  REQUIRE(spec.frames() == 1);
  const AudioBuffer back = synthesize(spec);
  REQUIRE(back.num_samples() == 64);
  for (int k = 0; k < 64; ++k)
    CHECK(back.samples[0][k] == doctest::Approx(buf.samples[0][k]).epsilon(1e-10));
}

TEST_CASE("per-frame energy matches the one-sided spectrum") {
  StftConfig cfg;
  AudioBuffer buf = testsig::noise_buffer(8, 1, 4096, 16000);
  const ComplexSpectrogram spec = analyze(buf, cfg);
  const Eigen::VectorXd w = make_window(cfg);
  for (int t = 0; t < spec.frames(); ++t) {
    double time_energy = 0.0;
    for (int k = 0; k < cfg.frame_len; ++k) {
      const double v = w(k) * buf.samples[0][t * cfg.hop + k];
      time_energy += v * v;
    }
    double spec_energy = std::norm(spec.channels[0](0, t)) +
                         std::norm(spec.channels[0](spec.bins() - 1, t));
    for (int f = 1; f < spec.bins() - 1; ++f)
      spec_energy += 2.0 * std::norm(spec.channels[0](f, t));
    spec_energy /= cfg.fft_len;
    CHECK(std::abs(spec_energy - time_energy) <= 1e-9 * time_energy);
  }
}

TEST_CASE("signal shorter than one frame is rejected") {
  StftConfig cfg;
  AudioBuffer buf = testsig::noise_buffer(1, 1, 511, 16000);
  CHECK_THROWS_AS(analyze(buf, cfg), std::invalid_argument);
}
