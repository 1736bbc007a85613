#include "bss/stft.hpp"

#include <algorithm>
#include <cmath>

#include "fft_util.hpp"

namespace bss {

void StftConfig::validate() const {
  if (frame_len <= 0 || hop <= 0 || fft_len <= 0)
    throw std::invalid_argument("StftConfig: all sizes must be positive");
  if (hop > frame_len)
    throw std::invalid_argument("StftConfig: hop must not exceed frame_len");
  if (frame_len > fft_len)
    throw std::invalid_argument("StftConfig: frame_len must not exceed fft_len");
}

Eigen::VectorXd make_window(const StftConfig& cfg) {
  cfg.validate();
  Eigen::VectorXd w(cfg.frame_len);
  for (int k = 0; k < cfg.frame_len; ++k)
    w(k) = 0.54 - 0.46 * std::cos(2.0 * M_PI * k / cfg.frame_len);
  return w;
}

ComplexSpectrogram analyze(const AudioBuffer& buf, const StftConfig& cfg) {
  cfg.validate();
  buf.validate();
  const auto len = static_cast<long>(buf.num_samples());
  if (len < cfg.frame_len)
    throw std::invalid_argument("analyze: signal shorter than one frame");

  const int frames = static_cast<int>((len - cfg.frame_len) / cfg.hop) + 1;
  const int bins = cfg.bins();
  const Eigen::VectorXd window = make_window(cfg);

  ComplexSpectrogram spec;
  spec.config = cfg;
  spec.sample_rate = buf.sample_rate;
  spec.channels.reserve(buf.num_channels());

  detail::RealFft fft(cfg.fft_len);
  for (const auto& channel : buf.samples) {
    Eigen::MatrixXcd mat(bins, frames);
    for (int t = 0; t < frames; ++t) {
      auto& in = fft.real_buf();
      const long offset = static_cast<long>(t) * cfg.hop;
      for (int k = 0; k < cfg.frame_len; ++k)
        in[k] = window(k) * channel[offset + k];
      std::fill(in.begin() + cfg.frame_len, in.end(), 0.0);
      fft.forward();
      for (int f = 0; f < bins; ++f) mat(f, t) = fft.cplx_buf()[f];
    }
    spec.channels.push_back(std::move(mat));
  }
  return spec;
}

AudioBuffer synthesize(const ComplexSpectrogram& spec) {
  const StftConfig& cfg = spec.config;
  cfg.validate();
  if (spec.channels.empty())
    throw std::invalid_argument("synthesize: empty spectrogram");
  const int bins = cfg.bins();
  const int frames = spec.frames();
  if (spec.bins() != bins)
    throw std::invalid_argument("synthesize: bin count does not match config");

  const Eigen::VectorXd window = make_window(cfg);
  const long out_len = static_cast<long>(frames - 1) * cfg.hop + cfg.frame_len;

  // Window-square overlap sum; strictly positive everywhere covered since
  // the periodic Hamming window has no zeros.
  std::vector<double> norm(out_len, 0.0);
  for (int t = 0; t < frames; ++t)
    for (int k = 0; k < cfg.frame_len; ++k)
      norm[static_cast<long>(t) * cfg.hop + k] += window(k) * window(k);

  AudioBuffer out;
  out.sample_rate = spec.sample_rate;
  out.samples.assign(spec.channels.size(), std::vector<double>(out_len, 0.0));

  detail::RealFft fft(cfg.fft_len);
  for (std::size_t c = 0; c < spec.channels.size(); ++c) {
    const auto& mat = spec.channels[c];
    auto& acc = out.samples[c];
    for (int t = 0; t < frames; ++t) {
      for (int f = 0; f < bins; ++f) fft.cplx_buf()[f] = mat(f, t);
      fft.inverse();
      const long offset = static_cast<long>(t) * cfg.hop;
      const double scale = 1.0 / cfg.fft_len;
      for (int k = 0; k < cfg.frame_len; ++k)
        acc[offset + k] += window(k) * fft.real_buf()[k] * scale;
    }
    for (long k = 0; k < out_len; ++k)
      if (norm[k] > 0.0) acc[k] /= norm[k];
  }
  return out;
}

}  // namespace bss
