#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "bss/audio_io.hpp"

namespace bss {

enum class Window { hamming };

struct StftConfig {
  int frame_len = 512;
  int hop = 256;
  int fft_len = 1024;
  Window window = Window::hamming;

  int bins() const { return fft_len / 2 + 1; }
  /// Throws std::invalid_argument unless 0 < hop <= frame_len <= fft_len.
  void validate() const;
};

/// Periodic Hamming window of the given length.
Eigen::VectorXd make_window(const StftConfig& cfg);

/// One-sided complex STFT tensor: one F x T matrix per channel.
struct ComplexSpectrogram {
  std::vector<Eigen::MatrixXcd> channels;
  StftConfig config;
  int sample_rate = 0;

  int num_channels() const { return static_cast<int>(channels.size()); }
  int bins() const { return channels.empty() ? 0 : static_cast<int>(channels.front().rows()); }
  int frames() const { return channels.empty() ? 0 : static_cast<int>(channels.front().cols()); }
};

/// Frames the signal (left-aligned, no pre-padding), windows each frame,
/// zero-pads to fft_len and takes the one-sided spectrum.
/// T = floor((len - frame_len) / hop) + 1. Throws if a channel is
/// shorter than one frame.
ComplexSpectrogram analyze(const AudioBuffer& buf, const StftConfig& cfg);

/// Weighted overlap-add resynthesis with the analysis window as synthesis
/// window and per-sample normalization by the window-square sum, so
/// synthesize(analyze(x)) reproduces x wherever frames cover the signal.
/// Output length is (T - 1) * hop + frame_len.
AudioBuffer synthesize(const ComplexSpectrogram& spec);

}  // namespace bss
