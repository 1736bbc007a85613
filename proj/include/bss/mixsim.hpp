#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "bss/audio_io.hpp"

namespace bss {

/// Bank of impulse responses h[m][n] from source n to microphone m.
/// All responses have the same length.
struct RirBank {
  std::vector<std::vector<Eigen::VectorXd>> h;  // [mic][source]
  int sample_rate = 0;

  int mics() const { return static_cast<int>(h.size()); }
  int sources() const {
    return h.empty() ? 0 : static_cast<int>(h.front().size());
  }
  int taps() const {
    return h.empty() || h.front().empty()
               ? 0
               : static_cast<int>(h.front().front().size());
  }
  void validate() const;

  /// Single-tap bank from a gain matrix (instantaneous mixing).
  static RirBank instantaneous(const Eigen::MatrixXd& gains, int sample_rate);
  /// One seeded synthetic response per (mic, source) pair, with a small
  /// deterministic per-pair delay so the geometry is not degenerate.
  static RirBank synthetic(std::uint64_t seed, int mics, int sources,
                           int len_taps, double decay_s, int sample_rate);
};

/// Exponentially decaying noise tail behind a unit direct path:
/// h[k] = 0 for k < delay, h[delay] = 1, and for k > delay
/// h[k] = 0.3 * N(0,1) * 10^(-3 (k - delay) / (decay_s * rate)),
/// i.e. the envelope falls 60 dB over decay_s seconds. decay_s == 0
/// gives a pure delayed impulse.
Eigen::VectorXd synth_rir(std::uint64_t seed, int len_taps, double decay_s,
                          int delay_taps, int sample_rate);

/// x_m(t) = sum_n sum_l h[m][n](l) s_n(t - l), truncated to the source
/// length. Direct convolution up to 4096 taps, block FFT above.
AudioBuffer convolve_mix(const AudioBuffer& sources, const RirBank& bank);

}  // namespace bss
