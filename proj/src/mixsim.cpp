#include "bss/mixsim.hpp"

#include <cmath>
#include <stdexcept>

#include "bss/rng.hpp"
#include "fft_util.hpp"

namespace bss {
namespace {

constexpr int kDirectConvMaxTaps = 4096;

void convolve_direct(const Eigen::VectorXd& h, const std::vector<double>& s,
                     std::vector<double>& acc) {
  const auto len = static_cast<long>(s.size());
  const auto taps = static_cast<long>(h.size());
  for (long t = 0; t < len; ++t) {
    double y = 0.0;
    const long lmax = std::min(taps - 1, t);
    for (long l = 0; l <= lmax; ++l) y += h(l) * s[t - l];
    acc[t] += y;
  }
}

void convolve_fft(const Eigen::VectorXd& h, const std::vector<double>& s,
                  std::vector<double>& acc) {
  const auto len = static_cast<long>(s.size());
  const auto taps = static_cast<long>(h.size());
  const int block = detail::next_pow2(static_cast<int>(4 * taps));
  const int step = block - static_cast<int>(taps) + 1;  // overlap-add hop
  detail::RealFft fft(block);
  const int bins = fft.bins();

  Eigen::VectorXcd h_spec(bins);
  {
    auto& in = fft.real_buf();
    std::fill(in.begin(), in.end(), 0.0);
    for (long l = 0; l < taps; ++l) in[l] = h(l);
    fft.forward();
    h_spec = Eigen::Map<const Eigen::VectorXcd>(fft.cplx_buf().data(), bins);
  }

  for (long start = 0; start < len; start += step) {
    const long n = std::min<long>(step, len - start);
    auto& in = fft.real_buf();
    std::fill(in.begin(), in.end(), 0.0);
    for (long i = 0; i < n; ++i) in[i] = s[start + i];
    fft.forward();
    for (int f = 0; f < bins; ++f) fft.cplx_buf()[f] *= h_spec(f);
    fft.inverse();
    const long tail = std::min<long>(block, len - start);
    for (long i = 0; i < tail; ++i)
      acc[start + i] += fft.real_buf()[i] / block;
  }
}

}  // namespace

void RirBank::validate() const {
  if (h.empty() || h.front().empty())
    throw std::invalid_argument("RirBank: empty bank");
  if (sample_rate <= 0)
    throw std::invalid_argument("RirBank: sample_rate must be positive");
  const auto n_sources = h.front().size();
  const auto len = h.front().front().size();
  for (const auto& row : h) {
    if (row.size() != n_sources)
      throw std::invalid_argument("RirBank: ragged source dimension");
    for (const auto& rir : row)
      if (rir.size() != len)
        throw std::invalid_argument("RirBank: impulse responses differ in length");
  }
}

RirBank RirBank::instantaneous(const Eigen::MatrixXd& gains, int sample_rate) {
  RirBank bank;
  bank.sample_rate = sample_rate;
  bank.h.resize(gains.rows());
  for (Eigen::Index m = 0; m < gains.rows(); ++m)
    for (Eigen::Index n = 0; n < gains.cols(); ++n)
      bank.h[m].push_back(Eigen::VectorXd::Constant(1, gains(m, n)));
  bank.validate();
  return bank;
}

RirBank RirBank::synthetic(std::uint64_t seed, int mics, int sources,
                           int len_taps, double decay_s, int sample_rate) {
  if (mics < 1 || sources < 1)
    throw std::invalid_argument("RirBank::synthetic: need mics, sources >= 1");
  RirBank bank;
  bank.sample_rate = sample_rate;
  bank.h.resize(mics);
  for (int m = 0; m < mics; ++m)
    for (int n = 0; n < sources; ++n) {
      const int delay = 8 + 3 * m + 5 * n;  // distinct deterministic paths
      if (len_taps < delay + 1)
        throw std::invalid_argument("RirBank::synthetic: len_taps too small for delays");
      bank.h[m].push_back(synth_rir(child_seed(seed, m * sources + n), len_taps,
                                    decay_s, delay, sample_rate));
    }
  bank.validate();
  return bank;
}

Eigen::VectorXd synth_rir(std::uint64_t seed, int len_taps, double decay_s,
                          int delay_taps, int sample_rate) {
  if (delay_taps < 0 || len_taps < delay_taps + 1)
    throw std::invalid_argument("synth_rir: need len_taps >= delay_taps + 1");
  if (sample_rate <= 0)
    throw std::invalid_argument("synth_rir: sample_rate must be positive");
  Eigen::VectorXd h = Eigen::VectorXd::Zero(len_taps);
  h(delay_taps) = 1.0;
  if (decay_s <= 0.0) return h;  // anechoic: pure delayed impulse
  Rng rng(seed);
  const double rate = 3.0 * std::log(10.0) / (decay_s * sample_rate);
  for (int k = delay_taps + 1; k < len_taps; ++k)
    h(k) = 0.3 * rng.gauss() * std::exp(-rate * (k - delay_taps));
  return h;
}

AudioBuffer convolve_mix(const AudioBuffer& sources, const RirBank& bank) {
  sources.validate();
  bank.validate();
  const int n_sources = static_cast<int>(sources.num_channels());
  if (bank.sources() != n_sources)
    throw std::invalid_argument("convolve_mix: bank width does not match source count");
  if (bank.sample_rate != sources.sample_rate)
    throw std::invalid_argument("convolve_mix: sample rate mismatch");

  AudioBuffer out;
  out.sample_rate = sources.sample_rate;
  out.samples.assign(bank.mics(),
                     std::vector<double>(sources.num_samples(), 0.0));
  for (int m = 0; m < bank.mics(); ++m)
    for (int n = 0; n < n_sources; ++n) {
      const Eigen::VectorXd& h = bank.h[m][n];
      if (h.size() <= kDirectConvMaxTaps)
        convolve_direct(h, sources.samples[n], out.samples[m]);
      else
        convolve_fft(h, sources.samples[n], out.samples[m]);
    }
  return out;
}

}  // namespace bss
