#include "bss/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fft_util.hpp"

namespace bss {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kDbCap = 300.0;

double db_ratio(double num, double den) {
  if (num <= 0.0) return -kDbCap;
  if (den <= 0.0) return kDbCap;
  return std::clamp(10.0 * std::log10(num / den), -kDbCap, kDbCap);
}

/// Least-squares projections of signals onto the span of delayed copies
/// of the reference signals (proj_len taps per reference). The Gram
/// matrix is computed exactly: FFT cross-correlations corrected for the
/// truncation of shifted columns at the signal end.
class ProjectionEngine {
 public:
  ProjectionEngine(const MatrixXd& refs, int proj_len)
      : refs_(refs),
        len_(static_cast<int>(refs.rows())),
        n_refs_(static_cast<int>(refs.cols())),
        taps_(proj_len) {
    if (taps_ < 1) throw std::invalid_argument("decompose: proj_len must be >= 1");
    if (len_ < taps_)
      throw std::invalid_argument("decompose: signals shorter than proj_len");
    build_gram();
    full_solver_.compute(gram_);
    single_solver_.resize(n_refs_);
    single_ridge_.resize(n_refs_);
    for (int j = 0; j < n_refs_; ++j)
      single_solver_[j].compute(gram_.block(j * taps_, j * taps_, taps_, taps_));
  }

  /// Correlation of `signal` with every delayed reference copy;
  /// this is exactly Z^T signal since the columns span the whole signal.
  VectorXd correlations(const VectorXd& signal) const {
    VectorXd c(n_refs_ * taps_);
    for (int j = 0; j < n_refs_; ++j)
      for (int tau = 0; tau < taps_; ++tau) {
        double acc = 0.0;
        for (int t = tau; t < len_; ++t)
          acc += signal(t) * refs_(t - tau, j);
        c(j * taps_ + tau) = acc;
      }
    return c;
  }

  VectorXd project_all(const VectorXd& c) const {
    const VectorXd alpha = solve(full_solver_, gram_, c, full_ridge_);
    VectorXd out = VectorXd::Zero(len_);
    for (int j = 0; j < n_refs_; ++j)
      add_filtered(out, alpha.segment(j * taps_, taps_), j);
    return out;
  }

  VectorXd project_single(const VectorXd& c, int j) const {
    const MatrixXd block = gram_.block(j * taps_, j * taps_, taps_, taps_);
    const VectorXd beta =
        solve(single_solver_[j], block, c.segment(j * taps_, taps_),
              single_ridge_[j]);
    VectorXd out = VectorXd::Zero(len_);
    add_filtered(out, beta, j);
    return out;
  }

  const MatrixXd& refs() const { return refs_; }

 private:
  void build_gram() {
    const int nfft = detail::next_pow2(len_ + taps_ + 1);
    detail::RealFft fft(nfft);
    const int bins = fft.bins();

    std::vector<Eigen::VectorXcd> spectra(n_refs_);
    for (int j = 0; j < n_refs_; ++j) {
      auto& in = fft.real_buf();
      std::fill(in.begin(), in.end(), 0.0);
      for (int t = 0; t < len_; ++t) in[t] = refs_(t, j);
      fft.forward();
      spectra[j] = Eigen::Map<const Eigen::VectorXcd>(fft.cplx_buf().data(), bins);
    }

    gram_.resize(n_refs_ * taps_, n_refs_ * taps_);
    for (int j = 0; j < n_refs_; ++j)
      for (int jp = 0; jp < n_refs_; ++jp) {
        // corr(delta) = sum_u r_j(u) r_jp(u - delta), delta in [0, taps)
        for (int f = 0; f < bins; ++f)
          fft.cplx_buf()[f] = spectra[j](f) * std::conj(spectra[jp](f));
        fft.inverse();
        VectorXd corr(taps_);
        for (int d = 0; d < taps_; ++d) corr(d) = fft.real_buf()[d] / nfft;

        // Truncation correction: the column shifted by tau loses the last
        // tau products of the full correlation.
        for (int delta = 0; delta < taps_; ++delta) {
          double suffix = 0.0;  // sum_{m=1..tau} r_j(len-m) r_jp(len-m-delta)
          for (int tau = 0; tau + delta < taps_; ++tau) {
            if (tau > 0) {
              const int idx = len_ - tau - delta;
              if (idx >= 0) suffix += refs_(len_ - tau, j) * refs_(idx, jp);
            }
            const double value = corr(delta) - suffix;
            gram_(j * taps_ + tau, jp * taps_ + tau + delta) = value;
            gram_(jp * taps_ + tau + delta, j * taps_ + tau) = value;
          }
        }
      }
  }

  void add_filtered(VectorXd& out, const VectorXd& filter, int j) const {
    for (int tau = 0; tau < taps_; ++tau) {
      const double a = filter(tau);
      if (a == 0.0) continue;
      for (int t = tau; t < len_; ++t) out(t) += a * refs_(t - tau, j);
    }
  }

  VectorXd solve(const Eigen::LDLT<MatrixXd>& solver, const MatrixXd& gram,
                 const VectorXd& rhs, Eigen::LDLT<MatrixXd>& ridge_cache) const {
    VectorXd x = solver.solve(rhs);
    const double residual = (gram * x - rhs).norm();
    if (x.allFinite() && residual <= 1e-8 * (1.0 + rhs.norm())) return x;
    if (ridge_cache.rows() == 0) {
      const double delta = 1e-10 * gram.trace();
      MatrixXd g = gram;
      g.diagonal().array() += delta;
      ridge_cache.compute(g);
    }
    return ridge_cache.solve(rhs);
  }

  MatrixXd refs_;
  int len_;
  int n_refs_;
  int taps_;
  MatrixXd gram_;
  Eigen::LDLT<MatrixXd> full_solver_;
  std::vector<Eigen::LDLT<MatrixXd>> single_solver_;
  mutable Eigen::LDLT<MatrixXd> full_ridge_;
  mutable std::vector<Eigen::LDLT<MatrixXd>> single_ridge_;
};

Decomposition decompose_with_engine(const ProjectionEngine& engine,
                                    const VectorXd& est, int matched_ref) {
  const MatrixXd& refs = engine.refs();
  const VectorXd r = refs.col(matched_ref);
  const double denom = r.squaredNorm();
  const double gain = denom > 0.0 ? est.dot(r) / denom : 0.0;

  const VectorXd c = engine.correlations(est);
  Decomposition dec;
  dec.s_target = gain * r;
  const VectorXd p_single = engine.project_single(c, matched_ref);
  const VectorXd p_all = engine.project_all(c);
  dec.e_spat = p_single - dec.s_target;
  dec.e_interf = p_all - p_single;
  dec.e_artif = est - p_all;
  return dec;
}

}  // namespace

Decomposition decompose(const Eigen::VectorXd& est, const Eigen::MatrixXd& refs,
                        int matched_ref, int proj_len) {
  if (est.size() != refs.rows())
    throw std::invalid_argument("decompose: estimate/reference length mismatch");
  if (matched_ref < 0 || matched_ref >= refs.cols())
    throw std::invalid_argument("decompose: matched reference out of range");
  ProjectionEngine engine(refs, proj_len);
  return decompose_with_engine(engine, est, matched_ref);
}

Metrics sdr_sir_sar(const Decomposition& dec) {
  Metrics m;
  const VectorXd err_all = dec.e_spat + dec.e_interf + dec.e_artif;
  m.sdr = db_ratio(dec.s_target.squaredNorm(), err_all.squaredNorm());
  m.sir = db_ratio((dec.s_target + dec.e_spat).squaredNorm(),
                   dec.e_interf.squaredNorm());
  m.sar = db_ratio((dec.s_target + dec.e_spat + dec.e_interf).squaredNorm(),
                   dec.e_artif.squaredNorm());
  return m;
}

EvalReport evaluate(const AudioBuffer& estimates, const AudioBuffer& references,
                    const Eigen::VectorXd& mixture_ref, int proj_len) {
  estimates.validate();
  references.validate();
  const int n = static_cast<int>(estimates.num_channels());
  if (n == 0 || references.num_channels() != static_cast<std::size_t>(n))
    throw std::invalid_argument("evaluate: estimate/reference count mismatch");
  const auto len = estimates.num_samples();
  if (references.num_samples() != len ||
      mixture_ref.size() != static_cast<Eigen::Index>(len))
    throw std::invalid_argument("evaluate: length mismatch");

  MatrixXd refs(len, n);
  for (int j = 0; j < n; ++j)
    refs.col(j) = Eigen::Map<const VectorXd>(references.samples[j].data(), len);
  ProjectionEngine engine(refs, proj_len);

  std::vector<std::vector<Metrics>> metric(n, std::vector<Metrics>(n));
  for (int i = 0; i < n; ++i) {
    const VectorXd est =
        Eigen::Map<const VectorXd>(estimates.samples[i].data(), len);
    for (int j = 0; j < n; ++j)
      metric[i][j] = sdr_sir_sar(decompose_with_engine(engine, est, j));
  }
  std::vector<Metrics> mix_metric(n);
  for (int j = 0; j < n; ++j)
    mix_metric[j] = sdr_sir_sar(decompose_with_engine(engine, mixture_ref, j));

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_sir = -std::numeric_limits<double>::infinity();
  do {
    double mean_sir = 0.0;
    for (int i = 0; i < n; ++i) mean_sir += metric[i][perm[i]].sir;
    mean_sir /= n;
    if (mean_sir > best_sir) {
      best_sir = mean_sir;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  EvalReport report;
  for (int i = 0; i < n; ++i) {
    EvalReport::Row row;
    row.source = i + 1;
    row.permuted_to = best[i] + 1;
    row.metrics = metric[i][best[i]];
    const Metrics& mix = mix_metric[best[i]];
    row.delta = {row.metrics.sdr - mix.sdr, row.metrics.sir - mix.sir,
                 row.metrics.sar - mix.sar};
    report.rows.push_back(row);
  }
  return report;
}

SpectralHistogram spectral_histogram(const AudioBuffer& buf,
                                     const StftConfig& cfg, int bins,
                                     bool per_band) {
  if (bins < 1) throw std::invalid_argument("spectral_histogram: bins must be >= 1");
  const ComplexSpectrogram spec = analyze(buf, cfg);
  const int n_bands = spec.bins();
  const int frames = spec.frames();

  double gmax = 0.0;
  for (const auto& ch : spec.channels)
    gmax = std::max(gmax, ch.cwiseAbs2().maxCoeff());
  if (gmax <= 0.0)
    throw std::invalid_argument("spectral_histogram: all-zero signal");

  // log10 of the max-normalized magnitude-square cells, tiny cells clamped
  // so silence inside an otherwise live signal stays finite.
  constexpr double kRelFloor = 1e-12;
  const auto cell_value = [&](int c, int f, int t) {
    const double p = std::norm(spec.channels[c](f, t)) / gmax;
    return std::log10(std::max(p, kRelFloor));
  };

  double vmin = std::numeric_limits<double>::infinity();
  double vmax = -vmin;
  for (int c = 0; c < spec.num_channels(); ++c)
    for (int f = 0; f < n_bands; ++f)
      for (int t = 0; t < frames; ++t) {
        const double v = cell_value(c, f, t);
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
      }

  SpectralHistogram hist;
  hist.per_band = per_band;
  const bool degenerate = !(vmax > vmin);
  const int n_bins = degenerate ? 1 : bins;
  const double width = degenerate ? 0.0 : (vmax - vmin) / n_bins;
  const auto bin_of = [&](double v) {
    if (degenerate) return 0;
    int idx = static_cast<int>((v - vmin) / width);
    return std::clamp(idx, 0, n_bins - 1);
  };

  const auto emit = [&](const std::vector<double>& counts, double total,
                        int freq_bin) {
    for (int b = 0; b < n_bins; ++b) {
      SpectralHistogram::Row row;
      row.bin_left = vmin + b * width;
      row.bin_right = degenerate ? vmin : vmin + (b + 1) * width;
      row.probability = total > 0.0 ? counts[b] / total : 0.0;
      row.freq_bin = freq_bin;
      hist.rows.push_back(row);
    }
  };

  if (!per_band) {
    std::vector<double> counts(n_bins, 0.0);
    double total = 0.0;
    for (int c = 0; c < spec.num_channels(); ++c)
      for (int f = 0; f < n_bands; ++f)
        for (int t = 0; t < frames; ++t) {
          counts[bin_of(cell_value(c, f, t))] += 1.0;
          total += 1.0;
        }
    emit(counts, total, -1);
  } else {
    for (int f = 0; f < n_bands; ++f) {
      std::vector<double> counts(n_bins, 0.0);
      double total = 0.0;
      for (int c = 0; c < spec.num_channels(); ++c)
        for (int t = 0; t < frames; ++t) {
          counts[bin_of(cell_value(c, f, t))] += 1.0;
          total += 1.0;
        }
      emit(counts, total, f);
    }
  }
  return hist;
}

Eigen::MatrixXd interband_correlation(const AudioBuffer& buf,
                                      const StftConfig& cfg) {
  const ComplexSpectrogram spec = analyze(buf, cfg);
  const int n_bands = spec.bins();
  const int frames = spec.frames();
  if (frames < 2)
    throw std::invalid_argument("interband_correlation: need at least 2 frames");

  MatrixXd power = spec.channels.front().cwiseAbs2();
  power.colwise() -= power.rowwise().mean();
  const VectorXd norms = power.rowwise().norm();
  MatrixXd rho = power * power.transpose();
  for (int f = 0; f < n_bands; ++f)
    for (int fp = 0; fp < n_bands; ++fp) {
      if (f == fp) {
        rho(f, fp) = 1.0;
      } else if (norms(f) == 0.0 || norms(fp) == 0.0) {
        rho(f, fp) = 0.0;
      } else {
        rho(f, fp) = std::clamp(rho(f, fp) / (norms(f) * norms(fp)), -1.0, 1.0);
      }
    }
  return rho;
}

}  // namespace bss
