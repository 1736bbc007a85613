#pragma once

#include <Eigen/Dense>
#include <vector>

#include "bss/audio_io.hpp"
#include "bss/stft.hpp"

namespace bss {

/// Orthogonal split of one estimate against the reference set:
/// est = s_target + e_spat + e_interf + e_artif.
struct Decomposition {
  Eigen::VectorXd s_target;
  Eigen::VectorXd e_spat;
  Eigen::VectorXd e_interf;
  Eigen::VectorXd e_artif;
};

/// Least-squares decomposition of `est` against `refs` (one column per
/// reference). s_target is the gain-only projection onto the matched
/// reference; e_spat adds what a proj_len-tap filter of that reference
/// explains beyond it; e_interf what all references' filtered span
/// explains beyond that; e_artif is the residual.
Decomposition decompose(const Eigen::VectorXd& est, const Eigen::MatrixXd& refs,
                        int matched_ref, int proj_len);

struct Metrics {
  double sdr = 0.0;
  double sir = 0.0;
  double sar = 0.0;
};

/// Energy ratios in dB, clamped to [-300, 300]; zero numerator energy
/// yields -300, zero denominator +300.
Metrics sdr_sir_sar(const Decomposition& dec);

struct EvalReport {
  struct Row {
    int source = 0;       // estimate index, 1-based
    int permuted_to = 0;  // matched reference index, 1-based
    Metrics metrics;
    Metrics delta;  // vs. the mixture channel scored against the same ref
  };
  std::vector<Row> rows;
};

/// Scores N estimates against N references: all N! assignments are tried
/// and the permutation with the largest mean SIR wins. Deltas compare
/// against `mixture_ref` scored as an estimate of each reference.
EvalReport evaluate(const AudioBuffer& estimates, const AudioBuffer& references,
                    const Eigen::VectorXd& mixture_ref, int proj_len);

/// Histogram of log10 magnitude-square spectra normalized by their global
/// maximum. Aggregated over all cells, or one histogram per frequency bin
/// (shared bin edges) when per_band is set. Probabilities sum to 1 per
/// histogram. Throws on an all-zero signal.
struct SpectralHistogram {
  struct Row {
    double bin_left = 0.0;
    double bin_right = 0.0;
    double probability = 0.0;
    int freq_bin = -1;  // -1 in aggregate mode
  };
  std::vector<Row> rows;
  bool per_band = false;
};

SpectralHistogram spectral_histogram(const AudioBuffer& buf,
                                     const StftConfig& cfg, int bins,
                                     bool per_band);

/// Pearson correlation across frames between band powers |X(f,:)|^2 and
/// |X(f',:)|^2 of channel 0. Diagonal 1; zero-variance bands give 0
/// off-diagonal. Needs at least 2 frames.
Eigen::MatrixXd interband_correlation(const AudioBuffer& buf,
                                      const StftConfig& cfg);

}  // namespace bss
