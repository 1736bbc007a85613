#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "bss/source_models.hpp"
#include "bss/stft.hpp"
#include "bss/transport.hpp"

namespace bss {

/// Per-frequency demixing matrices D(f), rows acting on the observation
/// vector: y(f,t) = D(f) x(f,t).
struct DemixingStack {
  std::vector<Eigen::MatrixXcd> d;

  static DemixingStack identity(int bins, int channels);
  int bins() const { return static_cast<int>(d.size()); }
};

enum class Method { auxiva, siva, ilrma, silrma };

Method method_from_string(const std::string& name);  // throws on unknown
std::string method_to_string(Method m);

struct SeparationConfig {
  Method method = Method::auxiva;
  int iters = 100;
  int nmf_order = 10;
  SinkhornParams sinkhorn;
  std::uint64_t seed = 0;
  int reference_channel = 0;
  int threads = 0;  // 0 = all cores; 1 = sequential reference path

  void validate() const;
};

struct IterationStats {
  double surrogate = 0.0;  // sum |y|^2/s2 + log s2 - 2 sum_f log|det D(f)|
  double wall_ms = 0.0;
  double max_ip_norm_dev = 0.0;  // max |d^H O d - 1| over this iteration
};

struct SeparationResult {
  ComplexSpectrogram estimates;
  DemixingStack demixing;
  std::vector<IterationStats> trace;
};

/// O(n,f) = (1/T) sum_t x(f,t) x(f,t)^H / weights(n,f,t).
Eigen::MatrixXcd weighted_covariance(const ComplexSpectrogram& x,
                                     const VarianceTensor& weights, int source,
                                     int bin);

/// Iterative-projection update of row n of D(f):
///   d <- [D(f) O]^{-1} i_n,  d <- d (d^H O d)^{-1/2}.
/// A singular D(f) O is retried once with O + 1e-10 tr(O)/N I; throws if
/// still singular. Returns |d^H O d - 1| after the update.
double ip_update(DemixingStack& demixing, const Eigen::MatrixXcd& cov,
                 int source, int bin);

/// y(f,t) = D(f) x(f,t) for all bins and frames.
ComplexSpectrogram demix(const ComplexSpectrogram& x,
                         const DemixingStack& demixing);

/// Runs `iters` full sweeps of the selected method. Per iteration:
///   auxiva: s2 = |y|^2, IP sweep, demix.
///   siva:   per (n,t) transport re-allocation of the running s2 against
///           |y_n(:,t)|^2, weights from the re-allocated s2, IP, demix.
///   ilrma:  one NMF sweep fitting |y|^2, s2 = factor model, IP, demix.
///   silrma: transport re-allocation first, NMF sweep fitting the
///           re-allocated variances, s2 = factor model, IP, demix.
SeparationResult run_separation(const ComplexSpectrogram& x,
                                const SeparationConfig& cfg);

/// Rescales each estimate by its inverse-demixing coefficient at the
/// reference channel: yhat_n(f,t) = [D(f)^{-1}]_{ref,n} y_n(f,t).
/// Throws on a singular D(f).
ComplexSpectrogram project_back(const ComplexSpectrogram& y,
                                const DemixingStack& demixing,
                                int reference_channel);

}  // namespace bss
