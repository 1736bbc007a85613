#include "bss/separation.hpp"

#include <chrono>
#include <cmath>
#include <mutex>
#include <stdexcept>

#include "bss/parallel.hpp"

namespace bss {
namespace {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

/// Gathers the N x T observation matrix of one frequency bin.
MatrixXcd gather_bin(const ComplexSpectrogram& x, int bin) {
  const int channels = x.num_channels();
  const int frames = x.frames();
  MatrixXcd xf(channels, frames);
  for (int n = 0; n < channels; ++n) xf.row(n) = x.channels[n].row(bin);
  return xf;
}

/// Solves [D O]^{-1} i_n with the shared singularity retry policy,
/// leaving normalization to the caller.
VectorXcd ip_solve(const MatrixXcd& d_f, const MatrixXcd& cov, int source) {
  const auto n = d_f.rows();
  MatrixXcd system = d_f * cov;
  Eigen::FullPivLU<MatrixXcd> lu(system);
  if (!lu.isInvertible()) {
    const double delta = 1e-10 * cov.real().trace() / static_cast<double>(n);
    system = d_f * (cov + delta * MatrixXcd::Identity(n, n));
    lu.compute(system);
    if (!lu.isInvertible())
      throw std::runtime_error("ip_update: demixing system is singular");
  }
  VectorXcd rhs = VectorXcd::Zero(n);
  rhs(source) = 1.0;
  return lu.solve(rhs);
}

/// IP update against a weighted frame set. The quadratic form d^H O d is
/// accumulated as (1/T) sum_t |d^H x_t|^2 / s2_t - a sum of nonnegative
/// terms - so the unit-normalization check stays sharp even when the
/// assembled covariance is badly conditioned. Returns |d^H O d - 1|.
double ip_update_frames(MatrixXcd& d_f, const MatrixXcd& cov,
                        const MatrixXcd& frames,
                        const Eigen::RowVectorXd& variances, int source) {
  VectorXcd d = ip_solve(d_f, cov, source);
  const auto n_frames = frames.cols();
  const auto quad_form = [&](const VectorXcd& v) {
    double acc = 0.0;
    for (Eigen::Index t = 0; t < n_frames; ++t)
      acc += std::norm(v.dot(frames.col(t))) / variances(t);
    return acc / static_cast<double>(n_frames);
  };
  const double quad = quad_form(d);
  if (!(quad > 0.0) || !std::isfinite(quad))
    throw std::runtime_error("ip_update: nonpositive normalization form");
  d /= std::sqrt(quad);
  d_f.row(source) = d.adjoint();
  return std::abs(quad_form(d) - 1.0);
}

}  // namespace

DemixingStack DemixingStack::identity(int bins, int channels) {
  DemixingStack stack;
  stack.d.assign(bins, MatrixXcd::Identity(channels, channels));
  return stack;
}

Method method_from_string(const std::string& name) {
  if (name == "auxiva") return Method::auxiva;
  if (name == "siva") return Method::siva;
  if (name == "ilrma") return Method::ilrma;
  if (name == "silrma") return Method::silrma;
  throw std::invalid_argument("unknown method: " + name);
}

std::string method_to_string(Method m) {
  switch (m) {
    case Method::auxiva: return "auxiva";
    case Method::siva: return "siva";
    case Method::ilrma: return "ilrma";
    case Method::silrma: return "silrma";
  }
  return "?";
}

void SeparationConfig::validate() const {
  if (iters < 1) throw std::invalid_argument("SeparationConfig: iters must be >= 1");
  if (nmf_order < 1) throw std::invalid_argument("SeparationConfig: nmf_order must be >= 1");
  if (reference_channel < 0)
    throw std::invalid_argument("SeparationConfig: reference_channel must be >= 0");
  sinkhorn.validate();
}

Eigen::MatrixXcd weighted_covariance(const ComplexSpectrogram& x,
                                     const VarianceTensor& weights, int source,
                                     int bin) {
  const int channels = x.num_channels();
  const int frames = x.frames();
  const Eigen::MatrixXd& w = weights.v.at(source);
  if (w.rows() != x.bins() || w.cols() != frames)
    throw std::invalid_argument("weighted_covariance: weight shape mismatch");
  MatrixXcd cov = MatrixXcd::Zero(channels, channels);
  VectorXcd xt(channels);
  for (int t = 0; t < frames; ++t) {
    for (int n = 0; n < channels; ++n) xt(n) = x.channels[n](bin, t);
    cov.noalias() += (xt * xt.adjoint()) / w(bin, t);
  }
  return cov / static_cast<double>(frames);
}

double ip_update(DemixingStack& demixing, const Eigen::MatrixXcd& cov,
                 int source, int bin) {
  MatrixXcd& d_f = demixing.d.at(bin);
  VectorXcd d = ip_solve(d_f, cov, source);
  const double quad = std::real((d.adjoint() * cov * d)(0, 0));
  if (!(quad > 0.0) || !std::isfinite(quad))
    throw std::runtime_error("ip_update: nonpositive normalization form");
  d /= std::sqrt(quad);
  d_f.row(source) = d.adjoint();
  return std::abs(std::real((d.adjoint() * cov * d)(0, 0)) - 1.0);
}

ComplexSpectrogram demix(const ComplexSpectrogram& x,
                         const DemixingStack& demixing) {
  if (demixing.bins() != x.bins())
    throw std::invalid_argument("demix: bin count mismatch");
  ComplexSpectrogram y = x;
  const int bins = x.bins();
  for (int f = 0; f < bins; ++f) {
    const MatrixXcd xf = gather_bin(x, f);
    const MatrixXcd yf = demixing.d[f] * xf;
    for (int n = 0; n < x.num_channels(); ++n)
      y.channels[n].row(f) = yf.row(n);
  }
  return y;
}

ComplexSpectrogram project_back(const ComplexSpectrogram& y,
                                const DemixingStack& demixing,
                                int reference_channel) {
  const int channels = y.num_channels();
  if (reference_channel < 0 || reference_channel >= channels)
    throw std::invalid_argument("project_back: reference channel out of range");
  if (demixing.bins() != y.bins())
    throw std::invalid_argument("project_back: bin count mismatch");
  ComplexSpectrogram out = y;
  for (int f = 0; f < y.bins(); ++f) {
    Eigen::FullPivLU<MatrixXcd> lu(demixing.d[f]);
    if (!lu.isInvertible())
      throw std::runtime_error("project_back: singular demixing matrix at bin " +
                               std::to_string(f));
    const MatrixXcd inv = lu.inverse();
    for (int n = 0; n < channels; ++n)
      out.channels[n].row(f) = inv(reference_channel, n) * y.channels[n].row(f);
  }
  return out;
}

SeparationResult run_separation(const ComplexSpectrogram& x,
                                const SeparationConfig& cfg) {
  cfg.validate();
  const int channels = x.num_channels();
  const int bins = x.bins();
  const int frames = x.frames();
  if (channels < 1 || bins < 1 || frames < 1)
    throw std::invalid_argument("run_separation: empty spectrogram");

  const double eps = cfg.sinkhorn.eps_floor;
  const bool use_transport =
      cfg.method == Method::siva || cfg.method == Method::silrma;
  const bool use_nmf =
      cfg.method == Method::ilrma || cfg.method == Method::silrma;

  SeparationResult result;
  result.demixing = DemixingStack::identity(bins, channels);
  result.estimates = x;

  VarianceTensor s2;
  s2.v.reserve(channels);
  for (int n = 0; n < channels; ++n)
    s2.v.push_back(x.channels[n].cwiseAbs2().cwiseMax(eps));

  NmfFactors factors;
  if (use_nmf)
    factors = NmfFactors::seeded(channels, bins, frames, cfg.nmf_order, cfg.seed);

  // Per-thread transport solvers; frames are partitioned statically so
  // results do not depend on the thread count.
  const unsigned n_workers = [&] {
    unsigned w = cfg.threads <= 0 ? std::thread::hardware_concurrency()
                                  : static_cast<unsigned>(cfg.threads);
    return w == 0 ? 1u : w;
  }();
  std::vector<SinkhornSolver> solvers;
  if (use_transport)
    solvers.assign(n_workers, SinkhornSolver(cfg.sinkhorn));

  VarianceTensor reallocated = s2;

  for (int iter = 0; iter < cfg.iters; ++iter) {
    const auto t_start = std::chrono::steady_clock::now();

    switch (cfg.method) {
      case Method::auxiva:
        for (int n = 0; n < channels; ++n)
          s2.v[n] = result.estimates.channels[n].cwiseAbs2().cwiseMax(eps);
        break;
      case Method::siva:
      case Method::silrma: {
        for (int n = 0; n < channels; ++n) {
          const Eigen::MatrixXd ypow =
              result.estimates.channels[n].cwiseAbs2().cwiseMax(eps);
          Eigen::MatrixXd& shat = reallocated.v[n];
          const Eigen::MatrixXd& prior = s2.v[n];
          const std::size_t chunk =
              (static_cast<std::size_t>(frames) + n_workers - 1) / n_workers;
          parallel_for(n_workers, static_cast<int>(n_workers), [&](std::size_t w) {
            const std::size_t begin = w * chunk;
            const std::size_t end =
                std::min<std::size_t>(frames, begin + chunk);
            for (std::size_t t = begin; t < end; ++t)
              solvers[w].reallocate(prior.col(static_cast<Eigen::Index>(t)),
                                    ypow.col(static_cast<Eigen::Index>(t)),
                                    shat.col(static_cast<Eigen::Index>(t)));
          });
          shat = shat.cwiseMax(eps);
        }
        if (cfg.method == Method::siva) {
          s2 = reallocated;
        } else {
          for (int n = 0; n < channels; ++n)
            nmf_update(factors, reallocated, n, NmfRule::standard, eps);
          s2 = model_variances(factors, eps);
        }
        break;
      }
      case Method::ilrma: {
        VarianceTensor target;
        target.v.reserve(channels);
        for (int n = 0; n < channels; ++n)
          target.v.push_back(
              result.estimates.channels[n].cwiseAbs2().cwiseMax(eps));
        for (int n = 0; n < channels; ++n)
          nmf_update(factors, target, n, NmfRule::standard, eps);
        s2 = model_variances(factors, eps);
        break;
      }
    }

    // IP sweep: bins are independent; sources within a bin are sequential
    // because each update reads the current D(f).
    std::vector<double> bin_dev(bins, 0.0);
    std::string failure;
    std::mutex failure_mutex;
    parallel_for(static_cast<std::size_t>(bins), static_cast<int>(n_workers),
                 [&](std::size_t f) {
                   try {
                     const MatrixXcd xf = gather_bin(x, static_cast<int>(f));
                     MatrixXcd& d_f = result.demixing.d[f];
                     MatrixXcd xw(channels, frames);
                     double dev = 0.0;
                     for (int n = 0; n < channels; ++n) {
                       const Eigen::RowVectorXd w_row =
                           s2.v[n].row(static_cast<Eigen::Index>(f));
                       for (int t = 0; t < frames; ++t)
                         xw.col(t) = xf.col(t) / w_row(t);
                       MatrixXcd cov =
                           (xw * xf.adjoint()) / static_cast<double>(frames);
                       dev = std::max(
                           dev, ip_update_frames(d_f, cov, xf, w_row, n));
                     }
                     bin_dev[f] = dev;
                   } catch (const std::exception& e) {
                     std::lock_guard<std::mutex> lock(failure_mutex);
                     if (failure.empty())
                       failure = "iteration " + std::to_string(iter + 1) +
                                 ", bin " + std::to_string(f) + ": " + e.what();
                   }
                 });
    if (!failure.empty()) throw std::runtime_error("run_separation: " + failure);

    result.estimates = demix(x, result.demixing);

    IterationStats stats;
    for (double dev : bin_dev)
      stats.max_ip_norm_dev = std::max(stats.max_ip_norm_dev, dev);
    double fit = 0.0;
    for (int n = 0; n < channels; ++n) {
      const Eigen::ArrayXXd power = result.estimates.channels[n].cwiseAbs2().array();
      const Eigen::ArrayXXd& var = s2.v[n].array();
      fit += (power / var + var.log()).sum();
    }
    double logdet = 0.0;
    for (int f = 0; f < bins; ++f) {
      const std::complex<double> det =
          Eigen::PartialPivLU<MatrixXcd>(result.demixing.d[f]).determinant();
      logdet += std::log(std::max(std::abs(det), eps));
    }
    stats.surrogate = fit - 2.0 * logdet;
    stats.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t_start)
                        .count();
    result.trace.push_back(stats);
  }
  return result;
}

}  // namespace bss
