#include "bss/transport.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace bss {
namespace {

void require_finite(const Eigen::Ref<const Eigen::VectorXd>& v,
                    const char* name) {
  if (!v.allFinite())
    throw std::runtime_error(std::string("optimal_mapping: non-finite ") + name);
}

/// a log(a/b) - a + b summed over entries, with 0 log 0 = 0. b must be
/// positive (callers pass floored vectors).
double generalized_kl(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double ai = a(i), bi = b(i);
    if (ai > 0.0) acc += ai * std::log(ai / bi) - ai + bi;
    else acc += bi;
  }
  return acc;
}

}  // namespace

void SinkhornParams::validate() const {
  if (lambda <= 0.0) throw std::invalid_argument("SinkhornParams: lambda must be positive");
  if (gamma <= 0.0) throw std::invalid_argument("SinkhornParams: gamma must be positive");
  if (inner_iters < 1) throw std::invalid_argument("SinkhornParams: inner_iters must be >= 1");
  if (eps_floor < 0.0) throw std::invalid_argument("SinkhornParams: eps_floor must be nonnegative");
}

BandPowerPair BandPowerPair::floored(Eigen::VectorXd sigma2,
                                     Eigen::VectorXd ypow, double eps_floor) {
  if (sigma2.size() != ypow.size())
    throw std::invalid_argument("BandPowerPair: vectors differ in length");
  BandPowerPair pair;
  pair.sigma2 = sigma2.cwiseMax(eps_floor);
  pair.ypow = ypow.cwiseMax(eps_floor);
  return pair;
}

Eigen::MatrixXd cost_matrix(const BandPowerPair& pair) {
  if (pair.sigma2.size() != pair.ypow.size())
    throw std::invalid_argument("cost_matrix: vectors differ in length");
  const Eigen::Index n = pair.sigma2.size();
  Eigen::MatrixXd cost(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    cost.col(j) = (pair.ypow.array() - pair.sigma2(j)).abs();
  return cost;
}

Eigen::MatrixXd gibbs_kernel(const Eigen::MatrixXd& cost, double lambda,
                             double eps_floor) {
  if (!cost.allFinite())
    throw std::invalid_argument("gibbs_kernel: cost matrix must be finite");
  return ((-lambda * cost.array() - 1.0).exp()).max(eps_floor).matrix();
}

namespace {

/// Shared fixed-point core. On return xi/nu hold the final scaling
/// vectors for the (already normalized and floored) problem.
void run_scaling_iterations(const Eigen::VectorXd& sig, const Eigen::VectorXd& yp,
                            const Eigen::MatrixXd& kernel,
                            const SinkhornParams& params, Eigen::VectorXd& xi,
                            Eigen::VectorXd& nu, Eigen::VectorXd& tmp,
                            std::vector<double>* step_log) {
  const double p = params.exponent();
  const double eps = params.eps_floor;
  xi.setOnes(sig.size());
  for (int j = 0; j < params.inner_iters; ++j) {
    tmp.noalias() = kernel.transpose() * xi;
    nu = (yp.array() / tmp.array().max(eps)).pow(p);
    tmp.noalias() = kernel * nu;
    tmp = (sig.array() / tmp.array().max(eps)).pow(p);
    // log-domain step: the update contracts with factor p^2 in the
    // sup norm of log xi, so these shrink geometrically
    if (step_log)
      step_log->push_back(
          (tmp.array() / xi.array()).log().abs().maxCoeff());
    xi.swap(tmp);
  }
  // Final nu consistent with the final xi.
  tmp.noalias() = kernel.transpose() * xi;
  nu = (yp.array() / tmp.array().max(eps)).pow(p);
}

}  // namespace

MappingResult optimal_mapping(const BandPowerPair& pair,
                              const SinkhornParams& params) {
  params.validate();
  if (pair.sigma2.size() != pair.ypow.size())
    throw std::invalid_argument("optimal_mapping: vectors differ in length");
  const double eps = params.eps_floor;

  double scale = 1.0;
  if (params.normalize_scale)
    scale = std::max({pair.sigma2.maxCoeff(), pair.ypow.maxCoeff(), eps});
  const Eigen::VectorXd sig = (pair.sigma2 / scale).cwiseMax(eps);
  const Eigen::VectorXd yp = (pair.ypow / scale).cwiseMax(eps);

  const Eigen::MatrixXd kernel =
      gibbs_kernel(cost_matrix(BandPowerPair{sig, yp}), params.lambda, eps);

  MappingResult result;
  Eigen::VectorXd xi, nu, tmp;
  run_scaling_iterations(sig, yp, kernel, params, xi, nu, tmp,
                         &result.xi_step_inf);
  require_finite(xi, "xi");
  require_finite(nu, "nu");

  // Stationary plan of the relaxed objective: rows carry the sigma2-side
  // scaling, columns the ypow side.
  result.plan.q = xi.asDiagonal() * kernel * nu.asDiagonal();
  if (!result.plan.q.allFinite())
    throw std::runtime_error("optimal_mapping: non-finite transport plan");
  result.sigma2_hat = scale * (xi.array() * (kernel * nu).array());
  require_finite(result.sigma2_hat, "sigma2_hat");
  return result;
}

double sinkhorn_objective(const TransportPlan& plan, const BandPowerPair& pair,
                          const SinkhornParams& params) {
  params.validate();
  const Eigen::Index n = pair.sigma2.size();
  if (plan.q.rows() != n || plan.q.cols() != n)
    throw std::invalid_argument("sinkhorn_objective: plan shape mismatch");
  if ((plan.q.array() < 0.0).any())
    throw std::invalid_argument("sinkhorn_objective: negative plan entry");

  const Eigen::MatrixXd cost = cost_matrix(pair);
  const double transport = (plan.q.array() * cost.array()).sum();
  double entropy = 0.0;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) {
      const double q = plan.q(i, j);
      if (q > 0.0) entropy -= q * std::log(q);
    }
  const Eigen::VectorXd row_sums = plan.q.rowwise().sum();
  const Eigen::VectorXd col_sums = plan.q.colwise().sum();
  return transport - entropy / params.lambda +
         params.gamma * (generalized_kl(row_sums, pair.sigma2) +
                         generalized_kl(col_sums, pair.ypow));
}

SinkhornSolver::SinkhornSolver(const SinkhornParams& params) : params_(params) {
  params_.validate();
}

void SinkhornSolver::reallocate(const Eigen::Ref<const Eigen::VectorXd>& sigma2,
                                const Eigen::Ref<const Eigen::VectorXd>& ypow,
                                Eigen::Ref<Eigen::VectorXd> sigma2_hat) {
  const double eps = params_.eps_floor;
  double scale = 1.0;
  if (params_.normalize_scale)
    scale = std::max({sigma2.maxCoeff(), ypow.maxCoeff(), eps});
  sig_ = (sigma2 / scale).cwiseMax(eps);
  yp_ = (ypow / scale).cwiseMax(eps);

  const Eigen::Index n = sig_.size();
  kernel_.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    kernel_.col(j) =
        ((-params_.lambda * (yp_.array() - sig_(j)).abs() - 1.0).exp()).max(eps);

  run_scaling_iterations(sig_, yp_, kernel_, params_, xi_, nu_, tmp_, nullptr);
  require_finite(xi_, "xi");
  require_finite(nu_, "nu");
  tmp_.noalias() = kernel_ * nu_;
  sigma2_hat = scale * (xi_.array() * tmp_.array());
  require_finite(sigma2_hat, "sigma2_hat");
}

}  // namespace bss
