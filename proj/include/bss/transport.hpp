#pragma once

#include <Eigen/Dense>
#include <vector>

namespace bss {

/// Hyperparameters of the entropic transport solve.
struct SinkhornParams {
  double lambda = 5.0;      // inverse entropic temperature
  double gamma = 1.0;       // weight of the KL marginal-relaxation terms
  int inner_iters = 10;     // scaling-vector fixed-point iterations
  double eps_floor = 1e-12; // floor for kernel entries and divisions
  bool normalize_scale = true;  // divide both inputs by their joint max
  double r = 2.0;  // accepted alongside lambda/gamma for config parity;
                   // no update rule consumes it

  /// lambda*gamma / (lambda*gamma + 1), in (0, 1).
  double exponent() const { return lambda * gamma / (lambda * gamma + 1.0); }
  void validate() const;
};

/// One band-power problem instance: model variances sigma2 and estimated
/// powers ypow, both length F and floored at eps_floor.
struct BandPowerPair {
  Eigen::VectorXd sigma2;
  Eigen::VectorXd ypow;

  static BandPowerPair floored(Eigen::VectorXd sigma2, Eigen::VectorXd ypow,
                               double eps_floor);
  int size() const { return static_cast<int>(sigma2.size()); }
};

/// Nonnegative F x F coupling between model-variance mass (rows) and
/// estimated-power mass (columns): row sums track sigma2, column sums
/// track ypow.
struct TransportPlan {
  Eigen::MatrixXd q;
};

/// C(f, f') = | ypow[f] - sigma2[f'] |.
Eigen::MatrixXd cost_matrix(const BandPowerPair& pair);

/// K = exp(-lambda * C - 1) elementwise, floored at eps_floor.
Eigen::MatrixXd gibbs_kernel(const Eigen::MatrixXd& cost, double lambda,
                             double eps_floor);

struct MappingResult {
  TransportPlan plan;
  Eigen::VectorXd sigma2_hat;       // row sums of the plan (rescaled)
  std::vector<double> xi_step_inf;  // per-iteration sup norm of the
                                    // log-domain scaling step
};

/// Solves the relaxed-marginal entropic transport problem by the
/// diagonal-scaling fixed point
///   nu = (ypow / K^T xi)^p,  xi = (sigma2 / K nu)^p,  p = lg/(lg+1),
/// run inner_iters times from xi = 1, and assembles the stationary plan
///   Q = diag(xi) K diag(nu).
/// sigma2_hat = Q 1. With normalize_scale on, both inputs are divided by
/// their joint max before solving; sigma2_hat is scaled back, the plan is
/// the one of the normalized problem.
MappingResult optimal_mapping(const BandPowerPair& pair,
                              const SinkhornParams& params);

/// <Q,C> - (1/lambda) H(Q) + gamma [KL(Q1 || sigma2) + KL(Q^T 1 || ypow)]
/// with H(Q) = -sum q log q, generalized KL(a||b) = sum a log(a/b) - a + b,
/// and 0 log 0 = 0. Throws on negative plan entries.
double sinkhorn_objective(const TransportPlan& plan, const BandPowerPair& pair,
                          const SinkhornParams& params);

/// Workspace-reusing solver for the separation inner loop; computes only
/// sigma2_hat (the plan's row sums) without materializing the plan.
class SinkhornSolver {
 public:
  explicit SinkhornSolver(const SinkhornParams& params);

  void reallocate(const Eigen::Ref<const Eigen::VectorXd>& sigma2,
                  const Eigen::Ref<const Eigen::VectorXd>& ypow,
                  Eigen::Ref<Eigen::VectorXd> sigma2_hat);

 private:
  SinkhornParams params_;
  Eigen::VectorXd sig_, yp_, xi_, nu_, tmp_;
  Eigen::MatrixXd kernel_;
};

}  // namespace bss
