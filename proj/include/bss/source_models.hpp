#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace bss {

/// Nonnegative source power parameters, one F x T matrix per source,
/// every entry kept >= eps_floor.
struct VarianceTensor {
  std::vector<Eigen::MatrixXd> v;

  int num_sources() const { return static_cast<int>(v.size()); }
};

/// Per-source NMF factors of the variance model: basis F x K and
/// activations K x T, strictly positive.
struct NmfFactors {
  std::vector<Eigen::MatrixXd> basis;
  std::vector<Eigen::MatrixXd> activation;

  int order() const {
    return basis.empty() ? 0 : static_cast<int>(basis.front().cols());
  }
  /// Uniform [0.1, 1] initialization, one child stream per source.
  static NmfFactors seeded(int sources, int bins, int frames, int order,
                           std::uint64_t seed);
};

enum class NmfRule {
  standard,        // multiplicative rule with leading factor and sqrt
  target_weighted  // variant without the leading factor, denominator
                   // weighted by the target
};

/// sum( target/model - log(target/model) - 1 ), >= 0 with equality iff
/// equal. Throws on nonpositive entries or shape mismatch.
double is_divergence(const Eigen::MatrixXd& target,
                     const Eigen::MatrixXd& model);

/// One full sweep for source n: all basis entries (using the old model),
/// model recomputed, then all activations. Outputs floored at eps_floor.
void nmf_update(NmfFactors& factors, const VarianceTensor& target, int source,
                NmfRule rule, double eps_floor);

/// model(f, t) = sum_k basis(f, k) * activation(k, t), floored.
VarianceTensor model_variances(const NmfFactors& factors, double eps_floor);

}  // namespace bss
