#include "bss/source_models.hpp"

#include <cmath>
#include <stdexcept>

#include "bss/rng.hpp"

namespace bss {

NmfFactors NmfFactors::seeded(int sources, int bins, int frames, int order,
                              std::uint64_t seed) {
  if (sources < 1 || bins < 1 || frames < 1 || order < 1)
    throw std::invalid_argument("NmfFactors::seeded: all dimensions must be >= 1");
  NmfFactors factors;
  factors.basis.reserve(sources);
  factors.activation.reserve(sources);
  for (int n = 0; n < sources; ++n) {
    Rng rng(child_seed(seed, static_cast<std::uint64_t>(n)));
    Eigen::MatrixXd u(bins, order);
    for (int k = 0; k < order; ++k)
      for (int f = 0; f < bins; ++f) u(f, k) = rng.uniform(0.1, 1.0);
    Eigen::MatrixXd v(order, frames);
    for (int t = 0; t < frames; ++t)
      for (int k = 0; k < order; ++k) v(k, t) = rng.uniform(0.1, 1.0);
    factors.basis.push_back(std::move(u));
    factors.activation.push_back(std::move(v));
  }
  return factors;
}

double is_divergence(const Eigen::MatrixXd& target,
                     const Eigen::MatrixXd& model) {
  if (target.rows() != model.rows() || target.cols() != model.cols())
    throw std::invalid_argument("is_divergence: shape mismatch");
  if ((target.array() <= 0.0).any() || (model.array() <= 0.0).any())
    throw std::invalid_argument("is_divergence: entries must be positive");
  const Eigen::ArrayXXd ratio = target.array() / model.array();
  return (ratio - ratio.log() - 1.0).sum();
}

void nmf_update(NmfFactors& factors, const VarianceTensor& target, int source,
                NmfRule rule, double eps_floor) {
  if (source < 0 || source >= static_cast<int>(factors.basis.size()))
    throw std::invalid_argument("nmf_update: source index out of range");
  const Eigen::MatrixXd& p = target.v.at(source);
  Eigen::MatrixXd& u = factors.basis[source];
  Eigen::MatrixXd& v = factors.activation[source];
  if (p.rows() != u.rows() || p.cols() != v.cols())
    throw std::invalid_argument("nmf_update: target shape mismatch");

  Eigen::MatrixXd model = (u * v).cwiseMax(eps_floor);
  const auto ratio2 = [](const Eigen::MatrixXd& tgt, const Eigen::MatrixXd& m) {
    return (tgt.array() / (m.array() * m.array())).matrix();
  };

  if (rule == NmfRule::standard) {
    Eigen::MatrixXd num = ratio2(p, model) * v.transpose();           // F x K
    Eigen::MatrixXd den = model.array().inverse().matrix() * v.transpose();
    u = (u.array() * (num.array() / den.array().max(eps_floor)).sqrt())
            .max(eps_floor);
    model = (u * v).cwiseMax(eps_floor);
    num = u.transpose() * ratio2(p, model);                           // K x T
    den = u.transpose() * model.array().inverse().matrix();
    v = (v.array() * (num.array() / den.array().max(eps_floor)).sqrt())
            .max(eps_floor);
  } else {
    // Variant without the leading factor; denominator weighted by the
    // target and independent of the component index.
    Eigen::MatrixXd num = ratio2(p, model) * v.transpose();           // F x K
    Eigen::VectorXd den = (p.array() / model.array()).rowwise().sum();
    u = (num.array().colwise() / den.array().max(eps_floor))
            .sqrt()
            .max(eps_floor);
    model = (u * v).cwiseMax(eps_floor);
    num = u.transpose() * ratio2(p, model);                           // K x T
    Eigen::RowVectorXd den_t = (p.array() / model.array()).colwise().sum();
    v = (num.array().rowwise() / den_t.array().max(eps_floor))
            .sqrt()
            .max(eps_floor);
  }
}

VarianceTensor model_variances(const NmfFactors& factors, double eps_floor) {
  VarianceTensor out;
  out.v.reserve(factors.basis.size());
  for (std::size_t n = 0; n < factors.basis.size(); ++n)
    out.v.push_back((factors.basis[n] * factors.activation[n]).cwiseMax(eps_floor));
  return out;
}

}  // namespace bss
