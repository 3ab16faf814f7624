#ifndef DOSEOPT_CRITERION_HPP
#define DOSEOPT_CRITERION_HPP

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "doseopt/design.hpp"
#include "doseopt/model.hpp"

namespace doseopt {

class Criterion;

/// Normalized directional derivative of a criterion at a fixed design.
///
/// For the locally D-optimal criterion this is kappa_i(d) / m; for the
/// compound criterion it is
///   sum_k pi_k Eff_k kappa_k,i(d) / m_k  /  sum_k pi_k Eff_k.
/// In both cases the design is optimal iff the value is <= 1 everywhere,
/// with equality on the support.
class Sensitivity {
 public:
  double operator()(std::size_t group, double dose) const;
  /// kappa of model k: h^T M_k^{-1} h.
  double kappa(std::size_t model, std::size_t group, double dose) const;
  /// m for the locally D-optimal criterion, 1 for the compound criterion.
  double scale() const { return scale_; }

 private:
  friend class Criterion;
  const Criterion* criterion_ = nullptr;
  using MatrixXld = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  using VectorXld = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
  // Extended precision keeps kappa accurate for poorly conditioned designs.
  std::vector<Eigen::LLT<MatrixXld>> factors_;  // of the equilibrated matrices
  std::vector<VectorXld> equilibration_;        // diag(M)^(-1/2)
  std::vector<double> coefficients_;  // pi_k Eff_k / m_k / sum(pi Eff), or 1/m
  double scale_ = 1.0;
};

/// Value, gradient and Hessian of a criterion with respect to the joint
/// masses of a fixed list of atoms.
struct WeightDerivatives {
  double value;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

/// A concave design criterion over M groups: either log det M(xi) for one
/// model, or the prior-weighted mean of D-efficiencies over candidates that
/// share the same groups and design spaces.
class Criterion {
 public:
  static Criterion locally_d(ModelSpec spec);
  static Criterion compound(std::vector<Candidate> candidates);

  bool is_compound() const { return compound_; }
  std::size_t n_groups() const { return dmax_.size(); }
  const std::vector<double>& dmax() const { return dmax_; }
  std::size_t n_models() const { return models_.size(); }
  const ModelSpec& model(std::size_t k) const { return models_[k]; }
  double prior(std::size_t k) const { return priors_[k]; }
  double reference_logdet(std::size_t k) const { return reference_logdet_[k]; }
  const std::vector<Candidate>& candidates() const { return candidates_; }

  /// log det for the D criterion (-infinity if singular); g_c for compound.
  double value(const Design& design) const;
  double value(std::span<const Atom> atoms) const;

  /// Efficiencies of the design under every model (compound only;
  /// for the D criterion returns an empty vector).
  std::vector<double> efficiencies(const Design& design) const;

  /// Throws SingularMatrixError when no model has a nonsingular information
  /// matrix at the design.
  Sensitivity sensitivity(const Design& design) const;
  Sensitivity sensitivity(std::span<const Atom> atoms) const;

  /// Derivatives with respect to atom masses; value only is meaningful
  /// (gradient/hessian empty) when the design is singular.
  WeightDerivatives weight_derivatives(std::span<const Atom> atoms) const;

  /// Information matrix of model k at the atoms.
  Eigen::MatrixXd information(std::size_t k, std::span<const Atom> atoms) const;

 private:
  Criterion() = default;

  bool compound_ = false;
  std::vector<ModelSpec> models_;
  std::vector<double> priors_;
  std::vector<double> reference_logdet_;
  std::vector<double> dmax_;
  std::vector<Candidate> candidates_;
};

}  // namespace doseopt

#endif  // DOSEOPT_CRITERION_HPP
