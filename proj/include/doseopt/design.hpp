#ifndef DOSEOPT_DESIGN_HPP
#define DOSEOPT_DESIGN_HPP

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "doseopt/model.hpp"

namespace doseopt {

/// Probability measure on one group's dose range.
struct GroupDesign {
  std::vector<double> points;
  std::vector<double> weights;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// xi = (xi_1, ..., xi_M, mu): one measure per group plus the allocation of
/// subjects to groups (lambda).
struct Design {
  std::vector<GroupDesign> groups;
  std::vector<double> lambda;

  std::size_t n_groups() const { return groups.size(); }
  std::size_t support_size() const;

  /// Throws SpecError unless weights and lambda are probability vectors
  /// (to 1e-12), points are strictly increasing inside [0, dmax_i], and
  /// groups with zero allocation carry no support.
  void validate(std::span<const double> dmax) const;
};

/// Single support point with its joint mass lambda_i * xi_ij.
struct Atom {
  std::size_t group;
  double dose;
  double weight;
};

std::vector<Atom> to_atoms(const Design& design);
/// Inverse of to_atoms for joint masses summing to one. Atoms need not be sorted.
Design from_atoms(std::span<const Atom> atoms, std::size_t n_groups);

/// Sorts points, merges any two closer than merge_tol * dmax_i (weights
/// added, dose mass-averaged) and renormalizes.
Design normalized(const Design& design, std::span<const double> dmax, double merge_tol = 1e-9);

/// Multiplies every dose of group i by factors[i].
Design scale_doses(const Design& design, std::span<const double> factors);

/// Information matrix with its log-determinant. logdet is -infinity when the
/// ratio of the smallest to the largest eigenvalue falls below 1e-12.
struct InfoMatrix {
  Eigen::MatrixXd matrix;
  double logdet = -std::numeric_limits<double>::infinity();

  std::size_t dim() const { return static_cast<std::size_t>(matrix.rows()); }
  bool singular() const { return !(logdet > -std::numeric_limits<double>::infinity()); }
};

inline constexpr double kSingularEigenRatio = 1e-12;

/// log det of a symmetric positive semidefinite matrix, -infinity if singular.
double log_det_criterion(const Eigen::MatrixXd& matrix);

/// M^(i)(xi_i): information contributed by one group's measure, not weighted
/// by lambda_i.
Eigen::MatrixXd group_information(const ModelSpec& spec, const GroupDesign& group_design, std::size_t group);

/// M(xi) = sum_i lambda_i M^(i)(xi_i).
InfoMatrix information_matrix(const ModelSpec& spec, const Design& design);

/// (det M(xi) / det M(reference))^(1/m). Zero when the design is singular;
/// throws SingularMatrixError when the reference is singular.
double d_efficiency(const ModelSpec& spec, const Design& design, const Design& reference);

/// One member of a candidate set: a model with its prior weight and its
/// locally D-optimal reference design.
struct Candidate {
  std::string id;
  ModelSpec spec;
  double prior = 1.0;
  Design reference;
  double reference_logdet = 0.0;

  /// Evaluates the reference log-determinant; throws SingularMatrixError if
  /// the reference is singular.
  static Candidate make(std::string id, ModelSpec spec, double prior, Design reference);
};

/// g_c(xi) = sum_k prior_k Eff_k(xi).
double compound_criterion(std::span<const Candidate> candidates, const Design& design);

/// Integer subject counts obtained by rounding an approximate design.
struct ExactDesign {
  std::vector<std::vector<long>> counts;
  std::vector<long> group_totals;
  long total = 0;
};

/// Largest-remainder rounding of `total * weights` with per-entry lower
/// bounds; ties go to the lower index.
std::vector<long> largest_remainder(long total, std::span<const double> weights,
                                    std::span<const long> minimum);

/// Splits n over groups by lambda, then each group's count over its doses.
/// Every support point receives at least one subject.
ExactDesign apportion(const Design& design, long n);

}  // namespace doseopt

#endif  // DOSEOPT_DESIGN_HPP
