#ifndef DOSEOPT_CLOSED_FORM_HPP
#define DOSEOPT_CLOSED_FORM_HPP

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "doseopt/design.hpp"
#include "doseopt/model.hpp"

namespace doseopt::closed_form {

/// Interior support point of the single-model locally D-optimal design
/// {0, x, dmax} (equal weights).
double emax_interior_point(double ed, double dmax);
double exponential_interior_point(double ed, double dmax);
double linear_in_log_interior_point(double ed, double dmax);
/// Dispatches on the family; throws SpecError for SigmoidEmax with gamma != 1.
double interior_point(const ModelFamily& family, double ed, double dmax);

/// Support-count bound for designs that cannot be improved in the Loewner
/// order.
struct SupportBound {
  std::vector<std::size_t> max_points;
  std::size_t total = 0;
  std::vector<bool> requires_placebo;
  std::vector<bool> requires_dmax;
};

/// Emax / linear-in-log (and sigmoid Emax, after the power substitution
/// d -> d^gamma): total 2M+1, lowest-variance group 3 points including 0 and
/// dmax, every other group 2 points including dmax. Exponential: 3 points in
/// every group, each including dmax.
SupportBound support_bound(const ModelSpec& spec);

/// Index of the smallest variance; ties go to the lowest index.
std::size_t min_variance_group(const ModelSpec& spec);

/// Locally D-optimal design for the common-location pattern, composed from
/// the single-model optima. `single_model_interior` holds, for each group,
/// the q = 2 nonzero support points of that group's single-model optimum
/// {0, d_1, d_2} with equal weights.
Design compose_shared_location(const ModelSpec& spec,
                               std::span<const std::array<double, 2>> single_model_interior);

/// Explicit locally D-optimal design for the common-location pattern with
/// Emax, exponential or linear-in-log curves. The placebo goes to the group
/// with the smallest variance. Throws SpecError for other families or
/// patterns.
Design shared_location_optimal(const ModelSpec& spec);

enum class MinSupportedCase { A, B, C };

std::string case_name(MinSupportedCase c);

/// Canonical reordering for two groups with common location and scale: the
/// first entry of `order` is the group with the smaller ED / dmax.
struct CanonicalPair {
  std::array<std::size_t, 2> order{0, 1};
  double low_ed = 0.0;   // unit-scaled ED of order[0]
  double high_ed = 0.0;  // unit-scaled ED of order[1]
  double ratio = 1.0;    // sigma2[order[0]] / sigma2[order[1]]
};

/// Throws SpecError unless M = 2, common location and scale, and the unit
/// ED parameters are distinct and below 1.
CanonicalPair canonical_pair(const ModelSpec& spec);

/// Boundary between the 2+2 and 1+3 minimally supported designs (> 1 when
/// low_ed < high_ed). Emax: ((1 + high) / (1 + low))^6; exponential and
/// linear-in-log: g(low, x_low) / g(high, x_high).
double case_threshold(const ModelFamily& family, double low_ed, double high_ed);

/// Which minimally supported structure wins for a given variance ratio.
/// r == threshold selects case B.
MinSupportedCase select_case(double ratio, double threshold);

/// Minimally supported design of a given structure in the canonical order,
/// mapped back to the caller's group order and dose units.
Design min_supported_design(const ModelSpec& spec, MinSupportedCase which);

struct MinSupportedResult {
  Design design;
  MinSupportedCase which = MinSupportedCase::A;
  double threshold = 1.0;
  CanonicalPair pair;
};

/// Locally D-optimal design among designs with exactly four support points
/// for two groups sharing location and scale (Emax, exponential,
/// linear-in-log).
MinSupportedResult min_supported_optimal(const ModelSpec& spec);

struct GlobalCondition {
  bool holds = false;
  double slack = 0.0;  // LHS - RHS of the printed inequality
};

/// Sufficient (case A, C) or necessary-and-sufficient (case B) condition for
/// the Emax minimally supported design to be optimal among all designs,
/// in unit-scaled parameters with low_ed < high_ed.
GlobalCondition emax_condition(MinSupportedCase which, double low_ed, double high_ed, double ratio);

/// emax_condition evaluated for a model; requires Emax with common location
/// and scale and M = 2.
GlobalCondition emax_global_conditions(const ModelSpec& spec, MinSupportedCase which);

/// Moves all placebo mass to the lowest-variance group (ties: lowest index).
/// The result dominates eta in the Loewner order.
Design placebo_shift(const ModelSpec& spec, const Design& eta);
/// Same with an explicit target group, which must attain the minimum variance.
Design placebo_shift(const ModelSpec& spec, const Design& eta, std::size_t target);

}  // namespace doseopt::closed_form

#endif  // DOSEOPT_CLOSED_FORM_HPP
