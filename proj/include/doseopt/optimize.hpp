#ifndef DOSEOPT_OPTIMIZE_HPP
#define DOSEOPT_OPTIMIZE_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "doseopt/closed_form.hpp"
#include "doseopt/criterion.hpp"
#include "doseopt/design.hpp"
#include "doseopt/model.hpp"
#include "doseopt/verify.hpp"

namespace doseopt {

struct OptimizerSettings {
  std::size_t restarts = 20;
  std::size_t grid_density = 201;    // candidate doses per group for the exchange scan
  std::size_t exchange_iters = 200;
  std::size_t weight_iters = 500;
  double collapse_tol = 1e-4;        // relative to dmax
  double convergence_tol = 1e-9;     // on the criterion improvement per exchange step
  std::uint64_t seed = 20160101;
  double certificate_tol = 1e-4;
  std::size_t certificate_grid = 2001;
  bool parallel = true;

  void validate() const;
};

struct OptimizationResult {
  Design design;
  double criterion = 0.0;
  OptimalityCertificate certificate;
  std::vector<double> trace;
  bool converged = false;
  std::string method;
  std::optional<closed_form::MinSupportedCase> min_supported_case;
  std::vector<std::size_t> permutation;  // canonical group order used by a closed form
  std::size_t best_restart = 0;
  std::vector<double> restart_criteria;
};

/// Maximizes a criterion by vertex exchange: weights are optimized on the
/// product of simplices, the dose with the largest directional derivative is
/// added, support points are moved locally, and near-duplicate or negligible
/// points are removed, until no dose improves the criterion. The best of
/// `seeds` followed by `settings.restarts` random starts is returned.
/// Throws NumericalError when every start is singular.
OptimizationResult maximize(const Criterion& criterion, const OptimizerSettings& settings,
                            std::span<const Design> seeds = {},
                            const std::optional<closed_form::SupportBound>& bound = std::nullopt);

struct WeightResult {
  Design design;
  double criterion = 0.0;
  std::vector<double> trace;
};

/// Optimal weights (group weights and lambda jointly) on a fixed support.
/// Throws RankDeficiencyError when a group repeats a dose or, for the D
/// criterion, when the support cannot identify every parameter.
WeightResult weight_optimize(const Criterion& criterion, const Design& support, std::size_t iterations = 500);

/// Locally D-optimal design for one model: explicit designs where available
/// (certified before being returned), otherwise the numerical optimizer.
OptimizationResult locally_optimal(const ModelSpec& spec, const OptimizerSettings& settings);

/// Builds a compound-criterion candidate with its locally D-optimal reference.
Candidate make_candidate(std::string id, const ModelSpec& spec, double prior, const OptimizerSettings& settings);

}  // namespace doseopt

#endif  // DOSEOPT_OPTIMIZE_HPP
