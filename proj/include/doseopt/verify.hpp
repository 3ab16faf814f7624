#ifndef DOSEOPT_VERIFY_HPP
#define DOSEOPT_VERIFY_HPP

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "doseopt/criterion.hpp"
#include "doseopt/design.hpp"
#include "doseopt/model.hpp"

namespace doseopt {

struct ScanResult {
  double value;
  double argmax;
  std::size_t refinement_iterations = 0;
};

/// Maximum of f over [lo, hi]: evaluates f at the sorted sample points, then
/// refines every local maximum by golden-section search inside the
/// neighbouring sample interval to an absolute dose tolerance.
ScanResult scan_maximum(const std::function<double(double)>& f, std::span<const double> samples, double tolerance);

/// n equally spaced points on [0, upper].
std::vector<double> uniform_grid(double upper, std::size_t n);

struct GroupCertificate {
  double max_value = 0.0;
  double argmax_dose = 0.0;
  std::vector<double> support_values;
};

/// Equivalence-theorem check. Values are kappa for the D criterion (bound m)
/// and the normalized compound derivative for the compound criterion
/// (bound m = 1).
struct OptimalityCertificate {
  bool compound = false;
  double m = 0.0;
  double tol = 0.0;
  std::size_t grid_density = 0;
  std::size_t refinement_iterations = 0;
  bool pass = false;
  std::vector<GroupCertificate> groups;

  double max_value() const;
  /// Largest |value - m| over support points.
  double support_gap() const;
};

struct CertifyOptions {
  double tol = 1e-6;
  std::size_t grid_density = 2001;
};

/// kappa_i(d) = h_i(d)^T M^{-1}(xi) h_i(d); throws SingularMatrixError.
double kappa(const ModelSpec& spec, const Design& design, std::size_t group, double dose);

/// Scans every group's design space on a uniform grid (support points are
/// added as extra samples), refines local maxima to 1e-10 * dmax and applies
/// the pass rule: max <= m (1 + tol) and |value - m| <= m tol on the support.
OptimalityCertificate certify(const Criterion& criterion, const Design& design, const CertifyOptions& options = {});
OptimalityCertificate certify(const ModelSpec& spec, const Design& design, const CertifyOptions& options = {});

struct KappaSample {
  std::size_t group;
  double dose;
  double kappa;
  double m;
};

/// Sensitivity curve samples on a uniform grid per group.
std::vector<KappaSample> kappa_curve(const Criterion& criterion, const Design& design, std::size_t points_per_group);

}  // namespace doseopt

#endif  // DOSEOPT_VERIFY_HPP
