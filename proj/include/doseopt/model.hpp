#ifndef DOSEOPT_MODEL_HPP
#define DOSEOPT_MODEL_HPP

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace doseopt {

enum class Family { Emax, SigmoidEmax, LinearInLog, Exponential };

/// Dose-response shape f0. The Hill coefficient is only meaningful for
/// SigmoidEmax and is held fixed (never estimated).
struct ModelFamily {
  Family kind = Family::Emax;
  double gamma = 1.0;

  static ModelFamily emax() { return {Family::Emax, 1.0}; }
  static ModelFamily sigmoid_emax(double gamma) { return {Family::SigmoidEmax, gamma}; }
  static ModelFamily linear_in_log() { return {Family::LinearInLog, 1.0}; }
  static ModelFamily exponential() { return {Family::Exponential, 1.0}; }

  /// SigmoidEmax with gamma == 1 is the Emax curve.
  bool is_emax_shape() const;
  std::string name() const;
};

/// Which parameters are common to all groups.
///  - Location:      f = theta1 + s_i * f0(d, e_i)        p = 1, q = 2 (s_i, e_i)
///  - LocationScale: f = t1 + t2 * f0(d, e_i)              p = 2, q = 1 (e_i)
enum class Sharing { Location, LocationScale };

std::string sharing_name(Sharing sharing);

/// Value of f0 and its derivative with respect to the ED-type parameter.
struct ShapeValue {
  double value;
  double d_ed;
};

/// Evaluates f0(dose, ed). Throws DomainError for the exponential model when
/// dose/ed exceeds 700.
ShapeValue shape(const ModelFamily& family, double dose, double ed);

/// One dose-response family with a parameter-sharing pattern, fixed parameter
/// values for M groups, error variances and design-space upper bounds.
///
/// Per-group parameter block layout:
///  - Location:      theta_group[i] = {scale_i, ed_i}
///  - LocationScale: theta_group[i] = {ed_i}
struct ModelSpec {
  ModelFamily family;
  Sharing sharing = Sharing::LocationScale;
  std::vector<double> theta_shared;
  std::vector<std::vector<double>> theta_group;
  std::vector<double> sigma2;
  std::vector<double> dmax;

  std::size_t n_groups() const { return dmax.size(); }
  std::size_t p() const { return sharing == Sharing::Location ? 1 : 2; }
  std::size_t q() const { return sharing == Sharing::Location ? 2 : 1; }
  std::size_t m() const { return p() + q() * n_groups(); }

  /// ED-type parameter of a group (last entry of its block).
  double ed(std::size_t group) const;
  /// ED-type parameter relative to the group's dmax.
  double scaled_ed(std::size_t group) const;
  /// sigma2[0] / sigma2[1]; requires two groups.
  double variance_ratio() const;
  /// Offset of the group's block in the flattened parameter vector.
  std::size_t block_offset(std::size_t group) const { return p() + q() * group; }

  /// Throws SpecError naming the first violated invariant.
  void validate() const;

  Eigen::VectorXd flat_parameters() const;
  ModelSpec with_parameters(const Eigen::VectorXd& theta) const;
};

/// Mean response f(d, theta1, theta2_i).
double eval_mean(const ModelSpec& spec, std::size_t group, double dose);

/// Gradient of the mean with respect to (shared block, own group block),
/// length p + q, not scaled by sigma.
Eigen::VectorXd local_gradient(const ModelSpec& spec, std::size_t group, double dose);

/// h_i(d): local gradient divided by sigma_i and embedded in R^m with zeros in
/// every other group's block.
Eigen::VectorXd gradient(const ModelSpec& spec, std::size_t group, double dose);

/// The spec with every design space mapped onto [0, 1]. Doses transform as
/// x = d / dmax_i and ED-type parameters as e_i / dmax_i.
struct UnitRescaling {
  ModelSpec spec;
  std::vector<double> factors;

  double to_unit(std::size_t group, double dose) const { return dose / factors.at(group); }
  double from_unit(std::size_t group, double x) const { return x * factors.at(group); }
};

UnitRescaling rescale_to_unit(const ModelSpec& spec);

/// The one-group model of a single group, keeping its variance and dose range.
ModelSpec single_group(const ModelSpec& spec, std::size_t group);

}  // namespace doseopt

#endif  // DOSEOPT_MODEL_HPP
