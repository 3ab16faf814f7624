#include "doseopt/model.hpp"

#include <cmath>
#include <sstream>

#include "doseopt/errors.hpp"

namespace doseopt {

namespace {

constexpr double kMaxExponent = 700.0;
// Relative slack on dmax so that x * dmax / dmax round trips stay admissible.
constexpr double kUpperSlack = 1e-12;

void check_group_and_dose(const ModelSpec& spec, std::size_t group, double dose) {
  if (group >= spec.n_groups()) {
    std::ostringstream msg;
    msg << "group index " << group << " out of range (M = " << spec.n_groups() << ")";
    throw DomainError(msg.str());
  }
  const double upper = spec.dmax[group];
  if (!(dose >= 0.0) || dose > upper * (1.0 + kUpperSlack)) {
    std::ostringstream msg;
    msg << "dose " << dose << " outside design space [0, " << upper << "] of group " << group;
    throw DomainError(msg.str());
  }
}

bool positive_finite(double x) { return std::isfinite(x) && x > 0.0; }

}  // namespace

bool ModelFamily::is_emax_shape() const {
  return kind == Family::Emax || (kind == Family::SigmoidEmax && gamma == 1.0);
}

std::string ModelFamily::name() const {
  switch (kind) {
    case Family::Emax: return "emax";
    case Family::SigmoidEmax: return "sigmoid_emax";
    case Family::LinearInLog: return "linlog";
    case Family::Exponential: return "exponential";
  }
  return "unknown";
}

std::string sharing_name(Sharing sharing) {
  return sharing == Sharing::Location ? "location" : "location_scale";
}

ShapeValue shape(const ModelFamily& family, double dose, double ed) {
  switch (family.kind) {
    case Family::SigmoidEmax:
      if (family.gamma != 1.0) {
        if (dose == 0.0) return {0.0, 0.0};
        const double t = std::pow(dose / ed, family.gamma);
        if (t > 1.0) {
          const double inv = 1.0 / t;
          return {1.0 / (1.0 + inv), -(family.gamma / ed) / (t + 2.0 + inv)};
        }
        const double denom = 1.0 + t;
        return {t / denom, -(family.gamma / ed) * t / (denom * denom)};
      }
      [[fallthrough]];
    case Family::Emax: {
      const double denom = ed + dose;
      return {dose / denom, -dose / (denom * denom)};
    }
    case Family::LinearInLog:
      return {std::log1p(dose / ed), -dose / (ed * (dose + ed))};
    case Family::Exponential: {
      const double a = dose / ed;
      if (a > kMaxExponent) {
        std::ostringstream msg;
        msg << "exponential model: dose/ed = " << a << " exceeds " << kMaxExponent;
        throw DomainError(msg.str());
      }
      // d/ded (exp(a) - 1) = -(a / ed) exp(a), evaluated as exp(a + log(a / ed)).
      const double d_ed = a == 0.0 ? 0.0 : -std::exp(a + std::log(a / ed));
      return {std::expm1(a), d_ed};
    }
  }
  return {0.0, 0.0};
}

double ModelSpec::ed(std::size_t group) const { return theta_group.at(group).back(); }

double ModelSpec::scaled_ed(std::size_t group) const { return ed(group) / dmax.at(group); }

double ModelSpec::variance_ratio() const {
  if (n_groups() != 2) throw SpecError("variance ratio requires exactly two groups");
  return sigma2[0] / sigma2[1];
}

void ModelSpec::validate() const {
  const std::size_t M = dmax.size();
  if (M == 0) throw SpecError("dmax: at least one group required");
  if (family.kind == Family::SigmoidEmax && !positive_finite(family.gamma)) {
    throw SpecError("gamma: must be positive");
  }
  if (theta_shared.size() != p()) {
    std::ostringstream msg;
    msg << "theta_shared: expected " << p() << " values for sharing '" << sharing_name(sharing)
        << "', got " << theta_shared.size();
    throw SpecError(msg.str());
  }
  for (double v : theta_shared) {
    if (!std::isfinite(v)) throw SpecError("theta_shared: values must be finite");
  }
  if (theta_group.size() != M) throw SpecError("theta_group: one block per group required");
  if (sigma2.size() != M) throw SpecError("sigma2: one variance per group required");
  for (std::size_t i = 0; i < M; ++i) {
    if (theta_group[i].size() != q()) {
      std::ostringstream msg;
      msg << "theta_group[" << i << "]: expected " << q() << " values, got " << theta_group[i].size();
      throw SpecError(msg.str());
    }
    for (double v : theta_group[i]) {
      if (!std::isfinite(v)) throw SpecError("theta_group: values must be finite");
    }
    if (!(theta_group[i].back() > 0.0)) {
      std::ostringstream msg;
      msg << "theta_group[" << i << "]: ED-type parameter must be positive";
      throw SpecError(msg.str());
    }
    if (!positive_finite(sigma2[i])) throw SpecError("sigma2: variances must be positive");
    if (!positive_finite(dmax[i])) throw SpecError("dmax: must be positive");
  }
}

Eigen::VectorXd ModelSpec::flat_parameters() const {
  Eigen::VectorXd theta(m());
  std::size_t k = 0;
  for (double v : theta_shared) theta[k++] = v;
  for (const auto& block : theta_group) {
    for (double v : block) theta[k++] = v;
  }
  return theta;
}

ModelSpec ModelSpec::with_parameters(const Eigen::VectorXd& theta) const {
  if (static_cast<std::size_t>(theta.size()) != m()) throw SpecError("parameter vector has wrong length");
  ModelSpec out = *this;
  std::size_t k = 0;
  for (double& v : out.theta_shared) v = theta[k++];
  for (auto& block : out.theta_group) {
    for (double& v : block) v = theta[k++];
  }
  return out;
}

double eval_mean(const ModelSpec& spec, std::size_t group, double dose) {
  check_group_and_dose(spec, group, dose);
  const auto& block = spec.theta_group[group];
  const ShapeValue f0 = shape(spec.family, dose, block.back());
  if (spec.sharing == Sharing::Location) return spec.theta_shared[0] + block[0] * f0.value;
  return spec.theta_shared[0] + spec.theta_shared[1] * f0.value;
}

Eigen::VectorXd local_gradient(const ModelSpec& spec, std::size_t group, double dose) {
  check_group_and_dose(spec, group, dose);
  const auto& block = spec.theta_group[group];
  const ShapeValue f0 = shape(spec.family, dose, block.back());
  Eigen::VectorXd g(3);
  if (spec.sharing == Sharing::Location) {
    g << 1.0, f0.value, block[0] * f0.d_ed;
  } else {
    g << 1.0, f0.value, spec.theta_shared[1] * f0.d_ed;
  }
  return g;
}

Eigen::VectorXd gradient(const ModelSpec& spec, std::size_t group, double dose) {
  const Eigen::VectorXd g = local_gradient(spec, group, dose);
  const double inv_sigma = 1.0 / std::sqrt(spec.sigma2[group]);
  const std::size_t p = spec.p();
  const std::size_t q = spec.q();
  Eigen::VectorXd h = Eigen::VectorXd::Zero(spec.m());
  h.head(p) = inv_sigma * g.head(p);
  h.segment(spec.block_offset(group), q) = inv_sigma * g.tail(q);
  return h;
}

UnitRescaling rescale_to_unit(const ModelSpec& spec) {
  UnitRescaling out{spec, spec.dmax};
  for (std::size_t i = 0; i < spec.n_groups(); ++i) {
    out.spec.theta_group[i].back() /= spec.dmax[i];
    out.spec.dmax[i] = 1.0;
  }
  return out;
}

ModelSpec single_group(const ModelSpec& spec, std::size_t group) {
  if (group >= spec.n_groups()) throw DomainError("group index out of range");
  ModelSpec out;
  out.family = spec.family;
  out.sharing = spec.sharing;
  out.theta_shared = spec.theta_shared;
  out.theta_group = {spec.theta_group[group]};
  out.sigma2 = {spec.sigma2[group]};
  out.dmax = {spec.dmax[group]};
  return out;
}

}  // namespace doseopt
