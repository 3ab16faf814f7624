#include "doseopt/closed_form.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "doseopt/errors.hpp"

namespace doseopt::closed_form {

namespace {

// Doses at or below this fraction of dmax count as placebo.
constexpr double kPlaceboTol = 1e-12;

GroupDesign equal_weights(std::vector<double> points) {
  std::sort(points.begin(), points.end());
  const double w = 1.0 / static_cast<double>(points.size());
  return GroupDesign{points, std::vector<double>(points.size(), w)};
}

// log of g(theta, x) for the exponential model on [0, 1], written so that
// the large factor exp(2x/theta) is kept in log form.
double log_g_exponential(double theta, double x) {
  const double inner = std::exp(-x / theta) + (x - 1.0) - x * std::exp(-1.0 / theta);
  return 2.0 * x / theta + 2.0 * std::log(std::abs(inner));
}

double log_g_linear_in_log(double theta, double x) {
  const double l1 = std::log1p(1.0 / theta);
  const double lx = std::log1p(x / theta);
  const double bracket = x / ((x + theta) * lx) - 1.0 / ((1.0 + theta) * l1);
  return 2.0 * std::log1p(theta) + 2.0 * std::log(l1 * lx) + 2.0 * std::log(std::abs(bracket));
}

void require_family_with_closed_form(const ModelFamily& family, const char* what) {
  if (family.kind == Family::SigmoidEmax && family.gamma != 1.0) {
    throw SpecError(std::string(what) + ": no closed form for sigmoid Emax with gamma != 1");
  }
}

}  // namespace

double emax_interior_point(double ed, double dmax) { return ed * dmax / (dmax + 2.0 * ed); }

double exponential_interior_point(double ed, double dmax) {
  // ((dmax - ed) e^a + ed) / (e^a - 1) with a = dmax / ed, rearranged to avoid overflow.
  return (dmax - ed) + dmax / std::expm1(dmax / ed);
}

double linear_in_log_interior_point(double ed, double dmax) {
  return ((dmax + ed) * ed * std::log1p(dmax / ed) - ed * dmax) / dmax;
}

double interior_point(const ModelFamily& family, double ed, double dmax) {
  require_family_with_closed_form(family, "interior point");
  switch (family.kind) {
    case Family::Emax:
    case Family::SigmoidEmax: return emax_interior_point(ed, dmax);
    case Family::Exponential: return exponential_interior_point(ed, dmax);
    case Family::LinearInLog: return linear_in_log_interior_point(ed, dmax);
  }
  return 0.0;
}

std::size_t min_variance_group(const ModelSpec& spec) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < spec.sigma2.size(); ++i) {
    if (spec.sigma2[i] < spec.sigma2[best]) best = i;
  }
  return best;
}

SupportBound support_bound(const ModelSpec& spec) {
  const std::size_t M = spec.n_groups();
  SupportBound b;
  b.requires_dmax.assign(M, true);
  b.requires_placebo.assign(M, false);
  if (spec.family.kind == Family::Exponential) {
    b.max_points.assign(M, 3);
    b.total = 3 * M;
    return b;
  }
  b.max_points.assign(M, 2);
  const std::size_t low = min_variance_group(spec);
  b.max_points[low] = 3;
  b.requires_placebo[low] = true;
  b.total = 2 * M + 1;
  return b;
}

Design compose_shared_location(const ModelSpec& spec, std::span<const std::array<double, 2>> single_model_interior) {
  if (spec.sharing != Sharing::Location) throw SpecError("sharing: composition requires the common-location pattern");
  const std::size_t M = spec.n_groups();
  if (single_model_interior.size() != M) throw SpecError("composition: one single-model design per group required");
  const std::size_t target = min_variance_group(spec);
  const double m = static_cast<double>(spec.m());
  Design d;
  d.groups.resize(M);
  d.lambda.assign(M, 2.0 / m);
  for (std::size_t i = 0; i < M; ++i) {
    std::vector<double> pts(single_model_interior[i].begin(), single_model_interior[i].end());
    if (i == target) pts.insert(pts.begin(), 0.0);
    d.groups[i] = equal_weights(std::move(pts));
  }
  d.lambda[target] = 3.0 / m;
  return d;
}

Design shared_location_optimal(const ModelSpec& spec) {
  spec.validate();
  if (spec.sharing != Sharing::Location) throw SpecError("sharing: expected the common-location pattern");
  require_family_with_closed_form(spec.family, "shared_location_optimal");
  std::vector<std::array<double, 2>> interior(spec.n_groups());
  for (std::size_t i = 0; i < spec.n_groups(); ++i) {
    interior[i] = {interior_point(spec.family, spec.ed(i), spec.dmax[i]), spec.dmax[i]};
  }
  return compose_shared_location(spec, interior);
}

std::string case_name(MinSupportedCase c) {
  switch (c) {
    case MinSupportedCase::A: return "A";
    case MinSupportedCase::B: return "B";
    case MinSupportedCase::C: return "C";
  }
  return "?";
}

CanonicalPair canonical_pair(const ModelSpec& spec) {
  spec.validate();
  if (spec.n_groups() != 2) throw SpecError("minimally supported designs require exactly two groups");
  if (spec.sharing != Sharing::LocationScale) {
    throw SpecError("sharing: minimally supported designs require common location and scale");
  }
  const double e0 = spec.scaled_ed(0);
  const double e1 = spec.scaled_ed(1);
  if (e0 == e1) throw SpecError("theta_group: scaled ED parameters must differ between groups");
  CanonicalPair pair;
  if (e1 < e0) pair.order = {1, 0};
  pair.low_ed = std::min(e0, e1);
  pair.high_ed = std::max(e0, e1);
  if (!(pair.high_ed < 1.0)) throw SpecError("theta_group: scaled ED parameters must lie below 1");
  pair.ratio = spec.sigma2[pair.order[0]] / spec.sigma2[pair.order[1]];
  return pair;
}

double case_threshold(const ModelFamily& family, double low_ed, double high_ed) {
  require_family_with_closed_form(family, "case threshold");
  switch (family.kind) {
    case Family::Emax:
    case Family::SigmoidEmax: return std::pow((1.0 + high_ed) / (1.0 + low_ed), 6.0);
    case Family::Exponential: {
      const double xl = exponential_interior_point(low_ed, 1.0);
      const double xh = exponential_interior_point(high_ed, 1.0);
      return std::exp(log_g_exponential(low_ed, xl) - log_g_exponential(high_ed, xh));
    }
    case Family::LinearInLog: {
      const double xl = linear_in_log_interior_point(low_ed, 1.0);
      const double xh = linear_in_log_interior_point(high_ed, 1.0);
      return std::exp(log_g_linear_in_log(low_ed, xl) - log_g_linear_in_log(high_ed, xh));
    }
  }
  return 1.0;
}

MinSupportedCase select_case(double ratio, double threshold) {
  if (ratio <= 1.0) return MinSupportedCase::A;
  if (ratio <= threshold) return MinSupportedCase::B;
  return MinSupportedCase::C;
}

Design min_supported_design(const ModelSpec& spec, MinSupportedCase which) {
  const CanonicalPair pair = canonical_pair(spec);
  require_family_with_closed_form(spec.family, "min_supported_design");
  const bool emax = spec.family.is_emax_shape();
  const double x_low = interior_point(spec.family, pair.low_ed, 1.0);
  const double x_high = interior_point(spec.family, pair.high_ed, 1.0);
  const double y_star = emax ? pair.high_ed : 1.0;
  const double z_star = emax ? pair.low_ed : 1.0;

  GroupDesign low;
  GroupDesign high;
  double lambda_low = 0.0;
  switch (which) {
    case MinSupportedCase::A:
      low = equal_weights({0.0, x_low, 1.0});
      high = equal_weights({y_star});
      lambda_low = 0.75;
      break;
    case MinSupportedCase::B:
      low = equal_weights({x_low, 1.0});
      high = equal_weights({0.0, y_star});
      lambda_low = 0.5;
      break;
    case MinSupportedCase::C:
      low = equal_weights({z_star});
      high = equal_weights({0.0, x_high, 1.0});
      lambda_low = 0.25;
      break;
  }
  Design d;
  d.groups.resize(2);
  d.lambda.resize(2);
  d.groups[pair.order[0]] = low;
  d.groups[pair.order[1]] = high;
  d.lambda[pair.order[0]] = lambda_low;
  d.lambda[pair.order[1]] = 1.0 - lambda_low;
  return scale_doses(d, spec.dmax);
}

MinSupportedResult min_supported_optimal(const ModelSpec& spec) {
  MinSupportedResult out;
  out.pair = canonical_pair(spec);
  require_family_with_closed_form(spec.family, "min_supported_optimal");
  out.threshold = case_threshold(spec.family, out.pair.low_ed, out.pair.high_ed);
  out.which = select_case(out.pair.ratio, out.threshold);
  out.design = min_supported_design(spec, out.which);
  return out;
}

GlobalCondition emax_condition(MinSupportedCase which, double low_ed, double high_ed, double ratio) {
  const double a = low_ed;
  const double b = high_ed;
  const double r = ratio;
  double slack = 0.0;
  switch (which) {
    case MinSupportedCase::A: {
      const double rhs = (r * 6.0 * a * (a + 1.0) * (2.0 * a + 1.0) * (2.0 * a + 1.0) - (1.0 - r)) /
                         (6.0 + 2.0 * r * a * (1.0 + 2.0 * a));
      slack = b - rhs;
      break;
    }
    case MinSupportedCase::B: {
      const double rhs = (a * a * (1.0 + 2.0 * a) * (1.0 + 2.0 * a) +
                          r * (1.0 + a) * (1.0 + a) * (1.0 + 4.0 * a + 20.0 * a * a) - 1.0) /
                         (6.0 + 2.0 * a * (1.0 + 2.0 * a));
      slack = b - rhs;
      break;
    }
    case MinSupportedCase::C: {
      const double s = 1.0 / r;
      const double rhs = (s * 6.0 * b * (b + 1.0) * (2.0 * b + 1.0) * (2.0 * b + 1.0) - (1.0 - s)) /
                         (6.0 + 2.0 * s * b * (1.0 + 2.0 * b));
      slack = a - rhs;
      break;
    }
  }
  return {slack >= 0.0, slack};
}

GlobalCondition emax_global_conditions(const ModelSpec& spec, MinSupportedCase which) {
  if (!spec.family.is_emax_shape()) throw SpecError("family: optimality conditions are available for Emax only");
  const CanonicalPair pair = canonical_pair(spec);
  return emax_condition(which, pair.low_ed, pair.high_ed, pair.ratio);
}

Design placebo_shift(const ModelSpec& spec, const Design& eta) {
  return placebo_shift(spec, eta, min_variance_group(spec));
}

Design placebo_shift(const ModelSpec& spec, const Design& eta, std::size_t target) {
  const std::size_t M = eta.n_groups();
  if (M != spec.n_groups()) throw SpecError("design: number of groups does not match the model");
  if (target >= M) throw DomainError("placebo target group out of range");
  if (spec.sigma2[target] > spec.sigma2[min_variance_group(spec)]) {
    throw SpecError("placebo target must be a group with the smallest variance");
  }

  std::vector<double> omega(M, 0.0);
  double moved = 0.0;
  for (std::size_t i = 0; i < M; ++i) {
    const auto& g = eta.groups[i];
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (g.points[j] <= kPlaceboTol * spec.dmax[i]) omega[i] += g.weights[j];
    }
    moved += eta.lambda[i] * omega[i];
  }
  if (moved == 0.0) return eta;

  Design xi;
  xi.groups.resize(M);
  xi.lambda.resize(M);
  for (std::size_t i = 0; i < M; ++i) {
    // eta_i without its placebo mass, renormalized.
    const auto& g = eta.groups[i];
    GroupDesign rest;
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (g.points[j] > kPlaceboTol * spec.dmax[i]) {
        rest.points.push_back(g.points[j]);
        rest.weights.push_back(g.weights[j] / (1.0 - omega[i]));
      }
    }
    xi.groups[i] = std::move(rest);
    xi.lambda[i] = eta.lambda[i] * (1.0 - omega[i]);
  }
  xi.lambda[target] = eta.lambda[target] + (moved - eta.lambda[target] * omega[target]);
  const double omega_star = moved / xi.lambda[target];

  auto& g = xi.groups[target];
  for (double& w : g.weights) w *= (1.0 - omega_star);
  g.points.insert(g.points.begin(), 0.0);
  g.weights.insert(g.weights.begin(), omega_star);
  if (omega_star >= 1.0) g = GroupDesign{{0.0}, {1.0}};
  for (std::size_t i = 0; i < M; ++i) {
    if (xi.lambda[i] <= 0.0) {
      xi.lambda[i] = 0.0;
      xi.groups[i] = GroupDesign{};
    }
  }
  return xi;
}

}  // namespace doseopt::closed_form
