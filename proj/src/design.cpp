#include "doseopt/design.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "doseopt/errors.hpp"

namespace doseopt {

namespace {

constexpr double kSumTol = 1e-12;

double sum(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

std::size_t Design::support_size() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.size();
  return n;
}

void Design::validate(std::span<const double> dmax) const {
  const std::size_t M = groups.size();
  if (lambda.size() != M) throw SpecError("design: lambda must have one entry per group");
  if (dmax.size() != M) throw SpecError("design: number of groups does not match the model");
  for (double l : lambda) {
    if (!(l >= 0.0)) throw SpecError("design: lambda entries must be nonnegative");
  }
  if (std::abs(sum(lambda) - 1.0) > kSumTol) throw SpecError("design: lambda must sum to 1");
  for (std::size_t i = 0; i < M; ++i) {
    const auto& g = groups[i];
    std::ostringstream where;
    where << "design: group " << i + 1 << ": ";
    if (g.points.size() != g.weights.size()) throw SpecError(where.str() + "points and weights differ in length");
    if (lambda[i] == 0.0) {
      if (!g.empty()) throw SpecError(where.str() + "zero allocation requires an empty support");
      continue;
    }
    if (g.empty()) throw SpecError(where.str() + "positive allocation requires a support");
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (!(g.weights[j] > 0.0)) throw SpecError(where.str() + "weights must be positive");
      if (!(g.points[j] >= 0.0) || g.points[j] > dmax[i] * (1.0 + 1e-12)) {
        throw SpecError(where.str() + "dose outside the design space");
      }
      if (j > 0 && !(g.points[j] > g.points[j - 1])) {
        throw SpecError(where.str() + "points must be strictly increasing");
      }
    }
    if (std::abs(sum(g.weights) - 1.0) > kSumTol) throw SpecError(where.str() + "weights must sum to 1");
  }
}

std::vector<Atom> to_atoms(const Design& design) {
  std::vector<Atom> atoms;
  for (std::size_t i = 0; i < design.groups.size(); ++i) {
    const auto& g = design.groups[i];
    for (std::size_t j = 0; j < g.size(); ++j) {
      atoms.push_back({i, g.points[j], design.lambda[i] * g.weights[j]});
    }
  }
  return atoms;
}

Design from_atoms(std::span<const Atom> atoms, std::size_t n_groups) {
  Design d;
  d.groups.resize(n_groups);
  d.lambda.assign(n_groups, 0.0);
  double total = 0.0;
  for (const auto& a : atoms) {
    if (a.weight <= 0.0) continue;
    if (a.group >= n_groups) throw DomainError("atom group index out of range");
    d.lambda[a.group] += a.weight;
    total += a.weight;
  }
  if (!(total > 0.0)) throw SpecError("design: no positive mass");
  for (std::size_t i = 0; i < n_groups; ++i) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& a : atoms) {
      if (a.group == i && a.weight > 0.0) pts.emplace_back(a.dose, a.weight / d.lambda[i]);
    }
    std::sort(pts.begin(), pts.end());
    for (const auto& [x, w] : pts) {
      d.groups[i].points.push_back(x);
      d.groups[i].weights.push_back(w);
    }
    d.lambda[i] /= total;
  }
  return d;
}

Design normalized(const Design& design, std::span<const double> dmax, double merge_tol) {
  const std::size_t M = design.n_groups();
  Design out;
  out.groups.resize(M);
  out.lambda = design.lambda;
  const double ltot = sum(out.lambda);
  if (!(ltot > 0.0)) throw SpecError("design: lambda has no positive mass");
  for (double& l : out.lambda) l /= ltot;
  for (std::size_t i = 0; i < M; ++i) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t j = 0; j < design.groups[i].size(); ++j) {
      if (design.groups[i].weights[j] > 0.0) {
        pts.emplace_back(design.groups[i].points[j], design.groups[i].weights[j]);
      }
    }
    std::sort(pts.begin(), pts.end());
    auto& g = out.groups[i];
    const double tol = merge_tol * dmax[i];
    for (const auto& [x, w] : pts) {
      if (!g.empty() && x - g.points.back() <= tol) {
        const double wsum = g.weights.back() + w;
        g.points.back() = (g.points.back() * g.weights.back() + x * w) / wsum;
        g.weights.back() = wsum;
      } else {
        g.points.push_back(x);
        g.weights.push_back(w);
      }
    }
    const double wtot = sum(g.weights);
    for (double& w : g.weights) w /= wtot;
    if (g.empty() || out.lambda[i] == 0.0) {
      g = GroupDesign{};
      out.lambda[i] = 0.0;
    }
  }
  return out;
}

Design scale_doses(const Design& design, std::span<const double> factors) {
  Design out = design;
  for (std::size_t i = 0; i < out.groups.size(); ++i) {
    for (double& x : out.groups[i].points) x *= factors[i];
  }
  return out;
}

double log_det_criterion(const Eigen::MatrixXd& matrix) {
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();
  if (matrix.rows() == 0) return 0.0;
  // The eigenvalue-ratio test runs on the diagonally equilibrated matrix so
  // that it does not depend on the units of the parameters.
  const Eigen::VectorXd diag = matrix.diagonal();
  if (!(diag.minCoeff() > 0.0)) return neg_inf;
  const Eigen::VectorXd inv_sqrt = diag.array().rsqrt();
  const Eigen::MatrixXd scaled = inv_sqrt.asDiagonal() * (0.5 * (matrix + matrix.transpose())) * inv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scaled, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) return neg_inf;
  const Eigen::VectorXd& ev = eig.eigenvalues();
  const double largest = ev.maxCoeff();
  const double smallest = ev.minCoeff();
  if (!(largest > 0.0) || !(smallest / largest >= kSingularEigenRatio)) return neg_inf;
  return ev.array().log().sum() + diag.array().log().sum();
}

Eigen::MatrixXd group_information(const ModelSpec& spec, const GroupDesign& group_design, std::size_t group) {
  const auto m = static_cast<Eigen::Index>(spec.m());
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t j = 0; j < group_design.size(); ++j) {
    const Eigen::VectorXd h = gradient(spec, group, group_design.points[j]);
    info.selfadjointView<Eigen::Lower>().rankUpdate(h, group_design.weights[j]);
  }
  return info.selfadjointView<Eigen::Lower>();
}

InfoMatrix information_matrix(const ModelSpec& spec, const Design& design) {
  if (design.n_groups() != spec.n_groups()) throw SpecError("design: number of groups does not match the model");
  const auto m = static_cast<Eigen::Index>(spec.m());
  InfoMatrix out;
  out.matrix = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t i = 0; i < design.n_groups(); ++i) {
    if (design.lambda[i] == 0.0) continue;
    out.matrix += design.lambda[i] * group_information(spec, design.groups[i], i);
  }
  out.logdet = log_det_criterion(out.matrix);
  return out;
}

double d_efficiency(const ModelSpec& spec, const Design& design, const Design& reference) {
  const InfoMatrix ref = information_matrix(spec, reference);
  if (ref.singular()) throw SingularMatrixError("efficiency: reference design has singular information");
  const InfoMatrix info = information_matrix(spec, design);
  if (info.singular()) return 0.0;
  return std::exp((info.logdet - ref.logdet) / static_cast<double>(spec.m()));
}

Candidate Candidate::make(std::string id, ModelSpec spec, double prior, Design reference) {
  const InfoMatrix ref = information_matrix(spec, reference);
  if (ref.singular()) {
    throw SingularMatrixError("candidate '" + id + "': reference design has singular information");
  }
  return Candidate{std::move(id), std::move(spec), prior, std::move(reference), ref.logdet};
}

double compound_criterion(std::span<const Candidate> candidates, const Design& design) {
  double prior_sum = 0.0;
  for (const auto& c : candidates) prior_sum += c.prior;
  if (candidates.empty() || std::abs(prior_sum - 1.0) > kSumTol) {
    throw SpecError("compound criterion: priors must sum to 1");
  }
  double value = 0.0;
  for (const auto& c : candidates) {
    if (c.prior == 0.0) continue;
    const InfoMatrix info = information_matrix(c.spec, design);
    if (info.singular()) continue;
    value += c.prior * std::exp((info.logdet - c.reference_logdet) / static_cast<double>(c.spec.m()));
  }
  return value;
}

std::vector<long> largest_remainder(long total, std::span<const double> weights, std::span<const long> minimum) {
  const std::size_t n = weights.size();
  if (minimum.size() != n) throw SpecError("apportion: minimum counts do not match weights");
  const long floor_sum = std::accumulate(minimum.begin(), minimum.end(), 0L);
  if (floor_sum > total) throw SpecError("n_total: too small to give every support point one subject");
  const double wsum = sum(weights);
  std::vector<double> quota(n);
  std::vector<long> count(n);
  for (std::size_t j = 0; j < n; ++j) {
    quota[j] = wsum > 0.0 ? static_cast<double>(total) * weights[j] / wsum : 0.0;
    count[j] = std::max(static_cast<long>(std::floor(quota[j])), minimum[j]);
  }
  long assigned = std::accumulate(count.begin(), count.end(), 0L);
  while (assigned > total) {
    std::size_t best = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (count[j] <= minimum[j]) continue;
      if (best == n || count[j] - quota[j] > count[best] - quota[best]) best = j;
    }
    --count[best];
    --assigned;
  }
  while (assigned < total) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < n; ++j) {
      if (quota[j] - count[j] > quota[best] - count[best]) best = j;
    }
    ++count[best];
    ++assigned;
  }
  return count;
}

ExactDesign apportion(const Design& design, long n) {
  const std::size_t M = design.n_groups();
  std::vector<long> group_min(M);
  for (std::size_t i = 0; i < M; ++i) group_min[i] = static_cast<long>(design.groups[i].size());
  const long needed = std::accumulate(group_min.begin(), group_min.end(), 0L);
  if (n < needed) {
    std::ostringstream msg;
    msg << "n_total: " << n << " is smaller than the number of support points (" << needed << ")";
    throw SpecError(msg.str());
  }
  ExactDesign out;
  out.total = n;
  out.group_totals = largest_remainder(n, design.lambda, group_min);
  out.counts.resize(M);
  for (std::size_t i = 0; i < M; ++i) {
    const auto& g = design.groups[i];
    if (g.empty()) continue;
    const std::vector<long> ones(g.size(), 1L);
    out.counts[i] = largest_remainder(out.group_totals[i], g.weights, ones);
  }
  return out;
}

}  // namespace doseopt
