#include "doseopt/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>

#include "doseopt/errors.hpp"

namespace doseopt {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kInvPhi = 0.6180339887498949;
constexpr double kMinAtomWeight = 1e-6;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Small deterministic generator; identical across platforms unlike the
// standard distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  double uniform() {
    state_ = splitmix64(state_);
    return static_cast<double>(state_ >> 11) * 0x1.0p-53;
  }
  std::size_t below(std::size_t n) { return std::min(n - 1, static_cast<std::size_t>(uniform() * static_cast<double>(n))); }

 private:
  std::uint64_t state_;
};

template <class F>
std::pair<double, double> golden_max(F&& f, double a, double b, double tol, std::size_t max_iter = 100) {
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = f(c);
  double fd = f(d);
  for (std::size_t it = 0; it < max_iter && b - a > tol; ++it) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
    }
  }
  return fc >= fd ? std::pair{c, fc} : std::pair{d, fd};
}

void sort_atoms(std::vector<Atom>& atoms) {
  std::sort(atoms.begin(), atoms.end(), [](const Atom& a, const Atom& b) {
    return a.group != b.group ? a.group < b.group : a.dose < b.dose;
  });
}

void renormalize(std::vector<Atom>& atoms) {
  double total = 0.0;
  for (const auto& a : atoms) total += a.weight;
  for (auto& a : atoms) a.weight /= total;
}

void drop_zero(std::vector<Atom>& atoms) {
  std::erase_if(atoms, [](const Atom& a) { return !(a.weight > 0.0); });
}

// Uniform grid plus a geometric grid towards zero, where ED-type parameters
// of steep curves put their support.
std::vector<double> search_grid(double dmax, std::size_t density) {
  std::vector<double> grid = uniform_grid(dmax, density);
  const std::size_t n_geo = std::max<std::size_t>(density / 2, 10);
  const double lo = std::log(dmax * 1e-5);
  const double hi = std::log(dmax);
  for (std::size_t k = 0; k < n_geo; ++k) {
    grid.push_back(std::exp(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n_geo)));
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

class Engine {
 public:
  Engine(const Criterion& criterion, const OptimizerSettings& settings) : crit_(criterion), settings_(settings) {
    for (double d : criterion.dmax()) grids_.push_back(search_grid(d, settings.grid_density));
  }

  double value(const std::vector<Atom>& atoms) const { return crit_.value(atoms); }

  // Multiplicative steps followed by projected Newton steps on the simplex
  // of joint masses. Never decreases the criterion.
  double optimize_weights(std::vector<Atom>& atoms, std::size_t iterations) const {
    drop_zero(atoms);
    renormalize(atoms);
    double current = value(atoms);
    if (current == kNegInf) return current;
    const std::size_t n_mult = std::min<std::size_t>(30, iterations);
    for (std::size_t it = 0; it < iterations; ++it) {
      const WeightDerivatives wd = crit_.weight_derivatives(atoms);
      if (wd.gradient.size() == 0) break;
      const auto n = static_cast<Eigen::Index>(atoms.size());
      Eigen::VectorXd w(n);
      for (Eigen::Index j = 0; j < n; ++j) w[j] = atoms[j].weight;
      const double gw = w.dot(wd.gradient);
      if (!(gw > 0.0)) break;
      const double spread = wd.gradient.maxCoeff() - wd.gradient.minCoeff();
      if (spread <= 1e-13 * gw) break;

      Eigen::VectorXd step;
      if (it < n_mult) {
        step = w.cwiseProduct(wd.gradient) / gw - w;
      } else {
        step = newton_direction(wd, w);
      }
      double t_max = 1.0;
      Eigen::Index blocking = -1;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (step[j] < 0.0 && -w[j] / step[j] < t_max) {
          t_max = -w[j] / step[j];
          blocking = j;
        }
      }
      double t = t_max;
      bool accepted = false;
      std::vector<Atom> trial = atoms;
      for (int bt = 0; bt < 40; ++bt) {
        for (Eigen::Index j = 0; j < n; ++j) trial[j].weight = std::max(0.0, w[j] + t * step[j]);
        if (t == t_max && blocking >= 0) trial[blocking].weight = 0.0;
        const double v = value(trial);
        if (v >= current) {
          accepted = v > current || t == t_max;
          if (accepted) {
            const double gain = v - current;
            atoms = trial;
            current = v;
            drop_zero(atoms);
            renormalize(atoms);
            if (gain <= 1e-15 * std::max(1.0, std::abs(current)) && it >= n_mult && blocking < 0) return current;
          }
          break;
        }
        t *= 0.5;
      }
      if (!accepted) {
        if (it < n_mult) continue;
        break;
      }
    }
    return current;
  }

  // Adds the dose with the largest sensitivity if it exceeds the bound and
  // the line search along the added mass improves the criterion.
  bool exchange(std::vector<Atom>& atoms, double& current, double& max_sensitivity) const {
    Sensitivity s;
    try {
      s = crit_.sensitivity(atoms);
    } catch (const SingularMatrixError&) {
      max_sensitivity = std::numeric_limits<double>::infinity();
      return false;
    }
    std::size_t best_group = 0;
    double best_dose = 0.0;
    double best = kNegInf;
    for (std::size_t i = 0; i < crit_.n_groups(); ++i) {
      std::vector<double> samples = grids_[i];
      for (const auto& a : atoms) {
        if (a.group == i) samples.push_back(a.dose);
      }
      std::sort(samples.begin(), samples.end());
      samples.erase(std::unique(samples.begin(), samples.end()), samples.end());
      const ScanResult r = scan_maximum([&](double d) { return s(i, d); }, samples, 1e-9 * crit_.dmax()[i]);
      if (r.value > best) {
        best = r.value;
        best_group = i;
        best_dose = r.argmax;
      }
    }
    max_sensitivity = best;
    if (!(best > 1.0 + 1e-10)) return false;

    auto mixed = [&](double alpha) {
      std::vector<Atom> trial = atoms;
      for (auto& a : trial) a.weight *= 1.0 - alpha;
      trial.push_back({best_group, best_dose, alpha});
      return trial;
    };
    const auto [alpha, v] = golden_max([&](double a) { return value(mixed(a)); }, 0.0, 1.0, 1e-8);
    if (!(v > current)) return false;
    atoms = mixed(alpha);
    current = v;
    sort_atoms(atoms);
    return true;
  }

  // Moves each support point within the interval between its neighbours.
  void refine_points(std::vector<Atom>& atoms, double& current) const {
    sort_atoms(atoms);
    for (std::size_t j = 0; j < atoms.size(); ++j) {
      const std::size_t g = atoms[j].group;
      const double dmax = crit_.dmax()[g];
      const double lo = (j > 0 && atoms[j - 1].group == g) ? atoms[j - 1].dose : 0.0;
      const double hi = (j + 1 < atoms.size() && atoms[j + 1].group == g) ? atoms[j + 1].dose : dmax;
      if (hi - lo <= 1e-12 * dmax) continue;
      std::vector<Atom> trial = atoms;
      auto f = [&](double x) {
        trial[j].dose = x;
        return value(trial);
      };
      auto [x, v] = golden_max(f, lo, hi, 1e-10 * dmax);
      // Boundary doses are not reachable by golden section.
      for (double edge : {lo, hi}) {
        const double ve = f(edge);
        if (ve > v) {
          x = edge;
          v = ve;
        }
      }
      if (v > current) {
        atoms[j].dose = x;
        current = v;
      }
    }
  }

  // Merges near-duplicate doses and drops negligible masses.
  std::vector<Atom> collapsed(std::vector<Atom> atoms) const {
    sort_atoms(atoms);
    std::vector<Atom> out;
    for (const auto& a : atoms) {
      if (!out.empty() && out.back().group == a.group &&
          a.dose - out.back().dose <= settings_.collapse_tol * crit_.dmax()[a.group]) {
        auto& b = out.back();
        const double w = a.weight + b.weight;
        b.dose = (b.dose * b.weight + a.dose * a.weight) / w;
        b.weight = w;
      } else {
        out.push_back(a);
      }
    }
    std::erase_if(out, [](const Atom& a) { return a.weight < kMinAtomWeight; });
    if (!out.empty()) renormalize(out);
    return out;
  }

  struct RunResult {
    std::vector<Atom> atoms;
    double value = kNegInf;
    std::vector<double> trace;
  };

  RunResult run(std::vector<Atom> atoms) const {
    RunResult r;
    double current = optimize_weights(atoms, settings_.weight_iters);
    if (current == kNegInf) return r;
    r.trace.push_back(current);
    for (std::size_t it = 0; it < settings_.exchange_iters; ++it) {
      const double previous = current;
      double max_sensitivity = 0.0;
      const bool added = exchange(atoms, current, max_sensitivity);
      current = optimize_weights(atoms, settings_.weight_iters);
      refine_points(atoms, current);
      current = optimize_weights(atoms, settings_.weight_iters);

      std::vector<Atom> merged = collapsed(atoms);
      if (merged.size() < atoms.size() && !merged.empty()) {
        double v = optimize_weights(merged, settings_.weight_iters);
        if (v >= current) {
          atoms = std::move(merged);
          current = v;
        }
      }
      r.trace.push_back(current);
      if (!added) break;
      if (current - previous < settings_.convergence_tol && max_sensitivity < 1.0 + 1e-7) break;
    }
    sort_atoms(atoms);
    r.atoms = std::move(atoms);
    r.value = current;
    return r;
  }

  std::vector<Atom> random_start(std::uint64_t seed, const std::optional<closed_form::SupportBound>& bound) const {
    Rng rng(seed);
    const std::size_t M = crit_.n_groups();
    std::size_t m_max = 0;
    for (std::size_t k = 0; k < crit_.n_models(); ++k) m_max = std::max(m_max, crit_.model(k).m());
    std::vector<Atom> atoms;
    for (std::size_t i = 0; i < M; ++i) {
      const double dmax = crit_.dmax()[i];
      const std::size_t cap = bound ? std::max<std::size_t>(bound->max_points[i], 2) : std::max<std::size_t>(m_max, 3);
      const std::size_t k = 2 + rng.below(cap - 1);
      // Stratified: 0 and dmax, then interior doses spread uniformly or
      // logarithmically.
      std::vector<double> pts{0.0, dmax};
      while (pts.size() < k + 1) {
        const double u = rng.uniform();
        pts.push_back(rng.uniform() < 0.5 ? dmax * u : dmax * std::pow(10.0, -4.0 * u));
      }
      for (double d : pts) atoms.push_back({i, std::clamp(d, 0.0, dmax), 1.0});
    }
    renormalize(atoms);
    sort_atoms(atoms);
    return atoms;
  }

 private:
  Eigen::VectorXd newton_direction(const WeightDerivatives& wd, const Eigen::VectorXd& w) const {
    const auto n = w.size();
    const double reg = 1e-10 * std::max(1.0, -wd.hessian.diagonal().sum() / static_cast<double>(n));
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + 1, n + 1);
    kkt.topLeftCorner(n, n) = wd.hessian - reg * Eigen::MatrixXd::Identity(n, n);
    kkt.block(0, n, n, 1).setOnes();
    kkt.block(n, 0, 1, n).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
    rhs.head(n) = -wd.gradient;
    Eigen::VectorXd step = kkt.fullPivLu().solve(rhs).head(n);
    if (!step.allFinite() || wd.gradient.dot(step) <= 0.0) {
      step = wd.gradient.array() - wd.gradient.mean();
      step *= 1e-2 / std::max(1e-300, step.cwiseAbs().maxCoeff());
    }
    return step;
  }

  const Criterion& crit_;
  const OptimizerSettings& settings_;
  std::vector<std::vector<double>> grids_;
};

double certified_value(const Criterion& crit, const Design& d) { return crit.value(d); }

Design snapped_to_bounds(const Design& d, const std::vector<double>& dmax, double tol) {
  Design out = d;
  for (std::size_t i = 0; i < out.n_groups(); ++i) {
    for (double& x : out.groups[i].points) {
      if (x <= tol * dmax[i]) x = 0.0;
      if (x >= (1.0 - tol) * dmax[i]) x = dmax[i];
    }
  }
  return normalized(out, dmax, 0.0);
}

OptimalityCertificate certify_result(const Criterion& crit, const Design& d, const OptimizerSettings& s) {
  return certify(crit, d, CertifyOptions{s.certificate_tol, s.certificate_grid});
}

OptimizationResult closed_result(const Criterion& crit, Design design, const OptimizerSettings& s, std::string method) {
  OptimizationResult r;
  r.design = std::move(design);
  r.criterion = crit.value(r.design);
  r.certificate = certify_result(crit, r.design, s);
  r.converged = r.certificate.pass;
  r.trace = {r.criterion};
  r.method = std::move(method);
  return r;
}

}  // namespace

void OptimizerSettings::validate() const {
  if (restarts == 0) throw SpecError("optimizer.restarts: must be at least 1");
  if (grid_density < 3) throw SpecError("optimizer.grid_density: must be at least 3");
  if (exchange_iters == 0) throw SpecError("optimizer.exchange_iters: must be at least 1");
  if (weight_iters == 0) throw SpecError("optimizer.weight_iters: must be at least 1");
  if (!(collapse_tol > 0.0 && collapse_tol < 0.5)) throw SpecError("optimizer.collapse_tol: must lie in (0, 0.5)");
  if (!(convergence_tol > 0.0)) throw SpecError("optimizer.convergence_tol: must be positive");
  if (!(certificate_tol > 0.0)) throw SpecError("optimizer.certificate_tol: must be positive");
  if (certificate_grid < 3) throw SpecError("optimizer.certificate_grid: must be at least 3");
}

OptimizationResult maximize(const Criterion& criterion, const OptimizerSettings& settings,
                            std::span<const Design> seeds, const std::optional<closed_form::SupportBound>& bound) {
  settings.validate();
  const Engine engine(criterion, settings);
  const std::size_t n_starts = seeds.size() + settings.restarts;

  auto job = [&](std::size_t r) {
    std::vector<Atom> start;
    if (r < seeds.size()) {
      seeds[r].validate(criterion.dmax());
      start = to_atoms(seeds[r]);
    } else {
      start = engine.random_start(settings.seed + (r - seeds.size()), bound);
    }
    return engine.run(std::move(start));
  };

  std::vector<Engine::RunResult> runs(n_starts);
  if (settings.parallel && n_starts > 1) {
    std::vector<std::future<Engine::RunResult>> futures;
    for (std::size_t r = 0; r < n_starts; ++r) futures.push_back(std::async(std::launch::async, job, r));
    for (std::size_t r = 0; r < n_starts; ++r) runs[r] = futures[r].get();
  } else {
    for (std::size_t r = 0; r < n_starts; ++r) runs[r] = job(r);
  }

  OptimizationResult result;
  result.method = "numerical";
  double best = kNegInf;
  std::vector<Design> finals(n_starts);
  for (std::size_t r = 0; r < n_starts; ++r) {
    double v = kNegInf;
    if (!runs[r].atoms.empty()) {
      finals[r] = from_atoms(runs[r].atoms, criterion.n_groups());
      v = certified_value(criterion, finals[r]);
      // Doses within collapse_tol of an end of the interval go to the end,
      // and placebo mass split between groups of equal smallest variance is
      // gathered into one group. Neither may lower the criterion.
      const Design snapped = snapped_to_bounds(finals[r], criterion.dmax(), settings.collapse_tol);
      const double snapped_value = certified_value(criterion, snapped);
      if (snapped_value >= v - 1e-12 * std::max(1.0, std::abs(v))) {
        finals[r] = snapped;
        v = snapped_value;
      }
      const Design shifted = closed_form::placebo_shift(criterion.model(0), finals[r]);
      const double shifted_value = certified_value(criterion, shifted);
      if (shifted_value >= v - 1e-12 * std::max(1.0, std::abs(v))) {
        finals[r] = shifted;
        v = shifted_value;
      }
    }
    result.restart_criteria.push_back(v);
    if (v > best) {
      best = v;
      result.best_restart = r;
    }
  }
  if (best == kNegInf) throw NumericalError("optimizer: every start produced a singular design");
  result.design = finals[result.best_restart];
  result.criterion = best;
  result.trace = runs[result.best_restart].trace;
  result.certificate = certify_result(criterion, result.design, settings);
  result.converged = result.certificate.pass;
  return result;
}

WeightResult weight_optimize(const Criterion& criterion, const Design& support, std::size_t iterations) {
  const std::size_t M = criterion.n_groups();
  if (support.n_groups() != M) throw SpecError("design: group count does not match the criterion");
  std::vector<Atom> atoms;
  for (std::size_t i = 0; i < M; ++i) {
    auto pts = support.groups[i].points;
    std::sort(pts.begin(), pts.end());
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (pts[j] < 0.0 || pts[j] > criterion.dmax()[i]) throw SpecError("design: dose outside the design space");
      if (j > 0 && pts[j] - pts[j - 1] <= 1e-12 * criterion.dmax()[i]) {
        throw RankDeficiencyError("support: group " + std::to_string(i + 1) + " repeats a dose");
      }
      atoms.push_back({i, pts[j], 1.0});
    }
  }
  if (atoms.empty()) throw RankDeficiencyError("support: empty");
  renormalize(atoms);
  const double start = criterion.value(atoms);
  if (start == kNegInf || (criterion.is_compound() && !(start > 0.0))) {
    throw RankDeficiencyError("support: information matrix is singular for every weighting");
  }
  OptimizerSettings settings;
  const Engine engine(criterion, settings);
  WeightResult out;
  out.trace.push_back(start);
  const double v = engine.optimize_weights(atoms, iterations);
  out.trace.push_back(v);
  out.design = from_atoms(atoms, M);
  out.criterion = criterion.value(out.design);
  return out;
}

OptimizationResult locally_optimal(const ModelSpec& spec, const OptimizerSettings& settings) {
  spec.validate();
  settings.validate();
  const Criterion crit = Criterion::locally_d(spec);
  const std::size_t M = spec.n_groups();
  const bool explicit_family = spec.family.is_emax_shape() || spec.family.kind == Family::Exponential ||
                               spec.family.kind == Family::LinearInLog;
  const auto bound = closed_form::support_bound(spec);

  if (spec.sharing == Sharing::Location) {
    std::vector<std::array<double, 2>> interior(M);
    std::string method;
    if (explicit_family) {
      for (std::size_t i = 0; i < M; ++i) {
        interior[i] = {closed_form::interior_point(spec.family, spec.ed(i), spec.dmax[i]), spec.dmax[i]};
      }
      method = "closed_form:shared_location";
    } else {
      // Each group's single-model optimum is found numerically and then
      // composed; it has the form {0, d1, d2} with equal weights.
      for (std::size_t i = 0; i < M; ++i) {
        const ModelSpec single = single_group(spec, i);
        const OptimizationResult r = maximize(Criterion::locally_d(single), settings, {}, closed_form::support_bound(single));
        std::vector<double> pts;
        for (double d : r.design.groups[0].points) {
          if (d > 1e-6 * spec.dmax[i]) pts.push_back(d);
        }
        if (pts.size() != 2) {
          method.clear();
          break;
        }
        interior[i] = {pts[0], pts[1]};
        method = "composed:shared_location";
      }
    }
    if (!method.empty()) {
      OptimizationResult r = closed_result(crit, closed_form::compose_shared_location(spec, interior), settings, method);
      if (r.certificate.pass) return r;
      const std::vector<Design> seed{r.design};
      return maximize(crit, settings, seed, bound);
    }
    return maximize(crit, settings, {}, bound);
  }

  if (M == 1 && explicit_family) {
    Design d;
    d.lambda = {1.0};
    d.groups = {GroupDesign{{0.0, closed_form::interior_point(spec.family, spec.ed(0), spec.dmax[0]), spec.dmax[0]},
                            {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}}};
    OptimizationResult r = closed_result(crit, std::move(d), settings, "closed_form:single_group");
    if (r.certificate.pass) return r;
    const std::vector<Design> seed{r.design};
    return maximize(crit, settings, seed, bound);
  }

  if (M == 2 && explicit_family) {
    const auto unit = rescale_to_unit(spec).spec;
    if (unit.scaled_ed(0) != unit.scaled_ed(1) && unit.scaled_ed(0) < 1.0 && unit.scaled_ed(1) < 1.0) {
      const closed_form::MinSupportedResult ms = closed_form::min_supported_optimal(spec);
      OptimizationResult r = closed_result(crit, ms.design, settings, "closed_form:min_supported");
      r.min_supported_case = ms.which;
      r.permutation = {ms.pair.order[0], ms.pair.order[1]};
      bool accept = r.certificate.pass;
      if (spec.family.is_emax_shape() && closed_form::emax_global_conditions(spec, ms.which).holds) accept = true;
      if (accept) return r;
      const std::vector<Design> seed{r.design};
      OptimizationResult num = maximize(crit, settings, seed, bound);
      num.min_supported_case = ms.which;
      num.permutation = r.permutation;
      return num;
    }
  }
  return maximize(crit, settings, {}, bound);
}

Candidate make_candidate(std::string id, const ModelSpec& spec, double prior, const OptimizerSettings& settings) {
  const OptimizationResult ref = locally_optimal(spec, settings);
  return Candidate::make(std::move(id), spec, prior, ref.design);
}

}  // namespace doseopt
