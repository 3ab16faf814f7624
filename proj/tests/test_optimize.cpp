#include "doctest.h"

#include <cmath>

#include "doseopt/closed_form.hpp"
#include "doseopt/errors.hpp"
#include "doseopt/optimize.hpp"
#include "oracle.hpp"

using namespace doseopt;
namespace cf = doseopt::closed_form;

namespace {

ModelSpec model1() {
  ModelSpec s;
  s.family = ModelFamily::emax();
  s.sharing = Sharing::LocationScale;
  s.theta_shared = {5.48, 0.90};
  s.theta_group = {{13.82}, {10.46}};
  s.sigma2 = {1.0, 1.0};
  s.dmax = {1000.0, 400.0};
  return s;
}

OptimizerSettings quick(std::uint64_t seed = 1) {
  OptimizerSettings o;
  o.restarts = 4;
  o.seed = seed;
  return o;
}

void check_monotone(const std::vector<double>& trace) {
  for (std::size_t k = 1; k < trace.size(); ++k) CHECK(trace[k] >= trace[k - 1] - 1e-12);
}

}  // namespace

TEST_CASE("numerical optimum of model 1 matches the explicit design") {
  const ModelSpec s = model1();
  const OptimizationResult r = maximize(Criterion::locally_d(s), quick());
  REQUIRE(r.design.groups[0].size() == 3);
  REQUIRE(r.design.groups[1].size() == 1);
  CHECK(r.design.groups[0].points[0] == doctest::Approx(0.0).epsilon(0.5 / 1000));
  CHECK(std::abs(r.design.groups[0].points[1] - 13.45) < 0.5);
  CHECK(r.design.groups[0].points[2] == doctest::Approx(1000.0).epsilon(1e-6));
  CHECK(std::abs(r.design.groups[1].points[0] - 10.46) < 0.5);
  for (double w : r.design.groups[0].weights) CHECK(std::abs(w - 1.0 / 3) < 1e-3);
  CHECK(std::abs(r.design.lambda[0] - 0.75) < 1e-3);
  CHECK(r.converged);
  CHECK(r.certificate.max_value() <= 4.0 * (1.0 + 1e-4));
  CHECK(r.criterion == doctest::Approx(Criterion::locally_d(s).value(r.design)).epsilon(1e-10));
  check_monotone(r.trace);
  for (double v : r.restart_criteria) CHECK(r.criterion >= v);
}

TEST_CASE("dispatcher uses the explicit design for model 1") {
  const OptimizationResult r = locally_optimal(model1(), quick());
  CHECK(r.method == "closed_form:min_supported");
  REQUIRE(r.min_supported_case);
  CHECK(*r.min_supported_case == cf::MinSupportedCase::A);
  CHECK(r.design.groups[0].points[1] == doctest::Approx(13.4483).epsilon(1e-5));
  CHECK(r.certificate.pass);
}

TEST_CASE("optimal weights on a fixed minimal support are uniform") {
  const ModelSpec s = model1();
  const Design support = cf::min_supported_optimal(s).design;
  Design start = support;
  start.groups[0].weights = {0.6, 0.3, 0.1};
  start.lambda = {0.4, 0.6};
  const WeightResult w = weight_optimize(Criterion::locally_d(s), start);
  for (double x : w.design.groups[0].weights) CHECK(std::abs(x - 1.0 / 3) < 1e-4);
  CHECK(std::abs(w.design.groups[1].weights[0] - 1.0) < 1e-12);
  CHECK(std::abs(w.design.lambda[0] - 0.75) < 1e-4);
  check_monotone(w.trace);
}

TEST_CASE("repeated doses or unidentifiable supports are rejected") {
  const ModelSpec s = model1();
  Design d = cf::min_supported_optimal(s).design;
  d.groups[0].points = {0.0, 13.0, 13.0};
  CHECK_THROWS_AS(weight_optimize(Criterion::locally_d(s), d), RankDeficiencyError);
  Design thin{{GroupDesign{{0.0, 1000.0}, {0.5, 0.5}}, GroupDesign{{10.0}, {1.0}}}, {0.5, 0.5}};
  CHECK_THROWS_AS(weight_optimize(Criterion::locally_d(s), thin), RankDeficiencyError);
}

TEST_CASE("compound weight optimization ascends") {
  const ModelSpec a = model1();
  ModelSpec b = model1();
  b.theta_group = {{53.49}, {2.39}};
  const std::vector<Candidate> c{make_candidate("a", a, 0.5, quick()), make_candidate("b", b, 0.5, quick())};
  const Criterion crit = Criterion::compound(c);
  const Design support{{GroupDesign{{0.0, 5.0, 50.0, 1000.0}, {0.25, 0.25, 0.25, 0.25}},
                        GroupDesign{{3.0, 30.0, 400.0}, {1.0 / 3, 1.0 / 3, 1.0 / 3}}},
                       {0.5, 0.5}};
  const WeightResult w = weight_optimize(crit, support);
  REQUIRE(w.trace.size() >= 2);
  check_monotone(w.trace);
  CHECK(w.criterion >= crit.value(support));
}

TEST_CASE("a single compound candidate reproduces its reference") {
  const ModelSpec s = model1();
  const std::vector<Candidate> c{make_candidate("1", s, 1.0, quick())};
  const Criterion crit = Criterion::compound(c);
  const OptimizationResult r = maximize(crit, quick());
  CHECK(r.criterion == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(r.criterion <= 1.0 + 1e-12);
  CHECK(r.certificate.pass);
  check_monotone(r.trace);
}

TEST_CASE("identical seeds give identical results") {
  ModelSpec s = model1();
  s.family = ModelFamily::sigmoid_emax(3.0);
  OptimizerSettings o = quick(42);
  const OptimizationResult a = maximize(Criterion::locally_d(s), o);
  o.parallel = false;
  const OptimizationResult b = maximize(Criterion::locally_d(s), o);
  REQUIRE(a.design.n_groups() == b.design.n_groups());
  for (std::size_t i = 0; i < a.design.n_groups(); ++i) {
    CHECK(a.design.groups[i].points == b.design.groups[i].points);
    CHECK(a.design.groups[i].weights == b.design.groups[i].weights);
  }
  CHECK(a.criterion == b.criterion);
  CHECK(a.best_restart == b.best_restart);
}

TEST_CASE("numerical optimum agrees with minimally supported designs where they are optimal") {
  oracle::Random rng(99);
  int checked = 0;
  while (checked < 6) {
    double lo = rng.uniform(0.02, 0.9), hi = rng.uniform(0.02, 0.9);
    if (lo > hi) std::swap(lo, hi);
    const double r = rng.log_uniform(0.2, 8.0);
    const cf::MinSupportedCase which = cf::select_case(r, cf::case_threshold(ModelFamily::emax(), lo, hi));
    if (!cf::emax_condition(which, lo, hi, r).holds) continue;
    ModelSpec s;
    s.family = ModelFamily::emax();
    s.sharing = Sharing::LocationScale;
    s.theta_shared = {1.0, 1.0};
    s.theta_group = {{lo * 200.0}, {hi * 50.0}};
    s.sigma2 = {r, 1.0};
    s.dmax = {200.0, 50.0};
    const Criterion crit = Criterion::locally_d(s);
    const double target = crit.value(cf::min_supported_optimal(s).design);
    const OptimizationResult res = maximize(crit, quick(7));
    CHECK(res.criterion == doctest::Approx(target).epsilon(1e-6));
    CHECK(res.criterion <= target + 1e-9);
    ++checked;
  }
}

TEST_CASE("bounded-support optimization never loses to its start") {
  oracle::Random rng(123);
  for (int k = 0; k < 10; ++k) {
    const ModelFamily fam = k % 2 ? ModelFamily::emax() : ModelFamily::linear_in_log();
    const ModelSpec s = oracle::random_spec(rng, fam, Sharing::Location, 2);
    const Design start = oracle::random_design(rng, s, 3 + rng.index(2), rng.coin());
    const Criterion crit = Criterion::locally_d(s);
    OptimizerSettings o = quick(k);
    o.restarts = 1;
    const std::vector<Design> seeds{start};
    const OptimizationResult r = maximize(crit, o, seeds, cf::support_bound(s));
    CHECK(r.criterion >= crit.value(start));
    CHECK(r.restart_criteria[0] >= crit.value(start));
  }
}

TEST_CASE("common location sigmoid designs are composed from single groups") {
  ModelSpec s;
  s.family = ModelFamily::sigmoid_emax(3.0);
  s.sharing = Sharing::Location;
  s.theta_shared = {5.48};
  s.theta_group = {{0.65, 2.93}, {0.75, 2.39}};
  s.sigma2 = {1.0, 1.0};
  s.dmax = {1000.0, 400.0};
  const OptimizationResult r = locally_optimal(s, quick());
  CHECK(r.certificate.pass);
  CHECK(r.design.lambda[0] == doctest::Approx(0.6).epsilon(1e-6));
  CHECK(r.design.groups[0].size() == 3);
  CHECK(r.design.groups[1].size() == 2);
}

TEST_CASE("settings validation") {
  OptimizerSettings o;
  CHECK_NOTHROW(o.validate());
  CHECK(o.restarts == 20);
  CHECK(o.grid_density == 201);
  CHECK(o.exchange_iters == 200);
  CHECK(o.weight_iters == 500);
  CHECK(o.collapse_tol == 1e-4);
  CHECK(o.convergence_tol == 1e-9);
  o.restarts = 0;
  CHECK_THROWS_AS(o.validate(), SpecError);
  o = OptimizerSettings{};
  o.collapse_tol = -1.0;
  CHECK_THROWS_AS(o.validate(), SpecError);
}
