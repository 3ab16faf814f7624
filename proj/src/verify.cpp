#include "doseopt/verify.hpp"

#include <algorithm>
#include <cmath>

#include "doseopt/errors.hpp"

namespace doseopt {

namespace {

constexpr double kInvPhi = 0.6180339887498949;

struct Golden {
  double x;
  double value;
  std::size_t iterations;
};

Golden golden_section(const std::function<double(double)>& f, double a, double b, double tolerance) {
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = f(c);
  double fd = f(d);
  std::size_t it = 0;
  while (b - a > tolerance && it < 200) {
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
    ++it;
  }
  return fc >= fd ? Golden{c, fc, it} : Golden{d, fd, it};
}

}  // namespace

ScanResult scan_maximum(const std::function<double(double)>& f, std::span<const double> samples, double tolerance) {
  const std::size_t n = samples.size();
  std::vector<double> values(n);
  for (std::size_t k = 0; k < n; ++k) values[k] = f(samples[k]);
  ScanResult best{-std::numeric_limits<double>::infinity(), samples.empty() ? 0.0 : samples[0], 0};
  for (std::size_t k = 0; k < n; ++k) {
    if (values[k] > best.value) best = {values[k], samples[k], best.refinement_iterations};
  }
  for (std::size_t k = 0; k < n; ++k) {
    const bool left_ok = k == 0 || values[k] >= values[k - 1];
    const bool right_ok = k + 1 == n || values[k] >= values[k + 1];
    if (!left_ok || !right_ok) continue;
    const double a = k == 0 ? samples[k] : samples[k - 1];
    const double b = k + 1 == n ? samples[k] : samples[k + 1];
    if (b - a <= tolerance) continue;
    const Golden g = golden_section(f, a, b, tolerance);
    best.refinement_iterations += g.iterations;
    if (g.value > best.value) {
      best.value = g.value;
      best.argmax = g.x;
    }
  }
  return best;
}

std::vector<double> uniform_grid(double upper, std::size_t n) {
  std::vector<double> grid(std::max<std::size_t>(n, 2));
  const double step = upper / static_cast<double>(grid.size() - 1);
  for (std::size_t k = 0; k < grid.size(); ++k) grid[k] = step * static_cast<double>(k);
  grid.back() = upper;
  return grid;
}

double OptimalityCertificate::max_value() const {
  double v = -std::numeric_limits<double>::infinity();
  for (const auto& g : groups) v = std::max(v, g.max_value);
  return v;
}

double OptimalityCertificate::support_gap() const {
  double gap = 0.0;
  for (const auto& g : groups) {
    for (double s : g.support_values) gap = std::max(gap, std::abs(s - m));
  }
  return gap;
}

double kappa(const ModelSpec& spec, const Design& design, std::size_t group, double dose) {
  const Criterion crit = Criterion::locally_d(spec);
  const Sensitivity s = crit.sensitivity(design);
  return s.kappa(0, group, dose);
}

OptimalityCertificate certify(const Criterion& criterion, const Design& design, const CertifyOptions& options) {
  const Sensitivity s = criterion.sensitivity(design);
  const double scale = s.scale();
  OptimalityCertificate cert;
  cert.compound = criterion.is_compound();
  cert.m = scale;
  cert.tol = options.tol;
  cert.grid_density = options.grid_density;
  cert.pass = true;
  for (std::size_t i = 0; i < criterion.n_groups(); ++i) {
    const double dmax = criterion.dmax()[i];
    std::vector<double> samples = uniform_grid(dmax, options.grid_density);
    const auto& g = design.groups[i];
    samples.insert(samples.end(), g.points.begin(), g.points.end());
    std::sort(samples.begin(), samples.end());
    samples.erase(std::unique(samples.begin(), samples.end()), samples.end());

    auto f = [&](double d) { return scale * s(i, d); };
    const ScanResult scan = scan_maximum(f, samples, 1e-10 * dmax);
    GroupCertificate gc;
    gc.max_value = scan.value;
    gc.argmax_dose = scan.argmax;
    cert.refinement_iterations += scan.refinement_iterations;
    if (scan.value > scale * (1.0 + options.tol)) cert.pass = false;
    if (design.lambda[i] > 0.0) {
      for (std::size_t j = 0; j < g.size(); ++j) {
        const double v = f(g.points[j]);
        gc.support_values.push_back(v);
        if (g.weights[j] > 0.0 && std::abs(v - scale) > scale * options.tol) cert.pass = false;
      }
    }
    cert.groups.push_back(std::move(gc));
  }
  return cert;
}

OptimalityCertificate certify(const ModelSpec& spec, const Design& design, const CertifyOptions& options) {
  return certify(Criterion::locally_d(spec), design, options);
}

std::vector<KappaSample> kappa_curve(const Criterion& criterion, const Design& design, std::size_t points_per_group) {
  const Sensitivity s = criterion.sensitivity(design);
  std::vector<KappaSample> out;
  for (std::size_t i = 0; i < criterion.n_groups(); ++i) {
    for (double d : uniform_grid(criterion.dmax()[i], points_per_group)) {
      out.push_back({i, d, s.scale() * s(i, d), s.scale()});
    }
  }
  return out;
}

}  // namespace doseopt
