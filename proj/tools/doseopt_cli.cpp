// Command-line front end: design, certify, efficiency, optimality-region and
// apportion subcommands over a JSON study file.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "doseopt/closed_form.hpp"
#include "doseopt/criterion.hpp"
#include "doseopt/design.hpp"
#include "doseopt/errors.hpp"
#include "doseopt/optimize.hpp"
#include "doseopt/study.hpp"
#include "doseopt/verify.hpp"

namespace fs = std::filesystem;
using namespace doseopt;

namespace {

constexpr int kExitSpec = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitCertificate = 3;

struct Flags {
  std::string spec;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> restarts;
  std::optional<std::size_t> grid;
  std::optional<double> tol;
  bool require_certificate = false;
  std::vector<std::string> designs;
  std::vector<double> ratios{0.1, 0.5, 1.0, 2.0};
  std::size_t steps = 99;
  std::optional<long> n_total;
  bool serial = false;
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SpecError("out: cannot write '" + path.string() + "'");
  out << text;
}

fs::path out_dir(const Flags& f) {
  fs::path dir(f.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw SpecError("out: cannot create directory '" + f.out + "'");
  return dir;
}

StudySpec load(const Flags& f) {
  if (f.spec.empty()) throw SpecError("spec: --spec is required");
  StudySpec study = load_study(f.spec);
  if (f.seed) study.optimizer.seed = *f.seed;
  if (f.restarts) study.optimizer.restarts = *f.restarts;
  if (f.grid) study.optimizer.grid_density = *f.grid;
  if (f.tol) study.optimizer.certificate_tol = *f.tol;
  if (f.serial) study.optimizer.parallel = false;
  study.optimizer.validate();
  for (const auto& w : study.warnings) std::cerr << "warning: " << w << '\n';
  return study;
}

std::vector<Candidate> build_candidates(const StudySpec& study) {
  std::vector<Candidate> out;
  for (std::size_t k = 0; k < study.candidates.size(); ++k) {
    out.push_back(make_candidate(study.candidates[k].id, study.model(k), study.candidates[k].prior, study.optimizer));
  }
  return out;
}

Criterion build_criterion(const StudySpec& study) {
  if (study.criterion == CriterionKind::LocallyD) return Criterion::locally_d(study.model(0));
  return Criterion::compound(build_candidates(study));
}

void print_certificate(const OptimalityCertificate& c) {
  std::cout << "certificate: " << (c.pass ? "pass" : "fail") << " (max " << format_number(c.max_value())
            << ", bound " << format_number(c.m) << ", tol " << format_number(c.tol) << ")\n";
}

int run_design(const Flags& f) {
  const StudySpec study = load(f);
  OptimizationResult result;
  std::optional<Criterion> criterion;
  if (study.criterion == CriterionKind::LocallyD) {
    result = locally_optimal(study.model(0), study.optimizer);
  } else {
    criterion.emplace(build_criterion(study));
    result = maximize(*criterion, study.optimizer);
  }
  const fs::path dir = out_dir(f);
  std::ostringstream csv;
  write_design_csv(csv, result.design);
  write_file(dir / "design.csv", csv.str());
  std::ostringstream table;
  write_design_table(table, result.design);
  write_file(dir / "design.txt", table.str());
  write_file(dir / "certificate.json", certificate_json(result.certificate) + "\n");

  std::cout << table.str();
  std::cout << "method: " << result.method;
  if (result.min_supported_case) std::cout << " (case " << closed_form::case_name(*result.min_supported_case) << ")";
  std::cout << '\n';
  std::cout << (study.criterion == CriterionKind::LocallyD ? "log det: " : "g_c: ") << format_number(result.criterion)
            << '\n';
  if (criterion) {
    const auto eff = criterion->efficiencies(result.design);
    for (std::size_t k = 0; k < eff.size(); ++k) {
      std::cout << "  efficiency " << study.candidates[k].id << ": " << format_number(eff[k]) << '\n';
    }
  }
  print_certificate(result.certificate);
  if (f.require_certificate && !result.certificate.pass) return kExitCertificate;
  return 0;
}

int run_certify(const Flags& f) {
  const StudySpec study = load(f);
  if (f.designs.size() != 1) throw SpecError("design: certify takes exactly one --design file");
  std::vector<std::string> warnings;
  const Design design = load_design_csv(f.designs[0], study.groups.size(), warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  design.validate(study.dmax());
  const Criterion criterion = build_criterion(study);
  const double tol = f.tol ? *f.tol : CertifyOptions{}.tol;
  const OptimalityCertificate cert = certify(criterion, design, CertifyOptions{tol, study.optimizer.certificate_grid});
  const fs::path dir = out_dir(f);
  write_file(dir / "certificate.json", certificate_json(cert) + "\n");
  std::ostringstream curve;
  write_kappa_csv(curve, kappa_curve(criterion, design, study.optimizer.certificate_grid));
  write_file(dir / "kappa.csv", curve.str());
  std::cout << (criterion.is_compound() ? "g_c: " : "log det: ") << format_number(criterion.value(design)) << '\n';
  print_certificate(cert);
  if (f.require_certificate && !cert.pass) return kExitCertificate;
  return 0;
}

int run_efficiency(const Flags& f) {
  const StudySpec study = load(f);
  if (f.designs.empty()) throw SpecError("design: at least one --design file is required");
  const std::vector<Candidate> candidates = build_candidates(study);
  std::ostringstream csv;
  csv << "design";
  for (const auto& c : candidates) csv << ',' << c.id;
  csv << ",g_c\n";
  for (const auto& path : f.designs) {
    std::vector<std::string> warnings;
    const Design design = load_design_csv(path, study.groups.size(), warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
    design.validate(study.dmax());
    csv << fs::path(path).stem().string();
    for (const auto& c : candidates) csv << ',' << format_number(d_efficiency(c.spec, design, c.reference));
    csv << ',' << format_number(compound_criterion(candidates, design)) << '\n';
  }
  write_file(out_dir(f) / "efficiency.csv", csv.str());
  std::cout << csv.str();
  return 0;
}

int run_region(const Flags& f) {
  if (f.steps < 2) throw SpecError("steps: must be at least 2");
  std::ostringstream csv;
  csv << "ratio,theta1,theta2,case,slack,holds\n";
  for (double r : f.ratios) {
    if (!(r > 0.0)) throw SpecError("ratio: must be positive");
    const std::vector<closed_form::MinSupportedCase> cases =
        r <= 1.0 ? std::vector{closed_form::MinSupportedCase::A}
                 : std::vector{closed_form::MinSupportedCase::B, closed_form::MinSupportedCase::C};
    for (std::size_t a = 1; a <= f.steps; ++a) {
      for (std::size_t b = a + 1; b <= f.steps; ++b) {
        const double t1 = static_cast<double>(a) / static_cast<double>(f.steps + 1);
        const double t2 = static_cast<double>(b) / static_cast<double>(f.steps + 1);
        for (auto c : cases) {
          const auto cond = closed_form::emax_condition(c, t1, t2, r);
          csv << format_number(r) << ',' << format_number(t1) << ',' << format_number(t2) << ','
              << closed_form::case_name(c) << ',' << format_number(cond.slack) << ',' << (cond.holds ? 1 : 0) << '\n';
        }
      }
    }
  }
  write_file(out_dir(f) / "region.csv", csv.str());
  return 0;
}

int run_apportion(const Flags& f) {
  const StudySpec study = load(f);
  const std::optional<long> n = f.n_total ? f.n_total : study.n_total;
  if (!n) throw SpecError("n_total: required (spec field or --n)");
  Design design;
  if (!f.designs.empty()) {
    std::vector<std::string> warnings;
    design = load_design_csv(f.designs[0], study.groups.size(), warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
    design.validate(study.dmax());
  } else if (study.criterion == CriterionKind::LocallyD) {
    design = locally_optimal(study.model(0), study.optimizer).design;
  } else {
    design = maximize(build_criterion(study), study.optimizer).design;
  }
  const ExactDesign exact = apportion(design, *n);
  std::ostringstream csv;
  write_exact_design_csv(csv, design, exact);
  write_file(out_dir(f) / "exact_design.csv", csv.str());
  std::cout << csv.str();
  return 0;
}

void add_common(CLI::App* sub, Flags& f, bool optimizer) {
  sub->add_option("--spec", f.spec, "Study specification (JSON)")->required();
  sub->add_option("--out", f.out, "Output directory");
  sub->add_option("--tol", f.tol, "Certificate tolerance (relative to m)");
  sub->add_flag("--require-certificate", f.require_certificate, "Exit 3 when the certificate fails");
  if (optimizer) {
    sub->add_option("--seed", f.seed, "Random seed of the optimizer");
    sub->add_option("--restarts", f.restarts, "Number of random starts");
    sub->add_option("--grid", f.grid, "Candidate doses per group");
    sub->add_flag("--serial", f.serial, "Run restarts on one thread");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal designs for dose-response groups with shared parameters"};
  app.require_subcommand(1);
  Flags f;

  auto* design = app.add_subcommand("design", "Compute an optimal design");
  add_common(design, f, true);

  auto* cert = app.add_subcommand("certify", "Certify a design file and write sensitivity curves");
  add_common(cert, f, true);
  cert->add_option("--design", f.designs, "Design CSV")->required();

  auto* eff = app.add_subcommand("efficiency", "Efficiencies of design files against every candidate");
  add_common(eff, f, true);
  eff->add_option("--design", f.designs, "Design CSV (repeatable)")->required();

  auto* region = app.add_subcommand("optimality-region", "Emax minimally supported optimality regions");
  region->add_option("--out", f.out, "Output directory");
  region->add_option("--ratio", f.ratios, "Variance ratios sigma1^2/sigma2^2 (repeatable)");
  region->add_option("--steps", f.steps, "Grid points per axis");

  auto* app_sub = app.add_subcommand("apportion", "Round a design to subject counts");
  add_common(app_sub, f, true);
  app_sub->add_option("--design", f.designs, "Design CSV (default: the optimal design)");
  app_sub->add_option("--n", f.n_total, "Total number of subjects");

  CLI11_PARSE(app, argc, argv);

  try {
    if (design->parsed()) return run_design(f);
    if (cert->parsed()) return run_certify(f);
    if (eff->parsed()) return run_efficiency(f);
    if (region->parsed()) return run_region(f);
    if (app_sub->parsed()) return run_apportion(f);
  } catch (const SpecError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitSpec;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitSpec;
  } catch (const RankDeficiencyError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const SingularMatrixError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return 0;
}
