#ifndef DOSEOPT_STUDY_HPP
#define DOSEOPT_STUDY_HPP

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "doseopt/design.hpp"
#include "doseopt/model.hpp"
#include "doseopt/optimize.hpp"
#include "doseopt/verify.hpp"

namespace doseopt {

struct StudyGroup {
  std::string name;
  double dmax = 0.0;
  double sigma2 = 1.0;
};

struct StudyCandidate {
  std::string id;
  ModelFamily family;
  Sharing sharing = Sharing::LocationScale;
  std::vector<double> theta_shared;
  std::vector<std::vector<double>> theta_group;
  double prior = 1.0;
};

enum class CriterionKind { LocallyD, Compound };

/// Parsed study file: groups, candidate models and the criterion to optimize.
struct StudySpec {
  std::vector<StudyGroup> groups;
  std::vector<StudyCandidate> candidates;
  CriterionKind criterion = CriterionKind::LocallyD;
  OptimizerSettings optimizer;
  std::optional<long> n_total;
  std::vector<std::string> warnings;

  ModelSpec model(std::size_t candidate) const;
  std::vector<double> dmax() const;
};

/// Parses and validates a JSON study document. Throws SpecError naming the
/// offending field. Priors not summing to one are rescaled with a warning.
StudySpec parse_study(const std::string& json_text);
StudySpec load_study(const std::string& path);

/// Shortest round-trippable text with 12 significant digits.
std::string format_number(double x);

/// CSV with header group,dose,group_weight,lambda; groups are 1-based.
void write_design_csv(std::ostream& out, const Design& design);
/// Reads the CSV written by write_design_csv. Weights that do not sum to one
/// within a group are rescaled and a warning is appended.
Design read_design_csv(std::istream& in, std::size_t n_groups, std::vector<std::string>& warnings);
Design load_design_csv(const std::string& path, std::size_t n_groups, std::vector<std::string>& warnings);

/// Human-readable design table.
void write_design_table(std::ostream& out, const Design& design);

/// {pass, m, per_group: [{max_kappa, argmax_dose, support_kappas}], tol, criterion}
std::string certificate_json(const OptimalityCertificate& cert);

void write_kappa_csv(std::ostream& out, const std::vector<KappaSample>& samples);

void write_exact_design_csv(std::ostream& out, const Design& design, const ExactDesign& exact);

}  // namespace doseopt

#endif  // DOSEOPT_STUDY_HPP
