#include "doseopt/study.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "doseopt/errors.hpp"

namespace doseopt {

namespace {

using nlohmann::json;

const json& require(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw SpecError(where + key + ": missing");
  return obj.at(key);
}

double number(const json& v, const std::string& field) {
  if (!v.is_number()) throw SpecError(field + ": must be a number");
  return v.get<double>();
}

std::vector<double> numbers(const json& v, const std::string& field) {
  if (!v.is_array()) throw SpecError(field + ": must be an array of numbers");
  std::vector<double> out;
  for (std::size_t k = 0; k < v.size(); ++k) out.push_back(number(v[k], field + "[" + std::to_string(k) + "]"));
  return out;
}

std::size_t positive_count(const json& v, const std::string& field) {
  if (!v.is_number_integer() || v.get<long long>() < 1) throw SpecError(field + ": must be a positive integer");
  return static_cast<std::size_t>(v.get<long long>());
}

void apply_optimizer(const json& o, OptimizerSettings& s) {
  if (!o.is_object()) throw SpecError("optimizer: must be an object");
  for (const auto& [key, v] : o.items()) {
    const std::string field = "optimizer." + key;
    if (key == "restarts") s.restarts = positive_count(v, field);
    else if (key == "grid_density") s.grid_density = positive_count(v, field);
    else if (key == "exchange_iters") s.exchange_iters = positive_count(v, field);
    else if (key == "weight_iters") s.weight_iters = positive_count(v, field);
    else if (key == "collapse_tol") s.collapse_tol = number(v, field);
    else if (key == "convergence_tol") s.convergence_tol = number(v, field);
    else if (key == "certificate_tol") s.certificate_tol = number(v, field);
    else if (key == "seed") {
      if (!v.is_number_unsigned()) throw SpecError(field + ": must be a nonnegative integer");
      s.seed = v.get<std::uint64_t>();
    } else {
      throw SpecError(field + ": unknown setting");
    }
  }
  s.validate();
}

ModelFamily parse_family(const json& c, const std::string& where) {
  const json& f = require(c, "family", where);
  if (!f.is_string()) throw SpecError(where + "family: must be a string");
  const std::string name = f.get<std::string>();
  const bool has_gamma = c.contains("gamma") && !c.at("gamma").is_null();
  if (name == "sigmoid_emax") {
    if (!has_gamma) throw SpecError(where + "gamma: required for sigmoid_emax");
    const double g = number(c.at("gamma"), where + "gamma");
    if (!(g > 0.0) || !std::isfinite(g)) throw SpecError(where + "gamma: must be positive");
    return ModelFamily::sigmoid_emax(g);
  }
  if (has_gamma) throw SpecError(where + "gamma: only allowed for sigmoid_emax");
  if (name == "emax") return ModelFamily::emax();
  if (name == "linlog") return ModelFamily::linear_in_log();
  if (name == "exponential") return ModelFamily::exponential();
  throw SpecError(where + "family: unknown family '" + name + "'");
}

}  // namespace

ModelSpec StudySpec::model(std::size_t k) const {
  const StudyCandidate& c = candidates.at(k);
  ModelSpec s;
  s.family = c.family;
  s.sharing = c.sharing;
  s.theta_shared = c.theta_shared;
  s.theta_group = c.theta_group;
  for (const auto& g : groups) {
    s.sigma2.push_back(g.sigma2);
    s.dmax.push_back(g.dmax);
  }
  return s;
}

std::vector<double> StudySpec::dmax() const {
  std::vector<double> d;
  for (const auto& g : groups) d.push_back(g.dmax);
  return d;
}

StudySpec parse_study(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw SpecError(std::string("spec: invalid JSON (") + e.what() + ")");
  }
  if (!doc.is_object()) throw SpecError("spec: top level must be an object");
  StudySpec study;

  const json& groups = require(doc, "groups", "");
  if (!groups.is_array() || groups.empty()) throw SpecError("groups: must be a non-empty array");
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const std::string where = "groups[" + std::to_string(i) + "].";
    StudyGroup g;
    if (groups[i].contains("name")) {
      if (!groups[i]["name"].is_string()) throw SpecError(where + "name: must be a string");
      g.name = groups[i]["name"].get<std::string>();
    } else {
      g.name = "group" + std::to_string(i + 1);
    }
    g.dmax = number(require(groups[i], "dmax", where), where + "dmax");
    g.sigma2 = number(require(groups[i], "sigma2", where), where + "sigma2");
    if (!(g.dmax > 0.0) || !std::isfinite(g.dmax)) throw SpecError(where + "dmax: must be positive");
    if (!(g.sigma2 > 0.0) || !std::isfinite(g.sigma2)) throw SpecError(where + "sigma2: must be positive");
    study.groups.push_back(g);
  }

  const json& cands = require(doc, "candidates", "");
  if (!cands.is_array()) throw SpecError("candidates: must be an array");
  if (cands.empty()) throw SpecError("candidates: must be non-empty");
  double prior_sum = 0.0;
  for (std::size_t k = 0; k < cands.size(); ++k) {
    const json& c = cands[k];
    const std::string where = "candidates[" + std::to_string(k) + "].";
    if (!c.is_object()) throw SpecError("candidates[" + std::to_string(k) + "]: must be an object");
    StudyCandidate cand;
    if (c.contains("id")) {
      if (!c["id"].is_string()) throw SpecError(where + "id: must be a string");
      cand.id = c["id"].get<std::string>();
    } else {
      cand.id = std::to_string(k + 1);
    }
    cand.family = parse_family(c, where);
    const json& sh = require(c, "sharing", where);
    if (sh == "location") cand.sharing = Sharing::Location;
    else if (sh == "location_scale") cand.sharing = Sharing::LocationScale;
    else throw SpecError(where + "sharing: must be \"location\" or \"location_scale\"");
    cand.theta_shared = numbers(require(c, "theta_shared", where), where + "theta_shared");
    const json& tg = require(c, "theta_group", where);
    if (!tg.is_array()) throw SpecError(where + "theta_group: must be an array of arrays");
    if (tg.size() != study.groups.size()) {
      throw SpecError(where + "theta_group: expected " + std::to_string(study.groups.size()) + " blocks, got " +
                      std::to_string(tg.size()));
    }
    for (std::size_t i = 0; i < tg.size(); ++i) {
      cand.theta_group.push_back(numbers(tg[i], where + "theta_group[" + std::to_string(i) + "]"));
    }
    cand.prior = c.contains("prior") ? number(c["prior"], where + "prior") : 1.0;
    if (!(cand.prior >= 0.0) || !std::isfinite(cand.prior)) throw SpecError(where + "prior: must be nonnegative");
    prior_sum += cand.prior;
    study.candidates.push_back(std::move(cand));
    try {
      study.model(k).validate();
    } catch (const SpecError& e) {
      throw SpecError(where + e.what());
    }
  }
  if (!(prior_sum > 0.0)) throw SpecError("candidates: priors must not all be zero");
  if (std::abs(prior_sum - 1.0) > 1e-12) {
    std::ostringstream msg;
    msg << "candidates: priors sum to " << prior_sum << "; rescaled to 1";
    study.warnings.push_back(msg.str());
    for (auto& c : study.candidates) c.prior /= prior_sum;
  }

  std::string crit = "locally_D";
  if (doc.contains("criterion")) {
    if (!doc["criterion"].is_string()) throw SpecError("criterion: must be a string");
    crit = doc["criterion"].get<std::string>();
  }
  if (crit == "locally_D") {
    study.criterion = CriterionKind::LocallyD;
    if (study.candidates.size() != 1) throw SpecError("criterion: locally_D requires exactly one candidate");
  } else if (crit == "compound") {
    study.criterion = CriterionKind::Compound;
  } else {
    throw SpecError("criterion: must be \"locally_D\" or \"compound\"");
  }

  if (doc.contains("optimizer")) apply_optimizer(doc["optimizer"], study.optimizer);
  if (doc.contains("n_total")) {
    if (!doc["n_total"].is_number_integer() || doc["n_total"].get<long>() < 1) {
      throw SpecError("n_total: must be a positive integer");
    }
    study.n_total = doc["n_total"].get<long>();
  }
  return study;
}

StudySpec load_study(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("spec: cannot read '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_study(buf.str());
}

std::string format_number(double x) {
  if (x == 0.0) return "0";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

void write_design_csv(std::ostream& out, const Design& design) {
  out << "group,dose,group_weight,lambda\n";
  for (std::size_t i = 0; i < design.n_groups(); ++i) {
    const auto& g = design.groups[i];
    for (std::size_t j = 0; j < g.size(); ++j) {
      out << i + 1 << ',' << format_number(g.points[j]) << ',' << format_number(g.weights[j]) << ','
          << format_number(design.lambda[i]) << '\n';
    }
  }
}

Design read_design_csv(std::istream& in, std::size_t n_groups, std::vector<std::string>& warnings) {
  std::string line;
  if (!std::getline(in, line)) throw SpecError("design: empty file");
  if (line.rfind("group,dose,group_weight,lambda", 0) != 0) {
    throw SpecError("design: header must be group,dose,group_weight,lambda");
  }
  Design d;
  d.groups.resize(n_groups);
  d.lambda.assign(n_groups, 0.0);
  std::vector<bool> seen(n_groups, false);
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    const std::string where = "design row " + std::to_string(row);
    if (cells.size() != 4) throw SpecError(where + ": expected 4 columns");
    long g = 0;
    double dose = 0.0, w = 0.0, lam = 0.0;
    try {
      g = std::stol(cells[0]);
      dose = std::stod(cells[1]);
      w = std::stod(cells[2]);
      lam = std::stod(cells[3]);
    } catch (const std::exception&) {
      throw SpecError(where + ": not a number");
    }
    if (g < 1 || static_cast<std::size_t>(g) > n_groups) throw SpecError(where + ": group out of range");
    const auto i = static_cast<std::size_t>(g - 1);
    if (seen[i] && d.lambda[i] != lam) throw SpecError(where + ": lambda differs within group " + cells[0]);
    seen[i] = true;
    d.lambda[i] = lam;
    d.groups[i].points.push_back(dose);
    d.groups[i].weights.push_back(w);
  }
  double lsum = 0.0;
  for (double l : d.lambda) lsum += l;
  if (!(lsum > 0.0)) throw SpecError("design: lambda has no positive mass");
  if (std::abs(lsum - 1.0) > 1e-9) {
    warnings.push_back("design: lambda sums to " + format_number(lsum) + "; rescaled to 1");
  }
  for (double& l : d.lambda) l /= lsum;
  for (std::size_t i = 0; i < n_groups; ++i) {
    auto& grp = d.groups[i];
    double wsum = 0.0;
    for (double w : grp.weights) wsum += w;
    if (grp.empty()) continue;
    if (!(wsum > 0.0)) throw SpecError("design: group " + std::to_string(i + 1) + " has no positive weight");
    if (std::abs(wsum - 1.0) > 1e-9) {
      warnings.push_back("design: weights of group " + std::to_string(i + 1) + " sum to " + format_number(wsum) +
                         "; rescaled to 1");
    }
    for (double& w : grp.weights) w /= wsum;
    std::vector<std::pair<double, double>> pts;
    for (std::size_t j = 0; j < grp.size(); ++j) pts.emplace_back(grp.points[j], grp.weights[j]);
    std::sort(pts.begin(), pts.end());
    for (std::size_t j = 0; j < pts.size(); ++j) std::tie(grp.points[j], grp.weights[j]) = pts[j];
  }
  return d;
}

Design load_design_csv(const std::string& path, std::size_t n_groups, std::vector<std::string>& warnings) {
  std::ifstream in(path);
  if (!in) throw SpecError("design: cannot read '" + path + "'");
  return read_design_csv(in, n_groups, warnings);
}

void write_design_table(std::ostream& out, const Design& design) {
  out << std::left << std::setw(7) << "group" << std::right << std::setw(16) << "dose" << std::setw(14) << "weight"
      << std::setw(10) << "lambda" << '\n';
  for (std::size_t i = 0; i < design.n_groups(); ++i) {
    const auto& g = design.groups[i];
    for (std::size_t j = 0; j < g.size(); ++j) {
      out << std::left << std::setw(7) << i + 1 << std::right << std::fixed << std::setprecision(4) << std::setw(16)
          << g.points[j] << std::setw(14) << g.weights[j] << std::setw(10) << design.lambda[i] << '\n';
    }
  }
  out.unsetf(std::ios::floatfield);
}

std::string certificate_json(const OptimalityCertificate& cert) {
  json j;
  j["pass"] = cert.pass;
  j["m"] = cert.m;
  j["tol"] = cert.tol;
  j["criterion"] = cert.compound ? "compound" : "locally_D";
  j["grid_density"] = cert.grid_density;
  j["refinement_iterations"] = cert.refinement_iterations;
  j["per_group"] = json::array();
  for (const auto& g : cert.groups) {
    j["per_group"].push_back({{"max_kappa", g.max_value}, {"argmax_dose", g.argmax_dose}, {"support_kappas", g.support_values}});
  }
  return j.dump(2);
}

void write_kappa_csv(std::ostream& out, const std::vector<KappaSample>& samples) {
  out << "group,dose,kappa,m\n";
  for (const auto& s : samples) {
    out << s.group + 1 << ',' << format_number(s.dose) << ',' << format_number(s.kappa) << ',' << format_number(s.m)
        << '\n';
  }
}

void write_exact_design_csv(std::ostream& out, const Design& design, const ExactDesign& exact) {
  out << "group,dose,count,group_total\n";
  for (std::size_t i = 0; i < design.n_groups(); ++i) {
    for (std::size_t j = 0; j < design.groups[i].size(); ++j) {
      out << i + 1 << ',' << format_number(design.groups[i].points[j]) << ',' << exact.counts[i][j] << ','
          << exact.group_totals[i] << '\n';
    }
  }
}

}  // namespace doseopt
