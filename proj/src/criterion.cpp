#include "doseopt/criterion.hpp"

#include <cmath>
#include <limits>

#include "doseopt/errors.hpp"

namespace doseopt {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_same_spaces(const std::vector<double>& dmax, const ModelSpec& spec, const std::string& id) {
  if (spec.dmax != dmax) {
    throw SpecError("candidate '" + id + "': design spaces differ from the other candidates");
  }
}

}  // namespace

double Sensitivity::kappa(std::size_t model, std::size_t group, double dose) const {
  const VectorXld h = gradient(criterion_->model(model), group, dose).cast<long double>().cwiseProduct(equilibration_[model]);
  return static_cast<double>(h.dot(factors_[model].solve(h)));
}

double Sensitivity::operator()(std::size_t group, double dose) const {
  double total = 0.0;
  for (std::size_t k = 0; k < factors_.size(); ++k) {
    if (coefficients_[k] == 0.0) continue;
    total += coefficients_[k] * kappa(k, group, dose);
  }
  return total;
}

Criterion Criterion::locally_d(ModelSpec spec) {
  spec.validate();
  Criterion c;
  c.dmax_ = spec.dmax;
  c.priors_ = {1.0};
  c.reference_logdet_ = {0.0};
  c.models_.push_back(std::move(spec));
  return c;
}

Criterion Criterion::compound(std::vector<Candidate> candidates) {
  if (candidates.empty()) throw SpecError("candidates: must be non-empty");
  Criterion c;
  c.compound_ = true;
  c.dmax_ = candidates.front().spec.dmax;
  double prior_sum = 0.0;
  for (const auto& cand : candidates) {
    cand.spec.validate();
    check_same_spaces(c.dmax_, cand.spec, cand.id);
    if (!(cand.prior >= 0.0)) throw SpecError("candidate '" + cand.id + "': prior must be nonnegative");
    prior_sum += cand.prior;
    c.models_.push_back(cand.spec);
    c.priors_.push_back(cand.prior);
    c.reference_logdet_.push_back(cand.reference_logdet);
  }
  if (std::abs(prior_sum - 1.0) > 1e-12) throw SpecError("candidates: priors must sum to 1");
  c.candidates_ = std::move(candidates);
  return c;
}

Eigen::MatrixXd Criterion::information(std::size_t k, std::span<const Atom> atoms) const {
  const ModelSpec& spec = models_[k];
  const auto m = static_cast<Eigen::Index>(spec.m());
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(m, m);
  for (const auto& a : atoms) {
    if (a.weight == 0.0) continue;
    const Eigen::VectorXd h = gradient(spec, a.group, a.dose);
    info.selfadjointView<Eigen::Lower>().rankUpdate(h, a.weight);
  }
  return info.selfadjointView<Eigen::Lower>();
}

double Criterion::value(std::span<const Atom> atoms) const {
  if (!compound_) return log_det_criterion(information(0, atoms));
  double total = 0.0;
  for (std::size_t k = 0; k < models_.size(); ++k) {
    if (priors_[k] == 0.0) continue;
    const double ld = log_det_criterion(information(k, atoms));
    if (ld == kNegInf) continue;
    total += priors_[k] * std::exp((ld - reference_logdet_[k]) / static_cast<double>(models_[k].m()));
  }
  return total;
}

double Criterion::value(const Design& design) const {
  const auto atoms = to_atoms(design);
  return value(atoms);
}

std::vector<double> Criterion::efficiencies(const Design& design) const {
  std::vector<double> eff;
  if (!compound_) return eff;
  const auto atoms = to_atoms(design);
  for (std::size_t k = 0; k < models_.size(); ++k) {
    const double ld = log_det_criterion(information(k, atoms));
    eff.push_back(ld == kNegInf ? 0.0
                                : std::exp((ld - reference_logdet_[k]) / static_cast<double>(models_[k].m())));
  }
  return eff;
}

Sensitivity Criterion::sensitivity(std::span<const Atom> atoms) const {
  Sensitivity s;
  s.criterion_ = this;
  s.factors_.resize(models_.size());
  s.equilibration_.resize(models_.size());
  s.coefficients_.assign(models_.size(), 0.0);
  double norm = 0.0;
  for (std::size_t k = 0; k < models_.size(); ++k) {
    if (priors_[k] == 0.0) continue;
    const Eigen::MatrixXd info = information(k, atoms);
    const double ld = log_det_criterion(info);
    if (ld == kNegInf) continue;
    Sensitivity::MatrixXld ext = Sensitivity::MatrixXld::Zero(info.rows(), info.cols());
    for (const auto& a : atoms) {
      if (a.weight == 0.0) continue;
      const Sensitivity::VectorXld h = gradient(models_[k], a.group, a.dose).cast<long double>();
      ext.noalias() += static_cast<long double>(a.weight) * h * h.transpose();
    }
    s.equilibration_[k] = ext.diagonal().cwiseSqrt().cwiseInverse();
    s.factors_[k].compute(s.equilibration_[k].asDiagonal() * ext * s.equilibration_[k].asDiagonal());
    if (s.factors_[k].info() != Eigen::Success) continue;
    const double mk = static_cast<double>(models_[k].m());
    const double weight = compound_ ? priors_[k] * std::exp((ld - reference_logdet_[k]) / mk) : 1.0;
    s.coefficients_[k] = weight / mk;
    norm += weight;
  }
  if (!(norm > 0.0)) throw SingularMatrixError("sensitivity: information matrix is singular");
  for (double& c : s.coefficients_) c /= norm;
  s.scale_ = compound_ ? 1.0 : static_cast<double>(models_[0].m());
  return s;
}

Sensitivity Criterion::sensitivity(const Design& design) const {
  const auto atoms = to_atoms(design);
  return sensitivity(atoms);
}

WeightDerivatives Criterion::weight_derivatives(std::span<const Atom> atoms) const {
  const auto n = static_cast<Eigen::Index>(atoms.size());
  WeightDerivatives out{compound_ ? 0.0 : kNegInf, Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Zero(n, n)};
  bool any = false;
  for (std::size_t k = 0; k < models_.size(); ++k) {
    if (priors_[k] == 0.0) continue;
    const ModelSpec& spec = models_[k];
    const auto m = static_cast<Eigen::Index>(spec.m());
    Eigen::MatrixXd H(m, n);
    for (Eigen::Index j = 0; j < n; ++j) H.col(j) = gradient(spec, atoms[j].group, atoms[j].dose);
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (atoms[j].weight != 0.0) info.selfadjointView<Eigen::Lower>().rankUpdate(H.col(j), atoms[j].weight);
    }
    info = info.selfadjointView<Eigen::Lower>();
    const double ld = log_det_criterion(info);
    if (ld == kNegInf) continue;
    Eigen::LLT<Eigen::MatrixXd> llt(info);
    if (llt.info() != Eigen::Success) continue;
    const Eigen::MatrixXd G = H.transpose() * llt.solve(H);
    const Eigen::VectorXd diag = G.diagonal();
    any = true;
    if (!compound_) {
      out.value = ld;
      out.gradient = diag;
      out.hessian = -G.cwiseProduct(G);
      continue;
    }
    const double mk = static_cast<double>(m);
    const double eff = std::exp((ld - reference_logdet_[k]) / mk);
    const double c = priors_[k] * eff;
    out.value += c;
    out.gradient += c / mk * diag;
    out.hessian += c * (diag * diag.transpose() / (mk * mk) - G.cwiseProduct(G) / mk);
  }
  if (!any) {
    out.gradient.resize(0);
    out.hessian.resize(0, 0);
  }
  return out;
}

}  // namespace doseopt
