#include "hiermodel/sem.hpp"

#include "hiermodel/distributions.hpp"
#include "hiermodel/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace hiermodel {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Plain Cholesky that reports the smallest pivot (the value that went
// nonpositive on failure).
bool cholesky(const Eigen::MatrixXd& a, Eigen::MatrixXd& l, double& min_pivot) {
  const int n = static_cast<int>(a.rows());
  l = Eigen::MatrixXd::Zero(n, n);
  min_pivot = std::numeric_limits<double>::infinity();
  for (int j = 0; j < n; ++j) {
    double d = a(j, j) - l.row(j).head(j).squaredNorm();
    min_pivot = std::min(min_pivot, d);
    if (!(d > 0.0)) return false;  // also catches NaN
    l(j, j) = std::sqrt(d);
    for (int i = j + 1; i < n; ++i)
      l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
  }
  return true;
}

double log_det_from_chol(const Eigen::MatrixXd& l) {
  double s = 0.0;
  for (int i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

Eigen::MatrixXd inverse_from_chol(const Eigen::MatrixXd& l) {
  const int n = static_cast<int>(l.rows());
  const Eigen::MatrixXd linv =
      l.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n, n));
  return linv.transpose() * linv;
}

// All model parameters on the natural scale, free and fixed together.
struct Slots {
  Eigen::VectorXd lambda;
  double gamma = 0.0;
  double psi = 0.0;
  Eigen::VectorXd theta;
  double vx = 0.0;
  bool has_x = false;
};

enum class Kind { Loading, Gamma, Psi, Theta, ExoVar };

struct FreeSlot {
  Kind kind;
  int index;         // indicator index for Loading/Theta
  bool is_variance;  // log-transformed during optimization
};

std::vector<FreeSlot> free_slots(const PathModel& m) {
  std::vector<FreeSlot> out;
  for (std::size_t i = 0; i < m.loadings.size(); ++i)
    if (m.loadings[i].free) out.push_back({Kind::Loading, static_cast<int>(i), false});
  if (!m.exogenous.empty() && m.structural.free)
    out.push_back({Kind::Gamma, 0, false});
  if (m.factor_residual.free) out.push_back({Kind::Psi, 0, true});
  for (std::size_t i = 0; i < m.error_variances.size(); ++i)
    if (m.error_variances[i].free)
      out.push_back({Kind::Theta, static_cast<int>(i), true});
  if (!m.exogenous.empty() && m.exogenous_variance.free)
    out.push_back({Kind::ExoVar, 0, true});
  return out;
}

Slots unpack(const PathModel& m, const Eigen::VectorXd& values) {
  const int k = static_cast<int>(m.indicators.size());
  Slots s;
  s.has_x = !m.exogenous.empty();
  s.lambda.resize(k);
  s.theta.resize(k);
  for (int i = 0; i < k; ++i) {
    s.lambda[i] = m.loadings[i].free ? 0.0 : m.loadings[i].value;
    s.theta[i] = m.error_variances[i].free ? 0.0 : m.error_variances[i].value;
  }
  s.gamma = m.structural.free ? 0.0 : m.structural.value;
  s.psi = m.factor_residual.free ? 0.0 : m.factor_residual.value;
  s.vx = m.exogenous_variance.free ? 0.0 : m.exogenous_variance.value;

  const auto slots = free_slots(m);
  if (values.size() != static_cast<Eigen::Index>(slots.size()))
    throw std::invalid_argument("parameter vector length does not match the "
                                "model's free-parameter count");
  for (std::size_t j = 0; j < slots.size(); ++j) {
    const double v = values[static_cast<Eigen::Index>(j)];
    switch (slots[j].kind) {
      case Kind::Loading: s.lambda[slots[j].index] = v; break;
      case Kind::Gamma: s.gamma = v; break;
      case Kind::Psi: s.psi = v; break;
      case Kind::Theta: s.theta[slots[j].index] = v; break;
      case Kind::ExoVar: s.vx = v; break;
    }
  }
  return s;
}

double factor_variance(const Slots& s) {
  return s.has_x ? s.gamma * s.gamma * s.vx + s.psi : s.psi;
}

Eigen::MatrixXd implied_from_slots(const Slots& s) {
  const int k = static_cast<int>(s.lambda.size());
  const int off = s.has_x ? 1 : 0;
  const double veta = factor_variance(s);
  Eigen::MatrixXd sig(k + off, k + off);
  if (s.has_x) {
    sig(0, 0) = s.vx;
    for (int i = 0; i < k; ++i)
      sig(0, i + off) = sig(i + off, 0) = s.lambda[i] * s.gamma * s.vx;
  }
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      sig(i + off, j + off) =
          s.lambda[i] * s.lambda[j] * veta + (i == j ? s.theta[i] : 0.0);
  return sig;
}

// dSigma/dtheta for one free slot, natural scale.
Eigen::MatrixXd implied_derivative(const Slots& s, const FreeSlot& slot) {
  const int k = static_cast<int>(s.lambda.size());
  const int off = s.has_x ? 1 : 0;
  const double veta = factor_variance(s);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(k + off, k + off);
  switch (slot.kind) {
    case Kind::Loading: {
      const int a = slot.index;
      if (s.has_x) d(0, a + off) = d(a + off, 0) = s.gamma * s.vx;
      for (int j = 0; j < k; ++j) {
        d(a + off, j + off) += s.lambda[j] * veta;
        d(j + off, a + off) += s.lambda[j] * veta;
      }
      break;
    }
    case Kind::Gamma: {
      const double dveta = 2.0 * s.gamma * s.vx;
      for (int i = 0; i < k; ++i) {
        d(0, i + off) = d(i + off, 0) = s.lambda[i] * s.vx;
        for (int j = 0; j < k; ++j)
          d(i + off, j + off) = s.lambda[i] * s.lambda[j] * dveta;
      }
      break;
    }
    case Kind::Psi:
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
          d(i + off, j + off) = s.lambda[i] * s.lambda[j];
      break;
    case Kind::Theta:
      d(slot.index + off, slot.index + off) = 1.0;
      break;
    case Kind::ExoVar: {
      d(0, 0) = 1.0;
      const double g2 = s.gamma * s.gamma;
      for (int i = 0; i < k; ++i) {
        d(0, i + off) = d(i + off, 0) = s.lambda[i] * s.gamma;
        for (int j = 0; j < k; ++j)
          d(i + off, j + off) += s.lambda[i] * s.lambda[j] * g2;
      }
      break;
    }
  }
  return d;
}

void validate(const PathModel& m) {
  const std::size_t k = m.indicators.size();
  if (k == 0) throw std::invalid_argument("model has no indicators");
  if (m.loadings.size() != k || m.error_variances.size() != k)
    throw std::invalid_argument(
        "loading / error-variance pattern length must match indicator count");
  bool metric = !m.factor_residual.free;
  for (const auto& l : m.loadings)
    if (!l.free && l.value != 0.0) metric = true;
  if (!metric)
    throw std::invalid_argument(
        "model not identified: fix a nonzero loading or the factor variance "
        "to set the latent metric");
  if (m.degrees_of_freedom() < 0)
    throw std::invalid_argument("model not identified: negative degrees of freedom");
}

Eigen::MatrixXd extract_sample(const PathModel& m, const SampleCov& sample) {
  const auto obs = m.observed();
  std::vector<int> idx;
  for (const auto& name : obs) {
    const auto it =
        std::find(sample.variables.begin(), sample.variables.end(), name);
    if (it == sample.variables.end())
      throw std::invalid_argument("sample covariance is missing variable '" +
                                  name + "'");
    idx.push_back(static_cast<int>(it - sample.variables.begin()));
  }
  const int p = static_cast<int>(obs.size());
  Eigen::MatrixXd s(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) s(i, j) = sample.covariance(idx[i], idx[j]);
  return s;
}

} // namespace

std::vector<std::string> PathModel::observed() const {
  std::vector<std::string> out;
  if (!exogenous.empty()) out.push_back(exogenous);
  out.insert(out.end(), indicators.begin(), indicators.end());
  return out;
}

int PathModel::n_free() const {
  return static_cast<int>(free_slots(*this).size());
}

int PathModel::degrees_of_freedom() const {
  const int p = n_observed();
  return p * (p + 1) / 2 - n_free();
}

PathModel PathModel::mimic(const std::string& exogenous,
                           const std::vector<std::string>& indicators,
                           int metric_indicator) {
  PathModel m;
  m.latent = "factor";
  m.exogenous = exogenous;
  m.indicators = indicators;
  m.loadings.assign(indicators.size(), Param::free_at(1.0));
  m.loadings.at(metric_indicator) = Param::fixed(1.0);
  m.structural = Param::free_at(0.0);
  m.factor_residual = Param::free_at(kNaN);
  m.error_variances.assign(indicators.size(), Param::free_at(kNaN));
  m.exogenous_variance = Param::fixed(kNaN);  // filled from the sample
  return m;
}

std::vector<std::string> parameter_names(const PathModel& model) {
  std::vector<std::string> out;
  for (const auto& slot : free_slots(model)) {
    switch (slot.kind) {
      case Kind::Loading: out.push_back("lambda." + model.indicators[slot.index]); break;
      case Kind::Gamma: out.push_back("gamma"); break;
      case Kind::Psi: out.push_back("psi"); break;
      case Kind::Theta: out.push_back("theta." + model.indicators[slot.index]); break;
      case Kind::ExoVar: out.push_back("var." + model.exogenous); break;
    }
  }
  return out;
}

Eigen::MatrixXd implied_covariance(const PathModel& model,
                                   const Eigen::VectorXd& free_values) {
  return implied_from_slots(unpack(model, free_values));
}

double fml(const Eigen::MatrixXd& sample, const Eigen::MatrixXd& implied) {
  if (sample.rows() != implied.rows() || sample.cols() != implied.cols())
    throw std::invalid_argument("fml: dimension mismatch");
  const int p = static_cast<int>(sample.rows());
  Eigen::MatrixXd ls, li;
  double pivot;
  if (!cholesky(sample, ls, pivot)) {
    std::ostringstream os;
    os << "fml: sample covariance not positive definite (smallest pivot "
       << pivot << ")";
    throw std::invalid_argument(os.str());
  }
  const double log_det_s = log_det_from_chol(ls);
  if (!cholesky(implied, li, pivot)) {
    std::ostringstream os;
    os << "fml: implied covariance not positive definite (smallest pivot "
       << pivot << ")";
    throw std::invalid_argument(os.str());
  }
  const double log_det_i = log_det_from_chol(li);
  const double trace = (sample.cwiseProduct(inverse_from_chol(li))).sum();
  return std::max(0.0, log_det_i + trace - log_det_s - p);
}

Eigen::VectorXd fml_gradient(const PathModel& model,
                             const Eigen::VectorXd& free_values,
                             const Eigen::MatrixXd& sample) {
  const Slots s = unpack(model, free_values);
  const Eigen::MatrixXd sig = implied_from_slots(s);
  Eigen::MatrixXd l;
  double pivot;
  if (!cholesky(sig, l, pivot))
    throw std::invalid_argument("fml_gradient: implied covariance not PD");
  const Eigen::MatrixXd sig_inv = inverse_from_chol(l);
  // dF = tr[(Sigma^-1 - Sigma^-1 S Sigma^-1) dSigma]
  const Eigen::MatrixXd g = sig_inv - sig_inv * sample * sig_inv;
  const auto slots = free_slots(model);
  Eigen::VectorXd grad(static_cast<Eigen::Index>(slots.size()));
  for (std::size_t j = 0; j < slots.size(); ++j)
    grad[static_cast<Eigen::Index>(j)] =
        g.cwiseProduct(implied_derivative(s, slots[j])).sum();
  return grad;
}

Standardized standardize(const PathModel& model,
                         const Eigen::VectorXd& free_values) {
  const Slots s = unpack(model, free_values);
  const Eigen::MatrixXd sig = implied_from_slots(s);
  const double veta = factor_variance(s);
  if (veta <= 0.0)
    throw std::invalid_argument("standardize: nonpositive latent variance");
  const int k = static_cast<int>(s.lambda.size());
  const int off = s.has_x ? 1 : 0;
  Standardized out;
  out.loadings_std.resize(k);
  for (int i = 0; i < k; ++i) {
    const double vy = sig(i + off, i + off);
    if (vy <= 0.0)
      throw std::invalid_argument("standardize: zero implied variance for '" +
                                  model.indicators[i] + "'");
    out.loadings_std[i] = s.lambda[i] * std::sqrt(veta / vy);
  }
  out.gamma_std = s.has_x ? s.gamma * std::sqrt(s.vx / veta) : 0.0;
  out.residual_variance_std = s.psi / veta;
  out.r2_latent = 1.0 - out.residual_variance_std;
  return out;
}

FitReport fit_ml(const PathModel& model_in, const SampleCov& sample, int n) {
  PathModel model = model_in;
  validate(model);
  if (n < 2) throw std::invalid_argument("fit_ml: need n >= 2");
  const Eigen::MatrixXd s = extract_sample(model, sample);
  {
    Eigen::MatrixXd l;
    double pivot;
    if (!cholesky(s, l, pivot)) {
      std::ostringstream os;
      os << "fit_ml: sample covariance not positive definite (smallest pivot "
         << pivot << ")";
      throw std::invalid_argument(os.str());
    }
  }
  const int k = static_cast<int>(model.indicators.size());
  const int off = model.exogenous.empty() ? 0 : 1;

  // fixed exogenous variance defaults to the sample value
  if (!model.exogenous.empty() && !model.exogenous_variance.free &&
      std::isnan(model.exogenous_variance.value))
    model.exogenous_variance.value = s(0, 0);

  // metric indicator = first fixed nonzero loading, used for the psi start
  int metric = 0;
  for (int i = 0; i < k; ++i)
    if (!model.loadings[i].free && model.loadings[i].value != 0.0) {
      metric = i;
      break;
    }

  const auto slots = free_slots(model);
  const int nf = static_cast<int>(slots.size());
  Eigen::VectorXd start(nf);
  for (int j = 0; j < nf; ++j) {
    const auto& slot = slots[j];
    double v = kNaN;
    switch (slot.kind) {
      case Kind::Loading: v = model.loadings[slot.index].value; if (std::isnan(v)) v = 1.0; break;
      case Kind::Gamma: v = model.structural.value; if (std::isnan(v)) v = 0.0; break;
      case Kind::Psi:
        v = model.factor_residual.value;
        if (std::isnan(v)) v = 0.5 * s(metric + off, metric + off);
        break;
      case Kind::Theta:
        v = model.error_variances[slot.index].value;
        if (std::isnan(v)) v = 0.5 * s(slot.index + off, slot.index + off);
        break;
      case Kind::ExoVar:
        v = model.exogenous_variance.value;
        if (std::isnan(v)) v = s(0, 0);
        break;
    }
    start[j] = slot.is_variance ? std::log(v) : v;
  }

  const auto to_natural = [&](const Eigen::VectorXd& z) {
    Eigen::VectorXd v = z;
    for (int j = 0; j < nf; ++j)
      if (slots[j].is_variance) v[j] = std::exp(z[j]);
    return v;
  };

  const Objective objective = [&](const Eigen::VectorXd& z,
                                  Eigen::VectorXd& grad) -> double {
    const Eigen::VectorXd v = to_natural(z);
    const Eigen::MatrixXd sig = implied_from_slots(unpack(model, v));
    Eigen::MatrixXd l;
    double pivot;
    if (!cholesky(sig, l, pivot)) {
      grad = Eigen::VectorXd::Zero(nf);
      return std::numeric_limits<double>::infinity();
    }
    grad = fml_gradient(model, v, s);
    for (int j = 0; j < nf; ++j)
      if (slots[j].is_variance) grad[j] *= v[j];  // chain rule for log scale
    const double log_det_i = log_det_from_chol(l);
    Eigen::MatrixXd ls;
    cholesky(s, ls, pivot);
    const double trace = (s.cwiseProduct(inverse_from_chol(l))).sum();
    return log_det_i + trace - log_det_from_chol(ls) - (k + off);
  };

  const MinimizeResult opt = minimize_bfgs(objective, start);
  if (!opt.converged) {
    std::ostringstream os;
    os << "fit_ml: no convergence after " << opt.iterations
       << " iterations (gradient inf-norm " << opt.grad_norm << ")";
    throw std::runtime_error(os.str());
  }

  FitReport report;
  report.parameter_names = parameter_names(model);
  report.estimates = to_natural(opt.x);
  report.fml = std::max(0.0, opt.f);
  report.chi_square = (n - 1) * report.fml;
  report.df = model.degrees_of_freedom();
  report.p = report.df > 0 ? chi2_upper_tail(report.chi_square, report.df) : 1.0;
  report.n = n;
  report.implied_covariance = implied_covariance(model, report.estimates);
  report.standardized = standardize(model, report.estimates);
  report.converged = true;
  report.grad_norm = opt.grad_norm;
  report.iterations = opt.iterations;

  // SEs from the observed information (n-1)/2 * Hessian of fml, Hessian by
  // central differences of the analytic gradient on the natural scale.
  if (nf > 0) {
    Eigen::MatrixXd hess(nf, nf);
    for (int j = 0; j < nf; ++j) {
      const double h = std::max(1e-5 * std::fabs(report.estimates[j]), 1e-7);
      Eigen::VectorXd vp = report.estimates, vm = report.estimates;
      vp[j] += h;
      vm[j] -= h;
      hess.col(j) = (fml_gradient(model, vp, s) - fml_gradient(model, vm, s)) /
                    (2.0 * h);
    }
    hess = 0.5 * (hess + hess.transpose().eval());
    const Eigen::MatrixXd info = 0.5 * (n - 1) * hess;
    Eigen::MatrixXd l;
    double pivot;
    if (cholesky(info, l, pivot)) {
      const Eigen::MatrixXd cov = inverse_from_chol(l);
      report.standard_errors.resize(nf);
      for (int j = 0; j < nf; ++j)
        report.standard_errors[j] = std::sqrt(std::max(0.0, cov(j, j)));
      report.se_available = true;
    } else {
      report.warnings.push_back(
          "information matrix not positive definite; standard errors omitted");
    }
  }
  return report;
}

} // namespace hiermodel
