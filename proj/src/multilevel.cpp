#include "hiermodel/multilevel.hpp"

#include "hiermodel/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace hiermodel {

namespace {

struct Kahan {
  double sum = 0.0;
  double carry = 0.0;
  void add(double x) {
    const double y = x - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
};

bool cholesky_pd(const Eigen::MatrixXd& a, Eigen::MatrixXd& l) {
  const int n = static_cast<int>(a.rows());
  l = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    const double d = a(j, j) - l.row(j).head(j).squaredNorm();
    if (!(d > 0.0)) return false;  // also catches NaN
    l(j, j) = std::sqrt(d);
    for (int i = j + 1; i < n; ++i)
      l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
  }
  return true;
}

// Cholesky tolerant of exact rank deficiency (zero pivots allowed).
bool cholesky_psd(const Eigen::MatrixXd& a, Eigen::MatrixXd& l) {
  const int n = static_cast<int>(a.rows());
  const double tol = 1e-10 * std::max(1.0, a.diagonal().cwiseAbs().maxCoeff());
  l = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    const double d = a(j, j) - l.row(j).head(j).squaredNorm();
    if (std::isnan(d) || d < -tol) return false;
    if (d <= tol) continue;  // zero pivot, column stays zero
    l(j, j) = std::sqrt(d);
    for (int i = j + 1; i < n; ++i)
      l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
  }
  return true;
}

double fml_or_inf(const Eigen::MatrixXd& s, const Eigen::MatrixXd& sig,
                  Eigen::MatrixXd& sig_inv) {
  Eigen::MatrixXd l;
  if (!cholesky_pd(sig, l)) return std::numeric_limits<double>::infinity();
  const int n = static_cast<int>(s.rows());
  const Eigen::MatrixXd linv =
      l.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n, n));
  sig_inv = linv.transpose() * linv;
  double log_det_sig = 0.0;
  for (int i = 0; i < n; ++i) log_det_sig += 2.0 * std::log(l(i, i));
  Eigen::MatrixXd ls;
  if (!cholesky_pd(s, ls))
    throw std::invalid_argument("fml: sample matrix not positive definite");
  double log_det_s = 0.0;
  for (int i = 0; i < n; ++i) log_det_s += 2.0 * std::log(ls(i, i));
  return log_det_sig + s.cwiseProduct(sig_inv).sum() - log_det_s - n;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

} // namespace

TwoLevelMoments decompose_two_level(const DataTable& table,
                                    const std::vector<std::string>& vars) {
  if (table.cluster_labels.empty())
    throw std::invalid_argument("decompose_two_level: table has no cluster column");
  if (vars.empty())
    throw std::invalid_argument("decompose_two_level: empty variable list");
  std::vector<int> idx;
  for (const auto& v : vars) idx.push_back(table.column_index(v));
  const int p = static_cast<int>(vars.size());
  const int n = table.n_rows();

  std::map<std::string, std::pair<int, Eigen::VectorXd>> sums;
  for (int r = 0; r < n; ++r) {
    auto& [cnt, s] = sums[table.cluster_labels[r]];
    if (cnt == 0) s = Eigen::VectorXd::Zero(p);
    ++cnt;
    for (int j = 0; j < p; ++j) s[j] += table.values(r, idx[j]);
  }
  const int jc = static_cast<int>(sums.size());
  if (jc < 2)
    throw std::invalid_argument("decompose_two_level: need at least two clusters");
  if (n - jc < 1)
    throw std::invalid_argument(
        "decompose_two_level: all clusters are singletons, no within variation");

  TwoLevelMoments m;
  m.variables = vars;
  m.n_total = n;
  m.j_clusters = jc;

  std::map<std::string, Eigen::VectorXd> means;
  m.grand_mean = Eigen::VectorXd::Zero(p);
  double sum_nj2 = 0.0;
  for (const auto& [label, cs] : sums) {
    means[label] = cs.second / cs.first;
    m.cluster_sizes.push_back(cs.first);
    m.grand_mean += cs.second;
    sum_nj2 += static_cast<double>(cs.first) * cs.first;
  }
  m.grand_mean /= n;
  m.c_scale = (static_cast<double>(n) * n - sum_nj2) / (n * (jc - 1.0));

  m.s_pw = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd dev(p);
  for (int r = 0; r < n; ++r) {
    const Eigen::VectorXd& cm = means[table.cluster_labels[r]];
    for (int j = 0; j < p; ++j) dev[j] = table.values(r, idx[j]) - cm[j];
    m.s_pw.noalias() += dev * dev.transpose();
  }
  m.s_pw /= (n - jc);

  m.s_b = Eigen::MatrixXd::Zero(p, p);
  for (const auto& [label, cm] : means) {
    const Eigen::VectorXd d = cm - m.grand_mean;
    m.s_b.noalias() += sums[label].first * (d * d.transpose());
  }
  m.s_b /= (jc - 1);
  return m;
}

VarianceComponents variance_components(const TwoLevelMoments& moments) {
  if (moments.variables.size() != 1)
    throw std::invalid_argument("variance_components: single outcome required");
  VarianceComponents vc;
  vc.gamma00 = moments.grand_mean[0];
  vc.sigma2_within = moments.s_pw(0, 0);
  const double between = (moments.s_b(0, 0) - vc.sigma2_within) / moments.c_scale;
  vc.truncated = between < 0.0;
  vc.sigma2_between = std::max(0.0, between);
  vc.icc = vc.sigma2_between / (vc.sigma2_between + vc.sigma2_within);
  return vc;
}

VarianceComponents fit_random_intercept(const DataTable& table,
                                        const std::string& outcome) {
  return variance_components(decompose_two_level(table, {outcome}));
}

TwoLevelImplied implied_two_level(const TwoLevelModel& model) {
  const auto p = model.loadings.rows();
  if (model.factor_cov.rows() != model.loadings.cols() ||
      model.factor_cov.rows() != model.factor_cov.cols())
    throw std::invalid_argument("implied_two_level: factor covariance dimension "
                                "does not match loadings");
  if (model.theta_within.rows() != p || model.theta_between.rows() != p)
    throw std::invalid_argument(
        "implied_two_level: residual covariance dimension mismatch");
  if (model.intercepts.size() != p)
    throw std::invalid_argument("implied_two_level: intercept length mismatch");
  if (model.between_loadings.rows() != p ||
      model.between_loadings.cols() != model.latent_means.size())
    throw std::invalid_argument(
        "implied_two_level: between loadings / latent means mismatch");

  TwoLevelImplied out;
  const Eigen::MatrixXd common =
      model.loadings * model.factor_cov * model.loadings.transpose();
  out.sigma_w = common + model.theta_within;
  out.sigma_b = common + model.theta_between;
  out.mu = model.intercepts + model.between_loadings * model.latent_means;
  return out;
}

TwoLevelFit fit_two_level_sem(const TwoLevelMoments& moments,
                              const TwoLevelSemPattern& pattern) {
  const int p = static_cast<int>(pattern.indicators.size());
  if (p == 0 || moments.s_pw.rows() != p)
    throw std::invalid_argument(
        "fit_two_level_sem: pattern does not match moment dimension");
  if (pattern.loadings.size() != static_cast<std::size_t>(p) ||
      pattern.theta_within.size() != static_cast<std::size_t>(p) ||
      pattern.theta_between.size() != static_cast<std::size_t>(p))
    throw std::invalid_argument("fit_two_level_sem: pattern length mismatch");
  {
    bool metric = !pattern.factor_variance.free;
    for (const auto& l : pattern.loadings)
      if (!l.free && l.value != 0.0) metric = true;
    if (!metric)
      throw std::invalid_argument(
          "fit_two_level_sem: fix a nonzero loading or the factor variance");
  }

  const double c = moments.c_scale;
  const double w1 =
      static_cast<double>(moments.n_total - moments.j_clusters) /
      (moments.n_total - 1);
  const double w2 =
      static_cast<double>(moments.j_clusters - 1) / (moments.n_total - 1);

  const bool separate_psi_b = pattern.between_factor_variance.has_value();
  const bool psi_b_free = separate_psi_b && pattern.between_factor_variance->free;

  // slot order: free loadings, psi, psi_b, free theta_w, free theta_b
  enum class K { Lam, Psi, PsiB, ThW, ThB };
  struct Slot { K kind; int index; };
  std::vector<Slot> slots;
  for (int i = 0; i < p; ++i)
    if (pattern.loadings[i].free) slots.push_back({K::Lam, i});
  if (pattern.factor_variance.free) slots.push_back({K::Psi, 0});
  if (psi_b_free) slots.push_back({K::PsiB, 0});
  for (int i = 0; i < p; ++i)
    if (pattern.theta_within[i].free) slots.push_back({K::ThW, i});
  for (int i = 0; i < p; ++i)
    if (pattern.theta_between[i].free) slots.push_back({K::ThB, i});
  const int nf = static_cast<int>(slots.size());

  const double base_var = moments.s_pw.diagonal().mean();

  struct Values {
    Eigen::VectorXd lam, thw, thb;
    double psi = 0.0, psi_b = 0.0;
  };
  const auto unpack = [&](const Eigen::VectorXd& z) {
    Values v;
    v.lam.resize(p);
    v.thw.resize(p);
    v.thb.resize(p);
    for (int i = 0; i < p; ++i) {
      v.lam[i] = pattern.loadings[i].free ? 0.0 : pattern.loadings[i].value;
      v.thw[i] = pattern.theta_within[i].free ? 0.0 : pattern.theta_within[i].value;
      v.thb[i] = pattern.theta_between[i].free ? 0.0 : pattern.theta_between[i].value;
    }
    v.psi = pattern.factor_variance.free ? 0.0 : pattern.factor_variance.value;
    v.psi_b = separate_psi_b && !psi_b_free ? pattern.between_factor_variance->value
                                            : 0.0;
    for (int j = 0; j < nf; ++j) {
      const bool is_var = slots[j].kind != K::Lam;
      const double x = is_var ? std::exp(z[j]) : z[j];
      switch (slots[j].kind) {
        case K::Lam: v.lam[slots[j].index] = x; break;
        case K::Psi: v.psi = x; break;
        case K::PsiB: v.psi_b = x; break;
        case K::ThW: v.thw[slots[j].index] = x; break;
        case K::ThB: v.thb[slots[j].index] = x; break;
      }
    }
    if (!separate_psi_b) v.psi_b = v.psi;
    return v;
  };

  const auto structures = [&](const Values& v) {
    const Eigen::MatrixXd ll = v.lam * v.lam.transpose();
    Eigen::MatrixXd sigma_w = ll * v.psi;
    sigma_w.diagonal() += v.thw;
    Eigen::MatrixXd sigma_bs = ll * (v.psi + c * v.psi_b);
    sigma_bs.diagonal() += v.thw + c * v.thb;
    return std::make_pair(sigma_w, sigma_bs);
  };

  const Objective objective = [&](const Eigen::VectorXd& z,
                                  Eigen::VectorXd& grad) -> double {
    const Values v = unpack(z);
    const auto [sigma_w, sigma_bs] = structures(v);
    Eigen::MatrixXd w_inv, b_inv;
    const double fw = fml_or_inf(moments.s_pw, sigma_w, w_inv);
    const double fb = fml_or_inf(moments.s_b, sigma_bs, b_inv);
    if (!std::isfinite(fw) || !std::isfinite(fb)) {
      grad = Eigen::VectorXd::Zero(nf);
      return std::numeric_limits<double>::infinity();
    }
    const Eigen::MatrixXd gw =
        w1 * (w_inv - w_inv * moments.s_pw * w_inv);
    const Eigen::MatrixXd gb =
        w2 * (b_inv - b_inv * moments.s_b * b_inv);

    const double psi_tot_b = v.psi + c * v.psi_b;
    const Eigen::VectorXd gw_lam = gw * v.lam;
    const Eigen::VectorXd gb_lam = gb * v.lam;
    const double tr_gw_ll = v.lam.dot(gw_lam);
    const double tr_gb_ll = v.lam.dot(gb_lam);

    grad.resize(nf);
    for (int j = 0; j < nf; ++j) {
      const int i = slots[j].index;
      double g = 0.0;
      switch (slots[j].kind) {
        case K::Lam:
          g = 2.0 * v.psi * gw_lam[i] + 2.0 * psi_tot_b * gb_lam[i];
          break;
        case K::Psi:
          g = tr_gw_ll + (separate_psi_b ? 1.0 : 1.0 + c) * tr_gb_ll;
          g *= v.psi;  // log scale
          break;
        case K::PsiB:
          g = c * tr_gb_ll * v.psi_b;
          break;
        case K::ThW:
          g = (gw(i, i) + gb(i, i)) * v.thw[i];
          break;
        case K::ThB:
          g = c * gb(i, i) * v.thb[i];
          break;
      }
      grad[j] = g;
    }
    return w1 * fw + w2 * fb;
  };

  Eigen::VectorXd start(nf);
  for (int j = 0; j < nf; ++j) {
    double v;
    switch (slots[j].kind) {
      case K::Lam:
        v = pattern.loadings[slots[j].index].value;
        if (std::isnan(v)) v = 1.0;
        start[j] = v;
        continue;
      case K::Psi: v = pattern.factor_variance.value; break;
      case K::PsiB: v = pattern.between_factor_variance->value; break;
      case K::ThW: v = pattern.theta_within[slots[j].index].value; break;
      case K::ThB: v = pattern.theta_between[slots[j].index].value; break;
      default: v = std::numeric_limits<double>::quiet_NaN();
    }
    if (std::isnan(v) || v <= 0.0) v = 0.5 * base_var;
    start[j] = std::log(v);
  }

  MinimizeOptions opts;
  opts.max_iterations = 1000;
  const MinimizeResult opt = minimize_bfgs(objective, start, opts);
  if (!std::isfinite(opt.f)) {
    std::ostringstream os;
    os << "fit_two_level_sem: no convergence (gradient inf-norm "
       << opt.grad_norm << ")";
    throw std::runtime_error(os.str());
  }

  TwoLevelFit fit;
  const Values v = unpack(opt.x);
  for (int j = 0; j < nf; ++j) {
    const int i = slots[j].index;
    switch (slots[j].kind) {
      case K::Lam:
        fit.parameter_names.push_back("lambda." + pattern.indicators[i]);
        break;
      case K::Psi: fit.parameter_names.push_back("psi"); break;
      case K::PsiB: fit.parameter_names.push_back("psi.between"); break;
      case K::ThW:
        fit.parameter_names.push_back("theta_w." + pattern.indicators[i]);
        break;
      case K::ThB:
        fit.parameter_names.push_back("theta_b." + pattern.indicators[i]);
        break;
    }
  }
  fit.estimates.resize(nf);
  for (int j = 0; j < nf; ++j) {
    const bool is_var = slots[j].kind != K::Lam;
    fit.estimates[j] = is_var ? std::exp(opt.x[j]) : opt.x[j];
  }
  fit.discrepancy = opt.f;
  const Eigen::MatrixXd ll = v.lam * v.lam.transpose();
  fit.sigma_w_hat = ll * v.psi;
  fit.sigma_w_hat.diagonal() += v.thw;
  fit.sigma_b_hat = ll * v.psi_b;
  fit.sigma_b_hat.diagonal() += v.thb;
  fit.converged = opt.converged;
  fit.grad_norm = opt.grad_norm;
  fit.iterations = opt.iterations;
  return fit;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master ^ splitmix64(index));
}

DataTable generate_clustered(const ClusterSimParams& params,
                             const std::vector<int>& cluster_sizes,
                             std::uint64_t seed,
                             std::vector<std::string> var_names) {
  const int p = static_cast<int>(params.mu.size());
  if (params.sigma_b.rows() != p || params.sigma_w.rows() != p)
    throw std::invalid_argument("generate_clustered: dimension mismatch");
  Eigen::MatrixXd lb, lw;
  if (!cholesky_psd(params.sigma_b, lb))
    throw std::invalid_argument("generate_clustered: sigma_b is not PSD");
  if (!cholesky_pd(params.sigma_w, lw))
    throw std::invalid_argument("generate_clustered: sigma_w is not PD");
  if (cluster_sizes.empty())
    throw std::invalid_argument("generate_clustered: no clusters requested");
  for (int nj : cluster_sizes)
    if (nj < 1)
      throw std::invalid_argument("generate_clustered: cluster size must be >= 1");

  if (var_names.empty())
    for (int j = 0; j < p; ++j) var_names.push_back("v" + std::to_string(j + 1));
  if (static_cast<int>(var_names.size()) != p)
    throw std::invalid_argument("generate_clustered: variable name count mismatch");

  int n = 0;
  for (int nj : cluster_sizes) n += nj;

  DataTable table;
  table.columns = std::move(var_names);
  table.cluster_column = "cluster";
  table.values.resize(n, p);
  table.cluster_labels.reserve(n);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(p);
  int row = 0;
  for (std::size_t jc = 0; jc < cluster_sizes.size(); ++jc) {
    const std::string label = "c" + std::to_string(jc + 1);
    for (int j = 0; j < p; ++j) z[j] = normal(rng);
    const Eigen::VectorXd u = lb * z;
    for (int i = 0; i < cluster_sizes[jc]; ++i) {
      for (int j = 0; j < p; ++j) z[j] = normal(rng);
      table.values.row(row) = (params.mu + u + lw * z).transpose();
      table.cluster_labels.push_back(label);
      ++row;
    }
  }
  return table;
}

DataTable generate_clustered(const ClusterSimParams& params, int clusters,
                             int cluster_size, std::uint64_t seed,
                             std::vector<std::string> var_names) {
  if (clusters < 1)
    throw std::invalid_argument("generate_clustered: clusters must be >= 1");
  return generate_clustered(params, std::vector<int>(clusters, cluster_size),
                            seed, std::move(var_names));
}

SimulationSummary simulate_variance_recovery(const SimulationConfig& config,
                                             int threads) {
  if (config.replications < 1)
    throw std::invalid_argument("simulate: replications must be >= 1");
  if (config.clusters < 2)
    throw std::invalid_argument("simulate: clusters must be >= 2");
  if (config.cluster_size < 1)
    throw std::invalid_argument("simulate: cluster size must be >= 1");

  struct RepResult {
    double icc, s2w, s2b, grand_var;
    bool truncated;
  };
  std::vector<RepResult> results(config.replications);

  const auto worker = [&](int begin, int end) {
    for (int r = begin; r < end; ++r) {
      const DataTable t =
          generate_clustered(config.params, config.clusters, config.cluster_size,
                             derive_seed(config.seed, r));
      const TwoLevelMoments m = decompose_two_level(t, {t.columns[0]});
      const VarianceComponents vc = variance_components(m);
      const int col = 0;
      const int n = t.n_rows();
      const double mean = t.values.col(col).mean();
      const double var =
          (t.values.col(col).array() - mean).square().sum() / (n - 1);
      results[r] = {vc.icc, vc.sigma2_within, vc.sigma2_between, var,
                    vc.truncated};
    }
  };

  threads = std::max(1, std::min(threads, config.replications));
  if (threads == 1) {
    worker(0, config.replications);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (config.replications + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const int b = t * chunk;
      const int e = std::min(config.replications, b + chunk);
      if (b < e) pool.emplace_back(worker, b, e);
    }
    for (auto& th : pool) th.join();
  }

  // aggregate in replication order; thread count cannot change the result
  SimulationSummary s;
  s.replications = config.replications;
  Kahan icc, s2w, s2b, gv;
  s.min_icc = std::numeric_limits<double>::infinity();
  s.max_icc = -std::numeric_limits<double>::infinity();
  for (const auto& r : results) {
    icc.add(r.icc);
    s2w.add(r.s2w);
    s2b.add(r.s2b);
    gv.add(r.grand_var);
    s.min_icc = std::min(s.min_icc, r.icc);
    s.max_icc = std::max(s.max_icc, r.icc);
    if (r.truncated) ++s.truncated_count;
  }
  s.mean_icc = icc.sum / config.replications;
  s.mean_sigma2_within = s2w.sum / config.replications;
  s.mean_sigma2_between = s2b.sum / config.replications;
  s.mean_grand_variance = gv.sum / config.replications;
  return s;
}

} // namespace hiermodel
