#include "hiermodel/commands.hpp"

#include "hiermodel/fixture.hpp"
#include "hiermodel/manova.hpp"
#include "hiermodel/multilevel.hpp"
#include "hiermodel/univariate.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hiermodel {

namespace {

using nlohmann::json;

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open file: " + path);
  json j;
  in >> j;
  return j;
}

bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

struct LoadedData {
  GroupedData grouped;
  PooledMoments pooled;
  std::vector<std::string> notes;
  std::string default_reference;  // fixture codes male as the 0 group
};

std::pair<GroupedData, PooledMoments> summary_from_json(const json& j) {
  const std::vector<std::string> variables =
      j.at("variables").get<std::vector<std::string>>();
  std::vector<GroupSummary> groups;
  for (const auto& g : j.at("groups")) {
    GroupSummary gs;
    gs.label = g.at("label").get<std::string>();
    gs.n = g.at("n").get<int>();
    const auto mean = g.at("mean").get<std::vector<double>>();
    gs.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(),
                                                static_cast<Eigen::Index>(mean.size()));
    groups.push_back(std::move(gs));
  }
  const auto w = j.at("within_sscp").get<std::vector<std::vector<double>>>();
  const int p = static_cast<int>(variables.size());
  Eigen::MatrixXd within(p, p);
  if (static_cast<int>(w.size()) != p)
    throw std::invalid_argument("within_sscp row count does not match variables");
  for (int i = 0; i < p; ++i) {
    if (static_cast<int>(w[i].size()) != p)
      throw std::invalid_argument("within_sscp is not square");
    for (int k = 0; k < p; ++k) within(i, k) = w[i][k];
  }
  return moments_from_summary(variables, groups, within);
}

LoadedData load_grouped(const AnalysisRequest& req) {
  LoadedData out;
  if (!req.fixture.empty()) {
    if (req.fixture != "gender-achievement")
      throw std::invalid_argument("unknown fixture: " + req.fixture);
    std::tie(out.grouped, out.pooled) = GenderFixture::moments();
    out.notes.push_back(GenderFixture::correction_note());
    out.default_reference = "male";
    return out;
  }
  if (req.input.empty())
    throw std::invalid_argument("missing --input or --fixture");
  if (has_suffix(req.input, ".json")) {
    std::tie(out.grouped, out.pooled) = summary_from_json(load_json_file(req.input));
    return out;
  }
  if (req.group.empty())
    throw std::invalid_argument("missing --group for CSV input");
  CsvSchema schema;
  schema.group_column = req.group;
  schema.cluster_column = req.cluster;
  const DataTable table = ingest_csv_file(req.input, schema);
  const std::vector<std::string> vars =
      req.vars.empty() ? table.columns : req.vars;
  out.grouped = group_moments(table, req.group, vars);
  out.pooled = pool(out.grouped);
  return out;
}

ReportTable matrix_table(const std::string& title,
                         const std::vector<std::string>& names,
                         const Eigen::MatrixXd& m) {
  ReportTable t;
  t.title = title;
  t.column_headers = names;
  t.row_labels = names;
  for (int i = 0; i < m.rows(); ++i)
    t.cells.emplace_back(m.row(i).begin(), m.row(i).end());
  return t;
}

ReportTable stat_table(const std::string& title,
                       const std::vector<std::pair<std::string, double>>& stats) {
  ReportTable t;
  t.title = title;
  t.column_headers = {"value"};
  for (const auto& [name, v] : stats) {
    t.row_labels.push_back(name);
    t.cells.push_back({v});
  }
  return t;
}

Report cmd_describe(const AnalysisRequest& req) {
  LoadedData data = load_grouped(req);
  Report rep;
  ReportTable t;
  t.title = "Group descriptive statistics";
  t.row_labels = data.grouped.variables;
  for (const auto& g : data.grouped.groups) {
    t.column_headers.push_back(g.label + " mean");
    t.column_headers.push_back(g.label + " sd");
  }
  const int p = static_cast<int>(data.grouped.variables.size());
  for (int v = 0; v < p; ++v) {
    std::vector<double> row;
    for (const auto& g : data.grouped.groups) {
      row.push_back(g.mean[v]);
      row.push_back(g.n > 1 ? std::sqrt(g.within_sscp(v, v) / (g.n - 1)) : 0.0);
    }
    t.cells.push_back(std::move(row));
  }
  rep.tables.push_back(std::move(t));
  rep.tables.push_back(matrix_table("Correlations", data.pooled.variables,
                                    correlation_matrix(data.pooled)));
  if (!req.fixture.empty())
    rep.notes.push_back(
        "per-group SDs above are pro-rata allocations of the pooled within "
        "SSCP when data come from summaries");
  rep.notes.insert(rep.notes.end(), data.notes.begin(), data.notes.end());
  return rep;
}

Report cmd_regress(const AnalysisRequest& req) {
  if (req.outcome.empty()) throw std::invalid_argument("missing --outcome");
  LoadedData data = load_grouped(req);
  std::optional<std::string> ref;
  if (!req.reference.empty())
    ref = req.reference;
  else if (!data.default_reference.empty())
    ref = data.default_reference;
  const RegressionResult r = ols_two_group(data.grouped, req.outcome, ref);
  Report rep;
  rep.tables.push_back(stat_table("Two-group regression: " + req.outcome,
                                  {{"intercept", r.intercept},
                                   {"beta", r.beta},
                                   {"se", r.se},
                                   {"t", r.t},
                                   {"p", r.p},
                                   {"r2", r.r2}}));
  rep.notes = data.notes;
  return rep;
}

Report cmd_anova(const AnalysisRequest& req) {
  if (req.outcome.empty()) throw std::invalid_argument("missing --outcome");
  LoadedData data = load_grouped(req);
  const AnovaResult a = anova_oneway(data.grouped, req.outcome);
  Report rep;
  rep.tables.push_back(stat_table(
      "One-way ANOVA: " + req.outcome,
      {{"ss_between", a.ss_between},
       {"df_between", static_cast<double>(a.df_between)},
       {"ss_within", a.ss_within},
       {"df_within", static_cast<double>(a.df_within)},
       {"f", a.f},
       {"p", a.p}}));
  rep.notes = data.notes;
  return rep;
}

Report cmd_manova(const AnalysisRequest& req) {
  LoadedData data = load_grouped(req);
  const std::vector<std::string> vars =
      req.vars.empty() ? data.grouped.variables : req.vars;
  const SscpPartition part = sscp_partition(data.grouped, vars);
  const WilksResult w = wilks_test(part);
  Report rep;
  rep.tables.push_back(matrix_table("Within-groups SSCP", vars, part.within));
  rep.tables.push_back(matrix_table("Total SSCP", vars, part.total));
  rep.tables.push_back(stat_table("Wilks test",
                                  {{"det_within", w.det_within},
                                   {"det_total", w.det_total},
                                   {"lambda", w.lambda},
                                   {"f", w.f_approx},
                                   {"df1", w.df1},
                                   {"df2", w.df2},
                                   {"p", w.p},
                                   {"chi2_bartlett", w.chi2_bartlett},
                                   {"p_bartlett", w.p_bartlett}}));
  rep.notes = data.notes;
  return rep;
}

Report cmd_sem(const AnalysisRequest& req) {
  SampleCov sample;
  int n = 0;
  PathModel model;
  std::vector<std::string> notes;
  if (!req.fixture.empty()) {
    if (req.fixture != "gender-achievement")
      throw std::invalid_argument("unknown fixture: " + req.fixture);
    std::tie(sample.variables, sample.covariance) = GenderFixture::sem_sample();
    n = GenderFixture::n_total;
    // latent achievement measured by the three tests, math sets the metric
    model = PathModel::mimic("female", {"reading", "math", "language"}, 1);
    notes.push_back(GenderFixture::correction_note());
  } else {
    if (req.model_path.empty())
      throw std::invalid_argument("missing --model for SEM on external data");
    std::ifstream in(req.model_path);
    if (!in) throw std::invalid_argument("cannot open file: " + req.model_path);
    std::stringstream ss;
    ss << in.rdbuf();
    model = model_from_json_text(ss.str());
    LoadedData data = load_grouped(req);
    sample.variables = data.pooled.variables;
    sample.covariance = data.pooled.covariance;
    n = data.pooled.n_total;
    notes = data.notes;
  }
  const FitReport fit = fit_ml(model, sample, n);

  Report rep;
  ReportTable est;
  est.title = "Parameter estimates";
  est.column_headers = fit.se_available
                           ? std::vector<std::string>{"estimate", "se"}
                           : std::vector<std::string>{"estimate"};
  for (std::size_t i = 0; i < fit.parameter_names.size(); ++i) {
    est.row_labels.push_back(fit.parameter_names[i]);
    std::vector<double> row{fit.estimates[static_cast<Eigen::Index>(i)]};
    if (fit.se_available)
      row.push_back(fit.standard_errors[static_cast<Eigen::Index>(i)]);
    est.cells.push_back(std::move(row));
  }
  rep.tables.push_back(std::move(est));
  rep.tables.push_back(stat_table("Fit",
                                  {{"fml", fit.fml},
                                   {"chi_square", fit.chi_square},
                                   {"df", static_cast<double>(fit.df)},
                                   {"p", fit.p}}));
  std::vector<std::pair<std::string, double>> st = {
      {"gamma_std", fit.standardized.gamma_std},
      {"residual_variance_std", fit.standardized.residual_variance_std},
      {"r2_latent", fit.standardized.r2_latent}};
  for (std::size_t i = 0; i < model.indicators.size(); ++i)
    st.emplace_back("lambda_std." + model.indicators[i],
                    fit.standardized.loadings_std[static_cast<Eigen::Index>(i)]);
  rep.tables.push_back(stat_table("Standardized solution", st));
  rep.notes = notes;
  for (const auto& w : fit.warnings) rep.notes.push_back(w);
  return rep;
}

DataTable load_cluster_table(const AnalysisRequest& req) {
  if (req.input.empty()) throw std::invalid_argument("missing --input");
  if (req.cluster.empty()) throw std::invalid_argument("missing --cluster");
  CsvSchema schema;
  schema.cluster_column = req.cluster;
  schema.group_column = req.group;
  return ingest_csv_file(req.input, schema);
}

Report cmd_mlm_decompose(const AnalysisRequest& req) {
  const DataTable table = load_cluster_table(req);
  const std::vector<std::string> vars =
      req.vars.empty() ? table.columns : req.vars;
  const TwoLevelMoments m = decompose_two_level(table, vars);
  Report rep;
  rep.tables.push_back(matrix_table("Pooled within covariance (S_PW)", vars, m.s_pw));
  rep.tables.push_back(matrix_table("Scaled between covariance (S_B)", vars, m.s_b));
  rep.tables.push_back(stat_table(
      "Design", {{"n_total", static_cast<double>(m.n_total)},
                 {"clusters", static_cast<double>(m.j_clusters)},
                 {"c_scale", m.c_scale}}));
  return rep;
}

Report cmd_mlm_fit(const AnalysisRequest& req) {
  if (req.outcome.empty()) throw std::invalid_argument("missing --outcome");
  const DataTable table = load_cluster_table(req);
  const VarianceComponents vc = fit_random_intercept(table, req.outcome);
  Report rep;
  rep.tables.push_back(stat_table("Random-intercept variance components: " + req.outcome,
                                  {{"gamma00", vc.gamma00},
                                   {"sigma2_between", vc.sigma2_between},
                                   {"sigma2_within", vc.sigma2_within},
                                   {"icc", vc.icc}}));
  if (vc.truncated)
    rep.notes.push_back(
        "between-cluster variance estimate was negative and truncated at 0");
  return rep;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  const int r = static_cast<int>(rows.size());
  const int c = r > 0 ? static_cast<int>(rows[0].size()) : 0;
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i) {
    if (static_cast<int>(rows[i].size()) != c)
      throw std::invalid_argument("ragged matrix in config");
    for (int k = 0; k < c; ++k) m(i, k) = rows[i][k];
  }
  return m;
}

RunOutcome cmd_simulate(const AnalysisRequest& req) {
  SimulationConfig config;
  if (!req.input.empty()) {
    const json j = load_json_file(req.input);
    const auto mu = j.at("mu").get<std::vector<double>>();
    config.params.mu = Eigen::Map<const Eigen::VectorXd>(
        mu.data(), static_cast<Eigen::Index>(mu.size()));
    config.params.sigma_b = matrix_from_json(j.at("sigma_b"));
    config.params.sigma_w = matrix_from_json(j.at("sigma_w"));
    config.clusters = j.at("clusters").get<int>();
    config.cluster_size = j.at("cluster_size").get<int>();
    config.seed = j.value("seed", 0ULL);
    config.replications = j.value("replications", 1);
  } else {
    // bare default: one outcome, icc 0.25
    config.params.mu = Eigen::VectorXd::Zero(1);
    config.params.sigma_b = Eigen::MatrixXd::Constant(1, 1, 25.0);
    config.params.sigma_w = Eigen::MatrixXd::Constant(1, 1, 75.0);
    config.clusters = 100;
    config.cluster_size = 20;
    config.seed = 0;
    config.replications = 1;
  }
  if (req.clusters) config.clusters = *req.clusters;
  if (req.cluster_size) config.cluster_size = *req.cluster_size;
  if (req.seed) config.seed = *req.seed;
  if (req.reps) config.replications = *req.reps;
  if (config.clusters < 2)
    throw std::invalid_argument("invalid option --clusters: need at least 2, got " +
                                std::to_string(config.clusters));
  if (config.cluster_size < 1)
    throw std::invalid_argument("invalid option --cluster-size: need at least 1");
  if (config.replications < 1)
    throw std::invalid_argument("invalid option --reps: need at least 1");

  RunOutcome out;
  if (req.emit_csv) {
    const DataTable t = generate_clustered(config.params, config.clusters,
                                           config.cluster_size,
                                           derive_seed(config.seed, 0));
    std::ostringstream os;
    os << "cluster";
    for (const auto& c : t.columns) os << "," << c;
    os << "\n";
    os.precision(17);
    for (int r = 0; r < t.n_rows(); ++r) {
      os << t.cluster_labels[r];
      for (int c = 0; c < t.values.cols(); ++c) os << "," << t.values(r, c);
      os << "\n";
    }
    out.raw_output = os.str();
    return out;
  }

  const SimulationSummary s = simulate_variance_recovery(config, req.threads);
  out.report.tables.push_back(stat_table(
      "Clustered simulation summary",
      {{"replications", static_cast<double>(s.replications)},
       {"mean_icc", s.mean_icc},
       {"min_icc", s.min_icc},
       {"max_icc", s.max_icc},
       {"mean_sigma2_within", s.mean_sigma2_within},
       {"mean_sigma2_between", s.mean_sigma2_between},
       {"mean_grand_variance", s.mean_grand_variance},
       {"truncated_count", static_cast<double>(s.truncated_count)}}));
  return out;
}

} // namespace

PathModel model_from_json_text(const std::string& json_text) {
  const json j = json::parse(json_text);
  PathModel m;
  m.latent = j.value("latent", std::string("factor"));
  m.exogenous = j.value("exogenous", std::string());
  m.indicators = j.at("indicators").get<std::vector<std::string>>();

  const auto parse_param = [](const json& v) -> Param {
    if (v.is_number()) return Param::fixed(v.get<double>());
    if (v.is_string()) {
      const auto s = v.get<std::string>();
      if (s == "free") return Param::free_at(std::numeric_limits<double>::quiet_NaN());
      throw std::invalid_argument("bad parameter spec: " + s);
    }
    if (v.is_object()) {
      Param p = Param::free_at(v.value("start", std::numeric_limits<double>::quiet_NaN()));
      return p;
    }
    throw std::invalid_argument("bad parameter spec in model JSON");
  };

  for (const auto& v : j.at("loadings")) m.loadings.push_back(parse_param(v));
  if (j.contains("structural")) m.structural = parse_param(j.at("structural"));
  if (j.contains("factor_residual_variance"))
    m.factor_residual = parse_param(j.at("factor_residual_variance"));
  else
    m.factor_residual = Param::free_at(std::numeric_limits<double>::quiet_NaN());
  for (const auto& v : j.at("error_variances"))
    m.error_variances.push_back(parse_param(v));
  if (j.contains("exogenous_variance")) {
    const auto& v = j.at("exogenous_variance");
    if (v.is_string() && v.get<std::string>() == "sample")
      m.exogenous_variance = Param::fixed(std::numeric_limits<double>::quiet_NaN());
    else
      m.exogenous_variance = parse_param(v);
  }
  return m;
}

std::string fit_report_to_json(const FitReport& r) {
  nlohmann::ordered_json j;
  j["parameters"] = r.parameter_names;
  j["estimates"] = std::vector<double>(r.estimates.begin(), r.estimates.end());
  if (r.se_available)
    j["standard_errors"] =
        std::vector<double>(r.standard_errors.begin(), r.standard_errors.end());
  j["fml"] = r.fml;
  j["chi_square"] = r.chi_square;
  j["df"] = r.df;
  j["p"] = r.p;
  j["n"] = r.n;
  std::vector<std::vector<double>> implied;
  for (int i = 0; i < r.implied_covariance.rows(); ++i)
    implied.emplace_back(r.implied_covariance.row(i).begin(),
                         r.implied_covariance.row(i).end());
  j["implied_covariance"] = implied;
  j["standardized"] = {
      {"gamma_std", r.standardized.gamma_std},
      {"loadings_std", std::vector<double>(r.standardized.loadings_std.begin(),
                                           r.standardized.loadings_std.end())},
      {"residual_variance_std", r.standardized.residual_variance_std},
      {"r2_latent", r.standardized.r2_latent}};
  j["converged"] = r.converged;
  j["warnings"] = r.warnings;
  return j.dump();
}

RunOutcome run(const AnalysisRequest& request) {
  RunOutcome out;
  try {
    if (request.command == "describe") out.report = cmd_describe(request);
    else if (request.command == "regress") out.report = cmd_regress(request);
    else if (request.command == "anova") out.report = cmd_anova(request);
    else if (request.command == "manova") out.report = cmd_manova(request);
    else if (request.command == "sem") out.report = cmd_sem(request);
    else if (request.command == "mlm-decompose") out.report = cmd_mlm_decompose(request);
    else if (request.command == "mlm-fit") out.report = cmd_mlm_fit(request);
    else if (request.command == "simulate") out = cmd_simulate(request);
    else throw std::invalid_argument("unknown command: " + request.command);
  } catch (const std::invalid_argument& e) {
    out.report = {};
    out.report.notes.push_back(std::string("error: ") + e.what());
    out.exit_code = 2;
  } catch (const std::runtime_error& e) {
    out.report = {};
    out.report.notes.push_back(std::string("error: ") + e.what());
    out.exit_code = 3;
  }
  return out;
}

} // namespace hiermodel
