#include "hiermodel/commands.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>

int main(int argc, char** argv) {
  CLI::App app{"hiermodel: descriptives, regression, ANOVA, MANOVA, SEM and "
               "two-level variance decomposition"};
  app.require_subcommand(1);

  hiermodel::AnalysisRequest req;
  std::string format = "text";
  std::string vars_csv;
  std::uint64_t seed = 0;
  int reps = 0, clusters = 0, cluster_size = 0;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--input", req.input, "input file (CSV or JSON)");
    sub->add_option("--fixture", req.fixture,
                    "embedded fixture name (gender-achievement)");
    sub->add_option("--format", format, "text | json")
        ->check(CLI::IsMember({"text", "json"}));
    sub->add_option("--vars", vars_csv, "comma-separated variable list");
    return sub;
  };

  auto* describe = add_common(app.add_subcommand("describe", "group descriptives"));
  describe->add_option("--group", req.group, "group label column");

  auto* regress = add_common(app.add_subcommand("regress", "dummy-coded two-group regression"));
  regress->add_option("--outcome", req.outcome, "outcome variable");
  regress->add_option("--group", req.group, "group label column");
  regress->add_option("--reference", req.reference, "group coded 0");

  auto* anova = add_common(app.add_subcommand("anova", "one-way ANOVA"));
  anova->add_option("--outcome", req.outcome, "outcome variable");
  anova->add_option("--group", req.group, "group label column");

  auto* manova = add_common(app.add_subcommand("manova", "Wilks lambda MANOVA"));
  manova->add_option("--group", req.group, "group label column");

  auto* sem = add_common(app.add_subcommand("sem", "latent factor model (ML)"));
  sem->add_option("--model", req.model_path, "model-specification JSON");
  sem->add_option("--group", req.group, "group label column");

  auto* mlmd = add_common(app.add_subcommand("mlm-decompose",
                                             "within/between covariance decomposition"));
  mlmd->add_option("--cluster", req.cluster, "cluster label column");

  auto* mlmf = add_common(app.add_subcommand("mlm-fit",
                                             "random-intercept variance components"));
  mlmf->add_option("--cluster", req.cluster, "cluster label column");
  mlmf->add_option("--outcome", req.outcome, "outcome variable");

  auto* sim = add_common(app.add_subcommand("simulate", "clustered-data Monte Carlo"));
  auto* seed_opt = sim->add_option("--seed", seed, "master seed");
  auto* reps_opt = sim->add_option("--reps", reps, "replications");
  auto* cl_opt = sim->add_option("--clusters", clusters, "number of clusters");
  auto* cs_opt = sim->add_option("--cluster-size", cluster_size, "observations per cluster");
  sim->add_option("--threads", req.threads, "worker threads");
  sim->add_flag("--emit-csv", req.emit_csv, "print one generated replication as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? 2 : 0;
  }

  req.command = app.get_subcommands().front()->get_name();
  if (!vars_csv.empty()) {
    std::string item;
    std::stringstream ss(vars_csv);
    while (std::getline(ss, item, ',')) req.vars.push_back(item);
  }
  req.format = format == "json" ? hiermodel::ReportFormat::Json
                                : hiermodel::ReportFormat::Text;
  if (seed_opt->count()) req.seed = seed;
  if (reps_opt->count()) req.reps = reps;
  if (cl_opt->count()) req.clusters = clusters;
  if (cs_opt->count()) req.cluster_size = cluster_size;

  int precision = 3;
  if (const char* env = std::getenv("HIERMODEL_PRECISION")) {
    try {
      precision = std::stoi(env);
    } catch (const std::exception&) {
      std::cerr << "ignoring bad HIERMODEL_PRECISION value '" << env << "'\n";
    }
  }

  const hiermodel::RunOutcome out = hiermodel::run(req);
  if (!out.raw_output.empty())
    std::cout << out.raw_output;
  else
    std::cout << hiermodel::render(out.report, req.format, precision);
  return out.exit_code;
}
