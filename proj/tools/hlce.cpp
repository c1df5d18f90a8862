// hlce: generate data, fit the effect estimators, score them, run the
// simulation experiments and plot their reports.

#include <filesystem>
#include <iostream>

#include "CLI11.hpp"

#include "hlce/harness.hpp"

namespace fs = std::filesystem;
using namespace hlce;

namespace {

struct Globals {
  std::uint64_t seed = 2024;
  std::string out = ".";
  std::string config;
  int workers = 1;
  bool fast = false;
};

std::string in_out(const Globals& g, const std::string& name) {
  fs::create_directories(g.out);
  return (fs::path(g.out) / name).string();
}

int cmd_gen(const Globals& g, const std::string& which, Index n_e, Index n_o, const std::string& covariates,
            Index rows) {
  const GenOutput gen = [&] {
    if (which == "dataset1") return sample_dataset1(n_e, n_o, g.seed);
    if (which == "dataset2") return sample_dataset2(n_e, n_o, g.seed);
    ExperimentConfig c = ExperimentConfig::defaults(ExperimentKind::semisynth);
    c.semisynth_preset = which;
    c.covariates = covariates;
    c.semisynth_rows = rows;
    const SemiSynthOutput out = sample_semisynth(semisynth_params(c, g.seed), g.seed);
    const auto& d = out.diagnostics;
    std::cerr << which << ": E share " << d.e_share << ", rows clipped (p_e/p_o) " << d.clipped_e << "/"
              << d.clipped_o << "\n";
    return out.gen;
  }();
  write_csv(gen.dataset, in_out(g, "data.csv"));
  write_truth_csv(gen.truth, in_out(g, "truth.csv"));
  std::cout << "wrote " << gen.dataset.size() << " rows to " << in_out(g, "data.csv") << " and truth.csv\n";
  return 0;
}

struct FitArgs {
  std::string data;
  std::string predict_on;
  std::string estimator = "mr";
  std::string nuisance = "kernel";
  std::string stage2 = "kernel";
  std::string split = "full";
  int folds = 5;
};

int cmd_fit(const Globals& g, const FitArgs& a) {
  const PanelDataset data = load_csv(a.data);
  ExperimentConfig c = ExperimentConfig::defaults(ExperimentKind::semisynth);
  c.nuisance = a.nuisance;
  c.stage2 = a.stage2;
  c.validate();
  EstimatorConfig ec;
  ec.kind = parse_estimator(a.estimator);
  ec.nuisance = detail::nuisance_spec(c);
  if (a.nuisance == "oracle") {
    if (data.dim() != 1) throw std::invalid_argument("oracle nuisances exist for dataset1 only");
    ec.nuisance.oracle = oracle_nuisances_dataset1(1.0 - group_prior(data), ec.nuisance.clip);
  }
  ec.stage2 = detail::stage2_spec(c);
  ec.folds = a.folds;
  ec.seed = g.seed;
  if (a.split == "full") {
    ec.split = SplitMode::full;
  } else if (a.split == "two-fold") {
    ec.split = SplitMode::two_fold;
  } else if (a.split == "cross-fit") {
    ec.split = SplitMode::cross_fit;
  } else {
    throw std::invalid_argument("split must be full, two-fold or cross-fit");
  }
  const FittedHLCE model = fit_two_stage(data, ec);
  const Matrix x = a.predict_on.empty() ? data.x() : load_csv(a.predict_on).x();
  const Vector tau_hat = model.predict(x);
  std::string out = "tau_hat\n";
  for (Index i = 0; i < tau_hat.size(); ++i) out += detail::format_double(tau_hat[i]) + "\n";
  detail::write_file(in_out(g, "predictions.csv"), out);
  std::cout << estimator_name(ec.kind) << ": " << tau_hat.size() << " predictions, mean "
            << detail::format_double(tau_hat.mean()) << "\n";
  return 0;
}

Vector load_predictions(const std::string& path) {
  const auto lines = detail::read_lines(path);
  if (lines.empty() || detail::trim(lines[0]) != "tau_hat") throw DataError(path + ": expected a tau_hat header");
  Vector v(static_cast<Index>(lines.size()) - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    v[static_cast<Index>(i) - 1] = detail::parse_double(lines[i], "tau_hat in row " + std::to_string(i));
  }
  return v;
}

int cmd_eval(const std::string& predictions, const std::string& truth, bool unnormalized) {
  const Vector tau_hat = load_predictions(predictions);
  const GroundTruth t = load_truth_csv(truth);
  const json j = {{"pehe", pehe(tau_hat, t.tau)}, {"ate_error", ate_error(tau_hat, t.tau, unnormalized)}};
  std::cout << j.dump() << "\n";
  return 0;
}

ExperimentConfig experiment_config(const Globals& g, ExperimentKind kind, const CLI::App& sub, int replications,
                                   const std::vector<std::string>& estimators) {
  ExperimentConfig c;
  if (!g.config.empty()) {
    std::ifstream in(g.config);
    if (!in) throw std::runtime_error("cannot open config " + g.config);
    c = config_from_json(json::parse(in), kind, g.fast);
  } else {
    c = ExperimentConfig::defaults(kind, g.fast);
  }
  // Command-line flags win over the file.
  if (sub.get_parent()->count("--seed") > 0 || g.config.empty()) c.seed = g.seed;
  if (sub.get_parent()->count("--workers") > 0) c.workers = g.workers;
  if (sub.count("--replications") > 0) c.replications = replications;
  if (!estimators.empty()) {
    c.estimators.clear();
    for (const auto& e : estimators) c.estimators.push_back(parse_estimator(e));
  }
  c.output_dir = g.out;
  c.validate();
  return c;
}

int cmd_exp(const ExperimentConfig& c, const Globals& g) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentReport report = run_experiment(c);
  emit_report(report, ReportFormat::csv, in_out(g, "report.csv"));
  emit_report(report, ReportFormat::json, in_out(g, "report.json"));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const auto& cell : summarize_cells(report)) {
    std::cout << experiment_name(c.experiment) << " " << estimator_name(cell.estimator) << " " << cell.preset;
    if (cell.size > 0) std::cout << " n=" << cell.size;
    std::cout << " median PEHE " << cell.median_pehe() << " [" << cell.q25() << ", " << cell.q75() << "]"
              << " median ATE err " << cell.median_ate() << "\n";
  }
  const json s = summarize(report);
  for (const char* key : {"spearman", "slope"}) {
    if (s.contains(key)) std::cout << key << " " << s.at(key).dump() << "\n";
  }
  std::cout << report.records.size() << " records in " << secs << " s -> " << in_out(g, "report.json") << "\n";
  return 0;
}

int cmd_plot(const Globals& g, const std::string& report_path, const std::string& kind) {
  const ExperimentReport report = read_report_json(report_path);
  PlotKind k;
  if (kind == "sweep-lines") {
    k = PlotKind::sweep_lines;
  } else if (kind == "misspec-bars") {
    k = PlotKind::misspec_bars;
  } else if (kind.empty()) {
    k = report.config.experiment == ExperimentKind::misspec ? PlotKind::misspec_bars : PlotKind::sweep_lines;
  } else {
    throw std::invalid_argument("plot kind must be sweep-lines or misspec-bars");
  }
  emit_plot(report, k, in_out(g, "plot.svg"));
  std::cout << "wrote " << in_out(g, "plot.svg") << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heterogeneous long-term causal effects from experimental + observational data"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Base random seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--config", g.config, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--workers", g.workers, "Worker threads for experiments")->check(CLI::PositiveNumber);
  app.add_flag("--fast", g.fast, "Desk-scale sizes for the misspec experiment");

  auto* gen = app.add_subcommand("gen", "Sample a dataset; writes data.csv and truth.csv");
  std::string gen_which;
  Index n_e = 1000, n_o = 2000, rows = 0;
  std::string covariates;
  gen->add_option("dataset", gen_which)->required()->check(CLI::IsMember({"dataset1", "dataset2", "ihdp", "news"}));
  gen->add_option("--n-e", n_e, "Experimental rows (dataset1/dataset2)");
  gen->add_option("--n-o", n_o, "Observational rows (dataset1/dataset2)");
  gen->add_option("--covariates", covariates, "Covariate CSV for ihdp/news")->check(CLI::ExistingFile);
  gen->add_option("--rows", rows, "Stand-in covariate rows for ihdp/news");

  auto* fit = app.add_subcommand("fit", "Fit an estimator; writes predictions.csv");
  FitArgs fa;
  fit->add_option("--data", fa.data, "Training data CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--predict-on", fa.predict_on, "Data CSV whose covariates to predict on")->check(CLI::ExistingFile);
  fit->add_option("--estimator", fa.estimator)->check(CLI::IsMember({"naive", "reg", "pro", "mr"}));
  fit->add_option("--nuisance", fa.nuisance)
      ->check(CLI::IsMember({"correct", "misspecified", "kernel", "mlp", "oracle"}));
  fit->add_option("--stage2", fa.stage2)->check(CLI::IsMember({"kernel", "poly2", "mlp"}));
  fit->add_option("--split", fa.split)->check(CLI::IsMember({"full", "two-fold", "cross-fit"}));
  fit->add_option("--folds", fa.folds)->check(CLI::Range(2, 100));

  auto* eval = app.add_subcommand("eval", "Score predictions against truth");
  std::string pred_path, truth_path;
  bool unnormalized = false;
  eval->add_option("--predictions", pred_path)->required()->check(CLI::ExistingFile);
  eval->add_option("--truth", truth_path)->required()->check(CLI::ExistingFile);
  eval->add_flag("--unnormalized", unnormalized, "ATE error as a difference of sums");

  auto* exp = app.add_subcommand("exp", "Run an experiment; writes report.csv and report.json");
  std::string exp_which;
  int replications = 10;
  std::vector<std::string> estimators;
  exp->add_option("experiment", exp_which)
      ->required()
      ->check(CLI::IsMember({"misspec", "sweep-e", "sweep-o", "rates", "oracle-check", "semisynth"}));
  exp->add_option("--replications", replications)->check(CLI::PositiveNumber);
  exp->add_option("--estimators", estimators)->delimiter(',');

  auto* plot = app.add_subcommand("plot", "Render a report as SVG; writes plot.svg");
  std::string report_path, plot_kind;
  plot->add_option("--report", report_path, "report.json")->required()->check(CLI::ExistingFile);
  plot->add_option("--kind", plot_kind)->check(CLI::IsMember({"sweep-lines", "misspec-bars"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen(g, gen_which, n_e, n_o, covariates, rows);
    if (*fit) return cmd_fit(g, fa);
    if (*eval) return cmd_eval(pred_path, truth_path, unnormalized);
    if (*exp) return cmd_exp(experiment_config(g, parse_experiment(exp_which), *exp, replications, estimators), g);
    if (*plot) return cmd_plot(g, report_path, plot_kind);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
