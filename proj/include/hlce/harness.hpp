#ifndef HLCE_HARNESS_HPP
#define HLCE_HARNESS_HPP

// Experiment orchestration: replicated simulation cells, metric records,
// CSV/JSON reports and SVG plots.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "hlce/estimator.hpp"
#include "hlce/metrics.hpp"
#include "hlce/nuisance.hpp"
#include "hlce/simgen.hpp"

namespace hlce {

using json = nlohmann::json;

enum class ExperimentKind { misspec, sweep_e, sweep_o, rates, oracle_check, semisynth };

inline const char* experiment_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::misspec: return "misspec";
    case ExperimentKind::sweep_e: return "sweep-e";
    case ExperimentKind::sweep_o: return "sweep-o";
    case ExperimentKind::rates: return "rates";
    case ExperimentKind::oracle_check: return "oracle-check";
    case ExperimentKind::semisynth: return "semisynth";
  }
  return "?";
}

inline ExperimentKind parse_experiment(const std::string& s) {
  for (auto k : {ExperimentKind::misspec, ExperimentKind::sweep_e, ExperimentKind::sweep_o, ExperimentKind::rates,
                 ExperimentKind::oracle_check, ExperimentKind::semisynth}) {
    if (s == experiment_name(k)) return k;
  }
  throw std::invalid_argument("unknown experiment '" + s + "'");
}

inline Backend parse_backend(const std::string& s) {
  for (auto b : {Backend::correct_parametric, Backend::misspecified_parametric, Backend::kernel, Backend::mlp_shared,
                 Backend::oracle}) {
    if (s == backend_name(b)) return b;
  }
  throw std::invalid_argument("unknown nuisance backend '" + s + "' (correct, misspecified, kernel, mlp, oracle)");
}

inline const std::vector<Index>& default_ne_grid() {
  static const std::vector<Index> g = {100, 150, 250, 500, 1000, 1500, 3000, 5000, 10000};
  return g;
}

inline const std::vector<Index>& default_no_grid() {
  static const std::vector<Index> g = {400, 600, 800, 1000, 2000, 3000, 4000, 5000, 10000};
  return g;
}

// "M_{1,2',3',4'}": primed sets are misspecified.
inline std::string preset_label(const std::vector<int>& correct_sets) {
  std::string out = "M_{";
  for (int k = 1; k <= 4; ++k) {
    if (k > 1) out += ",";
    out += std::to_string(k);
    if (std::find(correct_sets.begin(), correct_sets.end(), k) == correct_sets.end()) out += "'";
  }
  return out + "}";
}

inline std::vector<std::vector<int>> default_misspec_presets() { return {{1, 2, 3, 4}, {1}, {2}, {3}, {4}, {}}; }

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::misspec;
  std::vector<EstimatorKind> estimators;
  int replications = 10;
  std::uint64_t seed = 2024;
  Index n_e = 1000;
  Index n_o = 2000;
  // Swept sizes: n_e (sweep-e), n_o (sweep-o) or total rows (rates).
  std::vector<Index> grid;
  std::array<double, 3> fractions{0.63, 0.27, 0.10};
  double clip = kDefaultClip;
  // Fresh evaluation rows for rates and oracle-check.
  Index eval_rows = 5000;
  int workers = 1;
  bool fast = false;
  bool unnormalized_ate = false;
  // Misspecification presets, each a list of correctly specified robust sets.
  std::vector<std::vector<int>> presets;
  // Nuisance backend and second-stage learner ("kernel", "poly2", "mlp").
  std::string nuisance = "correct";
  std::string stage2 = "poly2";
  MLPConfig mlp;
  std::string semisynth_preset = "ihdp";
  std::string covariates;  // empty: stand-in covariates
  Index semisynth_rows = 0;
  std::string output_dir = ".";

  static ExperimentConfig defaults(ExperimentKind kind, bool fast = false) {
    ExperimentConfig c;
    c.experiment = kind;
    c.fast = fast;
    c.estimators.assign(kAllEstimators.begin(), kAllEstimators.end());
    switch (kind) {
      case ExperimentKind::misspec:
        c.estimators = {EstimatorKind::mr};
        c.n_e = fast ? 5000 : 10000;
        c.n_o = fast ? 7500 : 15000;
        c.presets = default_misspec_presets();
        break;
      case ExperimentKind::sweep_e:
        c.grid = default_ne_grid();
        c.nuisance = "kernel";
        c.stage2 = "kernel";
        break;
      case ExperimentKind::sweep_o:
        c.grid = default_no_grid();
        c.nuisance = "kernel";
        c.stage2 = "kernel";
        break;
      case ExperimentKind::rates:
        c.grid = {2000, 4000, 8000, 16000, 32000};
        break;
      case ExperimentKind::oracle_check:
        c.n_e = 10000;
        c.n_o = 15000;
        c.nuisance = "oracle";
        break;
      case ExperimentKind::semisynth:
        c.nuisance = "kernel";
        c.stage2 = "kernel";
        break;
    }
    return c;
  }

  void validate() const {
    if (replications < 1) throw std::invalid_argument("replications must be >= 1");
    if (estimators.empty()) throw std::invalid_argument("no estimators requested");
    if (workers < 1) throw std::invalid_argument("workers must be >= 1");
    const bool swept = experiment == ExperimentKind::sweep_e || experiment == ExperimentKind::sweep_o ||
                       experiment == ExperimentKind::rates;
    if (swept && grid.empty()) throw std::invalid_argument("size grid is empty");
    if (experiment == ExperimentKind::rates && grid.size() < 4) {
      throw std::invalid_argument("rates need at least 4 grid sizes");
    }
    for (Index v : grid) {
      if (v < 4) throw std::invalid_argument("grid sizes must be >= 4");
    }
    if (experiment == ExperimentKind::misspec) {
      if (std::find(estimators.begin(), estimators.end(), EstimatorKind::mr) == estimators.end()) {
        throw std::invalid_argument("misspec experiment needs the mr estimator");
      }
      if (presets.empty()) throw std::invalid_argument("no misspecification presets");
    }
    if (experiment == ExperimentKind::oracle_check && nuisance != "oracle") {
      throw std::invalid_argument("oracle-check runs with oracle nuisances only");
    }
    if (experiment != ExperimentKind::misspec) parse_backend(nuisance);
    if (stage2 != "kernel" && stage2 != "poly2" && stage2 != "mlp") {
      throw std::invalid_argument("stage2 must be kernel, poly2 or mlp");
    }
    if (semisynth_preset != "ihdp" && semisynth_preset != "news") {
      throw std::invalid_argument("semisynth preset must be ihdp or news");
    }
  }
};

inline json to_json(const ExperimentConfig& c) {
  json j;
  j["experiment"] = experiment_name(c.experiment);
  std::vector<std::string> est;
  for (auto k : c.estimators) est.emplace_back(estimator_name(k));
  j["estimators"] = est;
  j["replications"] = c.replications;
  j["seed"] = c.seed;
  j["n_e"] = c.n_e;
  j["n_o"] = c.n_o;
  j["grid"] = c.grid;
  j["fractions"] = c.fractions;
  j["clip"] = c.clip;
  j["eval_rows"] = c.eval_rows;
  j["fast"] = c.fast;
  j["unnormalized_ate"] = c.unnormalized_ate;
  j["presets"] = c.presets;
  j["nuisance"] = c.nuisance;
  j["stage2"] = c.stage2;
  j["mlp"] = {{"hidden", c.mlp.hidden},
              {"learning_rate", c.mlp.learning_rate},
              {"momentum", c.mlp.momentum},
              {"weight_decay", c.mlp.weight_decay},
              {"batch_size", c.mlp.batch_size},
              {"dropout", c.mlp.dropout},
              {"epochs", c.mlp.epochs},
              {"seed", c.mlp.seed}};
  j["semisynth_preset"] = c.semisynth_preset;
  j["covariates"] = c.covariates;
  j["semisynth_rows"] = c.semisynth_rows;
  return j;
}

// Starts from the experiment's defaults; keys present in `j` override them.
inline ExperimentConfig config_from_json(const json& j, std::optional<ExperimentKind> kind = std::nullopt,
                                         bool fast = false) {
  if (!j.is_object()) throw std::invalid_argument("experiment config must be a JSON object");
  ExperimentKind k = kind.value_or(ExperimentKind::misspec);
  if (j.contains("experiment")) {
    const auto named = parse_experiment(j.at("experiment").get<std::string>());
    if (kind && named != *kind) {
      throw std::invalid_argument(std::string("config is for '") + experiment_name(named) + "', not '" +
                                  experiment_name(*kind) + "'");
    }
    k = named;
  } else if (!kind) {
    throw std::invalid_argument("config lacks an \"experiment\" field");
  }
  fast = j.value("fast", fast);
  ExperimentConfig c = ExperimentConfig::defaults(k, fast);
  static const std::vector<std::string> known = {
      "experiment", "estimators", "replications", "seed",     "n_e",        "n_o",
      "grid",       "fractions",  "clip",         "eval_rows", "fast",      "unnormalized_ate",
      "presets",    "nuisance",   "stage2",       "mlp",      "semisynth_preset", "covariates",
      "semisynth_rows", "workers"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("unknown config key '" + key + "'");
    }
  }
  if (j.contains("estimators")) {
    c.estimators.clear();
    for (const auto& s : j.at("estimators")) c.estimators.push_back(parse_estimator(s.get<std::string>()));
  }
  auto get = [&](const char* key, auto& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
  };
  get("replications", c.replications);
  get("seed", c.seed);
  get("n_e", c.n_e);
  get("n_o", c.n_o);
  get("grid", c.grid);
  get("fractions", c.fractions);
  get("clip", c.clip);
  get("eval_rows", c.eval_rows);
  get("unnormalized_ate", c.unnormalized_ate);
  get("presets", c.presets);
  get("nuisance", c.nuisance);
  get("stage2", c.stage2);
  get("semisynth_preset", c.semisynth_preset);
  get("covariates", c.covariates);
  get("semisynth_rows", c.semisynth_rows);
  get("workers", c.workers);
  if (j.contains("mlp")) {
    const auto& m = j.at("mlp");
    if (m.contains("hidden")) c.mlp.hidden = m.at("hidden").get<std::vector<int>>();
    c.mlp.learning_rate = m.value("learning_rate", c.mlp.learning_rate);
    c.mlp.momentum = m.value("momentum", c.mlp.momentum);
    c.mlp.weight_decay = m.value("weight_decay", c.mlp.weight_decay);
    c.mlp.batch_size = m.value("batch_size", c.mlp.batch_size);
    c.mlp.dropout = m.value("dropout", c.mlp.dropout);
    c.mlp.epochs = m.value("epochs", c.mlp.epochs);
    c.mlp.seed = m.value("seed", c.mlp.seed);
    c.mlp.validate();
  }
  c.validate();
  return c;
}

struct MetricRecord {
  EstimatorKind estimator = EstimatorKind::mr;
  std::string preset;
  Index n_e = 0, n_o = 0;
  std::uint64_t seed = 0;
  double pehe = 0.0;
  double ate_error = 0.0;
  // Not part of the CSV (would break byte-identical reruns).
  double wall_ms = 0.0;

  bool same_measurement(const MetricRecord& o) const {
    return estimator == o.estimator && preset == o.preset && n_e == o.n_e && n_o == o.n_o && seed == o.seed &&
           pehe == o.pehe && ate_error == o.ate_error;
  }
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<MetricRecord> records;
};

// ---------------------------------------------------------------------------
// Cells

namespace detail {

inline RegressorSpec stage2_spec(const ExperimentConfig& c) {
  if (c.stage2 == "poly2") return polynomial_spec(2);
  RegressorSpec s;
  if (c.stage2 == "mlp") {
    s.kind = RegressorKind::mlp;
    s.mlp = c.mlp;
  }
  return s;
}

inline NuisanceSpec nuisance_spec(const ExperimentConfig& c) {
  NuisanceSpec s = NuisanceSpec::uniform(parse_backend(c.nuisance));
  s.clip = c.clip;
  s.mlp = c.mlp;
  return s;
}

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

inline MetricRecord measure(const FittedHLCE& model, const Matrix& x_eval, const Vector& tau, bool unnormalized) {
  const Vector tau_hat = model.predict(x_eval);
  MetricRecord r;
  r.pehe = pehe(tau_hat, tau);
  r.ate_error = ate_error(tau_hat, tau, unnormalized);
  return r;
}

// Nuisances once on train, every requested estimator on top, evaluated on test.
inline std::vector<MetricRecord> fit_and_score(const ExperimentConfig& c, const PanelDataset& train,
                                               const Matrix& x_eval, const Vector& tau, const NuisanceSpec& ns_spec,
                                               const std::string& preset, Index n_e, Index n_o, std::uint64_t seed) {
  const auto t0 = Clock::now();
  const NuisanceSet ns = fit_nuisances(train, ns_spec);
  const double nuisance_ms = ms_since(t0);
  const RegressorSpec s2 = stage2_spec(c);
  std::vector<MetricRecord> out;
  for (auto kind : c.estimators) {
    const auto t1 = Clock::now();
    const FittedHLCE model = fit_with_nuisances(train, kind, ns, s2);
    MetricRecord r = measure(model, x_eval, tau, c.unnormalized_ate);
    r.estimator = kind;
    r.preset = preset;
    r.n_e = n_e;
    r.n_o = n_o;
    r.seed = seed;
    r.wall_ms = nuisance_ms + ms_since(t1);
    out.push_back(std::move(r));
  }
  return out;
}

inline Index dataset1_share_e(Index n) { return static_cast<Index>(std::llround(0.4 * static_cast<double>(n))); }

}  // namespace detail

// Each cell function regenerates its data from (sizes, seed) alone, so any
// record can be re-run in isolation.

inline std::vector<MetricRecord> run_misspec_cell(const ExperimentConfig& c, const std::vector<int>& correct_sets,
                                                  Index n_e, Index n_o, std::uint64_t seed) {
  const GenOutput gen = sample_dataset1(n_e, n_o, seed);
  const auto idx = split_indices(gen.dataset, c.fractions, derive_seed(seed, 1));
  const PanelDataset train = gen.dataset.subset(idx.train);
  const PanelDataset test = gen.dataset.subset(idx.test);
  NuisanceSpec spec = misspecification_preset(correct_sets);
  spec.clip = c.clip;
  ExperimentConfig c2 = c;
  c2.stage2 = "poly2";
  return detail::fit_and_score(c2, train, test.x(), gen.truth.subset(idx.test).tau, spec, preset_label(correct_sets),
                               n_e, n_o, seed);
}

inline std::vector<MetricRecord> run_sweep_cell(const ExperimentConfig& c, Index n_e, Index n_o, std::uint64_t seed) {
  const GenOutput gen = sample_dataset2(n_e, n_o, seed);
  const auto idx = split_indices(gen.dataset, c.fractions, derive_seed(seed, 1));
  const PanelDataset train = gen.dataset.subset(idx.train);
  const PanelDataset test = gen.dataset.subset(idx.test);
  return detail::fit_and_score(c, train, test.x(), gen.truth.subset(idx.test).tau, detail::nuisance_spec(c),
                               c.nuisance, n_e, n_o, seed);
}

inline std::vector<MetricRecord> run_rates_cell(const ExperimentConfig& c, Index n_e, Index n_o, std::uint64_t seed) {
  const GenOutput gen = sample_dataset1(n_e, n_o, seed);
  const Index m = std::max<Index>(c.eval_rows, 4);
  const GenOutput eval = sample_dataset1(detail::dataset1_share_e(m), m - detail::dataset1_share_e(m),
                                         derive_seed(seed, 2));
  std::vector<MetricRecord> out;
  for (auto kind : c.estimators) {
    const auto t0 = detail::Clock::now();
    EstimatorConfig ec;
    ec.kind = kind;
    ec.nuisance = detail::nuisance_spec(c);
    ec.stage2 = detail::stage2_spec(c);
    ec.split = SplitMode::two_fold;
    ec.seed = derive_seed(seed, 1);
    const FittedHLCE model = fit_two_stage(gen.dataset, ec);
    MetricRecord r = detail::measure(model, eval.dataset.x(), eval.truth.tau, c.unnormalized_ate);
    r.estimator = kind;
    r.preset = c.nuisance;
    r.n_e = n_e;
    r.n_o = n_o;
    r.seed = seed;
    r.wall_ms = detail::ms_since(t0);
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<MetricRecord> run_oracle_cell(const ExperimentConfig& c, Index n_e, Index n_o, std::uint64_t seed) {
  const GenOutput gen = sample_dataset1(n_e, n_o, seed);
  const Index m = std::max<Index>(c.eval_rows, 4);
  const GenOutput eval = sample_dataset1(detail::dataset1_share_e(m), m - detail::dataset1_share_e(m),
                                         derive_seed(seed, 2));
  NuisanceSpec spec = NuisanceSpec::uniform(Backend::oracle);
  spec.clip = c.clip;
  const double p_e = static_cast<double>(n_e) / static_cast<double>(n_e + n_o);
  spec.oracle = oracle_nuisances_dataset1(p_e, c.clip);
  return detail::fit_and_score(c, gen.dataset, eval.dataset.x(), eval.truth.tau, spec, "oracle", n_e, n_o, seed);
}

inline SemiSynthParams semisynth_params(const ExperimentConfig& c, std::uint64_t seed) {
  SemiSynthParams p;
  p.preset = c.semisynth_preset == "news" ? SemiSynthPreset::news : SemiSynthPreset::ihdp;
  if (!c.covariates.empty()) {
    p.covariates = load_covariates_csv(c.covariates);
  } else if (p.preset == SemiSynthPreset::ihdp) {
    p.covariates = ihdp_like_covariates(c.semisynth_rows > 0 ? c.semisynth_rows : 747, derive_seed(seed, 3));
  } else {
    p.covariates = news_like_covariates(c.semisynth_rows > 0 ? c.semisynth_rows : 5000, derive_seed(seed, 3));
  }
  p.coefficient_seed = derive_seed(seed, 4);
  return p;
}

inline std::vector<MetricRecord> run_semisynth_cell(const ExperimentConfig& c, std::uint64_t seed) {
  const SemiSynthOutput gen = sample_semisynth(semisynth_params(c, seed), seed);
  const PanelDataset& data = gen.gen.dataset;
  const auto idx = split_indices(data, c.fractions, derive_seed(seed, 1));
  const PanelDataset train = data.subset(idx.train);
  const PanelDataset test = data.subset(idx.test);
  return detail::fit_and_score(c, train, test.x(), gen.gen.truth.subset(idx.test).tau, detail::nuisance_spec(c),
                               c.semisynth_preset + "/" + c.nuisance, data.count(Group::experimental),
                               data.count(Group::observational), seed);
}

// ---------------------------------------------------------------------------
// Orchestration

inline std::uint64_t replication_seed(const ExperimentConfig& c, int rep) {
  return derive_seed(c.seed, static_cast<std::uint64_t>(rep));
}

namespace detail {

using Task = std::function<std::vector<MetricRecord>()>;

// Runs tasks on `workers` threads; output keeps task order.
inline std::vector<MetricRecord> run_tasks(const std::vector<Task>& tasks, int workers) {
  std::vector<std::vector<MetricRecord>> results(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        results[i] = tasks[i]();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n = static_cast<std::size_t>(std::max(1, workers));
  if (n == 1 || tasks.size() < 2) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(n, tasks.size()); ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<MetricRecord> out;
  for (auto& r : results) out.insert(out.end(), r.begin(), r.end());
  return out;
}

}  // namespace detail

inline ExperimentReport run_experiment(const ExperimentConfig& c) {
  c.validate();
  std::vector<detail::Task> tasks;
  switch (c.experiment) {
    case ExperimentKind::misspec:
      for (const auto& preset : c.presets) {
        for (int r = 0; r < c.replications; ++r) {
          tasks.emplace_back([&c, preset, r] { return run_misspec_cell(c, preset, c.n_e, c.n_o, replication_seed(c, r)); });
        }
      }
      break;
    case ExperimentKind::sweep_e:
    case ExperimentKind::sweep_o:
      for (Index v : c.grid) {
        const Index ne = c.experiment == ExperimentKind::sweep_e ? v : c.n_e;
        const Index no = c.experiment == ExperimentKind::sweep_o ? v : c.n_o;
        for (int r = 0; r < c.replications; ++r) {
          tasks.emplace_back([&c, ne, no, r] { return run_sweep_cell(c, ne, no, replication_seed(c, r)); });
        }
      }
      break;
    case ExperimentKind::rates:
      for (Index n : c.grid) {
        const Index ne = detail::dataset1_share_e(n);
        for (int r = 0; r < c.replications; ++r) {
          tasks.emplace_back([&c, ne, n, r] { return run_rates_cell(c, ne, n - ne, replication_seed(c, r)); });
        }
      }
      break;
    case ExperimentKind::oracle_check:
      for (int r = 0; r < c.replications; ++r) {
        tasks.emplace_back([&c, r] { return run_oracle_cell(c, c.n_e, c.n_o, replication_seed(c, r)); });
      }
      break;
    case ExperimentKind::semisynth:
      for (int r = 0; r < c.replications; ++r) {
        tasks.emplace_back([&c, r] { return run_semisynth_cell(c, replication_seed(c, r)); });
      }
      break;
  }
  ExperimentReport report{c, detail::run_tasks(tasks, c.workers)};
  return report;
}

inline ExperimentReport run_misspec(ExperimentConfig c) {
  c.experiment = ExperimentKind::misspec;
  return run_experiment(c);
}

inline ExperimentReport run_sweep(ExperimentConfig c, char axis) {
  if (axis != 'e' && axis != 'o') throw std::invalid_argument("sweep axis must be 'e' or 'o'");
  c.experiment = axis == 'e' ? ExperimentKind::sweep_e : ExperimentKind::sweep_o;
  return run_experiment(c);
}

inline ExperimentReport run_rates(ExperimentConfig c) {
  c.experiment = ExperimentKind::rates;
  return run_experiment(c);
}

inline ExperimentReport run_oracle_check(ExperimentConfig c) {
  c.experiment = ExperimentKind::oracle_check;
  return run_experiment(c);
}

inline ExperimentReport run_semisynth(ExperimentConfig c) {
  c.experiment = ExperimentKind::semisynth;
  return run_experiment(c);
}

// ---------------------------------------------------------------------------
// Summaries

// The swept size of a record (n_e, n_o or total rows); 0 when nothing is swept.
inline Index swept_size(const ExperimentConfig& c, const MetricRecord& r) {
  switch (c.experiment) {
    case ExperimentKind::sweep_e: return r.n_e;
    case ExperimentKind::sweep_o: return r.n_o;
    case ExperimentKind::rates: return r.n_e + r.n_o;
    default: return 0;
  }
}

struct CellSummary {
  EstimatorKind estimator;
  std::string preset;
  Index size = 0;
  std::vector<double> pehe, ate;
  double median_pehe() const { return median(pehe); }
  double q25() const { return quantile(pehe, 0.25); }
  double q75() const { return quantile(pehe, 0.75); }
  double median_ate() const { return median(ate); }
};

// Groups records by (estimator, preset, swept size), in first-seen order.
inline std::vector<CellSummary> summarize_cells(const ExperimentReport& report) {
  std::vector<CellSummary> cells;
  for (const auto& r : report.records) {
    const Index size = swept_size(report.config, r);
    auto it = std::find_if(cells.begin(), cells.end(), [&](const CellSummary& s) {
      return s.estimator == r.estimator && s.preset == r.preset && s.size == size;
    });
    if (it == cells.end()) {
      cells.push_back({r.estimator, r.preset, size, {}, {}});
      it = cells.end() - 1;
    }
    it->pehe.push_back(r.pehe);
    it->ate.push_back(r.ate_error);
  }
  return cells;
}

// (size, median PEHE) per estimator, sizes ascending.
inline std::map<EstimatorKind, std::vector<std::pair<double, double>>> median_curves(const ExperimentReport& report) {
  std::map<EstimatorKind, std::vector<std::pair<double, double>>> out;
  for (const auto& cell : summarize_cells(report)) {
    out[cell.estimator].emplace_back(static_cast<double>(cell.size), cell.median_pehe());
  }
  for (auto& [k, v] : out) std::sort(v.begin(), v.end());
  return out;
}

inline json summarize(const ExperimentReport& report) {
  json s = json::object();
  json cells = json::array();
  for (const auto& c : summarize_cells(report)) {
    cells.push_back({{"estimator", estimator_name(c.estimator)},
                     {"preset", c.preset},
                     {"size", c.size},
                     {"median_pehe", c.median_pehe()},
                     {"q25_pehe", c.q25()},
                     {"q75_pehe", c.q75()},
                     {"median_ate_error", c.median_ate()},
                     {"replications", c.pehe.size()}});
  }
  s["cells"] = cells;
  const auto kind = report.config.experiment;
  if (kind == ExperimentKind::sweep_e || kind == ExperimentKind::sweep_o || kind == ExperimentKind::rates) {
    for (const auto& [est, curve] : median_curves(report)) {
      std::vector<double> n, e;
      for (const auto& [a, b] : curve) {
        n.push_back(a);
        e.push_back(b);
      }
      if (curve.size() >= 2) s["spearman"][estimator_name(est)] = spearman(n, e);
      if (kind == ExperimentKind::rates && curve.size() >= 3) s["slope"][estimator_name(est)] = rate_slope(curve);
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Persistence

inline const std::vector<std::string>& report_csv_columns() {
  static const std::vector<std::string> cols = {"estimator", "preset", "n_e", "n_o", "seed", "pehe", "ate_error"};
  return cols;
}

namespace detail {

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

inline std::vector<std::string> csv_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (quoted) throw DataError("unterminated quote in report line");
  out.push_back(std::move(cur));
  return out;
}

inline void require_records(const ExperimentReport& report) {
  if (report.records.empty()) throw std::invalid_argument("refusing to write an empty report");
}

}  // namespace detail

inline std::string report_to_csv(const ExperimentReport& report) {
  detail::require_records(report);
  std::string out;
  for (std::size_t k = 0; k < report_csv_columns().size(); ++k) {
    out += (k ? "," : "") + report_csv_columns()[k];
  }
  out += '\n';
  for (const auto& r : report.records) {
    out += estimator_name(r.estimator);
    out += ',' + detail::csv_quote(r.preset);
    out += ',' + std::to_string(r.n_e) + ',' + std::to_string(r.n_o) + ',' + std::to_string(r.seed);
    out += ',' + detail::format_double(r.pehe) + ',' + detail::format_double(r.ate_error) + '\n';
  }
  return out;
}

inline std::vector<MetricRecord> records_from_csv(const std::vector<std::string>& lines) {
  if (lines.empty()) throw DataError("empty report file");
  if (detail::csv_fields(lines[0]) != report_csv_columns()) throw DataError("unexpected report header: " + lines[0]);
  std::vector<MetricRecord> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = detail::csv_fields(lines[i]);
    if (f.size() != report_csv_columns().size()) {
      throw DataError("report line " + std::to_string(i + 1) + ": expected 7 fields");
    }
    MetricRecord r;
    r.estimator = parse_estimator(f[0]);
    r.preset = f[1];
    r.n_e = std::stoll(f[2]);
    r.n_o = std::stoll(f[3]);
    r.seed = std::stoull(f[4]);
    r.pehe = detail::parse_double(f[5], "pehe");
    r.ate_error = detail::parse_double(f[6], "ate_error");
    out.push_back(std::move(r));
  }
  return out;
}

inline json report_to_json(const ExperimentReport& report) {
  detail::require_records(report);
  json recs = json::array();
  for (const auto& r : report.records) {
    recs.push_back({{"estimator", estimator_name(r.estimator)},
                    {"preset", r.preset},
                    {"n_e", r.n_e},
                    {"n_o", r.n_o},
                    {"seed", r.seed},
                    {"pehe", r.pehe},
                    {"ate_error", r.ate_error},
                    {"wall_ms", r.wall_ms}});
  }
  return {{"config", to_json(report.config)}, {"records", recs}, {"summary", summarize(report)}};
}

inline ExperimentReport report_from_json(const json& j) {
  for (const char* key : {"config", "records"}) {
    if (!j.contains(key)) throw DataError(std::string("report JSON lacks '") + key + "'");
  }
  ExperimentReport report;
  report.config = config_from_json(j.at("config"));
  for (const auto& r : j.at("records")) {
    MetricRecord m;
    m.estimator = parse_estimator(r.at("estimator").get<std::string>());
    m.preset = r.at("preset").get<std::string>();
    m.n_e = r.at("n_e").get<Index>();
    m.n_o = r.at("n_o").get<Index>();
    m.seed = r.at("seed").get<std::uint64_t>();
    m.pehe = r.at("pehe").get<double>();
    m.ate_error = r.at("ate_error").get<double>();
    m.wall_ms = r.value("wall_ms", 0.0);
    report.records.push_back(std::move(m));
  }
  return report;
}

enum class ReportFormat { csv, json };

inline void emit_report(const ExperimentReport& report, ReportFormat format, const std::string& path) {
  detail::write_file(path, format == ReportFormat::csv ? report_to_csv(report) : report_to_json(report).dump(2) + "\n");
}

inline ExperimentReport read_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("malformed report JSON " + path + ": " + e.what());
  }
  return report_from_json(j);
}

// ---------------------------------------------------------------------------
// Plots

enum class PlotKind { sweep_lines, misspec_bars };

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1b6ca8", "#d1495b", "#2e933c", "#edae49", "#6a4c93", "#00798c"};
  return colors[i % 6];
}

struct Frame {
  double width = 640, height = 400, left = 70, right = 150, top = 30, bottom = 50;
  double plot_w() const { return width - left - right; }
  double plot_h() const { return height - top - bottom; }
};

inline std::string svg_open(const Frame& f, const std::string& title) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(f.width) + "\" height=\"" +
                  fmt(f.height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + fmt(f.left) + "\" y=\"18\" font-size=\"14\">" + title + "</text>\n";
  s += "<line x1=\"" + fmt(f.left) + "\" y1=\"" + fmt(f.top + f.plot_h()) + "\" x2=\"" + fmt(f.left + f.plot_w()) +
       "\" y2=\"" + fmt(f.top + f.plot_h()) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + fmt(f.left) + "\" y1=\"" + fmt(f.top) + "\" x2=\"" + fmt(f.left) + "\" y2=\"" +
       fmt(f.top + f.plot_h()) + "\" stroke=\"black\"/>\n";
  return s;
}

inline std::string y_axis(const Frame& f, double ymax, const std::string& label) {
  std::string s;
  for (int k = 0; k <= 4; ++k) {
    const double v = ymax * k / 4.0;
    const double y = f.top + f.plot_h() * (1.0 - k / 4.0);
    s += "<line x1=\"" + fmt(f.left - 4) + "\" y1=\"" + fmt(y) + "\" x2=\"" + fmt(f.left) + "\" y2=\"" + fmt(y) +
         "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + fmt(f.left - 8) + "\" y=\"" + fmt(y + 4) + "\" text-anchor=\"end\">" + fmt_tick(v) +
         "</text>\n";
  }
  s += "<text x=\"16\" y=\"" + fmt(f.top + f.plot_h() / 2) + "\" transform=\"rotate(-90 16 " +
       fmt(f.top + f.plot_h() / 2) + ")\" text-anchor=\"middle\">" + label + "</text>\n";
  return s;
}

}  // namespace detail

inline std::string plot_svg(const ExperimentReport& report, PlotKind kind) {
  const auto exp = report.config.experiment;
  const bool sweep = exp == ExperimentKind::sweep_e || exp == ExperimentKind::sweep_o || exp == ExperimentKind::rates;
  if (kind == PlotKind::sweep_lines && !sweep) {
    throw std::invalid_argument(std::string("sweep-lines plot needs a sweep or rates report, got ") +
                                experiment_name(exp));
  }
  if (kind == PlotKind::misspec_bars && exp != ExperimentKind::misspec) {
    throw std::invalid_argument(std::string("misspec-bars plot needs a misspec report, got ") + experiment_name(exp));
  }
  detail::require_records(report);
  const auto cells = summarize_cells(report);
  detail::Frame f;
  std::string s;
  double ymax = 0.0;
  for (const auto& c : cells) ymax = std::max(ymax, c.q75());
  ymax = ymax > 0 ? ymax * 1.1 : 1.0;

  if (kind == PlotKind::sweep_lines) {
    double lo = 1e300, hi = 0;
    for (const auto& c : cells) {
      lo = std::min(lo, static_cast<double>(c.size));
      hi = std::max(hi, static_cast<double>(c.size));
    }
    const double llo = std::log10(lo), lhi = std::log10(hi) > llo ? std::log10(hi) : llo + 1.0;
    auto px = [&](double n) { return f.left + f.plot_w() * (std::log10(n) - llo) / (lhi - llo); };
    auto py = [&](double v) { return f.top + f.plot_h() * (1.0 - v / ymax); };
    const char* axis = exp == ExperimentKind::sweep_e ? "n_e" : exp == ExperimentKind::sweep_o ? "n_o" : "n";
    s += detail::svg_open(f, std::string("PEHE vs ") + axis + " (" + experiment_name(exp) + ")");
    s += detail::y_axis(f, ymax, "PEHE");
    std::vector<double> ticks;
    for (const auto& c : cells) ticks.push_back(static_cast<double>(c.size));
    std::sort(ticks.begin(), ticks.end());
    ticks.erase(std::unique(ticks.begin(), ticks.end()), ticks.end());
    for (double t : ticks) {
      const double x = px(t);
      s += "<line x1=\"" + detail::fmt(x) + "\" y1=\"" + detail::fmt(f.top + f.plot_h()) + "\" x2=\"" +
           detail::fmt(x) + "\" y2=\"" + detail::fmt(f.top + f.plot_h() + 4) + "\" stroke=\"black\"/>\n";
      s += "<text x=\"" + detail::fmt(x) + "\" y=\"" + detail::fmt(f.top + f.plot_h() + 18) +
           "\" text-anchor=\"middle\" font-size=\"10\">" + std::to_string(static_cast<long long>(t)) + "</text>\n";
    }
    s += "<text x=\"" + detail::fmt(f.left + f.plot_w() / 2) + "\" y=\"" + detail::fmt(f.height - 8) +
         "\" text-anchor=\"middle\">" + axis + " (log scale)</text>\n";
    std::size_t series = 0;
    for (auto est : report.config.estimators) {
      std::vector<const CellSummary*> pts;
      for (const auto& c : cells) {
        if (c.estimator == est) pts.push_back(&c);
      }
      if (pts.empty()) continue;
      std::sort(pts.begin(), pts.end(), [](auto* a, auto* b) { return a->size < b->size; });
      const char* color = detail::palette(series);
      std::string band, line;
      for (auto* c : pts) band += detail::fmt(px(c->size)) + "," + detail::fmt(py(c->q75())) + " ";
      for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
        band += detail::fmt(px((*it)->size)) + "," + detail::fmt(py((*it)->q25())) + " ";
      }
      for (auto* c : pts) line += detail::fmt(px(c->size)) + "," + detail::fmt(py(c->median_pehe())) + " ";
      band.pop_back();
      line.pop_back();
      s += "<polygon points=\"" + band + "\" fill=\"" + color + "\" fill-opacity=\"0.18\" stroke=\"none\"/>\n";
      s += "<polyline points=\"" + line + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
      const double ly = f.top + 16.0 * static_cast<double>(series) + 10;
      s += "<line x1=\"" + detail::fmt(f.width - f.right + 15) + "\" y1=\"" + detail::fmt(ly) + "\" x2=\"" +
           detail::fmt(f.width - f.right + 35) + "\" y2=\"" + detail::fmt(ly) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
      s += "<text x=\"" + detail::fmt(f.width - f.right + 40) + "\" y=\"" + detail::fmt(ly + 4) + "\">" +
           estimator_name(est) + "</text>\n";
      ++series;
    }
  } else {
    s += detail::svg_open(f, "PEHE by misspecification preset");
    s += detail::y_axis(f, ymax, "PEHE");
    const auto n = static_cast<double>(cells.size());
    const double slot = f.plot_w() / n;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& c = cells[i];
      const double x0 = f.left + slot * static_cast<double>(i) + slot * 0.15;
      const double w = slot * 0.7;
      auto py = [&](double v) { return f.top + f.plot_h() * (1.0 - v / ymax); };
      const double med = py(c.median_pehe());
      s += "<rect x=\"" + detail::fmt(x0) + "\" y=\"" + detail::fmt(med) + "\" width=\"" + detail::fmt(w) +
           "\" height=\"" + detail::fmt(f.top + f.plot_h() - med) + "\" fill=\"" + detail::palette(i) +
           "\" fill-opacity=\"0.8\"/>\n";
      const double xc = x0 + w / 2;
      s += "<line x1=\"" + detail::fmt(xc) + "\" y1=\"" + detail::fmt(py(c.q25())) + "\" x2=\"" + detail::fmt(xc) +
           "\" y2=\"" + detail::fmt(py(c.q75())) + "\" stroke=\"black\"/>\n";
      for (double q : {c.q25(), c.q75()}) {
        s += "<line x1=\"" + detail::fmt(xc - w / 4) + "\" y1=\"" + detail::fmt(py(q)) + "\" x2=\"" +
             detail::fmt(xc + w / 4) + "\" y2=\"" + detail::fmt(py(q)) + "\" stroke=\"black\"/>\n";
      }
      std::string label = c.preset;
      if (report.config.estimators.size() > 1) label = std::string(estimator_name(c.estimator)) + " " + label;
      s += "<text x=\"" + detail::fmt(xc) + "\" y=\"" + detail::fmt(f.top + f.plot_h() + 16) +
           "\" text-anchor=\"middle\" font-size=\"9\">" + label + "</text>\n";
    }
  }
  s += "</svg>\n";
  return s;
}

inline void emit_plot(const ExperimentReport& report, PlotKind kind, const std::string& path) {
  detail::write_file(path, plot_svg(report, kind));
}

}  // namespace hlce

#endif  // HLCE_HARNESS_HPP
