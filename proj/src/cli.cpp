#include "hdiv/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "hdiv/clime.hpp"
#include "hdiv/csv.hpp"
#include "hdiv/errors.hpp"
#include "hdiv/parallel.hpp"
#include "hdiv/two_stage.hpp"

namespace hdiv::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string> kKnownKeys = {
    "sizes",     "sparsities", "structures", "trials",   "seed",      "alpha",       "kappa",
    "se_mode",   "folds",      "grid_length", "grid_ratio", "threads", "rho",         "cs_band",
    "cs_offval", "sigma_u2",   "sigma_v2",   "diagnostics", "oracle_first_stage"};

json default_settings() {
  const StudyConfig d;
  return {{"sizes", json::array()},
          {"sparsities", json::array()},
          {"structures", json::array()},
          {"trials", d.trials},
          {"seed", d.seed},
          {"alpha", d.alpha},
          {"kappa", d.kappa},
          {"se_mode", std::string(to_string(d.se_mode))},
          {"folds", d.cv.folds},
          {"grid_length", d.cv.grid_length},
          {"grid_ratio", d.cv.grid_ratio},
          {"threads", 0},
          {"rho", d.rho},
          {"cs_band", d.cs_band},
          {"cs_offval", d.cs_offval},
          {"sigma_u2", d.sigma_u2},
          {"sigma_v2", d.sigma_v2},
          {"diagnostics", d.diagnostics},
          {"oracle_first_stage", d.oracle_first_stage}};
}

void apply_override(json& settings, const std::string& item) {
  const auto eq = item.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + item + "' is not key=value");
  const std::string key = item.substr(0, eq);
  const std::string text = item.substr(eq + 1);
  if (!kKnownKeys.contains(key)) throw ConfigError("unknown setting '" + key + "'");
  json value = json::parse(text, nullptr, false);
  settings[key] = value.is_discarded() ? json(text) : value;
}

template <class T>
T get(const json& settings, const char* key) {
  try {
    return settings.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("setting '") + key + "' has the wrong type");
  }
}

std::size_t get_count(const json& settings, const char* key) {
  const json& v = settings.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(std::string("setting '") + key + "' must be a nonnegative integer");
  }
  return v.get<std::size_t>();
}

std::vector<std::size_t> tuple(const json& item, std::size_t arity, const char* what) {
  if (!item.is_array() || item.size() != arity) {
    throw ConfigError(std::string(what) + " entries must be arrays of " + std::to_string(arity) + " integers");
  }
  std::vector<std::size_t> out;
  for (const json& v : item) {
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      throw ConfigError(std::string(what) + " entries must hold nonnegative integers");
    }
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

StudyGrid expand(const json& settings) {
  for (const auto& [key, value] : settings.items()) {
    if (!kKnownKeys.contains(key)) throw ConfigError("unknown setting '" + key + "'");
  }
  const json& sizes = settings.at("sizes");
  const json& sparsities = settings.at("sparsities");
  const json& structures = settings.at("structures");
  if (!sizes.is_array() || !sparsities.is_array() || !structures.is_array()) {
    throw ConfigError("sizes, sparsities and structures must be arrays");
  }

  StudyConfig base;
  base.trials = get_count(settings, "trials");
  base.seed = get<std::uint64_t>(settings, "seed");
  base.alpha = get<double>(settings, "alpha");
  base.kappa = get<double>(settings, "kappa");
  base.cv.folds = get_count(settings, "folds");
  base.cv.grid_length = get_count(settings, "grid_length");
  base.cv.grid_ratio = get<double>(settings, "grid_ratio");
  base.threads = get_count(settings, "threads");
  base.rho = get<double>(settings, "rho");
  base.cs_band = static_cast<Index>(get_count(settings, "cs_band"));
  base.cs_offval = get<double>(settings, "cs_offval");
  base.sigma_u2 = get<double>(settings, "sigma_u2");
  base.sigma_v2 = get<double>(settings, "sigma_v2");
  base.diagnostics = get<bool>(settings, "diagnostics");
  base.oracle_first_stage = get<bool>(settings, "oracle_first_stage");
  try {
    base.se_mode = parse_se_mode(get<std::string>(settings, "se_mode"));
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }

  StudyGrid grid;
  grid.echo = settings.dump();
  for (const json& size : sizes) {
    const auto s = tuple(size, 3, "sizes");
    for (const json& sparsity : sparsities) {
      const auto sp = tuple(sparsity, 2, "sparsities");
      for (const json& structure : structures) {
        if (!structure.is_string()) throw ConfigError("structures must be strings");
        StudyConfig cfg = base;
        cfg.n = s[0];
        cfg.px = s[1];
        cfg.pz = s[2];
        cfg.sb = sp[0];
        cfg.sa = sp[1];
        try {
          cfg.structure = parse_sigma_structure(structure.get<std::string>());
          cfg.validate();
        } catch (const Error& e) {
          throw ConfigError(e.what());
        }
        grid.configs.push_back(cfg);
      }
    }
  }
  if (grid.configs.empty()) throw ConfigError("no configurations");
  return grid;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

json config_json(const StudyConfig& cfg) {
  return {{"n", cfg.n},   {"p_x", cfg.px}, {"p_z", cfg.pz}, {"s_b", cfg.sb},
          {"s_a", cfg.sa}, {"sigma_structure", std::string(to_string(cfg.structure))}};
}

std::string trials_table(const StudyMetrics& m) {
  std::string out =
      "trial,coverage,avg_length,mse,worst_kkt,lasso_certified,lasso_fits,clime_certified,clime_rows,"
      "reconstruction_gap\n";
  for (const TrialRecord& t : m.trials) {
    out += csv_line({std::to_string(t.index), format_number(t.coverage), format_number(t.avg_length),
                     format_number(t.mse), format_number(t.worst_kkt), std::to_string(t.lasso_certified),
                     std::to_string(t.lasso_fits), std::to_string(t.clime_certified), std::to_string(t.clime_rows),
                     t.diagnostics ? format_number(t.diagnostics->reconstruction_gap) : std::string()});
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::InvalidArgument, "cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw Error(ErrorCode::InvalidArgument, "failed writing '" + path.string() + "'");
}

void emit(const std::string& target, const std::string& text, std::ostream& out) {
  if (target.empty() || target == "-") {
    out << text;
  } else {
    write_text(target, text);
  }
}

double inf_norm(const Vector& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

struct SimulateArgs {
  std::string config, out;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha, kappa;
  std::optional<std::string> se_mode;
  std::optional<std::size_t> trials, threads;
  bool dry_run = false;
};

std::vector<std::string> flag_overrides(const SimulateArgs& a) {
  std::vector<std::string> o = a.overrides;
  if (a.seed) o.push_back("seed=" + std::to_string(*a.seed));
  if (a.alpha) o.push_back("alpha=" + format_exact(*a.alpha));
  if (a.kappa) o.push_back("kappa=" + format_exact(*a.kappa));
  if (a.se_mode) o.push_back("se_mode=" + *a.se_mode);
  if (a.trials) o.push_back("trials=" + std::to_string(*a.trials));
  if (a.threads) o.push_back("threads=" + std::to_string(*a.threads));
  return o;
}

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  StudyGrid grid;
  try {
    grid = load_grid_file(a.config, flag_overrides(a));
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  const fs::path dir(a.out);
  if (a.dry_run) {
    std::string plan = "n,p_x,p_z,s_b,s_a,sigma_structure,N,seed\n";
    for (const StudyConfig& c : grid.configs) {
      plan += csv_line({std::to_string(c.n), std::to_string(c.px), std::to_string(c.pz), std::to_string(c.sb),
                        std::to_string(c.sa), std::string(to_string(c.structure)), std::to_string(c.trials),
                        std::to_string(c.seed)});
    }
    out << plan;
    return 0;
  }

  const std::string started = timestamp();
  std::error_code ec;
  fs::create_directories(dir / "trials", ec);
  if (ec) {
    err << "error: cannot create '" << dir.string() << "': " << ec.message() << "\n";
    return 2;
  }

  std::string metrics = std::string(kMetricsHeader) + "\n";
  json outputs = json::array();
  outputs.push_back({{"kind", "metrics"}, {"path", "metrics.csv"}});
  for (std::size_t i = 0; i < grid.configs.size(); ++i) {
    StudyConfig cfg = grid.configs[i];
    cfg.threads = resolve_threads(cfg.threads);
    err << "config " << i + 1 << "/" << grid.configs.size() << ": (" << cfg.n << "," << cfg.px << "," << cfg.pz
        << ") (" << cfg.sb << "," << cfg.sa << ") " << to_string(cfg.structure) << "\n";
    const StudyMetrics m = run_study(cfg);
    metrics += metrics_row(cfg, m);
    std::ostringstream name;
    name << "trials/config_" << std::setw(3) << std::setfill('0') << i << ".csv";
    write_text(dir / name.str(), trials_table(m));
    json entry = {{"kind", "trials"}, {"path", name.str()}, {"config", config_json(cfg)}};
    entry["failed_trials"] = m.failed_trials;
    outputs.push_back(entry);
  }
  write_text(dir / "metrics.csv", metrics);

  const json manifest = {{"artifact", "hdiv"},
                         {"version", kVersion},
                         {"rng", Rng::kAlgorithm},
                         {"seed", grid.configs.front().seed},
                         {"started_at", started},
                         {"finished_at", timestamp()},
                         {"config", json::parse(grid.echo)},
                         {"outputs", outputs}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  out << metrics;
  return 0;
}

struct FitArgs {
  std::string y, x, z, out = "-";
  FitOptions opts;
  std::string se_mode = "robust";
};

int cmd_fit(FitArgs a, std::ostream& out, std::ostream& err) {
  Matrix y, X, Z;
  try {
    a.opts.se_mode = parse_se_mode(a.se_mode);
    if (!(a.opts.alpha > 0.0 && a.opts.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (!(a.opts.kappa > 1.0)) throw ConfigError("kappa must exceed 1");
    y = read_csv_matrix(a.y);
    X = read_csv_matrix(a.x);
    Z = read_csv_matrix(a.z);
    if (y.cols() != 1) throw ConfigError("y must have exactly one column");
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  std::string table;
  try {
    table = fit_table(y.col(0), X, Z, a.opts);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  emit(a.out, table, out);
  return 0;
}

struct DiagnoseArgs {
  std::string config, out = "-";
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::size_t trial = 0;
  std::size_t index = 0;
  bool oracle_first_stage = false;
};

int cmd_diagnose(const DiagnoseArgs& a, std::ostream& out, std::ostream& err) {
  StudyConfig cfg;
  try {
    std::vector<std::string> o = a.overrides;
    if (a.seed) o.push_back("seed=" + std::to_string(*a.seed));
    if (a.oracle_first_stage) o.push_back("oracle_first_stage=true");
    o.push_back("diagnostics=true");
    const StudyGrid grid = load_grid_file(a.config, o);
    if (a.index >= grid.configs.size()) throw ConfigError("--index is out of range");
    cfg = grid.configs[a.index];
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  const IvModel model = make_model(cfg);
  const TrialRecord rec = run_trial(model, cfg, trial_stream(cfg.seed, a.trial), a.trial);
  const RemainderDiagnostics& d = *rec.diagnostics;
  json doc = {{"config", config_json(cfg)},
              {"seed", cfg.seed},
              {"trial", a.trial},
              {"oracle_first_stage", cfg.oracle_first_stage},
              {"scaled_error_inf", inf_norm(d.scaled_error)},
              {"main_term_inf", inf_norm(d.main_term)},
              {"main_term_l2", d.main_term.norm()},
              {"rem1_inf", inf_norm(d.rem1)},
              {"rem2_inf", inf_norm(d.rem2)},
              {"rem3_inf", inf_norm(d.rem3)},
              {"rem4_inf", inf_norm(d.rem4)},
              {"reconstruction_gap", d.reconstruction_gap}};
  emit(a.out, doc.dump(2) + "\n", out);
  return 0;
}

}  // namespace

StudyGrid load_grid(const std::string& json_text, const std::vector<std::string>& overrides) {
  json file = json::parse(json_text, nullptr, false);
  if (file.is_discarded() || !file.is_object()) throw ConfigError("config is not a JSON object");
  json settings = default_settings();
  for (const auto& [key, value] : file.items()) {
    if (!kKnownKeys.contains(key)) throw ConfigError("unknown setting '" + key + "'");
    settings[key] = value;
  }
  for (const std::string& o : overrides) apply_override(settings, o);
  return expand(settings);
}

StudyGrid load_grid_file(const std::string& path, const std::vector<std::string>& overrides) {
  return load_grid(read_file(path), overrides);
}

std::string metrics_row(const StudyConfig& cfg, const StudyMetrics& m) {
  return csv_line({std::to_string(cfg.n), std::to_string(cfg.px), std::to_string(cfg.pz), std::to_string(cfg.sb),
                   std::to_string(cfg.sa), std::string(to_string(cfg.structure)), format_number(m.coverage),
                   format_number(m.avg_length), format_number(m.mse), std::to_string(m.trials.size()),
                   std::to_string(cfg.seed)});
}

std::string fit_table(const Vector& y, const Matrix& X, const Matrix& Z, const FitOptions& opts) {
  if (X.rows() != y.size() || Z.rows() != y.size()) {
    throw ConfigError("y, X and Z must have the same number of rows");
  }
  if (X.cols() > Z.cols()) throw ConfigError("X has more columns than Z");
  if (y.size() < static_cast<Index>(opts.folds)) throw ConfigError("fewer rows than cross-validation folds");

  CvOptions cv;
  cv.folds = opts.folds;
  const TwoStageFit fit = fit_two_stage(Z, X, y, Rng(opts.seed), cv, resolve_threads(opts.threads));
  PrecisionOptions popts;
  popts.kappa = opts.kappa;
  popts.threads = resolve_threads(opts.threads);
  const PrecisionEstimate precision = build_precision(fit.gram, popts);
  const InferenceResult res =
      debiased_inference(fit.beta_hat(), precision.theta, fit.first.Dhat, X, y, opts.alpha, opts.se_mode);

  std::string out = std::string(kFitHeader) + "\n";
  for (Index j = 0; j < X.cols(); ++j) {
    out += csv_line({std::to_string(j + 1), format_number(fit.beta_hat()[j]), format_number(res.beta_db[j]),
                     format_number(res.se[j]), format_number(res.ci_lower[j]), format_number(res.ci_upper[j])});
  }
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Debiased two-stage lasso inference for high-dimensional IV regression", "hdiv"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* simulate = app.add_subcommand("simulate", "Run the Monte Carlo study over a configuration grid");
  simulate->add_option("--config", sim.config, "JSON grid file")->required();
  simulate->add_option("--out", sim.out, "output directory")->required();
  simulate->add_option("--seed", sim.seed, "study seed");
  simulate->add_option("--alpha", sim.alpha, "interval level alpha");
  simulate->add_option("--kappa", sim.kappa, "CLIME tolerance inflation");
  simulate->add_option("--se-mode", sim.se_mode, "robust or homoscedastic");
  simulate->add_option("--trials", sim.trials, "trials per configuration");
  simulate->add_option("--threads", sim.threads, "worker threads (default: HDIV_THREADS or 1)");
  simulate->add_flag("--dry-run", sim.dry_run, "print the expanded grid and exit");
  simulate->add_option("overrides", sim.overrides, "key=value settings");

  FitArgs fit;
  CLI::App* fit_cmd = app.add_subcommand("fit", "Estimate and report intervals for one data set");
  fit_cmd->add_option("--y", fit.y, "n x 1 response CSV")->required();
  fit_cmd->add_option("--x", fit.x, "n x p_x endogenous regressors CSV")->required();
  fit_cmd->add_option("--z", fit.z, "n x p_z instruments CSV")->required();
  fit_cmd->add_option("--alpha", fit.opts.alpha, "interval level alpha")->capture_default_str();
  fit_cmd->add_option("--kappa", fit.opts.kappa, "CLIME tolerance inflation")->capture_default_str();
  fit_cmd->add_option("--se-mode", fit.se_mode, "robust or homoscedastic")->capture_default_str();
  fit_cmd->add_option("--seed", fit.opts.seed, "cross-validation seed")->capture_default_str();
  fit_cmd->add_option("--folds", fit.opts.folds, "cross-validation folds")->capture_default_str();
  fit_cmd->add_option("--threads", fit.opts.threads, "worker threads (default: HDIV_THREADS or 1)");
  fit_cmd->add_option("--out", fit.out, "output CSV, - for stdout")->capture_default_str();
  fit.opts.threads = 0;

  DiagnoseArgs diag;
  CLI::App* diagnose = app.add_subcommand("diagnose", "Remainder decomposition for one seeded trial");
  diagnose->add_option("--config", diag.config, "JSON grid file")->required();
  diagnose->add_option("--out", diag.out, "output JSON, - for stdout")->capture_default_str();
  diagnose->add_option("--seed", diag.seed, "study seed");
  diagnose->add_option("--trial", diag.trial, "trial index")->capture_default_str();
  diagnose->add_option("--index", diag.index, "configuration index within the grid")->capture_default_str();
  diagnose->add_flag("--oracle-first-stage", diag.oracle_first_stage, "use the true A in place of the first stage");
  diagnose->add_option("overrides", diag.overrides, "key=value settings");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*simulate) return cmd_simulate(sim, out, err);
    if (*fit_cmd) return cmd_fit(fit, out, err);
    if (*diagnose) return cmd_diagnose(diag, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace hdiv::cli
