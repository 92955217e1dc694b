#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "compresid/envelope.hpp"
#include "compresid/error.hpp"
#include "compresid/io.hpp"
#include "compresid/parallel.hpp"
#include "compresid/preprocess.hpp"
#include "compresid/regression.hpp"
#include "compresid/residuals.hpp"
#include "compresid/simstudy.hpp"

namespace compresid::cli {

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

// Turns every "-1" / "none" / "" into an intercept-only submodel.
Submodel parse_submodel(const std::string& text) {
  Submodel s;
  for (auto& name : split_list(text)) {
    if (name == "-1") {
      s.intercept = false;
    } else if (name != "1" && name != "none") {
      s.covariates.push_back(std::move(name));
    }
  }
  return s;
}

void write_error(std::ostream& err, std::string_view category, const std::string& message) {
  const nlohmann::json j = {{"error", {{"category", category}, {"message", message}}}};
  err << j.dump() << '\n';
}

/// Progress lines on stderr, at most about 20 per run.
std::function<void(std::size_t, std::size_t)> progress_printer(std::ostream& err,
                                                             const std::string& label,
                                                             bool quiet) {
  if (quiet) return {};
  auto last = std::make_shared<std::size_t>(0);
  return [&err, label, last](std::size_t done, std::size_t total) {
    const std::size_t step = std::max<std::size_t>(1, total / 20);
    if (done == total || done >= *last + step) {
      *last = done;
      err << label << ": " << done << '/' << total << '\n' << std::flush;
    }
  };
}

struct DataOptions {
  std::string path;
  std::string components;
  double zero_epsilon = 0.001;
  double max_zero_fraction = 0.1;
};

void add_data_options(CLI::App* cmd, DataOptions& d, bool need_components) {
  cmd->add_option("--data", d.path, "Input CSV (header row, decimal point)")->required();
  auto* comp = cmd->add_option("--components", d.components,
                               "Comma-separated response columns (default: the model's)");
  if (need_components) comp->required();
  cmd->add_option("--zero-epsilon", d.zero_epsilon, "Replacement value for zero components")
      ->capture_default_str();
  cmd->add_option("--max-zero-fraction", d.max_zero_fraction,
                  "Largest fraction of rows allowed to contain zeros")
      ->capture_default_str();
}

Dataset load_data(const DataOptions& d, const std::vector<std::string>& components) {
  const Dataset raw = read_dataset(d.path, components, /*raw=*/true);
  Dataset data = preprocess_zeros(raw, d.zero_epsilon, d.max_zero_fraction);
  for (Eigen::Index i = 0; i < data.responses.rows(); ++i) {
    data.responses.row(i) /= data.responses.row(i).sum();
  }
  try {
    data.validate();
  } catch (const DataError& e) {
    throw DataError(std::string("after zero replacement: ") + e.what());
  }
  return data;
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void print_estimates(std::ostream& out, const FittedModel& fit,
                     const std::vector<std::string>& components) {
  out << "loglik " << format_double(fit.loglik) << '\n';
  out << "converged " << (fit.converged ? "true" : "false") << " iterations " << fit.iterations
      << '\n';
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %-16s %12s %12s %12s\n", "Submodel", "Covariate",
                "Estimate", "Std. Error", "Exp(estim)");
  out << line;
  const Eigen::VectorXd theta = fit.coef.flatten();
  std::size_t p = 0;
  auto row = [&](const std::string& submodel, const std::string& covariate) {
    const double est = theta[static_cast<Eigen::Index>(p)];
    const std::string se =
        fit.std_errors ? fixed((*fit.std_errors)[static_cast<Eigen::Index>(p)]) : "NA";
    std::snprintf(line, sizeof line, "%-16s %-16s %12s %12s %12s\n", submodel.c_str(),
                  covariate.c_str(), fixed(est).c_str(), se.c_str(), fixed(std::exp(est)).c_str());
    out << line;
    ++p;
  };
  auto rows = [&](const std::string& label, const Submodel& s) {
    if (s.intercept) row(label, "(Intercept)");
    for (const auto& c : s.covariates) row(label, c);
  };
  for (std::size_t m = 0; m < fit.spec.mean.size(); ++m) {
    rows(components[fit.spec.mean_component(m)], fit.spec.mean[m]);
  }
  rows("precision", fit.spec.precision);
}

// ---------------------------------------------------------------------------

struct FitArgs {
  DataOptions data;
  std::string mean_cov;
  std::string prec_cov;
  std::string reference;
  std::string out;
  std::uint64_t seed = 0;
  int max_iter = 500;
};

int cmd_fit(const FitArgs& a, std::ostream& out) {
  const auto components = split_list(a.data.components);
  const Dataset data = load_data(a.data, components);
  std::size_t reference = 0;
  if (!a.reference.empty()) {
    const auto it = std::find(components.begin(), components.end(), a.reference);
    if (it == components.end()) throw UsageError("reference '" + a.reference + "' is not a component");
    reference = static_cast<std::size_t>(it - components.begin());
  }
  const ModelSpec spec = ModelSpec::uniform(components.size(), parse_submodel(a.mean_cov),
                                            parse_submodel(a.prec_cov), reference);
  FitOptions options;
  options.max_iter = a.max_iter;
  FittedModel fit = fit_mle(spec, data, options);
  if (!fit.converged) {
    throw FitError("optimizer did not converge in " + std::to_string(fit.iterations) +
                   " iterations (max |gradient| " + format_double(fit.gradient_max_norm) + ")");
  }
  fit.std_errors = standard_errors(fit, data);
  ModelArtifact artifact{components, fit, a.seed, std::filesystem::path(a.data.path).filename().string()};
  write_file_atomic(a.out, artifact_json(artifact));
  print_estimates(out, fit, components);
  return kExitOk;
}

struct LrArgs {
  std::string full;
  std::string reduced;
};

int cmd_lrtest(const LrArgs& a, std::ostream& out) {
  const ModelArtifact full = read_artifact(a.full);
  const ModelArtifact reduced = read_artifact(a.reduced);
  if (full.component_names != reduced.component_names) {
    throw DataError("models were fitted to different components");
  }
  if (full.data_source != reduced.data_source) {
    throw DataError("models were fitted to different data ('" + full.data_source + "' vs '" +
                    reduced.data_source + "')");
  }
  const LikelihoodRatioTest t = lr_test(full.fit, reduced.fit);
  out << "statistic " << format_double(t.statistic) << '\n'
      << "df " << t.df << '\n'
      << "p_value " << format_double(t.p_value) << '\n';
  return kExitOk;
}

struct ModelDataArgs {
  DataOptions data;
  std::string model;
  std::string kind = "a1";
  std::size_t B = 1000;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  bool quiet = false;
};

struct Loaded {
  ModelArtifact artifact;
  Dataset data;
  FittedModel fit;
};

Loaded load_model_and_data(const ModelDataArgs& a) {
  Loaded l;
  l.artifact = read_artifact(a.model);
  const auto components =
      a.data.components.empty() ? l.artifact.component_names : split_list(a.data.components);
  l.data = load_data(a.data, components);
  l.fit = restore_fit(l.artifact, l.data);
  return l;
}

struct ResidualArgs : ModelDataArgs {
  std::string out;
};

int cmd_residuals(const ResidualArgs& a, std::ostream& out) {
  const ResidualKind kind = parse_kind(a.kind);
  const Loaded l = load_model_and_data(a);
  std::ostringstream csv;
  csv << schema_line("residuals") << '\n';
  csv << "# kind=" << kind_name(kind) << " seed=" << a.seed;
  if (is_class_kind(kind)) {
    BootstrapConfig cfg;
    cfg.B = a.B;
    cfg.seed = a.seed;
    cfg.threads = a.threads;
    const ClassResidualResult r = class_residual(l.fit, l.data, kind, cfg);
    csv << " B=" << a.B << " replicate_failures=" << r.replicate_failures << '\n'
        << "i,residual,l,a,u\n";
    for (Eigen::Index i = 0; i < r.s.size(); ++i) {
      csv << (i + 1) << ',' << format_double(r.s[i]) << ',' << format_double(r.l[i]) << ','
          << r.a[i] << ',' << format_double(r.u[i]) << '\n';
    }
    out << "replicate_failures " << r.replicate_failures << '\n';
  } else {
    const Eigen::VectorXd r = composite_residuals(l.data.responses, l.fit.fitted_values(), kind);
    csv << '\n' << "i,residual\n";
    for (Eigen::Index i = 0; i < r.size(); ++i) csv << (i + 1) << ',' << format_double(r[i]) << '\n';
  }
  write_file_atomic(a.out, csv.str());
  out << "wrote " << l.data.n() << " residuals (" << kind_name(kind) << ") to " << a.out << '\n';
  return kExitOk;
}

struct EnvelopeArgs : ModelDataArgs {
  std::size_t R = 100;
  std::size_t inner_B = 0;
  std::string svg;
  std::string csv;
  std::optional<double> v;
};

int cmd_envelope(const EnvelopeArgs& a, std::ostream& out) {
  if (a.svg.empty() && a.csv.empty()) throw UsageError("envelope needs --svg and/or --csv");
  const ResidualKind kind = parse_kind(a.kind);
  const Loaded l = load_model_and_data(a);
  EnvelopeConfig cfg;
  cfg.R = a.R;
  cfg.inner_B = a.inner_B;
  cfg.bootstrap.B = a.B;
  cfg.bootstrap.seed = a.seed;
  cfg.bootstrap.threads = a.threads;
  const EnvelopeResult env = simulated_envelope(l.fit, l.data, kind, cfg);
  std::optional<DetectionRule> rule;
  if (a.v) rule = detect_misspecification(env, *a.v);

  std::vector<std::pair<std::string, std::string>> meta = {
      {"kind", std::string(kind_name(kind))},
      {"R", std::to_string(a.R)},
      {"B", std::to_string(a.B)},
      {"inner_B", std::to_string(a.inner_B == 0 ? a.B : a.inner_B)},
      {"seed", std::to_string(a.seed)},
      {"outside", std::to_string(env.outside_count)},
      {"e", format_double(env.e)}};
  if (rule) {
    meta.emplace_back("v", format_double(rule->v));
    meta.emplace_back("flagged_points", std::to_string(rule->flagged_points));
  }
  // Render both before writing either so a failure leaves nothing behind.
  const std::string title = "Simulated envelope, " + std::string(kind_name(kind)) + " residuals";
  const std::string svg = envelope_svg(env, title);
  const std::string table = envelope_csv(env, meta);
  if (!a.svg.empty()) write_file_atomic(a.svg, svg);
  if (!a.csv.empty()) write_file_atomic(a.csv, table);

  out << "outside " << env.outside_count << '\n' << "e " << format_double(env.e) << '\n';
  if (rule) {
    out << "v " << format_double(rule->v) << '\n'
        << "flagged_points " << rule->flagged_points << '\n'
        << "verdict " << (rule->flagged() ? "misspecified" : "no-evidence") << '\n';
  }
  return kExitOk;
}

struct SimulateArgs {
  std::string scenario = "1a";
  std::size_t n = 20;
  std::size_t replicates = 500;
  std::size_t B = 200;
  std::uint64_t seed = 0;
  std::string out;
  bool paper_scale = false;
  std::size_t threads = 0;
  bool quiet = false;
};

int cmd_simulate(SimulateArgs a, bool replicates_given, bool B_given, std::ostream& out,
                 std::ostream& err) {
  if (a.paper_scale) {
    if (!replicates_given) a.replicates = 2000;
    if (!B_given) a.B = 1000;
  }
  const ScenarioConfig cfg = scenario_config(a.scenario, a.n);
  StudyOptions options;
  options.replicates = a.replicates;
  options.B = a.B;
  options.seed = a.seed;
  options.threads = a.threads;
  options.progress = progress_printer(err, "simulate " + a.scenario, a.quiet);
  const SummaryTable table = run_scenario_study(cfg, options);
  write_file_atomic(a.out, summary_table_csv(table));

  out << "scenario " << table.scenario << " n " << table.n << " replicates " << table.replicates
      << " B " << table.B << '\n';
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %10s %10s %10s %10s %10s\n", "kind", "mean", "variance",
                "skewness", "kurtosis", "ad");
  out << line;
  for (std::size_t c = 0; c < 4; ++c) {
    std::snprintf(line, sizeof line, "%-8s %10.4f %10.4f %10.4f %10.4f %10.4f\n",
                  std::string(kind_name(kClassKinds[c])).c_str(), table.column_mean[0][c],
                  table.column_mean[1][c], table.column_mean[2][c], table.column_mean[3][c],
                  table.column_mean[4][c]);
    out << line;
  }
  return kExitOk;
}

struct PowerArgs {
  PowerStudyOptions study;
  std::string out;
  bool quiet = false;
};

int cmd_power(PowerArgs a, std::ostream& out, std::ostream& err) {
  a.study.progress = progress_printer(err, "power", a.quiet);
  const PowerStudyResult result = run_power_study(MixtureConfig::standard_sets(), a.study);
  write_file_atomic(a.out, power_histogram_csv(result));
  out << "v_class " << format_double(result.v_class) << '\n'
      << "v_composite " << format_double(result.v_composite) << '\n';
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %14s %14s\n", "kind", "flagged_correct", "flagged_wrong");
  out << line;
  for (const auto kind : kAllKinds) {
    std::snprintf(line, sizeof line, "%-8s %14.3f %14.3f\n", std::string(kind_name(kind)).c_str(),
                  result.flag_rate(kind, false), result.flag_rate(kind, true));
    out << line;
  }
  return kExitOk;
}

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::usage: return kExitUsage;
    case ErrorCategory::data: return kExitData;
    case ErrorCategory::numerical: return kExitNumerical;
  }
  return kExitNumerical;
}

std::string_view category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::usage: return "usage";
    case ErrorCategory::data: return "data";
    case ErrorCategory::numerical: return "numerical";
  }
  return "numerical";
}

void add_threads(CLI::App* cmd, std::size_t& threads) {
  cmd->add_option("--threads", threads, "Worker threads (0: all cores)")->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dirichlet regression residual diagnostics", "compresid"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every command");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a Dirichlet regression and write a model file");
  add_data_options(fit_cmd, fit.data, true);
  fit_cmd->add_option("--mean-cov", fit.mean_cov, "Mean covariates (comma-separated)");
  fit_cmd->add_option("--prec-cov", fit.prec_cov, "Precision covariates (comma-separated)");
  fit_cmd->add_option("--reference", fit.reference, "Reference component (default: first)");
  fit_cmd->add_option("--max-iter", fit.max_iter, "Optimizer iteration limit")->capture_default_str();
  fit_cmd->add_option("--seed", fit.seed, "Seed recorded in the model file");
  fit_cmd->add_option("--out", fit.out, "Model file (JSON)")->required();

  LrArgs lr;
  auto* lr_cmd = app.add_subcommand("lrtest", "Likelihood-ratio test between two nested fits");
  lr_cmd->add_option("--full", lr.full, "Model file of the larger model")->required();
  lr_cmd->add_option("--reduced", lr.reduced, "Model file of the nested model")->required();

  ResidualArgs res;
  auto* res_cmd = app.add_subcommand("residuals", "Per-observation residuals");
  res_cmd->add_option("--model", res.model, "Model file")->required();
  add_data_options(res_cmd, res.data, false);
  res_cmd->add_option("--kind", res.kind, "a1, q1, a2, q2, pearson or compq")->capture_default_str();
  res_cmd->add_option("--B", res.B, "Bootstrap replicates")->capture_default_str();
  res_cmd->add_option("--seed", res.seed, "Random seed")->capture_default_str();
  res_cmd->add_option("--out", res.out, "Output CSV")->required();
  add_threads(res_cmd, res.threads);

  EnvelopeArgs env;
  auto* env_cmd = app.add_subcommand("envelope", "Normal probability plot with simulated envelope");
  env_cmd->add_option("--model", env.model, "Model file")->required();
  add_data_options(env_cmd, env.data, false);
  env_cmd->add_option("--kind", env.kind, "Residual kind")->capture_default_str();
  env_cmd->add_option("--R", env.R, "Simulated datasets")->capture_default_str();
  env.B = 100;
  env_cmd->add_option("--B", env.B, "Bootstrap replicates for the observed residuals")
      ->capture_default_str();
  env_cmd->add_option("--inner-B", env.inner_B, "Bootstrap replicates inside each simulation (0: same as --B)")
      ->capture_default_str();
  env_cmd->add_option("--seed", env.seed, "Random seed")->capture_default_str();
  env_cmd->add_option("--svg", env.svg, "Plot output");
  env_cmd->add_option("--csv", env.csv, "Band data output");
  env_cmd->add_option("--v", env.v, "Detection threshold");
  env_cmd->add_flag("--quiet", env.quiet, "No progress output");
  add_threads(env_cmd, env.threads);

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo study of the class residuals");
  sim_cmd->add_option("--scenario", sim.scenario, "1a..5a, 1b..5b")->capture_default_str();
  sim_cmd->add_option("--n", sim.n, "Sample size")->capture_default_str();
  auto* rep_opt = sim_cmd->add_option("--replicates", sim.replicates, "Monte Carlo replicates")
                      ->capture_default_str();
  auto* b_opt = sim_cmd->add_option("--B", sim.B, "Bootstrap replicates")->capture_default_str();
  sim_cmd->add_option("--seed", sim.seed, "Random seed")->capture_default_str();
  sim_cmd->add_option("--out", sim.out, "Summary table CSV")->required();
  sim_cmd->add_flag("--paper-scale", sim.paper_scale, "2000 replicates and B = 1000");
  sim_cmd->add_flag("--quiet", sim.quiet, "No progress output");
  add_threads(sim_cmd, sim.threads);

  PowerArgs pow;
  pow.study.threads = 0;
  auto* pow_cmd = app.add_subcommand("power", "Envelope calibration and power study");
  pow_cmd->add_option("--g-correct", pow.study.g_correct, "Correct-model datasets")->capture_default_str();
  pow_cmd->add_option("--g-wrong", pow.study.g_wrong, "Mixture datasets")->capture_default_str();
  pow_cmd->add_option("--n", pow.study.n, "Sample size")->capture_default_str();
  pow_cmd->add_option("--R", pow.study.R, "Simulated datasets per envelope")->capture_default_str();
  pow_cmd->add_option("--B", pow.study.B, "Bootstrap replicates for observed residuals")
      ->capture_default_str();
  pow_cmd->add_option("--inner-B", pow.study.inner_B, "Bootstrap replicates inside each simulation")
      ->capture_default_str();
  pow_cmd->add_option("--seed", pow.study.seed, "Random seed")->capture_default_str();
  pow_cmd->add_option("--out", pow.out, "Histogram CSV")->required();
  pow_cmd->add_flag("--quiet", pow.quiet, "No progress output");
  add_threads(pow_cmd, pow.study.threads);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    write_error(err, "usage", e.what());
    return kExitUsage;
  }

  try {
    if (fit_cmd->parsed()) return cmd_fit(fit, out);
    if (lr_cmd->parsed()) return cmd_lrtest(lr, out);
    if (res_cmd->parsed()) return cmd_residuals(res, out);
    if (env_cmd->parsed()) return cmd_envelope(env, out);
    if (sim_cmd->parsed()) {
      return cmd_simulate(sim, rep_opt->count() > 0, b_opt->count() > 0, out, err);
    }
    if (pow_cmd->parsed()) return cmd_power(pow, out, err);
  } catch (const Error& e) {
    write_error(err, category_name(e.category()), e.what());
    return exit_code(e.category());
  } catch (const std::exception& e) {
    write_error(err, "internal", e.what());
    return kExitNumerical;
  }
  write_error(err, "usage", "no command given");
  return kExitUsage;
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace compresid::cli
