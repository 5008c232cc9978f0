// palp: simulate impedance-controlled palpation of a viscoelastic specimen
// and estimate its contact parameters online, with or without a force
// sensor. Exit codes: 0 success, 1 usage/configuration error, 2 runtime or
// numerical error.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "palp/config.hpp"
#include "palp/harness.hpp"
#include "palp/least_squares.hpp"
#include "palp/trace_io.hpp"

namespace {

using namespace palp;

struct CommonOptions {
  std::string preset;
  std::string config_file;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--preset", opts.preset,
                  "specimen preset (S1-KV..S4-KV, S1-DRM..S4-DRM)");
  cmd->add_option("--config", opts.config_file,
                  "key-value configuration file");
  cmd->add_option("--set", opts.sets,
                  "override a config key, e.g. --set plant.gains.K33=5");
}

// precedence, lowest to highest: defaults, --preset, config file,
// PALPATION_SEED, --set
KeyValues assemble_keys(const CommonOptions& opts) {
  KeyValues kv;
  if (!opts.preset.empty()) kv.set("experiment.preset", opts.preset);
  if (!opts.config_file.empty()) {
    const KeyValues file = KeyValues::parse_file(opts.config_file);
    for (const auto& [key, value] : file.entries()) kv.set(key, value);
  }
  if (const char* env_seed = std::getenv("PALPATION_SEED"))
    kv.set("plant.noise.seed", env_seed);
  for (const std::string& item : opts.sets) {
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got: " + item);
    kv.set(std::string(KeyValues::trim(item.substr(0, eq))),
           std::string(KeyValues::trim(item.substr(eq + 1))));
  }
  return kv;
}

ExperimentConfig assemble_experiment(const CommonOptions& opts) {
  return experiment_from_keys(assemble_keys(opts));
}

int cmd_simulate(const CommonOptions& opts, const std::string& out,
                 double duration_override) {
  ExperimentConfig cfg = assemble_experiment(opts);
  const double duration =
      duration_override > 0.0 ? duration_override : cfg.duration;
  const auto trace = simulate(cfg.plant, duration);
  write_trace(std::filesystem::path(out), trace);
  std::cout << "wrote " << trace.size() << " samples to " << out << '\n';
  return 0;
}

int cmd_estimate(const CommonOptions& opts, const std::string& trace_path,
                 const std::string& variant_token_str,
                 const std::string& out) {
  const ExperimentConfig cfg = assemble_experiment(opts);
  const auto trace = read_trace(std::filesystem::path(trace_path));
  const ModelVariant variant =
      parse_variant_token(variant_token_str, cfg.plant);
  const RunOptions run_opts{cfg.z_tilde_source, cfg.plant.surface_z};
  const auto beliefs =
      run_filter(trace, variant, effective_filter(cfg, variant), run_opts);
  const auto f_hat = reconstruct_force(beliefs, variant);
  write_estimates(std::filesystem::path(out), beliefs, f_hat);
  if (!beliefs.empty()) {
    const StateVector& x = beliefs.back().belief.x_hat;
    std::cout << variant_token(variant) << " final estimate: x1 = "
              << format_double(x(0)) << " mm, x2 = " << format_double(x(1))
              << " mm/s, x3 = " << format_double(x(2))
              << ", x4 = " << format_double(x(3)) << '\n';
  }
  std::cout << "wrote " << beliefs.size() << " estimates to " << out << '\n';
  return 0;
}

void print_fit(const char* label, const FitResult& fit, const char* u3,
               const char* u4) {
  const auto [p3, p4] = std::visit(
      [](const auto& p) {
        if constexpr (std::is_same_v<std::decay_t<decltype(p)>, KvParams>)
          return std::make_pair(p.k, p.c);
        else
          return std::make_pair(p.kappa, p.lambda);
      },
      fit.params);
  std::cout << label << ": " << format_double(p3) << ' ' << u3 << ", "
            << format_double(p4) << ' ' << u4
            << "  (residual MSE " << format_double(fit.residual_mse)
            << " N^2 over " << fit.n_samples << " samples)\n";
  if (fit.condition > 1e8)
    std::cout << "  warning: normal equations poorly conditioned (cond = "
              << format_double(fit.condition) << ")\n";
}

int cmd_fit_reference(const std::string& trace_path, const std::string& model) {
  const auto trace = read_trace(std::filesystem::path(trace_path));
  if (model == "kv" || model == "both")
    print_fit("KV ", fit_kv_ls(trace), "N/mm", "N*s/mm");
  if (model == "drm" || model == "both")
    print_fit("DRM", fit_drm_ls(trace), "N/mm^1.5", "N*s/mm^0.5");
  return 0;
}

int cmd_experiment(const CommonOptions& opts,
                   const std::vector<std::string>& presets, double threshold,
                   const std::string& out_prefix, bool do_emit_series) {
  Study study;
  study.detection_threshold = threshold;
  if (presets.empty()) {
    study.specimens.push_back(assemble_experiment(opts));
  } else {
    for (const std::string& name : presets) {
      CommonOptions per = opts;
      per.preset = name;
      study.specimens.push_back(assemble_experiment(per));
    }
  }

  const StudyReport report = run_study(study);

  const std::filesystem::path machine_path = out_prefix + ".report.kv";
  const std::filesystem::path human_path = out_prefix + ".report.txt";
  {
    std::ofstream machine(machine_path);
    if (!machine) throw Error("cannot write " + machine_path.string());
    write_machine_report(machine, report);
    std::ofstream human(human_path);
    if (!human) throw Error("cannot write " + human_path.string());
    write_human_report(human, report);
  }
  write_human_report(std::cout, report);
  std::cout << '\n'
            << "wrote " << human_path.string() << " and "
            << machine_path.string() << '\n';

  if (do_emit_series)
    for (const ExperimentReport& r : report.specimens)
      for (const auto& path : emit_series(r.config, out_prefix))
        std::cout << "wrote " << path.string() << '\n';
  return 0;
}

int cmd_report(const std::string& in, bool do_emit_series,
               std::string out_prefix) {
  std::ifstream is(in);
  if (!is) throw Error("cannot open report: " + in);
  const StudyReport report = read_machine_report(is);
  write_human_report(std::cout, report);
  if (do_emit_series) {
    if (out_prefix.empty()) {
      out_prefix = in;
      const std::string suffix = ".report.kv";
      if (out_prefix.size() > suffix.size() && out_prefix.ends_with(suffix))
        out_prefix.resize(out_prefix.size() - suffix.size());
    }
    for (const ExperimentReport& r : report.specimens)
      for (const auto& path : emit_series(r.config, out_prefix))
        std::cout << "wrote " << path.string() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "palpation simulation and online viscoelastic parameter estimation"};
  app.require_subcommand(1);

  CommonOptions sim_opts;
  std::string sim_out = "trace.csv";
  double sim_duration = 0.0;
  CLI::App* sim = app.add_subcommand(
      "simulate", "integrate the plant and write a measurement trace");
  add_common(sim, sim_opts);
  sim->add_option("--duration", sim_duration, "simulated time [s]");
  sim->add_option("--out", sim_out, "output trace CSV");

  CommonOptions est_opts;
  std::string est_trace;
  std::string est_variant = "M3";
  std::string est_out = "estimates.csv";
  CLI::App* est = app.add_subcommand(
      "estimate", "run one filter variant over a recorded trace");
  add_common(est, est_opts);
  est->add_option("--trace", est_trace, "input trace CSV")->required();
  est->add_option("--variant", est_variant,
                  "M1..M4, sensorless variants accept :FULL/:SIMPLIFIED");
  est->add_option("--out", est_out, "output estimate CSV");

  std::string fit_trace;
  std::string fit_model = "both";
  CLI::App* fit = app.add_subcommand(
      "fit-reference", "offline least-squares reference fit of a trace");
  fit->add_option("--trace", fit_trace, "input trace CSV")->required();
  fit->add_option("--model", fit_model, "kv, drm, or both")
      ->check(CLI::IsMember({"kv", "drm", "both"}));

  CommonOptions exp_opts;
  std::vector<std::string> exp_presets;
  double exp_threshold = 0.15;
  std::string exp_prefix = "experiment";
  bool exp_series = false;
  CLI::App* exp = app.add_subcommand(
      "experiment", "simulate specimens, run all variants, write reports");
  add_common(exp, exp_opts);
  exp->add_option("--presets", exp_presets,
                  "specimen presets to run (adjacent ones are compared)");
  exp->add_option("--threshold", exp_threshold,
                  "relative stiffness-detection threshold");
  exp->add_option("--out-prefix", exp_prefix, "output file prefix");
  exp->add_flag("--emit-series", exp_series,
                "also write per-variant time-series CSVs");

  std::string rep_in;
  bool rep_series = false;
  std::string rep_prefix;
  CLI::App* rep = app.add_subcommand(
      "report", "render a stored machine report; optionally re-derive series");
  rep->add_option("--in", rep_in, "machine report (.report.kv)")->required();
  rep->add_flag("--emit-series", rep_series,
                "re-run the echoed configs and write time-series CSVs");
  rep->add_option("--out-prefix", rep_prefix, "series file prefix");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_opts, sim_out, sim_duration);
    if (est->parsed())
      return cmd_estimate(est_opts, est_trace, est_variant, est_out);
    if (fit->parsed()) return cmd_fit_reference(fit_trace, fit_model);
    if (exp->parsed())
      return cmd_experiment(exp_opts, exp_presets, exp_threshold, exp_prefix,
                            exp_series);
    if (rep->parsed()) return cmd_report(rep_in, rep_series, rep_prefix);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
