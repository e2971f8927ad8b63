// adaguide: run guidance-strategy experiments over analytic Gaussian-mixture scores.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "adaguide/bench.hpp"
#include "adaguide/text.hpp"

namespace {

using adaguide::bench::ConfigValues;

struct ExperimentFlags {
  std::string config_path;
  std::map<std::string, std::vector<std::string>> lists;
  bool diag = false;
  std::map<std::string, CLI::Option*> options;
  CLI::Option* diag_option = nullptr;

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "JSON config file; flags override its values");
    const std::vector<std::pair<std::string, std::string>> keys = {
        {"model", "mixture spec JSON (default: built-in 3-class preset)"},
        {"schedule", "vp-linear[:bmin:bmax] | vp-cosine[:s] | rectified-flow"},
        {"T", "inference steps"},
        {"strategy", "full_cfg | conditional_only | unconditional_only | step_ag | snr_ag | similarity_ag"},
        {"p", "step_ag guidance ratio"},
        {"w", "guidance scale"},
        {"gamma", "similarity_ag threshold"},
        {"lambda", "snr_ag threshold"},
        {"late-score", "conditional | unconditional"},
        {"condition", "class label or 'all'"},
        {"n", "samples per condition"},
        {"seed", "base seed"},
        {"threads", "worker threads per batch (0 = hardware)"},
        {"out", "CSV file rows are appended to"},
        {"trace-dir", "directory for per-sample trace files"},
        {"trace-count", "traces written per condition"},
    };
    for (const auto& [key, help] : keys) {
      options[key] = app.add_option("--" + key, lists[key], help)->delimiter(',');
    }
    diag_option = app.add_flag("--diag", diag, "evaluate both scores every step to record gamma");
  }

  ConfigValues values() const {
    ConfigValues merged;
    if (!config_path.empty()) merged = adaguide::bench::load_config_file(config_path);
    for (const auto& [key, option] : options) {
      if (option->count() > 0) merged[key] = lists.at(key);
    }
    if (diag_option->count() > 0) merged["diag"] = {diag ? "true" : "false"};
    return merged;
  }
};

void print_summary(const adaguide::bench::RunResult& r) {
  std::cout << adaguide::bench::cell_tag(r.config) << ": total_evals=" << r.cost.total_evals
            << " saved=" << adaguide::text::format_double(r.cost.evals_saved_ratio)
            << " alignment_acc=" << adaguide::text::format_double(r.quality.alignment_acc)
            << " mean_wall_ms=" << r.cost.mean_wall_ms << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive classifier-free guidance benchmark over Gaussian-mixture scores"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "sample one configuration and append a CSV row");
  ExperimentFlags run_flags;
  run_flags.attach(*run);

  auto* sweep = app.add_subcommand("sweep", "Cartesian sweep over comma-separated flag values");
  ExperimentFlags sweep_flags;
  sweep_flags.attach(*sweep);

  auto* gamma = app.add_subcommand("gamma-curves", "per-step mean cosine similarity over n-avg trajectories");
  ExperimentFlags gamma_flags;
  gamma_flags.attach(*gamma);
  int n_avg = 20;
  std::string gamma_out;
  gamma->add_option("--n-avg", n_avg, "trajectories averaged")->capture_default_str();
  gamma->add_option("--curve-out", gamma_out, "output file (default: stdout)");

  auto* snr = app.add_subcommand("snr-curves", "SNR along dense and inference grids");
  std::vector<std::string> schedules = {"vp-linear", "vp-cosine", "rectified-flow"};
  int snr_steps = 50;
  std::string snr_out;
  snr->add_option("--schedules", schedules, "schedule specs")->delimiter(',')->capture_default_str();
  snr->add_option("--T", snr_steps, "inference steps")->capture_default_str();
  snr->add_option("--out", snr_out, "output file (default: stdout)");

  auto* validate = app.add_subcommand("validate-model", "load and check a mixture spec");
  std::string model_path;
  validate->add_option("model,--model", model_path, "mixture spec JSON")->required();

  auto* preset = app.add_subcommand("preset", "print the built-in 3-class preset as a mixture spec");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const auto config = adaguide::bench::run_config_from(run_flags.values());
      print_summary(adaguide::bench::run_experiment(config));
    } else if (sweep->parsed()) {
      const auto values = sweep_flags.values();
      ConfigValues scalars;
      for (const auto& [key, list] : values) {
        if (list.size() == 1) scalars[key] = list;
      }
      const auto base = adaguide::bench::run_config_from(scalars);
      const auto axes = adaguide::bench::sweep_axes_from(values, base);
      const auto model = adaguide::bench::load_model(base);
      for (const auto& r : adaguide::bench::sweep(base, axes, model)) print_summary(r);
    } else if (gamma->parsed()) {
      auto config = adaguide::bench::run_config_from(gamma_flags.values());
      config.diagnostic_dual_eval = true;
      const auto rows = adaguide::bench::gamma_curves(config, adaguide::bench::load_model(config), n_avg);
      if (gamma_out.empty()) {
        adaguide::bench::write_gamma_curves(std::cout, rows);
      } else {
        std::ofstream out(gamma_out, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + gamma_out);
        adaguide::bench::write_gamma_curves(out, rows);
      }
    } else if (snr->parsed()) {
      std::vector<adaguide::NoiseSchedule> parsed;
      for (const auto& spec : schedules) parsed.push_back(adaguide::bench::parse_schedule_spec(spec));
      if (snr_out.empty()) {
        adaguide::bench::emit_snr_curves(std::cout, parsed, snr_steps);
      } else {
        adaguide::bench::emit_snr_curves(snr_out, parsed, snr_steps);
      }
      for (const auto& s : parsed) {
        std::cerr << adaguide::bench::format_schedule_spec(s) << ": SNR exceeds 1 after fraction "
                  << adaguide::bench::snr_crossing_fraction(s, adaguide::bench::kDenseSteps) << " (dense), "
                  << adaguide::bench::snr_crossing_fraction(s, snr_steps) << " (T=" << snr_steps << ")\n";
      }
    } else if (preset->parsed()) {
      std::cout << adaguide::canonical_preset().to_json();
    } else if (validate->parsed()) {
      const auto model = adaguide::MixtureModel::load(model_path);
      std::cout << "ok: dim=" << model.dim() << " classes=" << model.num_classes() << '\n';
      for (int k = 0; k < model.num_classes(); ++k) {
        std::cout << "  " << model.component(k).label << " weight="
                  << adaguide::text::format_double(model.weights()[static_cast<std::size_t>(k)]) << '\n';
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
