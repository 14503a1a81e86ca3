// crfu command line: train / unlearn / attack / pipeline / sweep / report.

#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crfu/backdoor.hpp"
#include "crfu/checkpoint.hpp"
#include "crfu/config.hpp"
#include "crfu/metrics.hpp"
#include "crfu/pipeline.hpp"
#include "crfu/unlearn.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "crfu_out";
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Config file (key=value with [sections])");
  cmd->add_option("--out", args.out_dir, "Output directory");
  cmd->add_option("--seed", args.seed, "Override run.seed");
}

crfu::ExperimentConfig resolve(const CommonArgs& args) {
  crfu::KvConfig kv =
      args.config_path.empty() ? crfu::default_experiment_kv() : crfu::KvConfig::load(args.config_path);
  if (args.seed) kv.set("run.seed", std::to_string(*args.seed));
  return crfu::experiment_from_config(kv);
}

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

void print_row(const crfu::MetricRow& row) {
  std::cout << crfu::metrics_csv_header() << '\n' << crfu::metrics_csv_line(row) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"information-bottleneck training, CRFU unlearning and privacy-attack audit"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string axis = "beta";
  std::string values_csv;

  CLI::App* cmd_train = app.add_subcommand("train", "Poison the training pool and train the IB model");
  CLI::App* cmd_unlearn = app.add_subcommand("unlearn", "Run CRFU on a trained checkpoint");
  CLI::App* cmd_attack = app.add_subcommand("attack", "Shadow-model attack against before/after checkpoints");
  CLI::App* cmd_pipeline = app.add_subcommand("pipeline", "Full train -> unlearn -> attack run");
  CLI::App* cmd_sweep = app.add_subcommand("sweep", "Pipeline sweep along one axis");
  CLI::App* cmd_report = app.add_subcommand("report", "Trend checks and plot data for a run directory");
  for (CLI::App* c : {cmd_train, cmd_unlearn, cmd_attack, cmd_pipeline, cmd_sweep, cmd_report}) {
    add_common(c, args);
  }
  cmd_sweep->add_option("--axis", axis, "Sweep axis: beta | beta-u | edr")->required();
  cmd_sweep->add_option("--values", values_csv, "Ascending comma-separated values")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_train->parsed()) {
      crfu::ExperimentConfig cfg = resolve(args);
      std::filesystem::create_directories(args.out_dir);
      crfu::PreparedData data = crfu::prepare_data(cfg);
      crfu::VictimArtifacts victim = crfu::train_victim(cfg, data);
      crfu::save_ib_model(args.out_dir + "/before.ckpt", victim.before);
      crfu::write_train_trace(args.out_dir + "/trace_train.csv", victim.trace);
      std::cout << "trained: test accuracy " << crfu::accuracy(victim.before, data.test)
                << ", backdoor accuracy "
                << crfu::backdoor_accuracy(victim.before, data.split.erased())
                << ", kld to prior " << crfu::kld_to_prior(victim.before, data.split.full)
                << '\n';
      std::cout << "wrote " << args.out_dir << "/before.ckpt\n";
    } else if (cmd_unlearn->parsed()) {
      crfu::ExperimentConfig cfg = resolve(args);
      crfu::PreparedData data = crfu::prepare_data(cfg);
      crfu::IBModel before = crfu::load_ib_model(args.out_dir + "/before.ckpt");
      crfu::UnlearnArtifacts out = crfu::unlearn_victim(cfg, data, before);
      crfu::save_ib_model(args.out_dir + "/after.ckpt", out.after);
      crfu::write_unlearn_trace(args.out_dir + "/trace_unlearn.csv", out.trace);
      std::cout << "unlearned in " << (out.trace.epochs.size() - 1) << " epochs; backdoor "
                << crfu::backdoor_accuracy(out.after, data.split.erased()) << ", test accuracy "
                << crfu::accuracy(out.after, data.test) << '\n';
      std::cout << "wrote " << args.out_dir << "/after.ckpt\n";
    } else if (cmd_attack->parsed()) {
      crfu::ExperimentConfig cfg = resolve(args);
      crfu::PreparedData data = crfu::prepare_data(cfg);
      crfu::IBModel before = crfu::load_ib_model(args.out_dir + "/before.ckpt");
      crfu::IBModel after = crfu::load_ib_model(args.out_dir + "/after.ckpt");
      crfu::AttackOutcome out = crfu::attack_victim(cfg, data, before, after);
      std::cout << "reconstruction mse " << out.recon_mse << ", membership auc "
                << out.member_auc << '\n';
    } else if (cmd_pipeline->parsed()) {
      crfu::ExperimentConfig cfg = resolve(args);
      crfu::MetricRow row = crfu::run_pipeline(cfg, args.out_dir);
      print_row(row);
      std::cout << "artifacts under " << args.out_dir << '\n';
    } else if (cmd_sweep->parsed()) {
      crfu::ExperimentConfig cfg = resolve(args);
      crfu::SweepResult result = crfu::sweep(cfg, axis, parse_values(values_csv), args.out_dir);
      std::cout << crfu::metrics_csv_header() << '\n';
      for (const crfu::MetricRow& row : result.rows) {
        std::cout << crfu::metrics_csv_line(row) << '\n';
      }
      for (const crfu::SweepPointFailure& f : result.failures) {
        std::cerr << "point " << f.value << " failed: " << f.error << '\n';
      }
      std::cout << "wrote " << result.csv_path << '\n';
      if (!result.failures.empty()) return 1;
    } else if (cmd_report->parsed()) {
      crfu::ReportResult result = crfu::report(args.out_dir);
      std::cout << result.text;
      if (!result.all_pass) return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
