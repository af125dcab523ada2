#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "antifrag/antifrag.h"

namespace {

int exit_code(af_status s) {
  switch (s) {
    case AF_OK: return 0;
    case AF_E_INVALID_ARGUMENT:
    case AF_E_VALIDATION: return 2;
    case AF_E_ABORTED: return 3;
    case AF_E_IO:
    case AF_E_INTERNAL: return 1;
  }
  return 1;
}

int report_error(af_status s) {
  std::fprintf(stderr, "antifrag: %s\n", af_last_error());
  return exit_code(s);
}

struct Experiment {
  af_experiment* ptr = nullptr;
  ~Experiment() { af_experiment_free(ptr); }
};

struct Text {
  char* ptr = nullptr;
  ~Text() { af_string_free(ptr); }
};

struct PipelineArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::string out;
  bool dry_run = false;
};

void add_pipeline_options(CLI::App* cmd, PipelineArgs& args) {
  cmd->add_option("-c,--config", args.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", args.seed, "override the master seed");
  cmd->add_option("-j,--jobs", args.jobs, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("-o,--out", args.out, "output directory");
  cmd->add_flag("--dry-run", args.dry_run, "validate and print the planned cell count");
}

int run_pipeline(const PipelineArgs& args, af_mode mode) {
  Experiment exp;
  af_status s = af_experiment_load(args.config.c_str(), &exp.ptr);
  if (s != AF_OK) return report_error(s);
  if (args.seed) af_experiment_set_seed(exp.ptr, *args.seed);
  if (args.jobs) af_experiment_set_jobs(exp.ptr, *args.jobs);
  if (!args.out.empty()) af_experiment_set_output_dir(exp.ptr, args.out.c_str());

  af_plan plan{};
  s = af_experiment_plan(exp.ptr, mode, &plan);
  if (s != AF_OK) return report_error(s);
  if (args.dry_run) {
    Text hash;
    af_experiment_config_hash(exp.ptr, &hash.ptr);
    std::printf("config ok (hash %s)\n", hash.ptr ? hash.ptr : "?");
    std::printf("environments: %zu sweep, %zu horizon\n", plan.sweep_environments, plan.horizon_environments);
    std::printf("planned cells: %zu\n", plan.rows);
    return 0;
  }
  Text summary;
  s = af_experiment_execute(exp.ptr, mode, &summary.ptr);
  if (summary.ptr != nullptr) std::fputs(summary.ptr, stdout);
  if (s != AF_OK) return report_error(s);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"antifrag: volatility sweeps and order-K certification of online learners"};
  app.set_version_flag("--version", std::string(af_version()));
  app.require_subcommand(1);

  PipelineArgs run_args, sweep_args, certify_args;
  auto* run = app.add_subcommand("run", "run the pipeline named in the config");
  add_pipeline_options(run, run_args);
  auto* sweep = app.add_subcommand("sweep", "volatility sweep with response-curve fits");
  add_pipeline_options(sweep, sweep_args);
  auto* cert = app.add_subcommand("certify", "sweep, horizon scan and order-K certification");
  add_pipeline_options(cert, certify_args);

  bool list_json = false;
  auto* list = app.add_subcommand("list", "registered learners and environment families");
  list->add_flag("--json", list_json, "machine-readable output with a default config");

  std::string trace_path, replay_config, replay_out;
  auto* replay = app.add_subcommand("replay", "run learners on a stored trace");
  replay->add_option("trace", trace_path, "trace JSON")->required()->check(CLI::ExistingFile);
  replay->add_option("-c,--config", replay_config, "take learners and K grid from this config")
      ->check(CLI::ExistingFile);
  replay->add_option("-o,--out", replay_out, "write replay.csv into this directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*run) return run_pipeline(run_args, AF_MODE_CONFIG);
  if (*sweep) return run_pipeline(sweep_args, AF_MODE_SWEEP);
  if (*cert) return run_pipeline(certify_args, AF_MODE_CERTIFY);

  if (*list) {
    Text text;
    const af_status s = af_registry(list_json ? 1 : 0, &text.ptr);
    if (s != AF_OK) return report_error(s);
    std::fputs(text.ptr, stdout);
    return 0;
  }

  if (*replay) {
    Experiment exp;
    if (!replay_config.empty()) {
      const af_status s = af_experiment_load(replay_config.c_str(), &exp.ptr);
      if (s != AF_OK) return report_error(s);
    }
    Text csv;
    const af_status s = af_replay(trace_path.c_str(), exp.ptr, &csv.ptr);
    if (s != AF_OK) return report_error(s);
    if (replay_out.empty()) {
      std::fputs(csv.ptr, stdout);
    } else {
      std::error_code ec;
      std::filesystem::create_directories(replay_out, ec);
      const std::string path = (std::filesystem::path(replay_out) / "replay.csv").string();
      std::ofstream out(path, std::ios::binary);
      if (!out) {
        std::fprintf(stderr, "antifrag: cannot write %s\n", path.c_str());
        return 1;
      }
      out << csv.ptr;
      std::printf("wrote %s\n", path.c_str());
    }
    return 0;
  }
  return 2;
}
