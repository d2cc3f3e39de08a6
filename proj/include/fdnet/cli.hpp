#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fdnet/heat_data.hpp"
#include "fdnet/loss.hpp"
#include "fdnet/optim.hpp"

namespace fdnet {

/// Everything a reproduction run needs, mirrored 1:1 by the JSON config.
/// Unknown keys are rejected; all defaults match the reference experiment.
struct RunConfig {
  PhysicsConfig physics{};

  struct DatasetSection {
    std::string path = "heat.fdds";
    std::int64_t num_samples = 200;
    int num_modes = 5;
    std::uint64_t coeff_seed = 2024;
    double split_ratio = 0.75;
    std::uint64_t split_seed = 46;
  } dataset;

  struct ModelSection {
    int k = 10;
    std::uint64_t init_seed = 46;
    double init_scale = 0.1;
  } model;

  LossConfig loss{};

  struct SamplerSection {
    std::int64_t batch_size = 64;
    std::uint64_t seed = 46;
  } sampler;

  struct OptimizerSection {
    std::string method = "trcg";  // trcg | adam
    AdamConfig adam{};
    TrustRegionConfig trcg{};
    std::int64_t trcg_eval_interval = 10;    // iterations between test-RMSE probes
    double adam_eval_interval_epochs = 1.0;  // epochs between test-RMSE probes
  } optimizer;

  struct EvalSection {
    std::string params_path;       // model evaluated / trcg column
    std::string adam_params_path;  // optional second model for the adam column
    std::string method_label = "fdnet-trcg";
    std::int64_t sample_index = -1;  // -1: first test sample
    std::vector<double> snapshot_times = {0.0, 250.0, 500.0, 1000.0};
    double divergence_factor = 100.0;
  } eval;

  struct Table1Section {
    std::vector<std::int64_t> batch_sizes = {32, 64, 128};
    double epoch_budget = 600.0;  // oracle-pass epochs per grid cell
  } table1;

  struct OutputSection {
    std::string dir = "out";
  } output;

  void validate() const;
};

/// Parses a config file (or starts from defaults when path is empty) and
/// applies --set key=value overrides with dotted paths.
RunConfig load_run_config(const std::string& config_path,
                          const std::vector<std::string>& overrides);

/// Default configuration serialized as pretty JSON (what `--config` accepts).
std::string default_config_json();

// Subcommand entry points; all return process exit codes
// (0 ok, 2 config/validation, 3 I/O, 4 numerical divergence).
int cmd_generate(const RunConfig& config, const std::string& out_path);
int cmd_train(const RunConfig& config, const std::string& dataset_path,
              const std::string& out_dir);
int cmd_evaluate(const RunConfig& config, const std::string& params_path,
                 const std::string& dataset_path, const std::string& out_dir);
int cmd_table1(const RunConfig& config, const std::string& out_path, bool dry_run);

/// Full argv-level entry point used by main() and the tests.
int run_cli(const std::vector<std::string>& args);

}  // namespace fdnet
