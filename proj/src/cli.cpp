#include "fdnet/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "fdnet/eval.hpp"
#include "json.hpp"
#include "text_util.hpp"

namespace fdnet {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json config_to_json(const RunConfig& c) {
  return json{
      {"physics",
       {{"beta", c.physics.beta},
        {"dt", c.physics.dt},
        {"num_steps", c.physics.num_steps},
        {"grid",
         {{"num_points", c.physics.grid.num_points},
          {"length", c.physics.grid.length}}}}},
      {"dataset",
       {{"path", c.dataset.path},
        {"num_samples", c.dataset.num_samples},
        {"num_modes", c.dataset.num_modes},
        {"coeff_seed", c.dataset.coeff_seed},
        {"split_ratio", c.dataset.split_ratio},
        {"split_seed", c.dataset.split_seed}}},
      {"model",
       {{"k", c.model.k},
        {"init_seed", c.model.init_seed},
        {"init_scale", c.model.init_scale}}},
      {"loss", {{"boundary_weight", c.loss.boundary_weight}}},
      {"sampler", {{"batch_size", c.sampler.batch_size}, {"seed", c.sampler.seed}}},
      {"optimizer",
       {{"method", c.optimizer.method},
        {"adam",
         {{"learning_rate", c.optimizer.adam.learning_rate},
          {"beta1", c.optimizer.adam.beta1},
          {"beta2", c.optimizer.adam.beta2},
          {"epsilon", c.optimizer.adam.epsilon},
          {"epochs", c.optimizer.adam.epochs},
          {"eval_interval_epochs", c.optimizer.adam_eval_interval_epochs}}},
        {"trcg",
         {{"delta0", c.optimizer.trcg.delta0},
          {"delta_max", c.optimizer.trcg.delta_max},
          {"eta_accept", c.optimizer.trcg.eta_accept},
          {"shrink_threshold", c.optimizer.trcg.shrink_threshold},
          {"expand_threshold", c.optimizer.trcg.expand_threshold},
          {"cg_max_iters", c.optimizer.trcg.cg_max_iters},
          {"cg_tol_factor", c.optimizer.trcg.cg_tol_factor},
          {"epoch_budget", c.optimizer.trcg.epoch_budget},
          {"eval_interval", c.optimizer.trcg_eval_interval}}}}},
      {"eval",
       {{"params_path", c.eval.params_path},
        {"adam_params_path", c.eval.adam_params_path},
        {"method_label", c.eval.method_label},
        {"sample_index", c.eval.sample_index},
        {"snapshot_times", c.eval.snapshot_times},
        {"divergence_factor", c.eval.divergence_factor}}},
      {"table1",
       {{"batch_sizes", c.table1.batch_sizes},
        {"epoch_budget", c.table1.epoch_budget}}},
      {"output", {{"dir", c.output.dir}}},
  };
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  const json& physics = j.at("physics");
  c.physics.beta = physics.at("beta").get<double>();
  c.physics.dt = physics.at("dt").get<double>();
  c.physics.num_steps = physics.at("num_steps").get<std::int64_t>();
  c.physics.grid.num_points = physics.at("grid").at("num_points").get<std::int64_t>();
  c.physics.grid.length = physics.at("grid").at("length").get<double>();

  const json& dataset = j.at("dataset");
  c.dataset.path = dataset.at("path").get<std::string>();
  c.dataset.num_samples = dataset.at("num_samples").get<std::int64_t>();
  c.dataset.num_modes = dataset.at("num_modes").get<int>();
  c.dataset.coeff_seed = dataset.at("coeff_seed").get<std::uint64_t>();
  c.dataset.split_ratio = dataset.at("split_ratio").get<double>();
  c.dataset.split_seed = dataset.at("split_seed").get<std::uint64_t>();

  const json& model = j.at("model");
  c.model.k = model.at("k").get<int>();
  c.model.init_seed = model.at("init_seed").get<std::uint64_t>();
  c.model.init_scale = model.at("init_scale").get<double>();

  c.loss.boundary_weight = j.at("loss").at("boundary_weight").get<double>();

  const json& sampler = j.at("sampler");
  c.sampler.batch_size = sampler.at("batch_size").get<std::int64_t>();
  c.sampler.seed = sampler.at("seed").get<std::uint64_t>();

  const json& optimizer = j.at("optimizer");
  c.optimizer.method = optimizer.at("method").get<std::string>();
  const json& adam = optimizer.at("adam");
  c.optimizer.adam.learning_rate = adam.at("learning_rate").get<double>();
  c.optimizer.adam.beta1 = adam.at("beta1").get<double>();
  c.optimizer.adam.beta2 = adam.at("beta2").get<double>();
  c.optimizer.adam.epsilon = adam.at("epsilon").get<double>();
  c.optimizer.adam.epochs = adam.at("epochs").get<std::int64_t>();
  c.optimizer.adam_eval_interval_epochs = adam.at("eval_interval_epochs").get<double>();
  const json& trcg = optimizer.at("trcg");
  c.optimizer.trcg.delta0 = trcg.at("delta0").get<double>();
  c.optimizer.trcg.delta_max = trcg.at("delta_max").get<double>();
  c.optimizer.trcg.eta_accept = trcg.at("eta_accept").get<double>();
  c.optimizer.trcg.shrink_threshold = trcg.at("shrink_threshold").get<double>();
  c.optimizer.trcg.expand_threshold = trcg.at("expand_threshold").get<double>();
  c.optimizer.trcg.cg_max_iters = trcg.at("cg_max_iters").get<int>();
  c.optimizer.trcg.cg_tol_factor = trcg.at("cg_tol_factor").get<double>();
  c.optimizer.trcg.epoch_budget = trcg.at("epoch_budget").get<double>();
  c.optimizer.trcg_eval_interval = trcg.at("eval_interval").get<std::int64_t>();

  const json& eval = j.at("eval");
  c.eval.params_path = eval.at("params_path").get<std::string>();
  c.eval.adam_params_path = eval.at("adam_params_path").get<std::string>();
  c.eval.method_label = eval.at("method_label").get<std::string>();
  c.eval.sample_index = eval.at("sample_index").get<std::int64_t>();
  c.eval.snapshot_times = eval.at("snapshot_times").get<std::vector<double>>();
  c.eval.divergence_factor = eval.at("divergence_factor").get<double>();

  const json& table1 = j.at("table1");
  c.table1.batch_sizes = table1.at("batch_sizes").get<std::vector<std::int64_t>>();
  c.table1.epoch_budget = table1.at("epoch_budget").get<double>();

  c.output.dir = j.at("output").at("dir").get<std::string>();
  return c;
}

void merge_into(json& base, const json& overlay, const std::string& prefix) {
  for (const auto& [key, value] : overlay.items()) {
    if (!base.contains(key)) {
      throw ConfigError("config: unknown key '" + prefix + key + "'");
    }
    json& target = base[key];
    if (target.is_object() && value.is_object()) {
      merge_into(target, value, prefix + key + ".");
      continue;
    }
    const bool compatible = (target.type() == value.type()) ||
                            (target.is_number() && value.is_number()) ||
                            (target.is_array() && value.is_array());
    if (!compatible) {
      throw ConfigError("config: wrong value type for '" + prefix + key + "'");
    }
    target = value;
  }
}

void apply_override(json& base, const std::string& setting) {
  const std::size_t eq = setting.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set expects dotted.key=value, got '" + setting + "'");
  }
  const std::string dotted = setting.substr(0, eq);
  const std::string text = setting.substr(eq + 1);

  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;  // bare strings need no quotes
  }

  json* node = &base;
  std::string prefix;
  std::size_t start = 0;
  for (;;) {
    const std::size_t dotpos = dotted.find('.', start);
    const std::string key = dotted.substr(start, dotpos - start);
    if (!node->contains(key)) {
      throw ConfigError("config: unknown key '" + prefix + key + "'");
    }
    if (dotpos == std::string::npos) {
      json leaf_overlay = json::object();
      leaf_overlay[key] = value;
      merge_into(*node, leaf_overlay, prefix);
      return;
    }
    node = &(*node)[key];
    prefix += key + ".";
    start = dotpos + 1;
  }
}

ParamVector vector_to_params(const Vector& x) {
  ParamVector out{};
  std::copy(x.begin(), x.end(), out.begin());
  return out;
}

TrainHooks make_test_rmse_hooks(const Dataset& dataset, int k,
                                const std::string& label, double divergence_factor,
                                std::int64_t interval) {
  TrainHooks hooks;
  hooks.metric_interval = interval;
  hooks.metric = [&dataset, k, label, divergence_factor](const Vector& x) {
    EvalOptions options;
    options.divergence_factor = divergence_factor;
    return evaluate_model(params_from_vector(vector_to_params(x), k), dataset, label,
                          options)
        .rmse;
  };
  return hooks;
}

struct TrainedCell {
  std::optional<double> rmse;
  bool diverged = false;
};

TrainedCell run_table1_cell(const RunConfig& config, const Dataset& dataset,
                            std::int64_t batch_size, int k) {
  FDNetParams p0 = init_params(config.model.init_seed, k, config.model.init_scale);
  MiniBatchSampler sampler(dataset, batch_size, config.sampler.seed);
  TrustRegionConfig trcg = config.optimizer.trcg;
  trcg.epoch_budget = config.table1.epoch_budget;
  const TrainOutcome outcome = trcg_train(p0, sampler, trcg, config.loss);

  EvalOptions options;
  options.batch_size = static_cast<int>(batch_size);
  options.divergence_factor = config.eval.divergence_factor;
  const RolloutReport report =
      evaluate_model(outcome.params, dataset, "fdnet-trcg", options);
  TrainedCell cell;
  cell.diverged = report.diverged || outcome.diverged;
  if (std::isfinite(report.rmse)) cell.rmse = report.rmse;
  return cell;
}

/// Time -> snapshot index if it falls on the dataset's time grid.
std::optional<std::int64_t> snapshot_index(double t, const PhysicsConfig& physics) {
  const double j_real = t / physics.dt;
  const auto j = static_cast<std::int64_t>(std::llround(j_real));
  if (j < 0 || j > physics.num_steps) return std::nullopt;
  if (std::abs(static_cast<double>(j) * physics.dt - t) > 1e-9 * std::max(1.0, t)) {
    return std::nullopt;
  }
  return j;
}

}  // namespace

void RunConfig::validate() const {
  physics.validate();
  if (dataset.num_samples < 2) throw ConfigError("config: dataset.num_samples must be >= 2");
  if (dataset.num_modes < 1) throw ConfigError("config: dataset.num_modes must be >= 1");
  if (!(dataset.split_ratio > 0.0 && dataset.split_ratio < 1.0)) {
    throw ConfigError("config: dataset.split_ratio must lie in (0,1)");
  }
  if (model.k < 1) throw ConfigError("config: model.k must be >= 1");
  if (!(model.init_scale >= 0.0) || !std::isfinite(model.init_scale)) {
    throw ConfigError("config: model.init_scale must be finite and >= 0");
  }
  loss.validate();
  if (sampler.batch_size < 1) throw ConfigError("config: sampler.batch_size must be >= 1");
  if (optimizer.method != "trcg" && optimizer.method != "adam") {
    throw ConfigError("config: optimizer.method must be 'trcg' or 'adam'");
  }
  optimizer.adam.validate();
  optimizer.trcg.validate();
  if (eval.method_label != "fdnet-trcg" && eval.method_label != "fdnet-adam" &&
      eval.method_label != "euler") {
    throw ConfigError("config: eval.method_label must be fdnet-trcg, fdnet-adam or euler");
  }
  if (!(eval.divergence_factor > 0.0)) {
    throw ConfigError("config: eval.divergence_factor must be > 0");
  }
  for (double t : eval.snapshot_times) {
    if (!(t >= 0.0) || !std::isfinite(t)) {
      throw ConfigError("config: eval.snapshot_times must be finite and >= 0");
    }
  }
  if (table1.batch_sizes.empty()) {
    throw ConfigError("config: table1.batch_sizes must be nonempty");
  }
  for (std::int64_t b : table1.batch_sizes) {
    if (b < 1) throw ConfigError("config: table1.batch_sizes entries must be >= 1");
  }
  if (!(table1.epoch_budget > 0.0)) {
    throw ConfigError("config: table1.epoch_budget must be > 0");
  }
}

std::string default_config_json() { return config_to_json(RunConfig{}).dump(2) + "\n"; }

RunConfig load_run_config(const std::string& config_path,
                          const std::vector<std::string>& overrides) {
  json merged = config_to_json(RunConfig{});
  if (!config_path.empty()) {
    std::ifstream in(config_path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot open '" + config_path + "'");
    json user;
    try {
      user = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config: malformed JSON in '" + config_path + "': " + e.what());
    }
    if (!user.is_object()) throw ConfigError("config: top level must be a JSON object");
    merge_into(merged, user, "");
  }
  for (const std::string& setting : overrides) apply_override(merged, setting);

  RunConfig config;
  try {
    config = config_from_json(merged);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid value: ") + e.what());
  }
  config.validate();
  return config;
}

int cmd_generate(const RunConfig& config, const std::string& out_path) {
  const Dataset ds = generate_dataset(config.dataset.num_samples, config.physics,
                                      config.dataset.num_modes, config.dataset.coeff_seed,
                                      config.dataset.split_ratio, config.dataset.split_seed);
  const std::string path = out_path.empty() ? config.dataset.path : out_path;
  save_dataset(ds, path);

  const StabilityParams st =
      stability_alpha(config.physics.beta, config.physics.dt, config.physics.grid.dx());
  std::cout << "wrote " << path << ": " << ds.num_samples() << " x " << ds.num_snapshots()
            << " x " << ds.num_points() << " float64 values\n"
            << "train/test: " << ds.train_indices.size() << "/" << ds.test_indices.size()
            << "\n"
            << "alpha = beta*dt/dx^2 = " << detail::format_double(st.alpha)
            << (st.stable ? " (stable)" : " (UNSTABLE)") << "\n";
  return 0;
}

int cmd_train(const RunConfig& config, const std::string& dataset_path,
              const std::string& out_dir) {
  const Dataset ds = load_dataset(dataset_path);
  const FDNetParams p0 =
      init_params(config.model.init_seed, config.model.k, config.model.init_scale);
  MiniBatchSampler sampler(ds, config.sampler.batch_size, config.sampler.seed);

  TrainOutcome outcome;
  if (config.optimizer.method == "trcg") {
    const TrainHooks hooks =
        make_test_rmse_hooks(ds, config.model.k, "fdnet-trcg",
                             config.eval.divergence_factor,
                             config.optimizer.trcg_eval_interval);
    outcome = trcg_train(p0, sampler, config.optimizer.trcg, config.loss, hooks);
  } else {
    const auto iters_per_epoch = static_cast<std::int64_t>(
        std::llround(1.0 / sampler.epoch_fraction_per_batch()));
    const auto interval = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(std::llround(
               config.optimizer.adam_eval_interval_epochs *
               static_cast<double>(iters_per_epoch))));
    const TrainHooks hooks = make_test_rmse_hooks(
        ds, config.model.k, "fdnet-adam", config.eval.divergence_factor, interval);
    outcome = adam_train(p0, sampler, config.optimizer.adam, config.loss, hooks);
  }

  fs::create_directories(out_dir);
  save_params(outcome.params, fs::path(out_dir) / "params.json", config.physics.grid);
  write_trace_csv(outcome.trace, fs::path(out_dir) / "trace.csv");

  if (!outcome.trace.records.empty()) {
    const TraceRecord& last = outcome.trace.records.back();
    std::cout << "final train loss (last mini-batch): "
              << detail::format_double(last.loss) << "\n"
              << "budget consumed: " << detail::format_double(last.epoch)
              << " oracle-pass epochs (" << detail::format_double(last.outer_epoch)
              << " outer epochs, " << last.iter << " iterations)\n";
    if (last.test_rmse) {
      std::cout << "final test rollout RMSE: " << detail::format_double(*last.test_rmse)
                << "\n";
    }
  }
  std::cout << "wrote " << (fs::path(out_dir) / "params.json").string() << " and "
            << (fs::path(out_dir) / "trace.csv").string() << "\n";
  if (outcome.diverged) {
    std::cerr << "training diverged: " << outcome.message << "\n";
    return 4;
  }
  return 0;
}

int cmd_evaluate(const RunConfig& config, const std::string& params_path,
                 const std::string& dataset_path, const std::string& out_dir) {
  std::optional<Grid1D> params_grid;
  const FDNetParams params = load_params(params_path, &params_grid);
  const Dataset ds = load_dataset(dataset_path);
  if (params_grid && !(*params_grid == ds.physics.grid)) {
    throw ConfigError("evaluate: params were trained on a different grid than the dataset");
  }

  EvalOptions options;
  options.batch_size = static_cast<int>(config.sampler.batch_size);
  options.divergence_factor = config.eval.divergence_factor;
  const RolloutReport report = evaluate_model(params, ds, config.eval.method_label, options);

  fs::create_directories(out_dir);
  save_report(report, fs::path(out_dir) / "report.json");

  // Snapshot CSV for one test sample at the requested times.
  const std::int64_t sample =
      config.eval.sample_index >= 0 ? config.eval.sample_index : ds.test_indices.front();
  if (sample >= ds.num_samples()) {
    throw ConfigError("evaluate: eval.sample_index out of range");
  }

  const PartialRollout primary = rollout_partial(ds.snapshot(sample, 0), params,
                                                 ds.physics.num_steps);
  std::optional<PartialRollout> adam_pred;
  if (!config.eval.adam_params_path.empty()) {
    std::optional<Grid1D> adam_grid;
    const FDNetParams adam_params = load_params(config.eval.adam_params_path, &adam_grid);
    if (adam_grid && !(*adam_grid == ds.physics.grid)) {
      throw ConfigError("evaluate: adam params grid does not match the dataset");
    }
    adam_pred = rollout_partial(ds.snapshot(sample, 0), adam_params, ds.physics.num_steps);
  }
  const StabilityParams st =
      stability_alpha(ds.physics.beta, ds.physics.dt, ds.physics.grid.dx());
  const FieldSeries euler_pred =
      euler_rollout(ds.snapshot(sample, 0), st.alpha, ds.physics.num_steps);

  const bool primary_is_adam = config.eval.method_label == "fdnet-adam";
  std::ofstream csv(fs::path(out_dir) / "snapshots.csv", std::ios::binary);
  if (!csv) throw IoError("evaluate: cannot write snapshots.csv");
  csv << "t,x,u_true,u_pred_trcg,u_pred_adam,u_euler\n";
  for (const double t : config.eval.snapshot_times) {
    const std::optional<std::int64_t> j = snapshot_index(t, ds.physics);
    if (!j) {
      std::cerr << "warning: time " << t << " is not on the dataset grid; skipped\n";
      continue;
    }
    auto series_cell = [&](const FieldSeries& series, std::int64_t i) -> std::string {
      if (*j >= series.num_snapshots()) return "";  // diverged before this time
      return detail::format_double(series.snapshot(*j)[i]);
    };
    for (std::int64_t i = 0; i < ds.num_points(); ++i) {
      const std::string primary_cell = series_cell(primary.series, i);
      std::string trcg_cell = primary_is_adam ? "" : primary_cell;
      std::string adam_cell = primary_is_adam ? primary_cell : "";
      if (adam_pred) adam_cell = series_cell(adam_pred->series, i);
      csv << detail::format_double(static_cast<double>(*j) * ds.physics.dt) << ','
          << detail::format_double(ds.physics.grid.x(i)) << ','
          << detail::format_double(ds.snapshot(sample, *j)[i]) << ',' << trcg_cell << ','
          << adam_cell << ',' << series_cell(euler_pred, i) << '\n';
    }
  }
  csv.flush();
  if (!csv) throw IoError("evaluate: write failed for snapshots.csv");

  std::cout << "method " << report.method << ": rollout RMSE = "
            << detail::format_double(report.rmse)
            << (report.diverged ? " (diverged)" : "") << "\n"
            << "wrote " << (fs::path(out_dir) / "report.json").string() << " and "
            << (fs::path(out_dir) / "snapshots.csv").string() << "\n";
  return 0;
}

int cmd_table1(const RunConfig& config, const std::string& out_path, bool dry_run) {
  const std::array<int, 3> ks = {1, 10, 20};
  std::vector<std::string> jobs;
  jobs.push_back("generate dataset (" + std::to_string(config.dataset.num_samples) +
                 " samples, dt=" + detail::format_double(config.physics.dt) + ")");
  for (const std::int64_t b : config.table1.batch_sizes) {
    for (const int k : ks) {
      jobs.push_back("train trcg batch=" + std::to_string(b) + " k=" + std::to_string(k) +
                     " (budget " + detail::format_double(config.table1.epoch_budget) +
                     " epochs)");
    }
  }
  for (const std::int64_t b : config.table1.batch_sizes) {
    jobs.push_back("euler baseline row batch=" + std::to_string(b));
  }

  if (dry_run) {
    std::cout << "planned " << jobs.size() << " jobs:\n";
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      std::cout << "  [" << (i + 1) << "/" << jobs.size() << "] " << jobs[i] << "\n";
    }
    std::cout << "dry run: nothing executed\n";
    return 0;
  }

  const Dataset ds = generate_dataset(config.dataset.num_samples, config.physics,
                                      config.dataset.num_modes, config.dataset.coeff_seed,
                                      config.dataset.split_ratio, config.dataset.split_seed);
  fs::create_directories(config.output.dir);
  save_dataset(ds, fs::path(config.output.dir) / "table1_dataset.fdds");

  const StabilityParams st =
      stability_alpha(config.physics.beta, config.physics.dt, config.physics.grid.dx());
  std::cout << "alpha = " << detail::format_double(st.alpha)
            << (st.stable ? " (stable)" : " (UNSTABLE)") << "\n";
  if (st.stable) {
    std::cerr << "warning: table1 is meant for the unstable time discretization\n";
  }

  // The Euler baseline does not depend on the training batch size; the value
  // is computed once and repeated on every row.
  EvalOptions euler_options;
  euler_options.divergence_factor = config.eval.divergence_factor;
  const RolloutReport euler_report =
      evaluate_model(euler_params(st.alpha), ds, "euler", euler_options);
  const std::optional<double> euler_cell =
      std::isfinite(euler_report.rmse) ? std::optional<double>(euler_report.rmse)
                                       : std::nullopt;

  bool any_diverged = false;
  std::vector<Table1Row> rows;
  for (const std::int64_t b : config.table1.batch_sizes) {
    Table1Row row;
    row.batch_size = static_cast<int>(b);
    std::array<std::optional<double>*, 3> cells = {&row.k1, &row.k10, &row.k20};
    for (std::size_t i = 0; i < ks.size(); ++i) {
      const TrainedCell cell = run_table1_cell(config, ds, b, ks[i]);
      *cells[i] = cell.rmse;
      if (!cell.rmse) {
        any_diverged = true;
        std::cerr << "warning: cell batch=" << b << " k=" << ks[i] << " DIVERGED\n";
      }
      std::cout << "cell batch=" << b << " k=" << ks[i] << ": "
                << (cell.rmse ? detail::format_double(*cell.rmse) : "DIVERGED") << "\n";
    }
    row.euler = euler_cell;
    rows.push_back(row);
  }

  const std::string path =
      out_path.empty() ? (fs::path(config.output.dir) / "table1.csv").string() : out_path;
  write_table1_csv(rows, path);
  std::ostringstream table_text;
  write_table1_csv(table_text, rows);
  std::cout << table_text.str() << "wrote " << path << "\n";
  if (any_diverged) std::cerr << "warning: some cells diverged\n";
  return 0;
}

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"FD-Net: learn hidden 1-D parabolic PDE dynamics from time series"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out;
  std::string dataset_path;
  std::string params_path;
  std::vector<std::string> overrides;
  bool dry_run = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file (defaults embedded)");
    cmd->add_option("--set", overrides, "override a config value: dotted.key=value");
  };

  CLI::App* generate = app.add_subcommand("generate", "generate a .fdds dataset");
  add_common(generate);
  generate->add_option("--out", out, "dataset output path (default: dataset.path)");

  CLI::App* train = app.add_subcommand("train", "train FD-Net and write params + trace");
  add_common(train);
  train->add_option("--dataset", dataset_path, "dataset path (default: dataset.path)");
  train->add_option("--out", out, "output directory (default: output.dir)");

  CLI::App* evaluate = app.add_subcommand("evaluate", "rollout evaluation of trained params");
  add_common(evaluate);
  evaluate->add_option("--params", params_path, "params JSON (default: eval.params_path)");
  evaluate->add_option("--dataset", dataset_path, "dataset path (default: dataset.path)");
  evaluate->add_option("--out", out, "output directory (default: output.dir)");

  CLI::App* table1 = app.add_subcommand("table1", "unstable-case RMSE grid + Euler baseline");
  add_common(table1);
  table1->add_option("--out", out, "table CSV path (default: output.dir/table1.csv)");
  table1->add_flag("--dry-run", dry_run, "print the planned jobs and exit");

  std::vector<const char*> argv;
  argv.push_back("fdnet");
  for (const std::string& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const RunConfig config = load_run_config(config_path, overrides);
    if (generate->parsed()) return cmd_generate(config, out);
    if (train->parsed()) {
      const std::string ds_path = dataset_path.empty() ? config.dataset.path : dataset_path;
      const std::string out_dir = out.empty() ? config.output.dir : out;
      return cmd_train(config, ds_path, out_dir);
    }
    if (evaluate->parsed()) {
      const std::string p_path = params_path.empty() ? config.eval.params_path : params_path;
      if (p_path.empty()) throw ConfigError("evaluate: no params path given");
      const std::string ds_path = dataset_path.empty() ? config.dataset.path : dataset_path;
      const std::string out_dir = out.empty() ? config.output.dir : out;
      return cmd_evaluate(config, p_path, ds_path, out_dir);
    }
    if (table1->parsed()) return cmd_table1(config, out, dry_run);
    throw ConfigError("no subcommand given");
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidInputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace fdnet
