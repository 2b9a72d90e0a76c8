// dagsynth command-line interface.
//
// Exit status: 0 success, 1 runtime failure, 2 invalid input.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dagsynth/dag.hpp"
#include "dagsynth/errors.hpp"
#include "dagsynth/harness.hpp"
#include "dagsynth/metrics.hpp"
#include "dagsynth/model.hpp"
#include "dagsynth/sampler.hpp"
#include "dagsynth/table.hpp"
#include "dagsynth/trainer.hpp"

namespace fs = std::filesystem;
using namespace dagsynth;
using nlohmann::json;

namespace {

bool g_json = false;

void emit(const json& summary) {
  if (g_json) {
    std::cout << summary.dump() << '\n';
  }
}

void note(const std::string& text) {
  if (!g_json) {
    std::cerr << text << '\n';
  }
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  }
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
  }
}

void write_json_file(const json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) {
    throw Error(ErrorCode::kIoError, "failed writing " + path.string());
  }
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  }
  return out;
}

TableSchema schema_for(const std::optional<fs::path>& schema, std::vector<fs::path> data) {
  return schema ? load_schema(*schema) : infer_schema(data);
}

// Columns of `schema` that appear in the CSV header, in schema order.
TableSchema present_columns(const TableSchema& schema, const fs::path& csv) {
  const auto header = read_csv_header(csv);
  std::vector<std::string> names;
  for (const auto& name : schema.names()) {
    if (std::find(header.begin(), header.end(), name) != header.end()) {
      names.push_back(name);
    }
  }
  return schema.select(names);
}

void require_same_header(const fs::path& a, const fs::path& b) {
  auto ha = read_csv_header(a);
  auto hb = read_csv_header(b);
  std::sort(ha.begin(), ha.end());
  std::sort(hb.begin(), hb.end());
  if (ha != hb) {
    throw Error(ErrorCode::kSchemaMismatch,
                a.string() + " and " + b.string() + " have different columns");
  }
}

struct FitArgs {
  fs::path data, dag, out;
  std::optional<fs::path> schema, config;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
};

void run_fit(const FitArgs& a) {
  const TableSchema schema = schema_for(a.schema, {a.data});
  const DataTable feeder = ingest_csv(a.data, schema);
  const DagSpec dag = load_dag_spec(a.dag);
  TrainingConfig config = a.config ? load_training_config(*a.config) : TrainingConfig{};
  if (a.epochs) {
    config.epochs = *a.epochs;
  }
  if (a.seed) {
    config.seed = *a.seed;
  }
  TrainingObserver observer;
  observer.on_checkpoint = [&](const ModelCheckpoint& ckpt) {
    save_checkpoint(ckpt, a.out / ("epoch_" + std::to_string(ckpt.epoch)));
  };
  observer.on_step = [&](const LossRecord& r) {
    if (!g_json && r.step % 50 == 0) {
      std::cerr << "epoch " << r.epoch << " step " << r.step << " loss_D " << r.critic_loss
                << " loss_G " << r.generator_loss << '\n';
    }
  };
  const auto result = train(feeder, dag.dag, dag.conditional_inputs, config, &observer);
  save_checkpoint(result.checkpoint, a.out);
  auto trace = open_output(a.out / "loss_trace.csv");
  write_loss_trace(result.trace, trace);
  for (const auto& w : result.warnings) {
    note("warning: " + w);
  }
  const auto& last = result.trace.back();
  emit({{"command", "fit"},
        {"model", a.out.string()},
        {"epochs", config.epochs},
        {"steps", result.trace.size()},
        {"loss_D", last.critic_loss},
        {"loss_G", last.generator_loss},
        {"warnings", result.warnings}});
}

struct SampleArgs {
  fs::path model, out;
  std::optional<fs::path> ci;
  std::optional<std::size_t> rows;
  std::uint64_t seed = 0;
  std::size_t chunk = SampleOptions{}.chunk_size;
};

void run_sample(const SampleArgs& a) {
  const ModelCheckpoint model = load_checkpoint(a.model);
  const SampleOptions options{a.seed, a.chunk};
  DataTable table;
  if (a.ci) {
    const TableSchema ci_schema = model.schema.select(model.dag.conditional_inputs);
    table = sample(model, ingest_csv(*a.ci, ci_schema), options);
  } else if (a.rows) {
    table = sample_unconditional(model, *a.rows, options);
  } else {
    throw Error(ErrorCode::kInvalidArgument, "sample needs --ci or --rows");
  }
  auto out = open_output(a.out);
  write_csv(table, out);
  emit({{"command", "sample"}, {"rows", table.n_rows()}, {"out", a.out.string()}});
}

struct CompleteArgs {
  fs::path model, distributor, out;
  std::uint64_t seed = 0;
  std::size_t chunk = SampleOptions{}.chunk_size;
};

void run_complete(const CompleteArgs& a) {
  const ModelCheckpoint model = load_checkpoint(a.model);
  std::ifstream in(a.distributor, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIoError, "cannot open " + a.distributor.string());
  }
  auto out = open_output(a.out);
  const auto stats = complete_csv(model, in, out, SampleOptions{a.seed, a.chunk});
  emit({{"command", "complete"},
        {"rows", stats.rows_written},
        {"chunks", stats.chunks},
        {"peak_rows_in_memory", stats.peak_rows_in_memory},
        {"out", a.out.string()}});
}

struct EvaluateArgs {
  fs::path original, synthetic;
  std::optional<fs::path> schema, out, csv, dag;
  int level = 1;
  bool exclude_ci = false;
  std::vector<std::string> exclude;
};

void run_evaluate(const EvaluateArgs& a) {
  require_same_header(a.original, a.synthetic);
  const TableSchema schema = schema_for(a.schema, {a.original, a.synthetic});
  std::vector<std::string> excluded = a.exclude;
  if (a.exclude_ci) {
    if (!a.dag) {
      throw Error(ErrorCode::kInvalidArgument, "--exclude-ci needs --dag to name the conditional inputs");
    }
    const auto ci = load_dag_spec(*a.dag).conditional_inputs;
    excluded.insert(excluded.end(), ci.begin(), ci.end());
  }
  const MetricsReport report = assess(ingest_csv(a.original, schema),
                                      ingest_csv(a.synthetic, schema), a.level, excluded);
  const json j = to_json(report);
  if (a.out) {
    write_json_file(j, *a.out);
  }
  if (a.csv) {
    auto out = open_output(*a.csv);
    write_csv(report, out);
  }
  if (g_json) {
    emit({{"command", "evaluate"}, {"level", a.level}, {"report", j}});
  } else if (!a.out && !a.csv) {
    std::cout << j.dump(2) << '\n';
  }
}

struct EfficacyArgs {
  fs::path original, synthetic;
  std::optional<fs::path> schema, out;
  std::vector<std::string> targets;
  std::uint64_t seed = 0;
  std::size_t trees = EfficacyOptions{}.n_trees;
};

void run_efficacy(const EfficacyArgs& a) {
  require_same_header(a.original, a.synthetic);
  const TableSchema schema = schema_for(a.schema, {a.original, a.synthetic});
  const DataTable original = ingest_csv(a.original, schema);
  const DataTable synthetic = ingest_csv(a.synthetic, schema);
  EfficacyOptions options;
  options.seed = a.seed;
  options.n_trees = a.trees;
  MetricsReport report;
  const auto targets = a.targets.empty() ? schema.names() : a.targets;
  for (const auto& t : targets) {
    report.efficacy.push_back(ml_efficacy(original, synthetic, t, options));
  }
  const json j = to_json(report);
  if (a.out) {
    write_json_file(j, *a.out);
  }
  if (g_json) {
    emit({{"command", "ml-efficacy"}, {"report", j}});
  } else if (!a.out) {
    std::cout << j.dump(2) << '\n';
  }
}

struct BiasArgs {
  fs::path data, rules, out;
  std::optional<fs::path> schema;
  std::uint64_t seed = 0;
};

void run_bias(const BiasArgs& a) {
  const TableSchema schema = schema_for(a.schema, {a.data});
  const DataTable table = ingest_csv(a.data, schema);
  const auto rules = load_bias_rules(a.rules);
  const DataTable biased = inject_bias(table, rules, a.seed);
  auto out = open_output(a.out);
  write_csv(biased, out);
  emit({{"command", "bias"},
        {"rows_in", table.n_rows()},
        {"rows_out", biased.n_rows()},
        {"out", a.out.string()}});
}

struct AggregateArgs {
  fs::path data, spec, out;
  std::optional<fs::path> schema;
};

void run_aggregate(const AggregateArgs& a) {
  const TableSchema schema = schema_for(a.schema, {a.data});
  const DataTable table = ingest_csv(a.data, present_columns(schema, a.data));
  const json spec = read_json_file(a.spec);
  json result;
  if (spec.is_array()) {
    result = json::array();
    for (const auto& s : spec) {
      result.push_back(to_json(household_aggregate(table, aggregate_spec_from_json(s))));
    }
  } else {
    result = to_json(household_aggregate(table, aggregate_spec_from_json(spec)));
  }
  write_json_file(result, a.out);
  emit({{"command", "aggregate"}, {"out", a.out.string()}, {"aggregate", result}});
}

struct ExperimentArgs {
  fs::path config, out;
  std::size_t jobs = 1;
};

void run_experiment_cmd(const ExperimentArgs& a) {
  const auto config = load_experiment_config(a.config);
  const auto bundle = run_experiment(config, a.out, a.jobs);
  const json j = to_json(bundle);
  emit({{"command", "experiment"},
        {"out", a.out.string()},
        {"members", bundle.members.size()},
        {"mean", j.at("mean")}});
  note("wrote " + std::to_string(bundle.members.size()) + " evaluated datasets to " +
       a.out.string());
}

int report_failure(const std::string& code, const std::string& message, int status) {
  if (g_json) {
    std::cout << json{{"ok", false}, {"error", code}, {"message", message}}.dump() << '\n';
  }
  std::cerr << "error: " << message << '\n';
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DAG-structured conditional tabular GAN: fit, sample, complete and evaluate"};
  app.require_subcommand(1);
  app.add_flag("--json", g_json, "Print a machine-readable JSON summary on stdout");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Train a model on a feeder table");
  fit_cmd->add_option("--data", fit.data, "Feeder CSV")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--schema", fit.schema, "Schema JSON (inferred when omitted)")
      ->check(CLI::ExistingFile);
  fit_cmd->add_option("--dag", fit.dag, "DAG JSON with conditional inputs")
      ->required()
      ->check(CLI::ExistingFile);
  fit_cmd->add_option("--config", fit.config, "Training config JSON")->check(CLI::ExistingFile);
  fit_cmd->add_option("--epochs", fit.epochs, "Override the configured epoch count");
  fit_cmd->add_option("--seed", fit.seed, "Override the configured seed");
  fit_cmd->add_option("--out", fit.out, "Checkpoint directory")->required();

  SampleArgs smp;
  auto* sample_cmd = app.add_subcommand("sample", "Generate rows from a trained model");
  sample_cmd->add_option("--model", smp.model, "Checkpoint directory")->required();
  auto* ci_opt = sample_cmd->add_option("--ci", smp.ci, "CSV holding the conditional inputs")
                     ->check(CLI::ExistingFile);
  sample_cmd->add_option("--rows", smp.rows, "Row count for models without conditional inputs")
      ->excludes(ci_opt);
  sample_cmd->add_option("--seed", smp.seed, "Sampling seed");
  sample_cmd->add_option("--chunk-size", smp.chunk, "Rows per generator pass");
  sample_cmd->add_option("--out", smp.out, "Output CSV")->required();

  CompleteArgs cmp;
  auto* complete_cmd =
      app.add_subcommand("complete", "Append generated variables to a distributor CSV");
  complete_cmd->add_option("--model", cmp.model, "Checkpoint directory")->required();
  complete_cmd->add_option("--distributor", cmp.distributor, "Distributor CSV")
      ->required()
      ->check(CLI::ExistingFile);
  complete_cmd->add_option("--chunk-size", cmp.chunk, "Rows per chunk");
  complete_cmd->add_option("--seed", cmp.seed, "Sampling seed");
  complete_cmd->add_option("--out", cmp.out, "Output CSV")->required();

  EvaluateArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "SRMSE of a synthetic table against the original");
  eval_cmd->add_option("--original", ev.original)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--synthetic", ev.synthetic)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--schema", ev.schema)->check(CLI::ExistingFile);
  eval_cmd->add_option("--level", ev.level, "1: single variables, 2: pairs")
      ->check(CLI::IsMember({1, 2}));
  eval_cmd->add_flag("--exclude-ci", ev.exclude_ci, "Leave out the DAG's conditional inputs");
  eval_cmd->add_option("--dag", ev.dag, "DAG JSON naming the conditional inputs")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--exclude", ev.exclude, "Variable to leave out (repeatable)");
  eval_cmd->add_option("--out", ev.out, "Report JSON");
  eval_cmd->add_option("--csv", ev.csv, "Report CSV");

  EfficacyArgs eff;
  auto* eff_cmd = app.add_subcommand("ml-efficacy", "Relative loss of a learner fitted on synthetic rows");
  eff_cmd->add_option("--original", eff.original)->required()->check(CLI::ExistingFile);
  eff_cmd->add_option("--synthetic", eff.synthetic)->required()->check(CLI::ExistingFile);
  eff_cmd->add_option("--schema", eff.schema)->check(CLI::ExistingFile);
  eff_cmd->add_option("--target", eff.targets, "Target variable (repeatable; default all)");
  eff_cmd->add_option("--seed", eff.seed, "Fold assignment seed");
  eff_cmd->add_option("--trees", eff.trees, "Boosting rounds");
  eff_cmd->add_option("--out", eff.out, "Report JSON");

  BiasArgs bias;
  auto* bias_cmd = app.add_subcommand("bias", "Remove rows matching bias rules");
  bias_cmd->add_option("--data", bias.data)->required()->check(CLI::ExistingFile);
  bias_cmd->add_option("--schema", bias.schema)->check(CLI::ExistingFile);
  bias_cmd->add_option("--rules", bias.rules)->required()->check(CLI::ExistingFile);
  bias_cmd->add_option("--seed", bias.seed);
  bias_cmd->add_option("--out", bias.out)->required();

  AggregateArgs agg;
  auto* agg_cmd = app.add_subcommand("aggregate", "Per-stratum household-weighted totals");
  agg_cmd->add_option("--data", agg.data)->required()->check(CLI::ExistingFile);
  agg_cmd->add_option("--schema", agg.schema)->check(CLI::ExistingFile);
  agg_cmd->add_option("--spec", agg.spec, "Aggregate spec JSON (object or array)")
      ->required()
      ->check(CLI::ExistingFile);
  agg_cmd->add_option("--out", agg.out)->required();

  ExperimentArgs exp;
  auto* exp_cmd = app.add_subcommand("experiment", "Run a debiasing or population experiment");
  exp_cmd->add_option("--config", exp.config)->required()->check(CLI::ExistingFile);
  exp_cmd->add_option("--out", exp.out, "Runs directory")->required();
  exp_cmd->add_option("--jobs", exp.jobs, "Trainings run in parallel")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int status = app.exit(e);
    return status == 0 ? 0 : 2;
  }

  try {
    if (*fit_cmd) run_fit(fit);
    if (*sample_cmd) run_sample(smp);
    if (*complete_cmd) run_complete(cmp);
    if (*eval_cmd) run_evaluate(ev);
    if (*eff_cmd) run_efficacy(eff);
    if (*bias_cmd) run_bias(bias);
    if (*agg_cmd) run_aggregate(agg);
    if (*exp_cmd) run_experiment_cmd(exp);
  } catch (const Error& e) {
    return report_failure(std::string(to_string(e.code())), e.what(),
                          is_validation_error(e.code()) ? 2 : 1);
  } catch (const fs::filesystem_error& e) {
    return report_failure("IoError", e.what(), 1);
  } catch (const std::exception& e) {
    return report_failure("InternalError", e.what(), 1);
  }
  return 0;
}
