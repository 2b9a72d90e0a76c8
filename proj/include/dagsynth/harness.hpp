#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dagsynth/dag.hpp"
#include "dagsynth/metrics.hpp"
#include "dagsynth/model.hpp"
#include "dagsynth/table.hpp"

namespace dagsynth {

enum class Comparator { kEq, kNe, kLt, kLe, kGt, kGe, kIn };

// Removes round(m * rate) of the m rows matching the predicate.
// Categorical variables compare by label and accept eq, ne and in only.
struct BiasRule {
  std::string variable;
  Comparator op = Comparator::kEq;
  std::vector<std::string> labels;  // categorical operands
  std::vector<double> numbers;      // continuous operands
  double rate = 0.0;

  // Throws when the rule does not fit the schema.
  void validate(const TableSchema& schema) const;
  bool matches(const DataTable& table, std::size_t row, std::size_t col) const;
};

nlohmann::json to_json(const BiasRule& rule);
BiasRule bias_rule_from_json(const nlohmann::json& j);
std::vector<BiasRule> bias_rules_from_json(const nlohmann::json& j);
std::vector<BiasRule> load_bias_rules(const std::filesystem::path& path);

// Rules apply one after another, each to the rows that survived the earlier
// ones. Returns the surviving row indices in their original order.
std::vector<std::size_t> surviving_rows(const DataTable& table, std::span<const BiasRule> rules,
                                        std::uint64_t seed);
DataTable inject_bias(const DataTable& table, std::span<const BiasRule> rules,
                      std::uint64_t seed);

// Numeric reading of a household-size style label: "3" -> 3, "5+" -> 5.
std::optional<double> leading_number(std::string_view label);

struct AggregateSpec {
  std::string value;                        // aggregated variable
  std::string stratum;                      // grouping variable
  std::optional<std::string> household_size;  // weight 1/size per row when set
};

nlohmann::json to_json(const AggregateSpec& spec);
AggregateSpec aggregate_spec_from_json(const nlohmann::json& j);

struct StratumAggregate {
  double total = 0.0;   // sum of weight * value; NaN for non-numeric categories
  double weight = 0.0;  // sum of weights
  std::vector<double> category_weight;  // categorical value only
};

struct Aggregate {
  AggregateSpec spec;
  std::vector<std::string> categories;  // empty for continuous values
  std::map<std::string, StratumAggregate> strata;

  // Per-category weight share within one stratum.
  std::vector<double> distribution(const std::string& stratum) const;
};

Aggregate household_aggregate(const DataTable& table, const AggregateSpec& spec);
nlohmann::json to_json(const Aggregate& aggregate);

// Expected per-stratum distribution of one categorical variable.
struct ControlTotals {
  AggregateSpec spec;
  std::vector<std::string> categories;
  std::map<std::string, std::vector<double>> distributions;

  void validate() const;
};

ControlTotals control_totals_from(const Aggregate& aggregate);
nlohmann::json to_json(const ControlTotals& totals);
// Accepts the output of to_json(Aggregate) as well.
ControlTotals control_totals_from_json(const nlohmann::json& j);
std::vector<ControlTotals> load_control_totals(const std::filesystem::path& path);

// JS distance per (control variable, stratum) between `table`'s aggregates
// and the control totals.
std::vector<JsEntry> compare_to_controls(const DataTable& table,
                                         std::span<const ControlTotals> controls);

struct EvaluationOptions {
  bool level1 = true;
  bool level2 = true;
  bool marginal_js = true;  // JS per variable with stratum "all"
  std::vector<std::string> efficacy_targets;
  EfficacyOptions efficacy;
};

MetricsReport evaluate_sample(const DataTable& original, const DataTable& synthetic,
                              std::span<const std::string> excluded,
                              const EvaluationOptions& options);

struct EvaluatedSample {
  std::size_t training = 0;
  std::size_t sample = 0;
  MetricsReport report;
};

struct ExperimentBundle {
  std::vector<EvaluatedSample> members;
  // Biased table against the unbiased one, or the oversampled-feeder baseline.
  std::optional<MetricsReport> reference;

  // Mean over members of one per-report aggregate; nullopt if no member has it.
  std::optional<double> mean(std::optional<double> (MetricsReport::*aggregate)() const) const;
};

nlohmann::json to_json(const ExperimentBundle& bundle);

// Hooks to persist intermediate products. Calls may come from worker threads
// but never concurrently for the same training index.
struct ExperimentSink {
  std::function<void(std::size_t training, const ModelCheckpoint&)> on_model;
  std::function<void(std::size_t training, std::size_t sample, const DataTable&)> on_sample;
  std::function<void(std::size_t training, std::span<const EvaluatedSample>)> on_training_done;
};

struct ExperimentOptions {
  std::size_t trainings = 1;
  std::size_t samples_per_training = 1;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  EvaluationOptions evaluation;
};

// Trains on the biased feeder and samples with the unbiased conditional
// inputs (or unconditionally, one row per unbiased row, when `ci` is empty).
// Every sample is scored against the unbiased feeder, conditional inputs
// excluded.
ExperimentBundle run_debias_experiment(const DataTable& feeder, std::span<const BiasRule> rules,
                                       const Dag& dag, std::span<const std::string> ci,
                                       const TrainingConfig& config,
                                       const ExperimentOptions& options,
                                       const ExperimentSink* sink = nullptr);

// Per-stratum target counts of the oversampled baseline: the distributor's
// row count in every stratum.
std::map<std::string, std::size_t> stratum_counts(const DataTable& table,
                                                  std::string_view stratum);

// Completes the distributor with models trained on the feeder and compares
// the aggregates with the control totals. The reference is the oversampled
// feeder.
ExperimentBundle run_population_experiment(const DataTable& feeder, const DataTable& distributor,
                                           std::span<const ControlTotals> controls,
                                           const Dag& dag, std::span<const std::string> ci,
                                           const TrainingConfig& config,
                                           const ExperimentOptions& options,
                                           const ExperimentSink* sink = nullptr);

// Oversampled-feeder baseline alone.
MetricsReport oversampled_baseline_report(const DataTable& feeder, const DataTable& distributor,
                                          std::span<const ControlTotals> controls,
                                          std::uint64_t seed);

// File-driven experiment: reads the config, writes
// <out>/<run id>/{checkpoint/, samples/*.csv, metrics.json} per training and
// <out>/bundle.json.
struct ExperimentConfig {
  std::string name = "experiment";
  std::filesystem::path feeder;
  std::optional<std::filesystem::path> distributor;
  std::optional<std::filesystem::path> schema;
  std::filesystem::path dag;
  std::vector<std::string> ci;
  std::vector<BiasRule> bias_rules;
  std::vector<ControlTotals> control_totals;
  TrainingConfig training;
  std::size_t trainings = 1;
  std::size_t samples_per_training = 1;
  std::uint64_t seed = 0;
  std::vector<std::string> efficacy_targets;
};

// Relative paths resolve against `base`.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j,
                                             const std::filesystem::path& base);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

ExperimentBundle run_experiment(const ExperimentConfig& config, const std::filesystem::path& out,
                                std::size_t jobs);

}  // namespace dagsynth
