#include "dagsynth/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include "dagsynth/csv.hpp"
#include "dagsynth/errors.hpp"
#include "dagsynth/sampler.hpp"
#include "dagsynth/seeding.hpp"
#include "dagsynth/trainer.hpp"

namespace dagsynth {

namespace {

enum SeedStream : std::uint64_t { kTrainingSeeds = 0, kSampleSeeds = 1, kBiasSeed = 2, kBaselineSeed = 3 };

constexpr std::pair<Comparator, const char*> kComparatorNames[] = {
    {Comparator::kEq, "eq"}, {Comparator::kNe, "ne"}, {Comparator::kLt, "lt"},
    {Comparator::kLe, "le"}, {Comparator::kGt, "gt"}, {Comparator::kGe, "ge"},
    {Comparator::kIn, "in"}};

const char* comparator_name(Comparator op) {
  for (const auto& [c, name] : kComparatorNames) {
    if (c == op) {
      return name;
    }
  }
  return "?";
}

std::size_t require_column(const TableSchema& schema, std::string_view name) {
  const auto idx = schema.index_of(name);
  if (!idx) {
    throw Error(ErrorCode::kUnknownVariable, "variable '" + std::string(name) + "' not in the table");
  }
  return *idx;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  }
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
  }
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) {
    throw Error(ErrorCode::kIoError, "failed writing " + path.string());
  }
}

std::uint64_t training_seed(std::uint64_t seed, std::size_t training) {
  return derive_seed(derive_seed(seed, kTrainingSeeds), training);
}

std::uint64_t sample_seed(std::uint64_t seed, std::size_t training, std::size_t sample) {
  return derive_seed(derive_seed(derive_seed(seed, kSampleSeeds), training), sample);
}

// Runs body(i) for i in [0, n) on up to `jobs` threads; rethrows the first failure.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& body) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      body(i);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) {
            failure = std::current_exception();
          }
          next = n;
        }
      }
    });
  }
  for (auto& t : workers) {
    t.join();
  }
  if (failure) {
    std::rethrow_exception(failure);
  }
}

// Trains `trainings` models and evaluates `samples_per_training` datasets
// from each; `draw` produces one dataset and `score` evaluates it.
ExperimentBundle run_trainings(
    const DataTable& training_table, const Dag& dag, std::span<const std::string> ci,
    const TrainingConfig& config, const ExperimentOptions& options, const ExperimentSink* sink,
    const std::function<DataTable(const ModelCheckpoint&, std::uint64_t)>& draw,
    const std::function<MetricsReport(const DataTable&)>& score) {
  if (options.trainings == 0 || options.samples_per_training == 0) {
    throw Error(ErrorCode::kInvalidArgument, "trainings and samples_per_training must be positive");
  }
  std::vector<std::vector<EvaluatedSample>> per_training(options.trainings);
  parallel_for(options.trainings, options.jobs, [&](std::size_t i) {
    TrainingConfig cfg = config;
    cfg.seed = training_seed(options.seed, i);
    const auto result = train(training_table, dag, ci, cfg);
    if (sink && sink->on_model) {
      sink->on_model(i, result.checkpoint);
    }
    for (std::size_t j = 0; j < options.samples_per_training; ++j) {
      const DataTable synthetic = draw(result.checkpoint, sample_seed(options.seed, i, j));
      if (sink && sink->on_sample) {
        sink->on_sample(i, j, synthetic);
      }
      per_training[i].push_back({i, j, score(synthetic)});
    }
    if (sink && sink->on_training_done) {
      sink->on_training_done(i, per_training[i]);
    }
  });
  ExperimentBundle bundle;
  for (auto& members : per_training) {
    for (auto& m : members) {
      bundle.members.push_back(std::move(m));
    }
  }
  return bundle;
}

}  // namespace

// ---------------------------------------------------------------------------
// Bias rules

void BiasRule::validate(const TableSchema& schema) const {
  const auto& spec = schema[require_column(schema, variable)];
  if (!(rate >= 0.0 && rate <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "bias rule on '" + variable + "': rate " +
                                                 std::to_string(rate) + " outside [0, 1]");
  }
  if (spec.is_categorical()) {
    if (op != Comparator::kEq && op != Comparator::kNe && op != Comparator::kIn) {
      throw Error(ErrorCode::kInvalidArgument, "bias rule on categorical '" + variable +
                                                   "' must use eq, ne or in");
    }
    if (labels.empty() || !numbers.empty()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "bias rule on categorical '" + variable + "' needs category labels");
    }
    for (const auto& label : labels) {
      if (!spec.category_code(label)) {
        throw Error(ErrorCode::kUnknownCategory,
                    "bias rule on '" + variable + "': unknown category '" + label + "'");
      }
    }
  } else if (numbers.empty() || !labels.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "bias rule on continuous '" + variable + "' needs numeric values");
  }
  if (op != Comparator::kIn && labels.size() + numbers.size() != 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "bias rule on '" + variable + "': only 'in' takes several values");
  }
}

bool BiasRule::matches(const DataTable& table, std::size_t row, std::size_t col) const {
  const auto& spec = table.schema()[col];
  if (spec.is_categorical()) {
    const auto& label = spec.categories[static_cast<std::size_t>(table.codes(col)[row])];
    const bool in = std::find(labels.begin(), labels.end(), label) != labels.end();
    return op == Comparator::kNe ? !in : in;
  }
  const double v = table.continuous(col)[row];
  switch (op) {
    case Comparator::kEq: return v == numbers.front();
    case Comparator::kNe: return v != numbers.front();
    case Comparator::kLt: return v < numbers.front();
    case Comparator::kLe: return v <= numbers.front();
    case Comparator::kGt: return v > numbers.front();
    case Comparator::kGe: return v >= numbers.front();
    case Comparator::kIn: return std::find(numbers.begin(), numbers.end(), v) != numbers.end();
  }
  return false;
}

nlohmann::json to_json(const BiasRule& rule) {
  nlohmann::json j = {{"variable", rule.variable}, {"op", comparator_name(rule.op)},
                      {"rate", rule.rate}};
  nlohmann::json values = rule.labels.empty() ? nlohmann::json(rule.numbers)
                                              : nlohmann::json(rule.labels);
  if (rule.op == Comparator::kIn) {
    j["values"] = std::move(values);
  } else if (!values.empty()) {
    j["value"] = values[0];
  }
  return j;
}

BiasRule bias_rule_from_json(const nlohmann::json& j) {
  BiasRule rule;
  try {
    rule.variable = j.at("variable").get<std::string>();
    const auto op = j.at("op").get<std::string>();
    const auto it = std::find_if(std::begin(kComparatorNames), std::end(kComparatorNames),
                                 [&](const auto& p) { return op == p.second; });
    if (it == std::end(kComparatorNames)) {
      throw Error(ErrorCode::kInvalidArgument, "bias rule: unknown op '" + op + "'");
    }
    rule.op = it->first;
    rule.rate = j.at("rate").get<double>();
    nlohmann::json values = nlohmann::json::array();
    if (rule.op == Comparator::kIn) {
      values = j.at("values");
    } else {
      values.push_back(j.at("value"));
    }
    for (const auto& v : values) {
      if (v.is_string()) {
        rule.labels.push_back(v.get<std::string>());
      } else if (v.is_number()) {
        rule.numbers.push_back(v.get<double>());
      } else {
        throw Error(ErrorCode::kInvalidArgument, "bias rule: values must be strings or numbers");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("bias rule: ") + e.what());
  }
  return rule;
}

std::vector<BiasRule> bias_rules_from_json(const nlohmann::json& j) {
  const nlohmann::json& list = j.is_object() && j.contains("rules") ? j.at("rules") : j;
  if (!list.is_array()) {
    throw Error(ErrorCode::kInvalidArgument, "bias rules must be a JSON array");
  }
  std::vector<BiasRule> rules;
  for (const auto& r : list) {
    rules.push_back(bias_rule_from_json(r));
  }
  return rules;
}

std::vector<BiasRule> load_bias_rules(const std::filesystem::path& path) {
  return bias_rules_from_json(read_json(path));
}

std::vector<std::size_t> surviving_rows(const DataTable& table, std::span<const BiasRule> rules,
                                        std::uint64_t seed) {
  for (const auto& rule : rules) {
    rule.validate(table.schema());
  }
  std::vector<std::size_t> alive(table.n_rows());
  std::iota(alive.begin(), alive.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (const auto& rule : rules) {
    const std::size_t col = require_column(table.schema(), rule.variable);
    std::vector<std::size_t> matching;
    for (const auto r : alive) {
      if (rule.matches(table, r, col)) {
        matching.push_back(r);
      }
    }
    const auto remove =
        static_cast<std::size_t>(std::lround(static_cast<double>(matching.size()) * rule.rate));
    // Partial Fisher-Yates: the first `remove` entries become a uniform draw.
    for (std::size_t i = 0; i < remove; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, matching.size() - 1);
      std::swap(matching[i], matching[pick(rng)]);
    }
    std::vector<bool> drop(table.n_rows(), false);
    for (std::size_t i = 0; i < remove; ++i) {
      drop[matching[i]] = true;
    }
    std::erase_if(alive, [&](std::size_t r) { return drop[r]; });
  }
  return alive;
}

DataTable inject_bias(const DataTable& table, std::span<const BiasRule> rules,
                      std::uint64_t seed) {
  return table.select_rows(surviving_rows(table, rules, seed));
}

// ---------------------------------------------------------------------------
// Household aggregation

std::optional<double> leading_number(std::string_view label) {
  double value = 0.0;
  const auto [end, ec] = std::from_chars(label.data(), label.data() + label.size(), value);
  if (ec != std::errc() || end == label.data()) {
    return std::nullopt;
  }
  return value;
}

nlohmann::json to_json(const AggregateSpec& spec) {
  nlohmann::json j = {{"value", spec.value}, {"stratum", spec.stratum}};
  if (spec.household_size) {
    j["household_size"] = *spec.household_size;
  }
  return j;
}

AggregateSpec aggregate_spec_from_json(const nlohmann::json& j) {
  AggregateSpec spec;
  try {
    spec.value = j.at("value").get<std::string>();
    spec.stratum = j.at("stratum").get<std::string>();
    if (j.contains("household_size") && !j.at("household_size").is_null()) {
      spec.household_size = j.at("household_size").get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("aggregate spec: ") + e.what());
  }
  return spec;
}

std::vector<double> Aggregate::distribution(const std::string& stratum) const {
  const auto it = strata.find(stratum);
  if (it == strata.end()) {
    throw Error(ErrorCode::kEmptyStratum, "no rows in stratum '" + stratum + "'");
  }
  std::vector<double> out = it->second.category_weight;
  for (auto& w : out) {
    w /= it->second.weight;
  }
  return out;
}

Aggregate household_aggregate(const DataTable& table, const AggregateSpec& spec) {
  const auto& schema = table.schema();
  const std::size_t value_col = require_column(schema, spec.value);
  const std::size_t stratum_col = require_column(schema, spec.stratum);
  std::optional<std::size_t> size_col;
  if (spec.household_size) {
    size_col = require_column(schema, *spec.household_size);
  }

  Aggregate agg;
  agg.spec = spec;
  const auto& value_spec = schema[value_col];
  std::vector<double> category_number;
  if (value_spec.is_categorical()) {
    agg.categories = value_spec.categories;
    for (const auto& label : value_spec.categories) {
      category_number.push_back(leading_number(label).value_or(std::nan("")));
    }
  }
  std::vector<double> size_number;
  if (size_col && schema[*size_col].is_categorical()) {
    for (const auto& label : schema[*size_col].categories) {
      const auto v = leading_number(label);
      if (!v) {
        throw Error(ErrorCode::kInvalidArgument, "household size label '" + label +
                                                     "' does not start with a number");
      }
      size_number.push_back(*v);
    }
  }

  for (std::size_t r = 0; r < table.n_rows(); ++r) {
    double weight = 1.0;
    if (size_col) {
      const double size = size_number.empty()
                              ? table.continuous(*size_col)[r]
                              : size_number[static_cast<std::size_t>(table.codes(*size_col)[r])];
      if (!(size > 0.0)) {
        throw Error(ErrorCode::kZeroHouseholdSize,
                    "row " + std::to_string(r) + ": household size " + format_double(size) +
                        " is not positive");
      }
      weight = 1.0 / size;
    }
    auto& s = agg.strata[table.cell_text(r, stratum_col)];
    if (s.category_weight.size() != agg.categories.size()) {
      s.category_weight.assign(agg.categories.size(), 0.0);
    }
    s.weight += weight;
    if (value_spec.is_categorical()) {
      const auto code = static_cast<std::size_t>(table.codes(value_col)[r]);
      s.category_weight[code] += weight;
      s.total += weight * category_number[code];
    } else {
      s.total += weight * table.continuous(value_col)[r];
    }
  }
  return agg;
}

nlohmann::json to_json(const Aggregate& aggregate) {
  nlohmann::json totals = nlohmann::json::object();
  nlohmann::json weights = nlohmann::json::object();
  nlohmann::json distributions = nlohmann::json::object();
  for (const auto& [stratum, s] : aggregate.strata) {
    totals[stratum] = std::isnan(s.total) ? nlohmann::json(nullptr) : nlohmann::json(s.total);
    weights[stratum] = s.weight;
    if (!aggregate.categories.empty()) {
      distributions[stratum] = aggregate.distribution(stratum);
    }
  }
  nlohmann::json j = to_json(aggregate.spec);
  j["totals"] = std::move(totals);
  j["weights"] = std::move(weights);
  if (!aggregate.categories.empty()) {
    j["categories"] = aggregate.categories;
    j["distributions"] = std::move(distributions);
  }
  return j;
}

// ---------------------------------------------------------------------------
// Control totals

void ControlTotals::validate() const {
  if (categories.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "control totals for '" + spec.value + "' need a categorical variable");
  }
  for (const auto& [stratum, dist] : distributions) {
    if (dist.size() != categories.size()) {
      throw Error(ErrorCode::kBinMismatch, "control totals for '" + spec.value + "', stratum '" +
                                               stratum + "': wrong number of categories");
    }
    const double sum = std::accumulate(dist.begin(), dist.end(), 0.0);
    const bool non_negative = std::all_of(dist.begin(), dist.end(), [](double p) { return p >= 0.0; });
    if (!non_negative || std::abs(sum - 1.0) > 1e-9) {
      throw Error(ErrorCode::kInvalidArgument, "control totals for '" + spec.value +
                                                   "', stratum '" + stratum +
                                                   "' do not form a distribution");
    }
  }
}

ControlTotals control_totals_from(const Aggregate& aggregate) {
  ControlTotals totals;
  totals.spec = aggregate.spec;
  totals.categories = aggregate.categories;
  for (const auto& [stratum, s] : aggregate.strata) {
    totals.distributions[stratum] = aggregate.distribution(stratum);
  }
  totals.validate();
  return totals;
}

nlohmann::json to_json(const ControlTotals& totals) {
  nlohmann::json j = to_json(totals.spec);
  j["categories"] = totals.categories;
  j["distributions"] = totals.distributions;
  return j;
}

ControlTotals control_totals_from_json(const nlohmann::json& j) {
  ControlTotals totals;
  totals.spec = aggregate_spec_from_json(j);
  try {
    totals.categories = j.at("categories").get<std::vector<std::string>>();
    totals.distributions =
        j.at("distributions").get<std::map<std::string, std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("control totals: ") + e.what());
  }
  totals.validate();
  return totals;
}

std::vector<ControlTotals> load_control_totals(const std::filesystem::path& path) {
  const auto j = read_json(path);
  std::vector<ControlTotals> out;
  if (j.is_array()) {
    for (const auto& entry : j) {
      out.push_back(control_totals_from_json(entry));
    }
  } else {
    out.push_back(control_totals_from_json(j));
  }
  return out;
}

std::vector<JsEntry> compare_to_controls(const DataTable& table,
                                         std::span<const ControlTotals> controls) {
  std::vector<JsEntry> out;
  for (const auto& control : controls) {
    const Aggregate agg = household_aggregate(table, control.spec);
    // Aggregate categories re-ordered as in the control totals.
    std::vector<std::size_t> position(agg.categories.size());
    for (std::size_t c = 0; c < agg.categories.size(); ++c) {
      const auto it =
          std::find(control.categories.begin(), control.categories.end(), agg.categories[c]);
      if (it == control.categories.end()) {
        throw Error(ErrorCode::kBinMismatch, "category '" + agg.categories[c] + "' of '" +
                                                 control.spec.value +
                                                 "' is missing from the control totals");
      }
      position[c] = static_cast<std::size_t>(it - control.categories.begin());
    }
    for (const auto& [stratum, expected] : control.distributions) {
      const auto observed = agg.distribution(stratum);
      std::vector<double> aligned(control.categories.size(), 0.0);
      for (std::size_t c = 0; c < observed.size(); ++c) {
        aligned[position[c]] += observed[c];
      }
      out.push_back({control.spec.value, stratum, js_distance(expected, aligned)});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation and experiments

MetricsReport evaluate_sample(const DataTable& original, const DataTable& synthetic,
                              std::span<const std::string> excluded,
                              const EvaluationOptions& options) {
  MetricsReport report;
  if (options.level1) {
    report.level1 = assess(original, synthetic, 1, excluded).level1;
  }
  if (options.level2) {
    report.level2 = assess(original, synthetic, 2, excluded).level2;
  }
  if (options.marginal_js) {
    const Binning binning(original);
    for (const auto& name : original.schema().names()) {
      if (std::find(excluded.begin(), excluded.end(), name) != excluded.end()) {
        continue;
      }
      const std::string vars[] = {name};
      report.js.push_back({name, "all",
                           js_distance(frequency_list(original, vars, binning),
                                       frequency_list(synthetic, vars, binning))});
    }
  }
  for (const auto& target : options.efficacy_targets) {
    report.efficacy.push_back(ml_efficacy(original, synthetic, target, options.efficacy));
  }
  return report;
}

std::optional<double> ExperimentBundle::mean(
    std::optional<double> (MetricsReport::*aggregate)() const) const {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& m : members) {
    if (const auto v = (m.report.*aggregate)()) {
      sum += *v;
      ++count;
    }
  }
  if (count == 0) {
    return std::nullopt;
  }
  return sum / static_cast<double>(count);
}

nlohmann::json to_json(const ExperimentBundle& bundle) {
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : bundle.members) {
    members.push_back({{"training", m.training}, {"sample", m.sample}, {"report", to_json(m.report)}});
  }
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {{"members", std::move(members)},
          {"reference", bundle.reference ? to_json(*bundle.reference) : nlohmann::json(nullptr)},
          {"mean",
           {{"srmse_level1", opt(bundle.mean(&MetricsReport::mean_level1))},
            {"srmse_level2", opt(bundle.mean(&MetricsReport::mean_level2))},
            {"ml_efficacy", opt(bundle.mean(&MetricsReport::mean_efficacy))},
            {"js", opt(bundle.mean(&MetricsReport::mean_js))}}}};
}

ExperimentBundle run_debias_experiment(const DataTable& feeder, std::span<const BiasRule> rules,
                                       const Dag& dag, std::span<const std::string> ci,
                                       const TrainingConfig& config,
                                       const ExperimentOptions& options,
                                       const ExperimentSink* sink) {
  const DataTable biased = inject_bias(feeder, rules, derive_seed(options.seed, kBiasSeed));
  auto draw = [&](const ModelCheckpoint& model, std::uint64_t seed) {
    const SampleOptions sample_options{seed, SampleOptions{}.chunk_size};
    return ci.empty() ? sample_unconditional(model, feeder.n_rows(), sample_options)
                      : sample(model, feeder, sample_options);
  };
  auto score = [&](const DataTable& synthetic) {
    return evaluate_sample(feeder, synthetic, ci, options.evaluation);
  };
  ExperimentBundle bundle =
      run_trainings(biased, dag, ci, config, options, sink, draw, score);
  EvaluationOptions reference_options = options.evaluation;
  bundle.reference = evaluate_sample(feeder, biased, ci, reference_options);
  return bundle;
}

std::map<std::string, std::size_t> stratum_counts(const DataTable& table,
                                                  std::string_view stratum) {
  const std::size_t col = require_column(table.schema(), stratum);
  std::map<std::string, std::size_t> counts;
  for (std::size_t r = 0; r < table.n_rows(); ++r) {
    ++counts[table.cell_text(r, col)];
  }
  return counts;
}

MetricsReport oversampled_baseline_report(const DataTable& feeder, const DataTable& distributor,
                                          std::span<const ControlTotals> controls,
                                          std::uint64_t seed) {
  MetricsReport report;
  std::map<std::string, DataTable> by_stratum_var;
  for (const auto& control : controls) {
    auto it = by_stratum_var.find(control.spec.stratum);
    if (it == by_stratum_var.end()) {
      const auto targets = stratum_counts(distributor, control.spec.stratum);
      it = by_stratum_var
               .emplace(control.spec.stratum,
                        oversample_baseline(feeder, control.spec.stratum, targets, seed))
               .first;
    }
    const ControlTotals one[] = {control};
    for (auto& e : compare_to_controls(it->second, one)) {
      report.js.push_back(std::move(e));
    }
  }
  return report;
}

ExperimentBundle run_population_experiment(const DataTable& feeder, const DataTable& distributor,
                                           std::span<const ControlTotals> controls,
                                           const Dag& dag, std::span<const std::string> ci,
                                           const TrainingConfig& config,
                                           const ExperimentOptions& options,
                                           const ExperimentSink* sink) {
  for (const auto& control : controls) {
    control.validate();
    const auto counts = stratum_counts(distributor, control.spec.stratum);
    for (const auto& [stratum, dist] : control.distributions) {
      if (!counts.contains(stratum)) {
        throw Error(ErrorCode::kEmptyStratum, "control stratum '" + stratum +
                                                  "' has no distributor rows");
      }
    }
  }
  auto draw = [&](const ModelCheckpoint& model, std::uint64_t seed) {
    return complete(model, distributor, SampleOptions{seed, SampleOptions{}.chunk_size});
  };
  auto score = [&](const DataTable& completed) {
    MetricsReport report;
    report.js = compare_to_controls(completed, controls);
    return report;
  };
  ExperimentBundle bundle = run_trainings(feeder, dag, ci, config, options, sink, draw, score);
  bundle.reference = oversampled_baseline_report(feeder, distributor, controls,
                                                 derive_seed(options.seed, kBaselineSeed));
  return bundle;
}

// ---------------------------------------------------------------------------
// File-driven experiments

ExperimentConfig experiment_config_from_json(const nlohmann::json& j,
                                             const std::filesystem::path& base) {
  if (!j.is_object()) {
    throw Error(ErrorCode::kInvalidArgument, "experiment config must be a JSON object");
  }
  static const std::set<std::string> kKeys = {
      "name",     "feeder", "distributor",    "schema",    "dag",
      "ci",       "bias_rules", "control_totals", "training", "trainings",
      "samples_per_training", "seed", "ml_efficacy_targets"};
  for (const auto& [key, value] : j.items()) {
    if (!kKeys.contains(key)) {
      throw Error(ErrorCode::kInvalidArgument, "experiment config: unknown key '" + key + "'");
    }
  }
  auto path = [&](const nlohmann::json& v) {
    const std::filesystem::path p = v.get<std::string>();
    return p.is_absolute() ? p : base / p;
  };
  ExperimentConfig c;
  try {
    c.name = j.value("name", c.name);
    c.feeder = path(j.at("feeder"));
    if (j.contains("distributor")) {
      c.distributor = path(j.at("distributor"));
    }
    if (j.contains("schema")) {
      c.schema = path(j.at("schema"));
    }
    c.dag = path(j.at("dag"));
    if (j.contains("ci")) {
      c.ci = j.at("ci").get<std::vector<std::string>>();
    } else {
      c.ci = load_dag_spec(c.dag).conditional_inputs;
    }
    if (j.contains("bias_rules")) {
      const auto& r = j.at("bias_rules");
      c.bias_rules = r.is_string() ? load_bias_rules(path(r)) : bias_rules_from_json(r);
    }
    if (j.contains("control_totals")) {
      const auto& t = j.at("control_totals");
      if (t.is_string()) {
        c.control_totals = load_control_totals(path(t));
      } else {
        for (const auto& entry : t) {
          c.control_totals.push_back(control_totals_from_json(entry));
        }
      }
    }
    if (j.contains("training")) {
      const auto& t = j.at("training");
      c.training = t.is_string() ? load_training_config(path(t)) : training_config_from_json(t);
    }
    c.trainings = j.value("trainings", c.trainings);
    c.samples_per_training = j.value("samples_per_training", c.samples_per_training);
    c.seed = j.value("seed", c.seed);
    c.efficacy_targets = j.value("ml_efficacy_targets", c.efficacy_targets);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("experiment config: ") + e.what());
  }
  if (c.control_totals.empty() != !c.distributor.has_value()) {
    throw Error(ErrorCode::kInvalidArgument,
                "experiment config: distributor and control_totals go together");
  }
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return experiment_config_from_json(read_json(path), path.parent_path());
}

ExperimentBundle run_experiment(const ExperimentConfig& config, const std::filesystem::path& out,
                                std::size_t jobs) {
  const TableSchema schema = config.schema
                                 ? load_schema(*config.schema)
                                 : infer_schema(std::span(&config.feeder, 1));
  const DataTable feeder = ingest_csv(config.feeder, schema);
  const DagSpec dag = load_dag_spec(config.dag);

  ExperimentOptions options;
  options.trainings = config.trainings;
  options.samples_per_training = config.samples_per_training;
  options.seed = config.seed;
  options.jobs = jobs;
  options.evaluation.efficacy_targets = config.efficacy_targets;
  options.evaluation.efficacy.seed = config.seed;

  auto run_dir = [&](std::size_t training) {
    return out / (config.name + "_t" + std::to_string(training));
  };
  ExperimentSink sink;
  sink.on_model = [&](std::size_t i, const ModelCheckpoint& model) {
    save_checkpoint(model, run_dir(i) / "checkpoint");
  };
  sink.on_sample = [&](std::size_t i, std::size_t j, const DataTable& table) {
    const auto dir = run_dir(i) / "samples";
    std::filesystem::create_directories(dir);
    write_csv(table, dir / ("sample_" + std::to_string(j) + ".csv"));
  };
  sink.on_training_done = [&](std::size_t i, std::span<const EvaluatedSample> members) {
    nlohmann::json reports = nlohmann::json::array();
    for (const auto& m : members) {
      reports.push_back({{"sample", m.sample}, {"report", to_json(m.report)}});
    }
    write_json(reports, run_dir(i) / "metrics.json");
  };

  std::filesystem::create_directories(out);
  ExperimentBundle bundle;
  if (config.distributor) {
    const auto header = read_csv_header(*config.distributor);
    std::vector<std::string> present;
    for (const auto& name : schema.names()) {
      if (std::find(header.begin(), header.end(), name) != header.end()) {
        present.push_back(name);
      }
    }
    const DataTable distributor = ingest_csv(*config.distributor, schema.select(present));
    const DataTable training =
        inject_bias(feeder, config.bias_rules, derive_seed(config.seed, kBiasSeed));
    bundle = run_population_experiment(training, distributor, config.control_totals, dag.dag,
                                       config.ci, config.training, options, &sink);
  } else {
    bundle = run_debias_experiment(feeder, config.bias_rules, dag.dag, config.ci,
                                   config.training, options, &sink);
  }
  write_json(to_json(bundle), out / "bundle.json");
  return bundle;
}

}  // namespace dagsynth
