#include "dagsynth/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dagsynth/csv.hpp"
#include "dagsynth/errors.hpp"
#include "dagsynth/gbdt.hpp"

namespace dagsynth {

namespace {

std::size_t column_of(const DataTable& table, std::string_view variable) {
  const auto idx = table.schema().index_of(variable);
  if (!idx) {
    throw Error(ErrorCode::kUnknownVariable,
                "variable '" + std::string(variable) + "' not in the table");
  }
  return *idx;
}

// Category codes of `table`'s column re-expressed as indices into `categories`.
std::vector<std::int32_t> codes_by_label(const DataTable& table, std::size_t col,
                                         const std::vector<std::string>& categories) {
  const auto& spec = table.schema()[col];
  if (!spec.is_categorical()) {
    throw Error(ErrorCode::kSchemaMismatch, "variable '" + spec.name + "' is not categorical");
  }
  std::vector<std::int32_t> remap(spec.categories.size(), -1);
  for (std::size_t c = 0; c < spec.categories.size(); ++c) {
    const auto it = std::find(categories.begin(), categories.end(), spec.categories[c]);
    if (it != categories.end()) {
      remap[c] = static_cast<std::int32_t>(it - categories.begin());
    }
  }
  const auto& codes = table.codes(col);
  std::vector<std::int32_t> out(codes.size());
  for (std::size_t r = 0; r < codes.size(); ++r) {
    out[r] = remap[static_cast<std::size_t>(codes[r])];
    if (out[r] < 0) {
      throw Error(ErrorCode::kBinMismatch,
                  "category '" + spec.categories[static_cast<std::size_t>(codes[r])] +
                      "' of '" + spec.name + "' has no bin in the original table");
    }
  }
  return out;
}

double type7_quantile(const std::vector<double>& sorted, double q) {
  const double h = static_cast<double>(sorted.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

void check_comparable(const DataTable& original, const DataTable& synthetic) {
  const auto& a = original.schema();
  const auto& b = synthetic.schema();
  bool same = a.size() == b.size();
  for (std::size_t i = 0; same && i < a.size(); ++i) {
    same = a[i].name == b[i].name && a[i].kind == b[i].kind;
  }
  if (!same) {
    throw Error(ErrorCode::kSchemaMismatch,
                "original and synthetic tables have different variables or types");
  }
}

std::optional<double> mean_of(const std::vector<double>& values) {
  if (values.empty()) {
    return std::nullopt;
  }
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

template <typename Entry>
std::optional<double> mean_field(const std::vector<Entry>& entries, double Entry::*field) {
  std::vector<double> values;
  for (const auto& e : entries) {
    values.push_back(e.*field);
  }
  return mean_of(values);
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) {
    out += (out.empty() ? "" : "|") + n;
  }
  return out;
}

// Feature matrix of every column but `target`, with category codes aligned
// to the reference schema.
Eigen::MatrixXd feature_matrix(const DataTable& table, const TableSchema& reference,
                               std::size_t target) {
  const auto n = static_cast<Eigen::Index>(table.n_rows());
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(reference.size() - 1));
  Eigen::Index f = 0;
  for (std::size_t c = 0; c < reference.size(); ++c) {
    if (c == target) {
      continue;
    }
    if (reference[c].is_categorical()) {
      const auto codes = codes_by_label(table, c, reference[c].categories);
      for (Eigen::Index r = 0; r < n; ++r) {
        out(r, f) = codes[static_cast<std::size_t>(r)];
      }
    } else {
      const auto& values = table.continuous(c);
      for (Eigen::Index r = 0; r < n; ++r) {
        out(r, f) = values[static_cast<std::size_t>(r)];
      }
    }
    ++f;
  }
  return out;
}

std::vector<std::size_t> fold_of_rows(std::size_t n, std::size_t folds, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> fold(n);
  for (std::size_t i = 0; i < n; ++i) {
    fold[order[i]] = i % folds;
  }
  return fold;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

template <typename T>
std::vector<T> take(const std::vector<T>& v, const std::vector<std::size_t>& rows) {
  std::vector<T> out;
  out.reserve(rows.size());
  for (const auto r : rows) {
    out.push_back(v[r]);
  }
  return out;
}

// Learner target: class codes or continuous values.
struct Target {
  bool categorical = false;
  int n_classes = 0;
  std::vector<std::int32_t> classes;
  std::vector<double> values;
};

Target target_of(const DataTable& table, std::size_t col, const VariableSpec& reference) {
  Target t;
  t.categorical = reference.is_categorical();
  if (t.categorical) {
    t.n_classes = static_cast<int>(reference.categories.size());
    t.classes = codes_by_label(table, col, reference.categories);
  } else {
    t.values = table.continuous(col);
  }
  return t;
}

void require_informative(const Target& t, std::string_view name, std::string_view where) {
  bool degenerate = false;
  if (t.categorical) {
    degenerate = t.n_classes < 2 ||
                 std::all_of(t.classes.begin(), t.classes.end(),
                             [&](std::int32_t c) { return c == t.classes.front(); });
  } else {
    degenerate = std::all_of(t.values.begin(), t.values.end(),
                             [&](double v) { return v == t.values.front(); });
  }
  if (degenerate) {
    throw Error(ErrorCode::kSingleClassTarget, "target '" + std::string(name) +
                                                   "' takes a single value in the " +
                                                   std::string(where) + " training data");
  }
}

// Summed loss of a learner fitted on (train_x, train_t) over (test_x, test_t).
double fold_loss(const Eigen::MatrixXd& train_x, const Target& train_t,
                 const Eigen::MatrixXd& test_x, const Target& test_t,
                 const BoostingConfig& config) {
  double total = 0.0;
  if (train_t.categorical) {
    const auto model =
        BoostedTrees::fit_classifier(train_x, train_t.classes, train_t.n_classes, config);
    const Eigen::MatrixXd prob = model.predict(test_x);
    for (std::size_t r = 0; r < test_t.classes.size(); ++r) {
      const double p = prob(static_cast<Eigen::Index>(r), test_t.classes[r]);
      total -= std::log(std::max(p, 1e-15));
    }
  } else {
    const auto model = BoostedTrees::fit_regressor(train_x, train_t.values, config);
    const Eigen::MatrixXd pred = model.predict(test_x);
    for (std::size_t r = 0; r < test_t.values.size(); ++r) {
      const double d = pred(static_cast<Eigen::Index>(r), 0) - test_t.values[r];
      total += d * d;
    }
  }
  return total;
}

Target subset(const Target& t, const std::vector<std::size_t>& rows) {
  Target out = t;
  if (t.categorical) {
    out.classes = take(t.classes, rows);
  } else {
    out.values = take(t.values, rows);
  }
  return out;
}

}  // namespace

std::vector<std::size_t> VariableBins::assign(const DataTable& table) const {
  const std::size_t col = column_of(table, variable);
  std::vector<std::size_t> out(table.n_rows());
  if (!categories.empty()) {
    const auto codes = codes_by_label(table, col, categories);
    std::copy(codes.begin(), codes.end(), out.begin());
    return out;
  }
  if (table.schema()[col].is_categorical()) {
    throw Error(ErrorCode::kBinMismatch, "variable '" + variable + "' is binned as continuous");
  }
  const auto& values = table.continuous(col);
  for (std::size_t r = 0; r < values.size(); ++r) {
    out[r] = static_cast<std::size_t>(std::upper_bound(cuts.begin(), cuts.end(), values[r]) -
                                      cuts.begin());
  }
  return out;
}

VariableBins bins_from_original(const DataTable& original, std::string_view variable,
                                std::size_t quantile_bins) {
  const std::size_t col = column_of(original, variable);
  const auto& spec = original.schema()[col];
  VariableBins bins;
  bins.variable = spec.name;
  if (spec.is_categorical()) {
    bins.categories = spec.categories;
    bins.labels = spec.categories;
    return bins;
  }
  if (quantile_bins == 0) {
    throw Error(ErrorCode::kInvalidArgument, "quantile bin count must be positive");
  }
  std::vector<double> sorted = original.continuous(col);
  if (sorted.empty()) {
    throw Error(ErrorCode::kEmptyTable, "cannot derive quantile bins from an empty table");
  }
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t k = 1; k < quantile_bins; ++k) {
    bins.cuts.push_back(
        type7_quantile(sorted, static_cast<double>(k) / static_cast<double>(quantile_bins)));
  }
  for (std::size_t k = 0; k < quantile_bins; ++k) {
    bins.labels.push_back(std::to_string(k));
  }
  return bins;
}

Binning::Binning(const DataTable& original, std::size_t quantile_bins) {
  for (const auto& spec : original.schema().variables()) {
    bins_.emplace(spec.name, bins_from_original(original, spec.name, quantile_bins));
  }
}

const VariableBins& Binning::at(std::string_view variable) const {
  const auto it = bins_.find(variable);
  if (it == bins_.end()) {
    throw Error(ErrorCode::kUnknownVariable,
                "no bins for variable '" + std::string(variable) + "'");
  }
  return it->second;
}

FrequencyList frequency_list(const DataTable& table, std::span<const std::string> variables,
                             const Binning& binning) {
  if (variables.empty() || variables.size() > 2) {
    throw Error(ErrorCode::kInvalidArgument, "frequency lists take one or two variables");
  }
  FrequencyList list;
  list.variables.assign(variables.begin(), variables.end());
  const VariableBins& first = binning.at(variables[0]);
  std::vector<std::size_t> cell = first.assign(table);
  if (variables.size() == 1) {
    list.labels = first.labels;
  } else {
    const VariableBins& second = binning.at(variables[1]);
    const auto inner = second.assign(table);
    for (std::size_t r = 0; r < cell.size(); ++r) {
      cell[r] = cell[r] * second.size() + inner[r];
    }
    for (const auto& a : first.labels) {
      for (const auto& b : second.labels) {
        list.labels.push_back(a + "|" + b);
      }
    }
  }
  list.frequencies.assign(list.labels.size(), 0.0);
  if (table.n_rows() == 0) {
    throw Error(ErrorCode::kEmptyTable, "frequency list of an empty table");
  }
  for (const auto c : cell) {
    list.frequencies[c] += 1.0;
  }
  const double n = static_cast<double>(table.n_rows());
  for (auto& f : list.frequencies) {
    f /= n;
  }
  return list;
}

double srmse(const FrequencyList& original, const FrequencyList& synthetic) {
  if (original.variables != synthetic.variables || original.labels != synthetic.labels ||
      original.frequencies.size() != synthetic.frequencies.size()) {
    throw Error(ErrorCode::kBinMismatch, "frequency lists have different bins");
  }
  if (original.frequencies.empty()) {
    throw Error(ErrorCode::kBinMismatch, "frequency lists have no bins");
  }
  double squared = 0.0;
  double total = 0.0;
  for (std::size_t b = 0; b < original.frequencies.size(); ++b) {
    const double d = original.frequencies[b] - synthetic.frequencies[b];
    squared += d * d;
    total += original.frequencies[b];
  }
  const double bins = static_cast<double>(original.frequencies.size());
  const double mean = total / bins;
  if (mean <= 0.0) {
    throw Error(ErrorCode::kBinMismatch, "original frequency list is all zero");
  }
  return std::sqrt(squared / bins) / mean;
}

double kl(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw Error(ErrorCode::kBinMismatch, "distributions have different supports");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) {
      continue;
    }
    if (q[i] <= 0.0) {
      throw Error(ErrorCode::kSupportViolation,
                  "Q is zero at index " + std::to_string(i) + " where P is positive");
    }
    sum += p[i] * std::log2(p[i] / q[i]);
  }
  return sum;
}

double js_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw Error(ErrorCode::kBinMismatch, "distributions have different supports");
  }
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = 0.5 * (p[i] + q[i]);
  }
  const double divergence = 0.5 * (kl(p, m) + kl(q, m));
  return std::sqrt(std::clamp(divergence, 0.0, 1.0));
}

double js_distance(const FrequencyList& p, const FrequencyList& q) {
  if (p.labels != q.labels) {
    throw Error(ErrorCode::kBinMismatch, "frequency lists have different bins");
  }
  return js_distance(p.frequencies, q.frequencies);
}

std::optional<double> MetricsReport::mean_level1() const {
  return mean_field(level1, &SrmseEntry::value);
}
std::optional<double> MetricsReport::mean_level2() const {
  return mean_field(level2, &SrmseEntry::value);
}
std::optional<double> MetricsReport::mean_efficacy() const {
  return mean_field(efficacy, &EfficacyEntry::relative);
}
std::optional<double> MetricsReport::mean_js() const { return mean_field(js, &JsEntry::value); }

nlohmann::json to_json(const MetricsReport& report) {
  auto srmse_json = [](const std::vector<SrmseEntry>& entries) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& e : entries) {
      out.push_back({{"variables", e.variables}, {"value", e.value}});
    }
    return out;
  };
  nlohmann::json efficacy = nlohmann::json::array();
  for (const auto& e : report.efficacy) {
    efficacy.push_back({{"target", e.target},
                        {"synthetic_loss", e.synthetic_loss},
                        {"original_loss", e.original_loss},
                        {"relative", e.relative}});
  }
  nlohmann::json js = nlohmann::json::array();
  for (const auto& e : report.js) {
    js.push_back({{"variable", e.variable}, {"stratum", e.stratum}, {"value", e.value}});
  }
  return {{"srmse_level1", srmse_json(report.level1)},
          {"mean_srmse_level1", optional_json(report.mean_level1())},
          {"srmse_level2", srmse_json(report.level2)},
          {"mean_srmse_level2", optional_json(report.mean_level2())},
          {"ml_efficacy", std::move(efficacy)},
          {"mean_ml_efficacy", optional_json(report.mean_efficacy())},
          {"js", std::move(js)},
          {"mean_js", optional_json(report.mean_js())}};
}

MetricsReport metrics_report_from_json(const nlohmann::json& j) {
  MetricsReport report;
  try {
    auto srmse_from = [&](const char* key, std::vector<SrmseEntry>& out) {
      for (const auto& e : j.value(key, nlohmann::json::array())) {
        out.push_back({e.at("variables").get<std::vector<std::string>>(),
                       e.at("value").get<double>()});
      }
    };
    srmse_from("srmse_level1", report.level1);
    srmse_from("srmse_level2", report.level2);
    for (const auto& e : j.value("ml_efficacy", nlohmann::json::array())) {
      report.efficacy.push_back({e.at("target").get<std::string>(),
                                 e.at("synthetic_loss").get<double>(),
                                 e.at("original_loss").get<double>(),
                                 e.at("relative").get<double>()});
    }
    for (const auto& e : j.value("js", nlohmann::json::array())) {
      report.js.push_back({e.at("variable").get<std::string>(),
                           e.at("stratum").get<std::string>(), e.at("value").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("metrics report: ") + e.what());
  }
  return report;
}

void write_csv(const MetricsReport& report, std::ostream& out) {
  write_csv_row(out, std::vector<std::string>{"metric", "variables", "stratum", "value"});
  auto row = [&](const std::string& metric, const std::string& vars, const std::string& stratum,
                 double value) {
    write_csv_row(out, std::vector<std::string>{metric, vars, stratum, format_double(value)});
  };
  for (const auto& e : report.level1) {
    row("srmse_level1", join_names(e.variables), "", e.value);
  }
  for (const auto& e : report.level2) {
    row("srmse_level2", join_names(e.variables), "", e.value);
  }
  for (const auto& e : report.efficacy) {
    row("ml_efficacy", e.target, "", e.relative);
  }
  for (const auto& e : report.js) {
    row("js", e.variable, e.stratum, e.value);
  }
}

MetricsReport assess(const DataTable& original, const DataTable& synthetic, int level,
                     std::span<const std::string> excluded) {
  if (level != 1 && level != 2) {
    throw Error(ErrorCode::kInvalidArgument, "assessment level must be 1 or 2");
  }
  check_comparable(original, synthetic);
  std::vector<std::string> names;
  for (const auto& name : original.schema().names()) {
    if (std::find(excluded.begin(), excluded.end(), name) == excluded.end()) {
      names.push_back(name);
    }
  }
  const Binning binning(original);
  MetricsReport report;
  auto evaluate = [&](std::vector<std::string> vars) {
    const double value = srmse(frequency_list(original, vars, binning),
                               frequency_list(synthetic, vars, binning));
    return SrmseEntry{std::move(vars), value};
  };
  if (level == 1) {
    for (const auto& name : names) {
      report.level1.push_back(evaluate({name}));
    }
  } else {
    for (std::size_t i = 0; i < names.size(); ++i) {
      for (std::size_t k = i + 1; k < names.size(); ++k) {
        report.level2.push_back(evaluate({names[i], names[k]}));
      }
    }
  }
  return report;
}

EfficacyEntry ml_efficacy(const DataTable& original, const DataTable& synthetic,
                          std::string_view target, const EfficacyOptions& options) {
  check_comparable(original, synthetic);
  const std::size_t col = column_of(original, target);
  const TableSchema& schema = original.schema();
  if (schema.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "ml efficacy needs at least one feature column");
  }
  if (options.folds < 2 || original.n_rows() < options.folds ||
      synthetic.n_rows() < options.folds) {
    throw Error(ErrorCode::kInvalidArgument,
                "ml efficacy needs at least " + std::to_string(options.folds) +
                    " rows in each table and at least two folds");
  }
  BoostingConfig config;
  config.n_trees = options.n_trees;
  config.max_depth = options.max_depth;
  config.learning_rate = options.learning_rate;

  const Eigen::MatrixXd orig_x = feature_matrix(original, schema, col);
  const Eigen::MatrixXd synth_x = feature_matrix(synthetic, schema, col);
  const Target orig_t = target_of(original, col, schema[col]);
  const Target synth_t = target_of(synthetic, col, schema[col]);
  require_informative(synth_t, target, "synthetic");
  require_informative(orig_t, target, "original");

  const auto orig_fold = fold_of_rows(original.n_rows(), options.folds, options.seed);
  const auto synth_fold = fold_of_rows(synthetic.n_rows(), options.folds, options.seed);
  double orig_loss = 0.0;
  double synth_loss = 0.0;
  for (std::size_t k = 0; k < options.folds; ++k) {
    std::vector<std::size_t> test;
    std::vector<std::size_t> orig_train;
    std::vector<std::size_t> synth_train;
    for (std::size_t r = 0; r < original.n_rows(); ++r) {
      (orig_fold[r] == k ? test : orig_train).push_back(r);
    }
    for (std::size_t r = 0; r < synthetic.n_rows(); ++r) {
      if (synth_fold[r] != k) {
        synth_train.push_back(r);
      }
    }
    const Eigen::MatrixXd test_x = take_rows(orig_x, test);
    const Target test_t = subset(orig_t, test);
    const Target orig_train_t = subset(orig_t, orig_train);
    const Target synth_train_t = subset(synth_t, synth_train);
    require_informative(orig_train_t, target, "original fold");
    require_informative(synth_train_t, target, "synthetic fold");
    orig_loss += fold_loss(take_rows(orig_x, orig_train), orig_train_t, test_x, test_t, config);
    synth_loss +=
        fold_loss(take_rows(synth_x, synth_train), synth_train_t, test_x, test_t, config);
  }
  const double n = static_cast<double>(original.n_rows());
  EfficacyEntry entry;
  entry.target = std::string(target);
  entry.original_loss = orig_loss / n;
  entry.synthetic_loss = synth_loss / n;
  if (!(entry.original_loss > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "baseline loss for target '" + entry.target +
                                                 "' is zero; relative score undefined");
  }
  entry.relative = (entry.synthetic_loss - entry.original_loss) / entry.original_loss;
  return entry;
}

}  // namespace dagsynth
