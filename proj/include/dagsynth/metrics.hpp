#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dagsynth/table.hpp"

namespace dagsynth {

// How the values of one variable are bucketed. Categorical variables use
// their categories; continuous ones use quantile cut points taken from the
// original table, so every compared table is binned identically.
struct VariableBins {
  std::string variable;
  std::vector<std::string> labels;
  std::vector<std::string> categories;  // categorical only
  std::vector<double> cuts;             // continuous only, ascending

  std::size_t size() const noexcept { return labels.size(); }
  // Bin index of every row of `table`'s column for this variable.
  std::vector<std::size_t> assign(const DataTable& table) const;
};

constexpr std::size_t kQuantileBins = 10;

VariableBins bins_from_original(const DataTable& original, std::string_view variable,
                                std::size_t quantile_bins = kQuantileBins);

// Bins for every variable of `original`, keyed by name.
class Binning {
 public:
  explicit Binning(const DataTable& original, std::size_t quantile_bins = kQuantileBins);

  const VariableBins& at(std::string_view variable) const;

 private:
  std::map<std::string, VariableBins, std::less<>> bins_;
};

struct FrequencyList {
  std::vector<std::string> variables;
  std::vector<std::string> labels;  // pair bins read "a|b", first variable outermost
  std::vector<double> frequencies;
};

// Relative frequencies of one variable or of the cross product of two.
FrequencyList frequency_list(const DataTable& table, std::span<const std::string> variables,
                             const Binning& binning);

double srmse(const FrequencyList& original, const FrequencyList& synthetic);

// Base-2 logarithms throughout.
double kl(std::span<const double> p, std::span<const double> q);
double js_distance(std::span<const double> p, std::span<const double> q);
double js_distance(const FrequencyList& p, const FrequencyList& q);

struct SrmseEntry {
  std::vector<std::string> variables;
  double value = 0.0;
};

struct EfficacyEntry {
  std::string target;
  double synthetic_loss = 0.0;  // learner fitted on synthetic rows, scored on original rows
  double original_loss = 0.0;   // cross-validated baseline on the original table
  double relative = 0.0;        // (synthetic - original) / original
};

struct JsEntry {
  std::string variable;
  std::string stratum;
  double value = 0.0;
};

struct MetricsReport {
  std::vector<SrmseEntry> level1;
  std::vector<SrmseEntry> level2;
  std::vector<EfficacyEntry> efficacy;
  std::vector<JsEntry> js;

  std::optional<double> mean_level1() const;
  std::optional<double> mean_level2() const;
  std::optional<double> mean_efficacy() const;
  std::optional<double> mean_js() const;
};

nlohmann::json to_json(const MetricsReport& report);
MetricsReport metrics_report_from_json(const nlohmann::json& j);
// Long format: metric,variables,stratum,value. Variables of a pair are joined by '|'.
void write_csv(const MetricsReport& report, std::ostream& out);

// SRMSE per variable (level 1) or per unordered pair (level 2), skipping the
// `excluded` variables. Schemas must match.
MetricsReport assess(const DataTable& original, const DataTable& synthetic, int level,
                     std::span<const std::string> excluded = {});

struct EfficacyOptions {
  std::size_t n_trees = 500;
  std::size_t max_depth = 8;
  double learning_rate = 0.1;
  std::size_t folds = 5;
  std::uint64_t seed = 0;
};

// Log loss for categorical targets, mean squared error for continuous ones.
// Both losses are k-fold: fold k of the original is scored by a learner fitted
// on the original rows outside fold k (baseline) and by one fitted on the
// synthetic rows outside synthetic fold k.
EfficacyEntry ml_efficacy(const DataTable& original, const DataTable& synthetic,
                          std::string_view target, const EfficacyOptions& options = {});

}  // namespace dagsynth
