#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "dagsynth/table.hpp"

namespace dagsynth {

// Mixture-mode normalization. A value v is assigned to the mode k with the
// highest posterior and represented as (u, one-hot(k)) with
// u = clamp((v - mean_k) / (4 std_k), -1, 1).
struct ContinuousEncoder {
  std::vector<double> means;
  std::vector<double> stds;
  std::vector<double> weights;

  std::size_t n_modes() const noexcept { return means.size(); }
  std::size_t width() const noexcept { return 1 + means.size(); }
  std::size_t assign_mode(double value) const;
  double normalize(double value, std::size_t mode) const;
  double denormalize(double u, std::size_t mode) const;

  friend bool operator==(const ContinuousEncoder&, const ContinuousEncoder&) = default;
};

struct CategoricalEncoder {
  std::vector<std::string> categories;
  double smoothing = 0.0;  // uniform noise magnitude in [0, 0.5)

  std::size_t width() const noexcept { return categories.size(); }

  friend bool operator==(const CategoricalEncoder&, const CategoricalEncoder&) = default;
};

using VariableEncoder = std::variant<ContinuousEncoder, CategoricalEncoder>;

std::size_t encoded_width(const VariableEncoder& encoder);

class EncoderSet {
 public:
  EncoderSet() = default;

  void add(std::string name, VariableEncoder encoder);

  const std::vector<std::pair<std::string, VariableEncoder>>& entries() const noexcept {
    return entries_;
  }
  bool contains(std::string_view name) const;
  const VariableEncoder& at(std::string_view name) const;
  std::size_t width(std::string_view name) const;
  std::size_t total_width(std::span<const std::string> names) const;
  std::vector<std::string> names() const;

  friend bool operator==(const EncoderSet&, const EncoderSet&) = default;

 private:
  std::vector<std::pair<std::string, VariableEncoder>> entries_;
};

nlohmann::json to_json(const EncoderSet& encoders);
EncoderSet encoders_from_json(const nlohmann::json& j);

struct EncoderOptions {
  std::size_t n_modes = 5;
  double smoothing = 0.2;
  std::uint64_t seed = 0;
};

// Gaussian mixture fitted by EM with quantile initialization. Modes whose
// weight falls under 1e-3 are pruned. A constant column yields a single mode.
ContinuousEncoder fit_continuous(std::span<const double> values, std::size_t n_modes,
                                 std::uint64_t seed,
                                 std::optional<std::pair<double, double>> bounds = std::nullopt,
                                 bool* degenerate = nullptr);

// Fits one encoder per schema variable. Degenerate (constant) continuous
// columns are reported through `warnings` instead of failing.
EncoderSet fit_encoders(const DataTable& table, const EncoderOptions& options,
                        std::vector<std::string>* warnings = nullptr);

// Encodes the named variables (all encoder variables when `names` is empty)
// in the given order. Categorical smoothing noise is only applied when an
// RNG is supplied; without one the encoding is an exact one-hot.
Eigen::MatrixXd encode(const DataTable& table, const EncoderSet& encoders,
                       std::span<const std::string> names = {},
                       std::mt19937_64* smoothing_rng = nullptr);
Eigen::MatrixXd encode_rows(const DataTable& table, const EncoderSet& encoders,
                            std::span<const std::string> names,
                            std::span<const std::size_t> rows,
                            std::mt19937_64* smoothing_rng = nullptr);

DataTable decode(const Eigen::MatrixXd& matrix, const EncoderSet& encoders,
                 std::span<const std::string> names = {});

}  // namespace dagsynth
