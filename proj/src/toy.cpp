#include "dagsynth/toy.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace dagsynth {

namespace {

std::vector<std::string> labels(const std::string& prefix, int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(prefix + std::to_string(i));
  }
  return out;
}

}  // namespace

DataTable make_label_noise_toy(std::size_t n_rows, std::uint64_t seed) {
  TableSchema schema({{"x", VariableKind::kCategorical, labels("c", 5), std::nullopt},
                      {"y", VariableKind::kCategorical, labels("c", 5), std::nullopt},
                      {"z", VariableKind::kCategorical, {"high", "low"}, std::nullopt}});
  DataTable table(schema, n_rows);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> category(0, 4);
  std::uniform_int_distribution<int> other(1, 4);
  std::bernoulli_distribution keep(0.9);
  for (std::size_t r = 0; r < n_rows; ++r) {
    const int x = category(rng);
    const int y = keep(rng) ? x : (x + other(rng)) % 5;
    table.codes(0)[r] = x;
    table.codes(1)[r] = y;
    table.codes(2)[r] = y <= 1 ? 0 : 1;
  }
  return table;
}

DagSpec label_noise_toy_dag() {
  DagSpec spec;
  spec.dag.nodes = {"x", "y", "z"};
  spec.dag.edges = {{"x", "y"}, {"y", "z"}};
  spec.conditional_inputs = {"x"};
  return spec;
}

DataTable make_population_toy(std::size_t n_rows, std::uint64_t seed) {
  TableSchema schema({
      {"region", VariableKind::kCategorical, {"north", "south", "east", "west"}, std::nullopt},
      {"age", VariableKind::kContinuous, {}, std::make_pair(0.0, 100.0)},
      {"gender", VariableKind::kCategorical, {"F", "M"}, std::nullopt},
      {"hh_size", VariableKind::kCategorical, {"1", "2", "3", "4", "5+"}, std::nullopt},
      {"hh_vehicles", VariableKind::kCategorical, {"0", "1", "2", "3+"}, std::nullopt},
      {"hh_income", VariableKind::kContinuous, {}, std::nullopt},
      {"ethnicity", VariableKind::kCategorical, {"a", "b", "c"}, std::nullopt},
  });
  DataTable table(schema, n_rows);
  std::mt19937_64 rng(seed);
  std::discrete_distribution<int> region({0.3, 0.3, 0.2, 0.2});
  std::bernoulli_distribution female(0.5);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t r = 0; r < n_rows; ++r) {
    const int reg = region(rng);
    const double age = std::clamp(40.0 + 6.0 * reg + 18.0 * noise(rng), 0.0, 100.0);
    const int size = std::clamp(static_cast<int>(std::lround(2.6 - 0.02 * (age - 40.0) +
                                                             1.1 * noise(rng))) - 1,
                                0, 4);
    const double income = std::exp(10.3 + 0.15 * size + 0.1 * reg + 0.4 * noise(rng));
    const int vehicles =
        std::clamp(static_cast<int>(std::lround(0.3 * size + (income - 40000.0) / 40000.0 +
                                                0.6 * noise(rng) + 0.5 - 0.3 * reg)),
                   0, 3);
    std::discrete_distribution<int> ethnicity(
        {0.6 - 0.1 * reg, 0.25 + 0.05 * reg, 0.15 + 0.05 * reg});
    table.codes(0)[r] = reg;
    table.continuous(1)[r] = std::round(age);
    table.codes(2)[r] = female(rng) ? 0 : 1;
    table.codes(3)[r] = size;
    table.codes(4)[r] = vehicles;
    table.continuous(5)[r] = std::round(income);
    table.codes(6)[r] = ethnicity(rng);
  }
  return table;
}

DagSpec population_toy_dag() {
  DagSpec spec;
  spec.dag.nodes = {"region", "age", "gender", "hh_size", "hh_vehicles", "hh_income", "ethnicity"};
  spec.dag.edges = {{"age", "hh_size"},
                    {"region", "hh_income"},    {"hh_size", "hh_income"},
                    {"hh_income", "hh_vehicles"}, {"hh_size", "hh_vehicles"},
                    {"region", "ethnicity"},    {"age", "ethnicity"},
                    {"gender", "hh_size"}};
  spec.conditional_inputs = {"age", "gender", "region"};
  return spec;
}

}  // namespace dagsynth
