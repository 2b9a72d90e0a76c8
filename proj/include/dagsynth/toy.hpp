#pragma once

#include <cstddef>
#include <cstdint>

#include "dagsynth/dag.hpp"
#include "dagsynth/table.hpp"

namespace dagsynth {

// x uniform over five labels c0..c4; y copies x with probability 0.9 and is
// otherwise one of the four other labels; z = "high" when y is c0 or c1.
DataTable make_label_noise_toy(std::size_t n_rows, std::uint64_t seed);
// x -> y -> z with x as the conditional input.
DagSpec label_noise_toy_dag();

// Small synthetic population with a region stratum, an individual age and
// gender, household size/vehicles/income and an individual-level ethnicity.
DataTable make_population_toy(std::size_t n_rows, std::uint64_t seed);
DagSpec population_toy_dag();

}  // namespace dagsynth
