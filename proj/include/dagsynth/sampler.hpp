#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>

#include "dagsynth/model.hpp"
#include "dagsynth/table.hpp"

namespace dagsynth {

struct SampleOptions {
  std::uint64_t seed = 0;
  // Rows per generator pass; chunk i draws its noise from a seed derived from (seed, i).
  std::size_t chunk_size = 10000;
};

// One row per ci_source row, columns in feeder schema order. Conditional
// inputs are copied from ci_source; the rest are generated.
DataTable sample(const ModelCheckpoint& model, const DataTable& ci_source,
                 const SampleOptions& options);

// For models without conditional inputs.
DataTable sample_unconditional(const ModelCheckpoint& model, std::size_t n_rows,
                               const SampleOptions& options);

// Every distributor column followed by the generated variables.
DataTable complete(const ModelCheckpoint& model, const DataTable& distributor,
                   const SampleOptions& options);

struct StreamStats {
  std::size_t rows_written = 0;
  std::size_t chunks = 0;
  // Largest number of rows (raw distributor + generated) held at once.
  std::size_t peak_rows_in_memory = 0;
};

// Streaming completion of a distributor CSV. Distributor fields, including
// the conditional inputs, are written back exactly as read.
StreamStats complete_csv(const ModelCheckpoint& model, std::istream& distributor,
                         std::ostream& out, const SampleOptions& options);

// Draws targets[s] rows with replacement from the feeder rows of stratum s
// (matched on the cell label of `strata_var`). Strata are emitted in key order.
DataTable oversample_baseline(const DataTable& feeder, std::string_view strata_var,
                              const std::map<std::string, std::size_t>& targets,
                              std::uint64_t seed);

}  // namespace dagsynth
