#include "dagsynth/sampler.hpp"

#include <algorithm>
#include <random>
#include <unordered_map>
#include <vector>

#include "dagsynth/csv.hpp"
#include "dagsynth/encoding.hpp"
#include "dagsynth/errors.hpp"
#include "dagsynth/seeding.hpp"

namespace dagsynth {

namespace {

std::size_t checked_chunk(const SampleOptions& options) {
  if (options.chunk_size == 0) {
    throw Error(ErrorCode::kInvalidArgument, "chunk size must be positive");
  }
  return options.chunk_size;
}

std::string unknown_category_message(std::string_view label, std::string_view column,
                                     std::size_t row) {
  return "value '" + std::string(label) + "' in column '" + std::string(column) + "' (row " +
         std::to_string(row) + ") was not seen in training";
}

// Conditional-input columns of `source` re-expressed under the feeder's
// variable specs (category codes remapped by label).
DataTable conditional_inputs_of(const ModelCheckpoint& model, const DataTable& source) {
  const auto& names = model.dag.conditional_inputs;
  const TableSchema ci_schema = model.schema.select(names);
  std::vector<Column> columns;
  for (const auto& spec : ci_schema.variables()) {
    const auto idx = source.schema().index_of(spec.name);
    if (!idx) {
      throw Error(ErrorCode::kSchemaMismatch,
                  "conditional input '" + spec.name + "' missing from the input table");
    }
    const auto& src_spec = source.schema()[*idx];
    if (src_spec.kind != spec.kind) {
      throw Error(ErrorCode::kSchemaMismatch, "conditional input '" + spec.name + "' is " +
                                                  std::string(to_string(src_spec.kind)) +
                                                  " in the input but " +
                                                  std::string(to_string(spec.kind)) +
                                                  " in the model");
    }
    if (!spec.is_categorical()) {
      columns.emplace_back(source.continuous(*idx));
      continue;
    }
    const auto& src_codes = source.codes(*idx);
    std::vector<std::int32_t> remap(src_spec.categories.size(), -1);
    for (std::size_t c = 0; c < src_spec.categories.size(); ++c) {
      if (auto code = spec.category_code(src_spec.categories[c])) {
        remap[c] = *code;
      }
    }
    std::vector<std::int32_t> codes(src_codes.size());
    for (std::size_t r = 0; r < src_codes.size(); ++r) {
      codes[r] = remap[static_cast<std::size_t>(src_codes[r])];
      if (codes[r] < 0) {
        throw Error(ErrorCode::kUnknownCategory,
                    unknown_category_message(
                        src_spec.categories[static_cast<std::size_t>(src_codes[r])], spec.name, r));
      }
    }
    columns.emplace_back(std::move(codes));
  }
  if (columns.empty()) {
    return DataTable(ci_schema, source.n_rows());
  }
  return DataTable(ci_schema, std::move(columns));
}

// Generated variables for one chunk of conditional inputs.
DataTable generate_chunk(const ModelCheckpoint& model, const Generator& generator,
                         const DataTable& ci_chunk, std::uint64_t seed) {
  const auto n = static_cast<Eigen::Index>(ci_chunk.n_rows());
  const auto& names = generator.generated_names();
  const TableSchema schema = model.schema.select(names);
  if (n == 0) {
    return DataTable(schema, 0);
  }
  std::mt19937_64 rng(seed);
  const NoiseBatch noise = generator.draw_noise(n, rng);
  const auto& ci_names = generator.ci_names();
  const Eigen::MatrixXd ci = ci_names.empty() ? Eigen::MatrixXd(n, 0)
                                              : encode(ci_chunk, model.encoders, ci_names);
  const DataTable decoded = decode(generator.generate(noise, ci), model.encoders, names);
  std::vector<Column> columns;
  for (std::size_t c = 0; c < decoded.n_cols(); ++c) {
    columns.push_back(decoded.column(c));
  }
  return DataTable(schema, std::move(columns));
}

std::vector<std::size_t> row_range(std::size_t start, std::size_t end) {
  std::vector<std::size_t> rows(end - start);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i] = start + i;
  }
  return rows;
}

// Generated variables for every row of `ci`, chunk by chunk.
DataTable generate_all(const ModelCheckpoint& model, const DataTable& ci,
                       const SampleOptions& options) {
  const std::size_t chunk = checked_chunk(options);
  const Generator generator = model.make_generator();
  DataTable out(model.schema.select(generator.generated_names()), 0);
  for (std::size_t start = 0, i = 0; start < ci.n_rows(); start += chunk, ++i) {
    const auto rows = row_range(start, std::min(ci.n_rows(), start + chunk));
    out.append_rows(generate_chunk(model, generator, ci.select_rows(rows),
                                   derive_seed(options.seed, i)));
  }
  return out;
}

void check_no_collision(const ModelCheckpoint& model, std::span<const std::string> columns) {
  const auto graph_generated = model.graph.generated();
  for (const auto& name : columns) {
    if (std::find(graph_generated.begin(), graph_generated.end(), name) !=
        graph_generated.end()) {
      throw Error(ErrorCode::kSchemaMismatch, "distributor column '" + name +
                                                  "' collides with a generated variable");
    }
  }
}

}  // namespace

DataTable sample(const ModelCheckpoint& model, const DataTable& ci_source,
                 const SampleOptions& options) {
  const DataTable ci = conditional_inputs_of(model, ci_source);
  const DataTable generated = generate_all(model, ci, options);
  const DataTable joined = ci.n_cols() == 0 ? generated : ci.join_columns(generated);
  const auto order = model.schema.names();
  return joined.select_columns(order);
}

DataTable sample_unconditional(const ModelCheckpoint& model, std::size_t n_rows,
                               const SampleOptions& options) {
  if (!model.dag.conditional_inputs.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "model has conditional inputs; sample it from a conditional-input table");
  }
  return sample(model, DataTable::rows_only(n_rows), options);
}

DataTable complete(const ModelCheckpoint& model, const DataTable& distributor,
                   const SampleOptions& options) {
  const auto names = distributor.schema().names();
  check_no_collision(model, names);
  const DataTable ci = conditional_inputs_of(model, distributor);
  return distributor.join_columns(generate_all(model, ci, options));
}

StreamStats complete_csv(const ModelCheckpoint& model, std::istream& distributor,
                         std::ostream& out, const SampleOptions& options) {
  const std::size_t chunk = checked_chunk(options);
  CsvReader reader(distributor);
  std::vector<std::string> header;
  if (!reader.read_row(header)) {
    throw Error(ErrorCode::kEmptyTable, "distributor CSV has no header row");
  }
  check_no_collision(model, header);

  const auto& ci_names = model.dag.conditional_inputs;
  const TableSchema ci_schema = model.schema.select(ci_names);
  std::vector<std::size_t> ci_fields;
  for (const auto& name : ci_names) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw Error(ErrorCode::kSchemaMismatch,
                  "conditional input '" + name + "' missing from the distributor");
    }
    ci_fields.push_back(static_cast<std::size_t>(it - header.begin()));
  }

  const Generator generator = model.make_generator();
  std::vector<std::string> out_header = header;
  for (const auto& name : generator.generated_names()) {
    out_header.push_back(name);
  }
  write_csv_row(out, out_header);

  StreamStats stats;
  std::vector<std::vector<std::string>> raw;
  raw.reserve(chunk);
  std::size_t data_row = 0;

  auto flush = [&] {
    if (raw.empty()) {
      return;
    }
    DataTable ci(ci_schema, raw.size());
    for (std::size_t c = 0; c < ci_fields.size(); ++c) {
      const auto& spec = ci_schema[c];
      for (std::size_t r = 0; r < raw.size(); ++r) {
        const std::string& field = raw[r][ci_fields[c]];
        const std::size_t row = data_row - raw.size() + r;
        if (spec.is_categorical()) {
          const auto code = spec.category_code(field);
          if (!code) {
            throw Error(ErrorCode::kUnknownCategory,
                        unknown_category_message(field, spec.name, row));
          }
          ci.codes(c)[r] = *code;
        } else if (!parse_double(field, ci.continuous(c)[r])) {
          throw Error(ErrorCode::kTypeMismatch, "row " + std::to_string(row) + ", column '" +
                                                    spec.name + "': '" + field +
                                                    "' is not a number");
        }
      }
    }
    const DataTable generated =
        generate_chunk(model, generator, ci, derive_seed(options.seed, stats.chunks));
    stats.peak_rows_in_memory =
        std::max(stats.peak_rows_in_memory, raw.size() + generated.n_rows());
    std::vector<std::string> fields;
    for (std::size_t r = 0; r < raw.size(); ++r) {
      fields = raw[r];
      for (std::size_t c = 0; c < generated.n_cols(); ++c) {
        fields.push_back(generated.cell_text(r, c));
      }
      write_csv_row(out, fields);
    }
    stats.rows_written += raw.size();
    ++stats.chunks;
    raw.clear();
  };

  std::vector<std::string> fields;
  while (reader.read_row(fields)) {
    if (fields.size() == 1 && fields[0].empty()) {
      continue;
    }
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::kSchemaMismatch,
                  "row " + std::to_string(data_row) + " has " + std::to_string(fields.size()) +
                      " fields, header has " + std::to_string(header.size()));
    }
    raw.push_back(fields);
    ++data_row;
    stats.peak_rows_in_memory = std::max(stats.peak_rows_in_memory, raw.size());
    if (raw.size() == chunk) {
      flush();
    }
  }
  flush();
  if (!out) {
    throw Error(ErrorCode::kIoError, "failed writing completed rows");
  }
  return stats;
}

DataTable oversample_baseline(const DataTable& feeder, std::string_view strata_var,
                              const std::map<std::string, std::size_t>& targets,
                              std::uint64_t seed) {
  const auto col = feeder.schema().index_of(strata_var);
  if (!col) {
    throw Error(ErrorCode::kUnknownVariable,
                "stratum variable '" + std::string(strata_var) + "' not in the feeder");
  }
  std::unordered_map<std::string, std::vector<std::size_t>> members;
  for (std::size_t r = 0; r < feeder.n_rows(); ++r) {
    members[feeder.cell_text(r, *col)].push_back(r);
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> picked;
  for (const auto& [stratum, count] : targets) {
    if (count == 0) {
      continue;
    }
    const auto it = members.find(stratum);
    if (it == members.end()) {
      throw Error(ErrorCode::kEmptyStratum,
                  "stratum '" + stratum + "' has no feeder rows to oversample");
    }
    std::uniform_int_distribution<std::size_t> pick(0, it->second.size() - 1);
    for (std::size_t k = 0; k < count; ++k) {
      picked.push_back(it->second[pick(rng)]);
    }
  }
  return feeder.select_rows(picked);
}

}  // namespace dagsynth
