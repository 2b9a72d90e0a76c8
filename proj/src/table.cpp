#include "dagsynth/table.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "dagsynth/csv.hpp"
#include "dagsynth/errors.hpp"

namespace dagsynth {
namespace {

void validate_variable(const VariableSpec& v) {
  if (v.name.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "variable with empty name");
  }
  if (v.is_categorical()) {
    if (v.categories.size() < 2) {
      throw Error(ErrorCode::kInvalidArgument,
                  "categorical variable '" + v.name + "' needs at least 2 categories");
    }
    std::unordered_set<std::string> seen;
    for (const auto& c : v.categories) {
      if (!seen.insert(c).second) {
        throw Error(ErrorCode::kInvalidArgument,
                    "duplicate category '" + c + "' in variable '" + v.name + "'");
      }
    }
    if (v.bounds) {
      throw Error(ErrorCode::kInvalidArgument,
                  "bounds given for categorical variable '" + v.name + "'");
    }
  } else {
    if (!v.categories.empty()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "categories given for continuous variable '" + v.name + "'");
    }
    if (v.bounds && !(v.bounds->first < v.bounds->second)) {
      throw Error(ErrorCode::kInvalidArgument, "bounds of '" + v.name + "' need min < max");
    }
  }
}

std::size_t column_size(const Column& c) {
  return std::visit([](const auto& v) { return v.size(); }, c);
}

Column empty_column(const VariableSpec& v, std::size_t n) {
  if (v.is_categorical()) {
    return std::vector<std::int32_t>(n, 0);
  }
  return std::vector<double>(n, 0.0);
}

}  // namespace

std::string_view to_string(VariableKind kind) {
  return kind == VariableKind::kCategorical ? "categorical" : "continuous";
}

std::optional<std::int32_t> VariableSpec::category_code(std::string_view label) const {
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (categories[i] == label) {
      return static_cast<std::int32_t>(i);
    }
  }
  return std::nullopt;
}

TableSchema::TableSchema(std::vector<VariableSpec> variables) : variables_(std::move(variables)) {
  std::unordered_set<std::string> names;
  for (const auto& v : variables_) {
    validate_variable(v);
    if (!names.insert(v.name).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate variable name '" + v.name + "'");
    }
  }
}

std::optional<std::size_t> TableSchema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < variables_.size(); ++i) {
    if (variables_[i].name == name) {
      return i;
    }
  }
  return std::nullopt;
}

const VariableSpec& TableSchema::at(std::string_view name) const {
  auto idx = index_of(name);
  if (!idx) {
    throw Error(ErrorCode::kUnknownVariable, std::string(name));
  }
  return variables_[*idx];
}

std::vector<std::string> TableSchema::names() const {
  std::vector<std::string> out;
  out.reserve(variables_.size());
  for (const auto& v : variables_) {
    out.push_back(v.name);
  }
  return out;
}

TableSchema TableSchema::select(std::span<const std::string> names) const {
  std::vector<VariableSpec> vars;
  vars.reserve(names.size());
  for (const auto& n : names) {
    vars.push_back(at(n));
  }
  return TableSchema(std::move(vars));
}

nlohmann::json to_json(const TableSchema& schema) {
  nlohmann::json vars = nlohmann::json::array();
  for (const auto& v : schema.variables()) {
    nlohmann::json j;
    j["name"] = v.name;
    j["kind"] = std::string(to_string(v.kind));
    if (v.is_categorical()) {
      j["categories"] = v.categories;
    }
    if (v.bounds) {
      j["bounds"] = {v.bounds->first, v.bounds->second};
    }
    vars.push_back(std::move(j));
  }
  return nlohmann::json{{"variables", std::move(vars)}};
}

TableSchema schema_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("variables") || !j["variables"].is_array()) {
    throw Error(ErrorCode::kInvalidArgument, "schema needs a \"variables\" array");
  }
  std::vector<VariableSpec> vars;
  for (const auto& jv : j["variables"]) {
    VariableSpec v;
    v.name = jv.at("name").get<std::string>();
    const auto kind = jv.at("kind").get<std::string>();
    if (kind == "categorical") {
      v.kind = VariableKind::kCategorical;
    } else if (kind == "continuous") {
      v.kind = VariableKind::kContinuous;
    } else {
      throw Error(ErrorCode::kInvalidArgument, "unknown kind '" + kind + "' for " + v.name);
    }
    if (jv.contains("categories")) {
      for (const auto& c : jv["categories"]) {
        v.categories.push_back(c.is_string() ? c.get<std::string>() : c.dump());
      }
    }
    if (jv.contains("bounds") && !jv["bounds"].is_null()) {
      const auto& b = jv["bounds"];
      if (!b.is_array() || b.size() != 2) {
        throw Error(ErrorCode::kInvalidArgument, "bounds of " + v.name + " must be [min,max]");
      }
      v.bounds = std::make_pair(b[0].get<double>(), b[1].get<double>());
    }
    vars.push_back(std::move(v));
  }
  return TableSchema(std::move(vars));
}

TableSchema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kIoError, "cannot open schema file " + path.string());
  }
  try {
    return schema_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, "schema " + path.string() + ": " + e.what());
  }
}

DataTable::DataTable(TableSchema schema, std::size_t n_rows)
    : schema_(std::move(schema)), n_rows_(n_rows) {
  columns_.reserve(schema_.size());
  for (const auto& v : schema_.variables()) {
    columns_.push_back(empty_column(v, n_rows));
  }
}

DataTable::DataTable(TableSchema schema, std::vector<Column> columns)
    : schema_(std::move(schema)), columns_(std::move(columns)) {
  if (columns_.size() != schema_.size()) {
    throw Error(ErrorCode::kShapeMismatch, "column count does not match schema");
  }
  n_rows_ = columns_.empty() ? 0 : column_size(columns_.front());
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    const auto& v = schema_[i];
    if (column_size(columns_[i]) != n_rows_) {
      throw Error(ErrorCode::kShapeMismatch, "columns of unequal length");
    }
    if (v.is_categorical()) {
      const auto* codes = std::get_if<std::vector<std::int32_t>>(&columns_[i]);
      if (!codes) {
        throw Error(ErrorCode::kTypeMismatch, "column '" + v.name + "' must hold category codes");
      }
      for (std::size_t r = 0; r < codes->size(); ++r) {
        const auto c = (*codes)[r];
        if (c < 0 || static_cast<std::size_t>(c) >= v.categories.size()) {
          throw Error(ErrorCode::kUnknownCategory, "code " + std::to_string(c) + " at row " +
                                                       std::to_string(r) + ", column '" + v.name +
                                                       "'");
        }
      }
    } else if (!std::holds_alternative<std::vector<double>>(columns_[i])) {
      throw Error(ErrorCode::kTypeMismatch, "column '" + v.name + "' must hold numbers");
    }
  }
}

DataTable DataTable::rows_only(std::size_t n_rows) {
  DataTable t;
  t.n_rows_ = n_rows;
  return t;
}

const Column& DataTable::column(std::string_view name) const {
  auto idx = schema_.index_of(name);
  if (!idx) {
    throw Error(ErrorCode::kUnknownVariable, std::string(name));
  }
  return columns_[*idx];
}

const std::vector<double>& DataTable::continuous(std::size_t col) const {
  return std::get<std::vector<double>>(columns_.at(col));
}
std::vector<double>& DataTable::continuous(std::size_t col) {
  return std::get<std::vector<double>>(columns_.at(col));
}
const std::vector<std::int32_t>& DataTable::codes(std::size_t col) const {
  return std::get<std::vector<std::int32_t>>(columns_.at(col));
}
std::vector<std::int32_t>& DataTable::codes(std::size_t col) {
  return std::get<std::vector<std::int32_t>>(columns_.at(col));
}

std::string DataTable::cell_text(std::size_t row, std::size_t col) const {
  const auto& v = schema_[col];
  if (v.is_categorical()) {
    return v.categories[static_cast<std::size_t>(codes(col)[row])];
  }
  return format_double(continuous(col)[row]);
}

double DataTable::numeric(std::size_t row, std::size_t col) const {
  if (schema_[col].is_categorical()) {
    return static_cast<double>(codes(col)[row]);
  }
  return continuous(col)[row];
}

DataTable DataTable::select_rows(std::span<const std::size_t> rows) const {
  std::vector<Column> out;
  out.reserve(columns_.size());
  for (const auto& c : columns_) {
    out.push_back(std::visit(
        [&](const auto& values) -> Column {
          std::remove_cvref_t<decltype(values)> picked;
          picked.reserve(rows.size());
          for (std::size_t r : rows) {
            picked.push_back(values.at(r));
          }
          return picked;
        },
        c));
  }
  if (columns_.empty()) {
    return rows_only(rows.size());
  }
  DataTable t;
  t.schema_ = schema_;
  t.columns_ = std::move(out);
  t.n_rows_ = rows.size();
  return t;
}

DataTable DataTable::select_columns(std::span<const std::string> names) const {
  TableSchema sub = schema_.select(names);
  std::vector<Column> cols;
  cols.reserve(names.size());
  for (const auto& n : names) {
    cols.push_back(column(n));
  }
  if (cols.empty()) {
    return rows_only(n_rows_);
  }
  return DataTable(std::move(sub), std::move(cols));
}

DataTable DataTable::join_columns(const DataTable& other) const {
  if (other.n_rows_ != n_rows_) {
    throw Error(ErrorCode::kShapeMismatch, "join_columns: row counts differ");
  }
  std::vector<VariableSpec> vars = schema_.variables();
  for (const auto& v : other.schema_.variables()) {
    if (schema_.contains(v.name)) {
      throw Error(ErrorCode::kSchemaMismatch, "column name collision on '" + v.name + "'");
    }
    vars.push_back(v);
  }
  std::vector<Column> cols = columns_;
  cols.insert(cols.end(), other.columns_.begin(), other.columns_.end());
  if (cols.empty()) {
    return rows_only(n_rows_);
  }
  return DataTable(TableSchema(std::move(vars)), std::move(cols));
}

void DataTable::append_rows(const DataTable& other) {
  if (!(other.schema_ == schema_)) {
    throw Error(ErrorCode::kSchemaMismatch, "append_rows: schemas differ");
  }
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    std::visit(
        [&](auto& dst) {
          const auto& src = std::get<std::remove_cvref_t<decltype(dst)>>(other.columns_[i]);
          dst.insert(dst.end(), src.begin(), src.end());
        },
        columns_[i]);
  }
  n_rows_ += other.n_rows_;
}

DataTable read_csv(std::istream& in, const TableSchema& schema) {
  CsvReader reader(in);
  std::vector<std::string> header;
  if (!reader.read_row(header)) {
    throw Error(ErrorCode::kEmptyTable, "missing header row");
  }
  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < header.size(); ++i) {
    position.emplace(header[i], i);
  }
  std::vector<std::size_t> source(schema.size());
  for (std::size_t c = 0; c < schema.size(); ++c) {
    auto it = position.find(schema[c].name);
    if (it == position.end()) {
      throw Error(ErrorCode::kMissingColumn, schema[c].name);
    }
    source[c] = it->second;
  }

  std::vector<Column> cols;
  for (const auto& v : schema.variables()) {
    cols.push_back(empty_column(v, 0));
  }
  std::vector<std::string> fields;
  std::size_t n_rows = 0;
  while (reader.read_row(fields)) {
    if (fields.size() == 1 && fields[0].empty()) {
      continue;  // blank line
    }
    const std::size_t row = n_rows;  // 0-based data row index
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::kTypeMismatch, "row " + std::to_string(row) + " has " +
                                                std::to_string(fields.size()) + " fields, expected " +
                                                std::to_string(header.size()));
    }
    for (std::size_t c = 0; c < schema.size(); ++c) {
      const auto& v = schema[c];
      const std::string& cell = fields[source[c]];
      if (cell.empty()) {
        throw Error(ErrorCode::kTypeMismatch,
                    "missing value at row " + std::to_string(row) + ", column '" + v.name + "'");
      }
      if (v.is_categorical()) {
        auto code = v.category_code(cell);
        if (!code) {
          throw Error(ErrorCode::kUnknownCategory, "value '" + cell + "' at row " +
                                                       std::to_string(row) + ", column '" +
                                                       v.name + "'");
        }
        std::get<std::vector<std::int32_t>>(cols[c]).push_back(*code);
      } else {
        double value = 0.0;
        if (!parse_double(cell, value)) {
          throw Error(ErrorCode::kTypeMismatch, "cannot parse '" + cell + "' as a number at row " +
                                                    std::to_string(row) + ", column '" + v.name +
                                                    "'");
        }
        std::get<std::vector<double>>(cols[c]).push_back(value);
      }
    }
    ++n_rows;
  }
  if (n_rows == 0) {
    throw Error(ErrorCode::kEmptyTable, "no data rows");
  }
  if (cols.empty()) {
    return DataTable::rows_only(n_rows);
  }
  return DataTable(schema, std::move(cols));
}

DataTable ingest_csv(const std::filesystem::path& path, const TableSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  }
  return read_csv(in, schema);
}

void write_csv(const DataTable& table, std::ostream& out) {
  std::vector<std::string> fields = table.schema().names();
  write_csv_row(out, fields);
  for (std::size_t r = 0; r < table.n_rows(); ++r) {
    for (std::size_t c = 0; c < table.n_cols(); ++c) {
      fields[c] = table.cell_text(r, c);
    }
    write_csv_row(out, fields);
  }
}

void write_csv(const DataTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  }
  write_csv(table, out);
}

std::vector<std::string> read_csv_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  }
  CsvReader reader(in);
  std::vector<std::string> header;
  if (!reader.read_row(header)) {
    throw Error(ErrorCode::kEmptyTable, path.string() + " has no header row");
  }
  return header;
}

TableSchema infer_schema(std::span<const std::filesystem::path> paths) {
  std::vector<std::string> header;
  std::vector<bool> numeric;
  std::vector<std::vector<std::string>> labels;
  std::vector<std::unordered_set<std::string>> seen;
  for (const auto& path : paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
      throw Error(ErrorCode::kIoError, "cannot open " + path.string());
    }
    CsvReader reader(in);
    std::vector<std::string> h;
    if (!reader.read_row(h)) {
      throw Error(ErrorCode::kEmptyTable, path.string() + " has no header row");
    }
    if (header.empty()) {
      header = h;
      numeric.assign(h.size(), true);
      labels.resize(h.size());
      seen.resize(h.size());
    } else if (std::set<std::string>(h.begin(), h.end()) !=
               std::set<std::string>(header.begin(), header.end())) {
      throw Error(ErrorCode::kSchemaMismatch, path.string() + " has different columns");
    }
    std::vector<std::size_t> map(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
      map[i] = static_cast<std::size_t>(std::find(header.begin(), header.end(), h[i]) -
                                        header.begin());
    }
    std::vector<std::string> fields;
    while (reader.read_row(fields)) {
      if (fields.size() == 1 && fields[0].empty()) {
        continue;
      }
      for (std::size_t i = 0; i < fields.size() && i < h.size(); ++i) {
        const std::size_t c = map[i];
        double dummy = 0.0;
        if (numeric[c] && !parse_double(fields[i], dummy)) {
          numeric[c] = false;
        }
        if (seen[c].insert(fields[i]).second) {
          labels[c].push_back(fields[i]);
        }
      }
    }
  }
  std::vector<VariableSpec> vars;
  for (std::size_t c = 0; c < header.size(); ++c) {
    VariableSpec v;
    v.name = header[c];
    if (numeric[c] && labels[c].size() > 1) {
      v.kind = VariableKind::kContinuous;
    } else {
      v.kind = VariableKind::kCategorical;
      v.categories = labels[c];
      if (v.categories.size() < 2) {
        v.categories.push_back(v.categories.empty() ? "<none>" : "<other>");
      }
    }
    vars.push_back(std::move(v));
  }
  return TableSchema(std::move(vars));
}

}  // namespace dagsynth
