#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

namespace dagsynth {

enum class VariableKind { kContinuous, kCategorical };

std::string_view to_string(VariableKind kind);

struct VariableSpec {
  std::string name;
  VariableKind kind = VariableKind::kContinuous;
  std::vector<std::string> categories;             // categorical only
  std::optional<std::pair<double, double>> bounds;  // continuous only

  bool is_categorical() const noexcept { return kind == VariableKind::kCategorical; }
  std::optional<std::int32_t> category_code(std::string_view label) const;

  friend bool operator==(const VariableSpec&, const VariableSpec&) = default;
};

// Ordered variable list; the order is the canonical column order.
class TableSchema {
 public:
  TableSchema() = default;
  explicit TableSchema(std::vector<VariableSpec> variables);

  const std::vector<VariableSpec>& variables() const noexcept { return variables_; }
  std::size_t size() const noexcept { return variables_.size(); }
  bool empty() const noexcept { return variables_.empty(); }

  std::optional<std::size_t> index_of(std::string_view name) const;
  bool contains(std::string_view name) const { return index_of(name).has_value(); }
  const VariableSpec& at(std::string_view name) const;
  const VariableSpec& operator[](std::size_t i) const { return variables_[i]; }
  std::vector<std::string> names() const;

  // Sub-schema with the given variables, in the given order.
  TableSchema select(std::span<const std::string> names) const;

  friend bool operator==(const TableSchema&, const TableSchema&) = default;

 private:
  std::vector<VariableSpec> variables_;
};

nlohmann::json to_json(const TableSchema& schema);
TableSchema schema_from_json(const nlohmann::json& j);
TableSchema load_schema(const std::filesystem::path& path);

// Continuous values or category codes (indices into VariableSpec::categories).
using Column = std::variant<std::vector<double>, std::vector<std::int32_t>>;

class DataTable {
 public:
  DataTable() = default;
  // Zero-filled table (category code 0 for categorical columns).
  DataTable(TableSchema schema, std::size_t n_rows);
  DataTable(TableSchema schema, std::vector<Column> columns);
  // Rows only, no variables. Used as a row-count carrier for unconditional sampling.
  static DataTable rows_only(std::size_t n_rows);

  const TableSchema& schema() const noexcept { return schema_; }
  std::size_t n_rows() const noexcept { return n_rows_; }
  std::size_t n_cols() const noexcept { return columns_.size(); }

  const Column& column(std::size_t col) const { return columns_.at(col); }
  const Column& column(std::string_view name) const;
  const std::vector<double>& continuous(std::size_t col) const;
  std::vector<double>& continuous(std::size_t col);
  const std::vector<std::int32_t>& codes(std::size_t col) const;
  std::vector<std::int32_t>& codes(std::size_t col);

  std::string cell_text(std::size_t row, std::size_t col) const;
  // Numeric view of a cell: the value for continuous, the code for categorical.
  double numeric(std::size_t row, std::size_t col) const;

  DataTable select_rows(std::span<const std::size_t> rows) const;
  DataTable select_columns(std::span<const std::string> names) const;
  // Column-wise join; row counts must agree and names must be disjoint.
  DataTable join_columns(const DataTable& other) const;
  // Appends rows of a table with an identical schema.
  void append_rows(const DataTable& other);

  friend bool operator==(const DataTable&, const DataTable&) = default;

 private:
  TableSchema schema_;
  std::size_t n_rows_ = 0;
  std::vector<Column> columns_;
};

// Reads a CSV with a header row. Columns are matched to the schema by name;
// extra CSV columns are ignored. Any bad cell rejects the table with a
// diagnostic naming the record and column.
DataTable read_csv(std::istream& in, const TableSchema& schema);
DataTable ingest_csv(const std::filesystem::path& path, const TableSchema& schema);

void write_csv(const DataTable& table, std::ostream& out);
void write_csv(const DataTable& table, const std::filesystem::path& path);

// Column kinds inferred from one or more CSV files: a column whose every cell
// parses as a number is continuous, anything else categorical with the union
// of labels in order of first appearance.
TableSchema infer_schema(std::span<const std::filesystem::path> paths);

std::vector<std::string> read_csv_header(const std::filesystem::path& path);

}  // namespace dagsynth
