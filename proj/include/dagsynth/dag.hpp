#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dagsynth/table.hpp"

namespace dagsynth {

struct Dag {
  std::vector<std::string> nodes;
  std::vector<std::pair<std::string, std::string>> edges;

  friend bool operator==(const Dag&, const Dag&) = default;
};

// Contents of a DAG file: {"edges": [[from, to], ...], "conditional_inputs": [...]}.
// An optional "nodes" array declares variables that have no edges.
struct DagSpec {
  Dag dag;
  std::vector<std::string> conditional_inputs;

  friend bool operator==(const DagSpec&, const DagSpec&) = default;
};

DagSpec dag_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DagSpec& spec);
DagSpec load_dag_spec(const std::filesystem::path& path);

enum class DiagnosticKind { kCycleDetected, kUnknownNode, kDuplicateEdge, kSelfLoop, kMissingVariable };

struct Diagnostic {
  DiagnosticKind kind;
  std::string message;
  std::vector<std::string> witness;  // node names (cycle witness or offending names)
};

// Reports every problem found; never throws.
std::vector<Diagnostic> validate(const Dag& dag, const TableSchema& schema);

// A cycle as a closed walk [a, b, ..., a], if the graph has one.
std::optional<std::vector<std::string>> find_cycle(const Dag& dag);

// Makes every conditional input a source node by reversing the edges that
// point into it. Duplicate edges produced by the reversal are merged.
// Throws Error(kReversalCycle) when no acyclic orientation results; an edge
// between two conditional inputs can never be oriented away from both.
Dag apply_conditional_inputs(const Dag& dag, std::span<const std::string> conditional_inputs);

// Kahn topological order; ties go to the lowest schema column index.
std::vector<std::string> linearize(const Dag& dag, const TableSchema& schema);

enum class NodeRole { kConditionalInput, kGenerated };

struct GraphNode {
  std::string name;
  NodeRole role = NodeRole::kGenerated;
  std::vector<std::size_t> predecessors;   // positions of direct parents
  std::vector<std::size_t> attention_set;  // ancestors minus direct parents

  friend bool operator==(const GraphNode&, const GraphNode&) = default;
};

// The DAG after conditional-input modification, in linearized order. A
// node's index in `nodes` is its position t.
struct GeneratorGraph {
  std::vector<GraphNode> nodes;

  std::size_t size() const noexcept { return nodes.size(); }
  std::optional<std::size_t> position(std::string_view name) const;
  std::vector<std::string> order() const;
  std::vector<std::string> generated() const;
  std::vector<std::string> conditional_inputs() const;

  friend bool operator==(const GeneratorGraph&, const GeneratorGraph&) = default;
};

nlohmann::json to_json(const GeneratorGraph& graph);

// Validates, applies the conditional-input modification and annotates every
// node with its parents and attention set. Validation problems are thrown as
// Error with the first diagnostic.
GeneratorGraph build_graph(const Dag& dag, std::span<const std::string> conditional_inputs,
                           const TableSchema& schema);

}  // namespace dagsynth
