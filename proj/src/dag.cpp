#include "dagsynth/dag.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "dagsynth/errors.hpp"

namespace dagsynth {
namespace {

std::string join(const std::vector<std::string>& names, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i > 0) {
      out += sep;
    }
    out += names[i];
  }
  return out;
}

std::unordered_map<std::string, std::size_t> node_index(const Dag& dag) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < dag.nodes.size(); ++i) {
    index.emplace(dag.nodes[i], i);
  }
  return index;
}

ErrorCode error_code_for(DiagnosticKind kind) {
  switch (kind) {
    case DiagnosticKind::kCycleDetected: return ErrorCode::kCycleDetected;
    case DiagnosticKind::kUnknownNode: return ErrorCode::kUnknownNode;
    case DiagnosticKind::kMissingVariable: return ErrorCode::kSchemaMismatch;
    case DiagnosticKind::kDuplicateEdge:
    case DiagnosticKind::kSelfLoop: return ErrorCode::kInvalidArgument;
  }
  return ErrorCode::kInvalidArgument;
}

}  // namespace

DagSpec dag_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) {
    throw Error(ErrorCode::kInvalidArgument, "DAG file must be a JSON object");
  }
  DagSpec spec;
  std::unordered_set<std::string> seen;
  auto add_node = [&](const std::string& n) {
    if (seen.insert(n).second) {
      spec.dag.nodes.push_back(n);
    }
  };
  if (j.contains("nodes")) {
    for (const auto& n : j["nodes"]) {
      add_node(n.get<std::string>());
    }
  }
  if (j.contains("edges")) {
    for (const auto& e : j["edges"]) {
      if (!e.is_array() || e.size() != 2) {
        throw Error(ErrorCode::kInvalidArgument, "each edge must be a [from, to] pair");
      }
      auto from = e[0].get<std::string>();
      auto to = e[1].get<std::string>();
      add_node(from);
      add_node(to);
      spec.dag.edges.emplace_back(std::move(from), std::move(to));
    }
  }
  if (j.contains("conditional_inputs")) {
    spec.conditional_inputs = j["conditional_inputs"].get<std::vector<std::string>>();
  }
  return spec;
}

nlohmann::json to_json(const DagSpec& spec) {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [from, to] : spec.dag.edges) {
    edges.push_back({from, to});
  }
  return nlohmann::json{{"nodes", spec.dag.nodes},
                        {"edges", std::move(edges)},
                        {"conditional_inputs", spec.conditional_inputs}};
}

DagSpec load_dag_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kIoError, "cannot open DAG file " + path.string());
  }
  try {
    return dag_spec_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, "DAG file " + path.string() + ": " + e.what());
  }
}

std::optional<std::vector<std::string>> find_cycle(const Dag& dag) {
  const auto index = node_index(dag);
  const std::size_t n = dag.nodes.size();
  std::vector<std::vector<std::size_t>> out(n);
  for (const auto& [from, to] : dag.edges) {
    auto f = index.find(from);
    auto t = index.find(to);
    if (f != index.end() && t != index.end()) {
      out[f->second].push_back(t->second);
    }
  }
  enum class Color { kWhite, kGray, kBlack };
  std::vector<Color> color(n, Color::kWhite);
  std::vector<std::size_t> path;
  std::vector<std::pair<std::size_t, std::size_t>> stack;
  for (std::size_t root = 0; root < n; ++root) {
    if (color[root] != Color::kWhite) {
      continue;
    }
    stack.emplace_back(root, 0);
    color[root] = Color::kGray;
    path.push_back(root);
    while (!stack.empty()) {
      auto& [u, next] = stack.back();
      if (next < out[u].size()) {
        const std::size_t v = out[u][next++];
        if (color[v] == Color::kGray) {
          auto start = std::find(path.begin(), path.end(), v);
          std::vector<std::string> witness;
          for (auto it = start; it != path.end(); ++it) {
            witness.push_back(dag.nodes[*it]);
          }
          witness.push_back(dag.nodes[v]);
          return witness;
        }
        if (color[v] == Color::kWhite) {
          color[v] = Color::kGray;
          path.push_back(v);
          stack.emplace_back(v, 0);
        }
      } else {
        color[u] = Color::kBlack;
        path.pop_back();
        stack.pop_back();
      }
    }
  }
  return std::nullopt;
}

std::vector<Diagnostic> validate(const Dag& dag, const TableSchema& schema) {
  std::vector<Diagnostic> diags;
  std::set<std::string> reported_unknown;
  auto check_known = [&](const std::string& name) {
    if (!schema.contains(name) && reported_unknown.insert(name).second) {
      diags.push_back({DiagnosticKind::kUnknownNode, "UnknownNode(\"" + name + "\")", {name}});
    }
  };
  for (const auto& n : dag.nodes) {
    check_known(n);
  }
  std::set<std::pair<std::string, std::string>> seen_edges;
  for (const auto& [from, to] : dag.edges) {
    check_known(from);
    check_known(to);
    if (from == to) {
      diags.push_back({DiagnosticKind::kSelfLoop, "self-loop on '" + from + "'", {from}});
    }
    if (!seen_edges.emplace(from, to).second) {
      diags.push_back(
          {DiagnosticKind::kDuplicateEdge, "duplicate edge " + from + "->" + to, {from, to}});
    }
  }
  const std::unordered_set<std::string> in_dag(dag.nodes.begin(), dag.nodes.end());
  for (const auto& v : schema.variables()) {
    if (!in_dag.contains(v.name)) {
      diags.push_back({DiagnosticKind::kMissingVariable,
                       "schema variable '" + v.name + "' is absent from the DAG", {v.name}});
    }
  }
  if (auto cycle = find_cycle(dag)) {
    diags.push_back(
        {DiagnosticKind::kCycleDetected, "CycleDetected: " + join(*cycle, " -> "), *cycle});
  }
  return diags;
}

Dag apply_conditional_inputs(const Dag& dag, std::span<const std::string> conditional_inputs) {
  const std::unordered_set<std::string> ci(conditional_inputs.begin(), conditional_inputs.end());
  const std::unordered_set<std::string> known(dag.nodes.begin(), dag.nodes.end());
  for (const auto& c : conditional_inputs) {
    if (!known.contains(c)) {
      throw Error(ErrorCode::kUnknownNode, "conditional input '" + c + "' is not a DAG node");
    }
  }
  Dag out;
  out.nodes = dag.nodes;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& [from, to] : dag.edges) {
    if (ci.contains(to) && ci.contains(from)) {
      throw Error(ErrorCode::kReversalCycle,
                  "witness [" + from + ", " + to + ", " + from +
                      "]: edge between two conditional inputs cannot point away from both; "
                      "remove it from the DAG");
    }
    std::pair<std::string, std::string> edge =
        ci.contains(to) ? std::make_pair(to, from) : std::make_pair(from, to);
    if (seen.insert(edge).second) {
      out.edges.push_back(std::move(edge));
    }
  }
  if (auto cycle = find_cycle(out)) {
    throw Error(ErrorCode::kReversalCycle, "witness [" + join(*cycle, ", ") + "]");
  }
  return out;
}

std::vector<std::string> linearize(const Dag& dag, const TableSchema& schema) {
  const std::size_t n = dag.nodes.size();
  // Priority: schema column index, then DAG declaration order for unknown names.
  std::vector<std::size_t> priority(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto idx = schema.index_of(dag.nodes[i]);
    priority[i] = idx ? *idx : schema.size() + i;
  }
  const auto index = node_index(dag);
  std::vector<std::vector<std::size_t>> out(n);
  std::vector<std::size_t> in_degree(n, 0);
  for (const auto& [from, to] : dag.edges) {
    const std::size_t f = index.at(from);
    const std::size_t t = index.at(to);
    out[f].push_back(t);
    ++in_degree[t];
  }
  std::set<std::pair<std::size_t, std::size_t>> ready;
  for (std::size_t i = 0; i < n; ++i) {
    if (in_degree[i] == 0) {
      ready.emplace(priority[i], i);
    }
  }
  std::vector<std::string> order;
  order.reserve(n);
  while (!ready.empty()) {
    const std::size_t u = ready.begin()->second;
    ready.erase(ready.begin());
    order.push_back(dag.nodes[u]);
    for (std::size_t v : out[u]) {
      if (--in_degree[v] == 0) {
        ready.emplace(priority[v], v);
      }
    }
  }
  if (order.size() != n) {
    auto cycle = find_cycle(dag);
    throw Error(ErrorCode::kCycleDetected, cycle ? join(*cycle, " -> ") : "graph has a cycle");
  }
  return order;
}

std::optional<std::size_t> GeneratorGraph::position(std::string_view name) const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].name == name) {
      return i;
    }
  }
  return std::nullopt;
}

std::vector<std::string> GeneratorGraph::order() const {
  std::vector<std::string> out;
  for (const auto& n : nodes) {
    out.push_back(n.name);
  }
  return out;
}

std::vector<std::string> GeneratorGraph::generated() const {
  std::vector<std::string> out;
  for (const auto& n : nodes) {
    if (n.role == NodeRole::kGenerated) {
      out.push_back(n.name);
    }
  }
  return out;
}

std::vector<std::string> GeneratorGraph::conditional_inputs() const {
  std::vector<std::string> out;
  for (const auto& n : nodes) {
    if (n.role == NodeRole::kConditionalInput) {
      out.push_back(n.name);
    }
  }
  return out;
}

nlohmann::json to_json(const GeneratorGraph& graph) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& n : graph.nodes) {
    out.push_back({{"name", n.name},
                   {"role", n.role == NodeRole::kConditionalInput ? "conditional_input"
                                                                  : "generated"},
                   {"predecessors", n.predecessors},
                   {"attention_set", n.attention_set}});
  }
  return out;
}

GeneratorGraph build_graph(const Dag& dag, std::span<const std::string> conditional_inputs,
                           const TableSchema& schema) {
  const auto diags = validate(dag, schema);
  if (!diags.empty()) {
    throw Error(error_code_for(diags.front().kind), diags.front().message);
  }
  for (const auto& c : conditional_inputs) {
    if (!schema.contains(c)) {
      throw Error(ErrorCode::kUnknownVariable, "conditional input '" + c + "' not in schema");
    }
  }
  const Dag modified = apply_conditional_inputs(dag, conditional_inputs);
  const auto order = linearize(modified, schema);

  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < order.size(); ++i) {
    pos.emplace(order[i], i);
  }
  const std::unordered_set<std::string> ci(conditional_inputs.begin(), conditional_inputs.end());

  GeneratorGraph graph;
  graph.nodes.resize(order.size());
  for (std::size_t t = 0; t < order.size(); ++t) {
    graph.nodes[t].name = order[t];
    graph.nodes[t].role = ci.contains(order[t]) ? NodeRole::kConditionalInput
                                                : NodeRole::kGenerated;
  }
  for (const auto& [from, to] : modified.edges) {
    graph.nodes[pos.at(to)].predecessors.push_back(pos.at(from));
  }
  // Ancestors in topological order: anc(t) = union over parents p of {p} + anc(p).
  std::vector<std::set<std::size_t>> ancestors(order.size());
  for (std::size_t t = 0; t < order.size(); ++t) {
    auto& preds = graph.nodes[t].predecessors;
    std::sort(preds.begin(), preds.end());
    for (std::size_t p : preds) {
      ancestors[t].insert(p);
      ancestors[t].insert(ancestors[p].begin(), ancestors[p].end());
    }
    for (std::size_t a : ancestors[t]) {
      if (!std::binary_search(preds.begin(), preds.end(), a)) {
        graph.nodes[t].attention_set.push_back(a);
      }
    }
  }
  return graph;
}

}  // namespace dagsynth
