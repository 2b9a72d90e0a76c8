#pragma once

// Shared helpers for the unit and acceptance tests: random inputs and
// brute-force oracles that do not reuse library code paths.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <algorithm>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "dagsynth/dag.hpp"
#include "dagsynth/errors.hpp"
#include "dagsynth/table.hpp"
#include "dagsynth/toy.hpp"
#include "dagsynth/trainer.hpp"

namespace dagsynth::testing {

// Code of the dagsynth::Error thrown by f, or nullopt when nothing is thrown.
template <typename F>
std::optional<ErrorCode> error_code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

// Random DAG over n nodes named by a shuffled order, edge probability p.
inline Dag random_dag(std::mt19937_64& rng, std::size_t n, double p) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) {
    names.push_back("v" + std::to_string(i));
  }
  std::vector<std::size_t> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    rank[i] = i;
  }
  std::shuffle(rank.begin(), rank.end(), rng);
  std::bernoulli_distribution edge(p);
  Dag dag;
  dag.nodes = names;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      if (rank[a] < rank[b] && edge(rng)) {
        dag.edges.emplace_back(names[a], names[b]);
      }
    }
  }
  return dag;
}

// reach[i][j]: a directed path i -> j exists (Floyd-Warshall closure).
inline std::vector<std::vector<bool>> reachability(const Dag& dag) {
  const std::size_t n = dag.nodes.size();
  auto idx = [&](const std::string& s) {
    return static_cast<std::size_t>(std::find(dag.nodes.begin(), dag.nodes.end(), s) -
                                    dag.nodes.begin());
  };
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (const auto& [a, b] : dag.edges) {
    reach[idx(a)][idx(b)] = true;
  }
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (reach[i][k] && reach[k][j]) {
          reach[i][j] = true;
        }
      }
    }
  }
  return reach;
}

inline TableSchema categorical_schema(const std::vector<std::string>& names, int n_categories) {
  std::vector<VariableSpec> vars;
  for (const auto& name : names) {
    VariableSpec v;
    v.name = name;
    v.kind = VariableKind::kCategorical;
    for (int c = 0; c < n_categories; ++c) {
      v.categories.push_back("k" + std::to_string(c));
    }
    vars.push_back(v);
  }
  return TableSchema(vars);
}

// Uniform categorical codes, continuous values from a two-component mixture.
inline DataTable random_table(const TableSchema& schema, std::size_t n_rows,
                              std::mt19937_64& rng) {
  DataTable table(schema, n_rows);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (schema[c].is_categorical()) {
      std::uniform_int_distribution<int> pick(0, static_cast<int>(schema[c].categories.size()) - 1);
      for (auto& code : table.codes(c)) {
        code = pick(rng);
      }
    } else {
      for (auto& v : table.continuous(c)) {
        v = coin(rng) ? 10.0 + normal(rng) : -5.0 + 2.0 * normal(rng);
      }
    }
  }
  return table;
}

// Central differences of a scalar function of a matrix.
inline Eigen::MatrixXd numeric_gradient(const std::function<double(const Eigen::MatrixXd&)>& f,
                                        const Eigen::MatrixXd& x, double h = 1e-6) {
  Eigen::MatrixXd g(x.rows(), x.cols());
  Eigen::MatrixXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = probe(i);
    probe(i) = saved + h;
    const double up = f(probe);
    probe(i) = saved - h;
    const double down = f(probe);
    probe(i) = saved;
    g(i) = (up - down) / (2.0 * h);
  }
  return g;
}

inline double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-8});
  return (a - b).norm() / scale;
}

// Direct transcriptions of the metric definitions.
inline double oracle_kl(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) {
      s += p[i] * (std::log(p[i]) - std::log(q[i])) / std::log(2.0);
    }
  }
  return s;
}

inline double oracle_js(const std::vector<double>& p, const std::vector<double>& q) {
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = (p[i] + q[i]) / 2.0;
  }
  return std::sqrt((oracle_kl(p, m) + oracle_kl(q, m)) / 2.0);
}

inline double oracle_srmse(const std::vector<double>& orig, const std::vector<double>& synth) {
  double se = 0.0;
  double mean = 0.0;
  for (std::size_t i = 0; i < orig.size(); ++i) {
    se += std::pow(orig[i] - synth[i], 2);
    mean += orig[i];
  }
  mean /= static_cast<double>(orig.size());
  return std::sqrt(se / static_cast<double>(orig.size())) / mean;
}

inline std::vector<double> random_distribution(std::mt19937_64& rng, std::size_t n,
                                               double zero_probability = 0.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(n);
  double total = 0.0;
  for (auto& v : p) {
    v = u(rng) < zero_probability ? 0.0 : u(rng);
    total += v;
  }
  if (total == 0.0) {
    p[0] = 1.0;
    total = 1.0;
  }
  for (auto& v : p) {
    v /= total;
  }
  return p;
}

// Checks one DAG and conditional-input set against brute-force references.
// Returns a description of the first violated property.
inline std::optional<std::string> dag_property_violation(const Dag& dag,
                                                         const std::vector<std::string>& ci,
                                                         const TableSchema& schema) {
  const std::set<std::string> ci_set(ci.begin(), ci.end());
  // Reference reversal: edges into a conditional input flip, duplicates merge.
  Dag reversed;
  reversed.nodes = dag.nodes;
  bool ci_pair = false;
  std::set<std::pair<std::string, std::string>> edge_set;
  for (const auto& [a, b] : dag.edges) {
    ci_pair = ci_pair || (ci_set.contains(a) && ci_set.contains(b));
    edge_set.insert(ci_set.contains(b) ? std::make_pair(b, a) : std::make_pair(a, b));
  }
  reversed.edges.assign(edge_set.begin(), edge_set.end());
  const auto reach = reachability(reversed);
  bool cyclic = false;
  for (std::size_t i = 0; i < reach.size(); ++i) {
    cyclic = cyclic || reach[i][i];
  }

  GeneratorGraph graph;
  try {
    graph = build_graph(dag, ci, schema);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kReversalCycle) {
      return std::string("unexpected error: ") + e.what();
    }
    if (!ci_pair && !cyclic) {
      return "ReversalCycle on an orientable DAG";
    }
    if (std::string(e.what()).find("witness [") == std::string::npos) {
      return "ReversalCycle without witness";
    }
    return std::nullopt;
  }
  if (ci_pair || cyclic) {
    return "missing ReversalCycle";
  }

  const auto names = graph.order();
  if (names.size() != dag.nodes.size()) {
    return "order does not cover every node";
  }
  auto node_idx = [&](const std::string& s) {
    return static_cast<std::size_t>(std::find(dag.nodes.begin(), dag.nodes.end(), s) -
                                    dag.nodes.begin());
  };
  for (const auto& [a, b] : reversed.edges) {
    if (*graph.position(a) >= *graph.position(b)) {
      return "edge " + a + "->" + b + " goes backwards";
    }
  }
  for (std::size_t t = 0; t < graph.size(); ++t) {
    const GraphNode& node = graph.nodes[t];
    const bool is_ci = ci_set.contains(node.name);
    if (is_ci != (node.role == NodeRole::kConditionalInput)) {
      return "wrong role for " + node.name;
    }
    std::set<std::size_t> parents;
    std::set<std::size_t> ancestors;
    for (std::size_t s = 0; s < graph.size(); ++s) {
      const std::string& other = graph.nodes[s].name;
      if (edge_set.contains({other, node.name})) {
        parents.insert(s);
      }
      if (reach[node_idx(other)][node_idx(node.name)]) {
        ancestors.insert(s);
      }
    }
    if (is_ci && !parents.empty()) {
      return "conditional input " + node.name + " has parents";
    }
    const std::set<std::size_t> got_parents(node.predecessors.begin(), node.predecessors.end());
    if (got_parents != parents) {
      return "wrong parents for " + node.name;
    }
    std::set<std::size_t> expected_attention;
    for (std::size_t s : ancestors) {
      if (!parents.contains(s)) {
        expected_attention.insert(s);
      }
    }
    const std::set<std::size_t> got_attention(node.attention_set.begin(),
                                              node.attention_set.end());
    if (got_attention != expected_attention) {
      return "wrong attention set for " + node.name;
    }
    for (std::size_t s : got_attention) {
      if (s >= t) {
        return "attention set reaches forward at " + node.name;
      }
    }
  }
  return std::nullopt;
}

// Small model on the label-noise toy, trained for a couple of epochs.
inline TrainingResult tiny_toy_model(std::size_t rows = 200, std::uint64_t seed = 1) {
  const DataTable toy = make_label_noise_toy(rows, seed);
  const DagSpec spec = label_noise_toy_dag();
  TrainingConfig c;
  c.epochs = 2;
  c.batch_size = 50;
  c.dims = {4, 8, 6};
  c.critic.width = 16;
  c.seed = seed;
  return train(toy, spec.dag, spec.conditional_inputs, c);
}

}  // namespace dagsynth::testing
