#include "dagsynth/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>
#include <utility>

#include "dagsynth/errors.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace dagsynth::ad {
namespace {

thread_local bool g_grad_enabled = true;

// Batch-sized temporaries sit above glibc's mmap threshold, so every op would
// otherwise map and fault in fresh pages. Keep them on the heap instead.
[[maybe_unused]] const bool g_allocator_tuned = [] {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  return true;
}();

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream msg;
    msg << op << ": shapes " << a.rows() << "x" << a.cols() << " and " << b.rows() << "x"
        << b.cols() << " differ";
    throw Error(ErrorCode::kShapeMismatch, msg.str());
  }
}

// Creates the result node; the graph is only recorded when some input
// requires a gradient and grad mode is on.
Var make_result(Matrix value, std::vector<Var> inputs, BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (GradMode::enabled() &&
      std::any_of(inputs.begin(), inputs.end(), [](const Var& v) { return v.requires_grad(); })) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Var::from_node(std::move(node));
}

// Variant for rules that need the op's own output. A weak reference avoids a
// node owning itself through its closure.
template <typename MakeBackward>
Var make_result_with_self(Matrix value, std::vector<Var> inputs, MakeBackward make_backward) {
  Var out = make_result(std::move(value), std::move(inputs), nullptr);
  if (out.requires_grad()) {
    std::weak_ptr<Node> self = out.node();
    out.node()->backward = make_backward(self);
  }
  return out;
}

Var self_var(const std::weak_ptr<Node>& self) { return Var::from_node(self.lock()); }

}  // namespace

Var::Var(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Var Var::from_node(std::shared_ptr<Node> node) {
  Var v;
  v.node_ = std::move(node);
  return v;
}

const Matrix& Var::value() const {
  if (!node_) {
    throw Error(ErrorCode::kInvalidArgument, "access to undefined Var");
  }
  return node_->value;
}

bool Var::requires_grad() const noexcept { return node_ && node_->requires_grad; }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw Error(ErrorCode::kShapeMismatch, "scalar() on a non 1x1 value");
  }
  return v(0, 0);
}

bool GradMode::enabled() noexcept { return g_grad_enabled; }
void GradMode::set_enabled(bool enabled) noexcept { g_grad_enabled = enabled; }

std::vector<Var> grad(const Var& output, std::span<const Var> inputs, bool create_graph) {
  std::vector<Var> result(inputs.size());
  if (!output.requires_grad()) {
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      result[i] = constant(Matrix::Zero(inputs[i].rows(), inputs[i].cols()));
    }
    return result;
  }

  // Iterative post-order DFS gives a topological order of the recorded graph.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(output.node().get(), 0);
  visited.insert(output.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].node().get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_set<const Node*> wanted;
  for (const Var& in : inputs) {
    wanted.insert(in.node().get());
  }

  struct Restore {
    bool previous;
    ~Restore() { GradMode::set_enabled(previous); }
  } restore{GradMode::enabled()};
  GradMode::set_enabled(create_graph);

  // A node is relevant when some wanted input is reachable from it; only
  // relevant inputs get gradients.
  std::unordered_set<const Node*> relevant;
  for (Node* node : order) {
    bool hit = wanted.contains(node);
    for (const Var& in : node->inputs) {
      hit = hit || relevant.contains(in.node().get());
    }
    if (hit) {
      relevant.insert(node);
    }
  }

  std::unordered_map<const Node*, Var> grads;
  grads.emplace(output.node().get(),
                constant(Matrix::Ones(output.rows(), output.cols())));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    auto found = grads.find(node);
    if (found == grads.end()) {
      continue;
    }
    if (!node->backward) {
      continue;  // leaf
    }
    Var upstream = found->second;
    if (!wanted.contains(node)) {
      grads.erase(found);
    }
    Needed needed(node->inputs.size());
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      needed[i] = node->inputs[i].requires_grad() && relevant.contains(node->inputs[i].node().get());
    }
    std::vector<Var> input_grads = node->backward(upstream, needed);
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      const Var& in = node->inputs[i];
      if (!in.requires_grad() || i >= input_grads.size() || !input_grads[i].defined()) {
        continue;
      }
      auto [slot, inserted] = grads.try_emplace(in.node().get(), input_grads[i]);
      if (!inserted) {
        slot->second = add(slot->second, input_grads[i]);
      }
    }
  }

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto found = grads.find(inputs[i].node().get());
    result[i] = found != grads.end()
                    ? found->second
                    : constant(Matrix::Zero(inputs[i].rows(), inputs[i].cols()));
  }
  return result;
}

Var constant(Matrix value) { return Var(std::move(value), false); }

Var detach(const Var& a) { return constant(a.value()); }

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorCode::kShapeMismatch, "matmul: inner dimensions differ");
  }
  Matrix value = a.value() * b.value();
  return make_result(std::move(value), {a, b}, [a, b](const Var& g, const Needed& need) {
    return std::vector<Var>{need[0] ? matmul_nt(g, b) : Var(), need[1] ? matmul_tn(a, g) : Var()};
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "matmul_nt: inner dimensions differ");
  }
  Matrix value = a.value() * b.value().transpose();
  return make_result(std::move(value), {a, b}, [a, b](const Var& g, const Needed& need) {
    return std::vector<Var>{need[0] ? matmul(g, b) : Var(), need[1] ? matmul_tn(g, a) : Var()};
  });
}

Var matmul_tn(const Var& a, const Var& b) {
  if (a.rows() != b.rows()) {
    throw Error(ErrorCode::kShapeMismatch, "matmul_tn: inner dimensions differ");
  }
  Matrix value = a.value().transpose() * b.value();
  return make_result(std::move(value), {a, b}, [a, b](const Var& g, const Needed& need) {
    return std::vector<Var>{need[0] ? matmul_nt(b, g) : Var(), need[1] ? matmul(a, g) : Var()};
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Matrix value = a.value() + b.value();
  return make_result(std::move(value), {a, b},
                     [](const Var& g, const Needed&) { return std::vector<Var>{g, g}; });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Matrix value = a.value() - b.value();
  return make_result(std::move(value), {a, b},
                     [](const Var& g, const Needed&) { return std::vector<Var>{g, scale(g, -1.0)}; });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Matrix value = a.value().cwiseProduct(b.value());
  return make_result(std::move(value), {a, b}, [a, b](const Var& g, const Needed& need) {
    return std::vector<Var>{need[0] ? mul(g, b) : Var(), need[1] ? mul(g, a) : Var()};
  });
}

Var scale(const Var& a, double factor) {
  Matrix value = a.value() * factor;
  return make_result(std::move(value), {a}, [factor](const Var& g, const Needed&) {
    return std::vector<Var>{scale(g, factor)};
  });
}

Var add_scalar(const Var& a, double offset) {
  Matrix value = a.value().array() + offset;
  return make_result(std::move(value), {a}, [](const Var& g, const Needed&) { return std::vector<Var>{g}; });
}

Var broadcast_rows(const Var& row, Eigen::Index n_rows) {
  if (row.rows() != 1) {
    throw Error(ErrorCode::kShapeMismatch, "broadcast_rows expects a single row");
  }
  Matrix value(n_rows, row.cols());
  value.rowwise() = row.value().row(0);
  return make_result(std::move(value), {row},
                     [](const Var& g, const Needed&) { return std::vector<Var>{sum_rows(g)}; });
}

Var broadcast_cols(const Var& col, Eigen::Index n_cols) {
  if (col.cols() != 1) {
    throw Error(ErrorCode::kShapeMismatch, "broadcast_cols expects a single column");
  }
  Matrix value(col.rows(), n_cols);
  value.colwise() = col.value().col(0);
  return make_result(std::move(value), {col},
                     [](const Var& g, const Needed&) { return std::vector<Var>{sum_cols(g)}; });
}

Var broadcast_scalar(const Var& s, Eigen::Index n_rows, Eigen::Index n_cols) {
  Matrix value = Matrix::Constant(n_rows, n_cols, s.scalar());
  return make_result(std::move(value), {s},
                     [](const Var& g, const Needed&) { return std::vector<Var>{sum_all(g)}; });
}

Var sum_rows(const Var& a) {
  Matrix value = a.value().colwise().sum();
  const Eigen::Index n = a.rows();
  return make_result(std::move(value), {a},
                     [n](const Var& g, const Needed&) { return std::vector<Var>{broadcast_rows(g, n)}; });
}

Var sum_cols(const Var& a) {
  Matrix value = a.value().rowwise().sum();
  const Eigen::Index m = a.cols();
  return make_result(std::move(value), {a},
                     [m](const Var& g, const Needed&) { return std::vector<Var>{broadcast_cols(g, m)}; });
}

Var sum_all(const Var& a) {
  Matrix value(1, 1);
  value(0, 0) = a.value().sum();
  const Eigen::Index n = a.rows();
  const Eigen::Index m = a.cols();
  return make_result(std::move(value), {a}, [n, m](const Var& g, const Needed&) {
    return std::vector<Var>{broadcast_scalar(g, n, m)};
  });
}

Var mean_all(const Var& a) {
  const double count = static_cast<double>(a.rows() * a.cols());
  return scale(sum_all(a), count > 0 ? 1.0 / count : 0.0);
}

Var exp(const Var& a) {
  Matrix value = a.value().array().exp();
  return make_result_with_self(std::move(value), {a}, [](std::weak_ptr<Node> self) {
    return [self](const Var& g, const Needed&) { return std::vector<Var>{mul(g, self_var(self))}; };
  });
}

Var log(const Var& a) {
  Matrix value = a.value().array().log();
  return make_result(std::move(value), {a}, [a](const Var& g, const Needed&) {
    return std::vector<Var>{mul(g, pow(a, -1.0))};
  });
}

Var pow(const Var& a, double exponent) {
  Matrix value = a.value().array().pow(exponent);
  return make_result(std::move(value), {a}, [a, exponent](const Var& g, const Needed&) {
    return std::vector<Var>{mul(g, scale(pow(a, exponent - 1.0), exponent))};
  });
}

Var sigmoid(const Var& a) {
  Matrix value = (1.0 + (-a.value().array()).exp()).inverse();
  return make_result_with_self(std::move(value), {a}, [](std::weak_ptr<Node> self) {
    return [self](const Var& g, const Needed&) {
      Var s = self_var(self);
      // s * (1 - s)
      Var slope = mul(s, add_scalar(scale(s, -1.0), 1.0));
      return std::vector<Var>{mul(g, slope)};
    };
  });
}

Var tanh(const Var& a) {
  // 1 - 2 / (exp(2a) + 1), clamped so exp cannot overflow.
  Matrix value =
      1.0 - 2.0 / ((2.0 * a.value().array().min(40.0).max(-40.0)).exp() + 1.0);
  return make_result_with_self(std::move(value), {a}, [](std::weak_ptr<Node> self) {
    return [self](const Var& g, const Needed&) {
      Var t = self_var(self);
      Var slope = add_scalar(scale(mul(t, t), -1.0), 1.0);
      return std::vector<Var>{mul(g, slope)};
    };
  });
}

Var leaky_relu(const Var& a, double slope) {
  Matrix mask = (a.value().array() > 0.0).cast<double>() * (1.0 - slope) + slope;
  Matrix value = a.value().cwiseProduct(mask);
  Var mask_var = constant(std::move(mask));
  return make_result(std::move(value), {a}, [mask_var](const Var& g, const Needed&) {
    return std::vector<Var>{mul(g, mask_var)};
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) {
    throw Error(ErrorCode::kShapeMismatch, "concat_cols of nothing");
  }
  const Eigen::Index n = parts.front().rows();
  Eigen::Index total = 0;
  for (const Var& p : parts) {
    if (p.rows() != n) {
      throw Error(ErrorCode::kShapeMismatch, "concat_cols: row counts differ");
    }
    total += p.cols();
  }
  Matrix value(n, total);
  std::vector<Eigen::Index> offsets;
  offsets.reserve(parts.size());
  Eigen::Index offset = 0;
  for (const Var& p : parts) {
    value.middleCols(offset, p.cols()) = p.value();
    offsets.push_back(offset);
    offset += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  std::vector<Eigen::Index> widths;
  widths.reserve(parts.size());
  for (const Var& p : parts) {
    widths.push_back(p.cols());
  }
  return make_result(std::move(value), std::move(inputs),
                     [offsets, widths](const Var& g, const Needed&) {
                       std::vector<Var> out;
                       out.reserve(offsets.size());
                       for (std::size_t i = 0; i < offsets.size(); ++i) {
                         out.push_back(slice_cols(g, offsets[i], widths[i]));
                       }
                       return out;
                     });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "slice_cols out of range");
  }
  Matrix value = a.value().middleCols(start, count);
  const Eigen::Index total = a.cols();
  return make_result(std::move(value), {a}, [start, total](const Var& g, const Needed&) {
    return std::vector<Var>{pad_cols(g, start, total)};
  });
}

Var pad_cols(const Var& a, Eigen::Index start, Eigen::Index total_cols) {
  if (start < 0 || start + a.cols() > total_cols) {
    throw Error(ErrorCode::kShapeMismatch, "pad_cols out of range");
  }
  Matrix value = Matrix::Zero(a.rows(), total_cols);
  value.middleCols(start, a.cols()) = a.value();
  const Eigen::Index count = a.cols();
  return make_result(std::move(value), {a}, [start, count](const Var& g, const Needed&) {
    return std::vector<Var>{slice_cols(g, start, count)};
  });
}

Var softmax(const Var& a) {
  // The row max is a constant shift; softmax is invariant to it.
  Matrix row_max = a.value().rowwise().maxCoeff();
  Var shifted = sub(a, constant(row_max.replicate(1, a.cols())));
  Var e = exp(shifted);
  Var inv_total = pow(sum_cols(e), -1.0);
  return mul(e, broadcast_cols(inv_total, a.cols()));
}

Var standardize_rows(const Var& x, double eps) {
  const Eigen::Index w = x.cols();
  const double inv_w = 1.0 / static_cast<double>(w);
  Matrix centered = x.value().colwise() - x.value().rowwise().mean();
  Matrix inv = ((centered.array().square().rowwise().sum() * inv_w) + eps).rsqrt().matrix();
  Matrix value = centered.array().colwise() * inv.col(0).array();

  // The inverse deviation is its own node so the rule for the output stays
  // differentiable in x.
  const Var inv_std = make_result_with_self(std::move(inv), {x}, [x, w, inv_w](std::weak_ptr<Node> self) {
    return [x, w, inv_w, self](const Var& g, const Needed&) {
      const Var r = self_var(self);
      const Var c = sub(x, broadcast_cols(scale(sum_cols(x), inv_w), w));
      const Var coef = scale(mul(pow(r, 3.0), g), -inv_w);
      return std::vector<Var>{mul(c, broadcast_cols(coef, w))};
    };
  });
  return make_result_with_self(std::move(value), {x}, [inv_std, w, inv_w](std::weak_ptr<Node> self) {
    return [inv_std, w, inv_w, self](const Var& g, const Needed&) {
      const Var y = self_var(self);
      const Var g_mean = scale(sum_cols(g), inv_w);
      const Var gy_mean = scale(sum_cols(mul(g, y)), inv_w);
      const Var inner =
          sub(sub(g, broadcast_cols(g_mean, w)), mul(y, broadcast_cols(gy_mean, w)));
      return std::vector<Var>{mul(inner, broadcast_cols(inv_std, w))};
    };
  });
}

Var scale_shift(const Var& x, const Var& gain, const Var& bias) {
  if (gain.rows() != 1 || bias.rows() != 1 || gain.cols() != x.cols() ||
      bias.cols() != x.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "scale_shift: incompatible shapes");
  }
  Matrix value = x.value().array().rowwise() * gain.value().row(0).array();
  value.rowwise() += bias.value().row(0);
  const Eigen::Index n = x.rows();
  return make_result(std::move(value), {x, gain, bias}, [x, gain, n](const Var& g, const Needed& need) {
    return std::vector<Var>{need[0] ? mul(g, broadcast_rows(gain, n)) : Var(),
                            need[1] ? sum_rows(mul(g, x)) : Var(), need[2] ? sum_rows(g) : Var()};
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  if (x.cols() != weight.rows() || bias.rows() != 1 || bias.cols() != weight.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "linear: incompatible shapes");
  }
  Matrix value = x.value() * weight.value();
  value.rowwise() += bias.value().row(0);
  return make_result(std::move(value), {x, weight, bias}, [x, weight](const Var& g, const Needed& need) {
    return std::vector<Var>{need[0] ? matmul_nt(g, weight) : Var(),
                            need[1] ? matmul_tn(x, g) : Var(), need[2] ? sum_rows(g) : Var()};
  });
}

}  // namespace dagsynth::ad
