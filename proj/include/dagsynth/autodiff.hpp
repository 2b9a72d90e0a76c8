#pragma once

// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// Every backward rule is written in terms of the same differentiable ops, so
// gradients can themselves be differentiated (grad(..., create_graph=true)).
// The critic's gradient penalty relies on this.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace dagsynth::ad {

using Matrix = Eigen::MatrixXd;

struct Node;

class Var {
 public:
  Var() = default;
  explicit Var(Matrix value, bool requires_grad = false);

  static Var from_node(std::shared_ptr<Node> node);

  bool defined() const noexcept { return node_ != nullptr; }
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const noexcept;
  double scalar() const;

  const std::shared_ptr<Node>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Which inputs of a node need a gradient in the current pass.
using Needed = std::vector<bool>;
// Input gradients; entries for inputs not needed may be left undefined.
using BackwardFn = std::function<std::vector<Var>(const Var& grad_output, const Needed& needed)>;

struct Node {
  Matrix value;
  bool requires_grad = false;
  std::vector<Var> inputs;
  BackwardFn backward;
};

// Thread-local switch controlling whether ops record a graph.
class GradMode {
 public:
  static bool enabled() noexcept;
  static void set_enabled(bool enabled) noexcept;
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Gradients of sum(output) with respect to each of `inputs`. Inputs the
// output does not depend on receive a zero matrix. With create_graph the
// returned gradients are differentiable.
std::vector<Var> grad(const Var& output, std::span<const Var> inputs, bool create_graph = false);

Var constant(Matrix value);
Var detach(const Var& a);

Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);  // a * b^T
Var matmul_tn(const Var& a, const Var& b);  // a^T * b

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double offset);

Var broadcast_rows(const Var& row, Eigen::Index n_rows);
Var broadcast_cols(const Var& col, Eigen::Index n_cols);
Var broadcast_scalar(const Var& s, Eigen::Index n_rows, Eigen::Index n_cols);
Var sum_rows(const Var& a);  // 1 x cols
Var sum_cols(const Var& a);  // rows x 1
Var sum_all(const Var& a);   // 1 x 1
Var mean_all(const Var& a);

Var exp(const Var& a);
Var log(const Var& a);
Var pow(const Var& a, double exponent);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var leaky_relu(const Var& a, double slope);

Var concat_cols(std::span<const Var> parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var pad_cols(const Var& a, Eigen::Index start, Eigen::Index total_cols);

// Row-wise softmax over all columns of `a`.
Var softmax(const Var& a);

// Each row shifted to zero mean and scaled by 1/sqrt(var + eps).
Var standardize_rows(const Var& x, double eps);
// x * gain + bias, gain and bias being rows broadcast over x.
Var scale_shift(const Var& x, const Var& gain, const Var& bias);

// x * W + b with b broadcast over rows.
Var linear(const Var& x, const Var& weight, const Var& bias);

}  // namespace dagsynth::ad
