#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dagsynth/autodiff.hpp"

namespace dagsynth {

// Ordered, named parameter arrays. Order is insertion order and is what the
// checkpoint archive and the optimizer state follow.
class ParamSet {
 public:
  std::size_t add(std::string name, Eigen::MatrixXd value);

  std::size_t size() const noexcept { return entries_.size(); }
  const std::string& name(std::size_t i) const { return entries_.at(i).first; }
  const Eigen::MatrixXd& value(std::size_t i) const { return entries_.at(i).second; }
  Eigen::MatrixXd& value(std::size_t i) { return entries_.at(i).second; }
  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t scalar_count() const;

  // Leaf variables over the current values, one per parameter.
  std::vector<ad::Var> bind(bool requires_grad) const;

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  std::vector<std::pair<std::string, Eigen::MatrixXd>> entries_;
};

Eigen::MatrixXd glorot_uniform(Eigen::Index fan_in, Eigen::Index fan_out, std::mt19937_64& rng);

class Adam {
 public:
  Adam(double learning_rate, double beta1, double beta2, double epsilon = 1e-8);

  void step(ParamSet& params, std::span<const ad::Var> grads);
  std::size_t steps() const noexcept { return steps_; }

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  std::size_t steps_ = 0;
  std::vector<Eigen::MatrixXd> m_;
  std::vector<Eigen::MatrixXd> v_;
};

}  // namespace dagsynth
