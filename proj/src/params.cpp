#include "dagsynth/params.hpp"

#include <cmath>

#include "dagsynth/errors.hpp"

namespace dagsynth {

std::size_t ParamSet::add(std::string name, Eigen::MatrixXd value) {
  if (find(name)) {
    throw Error(ErrorCode::kInvalidArgument, "duplicate parameter '" + name + "'");
  }
  entries_.emplace_back(std::move(name), std::move(value));
  return entries_.size() - 1;
}

std::optional<std::size_t> ParamSet::find(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first == name) {
      return i;
    }
  }
  return std::nullopt;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    n += static_cast<std::size_t>(e.second.size());
  }
  return n;
}

std::vector<ad::Var> ParamSet::bind(bool requires_grad) const {
  std::vector<ad::Var> vars;
  vars.reserve(entries_.size());
  for (const auto& e : entries_) {
    vars.emplace_back(e.second, requires_grad);
  }
  return vars;
}

Eigen::MatrixXd glorot_uniform(Eigen::Index fan_in, Eigen::Index fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Eigen::MatrixXd w(fan_in, fan_out);
  for (Eigen::Index j = 0; j < fan_out; ++j) {
    for (Eigen::Index i = 0; i < fan_in; ++i) {
      w(i, j) = dist(rng);
    }
  }
  return w;
}

Adam::Adam(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

void Adam::step(ParamSet& params, std::span<const ad::Var> grads) {
  if (grads.size() != params.size()) {
    throw Error(ErrorCode::kShapeMismatch, "Adam: gradient count differs from parameter count");
  }
  if (m_.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.push_back(Eigen::MatrixXd::Zero(params.value(i).rows(), params.value(i).cols()));
      v_.push_back(m_.back());
    }
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(beta1_, t);
  const double correction2 = 1.0 - std::pow(beta2_, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& g = grads[i].value();
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    params.value(i).array() -=
        lr_ * (m_[i].array() / correction1) / ((v_[i].array() / correction2).sqrt() + eps_);
  }
}

}  // namespace dagsynth
