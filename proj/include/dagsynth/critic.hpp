#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

#include <json.hpp>

#include "dagsynth/autodiff.hpp"
#include "dagsynth/params.hpp"

namespace dagsynth {

struct CriticConfig {
  std::size_t hidden_layers = 2;
  std::size_t width = 200;
  double leaky_slope = 0.2;
  bool layer_norm = true;

  friend bool operator==(const CriticConfig&, const CriticConfig&) = default;
};

nlohmann::json to_json(const CriticConfig& config);
CriticConfig critic_config_from_json(const nlohmann::json& j);

// Wasserstein critic: [affine -> layer norm -> leaky ReLU] x hidden_layers,
// then a scalar affine head.
class Critic {
 public:
  Critic(std::size_t input_width, CriticConfig config, std::uint64_t seed);
  Critic(std::size_t input_width, CriticConfig config, ParamSet params);

  std::size_t input_width() const noexcept { return input_width_; }
  const CriticConfig& config() const noexcept { return config_; }
  const ParamSet& params() const noexcept { return params_; }
  ParamSet& params() noexcept { return params_; }

  // One score per row (n x 1).
  ad::Var score(std::span<const ad::Var> params, const ad::Var& rows) const;
  Eigen::VectorXd score(const Eigen::MatrixXd& rows) const;

 private:
  void check_params() const;

  std::size_t input_width_;
  CriticConfig config_;
  ParamSet params_;
};

struct AdversarialLosses {
  ad::Var critic;     // mean(fake) - mean(real) + lambda * gp
  ad::Var generator;  // -mean(fake)
};

AdversarialLosses adversarial_losses(const ad::Var& real_scores, const ad::Var& fake_scores,
                                     const ad::Var& penalty, double gp_lambda = 10.0);

// Mean over rows of (|grad_x score(x_hat)| - 1)^2 with
// x_hat = eps * real + (1 - eps) * fake and eps ~ U(0, 1) per row. The result
// is differentiable with respect to `params`.
ad::Var gradient_penalty(const Critic& critic, std::span<const ad::Var> params,
                         const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake,
                         std::mt19937_64& rng);
double gradient_penalty(const Critic& critic, const Eigen::MatrixXd& real,
                        const Eigen::MatrixXd& fake, std::uint64_t seed);

}  // namespace dagsynth
