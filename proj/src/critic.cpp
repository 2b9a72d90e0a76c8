#include "dagsynth/critic.hpp"

#include <string>

#include "dagsynth/errors.hpp"

namespace dagsynth {

using ad::Var;

namespace {

constexpr double kLayerNormEps = 1e-5;

Var layer_norm(const Var& x, const Var& gain, const Var& bias) {
  return ad::scale_shift(ad::standardize_rows(x, kLayerNormEps), gain, bias);
}

}  // namespace

nlohmann::json to_json(const CriticConfig& config) {
  return {{"hidden_layers", config.hidden_layers},
          {"width", config.width},
          {"leaky_slope", config.leaky_slope},
          {"layer_norm", config.layer_norm}};
}

CriticConfig critic_config_from_json(const nlohmann::json& j) {
  CriticConfig c;
  c.hidden_layers = j.value("hidden_layers", c.hidden_layers);
  c.width = j.value("width", c.width);
  c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
  c.layer_norm = j.value("layer_norm", c.layer_norm);
  return c;
}

Critic::Critic(std::size_t input_width, CriticConfig config, std::uint64_t seed)
    : input_width_(input_width), config_(config) {
  if (input_width == 0 || (config.hidden_layers > 0 && config.width == 0)) {
    throw Error(ErrorCode::kInvalidArgument, "critic widths must be positive");
  }
  std::mt19937_64 rng(seed);
  auto in = static_cast<Eigen::Index>(input_width);
  const auto width = static_cast<Eigen::Index>(config.width);
  for (std::size_t l = 0; l < config.hidden_layers; ++l) {
    const std::string prefix = "critic/layer" + std::to_string(l) + "/";
    params_.add(prefix + "weight", glorot_uniform(in, width, rng));
    params_.add(prefix + "bias", Eigen::MatrixXd::Zero(1, width));
    if (config.layer_norm) {
      params_.add(prefix + "norm_gain", Eigen::MatrixXd::Ones(1, width));
      params_.add(prefix + "norm_bias", Eigen::MatrixXd::Zero(1, width));
    }
    in = width;
  }
  params_.add("critic/head/weight", glorot_uniform(in, 1, rng));
  params_.add("critic/head/bias", Eigen::MatrixXd::Zero(1, 1));
}

Critic::Critic(std::size_t input_width, CriticConfig config, ParamSet params)
    : input_width_(input_width), config_(config), params_(std::move(params)) {
  check_params();
}

void Critic::check_params() const {
  const std::size_t per_layer = config_.layer_norm ? 4 : 2;
  const std::size_t expected = config_.hidden_layers * per_layer + 2;
  if (params_.size() != expected) {
    throw Error(ErrorCode::kShapeMismatch, "critic expects " + std::to_string(expected) +
                                               " parameter arrays, got " +
                                               std::to_string(params_.size()));
  }
  auto in = static_cast<Eigen::Index>(input_width_);
  std::size_t i = 0;
  for (std::size_t l = 0; l < config_.hidden_layers; ++l) {
    const auto width = static_cast<Eigen::Index>(config_.width);
    if (params_.value(i).rows() != in || params_.value(i).cols() != width) {
      throw Error(ErrorCode::kShapeMismatch, "critic parameter '" + params_.name(i) +
                                                 "' has the wrong shape");
    }
    i += per_layer;
    in = width;
  }
  if (params_.value(i).rows() != in || params_.value(i).cols() != 1) {
    throw Error(ErrorCode::kShapeMismatch, "critic head has the wrong shape");
  }
}

Var Critic::score(std::span<const Var> params, const Var& rows) const {
  if (rows.cols() != static_cast<Eigen::Index>(input_width_)) {
    throw Error(ErrorCode::kShapeMismatch, "critic input has " + std::to_string(rows.cols()) +
                                               " columns, expected " +
                                               std::to_string(input_width_));
  }
  if (params.size() != params_.size()) {
    throw Error(ErrorCode::kShapeMismatch, "critic score: parameter count mismatch");
  }
  Var x = rows;
  std::size_t i = 0;
  for (std::size_t l = 0; l < config_.hidden_layers; ++l) {
    x = ad::linear(x, params[i], params[i + 1]);
    i += 2;
    if (config_.layer_norm) {
      x = layer_norm(x, params[i], params[i + 1]);
      i += 2;
    }
    x = ad::leaky_relu(x, config_.leaky_slope);
  }
  return ad::linear(x, params[i], params[i + 1]);
}

Eigen::VectorXd Critic::score(const Eigen::MatrixXd& rows) const {
  ad::NoGradGuard guard;
  const auto bound = params_.bind(false);
  return score(bound, ad::constant(rows)).value().col(0);
}

AdversarialLosses adversarial_losses(const Var& real_scores, const Var& fake_scores,
                                     const Var& penalty, double gp_lambda) {
  const Var fake_mean = ad::mean_all(fake_scores);
  Var critic = ad::sub(fake_mean, ad::mean_all(real_scores));
  if (penalty.defined()) {
    critic = ad::add(critic, ad::scale(penalty, gp_lambda));
  }
  return {critic, ad::scale(fake_mean, -1.0)};
}

Var gradient_penalty(const Critic& critic, std::span<const Var> params,
                     const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake,
                     std::mt19937_64& rng) {
  if (real.rows() != fake.rows() || real.cols() != fake.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "gradient penalty: real and fake batches differ in shape");
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd mixed(real.rows(), real.cols());
  for (Eigen::Index i = 0; i < real.rows(); ++i) {
    const double eps = unit(rng);
    mixed.row(i) = eps * real.row(i) + (1.0 - eps) * fake.row(i);
  }
  const Var x(mixed, true);
  const Var scores = critic.score(params, x);
  const Var inputs[] = {x};
  const Var g = ad::grad(scores, inputs, /*create_graph=*/true).front();
  // A tiny offset keeps the norm differentiable where the gradient vanishes.
  const Var norms = ad::pow(ad::add_scalar(ad::sum_cols(ad::mul(g, g)), 1e-12), 0.5);
  const Var deviation = ad::add_scalar(norms, -1.0);
  return ad::mean_all(ad::mul(deviation, deviation));
}

double gradient_penalty(const Critic& critic, const Eigen::MatrixXd& real,
                        const Eigen::MatrixXd& fake, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto bound = critic.params().bind(false);
  return gradient_penalty(critic, bound, real, fake, rng).scalar();
}

}  // namespace dagsynth
