#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dagsynth/autodiff.hpp"
#include "dagsynth/dag.hpp"
#include "dagsynth/encoding.hpp"
#include "dagsynth/params.hpp"

namespace dagsynth {

struct GeneratorDims {
  std::size_t noise = 32;    // d_z
  std::size_t hidden = 64;   // d_h, LSTM cell width
  std::size_t context = 48;  // d_f, common width of transformed outputs

  friend bool operator==(const GeneratorDims&, const GeneratorDims&) = default;
};

nlohmann::json to_json(const GeneratorDims& dims);
GeneratorDims generator_dims_from_json(const nlohmann::json& j);

// One standard-normal block (batch x d_z) per generated node, in graph order.
struct NoiseBatch {
  std::vector<Eigen::MatrixXd> blocks;

  Eigen::Index batch_size() const { return blocks.empty() ? 0 : blocks.front().rows(); }
};

// Per-node intermediate tensors. Conditional-input nodes only carry `context`.
struct NodeActivation {
  ad::Var cell;     // C_t
  ad::Var hidden;   // h_t
  ad::Var context;  // f_t
  ad::Var values;   // v_t, encoded synthetic values
};

struct ForwardResult {
  ad::Var output;  // generated blocks concatenated in graph order
  std::vector<NodeActivation> nodes;
  std::vector<std::size_t> visit_order;
};

// Softmax of the attention logits.
Eigen::VectorXd attention_weights(const Eigen::VectorXd& logits);

// Weighted sum of ancestor contexts under softmax(alpha); `alpha` is 1 x k.
// An empty set yields a zero block of the given shape.
ad::Var attention(std::span<const ad::Var> contexts, const ad::Var& alpha, Eigen::Index rows,
                  Eigen::Index width);

// concat(z, mean of predecessor contexts or f0, attention).
ad::Var node_input(const ad::Var& noise, std::span<const ad::Var> predecessor_contexts,
                   const ad::Var& initial_context, const ad::Var& attended);

ad::Var ci_transform(const ad::Var& encoded, const ad::Var& weight, const ad::Var& bias);

class Generator {
 public:
  // Fresh parameters, deterministic given the seed.
  Generator(GeneratorGraph graph, const EncoderSet& encoders, GeneratorDims dims,
            std::uint64_t seed);
  // Restores a parameter set, checking names and shapes.
  Generator(GeneratorGraph graph, const EncoderSet& encoders, GeneratorDims dims,
            ParamSet params);

  const GeneratorGraph& graph() const noexcept { return graph_; }
  const GeneratorDims& dims() const noexcept { return dims_; }
  const ParamSet& params() const noexcept { return params_; }
  ParamSet& params() noexcept { return params_; }

  const std::vector<std::string>& generated_names() const noexcept { return generated_; }
  const std::vector<std::string>& ci_names() const noexcept { return ci_; }
  std::size_t output_width() const noexcept { return output_width_; }
  std::size_t ci_width() const noexcept { return ci_width_; }

  NoiseBatch draw_noise(Eigen::Index batch, std::mt19937_64& rng) const;

  // `ci_encoded` holds the conditional-input blocks in graph order (width
  // ci_width()). `params` must be bound from params(), in the same order.
  ForwardResult forward(std::span<const ad::Var> params, const NoiseBatch& noise,
                        const Eigen::MatrixXd& ci_encoded) const;

  // Gradient-free forward with the stored parameters.
  Eigen::MatrixXd generate(const NoiseBatch& noise, const Eigen::MatrixXd& ci_encoded) const;

 private:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  struct Block {
    bool continuous = false;
    Eigen::Index width = 0;
  };
  struct NodeLayout {
    std::size_t width = 0;
    std::vector<Block> blocks;
    // Parameter indices; unused ones stay at npos.
    std::size_t lstm_w = npos, lstm_b = npos;
    std::size_t out_w1 = npos, out_b1 = npos, out_w2 = npos, out_b2 = npos;
    std::size_t in_w = npos, in_b = npos;
    std::size_t alpha = npos;
    std::size_t ci_w = npos, ci_b = npos;
  };
  enum class Init { kZero, kGlorot, kContext };
  struct ParamShape {
    std::string name;
    Eigen::Index rows;
    Eigen::Index cols;
    Init init;
  };

  // Fills the layout and returns the parameter shapes in creation order.
  std::vector<ParamShape> build_layout(const EncoderSet& encoders);
  ad::Var activate_blocks(const NodeLayout& layout, const ad::Var& logits) const;

  GeneratorGraph graph_;
  GeneratorDims dims_;
  ParamSet params_;
  std::vector<NodeLayout> layout_;
  std::vector<std::string> generated_;
  std::vector<std::string> ci_;
  std::size_t output_width_ = 0;
  std::size_t ci_width_ = 0;
  std::size_t initial_context_ = npos;
};

}  // namespace dagsynth
