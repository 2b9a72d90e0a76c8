#include "dagsynth/generator.hpp"

#include <cmath>
#include <utility>

#include "dagsynth/errors.hpp"

namespace dagsynth {

using ad::Var;

nlohmann::json to_json(const GeneratorDims& dims) {
  return {{"noise", dims.noise}, {"hidden", dims.hidden}, {"context", dims.context}};
}

GeneratorDims generator_dims_from_json(const nlohmann::json& j) {
  GeneratorDims dims;
  dims.noise = j.value("noise", dims.noise);
  dims.hidden = j.value("hidden", dims.hidden);
  dims.context = j.value("context", dims.context);
  return dims;
}

Eigen::VectorXd attention_weights(const Eigen::VectorXd& logits) {
  if (logits.size() == 0) {
    return logits;
  }
  const Eigen::ArrayXd e = (logits.array() - logits.maxCoeff()).exp();
  return (e / e.sum()).matrix();
}

Var attention(std::span<const Var> contexts, const Var& alpha, Eigen::Index rows,
              Eigen::Index width) {
  if (contexts.empty()) {
    return ad::constant(Eigen::MatrixXd::Zero(rows, width));
  }
  if (!alpha.defined() || alpha.rows() != 1 ||
      alpha.cols() != static_cast<Eigen::Index>(contexts.size())) {
    throw Error(ErrorCode::kShapeMismatch, "attention: one weight per attended context required");
  }
  const Var weights = ad::softmax(alpha);
  Var total;
  for (std::size_t k = 0; k < contexts.size(); ++k) {
    const auto& f = contexts[k];
    const Var w = ad::broadcast_scalar(ad::slice_cols(weights, static_cast<Eigen::Index>(k), 1),
                                       f.rows(), f.cols());
    const Var term = ad::mul(w, f);
    total = total.defined() ? ad::add(total, term) : term;
  }
  return total;
}

namespace {

Var mean_of(std::span<const Var> parts) {
  Var total = parts.front();
  for (std::size_t k = 1; k < parts.size(); ++k) {
    total = ad::add(total, parts[k]);
  }
  return parts.size() == 1 ? total : ad::scale(total, 1.0 / static_cast<double>(parts.size()));
}

}  // namespace

Var node_input(const Var& noise, std::span<const Var> predecessor_contexts,
               const Var& initial_context, const Var& attended) {
  const Var context = predecessor_contexts.empty()
                          ? ad::broadcast_rows(initial_context, noise.rows())
                          : mean_of(predecessor_contexts);
  const Var parts[] = {noise, context, attended};
  return ad::concat_cols(parts);
}

Var ci_transform(const Var& encoded, const Var& weight, const Var& bias) {
  if (encoded.cols() != weight.rows()) {
    throw Error(ErrorCode::kShapeMismatch, "conditional-input block width " +
                                               std::to_string(encoded.cols()) + ", expected " +
                                               std::to_string(weight.rows()));
  }
  return ad::linear(encoded, weight, bias);
}

Generator::Generator(GeneratorGraph graph, const EncoderSet& encoders, GeneratorDims dims,
                     std::uint64_t seed)
    : graph_(std::move(graph)), dims_(dims) {
  const auto shapes = build_layout(encoders);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.1);
  for (const auto& shape : shapes) {
    Eigen::MatrixXd value;
    switch (shape.init) {
      case Init::kZero:
        value = Eigen::MatrixXd::Zero(shape.rows, shape.cols);
        break;
      case Init::kGlorot:
        value = glorot_uniform(shape.rows, shape.cols, rng);
        break;
      case Init::kContext:
        value.resize(shape.rows, shape.cols);
        for (Eigen::Index i = 0; i < value.size(); ++i) {
          value(i) = normal(rng);
        }
        break;
    }
    params_.add(shape.name, std::move(value));
  }
}

Generator::Generator(GeneratorGraph graph, const EncoderSet& encoders, GeneratorDims dims,
                     ParamSet params)
    : graph_(std::move(graph)), dims_(dims), params_(std::move(params)) {
  const auto shapes = build_layout(encoders);
  if (shapes.size() != params_.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "generator expects " + std::to_string(shapes.size()) + " parameter arrays, got " +
                    std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& v = params_.value(i);
    if (params_.name(i) != shapes[i].name || v.rows() != shapes[i].rows ||
        v.cols() != shapes[i].cols) {
      throw Error(ErrorCode::kShapeMismatch, "generator parameter '" + shapes[i].name +
                                                 "' missing or misshapen");
    }
  }
}

std::vector<Generator::ParamShape> Generator::build_layout(const EncoderSet& encoders) {
  if (dims_.noise == 0 || dims_.hidden == 0 || dims_.context == 0) {
    throw Error(ErrorCode::kInvalidArgument, "generator dimensions must be positive");
  }
  const auto dz = static_cast<Eigen::Index>(dims_.noise);
  const auto dh = static_cast<Eigen::Index>(dims_.hidden);
  const auto df = static_cast<Eigen::Index>(dims_.context);

  std::vector<ParamShape> shapes;
  auto add = [&shapes](std::string name, Eigen::Index r, Eigen::Index c, Init init) {
    shapes.push_back({std::move(name), r, c, init});
    return shapes.size() - 1;
  };

  initial_context_ = add("gen/initial_context", 1, df, Init::kContext);
  layout_.assign(graph_.size(), {});
  generated_.clear();
  ci_.clear();
  output_width_ = 0;
  ci_width_ = 0;

  for (std::size_t t = 0; t < graph_.size(); ++t) {
    const auto& node = graph_.nodes[t];
    if (!encoders.contains(node.name)) {
      throw Error(ErrorCode::kSchemaMismatch, "no encoder for variable '" + node.name + "'");
    }
    const auto& encoder = encoders.at(node.name);
    auto& layout = layout_[t];
    layout.width = encoded_width(encoder);
    const auto width = static_cast<Eigen::Index>(layout.width);
    if (std::holds_alternative<ContinuousEncoder>(encoder)) {
      layout.blocks.push_back({true, width});
    } else {
      layout.blocks.push_back({false, width});
    }
    const std::string prefix = "gen/" + node.name + "/";
    if (node.role == NodeRole::kConditionalInput) {
      layout.ci_w = add(prefix + "ci_weight", width, df, Init::kGlorot);
      layout.ci_b = add(prefix + "ci_bias", 1, df, Init::kZero);
      ci_.push_back(node.name);
      ci_width_ += layout.width;
      continue;
    }
    layout.lstm_w = add(prefix + "lstm_weight", dz + 2 * df, 4 * dh, Init::kGlorot);
    layout.lstm_b = add(prefix + "lstm_bias", 1, 4 * dh, Init::kZero);
    layout.out_w1 = add(prefix + "out_weight1", dh, dh, Init::kGlorot);
    layout.out_b1 = add(prefix + "out_bias1", 1, dh, Init::kZero);
    layout.out_w2 = add(prefix + "out_weight2", dh, width, Init::kGlorot);
    layout.out_b2 = add(prefix + "out_bias2", 1, width, Init::kZero);
    layout.in_w = add(prefix + "in_weight", width, df, Init::kGlorot);
    layout.in_b = add(prefix + "in_bias", 1, df, Init::kZero);
    if (!node.attention_set.empty()) {
      layout.alpha = add(prefix + "attention", 1,
                         static_cast<Eigen::Index>(node.attention_set.size()), Init::kZero);
    }
    generated_.push_back(node.name);
    output_width_ += layout.width;
  }
  return shapes;
}

NoiseBatch Generator::draw_noise(Eigen::Index batch, std::mt19937_64& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  NoiseBatch noise;
  noise.blocks.reserve(generated_.size());
  const auto dz = static_cast<Eigen::Index>(dims_.noise);
  for (std::size_t g = 0; g < generated_.size(); ++g) {
    Eigen::MatrixXd block(batch, dz);
    for (Eigen::Index i = 0; i < batch; ++i) {
      for (Eigen::Index j = 0; j < dz; ++j) {
        block(i, j) = normal(rng);
      }
    }
    noise.blocks.push_back(std::move(block));
  }
  return noise;
}

Var Generator::activate_blocks(const NodeLayout& layout, const Var& logits) const {
  std::vector<Var> parts;
  Eigen::Index offset = 0;
  for (const auto& block : layout.blocks) {
    if (block.continuous) {
      parts.push_back(ad::tanh(ad::slice_cols(logits, offset, 1)));
      parts.push_back(ad::softmax(ad::slice_cols(logits, offset + 1, block.width - 1)));
    } else {
      parts.push_back(ad::softmax(ad::slice_cols(logits, offset, block.width)));
    }
    offset += block.width;
  }
  return parts.size() == 1 ? parts.front() : ad::concat_cols(parts);
}

ForwardResult Generator::forward(std::span<const Var> params, const NoiseBatch& noise,
                                 const Eigen::MatrixXd& ci_encoded) const {
  if (params.size() != params_.size()) {
    throw Error(ErrorCode::kShapeMismatch, "generator forward: parameter count mismatch");
  }
  if (noise.blocks.size() != generated_.size()) {
    throw Error(ErrorCode::kShapeMismatch, "generator forward: one noise block per generated "
                                           "variable required");
  }
  const Eigen::Index rows = generated_.empty() ? ci_encoded.rows() : noise.batch_size();
  for (const auto& block : noise.blocks) {
    if (block.rows() != rows || block.cols() != static_cast<Eigen::Index>(dims_.noise)) {
      throw Error(ErrorCode::kShapeMismatch, "generator forward: noise block shape");
    }
  }
  if (ci_encoded.cols() != static_cast<Eigen::Index>(ci_width_) ||
      (ci_width_ > 0 && ci_encoded.rows() != rows)) {
    throw Error(ErrorCode::kShapeMismatch,
                "generator forward: conditional-input batch is " +
                    std::to_string(ci_encoded.rows()) + "x" + std::to_string(ci_encoded.cols()) +
                    ", expected " + std::to_string(rows) + "x" + std::to_string(ci_width_));
  }

  const auto dh = static_cast<Eigen::Index>(dims_.hidden);
  const auto df = static_cast<Eigen::Index>(dims_.context);
  ForwardResult result;
  result.nodes.resize(graph_.size());
  result.visit_order.reserve(graph_.size());
  std::vector<Var> outputs;
  Eigen::Index ci_offset = 0;
  std::size_t g = 0;

  for (std::size_t t = 0; t < graph_.size(); ++t) {
    result.visit_order.push_back(t);
    const auto& node = graph_.nodes[t];
    const auto& layout = layout_[t];
    auto& act = result.nodes[t];
    const auto width = static_cast<Eigen::Index>(layout.width);

    if (node.role == NodeRole::kConditionalInput) {
      const Var block = ad::constant(ci_encoded.middleCols(ci_offset, width));
      ci_offset += width;
      act.context = ci_transform(block, params[layout.ci_w], params[layout.ci_b]);
      continue;
    }

    std::vector<Var> parent_contexts;
    std::vector<Var> parent_cells;
    for (auto p : node.predecessors) {
      parent_contexts.push_back(result.nodes[p].context);
      if (graph_.nodes[p].role == NodeRole::kGenerated) {
        parent_cells.push_back(result.nodes[p].cell);
      }
    }
    std::vector<Var> attended_contexts;
    for (auto k : node.attention_set) {
      attended_contexts.push_back(result.nodes[k].context);
    }
    const Var alpha = layout.alpha == npos ? Var() : params[layout.alpha];
    const Var attended = attention(attended_contexts, alpha, rows, df);
    const Var input = node_input(ad::constant(noise.blocks[g]), parent_contexts,
                                 params[initial_context_], attended);

    const Var gates = ad::linear(input, params[layout.lstm_w], params[layout.lstm_b]);
    const Var in_gate = ad::sigmoid(ad::slice_cols(gates, 0, dh));
    const Var forget_gate = ad::sigmoid(ad::slice_cols(gates, dh, dh));
    const Var out_gate = ad::sigmoid(ad::slice_cols(gates, 2 * dh, dh));
    const Var candidate = ad::tanh(ad::slice_cols(gates, 3 * dh, dh));
    Var cell = ad::mul(in_gate, candidate);
    if (!parent_cells.empty()) {
      cell = ad::add(ad::mul(forget_gate, mean_of(parent_cells)), cell);
    }
    const Var hidden = ad::mul(out_gate, ad::tanh(cell));

    const Var transformed =
        ad::tanh(ad::linear(hidden, params[layout.out_w1], params[layout.out_b1]));
    const Var logits = ad::linear(transformed, params[layout.out_w2], params[layout.out_b2]);
    const Var values = activate_blocks(layout, logits);

    act.cell = cell;
    act.hidden = hidden;
    act.values = values;
    act.context = ad::linear(values, params[layout.in_w], params[layout.in_b]);
    outputs.push_back(values);
    ++g;
  }

  result.output = outputs.empty() ? ad::constant(Eigen::MatrixXd(rows, 0))
                                  : (outputs.size() == 1 ? outputs.front()
                                                         : ad::concat_cols(outputs));
  return result;
}

Eigen::MatrixXd Generator::generate(const NoiseBatch& noise,
                                    const Eigen::MatrixXd& ci_encoded) const {
  ad::NoGradGuard guard;
  const auto bound = params_.bind(false);
  return forward(bound, noise, ci_encoded).output.value();
}

}  // namespace dagsynth
