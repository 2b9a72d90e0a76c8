#include "dagsynth/model.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "dagsynth/errors.hpp"

namespace dagsynth {

namespace {

constexpr char kParamsMagic[8] = {'D', 'S', 'Y', 'N', 'P', 'A', 'R', '1'};

std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::kIoError, "SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

void append_params(const ParamSet& params, const std::string& group, nlohmann::json& index,
                   std::string& blob) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& m = params.value(i);
    index.push_back({{"group", group},
                     {"name", params.name(i)},
                     {"rows", m.rows()},
                     {"cols", m.cols()}});
    blob.append(reinterpret_cast<const char*>(m.data()),
                static_cast<std::size_t>(m.size()) * sizeof(double));
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kCorruptCheckpoint, "cannot read " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void TrainingConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) {
      throw Error(ErrorCode::kInvalidArgument, std::string("training config: ") + what);
    }
  };
  require(epochs > 0, "epochs must be positive");
  require(batch_size > 0, "batch_size must be positive");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
          "adam betas must lie in [0, 1)");
  require(n_critic > 0, "n_critic must be positive");
  require(gp_lambda >= 0.0, "gp_lambda must be non-negative");
  require(dims.noise > 0 && dims.hidden > 0 && dims.context > 0, "dims must be positive");
  require(critic.hidden_layers == 0 || critic.width > 0, "critic width must be positive");
  require(n_modes > 0, "n_modes must be positive");
  require(smoothing >= 0.0 && smoothing < 0.5, "smoothing must lie in [0, 0.5)");
}

nlohmann::json to_json(const TrainingConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"adam_betas", {c.beta1, c.beta2}},
          {"n_critic", c.n_critic},
          {"gp_lambda", c.gp_lambda},
          {"seed", c.seed},
          {"dims", to_json(c.dims)},
          {"critic", to_json(c.critic)},
          {"discriminator_conditioning", c.discriminator_conditioning},
          {"checkpoint_every", c.checkpoint_every},
          {"n_modes", c.n_modes},
          {"smoothing", c.smoothing}};
}

TrainingConfig training_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) {
    throw Error(ErrorCode::kInvalidArgument, "training config must be a JSON object");
  }
  static const std::set<std::string> kKeys = {
      "epochs",   "batch_size", "learning_rate", "adam_betas",
      "n_critic", "gp_lambda",  "seed",          "dims",
      "critic",   "discriminator_conditioning",  "checkpoint_every",
      "n_modes",  "smoothing"};
  for (const auto& [key, value] : j.items()) {
    if (!kKeys.contains(key)) {
      throw Error(ErrorCode::kInvalidArgument, "training config: unknown key '" + key + "'");
    }
  }
  TrainingConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    if (j.contains("adam_betas")) {
      const auto& b = j.at("adam_betas");
      if (!b.is_array() || b.size() != 2) {
        throw Error(ErrorCode::kInvalidArgument, "training config: adam_betas needs two values");
      }
      c.beta1 = b[0].get<double>();
      c.beta2 = b[1].get<double>();
    }
    c.n_critic = j.value("n_critic", c.n_critic);
    c.gp_lambda = j.value("gp_lambda", c.gp_lambda);
    c.seed = j.value("seed", c.seed);
    if (j.contains("dims")) {
      c.dims = generator_dims_from_json(j.at("dims"));
    }
    if (j.contains("critic")) {
      c.critic = critic_config_from_json(j.at("critic"));
    }
    c.discriminator_conditioning =
        j.value("discriminator_conditioning", c.discriminator_conditioning);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.n_modes = j.value("n_modes", c.n_modes);
    c.smoothing = j.value("smoothing", c.smoothing);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("training config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainingConfig load_training_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kIoError, "cannot open config " + path.string());
  }
  try {
    return training_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
  }
}

Generator ModelCheckpoint::make_generator() const {
  return Generator(graph, encoders, config.dims, generator_params);
}

Critic ModelCheckpoint::make_critic() const {
  return Critic(critic_input_width(), config.critic, critic_params);
}

std::size_t ModelCheckpoint::critic_input_width() const {
  std::size_t width = 0;
  for (const auto& node : graph.nodes) {
    if (node.role == NodeRole::kGenerated || config.discriminator_conditioning) {
      width += encoders.width(node.name);
    }
  }
  return width;
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw Error(ErrorCode::kIoError, "cannot create " + dir.string() + ": " + ec.message());
  }
  std::string blob(kParamsMagic, sizeof(kParamsMagic));
  nlohmann::json index = nlohmann::json::array();
  append_params(ckpt.generator_params, "generator", index, blob);
  append_params(ckpt.critic_params, "critic", index, blob);

  nlohmann::json meta = {{"format_version", kCheckpointFormatVersion},
                         {"schema", to_json(ckpt.schema)},
                         {"dag", to_json(ckpt.dag)},
                         {"encoders", to_json(ckpt.encoders)},
                         {"graph", to_json(ckpt.graph)},
                         {"config", to_json(ckpt.config)},
                         {"epoch", ckpt.epoch},
                         {"rng_state", ckpt.rng_state},
                         {"arrays", std::move(index)},
                         {"params_sha256", sha256_hex(blob)}};

  std::ofstream params_out(dir / "params.bin", std::ios::binary | std::ios::trunc);
  params_out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  std::ofstream meta_out(dir / "meta.json", std::ios::trunc);
  meta_out << meta.dump(2) << '\n';
  if (!params_out || !meta_out) {
    throw Error(ErrorCode::kIoError, "failed writing checkpoint to " + dir.string());
  }
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(dir / "meta.json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptCheckpoint, "meta.json unreadable: " + std::string(e.what()));
  }
  const int version = meta.value("format_version", 0);
  if (version > kCheckpointFormatVersion) {
    throw Error(ErrorCode::kVersionMismatch,
                "checkpoint format version " + std::to_string(version) +
                    " is newer than supported version " +
                    std::to_string(kCheckpointFormatVersion));
  }
  if (version < 1) {
    throw Error(ErrorCode::kCorruptCheckpoint, "meta.json lacks a valid format_version");
  }

  const std::string blob = read_file(dir / "params.bin");
  if (sha256_hex(blob) != meta.value("params_sha256", std::string())) {
    throw Error(ErrorCode::kCorruptCheckpoint, "params.bin content hash does not match meta.json");
  }
  if (blob.size() < sizeof(kParamsMagic) ||
      std::memcmp(blob.data(), kParamsMagic, sizeof(kParamsMagic)) != 0) {
    throw Error(ErrorCode::kCorruptCheckpoint, "params.bin has an unknown header");
  }

  ModelCheckpoint ckpt;
  try {
    ckpt.schema = schema_from_json(meta.at("schema"));
    ckpt.dag = dag_spec_from_json(meta.at("dag"));
    ckpt.encoders = encoders_from_json(meta.at("encoders"));
    ckpt.config = training_config_from_json(meta.at("config"));
    ckpt.epoch = meta.at("epoch").get<std::size_t>();
    ckpt.rng_state = meta.at("rng_state").get<std::string>();

    std::size_t offset = sizeof(kParamsMagic);
    for (const auto& entry : meta.at("arrays")) {
      const auto rows = entry.at("rows").get<Eigen::Index>();
      const auto cols = entry.at("cols").get<Eigen::Index>();
      const std::size_t bytes = static_cast<std::size_t>(rows * cols) * sizeof(double);
      if (rows < 0 || cols < 0 || offset + bytes > blob.size()) {
        throw Error(ErrorCode::kCorruptCheckpoint, "params.bin is truncated");
      }
      Eigen::MatrixXd m(rows, cols);
      std::memcpy(m.data(), blob.data() + offset, bytes);
      offset += bytes;
      const auto group = entry.at("group").get<std::string>();
      auto& target = group == "generator" ? ckpt.generator_params : ckpt.critic_params;
      target.add(entry.at("name").get<std::string>(), std::move(m));
    }
    if (offset != blob.size()) {
      throw Error(ErrorCode::kCorruptCheckpoint, "params.bin has trailing bytes");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptCheckpoint, std::string("meta.json malformed: ") + e.what());
  }

  ckpt.graph = build_graph(ckpt.dag.dag, ckpt.dag.conditional_inputs, ckpt.schema);
  if (to_json(ckpt.graph) != meta.at("graph")) {
    throw Error(ErrorCode::kCorruptCheckpoint, "stored generator graph disagrees with the DAG");
  }
  // Constructing the networks checks every parameter shape.
  try {
    (void)ckpt.make_generator();
    (void)ckpt.make_critic();
  } catch (const Error& e) {
    throw Error(ErrorCode::kCorruptCheckpoint, e.what());
  }
  return ckpt;
}

}  // namespace dagsynth
