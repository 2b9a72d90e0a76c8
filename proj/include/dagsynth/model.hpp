#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dagsynth/critic.hpp"
#include "dagsynth/dag.hpp"
#include "dagsynth/encoding.hpp"
#include "dagsynth/generator.hpp"
#include "dagsynth/params.hpp"
#include "dagsynth/table.hpp"

namespace dagsynth {

struct TrainingConfig {
  std::size_t epochs = 1000;
  std::size_t batch_size = 500;
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  std::size_t n_critic = 2;
  double gp_lambda = 10.0;
  std::uint64_t seed = 0;
  GeneratorDims dims;
  CriticConfig critic;
  // Feed the encoded conditional inputs to the critic next to the generated columns.
  bool discriminator_conditioning = true;
  std::size_t checkpoint_every = 0;  // epochs; 0 disables intermediate checkpoints
  std::size_t n_modes = 5;
  double smoothing = 0.2;

  void validate() const;

  friend bool operator==(const TrainingConfig&, const TrainingConfig&) = default;
};

nlohmann::json to_json(const TrainingConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
TrainingConfig training_config_from_json(const nlohmann::json& j);
TrainingConfig load_training_config(const std::filesystem::path& path);

struct ModelCheckpoint {
  TableSchema schema;  // feeder schema
  DagSpec dag;         // DAG as supplied, with the conditional inputs
  EncoderSet encoders;
  GeneratorGraph graph;
  TrainingConfig config;
  ParamSet generator_params;
  ParamSet critic_params;
  std::size_t epoch = 0;
  std::string rng_state;

  Generator make_generator() const;
  Critic make_critic() const;
  // Generated columns, followed by the conditional inputs when conditioning is on.
  std::size_t critic_input_width() const;

  friend bool operator==(const ModelCheckpoint&, const ModelCheckpoint&) = default;
};

inline constexpr int kCheckpointFormatVersion = 1;

// Writes meta.json and params.bin into `dir` (created if needed).
void save_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& dir);
ModelCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace dagsynth
