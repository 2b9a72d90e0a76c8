#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <functional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dagsynth/dag.hpp"
#include "dagsynth/encoding.hpp"
#include "dagsynth/model.hpp"
#include "dagsynth/table.hpp"

namespace dagsynth {

struct LossRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;  // generator step, counted from 0 across the run
  double critic_loss = 0.0;
  double generator_loss = 0.0;
  double penalty = 0.0;
};

void write_loss_trace(std::span<const LossRecord> trace, std::ostream& out);

// Seeded epoch permutation cut into consecutive batches; the last batch may
// be partial.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n_rows, std::size_t batch_size,
                                                    std::mt19937_64& rng);

// One training batch. The conditional-input block and the real complementary
// block are encoded from the rows listed next to them.
struct TrainingBatch {
  std::vector<std::size_t> ci_rows;
  std::vector<std::size_t> real_rows;
  Eigen::MatrixXd ci;    // exact one-hot / mode encoding, generator graph order
  Eigen::MatrixXd real;  // smoothed encoding of the generated variables
};

class BatchAssembler {
 public:
  BatchAssembler(const DataTable& feeder, const EncoderSet& encoders,
                 std::vector<std::string> ci_names, std::vector<std::string> generated_names);

  TrainingBatch assemble(std::span<const std::size_t> rows, std::mt19937_64& rng) const;

 private:
  const DataTable& feeder_;
  const EncoderSet& encoders_;
  std::vector<std::string> ci_names_;
  std::vector<std::string> generated_names_;
};

struct TrainingObserver {
  std::function<void(std::size_t epoch, const TrainingBatch&)> on_batch;
  std::function<void(const LossRecord&)> on_step;
  // Called every `checkpoint_every` epochs and never for the final epoch.
  std::function<void(const ModelCheckpoint&)> on_checkpoint;
};

struct TrainingResult {
  ModelCheckpoint checkpoint;
  std::vector<LossRecord> trace;
  std::vector<std::string> warnings;
};

TrainingResult train(const DataTable& feeder, const Dag& dag,
                     std::span<const std::string> conditional_inputs,
                     const TrainingConfig& config, const TrainingObserver* observer = nullptr);

}  // namespace dagsynth
