#include "dagsynth/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dagsynth/autodiff.hpp"
#include "dagsynth/csv.hpp"
#include "dagsynth/errors.hpp"
#include "dagsynth/params.hpp"
#include "dagsynth/seeding.hpp"

namespace dagsynth {

using ad::Var;

namespace {

enum SeedStream : std::uint64_t { kEncoderSeed = 0, kGeneratorInit = 1, kCriticInit = 2, kLoop = 3 };

Eigen::MatrixXd critic_rows(const Eigen::MatrixXd& generated, const Eigen::MatrixXd& ci,
                            bool conditioning) {
  if (!conditioning || ci.cols() == 0) {
    return generated;
  }
  Eigen::MatrixXd out(generated.rows(), generated.cols() + ci.cols());
  out << generated, ci;
  return out;
}

bool all_finite(std::span<const Var> grads) {
  return std::all_of(grads.begin(), grads.end(),
                     [](const Var& g) { return g.value().allFinite(); });
}

}  // namespace

void write_loss_trace(std::span<const LossRecord> trace, std::ostream& out) {
  write_csv_row(out, std::vector<std::string>{"epoch", "step", "loss_D", "loss_G", "gp"});
  for (const auto& r : trace) {
    write_csv_row(out, std::vector<std::string>{std::to_string(r.epoch), std::to_string(r.step),
                                                format_double(r.critic_loss),
                                                format_double(r.generator_loss),
                                                format_double(r.penalty)});
  }
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n_rows, std::size_t batch_size,
                                                    std::mt19937_64& rng) {
  std::vector<std::size_t> order(n_rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n_rows; start += batch_size) {
    const std::size_t end = std::min(n_rows, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

BatchAssembler::BatchAssembler(const DataTable& feeder, const EncoderSet& encoders,
                               std::vector<std::string> ci_names,
                               std::vector<std::string> generated_names)
    : feeder_(feeder),
      encoders_(encoders),
      ci_names_(std::move(ci_names)),
      generated_names_(std::move(generated_names)) {}

TrainingBatch BatchAssembler::assemble(std::span<const std::size_t> rows,
                                       std::mt19937_64& rng) const {
  TrainingBatch batch;
  batch.ci_rows.assign(rows.begin(), rows.end());
  // An empty name list means every column to the encoder.
  batch.ci = ci_names_.empty()
                 ? Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()), 0)
                 : encode_rows(feeder_, encoders_, ci_names_, batch.ci_rows);
  batch.real_rows.assign(rows.begin(), rows.end());
  batch.real = encode_rows(feeder_, encoders_, generated_names_, batch.real_rows, &rng);
  return batch;
}

TrainingResult train(const DataTable& feeder, const Dag& dag,
                     std::span<const std::string> conditional_inputs,
                     const TrainingConfig& config, const TrainingObserver* observer) {
  config.validate();
  if (feeder.n_rows() == 0) {
    throw Error(ErrorCode::kEmptyTable, "feeder table has no rows");
  }
  if (config.batch_size > feeder.n_rows()) {
    throw Error(ErrorCode::kInvalidArgument,
                "batch_size " + std::to_string(config.batch_size) + " exceeds the " +
                    std::to_string(feeder.n_rows()) + " feeder rows");
  }

  TrainingResult result;
  auto& ckpt = result.checkpoint;
  ckpt.schema = feeder.schema();
  ckpt.dag = {dag, {conditional_inputs.begin(), conditional_inputs.end()}};
  ckpt.config = config;
  ckpt.graph = build_graph(dag, conditional_inputs, feeder.schema());
  if (ckpt.graph.generated().empty()) {
    throw Error(ErrorCode::kInvalidArgument, "every variable is a conditional input; nothing to generate");
  }

  EncoderOptions enc_options;
  enc_options.n_modes = config.n_modes;
  enc_options.smoothing = config.smoothing;
  enc_options.seed = derive_seed(config.seed, kEncoderSeed);
  ckpt.encoders = fit_encoders(feeder, enc_options, &result.warnings);

  Generator generator(ckpt.graph, ckpt.encoders, config.dims,
                      derive_seed(config.seed, kGeneratorInit));
  Critic critic(ckpt.critic_input_width(), config.critic, derive_seed(config.seed, kCriticInit));
  Adam gen_opt(config.learning_rate, config.beta1, config.beta2);
  Adam critic_opt(config.learning_rate, config.beta1, config.beta2);
  std::mt19937_64 rng(derive_seed(config.seed, kLoop));

  const BatchAssembler assembler(feeder, ckpt.encoders, generator.ci_names(),
                                 generator.generated_names());
  const bool conditioning = config.discriminator_conditioning;

  auto snapshot = [&](std::size_t epoch) {
    ckpt.generator_params = generator.params();
    ckpt.critic_params = critic.params();
    ckpt.epoch = epoch;
    ckpt.rng_state = save_rng_state(rng);
  };

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (const auto& rows : epoch_batches(feeder.n_rows(), config.batch_size, rng)) {
      const TrainingBatch batch = assembler.assemble(rows, rng);
      if (observer && observer->on_batch) {
        observer->on_batch(epoch, batch);
      }
      const auto n = static_cast<Eigen::Index>(rows.size());
      const Eigen::MatrixXd real = critic_rows(batch.real, batch.ci, conditioning);

      LossRecord record;
      record.epoch = epoch;
      record.step = step;
      for (std::size_t k = 0; k < config.n_critic; ++k) {
        const Eigen::MatrixXd fake =
            critic_rows(generator.generate(generator.draw_noise(n, rng), batch.ci), batch.ci,
                        conditioning);
        const auto params = critic.params().bind(true);
        const Var real_scores = critic.score(params, ad::constant(real));
        const Var fake_scores = critic.score(params, ad::constant(fake));
        const Var penalty = gradient_penalty(critic, params, real, fake, rng);
        const auto losses = adversarial_losses(real_scores, fake_scores, penalty, config.gp_lambda);
        const auto grads = ad::grad(losses.critic, params);
        record.critic_loss = losses.critic.scalar();
        record.penalty = penalty.scalar();
        if (!std::isfinite(record.critic_loss) || !all_finite(grads)) {
          throw Error(ErrorCode::kNonFiniteLoss,
                      "critic loss became non-finite at step " + std::to_string(step) +
                          " (epoch " + std::to_string(epoch) + ")");
        }
        critic_opt.step(critic.params(), grads);
      }

      const auto gen_params = generator.params().bind(true);
      const auto forward =
          generator.forward(gen_params, generator.draw_noise(n, rng), batch.ci);
      Var fake = forward.output;
      if (conditioning && batch.ci.cols() > 0) {
        const Var parts[] = {fake, ad::constant(batch.ci)};
        fake = ad::concat_cols(parts);
      }
      const auto critic_params = critic.params().bind(false);
      const Var gen_loss = ad::scale(ad::mean_all(critic.score(critic_params, fake)), -1.0);
      const auto grads = ad::grad(gen_loss, gen_params);
      record.generator_loss = gen_loss.scalar();
      if (!std::isfinite(record.generator_loss) || !all_finite(grads)) {
        throw Error(ErrorCode::kNonFiniteLoss,
                    "generator loss became non-finite at step " + std::to_string(step) +
                        " (epoch " + std::to_string(epoch) + ")");
      }
      gen_opt.step(generator.params(), grads);

      result.trace.push_back(record);
      if (observer && observer->on_step) {
        observer->on_step(record);
      }
      ++step;
    }
    const std::size_t done = epoch + 1;
    if (config.checkpoint_every > 0 && done % config.checkpoint_every == 0 &&
        done < config.epochs && observer && observer->on_checkpoint) {
      snapshot(done);
      observer->on_checkpoint(ckpt);
    }
  }
  snapshot(config.epochs);
  return result;
}

}  // namespace dagsynth
