#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dagsynth/model.hpp"
#include "dagsynth/sampler.hpp"
#include "support.hpp"

namespace dagsynth {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("dagsynth_ckpt_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  static const ModelCheckpoint& model() {
    static const ModelCheckpoint m = testing::tiny_toy_model().checkpoint;
    return m;
  }

  fs::path dir_;
};

TEST_F(CheckpointTest, RoundTripIsIdentical) {
  save_checkpoint(model(), dir_ / "a");
  const ModelCheckpoint loaded = load_checkpoint(dir_ / "a");
  EXPECT_EQ(loaded, model());
  save_checkpoint(loaded, dir_ / "b");
  EXPECT_EQ(slurp(dir_ / "a" / "meta.json"), slurp(dir_ / "b" / "meta.json"));
  EXPECT_EQ(slurp(dir_ / "a" / "params.bin"), slurp(dir_ / "b" / "params.bin"));
}

TEST_F(CheckpointTest, SampleAfterReloadIsIdentical) {
  save_checkpoint(model(), dir_);
  const DataTable toy = make_label_noise_toy(300, 9);
  const SampleOptions opts{7, 128};
  std::ostringstream before;
  std::ostringstream after;
  write_csv(sample(model(), toy, opts), before);
  write_csv(sample(load_checkpoint(dir_), toy, opts), after);
  EXPECT_EQ(before.str(), after.str());
}

TEST_F(CheckpointTest, TruncatedParams) {
  save_checkpoint(model(), dir_);
  const std::string blob = slurp(dir_ / "params.bin");
  std::ofstream(dir_ / "params.bin", std::ios::binary | std::ios::trunc)
      .write(blob.data(), static_cast<std::streamsize>(blob.size() / 2));
  EXPECT_EQ(testing::error_code_of([&] { load_checkpoint(dir_); }), ErrorCode::kCorruptCheckpoint);
}

TEST_F(CheckpointTest, FlippedByte) {
  save_checkpoint(model(), dir_);
  std::string blob = slurp(dir_ / "params.bin");
  blob[blob.size() - 3] ^= 0x5a;
  std::ofstream(dir_ / "params.bin", std::ios::binary | std::ios::trunc) << blob;
  EXPECT_EQ(testing::error_code_of([&] { load_checkpoint(dir_); }), ErrorCode::kCorruptCheckpoint);
}

TEST_F(CheckpointTest, MissingFiles) {
  EXPECT_EQ(testing::error_code_of([&] { load_checkpoint(dir_); }), ErrorCode::kCorruptCheckpoint);
}

TEST_F(CheckpointTest, NewerVersionNamesBoth) {
  save_checkpoint(model(), dir_);
  auto meta = nlohmann::json::parse(slurp(dir_ / "meta.json"));
  meta["format_version"] = kCheckpointFormatVersion + 1;
  std::ofstream(dir_ / "meta.json", std::ios::trunc) << meta.dump();
  try {
    load_checkpoint(dir_);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kVersionMismatch);
    const std::string msg = e.what();
    EXPECT_NE(msg.find(std::to_string(kCheckpointFormatVersion + 1)), std::string::npos);
    EXPECT_NE(msg.find(std::to_string(kCheckpointFormatVersion)), std::string::npos);
  }
}

TEST(TrainingConfigJson, RoundTripAndUnknownKey) {
  TrainingConfig c;
  c.epochs = 17;
  c.beta1 = 0.3;
  c.dims.hidden = 11;
  c.critic.layer_norm = false;
  c.discriminator_conditioning = false;
  EXPECT_EQ(training_config_from_json(to_json(c)), c);
  EXPECT_EQ(training_config_from_json(nlohmann::json::object()), TrainingConfig{});
  EXPECT_EQ(testing::error_code_of([] {
              training_config_from_json(nlohmann::json{{"epochz", 3}});
            }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(testing::error_code_of([] {
              training_config_from_json(nlohmann::json{{"batch_size", 0}});
            }),
            ErrorCode::kInvalidArgument);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamSet p;
  p.add("w", Eigen::MatrixXd::Constant(1, 2, 1.0));
  Adam opt(0.1, 0.5, 0.9);
  Eigen::MatrixXd g(1, 2);
  g << 3.0, -0.01;
  const ad::Var grads[] = {ad::Var(g)};
  opt.step(p, grads);
  // Bias-corrected first step is lr * sign(g) up to epsilon.
  EXPECT_NEAR(p.value(0)(0, 0), 0.9, 1e-6);
  EXPECT_NEAR(p.value(0)(0, 1), 1.1, 1e-5);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Glorot, BoundsAndDeterminism) {
  std::mt19937_64 a(1);
  std::mt19937_64 b(1);
  const Eigen::MatrixXd m = glorot_uniform(30, 20, a);
  EXPECT_EQ(m, glorot_uniform(30, 20, b));
  EXPECT_LE(m.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 50.0));
}

}  // namespace
}  // namespace dagsynth
