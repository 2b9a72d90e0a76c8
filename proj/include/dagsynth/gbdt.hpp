#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dagsynth {

struct BoostingConfig {
  std::size_t n_trees = 500;
  std::size_t max_depth = 8;
  double learning_rate = 0.1;
  std::size_t max_bins = 64;
  double l2 = 1.0;
  std::size_t min_leaf_rows = 5;
};

// Histogram gradient boosting with Newton leaf values. Features are numeric
// columns of `features` (rows are samples); category codes are split as
// ordered values.
class BoostedTrees {
 public:
  // Softmax loss over classes 0..n_classes-1; one tree per class per round.
  static BoostedTrees fit_classifier(const Eigen::MatrixXd& features,
                                     std::span<const std::int32_t> labels, int n_classes,
                                     const BoostingConfig& config);
  // Squared error.
  static BoostedTrees fit_regressor(const Eigen::MatrixXd& features,
                                    std::span<const double> targets, const BoostingConfig& config);

  // Class probabilities (rows x classes) or predictions (rows x 1).
  Eigen::MatrixXd predict(const Eigen::MatrixXd& features) const;

  int n_outputs() const noexcept { return n_outputs_; }

 private:
  struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    int threshold = 0; // bins <= threshold go left
    int left = -1;
    int right = -1;
    double value = 0.0;
  };
  using Tree = std::vector<TreeNode>;

  class Trainer;

  std::vector<std::vector<double>> cuts_;
  int n_outputs_ = 1;
  bool classifier_ = false;
  Eigen::RowVectorXd base_;
  std::vector<Tree> trees_;  // round-major, n_outputs_ per round

  std::vector<std::uint8_t> bin_features(const Eigen::MatrixXd& features) const;
  Eigen::MatrixXd raw_scores(const Eigen::MatrixXd& features) const;
};

}  // namespace dagsynth
