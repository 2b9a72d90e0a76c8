#include "dagsynth/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dagsynth/errors.hpp"

namespace dagsynth {

namespace {

std::vector<double> feature_cuts(const Eigen::MatrixXd& features, Eigen::Index col,
                                 std::size_t max_bins) {
  std::vector<double> values(features.col(col).data(),
                             features.col(col).data() + features.rows());
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::vector<double> cuts;
  if (values.size() <= max_bins) {
    for (std::size_t i = 1; i < values.size(); ++i) {
      cuts.push_back(0.5 * (values[i - 1] + values[i]));
    }
    return cuts;
  }
  for (std::size_t j = 1; j < max_bins; ++j) {
    const auto pos = j * (values.size() - 1) / max_bins;
    const double cut = 0.5 * (values[pos] + values[pos + 1]);
    if (cuts.empty() || cut > cuts.back()) {
      cuts.push_back(cut);
    }
  }
  return cuts;
}

void check_inputs(const Eigen::MatrixXd& features, std::size_t n_targets,
                  const BoostingConfig& config) {
  if (features.rows() == 0) {
    throw Error(ErrorCode::kEmptyTable, "boosting needs at least one training row");
  }
  if (static_cast<std::size_t>(features.rows()) != n_targets) {
    throw Error(ErrorCode::kShapeMismatch, "boosting: feature and target row counts differ");
  }
  if (config.max_bins < 2 || config.max_bins > 256 || config.learning_rate <= 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "boosting: invalid configuration");
  }
}

}  // namespace

class BoostedTrees::Trainer {
 public:
  Trainer(const BoostedTrees& model, const Eigen::MatrixXd& features,
          const BoostingConfig& config)
      : config_(config),
        n_rows_(static_cast<std::size_t>(features.rows())),
        n_features_(static_cast<std::size_t>(features.cols())),
        bins_(model.bin_features(features)),
        rows_(n_rows_) {
    for (const auto& c : model.cuts_) {
      n_bins_.push_back(c.size() + 1);
    }
  }

  // Fits one tree to (grad, hess); leaf values already include the learning
  // rate. `update` receives each row's leaf value.
  Tree fit(const std::vector<double>& grad, const std::vector<double>& hess,
           std::vector<double>& update) {
    grad_ = &grad;
    hess_ = &hess;
    std::iota(rows_.begin(), rows_.end(), std::size_t{0});
    Tree tree;
    grow(tree, 0, n_rows_, 0, update);
    return tree;
  }

 private:
  const BoostingConfig& config_;
  std::size_t n_rows_;
  std::size_t n_features_;
  std::vector<std::uint8_t> bins_;
  std::vector<std::size_t> n_bins_;
  std::vector<std::size_t> rows_;
  const std::vector<double>* grad_ = nullptr;
  const std::vector<double>* hess_ = nullptr;

  std::uint8_t bin(std::size_t row, std::size_t feature) const {
    return bins_[feature * n_rows_ + row];
  }

  int grow(Tree& tree, std::size_t begin, std::size_t end, std::size_t depth,
           std::vector<double>& update) {
    const int index = static_cast<int>(tree.size());
    tree.emplace_back();
    double g_total = 0.0;
    double h_total = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      g_total += (*grad_)[rows_[i]];
      h_total += (*hess_)[rows_[i]];
    }
    const std::size_t count = end - begin;
    const double parent_score = g_total * g_total / (h_total + config_.l2);

    int best_feature = -1;
    int best_threshold = 0;
    double best_gain = 1e-12;
    if (depth < config_.max_depth && count >= 2 * config_.min_leaf_rows) {
      std::vector<double> g_hist;
      std::vector<double> h_hist;
      std::vector<std::size_t> c_hist;
      for (std::size_t f = 0; f < n_features_; ++f) {
        const std::size_t nb = n_bins_[f];
        if (nb < 2) {
          continue;
        }
        g_hist.assign(nb, 0.0);
        h_hist.assign(nb, 0.0);
        c_hist.assign(nb, 0);
        for (std::size_t i = begin; i < end; ++i) {
          const std::size_t r = rows_[i];
          const std::uint8_t b = bin(r, f);
          g_hist[b] += (*grad_)[r];
          h_hist[b] += (*hess_)[r];
          ++c_hist[b];
        }
        double g_left = 0.0;
        double h_left = 0.0;
        std::size_t c_left = 0;
        for (std::size_t b = 0; b + 1 < nb; ++b) {
          g_left += g_hist[b];
          h_left += h_hist[b];
          c_left += c_hist[b];
          if (c_left < config_.min_leaf_rows) {
            continue;
          }
          if (count - c_left < config_.min_leaf_rows) {
            break;
          }
          const double g_right = g_total - g_left;
          const double h_right = h_total - h_left;
          const double gain = g_left * g_left / (h_left + config_.l2) +
                              g_right * g_right / (h_right + config_.l2) - parent_score;
          if (gain > best_gain) {
            best_gain = gain;
            best_feature = static_cast<int>(f);
            best_threshold = static_cast<int>(b);
          }
        }
      }
    }

    if (best_feature < 0) {
      const double value = -config_.learning_rate * g_total / (h_total + config_.l2);
      tree[index].value = value;
      for (std::size_t i = begin; i < end; ++i) {
        update[rows_[i]] = value;
      }
      return index;
    }

    const auto f = static_cast<std::size_t>(best_feature);
    const auto mid = std::partition(rows_.begin() + static_cast<std::ptrdiff_t>(begin),
                                    rows_.begin() + static_cast<std::ptrdiff_t>(end),
                                    [&](std::size_t r) { return bin(r, f) <= best_threshold; });
    const auto split = static_cast<std::size_t>(mid - rows_.begin());
    tree[index].feature = best_feature;
    tree[index].threshold = best_threshold;
    const int left = grow(tree, begin, split, depth + 1, update);
    const int right = grow(tree, split, end, depth + 1, update);
    tree[index].left = left;
    tree[index].right = right;
    return index;
  }
};

std::vector<std::uint8_t> BoostedTrees::bin_features(const Eigen::MatrixXd& features) const {
  if (static_cast<std::size_t>(features.cols()) != cuts_.size()) {
    throw Error(ErrorCode::kShapeMismatch, "boosting: feature count differs from training");
  }
  const auto n = static_cast<std::size_t>(features.rows());
  std::vector<std::uint8_t> out(n * cuts_.size());
  for (std::size_t f = 0; f < cuts_.size(); ++f) {
    const auto& cuts = cuts_[f];
    for (std::size_t r = 0; r < n; ++r) {
      const double v = features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f));
      out[f * n + r] =
          static_cast<std::uint8_t>(std::upper_bound(cuts.begin(), cuts.end(), v) - cuts.begin());
    }
  }
  return out;
}

BoostedTrees BoostedTrees::fit_classifier(const Eigen::MatrixXd& features,
                                          std::span<const std::int32_t> labels, int n_classes,
                                          const BoostingConfig& config) {
  check_inputs(features, labels.size(), config);
  if (n_classes < 2) {
    throw Error(ErrorCode::kInvalidArgument, "classifier needs at least two classes");
  }
  BoostedTrees model;
  model.classifier_ = true;
  model.n_outputs_ = n_classes;
  for (Eigen::Index c = 0; c < features.cols(); ++c) {
    model.cuts_.push_back(feature_cuts(features, c, config.max_bins));
  }
  const std::size_t n = labels.size();
  const auto k = static_cast<std::size_t>(n_classes);

  std::vector<double> counts(k, 1.0);
  for (const auto y : labels) {
    if (y < 0 || y >= n_classes) {
      throw Error(ErrorCode::kInvalidArgument, "class label out of range");
    }
    counts[static_cast<std::size_t>(y)] += 1.0;
  }
  model.base_.resize(n_classes);
  for (std::size_t c = 0; c < k; ++c) {
    model.base_(static_cast<Eigen::Index>(c)) = std::log(counts[c] / (static_cast<double>(n + k)));
  }

  Eigen::MatrixXd scores = model.base_.replicate(static_cast<Eigen::Index>(n), 1);
  Trainer trainer(model, features, config);
  std::vector<double> grad(n);
  std::vector<double> hess(n);
  std::vector<double> update(n);
  Eigen::MatrixXd prob(static_cast<Eigen::Index>(n), n_classes);
  for (std::size_t round = 0; round < config.n_trees; ++round) {
    prob = (scores.colwise() - scores.rowwise().maxCoeff()).array().exp();
    prob.array().colwise() /= prob.rowwise().sum().array();
    for (std::size_t c = 0; c < k; ++c) {
      const auto col = static_cast<Eigen::Index>(c);
      for (std::size_t r = 0; r < n; ++r) {
        const double p = prob(static_cast<Eigen::Index>(r), col);
        grad[r] = p - (static_cast<std::size_t>(labels[r]) == c ? 1.0 : 0.0);
        hess[r] = std::max(p * (1.0 - p), 1e-16);
      }
      model.trees_.push_back(trainer.fit(grad, hess, update));
      for (std::size_t r = 0; r < n; ++r) {
        scores(static_cast<Eigen::Index>(r), col) += update[r];
      }
    }
  }
  return model;
}

BoostedTrees BoostedTrees::fit_regressor(const Eigen::MatrixXd& features,
                                         std::span<const double> targets,
                                         const BoostingConfig& config) {
  check_inputs(features, targets.size(), config);
  BoostedTrees model;
  for (Eigen::Index c = 0; c < features.cols(); ++c) {
    model.cuts_.push_back(feature_cuts(features, c, config.max_bins));
  }
  const std::size_t n = targets.size();
  model.base_.resize(1);
  model.base_(0) = std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(n);

  std::vector<double> scores(n, model.base_(0));
  Trainer trainer(model, features, config);
  std::vector<double> grad(n);
  const std::vector<double> hess(n, 1.0);
  std::vector<double> update(n);
  for (std::size_t round = 0; round < config.n_trees; ++round) {
    for (std::size_t r = 0; r < n; ++r) {
      grad[r] = scores[r] - targets[r];
    }
    model.trees_.push_back(trainer.fit(grad, hess, update));
    for (std::size_t r = 0; r < n; ++r) {
      scores[r] += update[r];
    }
  }
  return model;
}

Eigen::MatrixXd BoostedTrees::raw_scores(const Eigen::MatrixXd& features) const {
  const auto bins = bin_features(features);
  const auto n = static_cast<std::size_t>(features.rows());
  Eigen::MatrixXd scores = base_.replicate(features.rows(), 1);
  const auto k = static_cast<std::size_t>(n_outputs_);
  for (std::size_t t = 0; t < trees_.size(); ++t) {
    const Tree& tree = trees_[t];
    const auto col = static_cast<Eigen::Index>(t % k);
    for (std::size_t r = 0; r < n; ++r) {
      int node = 0;
      while (tree[static_cast<std::size_t>(node)].feature >= 0) {
        const TreeNode& tn = tree[static_cast<std::size_t>(node)];
        node = bins[static_cast<std::size_t>(tn.feature) * n + r] <= tn.threshold ? tn.left
                                                                                  : tn.right;
      }
      scores(static_cast<Eigen::Index>(r), col) += tree[static_cast<std::size_t>(node)].value;
    }
  }
  return scores;
}

Eigen::MatrixXd BoostedTrees::predict(const Eigen::MatrixXd& features) const {
  Eigen::MatrixXd scores = raw_scores(features);
  if (!classifier_) {
    return scores;
  }
  Eigen::MatrixXd prob = (scores.colwise() - scores.rowwise().maxCoeff()).array().exp();
  prob.array().colwise() /= prob.rowwise().sum().array();
  return prob;
}

}  // namespace dagsynth
