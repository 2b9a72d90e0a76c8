#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "dagsynth/metrics.hpp"
#include "dagsynth/toy.hpp"
#include "support.hpp"

namespace dagsynth {
namespace {

using testing::error_code_of;

VariableSpec categorical(std::string name, std::vector<std::string> cats) {
  return {std::move(name), VariableKind::kCategorical, std::move(cats), std::nullopt};
}

VariableSpec continuous(std::string name) {
  return {std::move(name), VariableKind::kContinuous, {}, std::nullopt};
}

TEST(FrequencyList, Categorical) {
  DataTable t(TableSchema({categorical("g", {"M", "F"})}), 4);
  t.codes(0) = {0, 0, 1, 1};
  const Binning b(t);
  const std::vector<std::string> v{"g"};
  const FrequencyList f = frequency_list(t, v, b);
  EXPECT_EQ(f.frequencies, (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(f.labels, (std::vector<std::string>{"M", "F"}));
}

TEST(FrequencyList, PairOfBinaries) {
  DataTable t(TableSchema({categorical("a", {"0", "1"}), categorical("b", {"0", "1"})}), 4);
  t.codes(0) = {0, 0, 1, 1};
  t.codes(1) = {0, 1, 0, 1};
  const Binning b(t);
  const std::vector<std::string> v{"a", "b"};
  const FrequencyList f = frequency_list(t, v, b);
  EXPECT_EQ(f.frequencies, (std::vector<double>(4, 0.25)));
  EXPECT_EQ(f.labels, (std::vector<std::string>{"0|0", "0|1", "1|0", "1|1"}));
}

TEST(FrequencyList, QuantileBinsOnOneToHundred) {
  DataTable t(TableSchema({continuous("v")}), 100);
  for (std::size_t i = 0; i < 100; ++i) {
    t.continuous(0)[i] = static_cast<double>(i + 1);
  }
  const Binning b(t);
  const std::vector<std::string> v{"v"};
  const FrequencyList f = frequency_list(t, v, b);
  ASSERT_EQ(f.frequencies.size(), kQuantileBins);
  for (double x : f.frequencies) {
    EXPECT_NEAR(x, 0.1, 1e-12);
  }
}

TEST(FrequencyList, BinsComeFromTheOriginal) {
  DataTable orig(TableSchema({continuous("v")}), 100);
  DataTable synth(TableSchema({continuous("v")}), 100);
  for (std::size_t i = 0; i < 100; ++i) {
    orig.continuous(0)[i] = static_cast<double>(i + 1);
    synth.continuous(0)[i] = 1000.0;
  }
  const Binning b(orig);
  const std::vector<std::string> v{"v"};
  const FrequencyList f = frequency_list(synth, v, b);
  EXPECT_DOUBLE_EQ(f.frequencies.back(), 1.0);
}

// Brute-force reference: type-7 quantile cuts and a linear bin search.
std::vector<double> oracle_continuous_frequencies(const std::vector<double>& orig,
                                                  const std::vector<double>& values) {
  std::vector<double> sorted = orig;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> cuts;
  for (std::size_t k = 1; k < kQuantileBins; ++k) {
    const double h = (static_cast<double>(sorted.size()) - 1.0) * static_cast<double>(k) /
                     static_cast<double>(kQuantileBins);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    cuts.push_back(sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]));
  }
  std::vector<double> freq(kQuantileBins, 0.0);
  for (double v : values) {
    std::size_t bin = 0;
    for (double c : cuts) {
      bin += c <= v ? 1 : 0;
    }
    freq[bin] += 1.0 / static_cast<double>(values.size());
  }
  return freq;
}

TEST(FrequencyList, MatchesBruteForceAndSumsToOne) {
  std::mt19937_64 rng(12);
  const TableSchema schema({continuous("a"), categorical("b", {"p", "q", "r"})});
  for (int trial = 0; trial < 20; ++trial) {
    const DataTable orig = testing::random_table(schema, 50 + rng() % 200, rng);
    const DataTable synth = testing::random_table(schema, 30 + rng() % 200, rng);
    const Binning b(orig);
    const std::vector<std::string> a{"a"};
    const FrequencyList f = frequency_list(synth, a, b);
    const auto expected = oracle_continuous_frequencies(orig.continuous(0), synth.continuous(0));
    ASSERT_EQ(f.frequencies.size(), expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
      EXPECT_NEAR(f.frequencies[i], expected[i], 1e-12);
    }
    const std::vector<std::string> pair{"b", "a"};
    const FrequencyList fp = frequency_list(synth, pair, b);
    EXPECT_EQ(fp.frequencies.size(), 3 * kQuantileBins);
    double total = 0.0;
    for (double x : fp.frequencies) {
      EXPECT_GE(x, 0.0);
      total += x;
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(Srmse, WorkedExamples) {
  FrequencyList a{{"v"}, {"0", "1"}, {0.5, 0.5}};
  FrequencyList b{{"v"}, {"0", "1"}, {1.0, 0.0}};
  EXPECT_DOUBLE_EQ(srmse(a, a), 0.0);
  EXPECT_DOUBLE_EQ(srmse(a, b), 1.0);
  FrequencyList q{{"v"}, {"0", "1", "2", "3"}, {0.25, 0.25, 0.25, 0.25}};
  EXPECT_DOUBLE_EQ(srmse(q, q), 0.0);
  EXPECT_EQ(error_code_of([&] { srmse(a, q); }), ErrorCode::kBinMismatch);
}

TEST(Kl, WorkedExamples) {
  const std::vector<double> half{0.5, 0.5};
  const std::vector<double> one{1.0, 0.0};
  const std::vector<double> skew{0.75, 0.25};
  EXPECT_DOUBLE_EQ(kl(half, half), 0.0);
  EXPECT_DOUBLE_EQ(kl(one, half), 1.0);
  EXPECT_NEAR(kl(half, skew), 0.5 * std::log2(2.0 / 3.0) + 0.5 * std::log2(2.0), 1e-15);
  EXPECT_NEAR(kl(half, skew), 0.2075, 1e-4);
  EXPECT_EQ(error_code_of([&] { kl(half, one); }), ErrorCode::kSupportViolation);
  EXPECT_EQ(error_code_of([&] { kl(half, std::vector<double>{1.0}); }), ErrorCode::kBinMismatch);
}

TEST(Js, WorkedExamples) {
  const std::vector<double> half{0.5, 0.5};
  const std::vector<double> one{1.0, 0.0};
  const std::vector<double> other{0.0, 1.0};
  EXPECT_DOUBLE_EQ(js_distance(half, half), 0.0);
  EXPECT_DOUBLE_EQ(js_distance(one, other), 1.0);
  EXPECT_NEAR(js_distance(half, one), 0.5579, 1e-4);
}

TEST(MetricOracles, RandomCases) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 30;
    const auto p = testing::random_distribution(rng, n, 0.2);
    const auto q = testing::random_distribution(rng, n, 0.2);
    const auto q_full = testing::random_distribution(rng, n, 0.0);

    EXPECT_NEAR(kl(p, q_full), testing::oracle_kl(p, q_full), 1e-12);
    const double js = js_distance(p, q);
    EXPECT_NEAR(js, testing::oracle_js(p, q), 1e-12);
    EXPECT_DOUBLE_EQ(js, js_distance(q, p));
    EXPECT_GE(js, 0.0);
    EXPECT_LE(js, 1.0);
    EXPECT_GE(kl(p, q_full), -1e-15);

    std::vector<std::string> labels(n, "");
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = std::to_string(i);
    }
    const FrequencyList fp{{"v"}, labels, p};
    const FrequencyList fq{{"v"}, labels, q};
    EXPECT_NEAR(srmse(fp, fq), testing::oracle_srmse(p, q), 1e-12);
  }
}

TEST(Assess, SelfComparisonAndPairCounts) {
  std::mt19937_64 rng(3);
  const TableSchema schema(
      {continuous("a"), categorical("b", {"x", "y"}), categorical("c", {"1", "2", "3"})});
  const DataTable t = testing::random_table(schema, 300, rng);
  const MetricsReport l1 = assess(t, t, 1);
  ASSERT_EQ(l1.level1.size(), 3u);
  for (const auto& e : l1.level1) {
    EXPECT_EQ(e.value, 0.0);
  }
  const MetricsReport l2 = assess(t, t, 2);
  ASSERT_EQ(l2.level2.size(), 3u);
  EXPECT_EQ(l2.level2[0].variables, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(l2.mean_level2(), 0.0);
  const std::vector<std::string> excluded{"a"};
  EXPECT_EQ(assess(t, t, 2, excluded).level2.size(), 1u);
  EXPECT_FALSE(l1.mean_level2().has_value());
  EXPECT_EQ(error_code_of([&] { assess(t, t, 3); }), ErrorCode::kInvalidArgument);
}

TEST(Assess, SchemaMismatch) {
  std::mt19937_64 rng(3);
  const DataTable a = testing::random_table(TableSchema({continuous("a")}), 20, rng);
  const DataTable b = testing::random_table(TableSchema({continuous("b")}), 20, rng);
  EXPECT_EQ(error_code_of([&] { assess(a, b, 1); }), ErrorCode::kSchemaMismatch);
}

TEST(Assess, MatchedJointGivesZeroAtLevelTwo) {
  std::mt19937_64 rng(8);
  const TableSchema schema({categorical("a", {"x", "y"}), categorical("b", {"u", "v", "w"})});
  const DataTable t = testing::random_table(schema, 500, rng);
  std::vector<std::size_t> reversed(t.n_rows());
  for (std::size_t i = 0; i < reversed.size(); ++i) {
    reversed[i] = reversed.size() - 1 - i;
  }
  EXPECT_EQ(assess(t, t.select_rows(reversed), 2).level2[0].value, 0.0);
}

TEST(MetricsReport, JsonAndCsv) {
  MetricsReport r;
  r.level1 = {{{"a"}, 0.5}, {{"b"}, 1.5}};
  r.efficacy = {{"t", 2.0, 1.0, 1.0}};
  r.js = {{"v", "s1", 0.25}};
  EXPECT_EQ(r.mean_level1(), 1.0);
  const MetricsReport back = metrics_report_from_json(to_json(r));
  EXPECT_EQ(to_json(back), to_json(r));
  std::ostringstream csv;
  write_csv(r, csv);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "metric,variables,stratum,value");
  EXPECT_NE(csv.str().find("js,v,s1,0.25"), std::string::npos);
}

TEST(MlEfficacy, SelfComparisonIsZero) {
  const DataTable toy = make_label_noise_toy(1000, 5);
  for (std::uint64_t seed = 0; seed < 2; ++seed) {
    EfficacyOptions opts;
    opts.n_trees = 60;
    opts.seed = seed;
    const EfficacyEntry e = ml_efficacy(toy, toy, "y", opts);
    EXPECT_NEAR(e.relative, 0.0, 0.05);
    EXPECT_GT(e.original_loss, 0.0);
  }
}

TEST(MlEfficacy, ShuffledTargetScoresWorse) {
  const DataTable toy = make_label_noise_toy(1000, 5);
  DataTable shuffled = toy;
  std::mt19937_64 rng(1);
  std::shuffle(shuffled.codes(1).begin(), shuffled.codes(1).end(), rng);
  EfficacyOptions opts;
  opts.n_trees = 60;
  EXPECT_GT(ml_efficacy(toy, shuffled, "y", opts).relative, 0.5);
}

TEST(MlEfficacy, ContinuousOrderingPreserved) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  const TableSchema schema({continuous("x"), continuous("y")});
  auto draw = [&](std::size_t rows) {
    DataTable t(schema, rows);
    for (std::size_t r = 0; r < rows; ++r) {
      t.continuous(0)[r] = n(rng);
      t.continuous(1)[r] = t.continuous(0)[r] + 0.1 * n(rng);
    }
    return t;
  };
  const DataTable original = draw(600);
  const DataTable informative = draw(600);
  DataTable uninformative = draw(600);
  std::shuffle(uninformative.continuous(1).begin(), uninformative.continuous(1).end(), rng);
  EfficacyOptions opts;
  opts.n_trees = 60;
  const double good = ml_efficacy(original, informative, "y", opts).relative;
  const double bad = ml_efficacy(original, uninformative, "y", opts).relative;
  EXPECT_LT(good, bad);
  EXPECT_LT(good, 1.0);
}

TEST(MlEfficacy, SingleClassTarget) {
  const DataTable toy = make_label_noise_toy(200, 5);
  DataTable flat = toy;
  std::fill(flat.codes(1).begin(), flat.codes(1).end(), 0);
  EXPECT_EQ(error_code_of([&] { ml_efficacy(toy, flat, "y", {}); }),
            ErrorCode::kSingleClassTarget);
}

}  // namespace
}  // namespace dagsynth
