// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any of them fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dagsynth/csv.hpp"
#include "dagsynth/encoding.hpp"
#include "dagsynth/generator.hpp"
#include "dagsynth/harness.hpp"
#include "dagsynth/metrics.hpp"
#include "dagsynth/model.hpp"
#include "dagsynth/sampler.hpp"
#include "dagsynth/toy.hpp"
#include "dagsynth/trainer.hpp"
#include "support.hpp"

namespace dagsynth {
namespace {

using Eigen::MatrixXd;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m(i) = n(rng);
  }
  return m;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

Outcome dag_suite() {
  const auto start = Clock::now();
  std::mt19937_64 rng(1);
  std::size_t reversal_cycles = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng() % 12;
    const double p = std::uniform_real_distribution<double>(0.05, 0.6)(rng);
    Dag dag = testing::random_dag(rng, n, p);
    std::vector<std::string> ci;
    for (const auto& name : dag.nodes) {
      if (rng() % 4 == 0) {
        ci.push_back(name);
      }
    }
    const TableSchema schema = testing::categorical_schema(dag.nodes, 2);
    if (const auto violation = testing::dag_property_violation(dag, ci, schema)) {
      return {false, "trial " + std::to_string(trial) + ": " + *violation};
    }
    if (testing::error_code_of([&] { build_graph(dag, ci, schema); }) == ErrorCode::kReversalCycle) {
      ++reversal_cycles;
    }
  }
  const double t = seconds_since(start);
  return {t < 10.0, "500 DAGs, " + std::to_string(reversal_cycles) + " reversal cycles, " +
                        fmt(t) + " s"};
}

Outcome encoder_round_trip() {
  const auto start = Clock::now();
  std::mt19937_64 rng(2);
  std::size_t checked = 0;
  for (int s = 0; s < 5; ++s) {
    std::vector<VariableSpec> vars;
    const std::size_t n_vars = 2 + rng() % 5;
    for (std::size_t v = 0; v < n_vars; ++v) {
      VariableSpec spec;
      spec.name = "v" + std::to_string(v);
      if (rng() % 2 == 0) {
        spec.kind = VariableKind::kCategorical;
        const std::size_t k = 1 + rng() % 8;
        for (std::size_t c = 0; c < k; ++c) {
          spec.categories.push_back("k" + std::to_string(c));
        }
      } else {
        spec.kind = VariableKind::kContinuous;
      }
      vars.push_back(spec);
    }
    const TableSchema schema(vars);
    const DataTable t = testing::random_table(schema, 1000, rng);
    const EncoderSet set = fit_encoders(t, {});
    const DataTable back = decode(encode(t, set), set);
    for (std::size_t c = 0; c < t.n_cols(); ++c) {
      if (schema[c].is_categorical()) {
        if (back.codes(c) != t.codes(c)) {
          return {false, "categorical mismatch in " + schema[c].name};
        }
        checked += t.n_rows();
        continue;
      }
      const auto& enc = std::get<ContinuousEncoder>(set.at(schema[c].name));
      for (std::size_t r = 0; r < t.n_rows(); ++r) {
        const double v = t.continuous(c)[r];
        const std::size_t k = enc.assign_mode(v);
        if (std::abs(v - enc.means[k]) > 4.0 * enc.stds[k]) {
          continue;
        }
        ++checked;
        if (std::abs(back.continuous(c)[r] - v) > 1e-6) {
          return {false, schema[c].name + " row " + std::to_string(r) + " off by " +
                             fmt(std::abs(back.continuous(c)[r] - v))};
        }
      }
    }
  }
  const double t = seconds_since(start);
  return {t < 5.0, std::to_string(checked) + " cells, " + fmt(t) + " s"};
}

Outcome attention_softmax() {
  std::mt19937_64 rng(3);
  double worst_sum = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng() % 10);
    const Eigen::VectorXd alpha = 10.0 * random_matrix(k, 1, rng);
    worst_sum = std::max(worst_sum, std::abs(attention_weights(alpha).sum() - 1.0));
  }
  double worst_out = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 1 + rng() % 6;
    std::vector<ad::Var> contexts;
    std::vector<MatrixXd> raw;
    for (std::size_t i = 0; i < k; ++i) {
      raw.push_back(random_matrix(4, 5, rng));
      contexts.emplace_back(raw.back());
    }
    const MatrixXd alpha = 5.0 * random_matrix(1, static_cast<Eigen::Index>(k), rng);
    const double top = alpha.maxCoeff();
    double denom = 0.0;
    for (Eigen::Index i = 0; i < alpha.cols(); ++i) {
      denom += std::exp(alpha(0, i) - top);
    }
    MatrixXd expected = MatrixXd::Zero(4, 5);
    for (std::size_t i = 0; i < k; ++i) {
      expected += std::exp(alpha(0, static_cast<Eigen::Index>(i)) - top) / denom * raw[i];
    }
    const MatrixXd got = attention(contexts, ad::Var(alpha), 4, 5).value();
    worst_out = std::max(worst_out, (got - expected).cwiseAbs().maxCoeff());
  }
  return {worst_sum <= 1e-6 && worst_out <= 1e-10,
          "max |sum-1| " + fmt(worst_sum) + ", max oracle diff " + fmt(worst_out)};
}

Outcome gradient_check() {
  const auto start = Clock::now();
  VariableSpec x{"x", VariableKind::kCategorical, {"a", "b", "c"}, std::nullopt};
  VariableSpec y{"y", VariableKind::kContinuous, {}, std::nullopt};
  const TableSchema schema({x, y});
  const std::vector<std::string> ci{"x"};
  const GeneratorGraph graph = build_graph(Dag{{"x", "y"}, {{"x", "y"}}}, ci, schema);
  EncoderSet encoders;
  encoders.add("x", CategoricalEncoder{{"a", "b", "c"}, 0.0});
  encoders.add("y", ContinuousEncoder{{-1.0, 3.0}, {0.5, 1.5}, {0.4, 0.6}});
  Generator gen(graph, encoders, GeneratorDims{4, 6, 4}, 5);

  std::mt19937_64 rng(4);
  const NoiseBatch noise = gen.draw_noise(8, rng);
  MatrixXd ci_block = MatrixXd::Zero(8, 3);
  for (Eigen::Index r = 0; r < 8; ++r) {
    ci_block(r, r % 3) = 1.0;
  }
  const MatrixXd w = random_matrix(8, gen.output_width(), rng);
  const auto leaves = gen.params().bind(true);
  const ad::Var loss = ad::mul(gen.forward(leaves, noise, ci_block).output, ad::constant(w));
  const auto analytic = ad::grad(loss, leaves);

  double worst = 0.0;
  std::string worst_name;
  for (std::size_t i = 0; i < gen.params().size(); ++i) {
    const MatrixXd base = gen.params().value(i);
    const MatrixXd numeric = testing::numeric_gradient(
        [&](const MatrixXd& m) {
          gen.params().value(i) = m;
          const double v = (gen.generate(noise, ci_block).array() * w.array()).sum();
          gen.params().value(i) = base;
          return v;
        },
        base);
    const double err = testing::relative_error(analytic[i].value(), numeric);
    if (err > worst) {
      worst = err;
      worst_name = gen.params().name(i);
    }
  }
  const double t = seconds_since(start);
  return {worst <= 1e-3 && t < 60.0,
          std::to_string(gen.params().size()) + " tensors, worst relative error " + fmt(worst) +
              " (" + worst_name + "), " + fmt(t) + " s"};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(5);
  double worst = 0.0;
  bool symmetric_bounded = true;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 30;
    const auto p = testing::random_distribution(rng, n, 0.2);
    const auto q = testing::random_distribution(rng, n, 0.2);
    const auto q_full = testing::random_distribution(rng, n, 0.0);
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < n; ++i) {
      labels.push_back(std::to_string(i));
    }
    const double js = js_distance(p, q);
    worst = std::max({worst, std::abs(kl(p, q_full) - testing::oracle_kl(p, q_full)),
                      std::abs(js - testing::oracle_js(p, q)),
                      std::abs(srmse(FrequencyList{{"v"}, labels, p}, FrequencyList{{"v"}, labels, q}) -
                               testing::oracle_srmse(p, q))});
    symmetric_bounded = symmetric_bounded && js == js_distance(q, p) && js >= 0.0 && js <= 1.0;
  }
  const std::vector<double> half{0.5, 0.5};
  const std::vector<double> one{1.0, 0.0};
  const std::vector<double> skew{0.75, 0.25};
  const bool examples = std::abs(js_distance(half, one) - 0.5579) <= 1e-4 &&
                        std::abs(kl(half, skew) - 0.2075) <= 1e-4 && kl(one, half) == 1.0 &&
                        js_distance(one, std::vector<double>{0.0, 1.0}) == 1.0 &&
                        srmse(FrequencyList{{"v"}, {"0", "1"}, half},
                              FrequencyList{{"v"}, {"0", "1"}, one}) == 1.0;
  return {worst <= 1e-12 && symmetric_bounded && examples,
          "max oracle diff " + fmt(worst) + (symmetric_bounded ? "" : ", js asymmetric/out of range") +
              (examples ? "" : ", worked example mismatch")};
}

Outcome bias_exactness() {
  std::mt19937_64 rng(6);
  const TableSchema schema({{"a", VariableKind::kCategorical, {"p", "q", "r"}, std::nullopt},
                            {"b", VariableKind::kContinuous, {}, std::nullopt}});
  for (int trial = 0; trial < 100; ++trial) {
    const DataTable t = testing::random_table(schema, 50 + rng() % 500, rng);
    BiasRule rule;
    rule.rate = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    std::size_t m = 0;
    if (rng() % 2 == 0) {
      rule.variable = "a";
      rule.op = rng() % 2 == 0 ? Comparator::kEq : Comparator::kNe;
      rule.labels = {schema[0].categories[rng() % 3]};
      const auto code = *schema[0].category_code(rule.labels[0]);
      for (auto c : t.codes(0)) {
        m += (c == code) == (rule.op == Comparator::kEq) ? 1 : 0;
      }
    } else {
      rule.variable = "b";
      rule.op = Comparator::kGt;
      rule.numbers = {std::uniform_real_distribution<double>(-8.0, 12.0)(rng)};
      for (double v : t.continuous(1)) {
        m += v > rule.numbers[0] ? 1 : 0;
      }
    }
    const BiasRule rules[] = {rule};
    const std::size_t removed = t.n_rows() - inject_bias(t, rules, rng()).n_rows();
    const auto expected = static_cast<std::size_t>(std::lround(static_cast<double>(m) * rule.rate));
    if (removed != expected) {
      return {false, "trial " + std::to_string(trial) + ": removed " + std::to_string(removed) +
                         ", expected " + std::to_string(expected)};
    }
  }
  return {true, "100 tables"};
}

Outcome aggregation_oracle() {
  std::mt19937_64 rng(7);
  const TableSchema schema({{"hh_size", VariableKind::kCategorical, {"1", "2", "3", "4", "5+"}, std::nullopt},
                            {"hh_vehicles", VariableKind::kCategorical, {"0", "1", "2", "3+"}, std::nullopt},
                            {"area", VariableKind::kCategorical, {"A", "B", "C"}, std::nullopt}});
  const double sizes[] = {1, 2, 3, 4, 5};
  const double vehicles[] = {0, 1, 2, 3};
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const DataTable t = testing::random_table(schema, 20 + rng() % 400, rng);
    const auto agg = household_aggregate(t, {"hh_vehicles", "area", "hh_size"});
    std::map<std::string, double> total;
    for (std::size_t r = 0; r < t.n_rows(); ++r) {
      total[t.cell_text(r, 2)] += vehicles[t.codes(1)[r]] / sizes[t.codes(0)[r]];
    }
    if (total.size() != agg.strata.size()) {
      return {false, "stratum count mismatch"};
    }
    for (const auto& [s, v] : total) {
      worst = std::max(worst, std::abs(agg.strata.at(s).total - v));
    }
  }
  return {worst <= 1e-9, "max diff " + fmt(worst)};
}

TrainingConfig toy_config(std::uint64_t seed) {
  TrainingConfig c;
  c.epochs = 300;
  c.discriminator_conditioning = true;
  c.seed = seed;
  return c;
}

Outcome toy_conditional_learning() {
  const DataTable toy = make_label_noise_toy(2000, 8);
  const DagSpec spec = label_noise_toy_dag();
  int good = 0;
  double worst_time = 0.0;
  std::string rates;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto start = Clock::now();
    const auto result = train(toy, spec.dag, spec.conditional_inputs, toy_config(seed));
    worst_time = std::max(worst_time, seconds_since(start));
    const DataTable s = sample(result.checkpoint, toy, {seed, 10000});
    std::size_t agree = 0;
    for (std::size_t r = 0; r < s.n_rows(); ++r) {
      agree += s.codes(0)[r] == s.codes(1)[r] ? 1 : 0;
    }
    const double rate = static_cast<double>(agree) / static_cast<double>(s.n_rows());
    good += rate >= 0.7 ? 1 : 0;
    rates += (rates.empty() ? "" : " ") + fmt(rate);
  }
  return {good >= 2 && worst_time <= 600.0,
          "P(y=x) per seed: " + rates + ", slowest training " + fmt(worst_time) + " s"};
}

std::vector<double> y_marginal(const DataTable& t) {
  std::vector<double> p(5, 0.0);
  for (auto c : t.codes(t.schema().index_of("y").value())) {
    p[static_cast<std::size_t>(c)] += 1.0;
  }
  for (auto& v : p) {
    v /= static_cast<double>(t.n_rows());
  }
  return p;
}

Outcome toy_bias_correction() {
  const auto start = Clock::now();
  const DataTable toy = make_label_noise_toy(2000, 9);
  const DagSpec spec = label_noise_toy_dag();
  const std::vector<double> truth = y_marginal(toy);
  BiasRule rule;
  rule.variable = "x";
  rule.labels = {"c0"};
  rule.rate = 0.7;
  const BiasRule rules[] = {rule};
  const std::vector<std::string> none;
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const DataTable biased = inject_bias(toy, rules, seed);
    const auto conditional = train(biased, spec.dag, spec.conditional_inputs, toy_config(seed));
    const auto unconditional = train(biased, spec.dag, none, toy_config(seed));
    const double js_cond = js_distance(truth, y_marginal(sample(conditional.checkpoint, toy, {seed, 10000})));
    const double js_uncond = js_distance(
        truth, y_marginal(sample_unconditional(unconditional.checkpoint, toy.n_rows(), {seed, 10000})));
    wins += js_cond < js_uncond ? 1 : 0;
    detail += (detail.empty() ? "" : "; ") + fmt(js_cond) + " vs " + fmt(js_uncond);
  }
  const double t = seconds_since(start);
  return {wins >= 4 && t <= 1800.0, std::to_string(wins) + "/5 seeds (conditional vs unconditional JS: " +
                                        detail + "), " + fmt(t) + " s"};
}

Outcome checkpoint_round_trip() {
  const auto model = testing::tiny_toy_model(400, 3).checkpoint;
  const auto dir = std::filesystem::temp_directory_path() / "dagsynth_acceptance_ckpt";
  std::filesystem::remove_all(dir);
  save_checkpoint(model, dir);
  const DataTable ci = make_label_noise_toy(1000, 4);
  std::ostringstream before;
  std::ostringstream after;
  write_csv(sample(model, ci, {42, 256}), before);
  write_csv(sample(load_checkpoint(dir), ci, {42, 256}), after);
  std::filesystem::remove_all(dir);
  return {before.str() == after.str(), std::to_string(before.str().size()) + " bytes compared"};
}

Outcome experiment_bookkeeping() {
  const DataTable toy = make_label_noise_toy(300, 10);
  const DagSpec spec = label_noise_toy_dag();
  BiasRule rule;
  rule.variable = "x";
  rule.labels = {"c0"};
  rule.rate = 0.7;
  const BiasRule rules[] = {rule};
  TrainingConfig c;
  c.epochs = 2;
  c.batch_size = 100;
  c.dims = {4, 8, 6};
  c.critic.width = 16;
  ExperimentOptions opts;
  opts.trainings = 2;
  opts.samples_per_training = 2;
  const ExperimentBundle b = run_debias_experiment(toy, rules, spec.dag, spec.conditional_inputs, c, opts);
  double sum = 0.0;
  for (const auto& m : b.members) {
    sum += *m.report.mean_level1();
  }
  const double mean = sum / static_cast<double>(b.members.size());
  const double got = b.mean(&MetricsReport::mean_level1).value_or(NAN);
  return {b.members.size() == 4 && std::abs(got - mean) <= 1e-12,
          std::to_string(b.members.size()) + " members, bundle mean " + fmt(got) + " vs " + fmt(mean)};
}

Outcome completion_scale() {
  const DataTable pop = make_population_toy(1000, 11);
  const DagSpec spec = population_toy_dag();
  TrainingConfig c;
  c.epochs = 1;
  c.batch_size = 100;
  c.dims = {4, 8, 6};
  c.critic.width = 16;
  const auto model = train(pop, spec.dag, spec.conditional_inputs, c).checkpoint;

  const DataTable distributor = make_population_toy(50000, 12).select_columns(spec.conditional_inputs);
  std::ostringstream csv;
  write_csv(distributor, csv);
  const std::string input = csv.str();
  std::istringstream in(input);
  std::ostringstream out;
  const StreamStats stats = complete_csv(model, in, out, {5, 10000});

  std::istringstream original(input);
  std::istringstream written(out.str());
  CsvReader a(original);
  CsvReader b(written);
  std::vector<std::string> ra;
  std::vector<std::string> rb;
  std::size_t rows = 0;
  bool identical = true;
  a.read_row(ra);
  b.read_row(rb);
  const std::size_t width = ra.size();
  while (a.read_row(ra)) {
    if (!b.read_row(rb) || rb.size() < width) {
      identical = false;
      break;
    }
    for (std::size_t i = 0; i < width; ++i) {
      identical = identical && ra[i] == rb[i];
    }
    ++rows;
  }
  identical = identical && !b.read_row(rb);
  return {identical && rows == 50000 && stats.peak_rows_in_memory <= 20000,
          std::to_string(rows) + " rows, " + std::to_string(stats.chunks) + " chunks, peak " +
              std::to_string(stats.peak_rows_in_memory) + " rows in memory" +
              (identical ? "" : ", conditional inputs differ")};
}

}  // namespace
}  // namespace dagsynth

int main() {
  using dagsynth::Outcome;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"dag suite", dagsynth::dag_suite},
      {"encoder round trip", dagsynth::encoder_round_trip},
      {"attention softmax", dagsynth::attention_softmax},
      {"generator gradient check", dagsynth::gradient_check},
      {"metric oracles", dagsynth::metric_oracles},
      {"bias injection exactness", dagsynth::bias_exactness},
      {"household aggregation oracle", dagsynth::aggregation_oracle},
      {"toy conditional learning", dagsynth::toy_conditional_learning},
      {"toy bias correction", dagsynth::toy_bias_correction},
      {"checkpoint round trip", dagsynth::checkpoint_round_trip},
      {"experiment bookkeeping", dagsynth::experiment_bookkeeping},
      {"completion scale", dagsynth::completion_scale},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << (i + 1) << "] " << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
