// Writes the toy datasets with matching schema, DAG, training and experiment
// files, ready for the dagsynth CLI.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>

#include "dagsynth/errors.hpp"
#include "dagsynth/harness.hpp"
#include "dagsynth/model.hpp"
#include "dagsynth/toy.hpp"

namespace fs = std::filesystem;
using namespace dagsynth;
using nlohmann::json;

namespace {

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) {
    throw Error(ErrorCode::kIoError, "failed writing " + path.string());
  }
}

json toy_training(std::size_t epochs, std::uint64_t seed) {
  TrainingConfig config;
  config.epochs = epochs;
  config.seed = seed;
  return to_json(config);
}

void label_noise(const fs::path& dir, std::size_t rows, std::size_t epochs, std::uint64_t seed) {
  fs::create_directories(dir);
  const DataTable table = make_label_noise_toy(rows, seed);
  write_csv(table, dir / "data.csv");
  write_json(to_json(table.schema()), dir / "schema.json");
  DagSpec dag = label_noise_toy_dag();
  write_json(to_json(dag), dir / "dag.json");
  dag.conditional_inputs.clear();
  write_json(to_json(dag), dir / "dag_unconditional.json");
  const json rules = json::array({{{"variable", "x"}, {"op", "eq"}, {"value", "c0"}, {"rate", 0.7}}});
  write_json(rules, dir / "bias_rules.json");
  write_json(toy_training(epochs, seed), dir / "training.json");
  for (const bool conditional : {true, false}) {
    json exp = {{"name", conditional ? "conditional" : "unconditional"},
                {"feeder", "data.csv"},
                {"schema", "schema.json"},
                {"dag", conditional ? "dag.json" : "dag_unconditional.json"},
                {"bias_rules", "bias_rules.json"},
                {"training", "training.json"},
                {"trainings", 2},
                {"samples_per_training", 2},
                {"seed", seed}};
    write_json(exp, dir / (conditional ? "experiment.json" : "experiment_unconditional.json"));
  }
}

void population(const fs::path& dir, std::size_t rows, std::size_t epochs, std::uint64_t seed) {
  fs::create_directories(dir);
  // The full population plays the census: its aggregates are the control
  // totals and its conditional inputs the distributor. The feeder is a 10% survey.
  const DataTable full = make_population_toy(rows * 10, seed);
  std::vector<std::size_t> order(full.n_rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(rows);
  std::sort(order.begin(), order.end());
  write_csv(full.select_rows(order), dir / "feeder.csv");

  const DagSpec dag = population_toy_dag();
  write_csv(full.select_columns(dag.conditional_inputs), dir / "distributor.csv");
  write_json(to_json(full.schema()), dir / "schema.json");
  write_json(to_json(dag), dir / "dag.json");

  const AggregateSpec specs[] = {{"hh_vehicles", "region", "hh_size"},
                                 {"hh_size", "region", "hh_size"},
                                 {"ethnicity", "region", std::nullopt}};
  json controls = json::array();
  json spec_json = json::array();
  for (const auto& spec : specs) {
    controls.push_back(to_json(control_totals_from(household_aggregate(full, spec))));
    spec_json.push_back(to_json(spec));
  }
  write_json(controls, dir / "controls.json");
  write_json(spec_json, dir / "aggregates.json");
  write_json(toy_training(epochs, seed), dir / "training.json");
  write_json({{"name", "population"},
              {"feeder", "feeder.csv"},
              {"distributor", "distributor.csv"},
              {"schema", "schema.json"},
              {"dag", "dag.json"},
              {"control_totals", "controls.json"},
              {"training", "training.json"},
              {"trainings", 1},
              {"samples_per_training", 1},
              {"seed", seed}},
             dir / "experiment.json");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Write toy datasets and configs"};
  fs::path out;
  std::size_t rows = 2000;
  std::size_t epochs = 300;
  std::uint64_t seed = 1;
  app.add_option("--out", out, "Output directory")->required();
  app.add_option("--rows", rows, "Rows of the label-noise table and of the population feeder");
  app.add_option("--epochs", epochs, "Epochs written into the training configs");
  app.add_option("--seed", seed, "Data and training seed");
  CLI11_PARSE(app, argc, argv);
  try {
    label_noise(out / "label_noise", rows, epochs, seed);
    population(out / "population", rows, epochs, seed);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_validation_error(e.code()) ? 2 : 1;
  }
  std::cout << "wrote " << (out / "label_noise").string() << " and "
            << (out / "population").string() << '\n';
  return 0;
}
