#pragma once

#include "infkit/data.hpp"
#include "infkit/experiments.hpp"
#include "infkit/influence.hpp"
#include "infkit/io.hpp"
#include "infkit/model.hpp"
#include "infkit/selection.hpp"
#include "infkit/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace infkit {

// Run configuration: a JSON file with exactly the sections
//   {model, data, train, selection, influence, update, eval}
// (every section optional, every key defaulted, unknown keys rejected).
// Seeds never appear in the file: all randomness derives from the run seed
// through named streams (see seed_run_spec).

enum class DataKind { Blobs, Digits, Toy, Csv };

DataKind data_kind_from_string(const std::string& name);
std::string to_string(DataKind kind);

struct DataConfig {
  DataKind kind = DataKind::Blobs;
  BlobsConfig blobs;
  DigitsConfig digits;
  ToyConfig toy;
  std::string train_path;    // csv kind
  std::string test_path;     // csv kind; empty = no test split
  int csv_classes = 0;       // csv kind; 0 = regression
  double input_scale = 1.0;  // multiplies inputs after generation/loading
};

// Protocol knobs consumed by the CLI subcommands.
struct EvalConfig {
  double remove_label = 0.0;            // class whose rows form the removal group
  std::vector<Index> excluded_classes;  // F1 exclusions; empty = the removed class
  std::string probe = "test";           // scoring probe set: "test" or "train"
  double perturb_fraction = 0.5;        // fraction of the removed-label rows to relabel
  double perturb_to = 1.0;              // label-change target label
  BackdoorSpec backdoor;
  Index spectrum_count = 0;  // Ritz values to report; 0 = a size-capped default
  std::vector<double> spectrum_shifts = {0.0, 1e-3, 1e-2, 1e-1, 1.0};
};

struct RunSpec {
  ModelSpec model;  // empty layers = the bundled default model for the data
  DataConfig data;
  TrainConfig train;
  SelectionCriterion selection;
  Method method = Method::Gif;
  EngineConfig engine;
  UpdatePolicy update;
  EvalConfig eval;
};

// The bundled desk task: 3 gaussian blobs in R^4, a 4-8-3 tanh classifier,
// highest-gradient selection at 30%, normalized-iterative gif updates.
RunSpec default_run_spec();

// Strict parse on top of default_run_spec(): every present key overrides the
// default, any unrecognized key raises ConfigError naming its path. render is
// the full echo (every key, sorted); parse(render(s)) == s and the echo of a
// parsed spec is byte-stable.
RunSpec parse_run_spec(const io::json& j);
io::json render_run_spec(const RunSpec& spec);
RunSpec load_run_spec(const std::string& path);

// Fills the derived seed streams ("train-shuffle", "selection",
// "lissa-sample") from the run seed. Data generation and parameter init use
// derive_seed(seed, "data") / derive_seed(seed, "init") at the call site.
void seed_run_spec(RunSpec& spec, std::uint64_t seed);

// Materializes the configured dataset (seeded via the "data" stream) and
// applies input_scale. Toy data arrives with its heterogeneous rows already
// upweighted.
Dataset build_dataset(const DataConfig& cfg, std::uint64_t seed);

// The model actually used for a run: the configured one, or the bundled
// default sized to the dataset when the config leaves `model.layers` empty.
ModelSpec resolve_model(const RunSpec& spec, const Dataset& data);

}  // namespace infkit
