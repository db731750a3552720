#pragma once

// Experiment configuration. INI grammar (';' or '#' start a comment):
//
//   [data]
//   csv = data.csv              relative paths resolve against the config file
//   schema = schema.txt         or the literal "hmda" for the built-in preset
//
//   [experiment]
//   seed = 0                    master seed; stage seeds are derive_seed(seed, stage)
//   seeds = 0,1,2               training seeds, one model per seed per run
//   out = runs/example
//   threads = 1                 concurrent seeds per run
//   pass_time_ns = 20           optical pass time for latency projections
//
//   [run.<name>]                one section per model
//   family = deq | mlp | logreg
//   mode = raw-ising | raw-onehot | binarized
//   ising = true
//   d_hidden, n_blocks, alpha, beta, tol, max_iters      (deq)
//   cell = simple | aoc, cell.quant_bits, cell.rng_seed,
//   cell.<stage> = <magnitude>, cell.power_norm.target_rms (deq, aoc)
//   hidden = 48                                          (mlp)
//   l2 = 1e-4                                            (logreg)
//   learning_rate, batch_size, patience, max_epochs, monitor, through_impairments,
//   max_gain (deq contraction guard, 0 = off)
//
// Every key has a default; unknown keys are errors.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "optideq/deq.hpp"
#include "optideq/encoding.hpp"
#include "optideq/training.hpp"

namespace optideq {

enum class ModelFamily { deq, mlp, logreg };

std::string_view family_name(ModelFamily f);
ModelFamily family_from_name(std::string_view name);

struct RunSpec {
  std::string name;
  ModelFamily family = ModelFamily::deq;
  EncodingMode mode = EncodingMode::raw_ising;
  bool ising = true;
  ModelConfig model;  // d_in is filled from the encoder width
  int mlp_hidden = 48;
  std::optional<double> mlp_lr;  // default: per-width MLP default
  double l2 = 1e-4;
  TrainConfig train;
  bool lr_set = false;
};

struct ExperimentConfig {
  std::string csv_path;
  std::string schema_path = "hmda";
  std::uint64_t master_seed = 0;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::string out_dir = "run";
  int threads = 1;
  double pass_time_ns = 20.0;
  std::vector<RunSpec> runs;

  FeatureSchema schema() const;
  void validate() const;
};

ExperimentConfig parse_config(const std::string& text, const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path);

// Command-line overrides applied after the file is read.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> mode;
  std::optional<std::string> model;  // keep only runs with this name or family
  std::optional<std::string> cell;   // simple | aoc for every deq run
};

void apply_overrides(ExperimentConfig& cfg, const ConfigOverrides& o);

// Canonical text of the effective configuration (used for the manifest digest).
std::string config_to_text(const ExperimentConfig& cfg);

}  // namespace optideq
