// optideq: command-line front end for the experiment pipeline.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <numeric>

#include "optideq/checkpoint.hpp"
#include "optideq/config.hpp"
#include "optideq/errors.hpp"
#include "optideq/evalkit.hpp"
#include "optideq/io.hpp"
#include "optideq/pipeline.hpp"
#include "optideq/report.hpp"
#include "optideq/rng.hpp"
#include "optideq/synth.hpp"
#include "optideq/training.hpp"

namespace {

using namespace optideq;

struct CommonFlags {
  std::string config;
  ConfigOverrides overrides;
  std::uint64_t seed = 0;
  std::string out, mode, model, cell;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "experiment configuration (INI)")->required();
  cmd->add_option("--seed", f.seed, "override the master seed");
  cmd->add_option("--out", f.out, "override the output directory");
  cmd->add_option("--mode", f.mode, "override every run's encoding: raw-ising | raw-onehot | binarized");
  cmd->add_option("--model", f.model, "keep only the run with this name or family");
  cmd->add_option("--cell", f.cell, "override every deq run's cell: simple | aoc");
}

ExperimentConfig resolve_config(CLI::App* cmd, const CommonFlags& f) {
  ExperimentConfig cfg = load_config(f.config);
  ConfigOverrides o;
  if (cmd->count("--seed")) o.seed = f.seed;
  if (!f.out.empty()) o.out = f.out;
  if (!f.mode.empty()) o.mode = f.mode;
  if (!f.model.empty()) o.model = f.model;
  if (!f.cell.empty()) o.cell = f.cell;
  apply_overrides(cfg, o);
  return cfg;
}

template <class F>
void in_stage(const std::string& stage, F&& f) {
  try {
    f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"optideq: optical deep-equilibrium classifiers on tabular data"};
  app.require_subcommand(1);

  SynthSpec synth;
  std::string synth_out = "synth";
  auto* c_synth = app.add_subcommand("synth", "write a seeded synthetic task (data.csv + schema.txt)");
  c_synth->add_option("--kind", synth.kind, "separable | xor-like | binned-boundary | sparse-categorical");
  c_synth->add_option("--rows", synth.rows, "number of rows");
  c_synth->add_option("--seed", synth.seed, "generator seed");
  c_synth->add_option("--noise", synth.noise, "label flip probability");
  c_synth->add_option("--out", synth_out, "output directory");

  std::array<CommonFlags, 5> flags;
  const std::array<std::pair<const char*, const char*>, 5> verbs{{
      {"split", "ingest, stratify, balance and group-split the data"},
      {"encode", "split, then fit encoders and write encoded partitions"},
      {"train", "split, encode and train every run and seed"},
      {"eval", "reload trained checkpoints and write predictions and the report"},
      {"pipeline", "run every stage end to end"},
  }};
  std::array<CLI::App*, 5> c_verbs{};
  int threads = 0;
  for (std::size_t i = 0; i < verbs.size(); ++i) {
    c_verbs[i] = app.add_subcommand(verbs[i].first, verbs[i].second);
    add_common(c_verbs[i], flags[i]);
    c_verbs[i]->add_option("--threads", threads, "override concurrent seeds per run");
  }

  std::vector<std::string> pred_files;
  std::string compare_out;
  auto* c_compare = app.add_subcommand("compare", "error overlap, McNemar and majority vote of prediction files");
  c_compare->add_option("predictions", pred_files, "prediction CSVs (row_id,label,pred,logit0,logit1)")
      ->required()
      ->expected(2, -1);
  c_compare->add_option("--out", compare_out, "also write overlap.csv and mcnemar.csv here");

  double lat_blocks = 4, lat_iters = 9, lat_pass = 20;
  std::string lat_ckpt;
  std::size_t lat_rows = 2000;
  std::uint64_t lat_seed = 0;
  auto* c_latency = app.add_subcommand("latency", "optical latency projection and CPU wall-clock benchmark");
  c_latency->add_option("--n-blocks", lat_blocks, "sequential blocks");
  c_latency->add_option("--iterations", lat_iters, "fixed-point iterations per block");
  c_latency->add_option("--pass-time-ns", lat_pass, "time of one optical pass");
  c_latency->add_option("--checkpoint", lat_ckpt, "benchmark this model on random spin inputs");
  c_latency->add_option("--rows", lat_rows, "benchmark rows");
  c_latency->add_option("--seed", lat_seed, "seed for the benchmark inputs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_synth->parsed()) {
      in_stage("synth", [&] {
        const SynthData d = synthesize(synth);
        const auto dir = std::filesystem::path(synth_out);
        write_file_atomic((dir / "data.csv").string(), d.csv);
        write_file_atomic((dir / "schema.txt").string(), d.schema.to_text());
        std::cout << "wrote " << (dir / "data.csv").string() << " (" << synth.rows << " rows, sha256 "
                  << sha256_hex(d.csv) << ")\n";
      });
      return 0;
    }
    for (std::size_t i = 0; i < verbs.size(); ++i) {
      if (!c_verbs[i]->parsed()) continue;
      ExperimentConfig cfg;
      in_stage("config", [&] { cfg = resolve_config(c_verbs[i], flags[i]); });
      if (threads > 0) cfg.threads = threads;
      PipelineOptions opt;
      const std::string verb = verbs[i].first;
      if (verb == "split") opt.stop = PipelineStop::split;
      if (verb == "encode") {
        opt.stop = PipelineStop::encode;
        opt.write_encoded = true;
      }
      if (verb == "train") opt.stop = PipelineStop::train;
      if (verb == "eval") opt.load_models = true;
      const PipelineResult r = run_pipeline(cfg, opt);
      if (opt.stop == PipelineStop::report) {
        std::cout << r.report.to_text();
      } else {
        std::cout << r.report.split_summary;
      }
      std::cout << "outputs in " << cfg.out_dir << " (manifest.txt)\n";
      return 0;
    }
    if (c_compare->parsed()) {
      in_stage("compare", [&] {
        std::vector<PredictionTable> tables;
        for (const auto& f : pred_files) tables.push_back(PredictionTable::parse(read_file(f), f));
        EvalReport rep;
        for (std::size_t i = 0; i < tables.size(); ++i) {
          for (std::size_t j = i + 1; j < tables.size(); ++j) rep.pairs.push_back(compare_pair(tables[i], tables[j]));
          std::cout << tables[i].name << ": balanced accuracy "
                    << balanced_accuracy(tables[i].preds, tables[i].labels) << '\n';
        }
        std::vector<std::vector<int>> votes;
        for (const auto& t : tables) votes.push_back(t.preds);
        const double vote = balanced_accuracy(majority_vote(votes), tables.front().labels);
        std::cout << rep.overlap_table() << rep.mcnemar_table() << "majority vote balanced accuracy " << vote
                  << '\n';
        if (!compare_out.empty()) {
          const auto dir = std::filesystem::path(compare_out);
          write_file_atomic((dir / "overlap.csv").string(), rep.overlap_table());
          write_file_atomic((dir / "mcnemar.csv").string(), rep.mcnemar_table());
        }
      });
      return 0;
    }
    if (c_latency->parsed()) {
      in_stage("latency", [&] {
        std::cout << "projected optical latency: " << lat_blocks << " x " << lat_iters << " x " << lat_pass
                  << " ns = " << latency_projection(lat_blocks, lat_iters, lat_pass) << " ns\n";
        if (lat_ckpt.empty()) return;
        const AnyModel model = load_checkpoint_file(lat_ckpt);
        const int d_in = std::visit(
            [](const auto& m) {
              if constexpr (std::is_same_v<std::decay_t<decltype(m)>, EnsembleModel>) {
                return m.config.d_in;
              } else {
                return m.d_in();
              }
            },
            model);
        LabeledDataset data;
        data.x.resize(static_cast<Eigen::Index>(lat_rows), d_in);
        Rng rng(derive_seed(lat_seed, "latency.inputs"));
        for (Eigen::Index i = 0; i < data.x.size(); ++i) data.x.data()[i] = rng.bernoulli(0.5) ? 1.0 : -1.0;
        data.y.assign(lat_rows, 0);
        data.row_ids.resize(lat_rows);
        std::iota(data.row_ids.begin(), data.row_ids.end(), 0);
        std::optional<PreparedEnsemble> prepared;
        if (const auto* deq = std::get_if<EnsembleModel>(&model)) prepared.emplace(*deq);
        volatile double sink = 0;
        auto infer = [&](std::size_t i) {
          if (prepared) {
            sink = sink + prepared->forward(data.row(i)).logits[0];
          } else if (const auto* mlp = std::get_if<MlpParams>(&model)) {
            sink = sink + mlp_forward(*mlp, data.row(i))[0];
          } else {
            sink = sink + logreg_forward(std::get<LogRegParams>(model), data.row(i))[0];
          }
        };
        for (auto mode : {BenchMode::batch, BenchMode::single}) {
          const auto b = wallclock_bench(infer, lat_rows, mode);
          std::cout << (mode == BenchMode::batch ? "batch" : "single") << ": " << b.per_sample_ns
                    << " ns/sample over " << b.rows << " rows after " << b.warmup << " warm-up passes ("
                    << b.platform << ")\n";
        }
      });
      return 0;
    }
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
