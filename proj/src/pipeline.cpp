#include "optideq/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <future>
#include <map>
#include <sstream>

#include "optideq/checkpoint.hpp"
#include "optideq/errors.hpp"
#include "optideq/io.hpp"
#include "optideq/rng.hpp"
#include "optideq/splitter.hpp"
#include "optideq/training.hpp"
#include "text_util.hpp"

namespace optideq {

namespace {

template <class F>
auto in_stage(const std::string& name, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

class Artifacts {
 public:
  explicit Artifacts(std::string root) : root_(std::move(root)) {}

  void write(const std::string& rel, const std::string& content) {
    write_file_atomic((std::filesystem::path(root_) / rel).string(), content);
    entries_[rel] = {sha256_hex(content), content.size()};
  }

  // Records an existing file without rewriting it.
  void record(const std::string& rel) {
    const std::string content = read_file(path(rel));
    entries_[rel] = {sha256_hex(content), content.size()};
  }

  std::string path(const std::string& rel) const { return (std::filesystem::path(root_) / rel).string(); }

  std::string listing() const {
    std::ostringstream out;
    for (const auto& [rel, e] : entries_) out << "artifact " << rel << ' ' << e.first << ' ' << e.second << '\n';
    return out.str();
  }

 private:
  std::string root_;
  std::map<std::string, std::pair<std::string, std::size_t>> entries_;
};

std::vector<RawRow> gather(const std::vector<RawRow>& rows, std::span<const std::size_t> idx) {
  std::vector<RawRow> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(rows[i]);
  return out;
}

std::string encoder_tag(EncodingMode mode, bool ising) {
  return std::string(mode_name(mode)) + (ising ? "-ising" : "-01");
}

std::string dataset_csv(const LabeledDataset& d) {
  std::ostringstream out;
  out << "row_id,label";
  for (int j = 0; j < d.width(); ++j) out << ",x" << j;
  out << '\n';
  for (std::size_t i = 0; i < d.size(); ++i) {
    out << d.row_ids[i] << ',' << d.y[i];
    for (double v : d.row(i)) out << ',' << text::format17(v);
    out << '\n';
  }
  return out.str();
}

AnyModel init_model(const RunSpec& run, int d_in, std::uint64_t seed) {
  switch (run.family) {
    case ModelFamily::deq: {
      ModelConfig m = run.model;
      m.d_in = d_in;
      return EnsembleModel::initialized(m, seed);
    }
    case ModelFamily::mlp:
      return MlpParams::initialized(d_in, run.mlp_hidden, seed);
    case ModelFamily::logreg: {
      LogRegParams p = LogRegParams::zeros(d_in);
      p.l2 = run.l2;
      return p;
    }
  }
  throw ConfigError("unknown model family");
}

long model_parameters(const AnyModel& m) {
  return std::visit(
      [](const auto& model) -> long {
        using T = std::decay_t<decltype(model)>;
        if constexpr (std::is_same_v<T, EnsembleModel>) {
          return parameter_count(model).total;
        } else {
          return model.parameter_count();
        }
      },
      m);
}

struct Partitioned {
  std::array<LabeledDataset, 3> sets;
};

struct SeedOutput {
  SeedResult result;
  PredictionTable predictions;
  std::string checkpoint;
  std::string history;
  std::string meta;
  long parameters = 0;
};

SeedOutput run_seed(const RunSpec& run, std::uint64_t seed, const Partitioned& data, const PipelineOptions& opt,
                    const Artifacts& artifacts) {
  const std::string where = "train:" + run.name + "/seed" + std::to_string(seed);
  const std::string stem = "models/" + run.name + "/seed" + std::to_string(seed);
  SeedOutput out;
  out.result.seed = seed;
  AnyModel model = in_stage(where, [&]() -> AnyModel {
    if (opt.load_models) {
      AnyModel m = load_checkpoint_file(artifacts.path(stem + ".ckpt"));
      const auto meta_path = artifacts.path("history/" + run.name + "/seed" + std::to_string(seed) + ".meta");
      if (std::filesystem::exists(meta_path)) {
        std::istringstream meta(read_file(meta_path));
        std::string key;
        while (meta >> key) {
          if (key == "best_epoch") meta >> out.result.best_epoch;
          else if (key == "epochs") meta >> out.result.epochs;
          else meta >> key;
        }
      }
      return m;
    }
    AnyModel m = init_model(run, data.sets[0].width(), seed);
    TrainConfig t = run.train;
    t.seed = seed;
    if (run.family == ModelFamily::mlp && !run.lr_set) t.learning_rate = std::get<MlpParams>(m).default_lr;
    return std::visit(
        [&](auto& initial) -> AnyModel {
          auto trained = train(std::move(initial), data.sets[0], data.sets[1], t);
          out.history = trained.history.to_table();
          out.result.best_epoch = trained.history.best_epoch;
          out.result.epochs = static_cast<int>(trained.history.epochs.size());
          out.meta = "best_epoch " + std::to_string(trained.history.best_epoch) + "\nepochs " +
                     std::to_string(out.result.epochs) + "\nstop_reason " + trained.history.stop_reason + "\n";
          return AnyModel(std::move(trained.model));
        },
        m);
  });
  if (!opt.load_models) out.checkpoint = save_checkpoint(model);
  out.parameters = model_parameters(model);
  if (opt.stop == PipelineStop::train) return out;

  in_stage("predict:" + run.name + "/seed" + std::to_string(seed), [&] {
    const auto& test = data.sets[2];
    std::vector<Logits> logits;
    if (const auto* deq = std::get_if<EnsembleModel>(&model)) {
      const PreparedEnsemble prepared(*deq);
      long iterations = 0, blocks = 0, unconverged = 0;
      for (std::size_t i = 0; i < test.size(); ++i) {
        const auto f = prepared.forward(test.row(i));
        logits.push_back(f.logits);
        for (const auto& b : f.blocks) iterations += b.iterations;
        blocks += static_cast<long>(f.blocks.size());
        if (!f.all_converged()) ++unconverged;
      }
      out.result.mean_iterations = blocks ? static_cast<double>(iterations) / blocks : 0.0;
      out.result.nonconverged_fraction = test.size() ? static_cast<double>(unconverged) / test.size() : 0.0;
    } else {
      logits = std::visit([&](const auto& m) { return predict_logits(m, test); }, model);
    }
    const auto val_logits = std::visit([&](const auto& m) { return predict_logits(m, data.sets[1]); }, model);
    out.result.val_bacc = balanced_accuracy(predict_classes(val_logits), data.sets[1].y);

    auto& p = out.predictions;
    p.name = run.name + "/seed" + std::to_string(seed);
    p.row_ids = test.row_ids;
    p.labels = test.y;
    p.preds = predict_classes(logits);
    p.logits = std::move(logits);
    out.result.confusion = confusion(p.preds, p.labels);
    out.result.test_bacc = balanced_accuracy(out.result.confusion);
  });
  return out;
}

}  // namespace

PipelineResult run_pipeline(const ExperimentConfig& cfg, const PipelineOptions& opt) {
  in_stage("config", [&] { cfg.validate(); });
  Artifacts art(cfg.out_dir);
  const std::string config_text = config_to_text(cfg);
  art.write("config.ini", config_text);

  std::ostringstream manifest;
  manifest << "optideq-manifest v1\n";

  // ---- ingest
  const FeatureSchema schema = in_stage("ingest", [&] { return cfg.schema(); });
  const RawTable table = in_stage("ingest", [&] {
    RawTable t = read_csv_file(cfg.csv_path, schema);
    if (t.rows.empty()) throw DataError("no valid rows in '" + cfg.csv_path + "'");
    return t;
  });
  {
    const auto data = read_file(cfg.csv_path);
    manifest << "input.csv_sha256 " << sha256_hex(data) << "\ninput.schema_sha256 " << sha256_hex(schema.to_text())
             << '\n';
    std::ostringstream ingest;
    ingest << "rows " << table.rows.size() << "\nrejected " << table.rejected.size() << '\n';
    for (const auto& r : table.rejected) ingest << "reject " << r << '\n';
    art.write("ingest.txt", ingest.str());
  }
  std::vector<int> labels;
  labels.reserve(table.rows.size());
  for (const auto& r : table.rows) labels.push_back(r.label);

  // ---- splits
  const std::uint64_t s_strat = derive_seed(cfg.master_seed, "split.stratified");
  const std::uint64_t s_down_train = derive_seed(cfg.master_seed, "split.downsample.train");
  const std::uint64_t s_down_val = derive_seed(cfg.master_seed, "split.downsample.val");
  const std::uint64_t s_group = derive_seed(cfg.master_seed, "split.group");
  manifest << "seed.master " << cfg.master_seed << "\nseed.split.stratified " << s_strat
           << "\nseed.split.downsample.train " << s_down_train << "\nseed.split.downsample.val " << s_down_val
           << "\nseed.split.group " << s_group << '\n';

  const Partitions strat = in_stage("split.stratified", [&] {
    return stratified_split(labels, kStratifiedRatios, s_strat);
  });
  auto balance = [&](const std::vector<std::size_t>& part, std::uint64_t seed) {
    std::vector<int> sub;
    for (auto i : part) sub.push_back(labels[i]);
    std::vector<std::size_t> kept;
    for (auto j : downsample_majority(sub, seed)) kept.push_back(part[j]);
    std::sort(kept.begin(), kept.end());
    return kept;
  };
  const auto bal_train = in_stage("split.downsample", [&] { return balance(strat[0], s_down_train); });
  const auto bal_val = in_stage("split.downsample", [&] { return balance(strat[1], s_down_val); });
  std::vector<std::size_t> pool = bal_train;
  pool.insert(pool.end(), bal_val.begin(), bal_val.end());

  const EncoderFit key_fit = in_stage("split.keys", [&] {
    const auto rows = gather(table.rows, bal_train);
    return fit_encoder(rows, schema, EncodingMode::binarized, true);
  });
  const GroupSplit gsplit = in_stage("split.group", [&] {
    std::vector<GroupKey> keys;
    std::vector<int> pool_labels;
    keys.reserve(pool.size());
    for (auto i : pool) {
      keys.push_back(group_key(encode(key_fit, table.rows[i])));
      pool_labels.push_back(labels[i]);
    }
    GroupSplit g = group_split(keys, pool_labels, kGroupRatios, s_group);
    check_no_leakage(keys, g.parts);
    return g;
  });
  Partitions final_parts;  // indices into table.rows
  for (int p = 0; p < 3; ++p) {
    for (auto j : gsplit.parts[p]) final_parts[p].push_back(pool[j]);
    std::sort(final_parts[p].begin(), final_parts[p].end());
  }
  std::string split_summary;
  {
    std::vector<std::string> strat_name(table.rows.size()), final_name(table.rows.size());
    std::vector<char> balanced(table.rows.size(), 0);
    for (int p = 0; p < 3; ++p) {
      for (auto i : strat[p]) strat_name[i] = kPartitionNames[p];
      for (auto i : final_parts[p]) final_name[i] = kPartitionNames[p];
    }
    for (auto i : pool) balanced[i] = 1;
    std::ostringstream s1, s2;
    s1 << "row_id,partition,balanced\n";
    s2 << "row_id,partition\n";
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      s1 << table.rows[i].id << ',' << strat_name[i] << ',' << int(balanced[i]) << '\n';
      if (!final_name[i].empty()) s2 << table.rows[i].id << ',' << final_name[i] << '\n';
    }
    art.write("split/stratified.csv", s1.str());
    art.write("split/partitions.csv", s2.str());
    art.write("encoders/group_key.txt", key_fit.to_text());
    std::ostringstream summary;
    summary << "rows ingested " << table.rows.size() << " (rejected " << table.rejected.size()
            << ")\nstratified train/val/test " << strat[0].size() << '/' << strat[1].size() << '/'
            << strat[2].size() << "\nbalanced train " << bal_train.size() << ", balanced val " << bal_val.size()
            << ", pool " << pool.size() << "\ngroup split\n"
            << gsplit.report.to_text();
    split_summary = summary.str();
    art.write("split/report.txt", split_summary);
  }

  PipelineResult result;
  result.report.master_seed = cfg.master_seed;
  result.report.split_summary = split_summary;
  if (opt.stop == PipelineStop::split) {
    result.manifest = manifest.str() + "config_sha256 " + sha256_hex(config_text) + '\n' + art.listing();
    art.write("manifest.txt", result.manifest);
    return result;
  }

  // ---- encoders, one per (mode, ising) in use
  std::array<std::vector<RawRow>, 3> part_rows;
  for (int p = 0; p < 3; ++p) part_rows[p] = gather(table.rows, final_parts[p]);
  std::map<std::string, Partitioned> encoded;
  for (const auto& run : cfg.runs) {
    const auto tag = encoder_tag(run.mode, run.ising);
    if (encoded.count(tag)) continue;
    in_stage("encode:" + tag, [&] {
      const EncoderFit fit = fit_encoder(part_rows[0], schema, run.mode, run.ising);
      art.write("encoders/" + tag + ".txt", fit.to_text());
      Partitioned d;
      for (int p = 0; p < 3; ++p) {
        d.sets[p] = encode_rows(fit, part_rows[p]);
        if (opt.write_encoded) art.write("encoded/" + tag + "/" + kPartitionNames[p] + ".csv", dataset_csv(d.sets[p]));
      }
      encoded.emplace(tag, std::move(d));
    });
  }
  if (opt.stop == PipelineStop::encode) {
    result.manifest = manifest.str() + "config_sha256 " + sha256_hex(config_text) + '\n' + art.listing();
    art.write("manifest.txt", result.manifest);
    return result;
  }

  // ---- training and prediction, seeds fanned out `threads` at a time
  std::vector<std::vector<PredictionTable>> run_predictions;
  for (const auto& run : cfg.runs) {
    const auto& data = encoded.at(encoder_tag(run.mode, run.ising));
    std::vector<SeedOutput> outs(cfg.seeds.size());
    for (std::size_t first = 0; first < cfg.seeds.size(); first += static_cast<std::size_t>(cfg.threads)) {
      const std::size_t last = std::min(cfg.seeds.size(), first + static_cast<std::size_t>(cfg.threads));
      if (last - first == 1) {
        outs[first] = run_seed(run, cfg.seeds[first], data, opt, art);
        continue;
      }
      std::vector<std::future<SeedOutput>> jobs;
      for (std::size_t k = first; k < last; ++k) {
        jobs.push_back(std::async(std::launch::async, run_seed, std::cref(run), cfg.seeds[k], std::cref(data),
                                  std::cref(opt), std::cref(art)));
      }
      for (std::size_t k = first; k < last; ++k) outs[k] = jobs[k - first].get();
    }

    RunResult rr;
    rr.name = run.name;
    rr.family = std::string(family_name(run.family));
    rr.mode = std::string(mode_name(run.mode));
    rr.ising = run.ising;
    if (run.family == ModelFamily::deq) {
      rr.cell = std::string(cell_kind_name(run.model.cell.kind));
      rr.n_blocks = run.model.n_blocks;
    }
    std::vector<PredictionTable> preds;
    for (std::size_t k = 0; k < outs.size(); ++k) {
      auto& o = outs[k];
      const std::string stem = run.name + "/seed" + std::to_string(cfg.seeds[k]);
      if (!opt.load_models) {
        art.write("models/" + stem + ".ckpt", o.checkpoint);
        art.write("history/" + stem + ".csv", o.history);
        art.write("history/" + stem + ".meta", o.meta);
      } else {
        art.record("models/" + stem + ".ckpt");
      }
      rr.parameters = o.parameters;
      if (opt.stop != PipelineStop::train) {
        art.write("predictions/" + stem + ".csv", o.predictions.to_csv());
        preds.push_back(std::move(o.predictions));
      }
      rr.seeds.push_back(o.result);
    }
    if (opt.stop != PipelineStop::train) {
      std::vector<std::vector<int>> votes;
      for (const auto& p : preds) votes.push_back(p.preds);
      rr.vote_bacc = balanced_accuracy(majority_vote(votes), preds.front().labels);
    }
    result.report.runs.push_back(std::move(rr));
    run_predictions.push_back(std::move(preds));
  }
  if (opt.stop == PipelineStop::train) {
    result.manifest = manifest.str() + "config_sha256 " + sha256_hex(config_text) + '\n' + art.listing();
    art.write("manifest.txt", result.manifest);
    return result;
  }

  // ---- report
  in_stage("report", [&] {
    auto& rep = result.report;
    for (std::size_t i = 0; i < run_predictions.size(); ++i) {
      for (std::size_t j = i + 1; j < run_predictions.size(); ++j) {
        PairComparison c = compare_pair(run_predictions[i].front(), run_predictions[j].front());
        c.a = cfg.runs[i].name;
        c.b = cfg.runs[j].name;
        rep.pairs.push_back(c);
      }
    }
    if (run_predictions.size() >= 3) {
      std::vector<std::vector<int>> votes;
      for (const auto& p : run_predictions) votes.push_back(p.front().preds);
      rep.vote_bacc = balanced_accuracy(majority_vote(votes), run_predictions.front().front().labels);
    }
    for (const auto& r : rep.runs) {
      if (r.family != "deq") continue;
      double iters = 0.0;
      for (const auto& s : r.seeds) iters += s.mean_iterations;
      iters /= static_cast<double>(r.seeds.size());
      rep.latency.push_back({r.name, static_cast<double>(r.n_blocks), iters, cfg.pass_time_ns,
                             latency_projection(r.n_blocks, iters, cfg.pass_time_ns)});
    }
    art.write("report/eval_report.txt", rep.to_text());
    art.write("report/eval_report.kv", rep.to_kv());
    art.write("report/tables/bacc.csv", rep.bacc_table());
    art.write("report/tables/summary.csv", rep.summary_table());
    art.write("report/tables/overlap.csv", rep.overlap_table());
    art.write("report/tables/mcnemar.csv", rep.mcnemar_table());
    art.write("report/tables/latency.csv", rep.latency_table());
    art.write("report/tables/published.csv", EvalReport::published_table());
  });

  result.manifest = manifest.str() + "config_sha256 " + sha256_hex(config_text) + '\n' + art.listing();
  in_stage("manifest", [&] { art.write("manifest.txt", result.manifest); });
  return result;
}

}  // namespace optideq
