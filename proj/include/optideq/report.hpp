#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "optideq/deq.hpp"
#include "optideq/evalkit.hpp"

namespace optideq {

// One file per trained model: row_id,label,pred,logit0,logit1.
struct PredictionTable {
  std::string name;
  std::vector<std::int64_t> row_ids;
  std::vector<int> labels;
  std::vector<int> preds;
  std::vector<Logits> logits;

  std::size_t size() const { return row_ids.size(); }
  std::string to_csv() const;
  static PredictionTable parse(std::string_view text, const std::string& name);
};

struct PairComparison {
  std::string a, b;
  Overlap overlap;
  McNemar test;
};

// Throws DataError naming the first position where row ids or labels differ.
void check_aligned(const PredictionTable& a, const PredictionTable& b);
PairComparison compare_pair(const PredictionTable& a, const PredictionTable& b);

// Reference figures quoted from the published study; never recomputed here.
struct PublishedValue {
  std::string model;
  std::string features;  // raw | binarized | any
  std::string metric;
  double value = 0.0;
  std::optional<double> std;
};

const std::vector<PublishedValue>& published_constants();

struct SeedResult {
  std::uint64_t seed = 0;
  double test_bacc = 0.0;
  double val_bacc = 0.0;
  Confusion confusion;
  int best_epoch = 0;
  int epochs = 0;
  double mean_iterations = 0.0;      // deq: mean per-block iterations on the test rows
  double nonconverged_fraction = 0;  // deq: test rows with any block flagged
};

struct RunResult {
  std::string name;
  std::string family;
  std::string mode;
  bool ising = true;
  std::string cell;  // deq only
  int n_blocks = 0;
  long parameters = 0;
  std::vector<SeedResult> seeds;
  double vote_bacc = 0.0;  // majority vote over this run's seeds

  SeedSummary test_summary() const;
};

struct LatencyRow {
  std::string run;
  double n_blocks = 0;
  double iterations = 0;
  double pass_time_ns = 0;
  double projected_ns = 0;
};

struct EvalReport {
  std::uint64_t master_seed = 0;
  std::string split_summary;
  std::vector<RunResult> runs;
  std::vector<PairComparison> pairs;  // first seed of every run, all pairs
  std::optional<double> vote_bacc;    // majority vote across runs (first seed), >= 3 runs
  std::vector<LatencyRow> latency;

  std::string to_text() const;
  std::string to_kv() const;

  // Long-format CSV tables.
  std::string bacc_table() const;       // run,seed,partition,metric,value
  std::string summary_table() const;    // run,family,mode,ising,cell,parameters,seeds,mean,std,vote
  std::string overlap_table() const;    // run_a,run_b,shared,only_a,only_b,jaccard
  std::string mcnemar_table() const;    // run_a,run_b,b,c,statistic,p,method
  std::string latency_table() const;    // run,n_blocks,iterations,pass_time_ns,projected_ns
  static std::string published_table(); // model,features,metric,value,std,status
};

}  // namespace optideq
