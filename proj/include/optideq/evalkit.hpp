#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace optideq {

struct Confusion {
  long tp = 0, fn = 0, tn = 0, fp = 0;  // class 1 is "positive"
};

Confusion confusion(std::span<const int> preds, std::span<const int> labels);
double balanced_accuracy(const Confusion& c);
double balanced_accuracy(std::span<const int> preds, std::span<const int> labels);

// Sorted indices i with preds[i] != labels[i].
std::vector<std::size_t> error_set(std::span<const int> preds, std::span<const int> labels);

struct Overlap {
  std::size_t shared = 0, only_a = 0, only_b = 0;
  double jaccard = 1.0;
};

// Inputs must be sorted ascending and duplicate-free.
Overlap error_overlap(std::span<const std::size_t> errors_a, std::span<const std::size_t> errors_b);
// Closed form from set sizes.
double jaccard_from_counts(std::size_t size_a, std::size_t size_b, std::size_t shared);

struct McNemar {
  long b = 0;  // A right, B wrong
  long c = 0;  // A wrong, B right
  double statistic = 0.0;
  double p = 1.0;
  bool exact = false;
};

// Exact two-sided binomial test below this many discordant pairs.
inline constexpr long kMcNemarExactBelow = 20;

McNemar mcnemar(std::span<const int> preds_a, std::span<const int> preds_b, std::span<const int> labels);
McNemar mcnemar_from_counts(long b, long c);
// Upper tail of chi-square with one degree of freedom.
double chi_square1_upper_tail(double x);

struct SeedSummary {
  double mean = 0.0;
  std::optional<double> std;  // sample std, absent for a single value
  std::size_t count = 0;
};

SeedSummary aggregate_seeds(std::span<const double> values);

// n_blocks sequential optical passes per iteration.
double latency_projection(double n_blocks, double iterations, double pass_time_ns);

// Per-pair vote; a tie goes to the first model.
std::vector<int> majority_vote(const std::vector<std::vector<int>>& predictions);

enum class BenchMode { batch, single };

struct BenchReport {
  BenchMode mode = BenchMode::batch;
  std::size_t rows = 0;
  int warmup = 0;
  double per_sample_ns = 0.0;
  std::string platform;
};

std::string platform_descriptor();

// Batch: total wall time over all rows / rows. Single: median per-row time.
// `warmup` full passes (at least 3) run first and are discarded.
BenchReport wallclock_bench(const std::function<void(std::size_t)>& infer_row, std::size_t rows,
                            BenchMode mode, int warmup = 3);

}  // namespace optideq
