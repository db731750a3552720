#include "optideq/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include "optideq/errors.hpp"

namespace optideq {

Confusion confusion(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) throw DataError("predictions and labels differ in length");
  Confusion c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] == 1) {
      (preds[i] == 1 ? c.tp : c.fn)++;
    } else {
      (preds[i] == 1 ? c.fp : c.tn)++;
    }
  }
  return c;
}

double balanced_accuracy(const Confusion& c) {
  if (c.tp + c.fn == 0 || c.tn + c.fp == 0) {
    throw DataError("balanced accuracy needs both classes present in the labels");
  }
  const double recall1 = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  const double recall0 = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
  return 0.5 * (recall0 + recall1);
}

double balanced_accuracy(std::span<const int> preds, std::span<const int> labels) {
  return balanced_accuracy(confusion(preds, labels));
}

std::vector<std::size_t> error_set(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) throw DataError("predictions and labels differ in length");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i] != labels[i]) out.push_back(i);
  return out;
}

double jaccard_from_counts(std::size_t size_a, std::size_t size_b, std::size_t shared) {
  const std::size_t uni = size_a + size_b - shared;
  return uni == 0 ? 1.0 : static_cast<double>(shared) / static_cast<double>(uni);
}

Overlap error_overlap(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  std::vector<std::size_t> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  Overlap o;
  o.shared = common.size();
  o.only_a = a.size() - o.shared;
  o.only_b = b.size() - o.shared;
  o.jaccard = jaccard_from_counts(a.size(), b.size(), o.shared);
  return o;
}

double chi_square1_upper_tail(double x) {
  if (x <= 0.0) return 1.0;
  return std::erfc(std::sqrt(0.5 * x));
}

McNemar mcnemar_from_counts(long b, long c) {
  McNemar r;
  r.b = b;
  r.c = c;
  const long n = b + c;
  if (n == 0) return r;
  const double diff = std::abs(static_cast<double>(b - c)) - 1.0;
  r.statistic = std::max(diff, 0.0) * std::max(diff, 0.0) / static_cast<double>(n);
  if (n < kMcNemarExactBelow) {
    // Two-sided exact binomial(k; n, 1/2): 2 * P(X <= min(b, c)), capped at 1.
    const long k = std::min(b, c);
    double tail = 0.0;
    double coef = 1.0;  // C(n, i)
    for (long i = 0; i <= k; ++i) {
      tail += coef;
      coef = coef * static_cast<double>(n - i) / static_cast<double>(i + 1);
    }
    r.p = std::min(1.0, 2.0 * tail * std::ldexp(1.0, static_cast<int>(-n)));
    r.exact = true;
  } else {
    r.p = chi_square1_upper_tail(r.statistic);
  }
  return r;
}

McNemar mcnemar(std::span<const int> preds_a, std::span<const int> preds_b, std::span<const int> labels) {
  if (preds_a.size() != labels.size() || preds_b.size() != labels.size()) {
    throw DataError("McNemar: prediction vectors are not aligned with the labels");
  }
  long b = 0, c = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool ra = preds_a[i] == labels[i];
    const bool rb = preds_b[i] == labels[i];
    if (ra && !rb) ++b;
    if (!ra && rb) ++c;
  }
  return mcnemar_from_counts(b, c);
}

SeedSummary aggregate_seeds(std::span<const double> values) {
  SeedSummary s;
  s.count = values.size();
  if (values.empty()) throw DataError("aggregate_seeds: no values");
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

double latency_projection(double n_blocks, double iterations, double pass_time_ns) {
  if (!(n_blocks > 0 && iterations > 0 && pass_time_ns > 0)) {
    throw ConfigError("latency_projection: inputs must be positive");
  }
  return n_blocks * iterations * pass_time_ns;
}

std::vector<int> majority_vote(const std::vector<std::vector<int>>& predictions) {
  if (predictions.empty()) return {};
  const std::size_t n = predictions.front().size();
  for (const auto& p : predictions)
    if (p.size() != n) throw DataError("majority_vote: prediction vectors differ in length");
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    int ones = 0;
    for (const auto& p : predictions) ones += p[i];
    const int zeros = static_cast<int>(predictions.size()) - ones;
    out[i] = ones == zeros ? predictions.front()[i] : (ones > zeros ? 1 : 0);
  }
  return out;
}

std::string platform_descriptor() {
  std::string cpu = "unknown-cpu";
  std::ifstream info("/proc/cpuinfo");
  for (std::string line; std::getline(info, line);) {
    if (line.rfind("model name", 0) == 0) {
      const auto pos = line.find(':');
      if (pos != std::string::npos) cpu = line.substr(pos + 2);
      break;
    }
  }
  return cpu + "; hw_threads=" + std::to_string(std::thread::hardware_concurrency()) +
         "; single-threaded; compiler=" + __VERSION__;
}

BenchReport wallclock_bench(const std::function<void(std::size_t)>& infer_row, std::size_t rows,
                            BenchMode mode, int warmup) {
  using clock = std::chrono::steady_clock;
  if (rows == 0) throw ConfigError("wallclock_bench: no rows");
  BenchReport r;
  r.mode = mode;
  r.rows = rows;
  r.warmup = std::max(warmup, 3);
  r.platform = platform_descriptor();
  for (int w = 0; w < r.warmup; ++w)
    for (std::size_t i = 0; i < rows; ++i) infer_row(i);

  if (mode == BenchMode::batch) {
    const auto t0 = clock::now();
    for (std::size_t i = 0; i < rows; ++i) infer_row(i);
    const auto t1 = clock::now();
    r.per_sample_ns = std::chrono::duration<double, std::nano>(t1 - t0).count() / static_cast<double>(rows);
  } else {
    std::vector<double> samples(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      const auto t0 = clock::now();
      infer_row(i);
      const auto t1 = clock::now();
      samples[i] = std::chrono::duration<double, std::nano>(t1 - t0).count();
    }
    auto mid = samples.begin() + static_cast<std::ptrdiff_t>(rows / 2);
    std::nth_element(samples.begin(), mid, samples.end());
    double median = *mid;
    if (rows % 2 == 0) median = 0.5 * (median + *std::max_element(samples.begin(), mid));
    r.per_sample_ns = median;
  }
  return r;
}

}  // namespace optideq
