#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "optideq/errors.hpp"
#include "optideq/rng.hpp"
#include "optideq/splitter.hpp"

using namespace optideq;

namespace {

GroupKey key_of(std::uint64_t g) {
  GroupKey k(8);
  for (int i = 0; i < 8; ++i) k[i] = static_cast<std::uint8_t>(g >> (8 * i));
  return k;
}

// Heavy-tailed group sizes: size = floor(1 / u^a), capped.
std::vector<GroupKey> heavy_tailed_keys(std::size_t n, double a, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GroupKey> keys;
  std::uint64_t g = 0;
  while (keys.size() < n) {
    const double u = std::max(rng.uniform(), 1e-12);
    const auto size = std::min<std::size_t>(static_cast<std::size_t>(std::pow(u, -a)), n - keys.size());
    for (std::size_t i = 0; i < size; ++i) keys.push_back(key_of(g));
    ++g;
  }
  // interleave groups so partitions are not contiguous runs
  rng.shuffle(std::span<GroupKey>(keys));
  return keys;
}

std::vector<int> alternating(std::size_t n) {
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % 2);
  return y;
}

}  // namespace

TEST_SUITE("splitter") {

TEST_CASE("stratified split: exact divisibility") {
  const auto y = alternating(100);
  const auto parts = stratified_split(y, kStratifiedRatios, 1);
  const std::size_t want[3] = {70, 20, 10};
  std::set<std::size_t> all;
  for (int p = 0; p < 3; ++p) {
    CHECK(parts[p].size() == want[p]);
    long ones = 0;
    for (auto i : parts[p]) ones += y[i];
    CHECK(ones * 2 == static_cast<long>(want[p]));
    all.insert(parts[p].begin(), parts[p].end());
  }
  CHECK(all.size() == 100);
}

TEST_CASE("stratified split: single class and tiny class rejected") {
  const std::vector<int> ones(10, 1);
  CHECK_THROWS_AS(stratified_split(ones, kStratifiedRatios, 1), DataError);
  std::vector<int> y(10, 0);
  y[0] = y[1] = 1;
  CHECK_THROWS_AS(stratified_split(y, kStratifiedRatios, 1), DataError);
}

TEST_CASE("stratified split: 82/18 proportions preserved") {
  const std::size_t n = 10007;
  std::vector<int> y(n, 0);
  Rng rng(4);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  rng.shuffle(std::span<std::size_t>(idx));
  const std::size_t positives = std::llround(0.18 * n);
  for (std::size_t i = 0; i < positives; ++i) y[idx[i]] = 1;
  const double base = static_cast<double>(positives) / n;
  const auto parts = stratified_split(y, kStratifiedRatios, 9);
  std::size_t total = 0;
  for (const auto& p : parts) {
    double ones = 0;
    for (auto i : p) ones += y[i];
    CHECK(std::abs(ones / p.size() - base) <= 0.005);
    total += p.size();
  }
  CHECK(total == n);
}

TEST_CASE("stratified split is seed-deterministic") {
  const auto y = alternating(999);
  CHECK(stratified_split(y, kStratifiedRatios, 3) == stratified_split(y, kStratifiedRatios, 3));
  CHECK(stratified_split(y, kStratifiedRatios, 3) != stratified_split(y, kStratifiedRatios, 4));
}

TEST_CASE("downsample majority") {
  std::vector<int> y(1000, 0);
  for (int i = 0; i < 180; ++i) y[i * 5] = 1;
  const auto keep = downsample_majority(y, 2);
  CHECK(keep.size() == 360);
  long ones = 0;
  for (auto i : keep) ones += y[i];
  CHECK(ones == 180);
  CHECK(std::is_sorted(keep.begin(), keep.end()));

  const auto balanced = alternating(50);
  CHECK(downsample_majority(balanced, 2).size() == 50);
}

TEST_CASE("group split: one shared key lands in one partition") {
  const std::vector<GroupKey> keys(40, key_of(7));
  const auto y = alternating(40);
  const auto s = group_split(keys, y, kGroupRatios, 1);
  int nonempty = 0;
  for (const auto& p : s.parts) nonempty += !p.empty();
  CHECK(nonempty == 1);
  CHECK_FALSE(s.report.warnings.empty());
}

TEST_CASE("group split: ten singletons split 7/2/1") {
  std::vector<GroupKey> keys;
  for (int i = 0; i < 10; ++i) keys.push_back(key_of(i));
  const auto s = group_split(keys, alternating(10), kStratifiedRatios, 5);
  CHECK(s.parts[0].size() == 7);
  CHECK(s.parts[1].size() == 2);
  CHECK(s.parts[2].size() == 1);
}

TEST_CASE("group split: adversarial inputs stay leak-free and near target") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (double a : {0.5, 1.0, 1.5}) {
      const auto keys = heavy_tailed_keys(20000, a, seed);
      const auto s = group_split(keys, alternating(keys.size()), kGroupRatios, seed);
      CHECK_NOTHROW(check_no_leakage(keys, s.parts));
      CHECK(s.report.leakage == "none");
      const double tol = std::max(0.02, static_cast<double>(s.report.largest_group) / keys.size());
      for (int p = 0; p < 3; ++p) {
        CHECK(std::abs(static_cast<double>(s.parts[p].size()) / keys.size() - kGroupRatios[p]) <= tol);
      }
      CHECK(s.report.size_fidelity);
    }
  }
}

TEST_CASE("group split: duplicate-dominated data") {
  // 60% of rows share one key, the rest are singletons.
  std::vector<GroupKey> keys;
  for (int i = 0; i < 6000; ++i) keys.push_back(key_of(0));
  for (int i = 0; i < 4000; ++i) keys.push_back(key_of(i + 1));
  const auto s = group_split(keys, alternating(keys.size()), kGroupRatios, 3);
  CHECK_NOTHROW(check_no_leakage(keys, s.parts));
  CHECK(s.report.largest_group == 6000);
  const double tol = 0.6;
  for (int p = 0; p < 3; ++p) CHECK(std::abs(s.parts[p].size() / 10000.0 - kGroupRatios[p]) <= tol);
}

TEST_CASE("group split is deterministic") {
  const auto keys = heavy_tailed_keys(5000, 1.0, 11);
  const auto a = group_split(keys, alternating(5000), kGroupRatios, 8);
  const auto b = group_split(keys, alternating(5000), kGroupRatios, 8);
  CHECK(a.parts == b.parts);
  CHECK(a.report.to_text() == b.report.to_text());
}

TEST_CASE("leakage check is fatal") {
  const std::vector<GroupKey> keys{key_of(1), key_of(2), key_of(1)};
  Partitions parts{std::vector<std::size_t>{0}, std::vector<std::size_t>{1}, std::vector<std::size_t>{2}};
  CHECK_THROWS_AS(check_no_leakage(keys, parts), DataError);
}

TEST_CASE("paper-shaped pool splits near the published partition sizes") {
  // 1,906,780 rows in ~1.30M groups (Table 1: 1,302,951 groups in total).
  const std::size_t n = 1906780;
  Rng rng(2025);
  std::vector<GroupKey> keys;
  keys.reserve(n);
  std::uint64_t g = 0;
  while (keys.size() < n) {
    // geometric sizes with mean ~1.46
    std::size_t size = 1;
    while (rng.uniform() < 0.316) ++size;
    for (std::size_t i = 0; i < size && keys.size() < n; ++i) keys.push_back(key_of(g));
    ++g;
  }
  const auto s = group_split(keys, alternating(n), kGroupRatios, 1);
  CHECK(std::abs(static_cast<double>(s.parts[0].size()) / 1524335.0 - 1.0) <= 0.01);
  CHECK(std::abs(static_cast<double>(s.parts[1].size()) / 191838.0 - 1.0) <= 0.01);
  CHECK(std::abs(static_cast<double>(s.parts[2].size()) / 190607.0 - 1.0) <= 0.01);
  CHECK(s.report.unique_groups == doctest::Approx(1302951.0).epsilon(0.02));
}

}
