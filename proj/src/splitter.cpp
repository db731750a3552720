#include "optideq/splitter.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "optideq/errors.hpp"
#include "optideq/rng.hpp"

namespace optideq {

namespace {

void check_ratios(const Ratios& r) {
  double sum = 0.0;
  for (double x : r) {
    if (!(x > 0.0)) throw ConfigError("split ratios must be positive");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
}

struct KeyHash {
  std::size_t operator()(const GroupKey& k) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto b : k) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

}  // namespace

Partitions stratified_split(std::span<const int> labels, const Ratios& ratios, std::uint64_t seed) {
  check_ratios(ratios);
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw DataError("stratified_split: labels must be 0 or 1");
    by_class[labels[i]].push_back(i);
  }
  Rng rng(seed);
  Partitions parts;
  for (int c = 0; c < 2; ++c) {
    auto& rows = by_class[c];
    if (rows.size() < 3) {
      throw DataError("stratified_split: class " + std::to_string(c) + " has " + std::to_string(rows.size()) +
                      " rows, fewer than the 3 partitions");
    }
    rng.shuffle(std::span<std::size_t>(rows));
    const double n = static_cast<double>(rows.size());
    const auto n0 = static_cast<std::size_t>(std::llround(n * ratios[0]));
    const auto n1 = std::min(rows.size() - n0, static_cast<std::size_t>(std::llround(n * ratios[1])));
    parts[0].insert(parts[0].end(), rows.begin(), rows.begin() + n0);
    parts[1].insert(parts[1].end(), rows.begin() + n0, rows.begin() + n0 + n1);
    parts[2].insert(parts[2].end(), rows.begin() + n0 + n1, rows.end());
  }
  for (auto& p : parts) std::sort(p.begin(), p.end());
  return parts;
}

std::vector<std::size_t> downsample_majority(std::span<const int> labels, std::uint64_t seed) {
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw DataError("downsample_majority: labels must be 0 or 1");
    by_class[labels[i]].push_back(i);
  }
  if (by_class[0].empty() || by_class[1].empty()) throw DataError("downsample_majority: both classes required");
  const int major = by_class[0].size() >= by_class[1].size() ? 0 : 1;
  auto& big = by_class[major];
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(big));
  big.resize(by_class[1 - major].size());
  std::vector<std::size_t> out = by_class[0];
  out.insert(out.end(), by_class[1].begin(), by_class[1].end());
  std::sort(out.begin(), out.end());
  return out;
}

void check_no_leakage(std::span<const GroupKey> keys, const Partitions& parts) {
  std::unordered_map<GroupKey, int, KeyHash> owner;
  for (int p = 0; p < 3; ++p) {
    for (std::size_t i : parts[p]) {
      const auto [it, inserted] = owner.emplace(keys[i], p);
      if (!inserted && it->second != p) {
        throw DataError(std::string("group leakage: a key appears in both ") + kPartitionNames[it->second] +
                        " and " + kPartitionNames[p]);
      }
    }
  }
}

GroupSplit group_split(std::span<const GroupKey> keys, std::span<const int> labels, const Ratios& ratios,
                       std::uint64_t seed) {
  check_ratios(ratios);
  if (keys.size() != labels.size()) throw DataError("group_split: keys and labels differ in length");

  // Groups in first-appearance order, then shuffled.
  std::unordered_map<GroupKey, std::size_t, KeyHash> group_of;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const auto [it, inserted] = group_of.emplace(keys[i], groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  std::vector<std::size_t> order(groups.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));

  const double n = static_cast<double>(keys.size());
  std::array<double, 3> target{};
  for (int p = 0; p < 3; ++p) target[p] = ratios[p] * n;
  const double max_target = *std::max_element(target.begin(), target.end());

  GroupSplit out;
  SplitReport& rep = out.report;
  rep.seed = seed;
  rep.input_size = keys.size();
  rep.unique_groups = groups.size();
  std::array<double, 3> filled{};
  for (std::size_t g : order) {
    const auto& rows = groups[g];
    rep.largest_group = std::max(rep.largest_group, rows.size());
    if (static_cast<double>(rows.size()) > max_target) {
      rep.warnings.push_back("group of " + std::to_string(rows.size()) + " rows exceeds the largest target (" +
                             std::to_string(static_cast<long>(max_target)) + ")");
    }
    int best = 0;
    for (int p = 1; p < 3; ++p)
      if (target[p] - filled[p] > target[best] - filled[best]) best = p;
    filled[best] += static_cast<double>(rows.size());
    out.parts[best].insert(out.parts[best].end(), rows.begin(), rows.end());
    ++rep.partitions[best].groups;
  }
  for (auto& p : out.parts) std::sort(p.begin(), p.end());

  check_no_leakage(keys, out.parts);

  const double tolerance = std::max(0.02, static_cast<double>(rep.largest_group) / std::max(n, 1.0));
  for (int p = 0; p < 3; ++p) {
    auto& st = rep.partitions[p];
    st.samples = out.parts[p].size();
    for (std::size_t i : out.parts[p]) (labels[i] == 1 ? st.class1 : st.class0)++;
    st.target_fraction = ratios[p];
    st.fraction = n > 0 ? static_cast<double>(st.samples) / n : 0.0;
    if (std::abs(st.fraction - st.target_fraction) > tolerance) rep.size_fidelity = false;
  }
  if (!rep.size_fidelity) rep.warnings.push_back("a partition deviates from its target beyond tolerance");
  return out;
}

std::string SplitReport::to_text() const {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  out << "seed " << seed << '\n';
  out << "input_size " << input_size << '\n';
  out << "unique_groups " << unique_groups << '\n';
  out << "largest_group " << largest_group << '\n';
  out << "leakage " << leakage << '\n';
  out << "size_fidelity " << (size_fidelity ? "ok" : "violated") << '\n';
  out << "partition,samples,groups,class0,class1,class1_share,fraction,target_fraction\n";
  for (int p = 0; p < 3; ++p) {
    const auto& s = partitions[p];
    const double share = s.samples ? static_cast<double>(s.class1) / static_cast<double>(s.samples) : 0.0;
    out << kPartitionNames[p] << ',' << s.samples << ',' << s.groups << ',' << s.class0 << ',' << s.class1 << ','
        << share << ',' << s.fraction << ',' << s.target_fraction << '\n';
  }
  for (const auto& w : warnings) out << "warning " << w << '\n';
  return out.str();
}

}  // namespace optideq
