#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "optideq/dataset.hpp"

namespace optideq {

using Ratios = std::array<double, 3>;
using Partitions = std::array<std::vector<std::size_t>, 3>;  // indices into the input

inline constexpr Ratios kStratifiedRatios{0.7, 0.2, 0.1};
// The balanced pool is re-split 80/10/10 by group.
inline constexpr Ratios kGroupRatios{0.8, 0.1, 0.1};
inline constexpr std::array<const char*, 3> kPartitionNames{"train", "val", "test"};

// Per-class seeded shuffles sliced by ratio; each class contributes
// round(n_c * r0), round(n_c * r1) and the remainder.
Partitions stratified_split(std::span<const int> labels, const Ratios& ratios, std::uint64_t seed);

// Sorted indices of a balanced subset: the majority class is subsampled
// without replacement to the minority count.
std::vector<std::size_t> downsample_majority(std::span<const int> labels, std::uint64_t seed);

struct PartitionStats {
  std::size_t samples = 0;
  std::size_t groups = 0;
  std::size_t class0 = 0, class1 = 0;
  double target_fraction = 0.0;
  double fraction = 0.0;
};

struct SplitReport {
  std::array<PartitionStats, 3> partitions{};
  std::size_t input_size = 0;
  std::size_t unique_groups = 0;
  std::size_t largest_group = 0;
  std::string leakage = "none";
  bool size_fidelity = true;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;

  std::string to_text() const;
};

struct GroupSplit {
  Partitions parts;
  SplitReport report;
};

// Groups (rows sharing a key) are shuffled and each is assigned whole to the
// partition furthest below its target sample count (ties: lowest index).
GroupSplit group_split(std::span<const GroupKey> keys, std::span<const int> labels, const Ratios& ratios,
                       std::uint64_t seed);

// Throws if any key appears in more than one partition.
void check_no_leakage(std::span<const GroupKey> keys, const Partitions& parts);

}  // namespace optideq
