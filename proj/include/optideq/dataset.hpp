#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "optideq/linalg.hpp"

namespace optideq {

// Canonical bit-packed group key: bit i of the binarised vector lives in
// octet i / 8 at bit position i % 8 (little-endian), +1 -> 1, -1 -> 0.
using GroupKey = std::vector<std::uint8_t>;

struct LabeledDataset {
  RowMatrix x;                       // one encoded row per sample
  std::vector<int> y;                // 0 | 1
  std::vector<std::int64_t> row_ids; // ids from the source table
  std::vector<GroupKey> keys;        // optional, one per row when present
  std::string provenance;

  std::size_t size() const { return y.size(); }
  int width() const { return static_cast<int>(x.cols()); }
  std::span<const double> row(std::size_t i) const {
    return {x.data() + i * static_cast<std::size_t>(x.cols()), static_cast<std::size_t>(x.cols())};
  }

  // Rows at `indices`, in that order.
  LabeledDataset subset(std::span<const std::size_t> indices) const;
};

}  // namespace optideq
