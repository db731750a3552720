#pragma once

// Seeded synthetic tabular tasks in the same CSV + schema form as real data.
//   separable           label = [c0 + 0.5 c1 - 0.25 c2 > 0]
//   xor-like            label = [c0 * c1 > 0], c0, c1 ~ U(-1, 1) are the only columns
//   binned-boundary     label = parity of the equal-mass 11-bin index of c0
//   sparse-categorical  six 8-way categoricals, label = [g0 < 4] xor [g1 < 4]
// separable and binned-boundary add distractors (c1..c3, a 4-way categorical,
// a binary flag). Labels are flipped with probability `noise`, so the Bayes
// balanced accuracy is 1 - noise.

#include <cstdint>
#include <string>
#include <vector>

#include "optideq/encoding.hpp"

namespace optideq {

struct SynthSpec {
  std::string kind = "xor-like";
  std::size_t rows = 10000;
  std::uint64_t seed = 0;
  double noise = 0.0;
};

struct SynthData {
  FeatureSchema schema;
  std::string csv;
};

const std::vector<std::string>& synth_kinds();
SynthData synthesize(const SynthSpec& spec);

}  // namespace optideq
