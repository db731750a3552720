#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "optideq/dataset.hpp"

namespace optideq {

enum class FeatureKind { continuous, categorical, binary };

struct FeatureDescriptor {
  std::string name;
  FeatureKind kind = FeatureKind::continuous;
  int bins = 11;  // continuous, binarised mode
  int cap = 0;    // categorical vocabulary size; 0 = every value seen in training
};

// Declarative schema. Text grammar, one directive per line, '#' comments:
//   label <column> [positive=<value>] [negative=<value>]
//   id <column>
//   feature <name> continuous [bins=<n>]
//   feature <name> categorical [cap=<n>]
//   feature <name> binary
struct FeatureSchema {
  std::vector<FeatureDescriptor> features;
  std::string label_column = "label";
  std::string positive_label = "1";
  std::string negative_label = "0";
  std::string id_column;  // empty: ids are 0-based data-row numbers

  // 6 continuous (11 bins) + 7 categorical (caps summing to 48) + 6 binary.
  static FeatureSchema hmda_preset();
  static FeatureSchema parse(std::string_view text);
  static FeatureSchema load(const std::string& path);
  std::string to_text() const;

  int count(FeatureKind kind) const;
  void validate() const;
};

enum class EncodingMode { raw_ising, raw_onehot, binarized };

std::string_view mode_name(EncodingMode mode);
EncodingMode mode_from_name(std::string_view name);

// One data row with fields in schema order.
struct RawRow {
  std::int64_t id = 0;
  int label = 0;
  std::vector<std::string> fields;
};

struct RawTable {
  FeatureSchema schema;
  std::vector<RawRow> rows;
  std::vector<std::string> rejected;  // "row <n>: <reason>" for rows dropped at ingestion
};

// Reads a comma-separated file whose header names every schema column.
// Rows with a missing field or an unknown label value are rejected, not fatal.
RawTable read_csv(std::istream& in, const FeatureSchema& schema);
RawTable read_csv_file(const std::string& path, const FeatureSchema& schema);

// {0, 1} -> {-1, +1}.
int ising_map(int bit);

struct FeatureFit {
  // continuous
  std::vector<double> knot_values;     // strictly increasing
  std::vector<double> knot_positions;  // empirical CDF in [0, 1], non-decreasing
  std::vector<double> bin_edges;       // binarised: bins - 1 interior quantile edges
  double mean = 0.0;
  double stddev = 1.0;
  // categorical; index = slot, unseen or overflow values go to the catch-all
  std::vector<std::string> vocabulary;
};

struct EncoderFit {
  FeatureSchema schema;
  EncodingMode mode = EncodingMode::raw_ising;
  // false keeps one-hot and binary columns in {0, 1} (centring ablation).
  bool ising = true;
  std::vector<FeatureFit> features;
  int width = 0;

  // Column range [begin, end) occupied by feature `f`.
  std::pair<int, int> columns(std::size_t f) const;

  std::string to_text() const;
  static EncoderFit from_text(std::string_view text);
};

inline constexpr std::size_t kMaxQuantileKnots = 2048;

// Fits on the given (training) rows only.
EncoderFit fit_encoder(std::span<const RawRow> train_rows, const FeatureSchema& schema, EncodingMode mode,
                       bool ising = true);

void encode_into(const EncoderFit& fit, const RawRow& row, std::span<double> out);
std::vector<double> encode(const EncoderFit& fit, const RawRow& row);
LabeledDataset encode_rows(const EncoderFit& fit, std::span<const RawRow> rows);

// Bit-packed key of a spin vector (see GroupKey).
GroupKey group_key(std::span<const double> spins);
std::vector<int> unpack_key(const GroupKey& key, int width);
std::string key_hex(const GroupKey& key);

// Quantile-scaled position of `value` on [-1, 1] for a fitted continuous feature.
double quantile_scale(const FeatureFit& fit, double value);

}  // namespace optideq
