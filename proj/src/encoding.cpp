#include "optideq/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "optideq/errors.hpp"
#include "text_util.hpp"

namespace optideq {

namespace {

std::string_view kind_name(FeatureKind k) {
  switch (k) {
    case FeatureKind::continuous: return "continuous";
    case FeatureKind::categorical: return "categorical";
    case FeatureKind::binary: return "binary";
  }
  return "?";
}

FeatureKind kind_from_name(std::string_view s) {
  if (s == "continuous") return FeatureKind::continuous;
  if (s == "categorical") return FeatureKind::categorical;
  if (s == "binary") return FeatureKind::binary;
  throw ConfigError("unknown feature kind '" + std::string(s) + "'");
}

int parse_option_int(std::string_view token, std::string_view key, int line_no) {
  const auto value = text::parse_int(token.substr(key.size() + 1));
  if (!value || *value < 0) {
    throw ConfigError("schema line " + std::to_string(line_no) + ": bad value in '" + std::string(token) + "'");
  }
  return static_cast<int>(*value);
}

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

int parse_bit(std::string_view value, const std::string& field) {
  if (value == "0") return 0;
  if (value == "1") return 1;
  throw DataError("field '" + field + "': binary value must be 0 or 1, got '" + std::string(value) + "'");
}

double parse_continuous(std::string_view value, const std::string& field) {
  const auto v = text::parse_double(value);
  if (!v || !std::isfinite(*v)) {
    throw DataError("field '" + field + "': not a finite number: '" + std::string(value) + "'");
  }
  return *v;
}

// Linear interpolation at fractional index q * (n - 1) of sorted values.
double sorted_quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

int slot_count(const FeatureDescriptor& d, const FeatureFit& f, EncodingMode mode) {
  switch (d.kind) {
    case FeatureKind::continuous: return mode == EncodingMode::binarized ? d.bins : 1;
    case FeatureKind::categorical: {
      const int cap = d.cap > 0 ? d.cap : static_cast<int>(f.vocabulary.size());
      return mode == EncodingMode::binarized ? cap + 1 : cap;
    }
    case FeatureKind::binary: return 1;
  }
  return 0;
}

}  // namespace

// ---- schema -------------------------------------------------------------------

FeatureSchema FeatureSchema::hmda_preset() {
  FeatureSchema s;
  s.label_column = "action_taken";
  for (const char* name : {"loan_amount", "loan_term", "interest_rate", "property_value",
                           "combined_loan_to_value_ratio", "income"}) {
    s.features.push_back({name, FeatureKind::continuous, 11, 0});
  }
  const std::pair<const char*, int> categoricals[] = {
      {"debt_to_income_ratio", 12}, {"occupancy_type", 4},  {"macro_unemployment_rate", 8},
      {"macro_house_price_index", 8}, {"macro_mortgage_rate", 6}, {"macro_gdp_growth", 6},
      {"macro_cpi_inflation", 4}};
  for (const auto& [name, cap] : categoricals) s.features.push_back({name, FeatureKind::categorical, 0, cap});
  for (const char* name : {"loan_type_conventional", "loan_type_fha", "loan_type_va", "loan_purpose_purchase",
                           "loan_purpose_refinance", "loan_purpose_cash_out"}) {
    s.features.push_back({name, FeatureKind::binary, 0, 0});
  }
  return s;
}

FeatureSchema FeatureSchema::parse(std::string_view text) {
  FeatureSchema s;
  s.features.clear();
  std::istringstream in{std::string(text)};
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto tok = text::split_ws(line);
    if (tok.empty()) continue;
    const std::string where = "schema line " + std::to_string(line_no) + ": ";
    if (tok[0] == "label") {
      if (tok.size() < 2) throw ConfigError(where + "label needs a column name");
      s.label_column = std::string(tok[1]);
      for (std::size_t i = 2; i < tok.size(); ++i) {
        if (starts_with(tok[i], "positive=")) s.positive_label = std::string(tok[i].substr(9));
        else if (starts_with(tok[i], "negative=")) s.negative_label = std::string(tok[i].substr(9));
        else throw ConfigError(where + "unknown label option '" + std::string(tok[i]) + "'");
      }
    } else if (tok[0] == "id") {
      if (tok.size() != 2) throw ConfigError(where + "id needs exactly one column name");
      s.id_column = std::string(tok[1]);
    } else if (tok[0] == "feature") {
      if (tok.size() < 3) throw ConfigError(where + "feature needs a name and a kind");
      FeatureDescriptor d{std::string(tok[1]), kind_from_name(tok[2]), 11, 0};
      for (std::size_t i = 3; i < tok.size(); ++i) {
        if (starts_with(tok[i], "bins=") && d.kind == FeatureKind::continuous) {
          d.bins = parse_option_int(tok[i], "bins", line_no);
        } else if (starts_with(tok[i], "cap=") && d.kind == FeatureKind::categorical) {
          d.cap = parse_option_int(tok[i], "cap", line_no);
        } else {
          throw ConfigError(where + "option '" + std::string(tok[i]) + "' does not apply to " +
                            std::string(kind_name(d.kind)));
        }
      }
      s.features.push_back(std::move(d));
    } else {
      throw ConfigError(where + "unknown directive '" + std::string(tok[0]) + "'");
    }
  }
  s.validate();
  return s;
}

FeatureSchema FeatureSchema::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open schema file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string FeatureSchema::to_text() const {
  std::ostringstream out;
  out << "label " << label_column << " positive=" << positive_label << " negative=" << negative_label << '\n';
  if (!id_column.empty()) out << "id " << id_column << '\n';
  for (const auto& f : features) {
    out << "feature " << f.name << ' ' << kind_name(f.kind);
    if (f.kind == FeatureKind::continuous) out << " bins=" << f.bins;
    if (f.kind == FeatureKind::categorical && f.cap > 0) out << " cap=" << f.cap;
    out << '\n';
  }
  return out.str();
}

int FeatureSchema::count(FeatureKind kind) const {
  return static_cast<int>(std::count_if(features.begin(), features.end(),
                                        [kind](const auto& f) { return f.kind == kind; }));
}

void FeatureSchema::validate() const {
  if (features.empty()) throw ConfigError("schema has no features");
  std::map<std::string, int> seen;
  for (const auto& f : features) {
    if (++seen[f.name] > 1) throw ConfigError("duplicate feature '" + f.name + "'");
    if (f.name == label_column || f.name == id_column) {
      throw ConfigError("feature '" + f.name + "' collides with the label or id column");
    }
    if (f.kind == FeatureKind::continuous && f.bins < 2) {
      throw ConfigError("feature '" + f.name + "': bins must be >= 2");
    }
  }
  if (positive_label == negative_label) throw ConfigError("positive and negative labels must differ");
}

std::string_view mode_name(EncodingMode mode) {
  switch (mode) {
    case EncodingMode::raw_ising: return "raw-ising";
    case EncodingMode::raw_onehot: return "raw-onehot";
    case EncodingMode::binarized: return "binarized";
  }
  return "?";
}

EncodingMode mode_from_name(std::string_view name) {
  if (name == "raw-ising") return EncodingMode::raw_ising;
  if (name == "raw-onehot") return EncodingMode::raw_onehot;
  if (name == "binarized") return EncodingMode::binarized;
  throw ConfigError("unknown encoding mode '" + std::string(name) +
                    "' (expected raw-ising, raw-onehot or binarized)");
}

// ---- ingestion ----------------------------------------------------------------

RawTable read_csv(std::istream& in, const FeatureSchema& schema) {
  schema.validate();
  RawTable table;
  table.schema = schema;
  std::string line;
  if (!std::getline(in, line)) throw DataError("CSV input is empty");
  const auto header = text::split_csv(line);
  auto column_of = [&header](const std::string& name) -> int {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  };
  std::vector<int> cols;
  for (const auto& f : schema.features) {
    const int c = column_of(f.name);
    if (c < 0) throw DataError("CSV header lacks schema column '" + f.name + "'");
    cols.push_back(c);
  }
  const int label_col = column_of(schema.label_column);
  if (label_col < 0) throw DataError("CSV header lacks label column '" + schema.label_column + "'");
  const int id_col = schema.id_column.empty() ? -1 : column_of(schema.id_column);
  if (!schema.id_column.empty() && id_col < 0) {
    throw DataError("CSV header lacks id column '" + schema.id_column + "'");
  }

  std::int64_t data_row = 0;
  for (; std::getline(in, line); ++data_row) {
    if (text::trim(line).empty()) {
      --data_row;
      continue;
    }
    const auto fields = text::split_csv(line);
    auto reject = [&](const std::string& why) {
      table.rejected.push_back("row " + std::to_string(data_row) + ": " + why);
    };
    auto get = [&fields](int c) -> const std::string* {
      return c < static_cast<int>(fields.size()) && !fields[c].empty() ? &fields[c] : nullptr;
    };
    RawRow row;
    row.id = data_row;
    if (id_col >= 0) {
      const auto* v = get(id_col);
      const auto id = v ? text::parse_int(*v) : std::nullopt;
      if (!id) {
        reject("missing or non-integer id");
        continue;
      }
      row.id = *id;
    }
    const auto* lab = get(label_col);
    if (!lab || (*lab != schema.positive_label && *lab != schema.negative_label)) {
      reject("label '" + (lab ? *lab : std::string()) + "' is neither " + schema.positive_label + " nor " +
             schema.negative_label);
      continue;
    }
    row.label = *lab == schema.positive_label ? 1 : 0;
    bool ok = true;
    for (std::size_t f = 0; f < cols.size(); ++f) {
      const auto* v = get(cols[f]);
      if (!v) {
        reject("missing field '" + schema.features[f].name + "'");
        ok = false;
        break;
      }
      row.fields.push_back(*v);
    }
    if (ok) table.rows.push_back(std::move(row));
  }
  return table;
}

RawTable read_csv_file(const std::string& path, const FeatureSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file '" + path + "'");
  return read_csv(in, schema);
}

int ising_map(int bit) {
  if (bit != 0 && bit != 1) throw DataError("ising_map: expected 0 or 1, got " + std::to_string(bit));
  return 2 * bit - 1;
}

// ---- fit / encode -------------------------------------------------------------

std::pair<int, int> EncoderFit::columns(std::size_t f) const {
  int begin = 0;
  for (std::size_t i = 0; i < f; ++i) begin += slot_count(schema.features[i], features[i], mode);
  return {begin, begin + slot_count(schema.features[f], features[f], mode)};
}

EncoderFit fit_encoder(std::span<const RawRow> rows, const FeatureSchema& schema, EncodingMode mode,
                       bool ising) {
  schema.validate();
  if (rows.empty()) throw ConfigError("fit_encoder: no training rows");
  EncoderFit fit;
  fit.schema = schema;
  fit.mode = mode;
  fit.ising = ising;
  fit.features.resize(schema.features.size());

  for (std::size_t f = 0; f < schema.features.size(); ++f) {
    const auto& desc = schema.features[f];
    auto& ff = fit.features[f];
    if (desc.kind == FeatureKind::continuous) {
      std::vector<double> v;
      v.reserve(rows.size());
      for (const auto& r : rows) v.push_back(parse_continuous(r.fields.at(f), desc.name));
      std::sort(v.begin(), v.end());
      if (v.front() == v.back()) {
        throw ConfigError("continuous feature '" + desc.name + "' is constant in the training data");
      }
      const double n1 = static_cast<double>(v.size() - 1);
      // Each distinct value sits at the mean of its (i / (n - 1)) ranks.
      std::vector<double> values, positions;
      for (std::size_t i = 0; i < v.size();) {
        std::size_t j = i;
        while (j < v.size() && v[j] == v[i]) ++j;
        values.push_back(v[i]);
        positions.push_back(0.5 * (static_cast<double>(i) + static_cast<double>(j - 1)) / n1);
        i = j;
      }
      if (values.size() > kMaxQuantileKnots) {
        std::vector<double> kv, kp;
        const double step = static_cast<double>(values.size() - 1) / (kMaxQuantileKnots - 1);
        for (std::size_t k = 0; k < kMaxQuantileKnots; ++k) {
          const auto idx = static_cast<std::size_t>(std::llround(step * static_cast<double>(k)));
          kv.push_back(values[idx]);
          kp.push_back(positions[idx]);
        }
        values.swap(kv);
        positions.swap(kp);
      }
      ff.knot_values = std::move(values);
      ff.knot_positions = std::move(positions);
      for (int k = 1; k < desc.bins; ++k) {
        ff.bin_edges.push_back(sorted_quantile(v, static_cast<double>(k) / desc.bins));
      }
      double sum = 0.0, ss = 0.0;
      for (double x : v) sum += x;
      ff.mean = sum / static_cast<double>(v.size());
      for (double x : v) ss += (x - ff.mean) * (x - ff.mean);
      ff.stddev = std::sqrt(ss / static_cast<double>(v.size()));
    } else if (desc.kind == FeatureKind::categorical) {
      std::unordered_map<std::string, long> counts;
      for (const auto& r : rows) ++counts[r.fields.at(f)];
      std::vector<std::pair<std::string, long>> byfreq(counts.begin(), counts.end());
      std::sort(byfreq.begin(), byfreq.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
      });
      const std::size_t cap = desc.cap > 0 ? static_cast<std::size_t>(desc.cap) : byfreq.size();
      for (std::size_t i = 0; i < std::min(cap, byfreq.size()); ++i) ff.vocabulary.push_back(byfreq[i].first);
    } else {
      for (const auto& r : rows) parse_bit(r.fields.at(f), desc.name);
    }
  }
  fit.width = fit.features.empty() ? 0 : fit.columns(fit.features.size() - 1).second;
  return fit;
}

double quantile_scale(const FeatureFit& ff, double value) {
  const auto& kv = ff.knot_values;
  const auto& kp = ff.knot_positions;
  double p;
  if (value <= kv.front()) {
    p = kp.front();
  } else if (value >= kv.back()) {
    p = kp.back();
  } else {
    const auto hi = static_cast<std::size_t>(std::upper_bound(kv.begin(), kv.end(), value) - kv.begin());
    const std::size_t lo = hi - 1;
    p = kp[lo] + (value - kv[lo]) / (kv[hi] - kv[lo]) * (kp[hi] - kp[lo]);
  }
  return std::clamp(2.0 * p - 1.0, -1.0, 1.0);
}

void encode_into(const EncoderFit& fit, const RawRow& row, std::span<double> out) {
  const auto& schema = fit.schema;
  if (row.fields.size() != schema.features.size()) {
    throw DataError("row " + std::to_string(row.id) + ": expected " + std::to_string(schema.features.size()) +
                    " fields, got " + std::to_string(row.fields.size()));
  }
  if (static_cast<int>(out.size()) != fit.width) throw ConfigError("encode: output span has the wrong width");
  const bool spins = fit.mode != EncodingMode::raw_onehot && fit.ising;
  const double on = 1.0;
  const double off = spins ? -1.0 : 0.0;

  int col = 0;
  for (std::size_t f = 0; f < schema.features.size(); ++f) {
    const auto& desc = schema.features[f];
    const auto& ff = fit.features[f];
    const std::string& field = row.fields[f];
    if (field.empty()) throw DataError("row " + std::to_string(row.id) + ": missing field '" + desc.name + "'");
    const int width = slot_count(desc, ff, fit.mode);
    if (desc.kind == FeatureKind::continuous) {
      const double x = parse_continuous(field, desc.name);
      if (fit.mode == EncodingMode::raw_ising) {
        out[col] = quantile_scale(ff, x);
      } else if (fit.mode == EncodingMode::raw_onehot) {
        out[col] = (x - ff.mean) / ff.stddev;
      } else {
        const auto bin = std::upper_bound(ff.bin_edges.begin(), ff.bin_edges.end(), x) - ff.bin_edges.begin();
        for (int k = 0; k < width; ++k) out[col + k] = k == bin ? on : off;
      }
    } else if (desc.kind == FeatureKind::categorical) {
      const auto it = std::find(ff.vocabulary.begin(), ff.vocabulary.end(), field);
      int slot = static_cast<int>(it - ff.vocabulary.begin());
      const bool known = it != ff.vocabulary.end();
      if (!known) slot = fit.mode == EncodingMode::binarized ? width - 1 : -1;
      for (int k = 0; k < width; ++k) out[col + k] = k == slot ? on : off;
    } else {
      out[col] = parse_bit(field, desc.name) == 1 ? on : off;
    }
    col += width;
  }
}

std::vector<double> encode(const EncoderFit& fit, const RawRow& row) {
  std::vector<double> out(static_cast<std::size_t>(fit.width));
  encode_into(fit, row, out);
  return out;
}

LabeledDataset encode_rows(const EncoderFit& fit, std::span<const RawRow> rows) {
  LabeledDataset d;
  d.x.resize(static_cast<Eigen::Index>(rows.size()), fit.width);
  d.y.reserve(rows.size());
  d.row_ids.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    encode_into(fit, rows[i], std::span<double>(d.x.data() + i * fit.width, static_cast<std::size_t>(fit.width)));
    d.y.push_back(rows[i].label);
    d.row_ids.push_back(rows[i].id);
  }
  d.provenance = std::string(mode_name(fit.mode)) + (fit.ising ? "" : " (ising off)");
  return d;
}

// ---- group keys ---------------------------------------------------------------

GroupKey group_key(std::span<const double> spins) {
  GroupKey key((spins.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < spins.size(); ++i) {
    if (spins[i] == 1.0) {
      key[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    } else if (spins[i] != -1.0) {
      throw DataError("group_key: entry " + std::to_string(i) + " is not a spin (+-1)");
    }
  }
  return key;
}

std::vector<int> unpack_key(const GroupKey& key, int width) {
  if (static_cast<std::size_t>(width) > key.size() * 8) throw ConfigError("unpack_key: width exceeds key bits");
  std::vector<int> out(static_cast<std::size_t>(width));
  for (int i = 0; i < width; ++i) out[i] = (key[i / 8] >> (i % 8)) & 1 ? 1 : -1;
  return out;
}

std::string key_hex(const GroupKey& key) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s;
  s.reserve(key.size() * 2);
  for (auto b : key) {
    s += digits[b >> 4];
    s += digits[b & 15];
  }
  return s;
}

// ---- serialisation ------------------------------------------------------------

std::string EncoderFit::to_text() const {
  std::ostringstream out;
  out << "OPTIDEQ-ENCODER v1\n";
  out << "mode " << mode_name(mode) << '\n';
  out << "ising " << (ising ? 1 : 0) << '\n';
  out << "width " << width << '\n';
  const std::string schema_text = schema.to_text();
  out << "schema_lines " << std::count(schema_text.begin(), schema_text.end(), '\n') << '\n';
  out << schema_text;
  for (std::size_t f = 0; f < features.size(); ++f) {
    const auto& ff = features[f];
    out << "fit " << schema.features[f].name << '\n';
    auto vec = [&out](const char* tag, const std::vector<double>& v) {
      out << tag << ' ' << v.size();
      for (double x : v) out << ' ' << text::format17(x);
      out << '\n';
    };
    vec("knot_values", ff.knot_values);
    vec("knot_positions", ff.knot_positions);
    vec("bin_edges", ff.bin_edges);
    out << "moments " << text::format17(ff.mean) << ' ' << text::format17(ff.stddev) << '\n';
    out << "vocabulary " << ff.vocabulary.size() << '\n';
    for (const auto& v : ff.vocabulary) out << v << '\n';
  }
  return out.str();
}

EncoderFit EncoderFit::from_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  auto next = [&](const char* what) -> std::string {
    if (!std::getline(in, line)) throw DataError(std::string("encoder file truncated before ") + what);
    return line;
  };
  if (next("header") != "OPTIDEQ-ENCODER v1") throw DataError("not an OPTIDEQ-ENCODER v1 file");
  auto field = [&](const char* key) -> std::string {
    const std::string l = next(key);
    const std::string prefix = std::string(key) + " ";
    if (l.rfind(prefix, 0) != 0) throw DataError(std::string("encoder file: expected '") + key + "'");
    return l.substr(prefix.size());
  };
  EncoderFit fit;
  fit.mode = mode_from_name(field("mode"));
  fit.ising = field("ising") == "1";
  fit.width = static_cast<int>(text::parse_int(field("width")).value_or(-1));
  const long schema_lines = text::parse_int(field("schema_lines")).value_or(-1);
  std::string schema_text;
  for (long i = 0; i < schema_lines; ++i) schema_text += next("schema") + "\n";
  fit.schema = FeatureSchema::parse(schema_text);
  for (const auto& desc : fit.schema.features) {
    if (field("fit") != desc.name) throw DataError("encoder file: fit for '" + desc.name + "' out of order");
    FeatureFit ff;
    auto vec = [&](const char* tag) {
      const std::string l = field(tag);
      const auto tok = text::split_ws(l);
      std::vector<double> v;
      const auto n = tok.empty() ? std::nullopt : text::parse_int(tok[0]);
      if (!n || static_cast<std::size_t>(*n) + 1 != tok.size()) throw DataError("encoder file: bad vector");
      for (std::size_t i = 1; i < tok.size(); ++i) v.push_back(text::parse_double(tok[i]).value());
      return v;
    };
    ff.knot_values = vec("knot_values");
    ff.knot_positions = vec("knot_positions");
    ff.bin_edges = vec("bin_edges");
    const std::string moments = field("moments");
    const auto m = text::split_ws(moments);
    if (m.size() != 2) throw DataError("encoder file: bad moments");
    ff.mean = text::parse_double(m[0]).value();
    ff.stddev = text::parse_double(m[1]).value();
    const long nv = text::parse_int(field("vocabulary")).value_or(-1);
    for (long i = 0; i < nv; ++i) ff.vocabulary.push_back(next("vocabulary"));
    fit.features.push_back(std::move(ff));
  }
  const int expected = fit.features.empty() ? 0 : fit.columns(fit.features.size() - 1).second;
  if (expected != fit.width) throw DataError("encoder file: width does not match the schema");
  return fit;
}

}  // namespace optideq
