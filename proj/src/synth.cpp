#include "optideq/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "optideq/errors.hpp"
#include "optideq/rng.hpp"

namespace optideq {

const std::vector<std::string>& synth_kinds() {
  static const std::vector<std::string> kinds{"separable", "xor-like", "binned-boundary", "sparse-categorical"};
  return kinds;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

FeatureSchema mixed_schema() {
  FeatureSchema s;
  s.id_column = "id";
  for (int i = 0; i < 4; ++i) s.features.push_back({"c" + std::to_string(i), FeatureKind::continuous, 11, 0});
  s.features.push_back({"cat0", FeatureKind::categorical, 11, 4});
  s.features.push_back({"bin0", FeatureKind::binary, 11, 0});
  return s;
}

FeatureSchema xor_schema() {
  FeatureSchema s;
  s.id_column = "id";
  for (int i = 0; i < 2; ++i) s.features.push_back({"c" + std::to_string(i), FeatureKind::continuous, 11, 0});
  return s;
}

FeatureSchema sparse_schema() {
  FeatureSchema s;
  s.id_column = "id";
  for (int i = 0; i < 6; ++i) s.features.push_back({"g" + std::to_string(i), FeatureKind::categorical, 11, 8});
  return s;
}

}  // namespace

SynthData synthesize(const SynthSpec& spec) {
  const auto& kinds = synth_kinds();
  if (std::find(kinds.begin(), kinds.end(), spec.kind) == kinds.end()) {
    throw ConfigError("unknown synthetic kind '" + spec.kind + "'");
  }
  if (spec.rows < 1) throw ConfigError("synthetic rows must be >= 1");
  if (!(spec.noise >= 0.0 && spec.noise <= 0.5)) throw ConfigError("synthetic noise must lie in [0, 0.5]");

  Rng rng(derive_seed(spec.seed, "synth." + spec.kind));
  const bool sparse = spec.kind == "sparse-categorical";
  const bool xor_like = spec.kind == "xor-like";
  SynthData out;
  out.schema = sparse ? sparse_schema() : xor_like ? xor_schema() : mixed_schema();

  std::ostringstream csv;
  csv << "id";
  for (const auto& f : out.schema.features) csv << ',' << f.name;
  csv << ",label\n";
  for (std::size_t r = 0; r < spec.rows; ++r) {
    csv << r;
    int label = 0;
    if (sparse) {
      int g[6];
      for (int& v : g) v = static_cast<int>(rng.below(8));
      label = (g[0] < 4) != (g[1] < 4) ? 1 : 0;
      for (int v : g) csv << ",v" << v;
    } else if (xor_like) {
      const double a = rng.uniform(-1.0, 1.0), b = rng.uniform(-1.0, 1.0);
      label = a * b > 0.0 ? 1 : 0;
      csv << ',' << num(a) << ',' << num(b);
    } else {
      double c[4];
      for (double& v : c) v = rng.uniform(-1.0, 1.0);
      const int cat = static_cast<int>(rng.below(4));
      const int bit = static_cast<int>(rng.below(2));
      if (spec.kind == "separable") {
        label = c[0] + 0.5 * c[1] - 0.25 * c[2] > 0.0 ? 1 : 0;
      } else {
        const int bin = std::min(10, static_cast<int>((c[0] + 1.0) * 0.5 * 11.0));
        label = bin % 2;
      }
      for (double v : c) csv << ',' << num(v);
      csv << ",k" << cat << ',' << bit;
    }
    if (rng.bernoulli(spec.noise)) label = 1 - label;
    csv << ',' << label << '\n';
  }
  out.csv = csv.str();
  return out;
}

}  // namespace optideq
