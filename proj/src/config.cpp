#include "optideq/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <filesystem>
#include <set>
#include <sstream>

#include "optideq/errors.hpp"
#include "optideq/io.hpp"
#include "text_util.hpp"

namespace optideq {

namespace pt = boost::property_tree;

std::string_view family_name(ModelFamily f) {
  switch (f) {
    case ModelFamily::deq: return "deq";
    case ModelFamily::mlp: return "mlp";
    case ModelFamily::logreg: return "logreg";
  }
  return "?";
}

ModelFamily family_from_name(std::string_view name) {
  if (name == "deq") return ModelFamily::deq;
  if (name == "mlp") return ModelFamily::mlp;
  if (name == "logreg") return ModelFamily::logreg;
  throw ConfigError("unknown model family '" + std::string(name) + "' (deq, mlp, logreg)");
}

namespace {

double as_double(const std::string& key, const std::string& v) {
  const auto d = text::parse_double(v);
  if (!d) throw ConfigError("config key '" + key + "': not a number: '" + v + "'");
  return *d;
}

long long as_int(const std::string& key, const std::string& v) {
  const auto i = text::parse_int(v);
  if (!i) throw ConfigError("config key '" + key + "': not an integer: '" + v + "'");
  return *i;
}

std::uint64_t as_seed(const std::string& key, const std::string& v) {
  const auto i = as_int(key, v);
  if (i < 0) throw ConfigError("config key '" + key + "': seeds are non-negative");
  return static_cast<std::uint64_t>(i);
}

bool as_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty() || p == "hmda") return p;
  const std::filesystem::path path(p);
  return path.is_absolute() ? p : (std::filesystem::path(base) / path).lexically_normal().string();
}

void set_run_key(RunSpec& run, const std::string& key, const std::string& v) {
  const std::string where = "run." + run.name + "." + key;
  auto& m = run.model;
  auto& t = run.train;
  if (key == "family") run.family = family_from_name(v);
  else if (key == "mode") run.mode = mode_from_name(v);
  else if (key == "ising") run.ising = as_bool(where, v);
  else if (key == "d_hidden") m.d_hidden = static_cast<int>(as_int(where, v));
  else if (key == "n_blocks") m.n_blocks = static_cast<int>(as_int(where, v));
  else if (key == "alpha") m.alpha = as_double(where, v);
  else if (key == "beta") m.beta = as_double(where, v);
  else if (key == "tol") m.tol = as_double(where, v);
  else if (key == "max_iters") m.max_iters = static_cast<int>(as_int(where, v));
  else if (key == "cell") {
    const CellKind kind = cell_kind_from_name(v);
    const std::uint64_t seed = m.cell.rng_seed;
    m.cell = kind == CellKind::aoc ? CellSpec::aoc(seed) : CellSpec::simple();
  } else if (key == "cell.quant_bits") m.cell.quant_bits = static_cast<int>(as_int(where, v));
  else if (key == "cell.rng_seed") m.cell.rng_seed = as_seed(where, v);
  else if (key == "cell.power_norm.target_rms") m.cell.stage(Stage::power_norm).shape = as_double(where, v);
  else if (key.rfind("cell.", 0) == 0) m.cell.stage(stage_from_name(key.substr(5))).magnitude = as_double(where, v);
  else if (key == "hidden") run.mlp_hidden = static_cast<int>(as_int(where, v));
  else if (key == "l2") run.l2 = as_double(where, v);
  else if (key == "learning_rate") {
    t.learning_rate = as_double(where, v);
    run.lr_set = true;
  } else if (key == "batch_size") t.batch_size = static_cast<int>(as_int(where, v));
  else if (key == "patience") t.patience = static_cast<int>(as_int(where, v));
  else if (key == "max_epochs") t.max_epochs = static_cast<int>(as_int(where, v));
  else if (key == "monitor") t.monitor = v;
  else if (key == "through_impairments") t.through_impairments = as_bool(where, v);
  else if (key == "max_gain") t.max_gain = as_double(where, v);
  else throw ConfigError("unknown config key '" + where + "'");
}

}  // namespace

FeatureSchema ExperimentConfig::schema() const {
  return schema_path == "hmda" ? FeatureSchema::hmda_preset() : FeatureSchema::load(schema_path);
}

void ExperimentConfig::validate() const {
  if (csv_path.empty()) throw ConfigError("[data] csv is required");
  if (!std::filesystem::exists(csv_path)) throw ConfigError("data file '" + csv_path + "' does not exist");
  if (schema_path != "hmda" && !std::filesystem::exists(schema_path)) {
    throw ConfigError("schema file '" + schema_path + "' does not exist");
  }
  if (seeds.empty()) throw ConfigError("[experiment] seeds must be non-empty");
  if (threads < 1) throw ConfigError("[experiment] threads must be >= 1");
  if (!(pass_time_ns > 0)) throw ConfigError("[experiment] pass_time_ns must be > 0");
  if (runs.empty()) throw ConfigError("no [run.<name>] sections");
  std::set<std::string> names;
  for (const auto& r : runs) {
    if (!names.insert(r.name).second) throw ConfigError("duplicate run '" + r.name + "'");
    try {
      r.train.validate();
      if (r.family == ModelFamily::deq) {
        ModelConfig m = r.model;
        m.d_in = 1;
        m.validate();
      }
    } catch (const ConfigError& e) {
      throw ConfigError("run." + r.name + ": " + e.what());
    }
    if (r.mlp_hidden < 1) throw ConfigError("run." + r.name + ".hidden must be >= 1");
    if (r.l2 < 0) throw ConfigError("run." + r.name + ".l2 must be >= 0");
  }
}

ExperimentConfig parse_config(const std::string& text, const std::string& base_dir) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ExperimentConfig cfg;
  for (const auto& [section, body] : tree) {
    if (section == "data") {
      for (const auto& [k, v] : body) {
        const std::string value = v.data();
        if (k == "csv") cfg.csv_path = resolve(base_dir, value);
        else if (k == "schema") cfg.schema_path = resolve(base_dir, value);
        else throw ConfigError("unknown config key 'data." + k + "'");
      }
    } else if (section == "experiment") {
      for (const auto& [k, v] : body) {
        const std::string value = v.data();
        const std::string where = "experiment." + k;
        if (k == "seed") cfg.master_seed = as_seed(where, value);
        else if (k == "seeds") {
          cfg.seeds.clear();
          std::string item;
          std::istringstream list(value);
          while (std::getline(list, item, ',')) cfg.seeds.push_back(as_seed(where, std::string(text::trim(item))));
        } else if (k == "out") cfg.out_dir = resolve(base_dir, value);
        else if (k == "threads") cfg.threads = static_cast<int>(as_int(where, value));
        else if (k == "pass_time_ns") cfg.pass_time_ns = as_double(where, value);
        else throw ConfigError("unknown config key '" + where + "'");
      }
    } else if (section.rfind("run.", 0) == 0 && section.size() > 4) {
      RunSpec run;
      run.name = section.substr(4);
      for (const auto& [k, v] : body) set_run_key(run, k, v.data());
      cfg.runs.push_back(std::move(run));
    } else {
      throw ConfigError("unknown config section [" + section + "]");
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  const auto base = std::filesystem::path(path).parent_path().string();
  return parse_config(read_file(path), base.empty() ? "." : base);
}

void apply_overrides(ExperimentConfig& cfg, const ConfigOverrides& o) {
  if (o.seed) cfg.master_seed = *o.seed;
  if (o.out) cfg.out_dir = *o.out;
  if (o.mode) {
    const EncodingMode m = mode_from_name(*o.mode);
    for (auto& r : cfg.runs) r.mode = m;
  }
  if (o.model) {
    std::vector<RunSpec> kept;
    for (auto& r : cfg.runs)
      if (r.name == *o.model || family_name(r.family) == *o.model) kept.push_back(r);
    if (kept.empty()) throw ConfigError("--model '" + *o.model + "' matches no run");
    cfg.runs = std::move(kept);
  }
  if (o.cell) {
    const CellKind kind = cell_kind_from_name(*o.cell);
    for (auto& r : cfg.runs) {
      if (r.family != ModelFamily::deq) continue;
      const std::uint64_t seed = r.model.cell.rng_seed;
      r.model.cell = kind == CellKind::aoc ? CellSpec::aoc(seed) : CellSpec::simple();
    }
  }
}

std::string config_to_text(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "[data]\ncsv = " << cfg.csv_path << "\nschema = " << cfg.schema_path << "\n\n[experiment]\nseed = "
      << cfg.master_seed << "\nseeds = ";
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) out << (i ? "," : "") << cfg.seeds[i];
  out << "\nout = " << cfg.out_dir << "\nthreads = " << cfg.threads
      << "\npass_time_ns = " << text::format17(cfg.pass_time_ns) << '\n';
  for (const auto& r : cfg.runs) {
    const auto& m = r.model;
    const auto& t = r.train;
    out << "\n[run." << r.name << "]\nfamily = " << family_name(r.family) << "\nmode = " << mode_name(r.mode)
        << "\nising = " << (r.ising ? "true" : "false") << '\n';
    if (r.family == ModelFamily::deq) {
      out << "d_hidden = " << m.d_hidden << "\nn_blocks = " << m.n_blocks << "\nalpha = " << text::format17(m.alpha)
          << "\nbeta = " << text::format17(m.beta) << "\ntol = " << text::format17(m.tol)
          << "\nmax_iters = " << m.max_iters << "\ncell = " << cell_kind_name(m.cell.kind)
          << "\ncell.quant_bits = " << m.cell.quant_bits << "\ncell.rng_seed = " << m.cell.rng_seed << '\n';
      for (int s = 0; s < kStageCount; ++s) {
        out << "cell." << stage_name(static_cast<Stage>(s)) << " = " << text::format17(m.cell.stages[s].magnitude)
            << '\n';
      }
      out << "cell.power_norm.target_rms = " << text::format17(m.cell.stage(Stage::power_norm).shape) << '\n';
    } else if (r.family == ModelFamily::mlp) {
      out << "hidden = " << r.mlp_hidden << '\n';
    } else {
      out << "l2 = " << text::format17(r.l2) << '\n';
    }
    if (r.lr_set) {
      out << "learning_rate = " << text::format17(t.learning_rate) << '\n';
    } else {
      out << "; learning_rate: family default\n";
    }
    out << "batch_size = " << t.batch_size << "\npatience = " << t.patience << "\nmax_epochs = " << t.max_epochs
        << "\nmonitor = " << t.monitor << "\nthrough_impairments = " << (t.through_impairments ? "true" : "false")
        << "\nmax_gain = " << text::format17(t.max_gain) << '\n';
  }
  return out.str();
}

}  // namespace optideq
