#include <doctest.h>

#include <filesystem>
#include <set>
#include <sstream>

#include "optideq/config.hpp"
#include "optideq/errors.hpp"
#include "optideq/io.hpp"
#include "optideq/pipeline.hpp"
#include "optideq/report.hpp"
#include "optideq/synth.hpp"

using namespace optideq;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("optideq_app_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::string item;
    std::istringstream ls(line);
    while (std::getline(ls, item, ',')) f.push_back(item);
    rows.push_back(f);
  }
  return rows;
}

const char* kConfig = R"([data]
csv = data.csv
schema = schema.txt

[experiment]
seed = 11
seeds = 3, 5
out = out
threads = 2

[run.deq]
family = deq
mode = raw-ising
cell = aoc
cell.quant_bits = 8
cell.crosstalk = 0.05
d_hidden = 8
n_blocks = 2
max_epochs = 4
patience = 2
learning_rate = 1e-3
batch_size = 32
max_gain = 0.45

[run.lr]
family = logreg
mode = binarized
l2 = 0.001
learning_rate = 0.05
max_epochs = 3
patience = 3
)";

}  // namespace

TEST_SUITE("app") {
  TEST_CASE("config file: values, defaults and path resolution") {
    const ExperimentConfig cfg = parse_config(kConfig, "/base");
    CHECK(cfg.csv_path == "/base/data.csv");
    CHECK(cfg.schema_path == "/base/schema.txt");
    CHECK(cfg.out_dir == "/base/out");
    CHECK(cfg.master_seed == 11);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{3, 5});
    CHECK(cfg.threads == 2);
    REQUIRE(cfg.runs.size() == 2);
    const auto& d = cfg.runs[0];
    CHECK(d.name == "deq");
    CHECK(d.family == ModelFamily::deq);
    CHECK(d.model.cell.kind == CellKind::aoc);
    CHECK(d.model.cell.quant_bits == 8);
    CHECK(d.model.cell.eps(Stage::crosstalk) == 0.05);
    CHECK(d.model.cell.eps(Stage::tia_gain) == 0.02);
    CHECK(d.model.d_hidden == 8);
    CHECK(d.model.alpha == 0.5);
    CHECK(d.train.learning_rate == 1e-3);
    CHECK(d.train.max_gain == 0.45);
    const auto& l = cfg.runs[1];
    CHECK(l.family == ModelFamily::logreg);
    CHECK(l.mode == EncodingMode::binarized);
    CHECK(l.l2 == 0.001);
    CHECK(l.lr_set);
    CHECK(l.train.batch_size == 256);
  }

  TEST_CASE("config file: errors name the offending key") {
    auto message = [](const std::string& text) {
      try {
        parse_config(text);
      } catch (const ConfigError& e) {
        return std::string(e.what());
      }
      return std::string("no error");
    };
    CHECK(message("[run.a]\nwidth = 3\n").find("run.a.width") != std::string::npos);
    CHECK(message("[run.a]\nd_hidden = many\n").find("run.a.d_hidden") != std::string::npos);
    CHECK(message("[bogus]\nx = 1\n").find("[bogus]") != std::string::npos);
    CHECK(message("[run.a]\nfamily = forest\n").find("forest") != std::string::npos);
    CHECK(message("[experiment]\nseeds = 1,-2\n").find("experiment.seeds") != std::string::npos);
    CHECK(message("[run.a]\ncell.glare = 0.1\n").find("glare") != std::string::npos);
  }

  TEST_CASE("config: validation reports the run") {
    const auto dir = scratch("validate");
    write_file_atomic((dir / "data.csv").string(), "label\n1\n");
    ExperimentConfig cfg = parse_config("[data]\ncsv = data.csv\n[run.x]\nmax_epochs = 5\n", dir.string());
    try {
      cfg.validate();
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("run.x") != std::string::npos);
    }
    cfg.csv_path = (dir / "missing.csv").string();
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }

  TEST_CASE("config: command-line overrides") {
    ExperimentConfig cfg = parse_config(kConfig);
    ConfigOverrides o;
    o.seed = 99;
    o.out = "elsewhere";
    o.mode = "raw-onehot";
    o.cell = "simple";
    apply_overrides(cfg, o);
    CHECK(cfg.master_seed == 99);
    CHECK(cfg.out_dir == "elsewhere");
    for (const auto& r : cfg.runs) CHECK(r.mode == EncodingMode::raw_onehot);
    CHECK(cfg.runs[0].model.cell.kind == CellKind::simple);

    ConfigOverrides only;
    only.model = "logreg";
    apply_overrides(cfg, only);
    REQUIRE(cfg.runs.size() == 1);
    CHECK(cfg.runs[0].name == "lr");
    only.model = "nothing";
    CHECK_THROWS_AS(apply_overrides(cfg, only), ConfigError);
  }

  TEST_CASE("config: canonical text parses back to itself") {
    const ExperimentConfig cfg = parse_config(kConfig, "/base");
    const std::string text = config_to_text(cfg);
    CHECK(config_to_text(parse_config(text, "/")) == text);
  }

  TEST_CASE("synth: deterministic bytes per seed") {
    for (const auto& kind : synth_kinds()) {
      SynthSpec s{kind, 500, 4, 0.1};
      const auto a = synthesize(s);
      const auto b = synthesize(s);
      CHECK(a.csv == b.csv);
      s.seed = 5;
      CHECK(synthesize(s).csv != a.csv);
      std::istringstream in(a.csv);
      const RawTable t = read_csv(in, a.schema);
      CHECK(t.rows.size() == 500);
      CHECK(t.rejected.empty());
    }
    CHECK_THROWS_AS(synthesize({"spiral", 10, 0, 0.0}), ConfigError);
    CHECK_THROWS_AS(synthesize({"xor-like", 10, 0, 0.7}), ConfigError);
  }

  TEST_CASE("synth: labels follow the documented rules") {
    const auto rows = [](const std::string& kind, double noise) {
      return csv_rows(synthesize({kind, 4000, 2, noise}).csv);
    };
    for (const auto& f : rows("xor-like", 0.0)) {
      if (f[0] == "id") continue;
      REQUIRE(f.size() == 4);
      CHECK(std::stoi(f[3]) == (std::stod(f[1]) * std::stod(f[2]) > 0 ? 1 : 0));
    }
    for (const auto& f : rows("separable", 0.0)) {
      if (f[0] == "id") continue;
      const double score = std::stod(f[1]) + 0.5 * std::stod(f[2]) - 0.25 * std::stod(f[3]);
      CHECK(std::stoi(f[7]) == (score > 0 ? 1 : 0));
    }
    for (const auto& f : rows("sparse-categorical", 0.0)) {
      if (f[0] == "id") continue;
      const bool a = std::stoi(f[1].substr(1)) < 4, b = std::stoi(f[2].substr(1)) < 4;
      CHECK(std::stoi(f[7]) == (a != b ? 1 : 0));
    }
    // noise 0.02: flipped fraction within 4 standard deviations of the rate
    std::size_t flipped = 0, n = 0;
    for (const auto& f : rows("xor-like", 0.02)) {
      if (f[0] == "id") continue;
      ++n;
      flipped += std::stoi(f[3]) != (std::stod(f[1]) * std::stod(f[2]) > 0 ? 1 : 0);
    }
    const double sd = std::sqrt(0.02 * 0.98 / n);
    CHECK(std::abs(static_cast<double>(flipped) / n - 0.02) < 4 * sd);
  }

  TEST_CASE("prediction files: round trip and divergence diagnostics") {
    PredictionTable a;
    a.name = "a";
    a.row_ids = {4, 9, 12};
    a.labels = {1, 0, 1};
    a.preds = {1, 1, 0};
    for (double v : {0.25, -1.5, 3.0}) {
      Logits z;
      z[0] = v;
      z[1] = -v / 3.0;
      a.logits.push_back(z);
    }
    const PredictionTable back = PredictionTable::parse(a.to_csv(), "a");
    CHECK(back.to_csv() == a.to_csv());
    CHECK(back.logits[1][1] == a.logits[1][1]);

    PredictionTable b = a;
    b.name = "b";
    b.row_ids[2] = 13;
    try {
      check_aligned(a, b);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("position 2") != std::string::npos);
      CHECK(msg.find("12 vs 13") != std::string::npos);
    }
    b = a;
    b.row_ids.pop_back();
    b.labels.pop_back();
    b.preds.pop_back();
    b.logits.pop_back();
    CHECK_THROWS_AS(compare_pair(a, b), DataError);
    CHECK_THROWS_AS(PredictionTable::parse("row_id,label,pred,logit0,logit1\n1,2,0,0,0\n", "x"), DataError);
    CHECK_THROWS_AS(PredictionTable::parse("id,label\n", "x"), DataError);

    b = a;
    b.preds = {1, 0, 1};
    const auto c = compare_pair(a, b);
    CHECK(c.overlap.shared == 0);
    CHECK(c.overlap.only_a == 2);
    CHECK(c.test.c == 2);
  }

  TEST_CASE("published constants are flagged, never mixed with measurements") {
    const std::string table = EvalReport::published_table();
    const auto rows = csv_rows(table);
    CHECK(rows.size() == published_constants().size() + 1);
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].back() == "published");
    EvalReport rep;
    CHECK(rep.to_text().find("quoted, not reproduced") != std::string::npos);
  }

  TEST_CASE("pipeline: end to end, reproducible manifest, no group leakage") {
    const auto dir = scratch("pipeline");
    const auto data = synthesize({"separable", 1500, 3, 0.0});
    write_file_atomic((dir / "data.csv").string(), data.csv);
    write_file_atomic((dir / "schema.txt").string(), data.schema.to_text());
    write_file_atomic((dir / "exp.ini").string(), kConfig);
    const ExperimentConfig cfg = load_config((dir / "exp.ini").string());

    const PipelineResult first = run_pipeline(cfg);
    const PipelineResult second = run_pipeline(cfg);
    CHECK(first.manifest == second.manifest);
    CHECK(read_file((dir / "out/manifest.txt").string()) == first.manifest);
    CHECK(first.manifest.find("artifact report/eval_report.txt") != std::string::npos);
    CHECK(first.manifest.find("artifact predictions/deq/seed3.csv") != std::string::npos);

    const auto& rep = first.report;
    REQUIRE(rep.runs.size() == 2);
    CHECK(rep.runs[0].seeds.size() == 2);
    CHECK(rep.pairs.size() == 1);
    CHECK(rep.latency.size() == 1);
    CHECK(rep.runs[1].seeds[0].test_bacc > 0.85);

    // partitions: every pooled row once, no binarised key in two partitions
    const auto parts = csv_rows(read_file((dir / "out/split/partitions.csv").string()));
    std::set<std::string> ids;
    for (std::size_t i = 1; i < parts.size(); ++i) CHECK(ids.insert(parts[i][0]).second);
    const auto preds = PredictionTable::parse(read_file((dir / "out/predictions/lr/seed5.csv").string()), "lr");
    std::size_t test_rows = 0;
    for (const auto& p : parts) test_rows += p.size() == 2 && p[1] == "test";
    CHECK(preds.size() == test_rows);
    CHECK(first.report.split_summary.find("leakage none") != std::string::npos);

    // eval reloads the checkpoints and reproduces the report
    PipelineOptions eval;
    eval.load_models = true;
    const PipelineResult reloaded = run_pipeline(cfg, eval);
    CHECK(reloaded.report.to_kv() == first.report.to_kv());
  }

  TEST_CASE("pipeline: failures name their stage") {
    const auto dir = scratch("stages");
    write_file_atomic((dir / "exp.ini").string(), kConfig);
    ExperimentConfig cfg = load_config((dir / "exp.ini").string());
    auto stage_of = [&](const ExperimentConfig& c) {
      try {
        run_pipeline(c);
      } catch (const StageError& e) {
        return e.stage();
      }
      return std::string("none");
    };
    CHECK(stage_of(cfg) == "config");  // data.csv missing

    const auto data = synthesize({"separable", 300, 3, 0.0});
    write_file_atomic((dir / "data.csv").string(), "id,c0\n1,0.5\n");
    write_file_atomic((dir / "schema.txt").string(), data.schema.to_text());
    CHECK(stage_of(cfg) == "ingest");

    write_file_atomic((dir / "data.csv").string(), data.csv);
    cfg.runs[0].model.cell.stage(Stage::tia_gain).magnitude = 1e300;
    cfg.runs[0].model.cell.stage(Stage::crosstalk).magnitude = 1e300;
    CHECK(stage_of(cfg).rfind("train:deq/seed", 0) == 0);
  }
}
