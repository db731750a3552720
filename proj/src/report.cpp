#include "optideq/report.hpp"

#include <sstream>

#include "optideq/errors.hpp"
#include "text_util.hpp"

namespace optideq {

using text::format17;

std::string PredictionTable::to_csv() const {
  std::ostringstream out;
  out << "row_id,label,pred,logit0,logit1\n";
  for (std::size_t i = 0; i < size(); ++i) {
    out << row_ids[i] << ',' << labels[i] << ',' << preds[i] << ',' << format17(logits[i][0]) << ','
        << format17(logits[i][1]) << '\n';
  }
  return out.str();
}

PredictionTable PredictionTable::parse(std::string_view text, const std::string& name) {
  PredictionTable t;
  t.name = name;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text::trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != "row_id,label,pred,logit0,logit1") {
        throw DataError(name + ": expected header row_id,label,pred,logit0,logit1");
      }
      continue;
    }
    const auto f = text::split_csv(line);
    const auto where = name + " line " + std::to_string(line_no);
    if (f.size() != 5) throw DataError(where + ": expected 5 fields");
    const auto id = text::parse_int(f[0]);
    const auto label = text::parse_int(f[1]);
    const auto pred = text::parse_int(f[2]);
    const auto l0 = text::parse_double(f[3]);
    const auto l1 = text::parse_double(f[4]);
    if (!id || !label || !pred || !l0 || !l1 || (*label != 0 && *label != 1) || (*pred != 0 && *pred != 1)) {
      throw DataError(where + ": malformed field");
    }
    t.row_ids.push_back(*id);
    t.labels.push_back(static_cast<int>(*label));
    t.preds.push_back(static_cast<int>(*pred));
    Logits z;
    z[0] = *l0;
    z[1] = *l1;
    t.logits.push_back(z);
  }
  return t;
}

void check_aligned(const PredictionTable& a, const PredictionTable& b) {
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (a.row_ids[i] != b.row_ids[i]) {
      throw DataError("prediction files '" + a.name + "' and '" + b.name + "' diverge at position " +
                      std::to_string(i) + ": row_id " + std::to_string(a.row_ids[i]) + " vs " +
                      std::to_string(b.row_ids[i]));
    }
    if (a.labels[i] != b.labels[i]) {
      throw DataError("prediction files '" + a.name + "' and '" + b.name + "' disagree on the label of row_id " +
                      std::to_string(a.row_ids[i]));
    }
  }
  if (a.size() != b.size()) {
    throw DataError("prediction files '" + a.name + "' and '" + b.name + "' diverge at position " +
                    std::to_string(n) + ": one file ends (" + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()) + " rows)");
  }
}

PairComparison compare_pair(const PredictionTable& a, const PredictionTable& b) {
  check_aligned(a, b);
  PairComparison c;
  c.a = a.name;
  c.b = b.name;
  const auto ea = error_set(a.preds, a.labels);
  const auto eb = error_set(b.preds, b.labels);
  c.overlap = error_overlap(ea, eb);
  c.test = mcnemar(a.preds, b.preds, a.labels);
  return c;
}

const std::vector<PublishedValue>& published_constants() {
  static const std::vector<PublishedValue> values{
      {"xgboost", "raw", "test_bacc_pct", 97.91, 0.00},
      {"xgboost", "binarized", "test_bacc_pct", 89.51, std::nullopt},
      {"xgboost", "raw", "parameters_approx", 31500, std::nullopt},
      {"mlp-large", "raw", "test_bacc_pct", 97.46, 0.04},
      {"mlp-large", "binarized", "test_bacc_pct", 89.57, std::nullopt},
      {"mlp-small", "raw", "test_bacc_pct", 97.21, 0.17},
      {"mlp-small", "binarized", "test_bacc_pct", 89.56, std::nullopt},
      {"ens-4x-aoc-48", "raw", "test_bacc_pct", 95.14, 0.46},
      {"ens-4x-aoc-16", "raw", "test_bacc_pct", 94.64, 0.53},
      {"ens-4x-aoc-16", "binarized", "test_bacc_pct", 89.43, std::nullopt},
      {"ens-4x-simple-16", "raw", "test_bacc_pct", 93.85, 1.58},
      {"logreg", "raw", "test_bacc_pct", 70.04, std::nullopt},
      {"logreg", "binarized", "test_bacc_pct", 76.54, std::nullopt},
      {"xgboost-vs-aoc-16", "raw", "error_jaccard", 0.351, std::nullopt},
      {"xgboost-vs-aoc-16", "binarized", "error_jaccard", 0.834, std::nullopt},
      {"xgboost-vs-aoc-16", "raw", "unique_errors_aoc", 6215, std::nullopt},
      {"xgboost-vs-aoc-16", "raw", "unique_errors_xgboost", 394, std::nullopt},
      {"xgboost", "any", "cpu_batch_us_per_sample", 3.7, std::nullopt},
      {"xgboost", "any", "cpu_single_us", 190, std::nullopt},
      {"xgboost", "any", "gpu_batch_us_per_sample", 0.14, std::nullopt},
      {"xgboost", "any", "gpu_single_us", 1731, std::nullopt},
      {"mlp-small", "any", "cpu_batch_us_per_sample", 0.31, std::nullopt},
      {"mlp-small", "any", "cpu_single_us", 11.8, std::nullopt},
      {"mlp-small", "any", "gpu_single_us", 39, std::nullopt},
      {"ens-4x-aoc-16", "any", "optical_projection_ns", 720, std::nullopt},
      {"single-module", "any", "optical_projection_ns", 180, std::nullopt},
      {"single-pass", "any", "optical_projection_ns", 4.5, std::nullopt},
  };
  return values;
}

SeedSummary RunResult::test_summary() const {
  std::vector<double> v;
  for (const auto& s : seeds) v.push_back(s.test_bacc);
  return aggregate_seeds(v);
}

namespace {

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

std::string g6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

std::string EvalReport::to_text() const {
  std::ostringstream out;
  out << "evaluation report (master seed " << master_seed << ")\n\n" << split_summary << "\n";
  out << "test balanced accuracy (%)\n";
  for (const auto& r : runs) {
    const auto s = r.test_summary();
    out << "  " << r.name << " [" << r.family << ", " << r.mode << (r.ising ? "" : ", {0,1}")
        << (r.cell.empty() ? "" : ", " + r.cell) << ", " << r.parameters << " params]: " << pct(s.mean);
    out << (s.std ? " +- " + pct(*s.std) : " (single seed, no std)") << "  seeds:";
    for (const auto& sr : r.seeds) out << ' ' << sr.seed << '=' << pct(sr.test_bacc);
    if (r.seeds.size() > 1) out << "  seed vote: " << pct(r.vote_bacc);
    out << '\n';
    for (const auto& sr : r.seeds) {
      if (r.family == "deq") {
        out << "    seed " << sr.seed << ": best epoch " << sr.best_epoch << "/" << sr.epochs
            << ", mean iterations " << g6(sr.mean_iterations) << ", non-converged rows "
            << pct(sr.nonconverged_fraction) << "%\n";
      }
    }
  }
  if (!pairs.empty()) {
    out << "\nerror overlap and McNemar (first seed of each run)\n";
    for (const auto& p : pairs) {
      out << "  " << p.a << " vs " << p.b << ": shared " << p.overlap.shared << ", only " << p.a << ' '
          << p.overlap.only_a << ", only " << p.b << ' ' << p.overlap.only_b << ", jaccard "
          << g6(p.overlap.jaccard) << "; b=" << p.test.b << " c=" << p.test.c << " p=" << g6(p.test.p)
          << (p.test.exact ? " (exact)" : " (chi-square)") << '\n';
    }
  }
  if (vote_bacc) out << "\nmajority vote across runs: " << pct(*vote_bacc) << "%\n";
  if (!latency.empty()) {
    out << "\nprojected optical latency\n";
    for (const auto& l : latency) {
      out << "  " << l.run << ": " << g6(l.n_blocks) << " blocks x " << g6(l.iterations) << " iterations x "
          << g6(l.pass_time_ns) << " ns = " << g6(l.projected_ns) << " ns\n";
    }
  }
  out << "\npublished reference values (quoted, not reproduced)\n";
  for (const auto& p : published_constants()) {
    out << "  " << p.model << " [" << p.features << "] " << p.metric << " = " << g6(p.value);
    if (p.std) out << " +- " << g6(*p.std);
    out << '\n';
  }
  return out.str();
}

std::string EvalReport::to_kv() const {
  std::ostringstream out;
  out << "master_seed " << master_seed << '\n';
  for (const auto& r : runs) {
    const auto s = r.test_summary();
    const std::string k = "run." + r.name + ".";
    out << k << "family " << r.family << '\n' << k << "mode " << r.mode << '\n' << k << "ising " << r.ising << '\n';
    if (!r.cell.empty()) out << k << "cell " << r.cell << '\n';
    out << k << "parameters " << r.parameters << '\n' << k << "test_bacc.mean " << format17(s.mean) << '\n';
    out << k << "test_bacc.std " << (s.std ? format17(*s.std) : std::string("none")) << '\n';
    out << k << "seed_vote_bacc " << format17(r.vote_bacc) << '\n';
    for (const auto& sr : r.seeds) {
      const std::string ks = k + "seed" + std::to_string(sr.seed) + ".";
      out << ks << "test_bacc " << format17(sr.test_bacc) << '\n'
          << ks << "val_bacc " << format17(sr.val_bacc) << '\n'
          << ks << "confusion " << sr.confusion.tp << ' ' << sr.confusion.fn << ' ' << sr.confusion.tn << ' '
          << sr.confusion.fp << '\n'
          << ks << "best_epoch " << sr.best_epoch << '\n'
          << ks << "epochs " << sr.epochs << '\n';
      if (r.family == "deq") {
        out << ks << "mean_iterations " << format17(sr.mean_iterations) << '\n'
            << ks << "nonconverged_fraction " << format17(sr.nonconverged_fraction) << '\n';
      }
    }
  }
  for (const auto& p : pairs) {
    const std::string k = "pair." + p.a + "." + p.b + ".";
    out << k << "jaccard " << format17(p.overlap.jaccard) << '\n'
        << k << "mcnemar_p " << format17(p.test.p) << '\n';
  }
  if (vote_bacc) out << "vote_bacc " << format17(*vote_bacc) << '\n';
  for (const auto& l : latency) out << "latency." << l.run << ".projected_ns " << format17(l.projected_ns) << '\n';
  for (const auto& p : published_constants()) {
    out << "published." << p.model << '.' << p.features << '.' << p.metric << ' ' << format17(p.value) << '\n';
  }
  return out.str();
}

std::string EvalReport::bacc_table() const {
  std::ostringstream out;
  out << "run,seed,partition,metric,value\n";
  for (const auto& r : runs) {
    for (const auto& s : r.seeds) {
      out << r.name << ',' << s.seed << ",val,bacc," << format17(s.val_bacc) << '\n';
      out << r.name << ',' << s.seed << ",test,bacc," << format17(s.test_bacc) << '\n';
    }
  }
  return out.str();
}

std::string EvalReport::summary_table() const {
  std::ostringstream out;
  out << "run,family,mode,ising,cell,parameters,seeds,mean,std,vote\n";
  for (const auto& r : runs) {
    const auto s = r.test_summary();
    out << r.name << ',' << r.family << ',' << r.mode << ',' << (r.ising ? 1 : 0) << ',' << r.cell << ','
        << r.parameters << ',' << s.count << ',' << format17(s.mean) << ',' << (s.std ? format17(*s.std) : "")
        << ',' << format17(r.vote_bacc) << '\n';
  }
  return out.str();
}

std::string EvalReport::overlap_table() const {
  std::ostringstream out;
  out << "run_a,run_b,shared,only_a,only_b,jaccard\n";
  for (const auto& p : pairs) {
    out << p.a << ',' << p.b << ',' << p.overlap.shared << ',' << p.overlap.only_a << ',' << p.overlap.only_b
        << ',' << format17(p.overlap.jaccard) << '\n';
  }
  return out.str();
}

std::string EvalReport::mcnemar_table() const {
  std::ostringstream out;
  out << "run_a,run_b,b,c,statistic,p,method\n";
  for (const auto& p : pairs) {
    out << p.a << ',' << p.b << ',' << p.test.b << ',' << p.test.c << ',' << format17(p.test.statistic) << ','
        << format17(p.test.p) << ',' << (p.test.exact ? "exact" : "chi-square") << '\n';
  }
  return out.str();
}

std::string EvalReport::latency_table() const {
  std::ostringstream out;
  out << "run,n_blocks,iterations,pass_time_ns,projected_ns\n";
  for (const auto& l : latency) {
    out << l.run << ',' << format17(l.n_blocks) << ',' << format17(l.iterations) << ','
        << format17(l.pass_time_ns) << ',' << format17(l.projected_ns) << '\n';
  }
  return out.str();
}

std::string EvalReport::published_table() {
  std::ostringstream out;
  out << "model,features,metric,value,std,status\n";
  for (const auto& p : published_constants()) {
    out << p.model << ',' << p.features << ',' << p.metric << ',' << format17(p.value) << ','
        << (p.std ? format17(*p.std) : "") << ",published\n";
  }
  return out.str();
}

}  // namespace optideq
