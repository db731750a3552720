#pragma once

// End-to-end experiment:
//   ingest -> stratified 70/20/10 split -> downsample train and val separately
//   -> pool them -> binarised group keys (encoder fit on balanced train rows)
//   -> 80/10/10 group split -> per-run encoder fit on the group train partition
//   -> per-seed training -> test predictions -> evaluation report.
// Every artefact is written atomically under the output directory, and
// manifest.txt lists each one with its SHA-256 digest (no timestamps), so a
// rerun with the same configuration reproduces it byte for byte.

#include <stdexcept>
#include <string>

#include "optideq/config.hpp"
#include "optideq/report.hpp"

namespace optideq {

// Wraps any failure with the name of the stage that raised it.
class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::string& detail)
      : std::runtime_error("stage '" + stage + "' failed: " + detail), stage_(stage) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

enum class PipelineStop { split, encode, train, report };

struct PipelineOptions {
  PipelineStop stop = PipelineStop::report;
  // Load models from <out>/models instead of training (the eval verb).
  bool load_models = false;
  // Write encoded partitions as CSV (the encode verb).
  bool write_encoded = false;
};

struct PipelineResult {
  EvalReport report;
  std::string manifest;  // text of manifest.txt
};

PipelineResult run_pipeline(const ExperimentConfig& config, const PipelineOptions& options = {});

}  // namespace optideq
