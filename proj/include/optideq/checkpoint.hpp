#pragma once

// Versioned text checkpoints:
//
//   OPTIDEQ v1
//   kind deq|mlp|logreg
//   <key> <value>              configuration entries, one per line
//   tensors <count>
//   <name> <rows> <cols> <row-major values, 17 significant digits>
//
// Values print with %.17g, so save -> load -> save is byte-identical.

#include <string>
#include <string_view>
#include <variant>

#include "optideq/baselines.hpp"
#include "optideq/deq.hpp"

namespace optideq {

using AnyModel = std::variant<EnsembleModel, MlpParams, LogRegParams>;

std::string model_kind(const AnyModel& model);

std::string save_checkpoint(const AnyModel& model);
AnyModel load_checkpoint(std::string_view text);

void save_checkpoint_file(const AnyModel& model, const std::string& path);
AnyModel load_checkpoint_file(const std::string& path);

}  // namespace optideq
