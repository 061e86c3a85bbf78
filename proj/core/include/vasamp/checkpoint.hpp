#pragma once

// Estimator checkpoints:
//   {"format_version": 1, "kind": "tabular" | "linear" | "mlp" | "tabular_q" | "composite",
//    "hyperparams": {...}, "parameters": {...}}
// Parameter arrays are flat and row-major; "shapes" documents their layout.
// A composite stores {"components": [{"weight": w, "checkpoint": {...}}, ...]}.

#include <filesystem>
#include <memory>
#include <string>

#include "json.hpp"
#include "vasamp/q_estimator.hpp"
#include "vasamp/value.hpp"
#include "vasamp/value_function.hpp"

namespace vas {

inline constexpr int kCheckpointFormatVersion = 1;

nlohmann::json checkpoint_to_json(const ValueEstimator& estimator);
nlohmann::json checkpoint_to_json(const TabularQ& estimator);

// Throws FormatError for unknown kinds, versions, or malformed parameters.
std::unique_ptr<ValueEstimator> estimator_from_checkpoint(const nlohmann::json& j);
TabularQ q_estimator_from_checkpoint(const nlohmann::json& j);
// Any checkpoint kind usable as a state-value function (including composites
// and tabular_q through QAsValue).
std::shared_ptr<const ValueFunction> value_function_from_checkpoint(const nlohmann::json& j);

// File helpers. Writing is deterministic (sorted keys, fixed float format).
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
// Throws MissingArtifactError if the file does not exist, FormatError if it does not parse.
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace vas
