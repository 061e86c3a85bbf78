#include "vasamp/checkpoint.hpp"

#include <algorithm>
#include <fstream>

#include "vasamp/composite.hpp"
#include "vasamp/errors.hpp"

namespace vas {
namespace {

nlohmann::json envelope(const std::string& kind, nlohmann::json hyperparams, nlohmann::json parameters) {
  return {{"format_version", kCheckpointFormatVersion},
          {"kind", kind},
          {"hyperparams", std::move(hyperparams)},
          {"parameters", std::move(parameters)}};
}

const std::string& check_envelope(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("checkpoint must be a JSON object");
  for (const char* field : {"format_version", "kind", "hyperparams", "parameters"}) {
    if (!j.contains(field)) throw FormatError(std::string("checkpoint is missing '") + field + "'");
  }
  if (j.at("format_version") != kCheckpointFormatVersion) {
    throw FormatError("unsupported checkpoint format_version " + j.at("format_version").dump());
  }
  return j.at("kind").get_ref<const std::string&>();
}

void load_flat(std::span<double> dst, const nlohmann::json& src, const char* what) {
  const auto values = src.get<std::vector<double>>();
  if (values.size() != dst.size()) {
    throw FormatError(std::string(what) + " checkpoint has " + std::to_string(values.size()) +
                      " parameters, expected " + std::to_string(dst.size()));
  }
  std::copy(values.begin(), values.end(), dst.begin());
}

NgramFeatures features_from(const nlohmann::json& h) {
  return NgramFeatures(h.at("vocab_size").get<std::size_t>(), h.at("order").get<std::size_t>(),
                       h.at("max_len").get<std::size_t>());
}

}  // namespace

nlohmann::json checkpoint_to_json(const ValueEstimator& estimator) {
  return envelope(estimator.kind(), estimator.hyperparams(), estimator.parameters_json());
}

nlohmann::json checkpoint_to_json(const TabularQ& estimator) {
  return envelope("tabular_q", estimator.hyperparams(), estimator.parameters_json());
}

std::unique_ptr<ValueEstimator> estimator_from_checkpoint(const nlohmann::json& j) {
  const auto& kind = check_envelope(j);
  const auto& h = j.at("hyperparams");
  const auto& p = j.at("parameters");
  try {
    if (kind == "tabular") return std::make_unique<TabularValue>(TabularValue::from_parameters(h, p));
    if (kind == "linear") {
      auto m = std::make_unique<LinearValue>(features_from(h));
      load_flat(m->parameters(), p.at("weights"), "linear");
      return m;
    }
    if (kind == "mlp") {
      auto m = std::make_unique<MlpValue>(features_from(h), h.at("hidden").get<std::vector<std::size_t>>(),
                                          h.at("seed").get<std::uint64_t>(), h.at("init_scale").get<double>());
      load_flat(m->parameters(), p.at("flat"), "mlp");
      return m;
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed ") + kind + " checkpoint: " + e.what());
  }
  throw FormatError("checkpoint kind '" + kind + "' is not a state-value estimator");
}

TabularQ q_estimator_from_checkpoint(const nlohmann::json& j) {
  const auto& kind = check_envelope(j);
  if (kind != "tabular_q") throw FormatError("checkpoint kind '" + kind + "' is not a Q estimator");
  try {
    return TabularQ::from_parameters(j.at("hyperparams"), j.at("parameters"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed tabular_q checkpoint: ") + e.what());
  }
}

std::shared_ptr<const ValueFunction> value_function_from_checkpoint(const nlohmann::json& j) {
  const auto& kind = check_envelope(j);
  if (kind == "tabular_q") return std::make_shared<QAsValue>(std::make_shared<TabularQ>(q_estimator_from_checkpoint(j)));
  if (kind == "composite") {
    std::vector<CompositeValue::Component> parts;
    try {
      for (const auto& c : j.at("parameters").at("components")) {
        parts.emplace_back(c.at("weight").get<double>(), value_function_from_checkpoint(c.at("checkpoint")));
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("malformed composite checkpoint: ") + e.what());
    }
    return std::make_shared<CompositeValue>(std::move(parts));
  }
  return std::shared_ptr<const ValueFunction>(estimator_from_checkpoint(j));
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidArgumentError("cannot open " + path.string() + " for writing");
  os << j.dump(2) << '\n';
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingArtifactError("missing artifact: " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("cannot parse " + path.string() + ": " + e.what());
  }
}

}  // namespace vas
