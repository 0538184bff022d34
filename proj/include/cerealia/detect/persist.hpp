#pragma once

#include <json.hpp>

#include <memory>
#include <string>

#include "cerealia/core/error.hpp"
#include "cerealia/core/io.hpp"
#include "cerealia/detect/detector.hpp"
#include "cerealia/detect/neural.hpp"
#include "cerealia/detect/stat.hpp"
#include "cerealia/faults/dataset.hpp"

namespace cerealia::detect {

inline constexpr const char* kDetectorMagic = "cerealia-detector";
inline constexpr int kDetectorVersion = 1;

inline nlohmann::json detector_to_json(const Detector& d) {
  return {{"magic", kDetectorMagic},
          {"version", kDetectorVersion},
          {"kind", d.kind()},
          {"attributes", d.meta().attributes},
          {"window_length", d.meta().window_length},
          {"scaler", faults::to_json(d.meta().scaler)},
          {"model", d.payload()}};
}

inline DetectorPtr detector_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object() || j.value("magic", std::string{}) != kDetectorMagic) {
      throw Error(Errc::parse, "not a detector document (magic field missing)");
    }
    const int version = j.at("version").get<int>();
    if (version != kDetectorVersion) {
      throw Error(Errc::incompatible, "detector file version " + std::to_string(version) + " is not supported (expected " +
                                          std::to_string(kDetectorVersion) + ")");
    }
    DetectorMeta meta{j.at("attributes").get<std::vector<std::string>>(), j.at("window_length").get<std::size_t>(),
                      faults::scaler_from_json(j.at("scaler"))};
    if (meta.scaler.arity() != meta.attributes.size()) throw Error(Errc::parse, "scaler arity does not match attributes");
    const auto kind = j.at("kind").get<std::string>();
    const auto& model = j.at("model");
    if (kind == "neural") {
      const auto config = neural_config_from_json(model.at("config"));
      WindowFeatureMap features;
      if (config.input == NeuralInput::features) features = WindowFeatureMap::from_json(model.at("features"));
      return std::make_shared<const NeuralDetector>(std::move(meta), std::move(features),
                                                    Mlp::from_json(model.at("network")), config);
    }
    if (kind == "stat") {
      const auto& r = model.at("reference");
      CleanReference ref{r.at("residual_rms").get<std::vector<double>>(), r.at("diff_power").get<std::vector<double>>(),
                         r.at("half_shift_sd").get<std::vector<double>>()};
      return std::make_shared<const StatDetector>(std::move(meta), stat_config_from_json(model.at("config")),
                                                  std::move(ref));
    }
    throw Error(Errc::parse, "unknown detector kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, std::string("malformed detector document: ") + e.what());
  }
}

inline void save_detector(const Detector& d, const std::string& path) {
  write_file_atomic(path, detector_to_json(d).dump() + "\n");
}

/// Never returns a partially built detector: any defect in the file throws.
inline DetectorPtr load_detector(const std::string& path) {
  const auto text = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, "detector file '" + path + "': " + e.what());
  }
  return detector_from_json(j);
}

}  // namespace cerealia::detect
