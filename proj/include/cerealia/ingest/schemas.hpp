#pragma once

#include <json.hpp>

#include <chrono>
#include <fstream>
#include <string>

#include "cerealia/core/error.hpp"
#include "cerealia/core/series.hpp"

namespace cerealia::ingest {

/// Station layout of the Beutenberg (Jena) export: 20 attributes, 10-minute sampling.
inline AttributeSchema beutenberg_schema() {
  return AttributeSchema{{{"air_temperature", "degC"},
                          {"potential_temperature", "K"},
                          {"dew_point", "degC"},
                          {"logger_temperature", "degC"},
                          {"vapor_pressure", "mbar"},
                          {"max_vapor_pressure", "mbar"},
                          {"atmospheric_pressure", "mbar"},
                          {"vapor_pressure_deficit", "mbar"},
                          {"relative_humidity", "%"},
                          {"specific_humidity", "g/kg"},
                          {"h2o_concentration", "mmol/mol"},
                          {"air_density", "g/m3"},
                          {"wind_velocity", "m/s"},
                          {"wind_direction", "deg"},
                          {"max_wind_velocity", "m/s"},
                          {"rainfall", "mm"},
                          {"rainfall_duration", "s"},
                          {"shortwave_downward_radiation", "W/m2"},
                          {"par", "umol/m2/s"},
                          {"co2", "ppm"}},
                         std::chrono::seconds{600}};
}

/// Station layout of the Quincy orchard feed: 20 attributes, 5-minute sampling.
inline AttributeSchema quincy_schema() {
  return AttributeSchema{{{"air_temperature", "degC"},
                          {"atmospheric_pressure", "kPa"},
                          {"vapor_pressure", "kPa"},
                          {"dew_point", "degC"},
                          {"vapor_pressure_deficit", "kPa"},
                          {"reference_pressure", "kPa"},
                          {"wind_speed", "m/s"},
                          {"wind_direction", "deg"},
                          {"precipitation", "mm"},
                          {"max_precipitation_rate", "mm/h"},
                          {"solar_radiation", "W/m2"},
                          {"lightning_activity", "count"},
                          {"lightning_distance", "km"},
                          {"logger_temperature", "degC"},
                          {"battery_voltage", "mV"},
                          {"battery_percent", "%"},
                          {"gust_speed", "m/s"},
                          {"rh_sensor_temperature", "degC"},
                          {"soil_temperature", "degC"},
                          {"leaf_wetness", "min"}},
                         std::chrono::seconds{300}};
}

inline nlohmann::json schema_to_json(const AttributeSchema& schema) {
  nlohmann::json attrs = nlohmann::json::array();
  for (const auto& a : schema.attributes) attrs.push_back({{"name", a.name}, {"unit", a.unit}});
  return {{"sampling_interval_s", schema.sampling_interval.count()}, {"attributes", attrs}};
}

inline AttributeSchema schema_from_json(const nlohmann::json& j) {
  try {
    AttributeSchema schema;
    schema.sampling_interval = std::chrono::seconds{j.at("sampling_interval_s").get<long long>()};
    for (const auto& a : j.at("attributes")) {
      schema.attributes.push_back({a.at("name").get<std::string>(), a.value("unit", std::string{})});
    }
    if (auto problems = validate_schema(schema); !problems.empty()) {
      throw Error(Errc::schema, "invalid schema: " + problems.front().message());
    }
    return schema;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::format, std::string("malformed schema document: ") + e.what());
  }
}

inline AttributeSchema load_schema_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open schema file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, "schema file '" + path + "': " + e.what());
  }
  return schema_from_json(j);
}

}  // namespace cerealia::ingest
