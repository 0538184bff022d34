#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <functional>
#include <memory>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "cerealia/core/series.hpp"

namespace cerealia::cli {

inline constexpr const char* kReportFormat = "cerealia-report";
inline constexpr int kReportVersion = 1;

struct Outcome {
  nlohmann::json result = nlohmann::json::object();
  nlohmann::json timing = nlohmann::json::object();  // measurements that legitimately vary run to run
};

/// One subcommand: its parser, which of its options name output files, and
/// the action. Output options are left out of the embedded config and are
/// redirected when a report is replayed.
struct Command {
  CLI::App* app = nullptr;
  std::set<std::string> outputs;
  std::function<Outcome()> run;
};

struct Io {
  std::ostream& out;
  std::ostream& err;
};

/// Registers every subcommand on `app`. Option storage lives in `state`.
void register_commands(CLI::App& app, std::vector<Command>& commands, std::vector<std::shared_ptr<void>>& state,
                       Io io);

/// Effective option values of a parsed subcommand (outputs and --report excluded).
nlohmann::json effective_config(const Command& cmd);
nlohmann::json output_paths(const Command& cmd);

/// Rebuilds an argument vector from an embedded config.
std::vector<std::string> replay_args(const std::string& command, const nlohmann::json& config,
                                     const nlohmann::json& outputs);

// Shared helpers for commands.
AttributeSchema resolve_schema(const std::string& spec, const std::string& csv_path, const std::string& ts_column,
                               char delimiter, long long interval_s);
WeatherSeries load_series(const std::string& path, const std::string& schema_spec = "header",
                          long long interval_s = 300);
std::string file_crc(const std::string& path);

/// Renders a report (and optional SVG plots); the `report` subcommand.
void render_report(const nlohmann::json& report, std::ostream& out);
std::vector<std::string> write_plots(const nlohmann::json& report, const std::string& dir);

}  // namespace cerealia::cli
