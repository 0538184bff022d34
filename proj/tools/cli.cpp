#include "cli.hpp"

#include <fmt/format.h>
#include <zlib.h>

#include <chrono>
#include <exception>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cerealia/core/error.hpp"
#include "cerealia/core/io.hpp"
#include "cerealia/ingest/csv.hpp"
#include "cerealia/ingest/schemas.hpp"
#include "cli_internal.hpp"

namespace cerealia::cli {

namespace {

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    if (c == '\n' || c == '\r') {
      out += ' ';
      continue;
    }
    out.push_back(c);
  }
  return out;
}

void error_line(std::ostream& err, std::string_view code, std::string_view message) {
  err << "error: code=" << code << " message=\"" << escape(message) << "\"\n";
}

}  // namespace

nlohmann::json effective_config(const Command& cmd) {
  nlohmann::json config = nlohmann::json::object();
  for (const CLI::Option* opt : cmd.app->get_options()) {
    const auto name = opt->get_single_name();
    if (name.empty() || name == "help" || cmd.outputs.count(name) != 0) continue;
    if (opt->get_expected_max() == 0) {
      config[name] = opt->count() > 0;
      continue;
    }
    if (opt->count() > 0) {
      config[name] = opt->results().front();
    } else if (!opt->get_default_str().empty()) {
      config[name] = opt->get_default_str();
    }
  }
  return config;
}

nlohmann::json output_paths(const Command& cmd) {
  nlohmann::json outs = nlohmann::json::object();
  for (const CLI::Option* opt : cmd.app->get_options()) {
    const auto name = opt->get_single_name();
    if (cmd.outputs.count(name) != 0 && opt->count() > 0) outs[name] = opt->results().front();
  }
  return outs;
}

std::vector<std::string> replay_args(const std::string& command, const nlohmann::json& config,
                                     const nlohmann::json& outputs) {
  std::vector<std::string> args{command};
  for (const auto& [name, value] : config.items()) {
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back("--" + name);
    } else {
      args.push_back("--" + name);
      args.push_back(value.get<std::string>());
    }
  }
  for (const auto& [name, value] : outputs.items()) {
    args.push_back("--" + name);
    args.push_back(value.get<std::string>());
  }
  return args;
}

AttributeSchema resolve_schema(const std::string& spec, const std::string& csv_path, const std::string& ts_column,
                               char delimiter, long long interval_s) {
  if (spec == "beutenberg") return ingest::beutenberg_schema();
  if (spec == "quincy") return ingest::quincy_schema();
  if (spec != "header") return ingest::load_schema_file(spec);
  std::ifstream in(csv_path);
  if (!in) throw Error(Errc::io, "cannot open CSV '" + csv_path + "'");
  std::string header;
  if (!std::getline(in, header)) throw Error(Errc::empty_input, "CSV '" + csv_path + "' is empty");
  AttributeSchema schema;
  schema.sampling_interval = std::chrono::seconds{interval_s};
  for (const auto& f : ingest::detail::split_record(header, delimiter)) {
    const auto name = ingest::detail::unquote(f);
    if (name != ts_column) schema.attributes.push_back({name, ""});
  }
  if (auto problems = validate_schema(schema); !problems.empty()) {
    throw Error(Errc::schema, "header of '" + csv_path + "': " + problems.front().message());
  }
  return schema;
}

WeatherSeries load_series(const std::string& path, const std::string& schema_spec, long long interval_s) {
  ingest::CsvFormat format;
  const auto schema = resolve_schema(schema_spec, path, format.timestamp_column, format.delimiter, interval_s);
  return ingest::parse_csv(path, format, schema).series;
}

std::string file_crc(const std::string& path) {
  const auto data = read_file(path);
  return fmt::format("{:08x}", static_cast<std::uint32_t>(
                                   ::crc32(0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size()))));
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Consistency checking for weather-station sensor streams.", "cerealia"};
  app.set_config("--config", "", "INI file with one [section] per subcommand; flags override it");
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();

  std::vector<Command> commands;
  std::vector<std::shared_ptr<void>> state;
  register_commands(app, commands, state, Io{out, err});

  if (args.empty()) {
    err << app.help();
    return 2;
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    error_line(err, "usage", e.what());
    return 2;
  }

  for (auto& cmd : commands) {
    if (!cmd.app->parsed()) continue;
    try {
      const auto t0 = std::chrono::steady_clock::now();
      Outcome outcome = cmd.run();
      outcome.timing["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const auto outs = output_paths(cmd);
      if (outs.contains("report")) {
        const nlohmann::json report{{"format", kReportFormat},
                                    {"version", kReportVersion},
                                    {"command", cmd.app->get_name()},
                                    {"config", effective_config(cmd)},
                                    {"outputs", outs},
                                    {"result", outcome.result},
                                    {"timing", outcome.timing}};
        write_file_atomic(outs["report"].get<std::string>(), report.dump(2) + "\n");
      }
      return 0;
    } catch (const Error& e) {
      error_line(err, errc_name(e.code()), e.what());
      return e.code() == Errc::usage ? 2 : 1;
    } catch (const std::filesystem::filesystem_error& e) {
      error_line(err, "io", e.what());
      return 1;
    } catch (const std::exception& e) {
      error_line(err, "internal", e.what());
      return 1;
    }
  }
  err << app.help();
  return 2;
}

}  // namespace cerealia::cli
