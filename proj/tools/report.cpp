#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>

#include "cerealia/core/io.hpp"
#include "cerealia/faults/dataset.hpp"
#include "cli_internal.hpp"

namespace cerealia::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string num(const json& v, int digits = 4) {
  if (v.is_number()) return fmt::format("{:.{}f}", v.get<double>(), digits);
  if (v.is_null()) return "n/a";
  return v.dump();
}

void render_classification(const json& m, std::ostream& out) {
  out << fmt::format("{:<12} {:>10} {:>10} {:>10}\n", "class", "precision", "recall", "f1");
  for (const auto& [name, p] : m.at("per_class").items()) {
    out << fmt::format("{:<12} {:>10} {:>10} {:>10}\n", name, num(p.at("precision")), num(p.at("recall")),
                       num(p.at("f1")));
  }
  out << fmt::format("{:<12} {:>10} {:>10} {:>10}\n", "macro", num(m.at("macro_precision")),
                     num(m.at("macro_recall")), num(m.at("macro_f1")));
  out << fmt::format("accuracy {}\n", num(m.at("accuracy")));
}

void render_fst(const json& r, std::ostream& out) {
  out << fmt::format("{:<12} {:>10} {:>10} {:>10}\n", "condition", "MAE", "RMSE", "R2");
  for (const char* c : {"clean", "imperfect", "imputed"}) {
    const auto& m = r.at("conditions").at(c);
    out << fmt::format("{:<12} {:>10} {:>10} {:>10}\n", c, num(m.at("mae")), num(m.at("rmse")), num(m.at("r2")));
  }
  if (r.contains("windows")) {
    const auto& w = r.at("windows");
    out << fmt::format("test windows {}: {} faulty, {} flagged ({} of them faulty)\n", w.value("total", 0),
                       w.value("faulty", 0), w.value("flagged", 0), w.value("flagged_faulty", 0));
  }
}

void render_flat(const json& j, const std::string& prefix, std::ostream& out) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) render_flat(v, prefix.empty() ? k : prefix + "." + k, out);
  } else if (j.is_array() && j.size() > 8) {
    out << fmt::format("{:<40} [{} items]\n", prefix, j.size());
  } else {
    out << fmt::format("{:<40} {}\n", prefix, j.is_string() ? j.get<std::string>() : j.dump());
  }
}

// ---------------------------------------------------------------------------
// SVG

struct Series2 {
  std::string label;
  std::string color;
  std::vector<double> x;
  std::vector<double> y;
  bool dashed = false;
};

struct Box {
  double x0, y0, w, h;
};

class Svg {
 public:
  Svg(double width, double height) : width_(width), height_(height) {}

  void text(double x, double y, const std::string& s, int size = 12, const char* anchor = "start") {
    body_ += fmt::format(R"(<text x="{:.1f}" y="{:.1f}" font-size="{}" text-anchor="{}">{}</text>)"
                         "\n",
                         x, y, size, anchor, escape(s));
  }

  void rect(double x, double y, double w, double h, const std::string& fill, const std::string& stroke = "none") {
    body_ += fmt::format(R"(<rect x="{:.1f}" y="{:.1f}" width="{:.1f}" height="{:.1f}" fill="{}" stroke="{}"/>)"
                         "\n",
                         x, y, w, h, fill, stroke);
  }

  void line(double x1, double y1, double x2, double y2, const std::string& stroke) {
    body_ += fmt::format(R"(<line x1="{:.1f}" y1="{:.1f}" x2="{:.1f}" y2="{:.1f}" stroke="{}"/>)"
                         "\n",
                         x1, y1, x2, y2, stroke);
  }

  /// Line chart with axes and legend inside `box`.
  void chart(const Box& box, const std::string& title, const std::vector<Series2>& series, bool log_x = false) {
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
    auto tx = [&](double v) { return log_x ? std::log10(v) : v; };
    for (const auto& s : series) {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.y[i])) continue;
        xmin = std::min(xmin, tx(s.x[i]));
        xmax = std::max(xmax, tx(s.x[i]));
        ymin = std::min(ymin, s.y[i]);
        ymax = std::max(ymax, s.y[i]);
      }
    }
    if (!std::isfinite(xmin)) return;
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;
    const Box plot{box.x0 + 55, box.y0 + 25, box.w - 70, box.h - 55};
    auto px = [&](double v) { return plot.x0 + (tx(v) - xmin) / (xmax - xmin) * plot.w; };
    auto py = [&](double v) { return plot.y0 + plot.h - (v - ymin) / (ymax - ymin) * plot.h; };
    rect(plot.x0, plot.y0, plot.w, plot.h, "none", "#999");
    text(box.x0 + box.w / 2, box.y0 + 16, title, 13, "middle");
    for (int k = 0; k <= 4; ++k) {
      const double v = ymin + (ymax - ymin) * k / 4.0;
      text(plot.x0 - 6, py(v) + 4, fmt::format("{:.3g}", v), 10, "end");
      line(plot.x0 - 3, py(v), plot.x0, py(v), "#999");
    }
    for (int k = 0; k <= 4; ++k) {
      const double v = xmin + (xmax - xmin) * k / 4.0;
      const double shown = log_x ? std::pow(10.0, v) : v;
      const double x = plot.x0 + (v - xmin) / (xmax - xmin) * plot.w;
      text(x, plot.y0 + plot.h + 14, fmt::format("{:.4g}", shown), 10, "middle");
    }
    double legend_y = plot.y0 + 12;
    for (const auto& s : series) {
      std::string points;
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.y[i])) continue;
        points += fmt::format("{:.1f},{:.1f} ", px(s.x[i]), py(s.y[i]));
      }
      body_ += fmt::format(R"(<polyline fill="none" stroke="{}" stroke-width="1.3"{} points="{}"/>)"
                           "\n",
                           s.color, s.dashed ? R"( stroke-dasharray="4 3")" : "", points);
      line(plot.x0 + plot.w - 110, legend_y - 4, plot.x0 + plot.w - 90, legend_y - 4, s.color);
      text(plot.x0 + plot.w - 86, legend_y, s.label, 10);
      legend_y += 14;
    }
  }

  std::string str() const {
    return fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{:.0f}" height="{:.0f}" font-family="sans-serif">)"
                       "\n{}</svg>\n",
                       width_, height_, body_);
  }

 private:
  static std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
      switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        default: out.push_back(c);
      }
    }
    return out;
  }

  double width_;
  double height_;
  std::string body_;
};

std::vector<double> iota_x(std::size_t n, std::size_t from = 0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(from + i);
  return x;
}

std::optional<std::string> string_at(const json& j, const char* key) {
  if (j.contains(key) && j.at(key).is_string() && !j.at(key).get<std::string>().empty()) return j.at(key).get<std::string>();
  return std::nullopt;
}

std::string save_svg(const std::string& dir, const std::string& name, const Svg& svg) {
  const auto path = (fs::path(dir) / name).string();
  write_file_atomic(path, svg.str());
  return path;
}

/// One panel per fault class: clean vs faulted attribute around the first fault of that class.
std::optional<std::string> plot_fault_panels(const json& report, const std::string& dir) {
  const auto& config = report.at("config");
  const auto& outputs = report.at("outputs");
  const auto in = string_at(config, "in");
  const auto corrupted = string_at(outputs, "series-out");
  const auto manifest = string_at(outputs, "manifest");
  if (!in || !corrupted || !manifest || !fs::exists(*corrupted) || !fs::exists(*manifest)) return std::nullopt;
  const auto schema = config.value("schema", "header");
  const auto clean = load_series(*in, schema);
  const auto faulted = load_series(*corrupted, schema);
  const auto records = faults::manifest_from_json(faults::read_document(*manifest).at("series"));
  Svg svg(900, 4 * 220);
  int row = 0;
  for (auto cls : kFaultClasses) {
    const auto it = std::find_if(records.begin(), records.end(), [&](const auto& r) { return r.label == cls; });
    if (it == records.end()) continue;
    const auto j = clean.schema.require_index(it->attributes.front());
    const std::size_t from = it->window.begin > 48 ? it->window.begin - 48 : 0;
    const std::size_t to = std::min(clean.size(), it->window.end + 48);
    Series2 a{"clean", "#1f77b4", iota_x(to - from, from), {}};
    Series2 b{std::string(to_string(cls)), "#d62728", a.x, {}};
    for (std::size_t t = from; t < to; ++t) {
      a.y.push_back(clean.value(t, j));
      b.y.push_back(faulted.value(t, j));
    }
    svg.chart({0, row * 220.0, 900, 220}, fmt::format("{} fault on {} (samples {}-{})", to_string(cls),
                                                      it->attributes.front(), it->window.begin, it->window.end),
              {a, b});
    ++row;
  }
  if (row == 0) return std::nullopt;
  return save_svg(dir, "fault_panels.svg", svg);
}

/// Truth, corrupted and imputed values around the first flagged run.
std::optional<std::string> plot_imputation(const json& report, const std::string& dir) {
  const auto& config = report.at("config");
  const auto in = string_at(config, "in");
  const auto truth = string_at(config, "truth");
  const auto out = string_at(report.at("outputs"), "out");
  if (!in || !truth || !out || !fs::exists(*out)) return std::nullopt;
  const auto schema = config.value("schema", "header");
  const auto corrupted = load_series(*in, schema);
  const auto clean = load_series(*truth, schema);
  const auto repaired = load_series(*out, schema);
  std::size_t first = 0;
  while (first < corrupted.size()) {
    bool differs = false;
    for (std::size_t j = 0; j < corrupted.arity(); ++j) differs |= repaired.value(first, j) != corrupted.value(first, j);
    if (differs) break;
    ++first;
  }
  if (first == corrupted.size()) first = 0;
  const auto j = corrupted.schema.index_of("air_temperature").value_or(0);
  const std::size_t from = first > 96 ? first - 96 : 0;
  const std::size_t to = std::min(corrupted.size(), first + 192);
  Series2 a{"truth", "#2ca02c", iota_x(to - from, from), {}};
  Series2 b{"corrupted", "#d62728", a.x, {}, true};
  Series2 c{"imputed", "#1f77b4", a.x, {}};
  for (std::size_t t = from; t < to; ++t) {
    a.y.push_back(clean.value(t, j));
    b.y.push_back(corrupted.value(t, j));
    c.y.push_back(repaired.value(t, j));
  }
  Svg svg(900, 320);
  svg.chart({0, 0, 900, 320}, "imputation of " + corrupted.schema.attributes[j].name, {a, b, c});
  return save_svg(dir, "imputation_overlay.svg", svg);
}

std::string plot_fst(const json& result, const std::string& dir) {
  Svg svg(520, 320);
  const char* names[] = {"clean", "imperfect", "imputed"};
  const char* colors[] = {"#2ca02c", "#d62728", "#1f77b4"};
  double top = 0.0;
  for (const char* n : names) top = std::max(top, result.at("conditions").at(n).at("mae").get<double>());
  if (top <= 0.0) top = 1.0;
  svg.text(260, 18, "FST prediction MAE by input condition", 13, "middle");
  svg.line(60, 280, 500, 280, "#999");
  for (int k = 0; k < 3; ++k) {
    const double mae = result.at("conditions").at(names[k]).at("mae").get<double>();
    const double h = mae / top * 230.0;
    const double x = 90 + k * 140.0;
    svg.rect(x, 280 - h, 80, h, colors[k]);
    svg.text(x + 40, 275 - h, fmt::format("{:.3f}", mae), 11, "middle");
    svg.text(x + 40, 298, names[k], 12, "middle");
  }
  return save_svg(dir, "fst_mae.svg", svg);
}

std::optional<std::string> plot_bench(const json& report, const std::string& dir) {
  if (!report.contains("timing") || !report.at("timing").contains("runs")) return std::nullopt;
  Series2 mean{"mean", "#1f77b4", {}, {}};
  Series2 p95{"p95", "#d62728", {}, {}, true};
  for (const auto& r : report.at("timing").at("runs")) {
    mean.x.push_back(r.at("instances").get<double>());
    p95.x.push_back(r.at("instances").get<double>());
    mean.y.push_back(r.at("latency_mean_s").get<double>() * 1e3);
    p95.y.push_back(r.at("latency_p95_s").get<double>() * 1e3);
  }
  if (mean.x.empty()) return std::nullopt;
  Svg svg(640, 320);
  svg.chart({0, 0, 640, 320}, "classify latency (ms) vs concurrent instances", {mean, p95});
  return save_svg(dir, "bench_latency.svg", svg);
}

std::optional<std::string> plot_training(const json& result, const std::string& dir) {
  if (!result.contains("training") || !result.at("training").contains("train_loss_history")) return std::nullopt;
  const auto tr = result.at("training").at("train_loss_history").get<std::vector<double>>();
  const auto va = result.at("training").at("validation_loss_history").get<std::vector<double>>();
  Svg svg(640, 320);
  svg.chart({0, 0, 640, 320}, "cross-entropy per epoch",
            {{"train", "#1f77b4", iota_x(tr.size(), 1), tr}, {"validation", "#d62728", iota_x(va.size(), 1), va}});
  return save_svg(dir, "training_loss.svg", svg);
}

}  // namespace

void render_report(const json& report, std::ostream& out) {
  const auto command = report.value("command", "");
  const auto& result = report.at("result");
  out << "== " << (command.empty() ? "report" : command) << " ==\n";
  if (command == "fst") {
    render_fst(result, out);
  } else if (command == "evaluate") {
    render_classification(result, out);
  } else if (command == "train" && result.contains("training")) {
    const auto& t = result.at("training");
    render_classification(t.contains("validation") ? t.at("validation") : t, out);
  } else if (command == "bench" && report.contains("timing") && report.at("timing").contains("runs")) {
    out << fmt::format("{:>9} {:>12} {:>12} {:>16}\n", "instances", "mean_ms", "p95_ms", "mem_kb/instance");
    for (const auto& r : report.at("timing").at("runs")) {
      out << fmt::format("{:>9} {:>12.4f} {:>12.4f} {:>16.1f}\n", r.at("instances").get<std::size_t>(),
                         r.at("latency_mean_s").get<double>() * 1e3, r.at("latency_p95_s").get<double>() * 1e3,
                         r.at("memory_delta_per_instance_bytes").get<double>() / 1024.0);
    }
  } else {
    render_flat(result, "", out);
  }
}

std::vector<std::string> write_plots(const json& report, const std::string& dir) {
  const auto command = report.value("command", "");
  const auto& result = report.at("result");
  std::vector<std::string> files;
  auto keep = [&](std::optional<std::string> f) {
    if (f) files.push_back(*f);
  };
  if (command == "inject") keep(plot_fault_panels(report, dir));
  if (command == "impute") keep(plot_imputation(report, dir));
  if (command == "fst") files.push_back(plot_fst(result, dir));
  if (command == "bench") keep(plot_bench(report, dir));
  if (command == "train") keep(plot_training(result, dir));
  return files;
}

}  // namespace cerealia::cli
