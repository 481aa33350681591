// Experiment harness behind the cgbench tool: sweeps over supply voltage or
// temperature, the four-scheme comparison, run manifests and SVG charts.
#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <fstream>
#include <iterator>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "json.hpp"

#include "cgsim/cglib.hpp"
#include "cgsim/error.hpp"
#include "cgsim/metrics.hpp"

namespace cgsim {

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr const char* kModelCardEnv = "CGBENCH_MODEL_CARD";

// ---- model cards ---------------------------------------------------------

struct ModelSource {
  DefaultCards cards = default_model_cards();
  std::string origin = "built-in";
  std::string text;  // what the hash covers
};

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read '" + path + "'");
  return {std::istreambuf_iterator<char>(in), {}};
}

// Cards named nch and pch from `path`, or the built-in pair when empty.
inline ModelSource load_models(const std::string& path) {
  ModelSource m;
  if (path.empty()) {
    m.text = model_line("nch", m.cards.nch) + "\n" + model_line("pch", m.cards.pch) + "\n";
    return m;
  }
  m.text = read_file(path);
  m.origin = path;
  auto cards = load_model_cards(m.text);
  for (const char* name : {"nch", "pch"})
    if (!cards.count(name)) throw UsageError("model file '" + path + "' has no '" + name + "' card");
  m.cards = {cards.at("nch"), cards.at("pch")};
  if (m.cards.nch.polarity != Polarity::n || m.cards.pch.polarity != Polarity::p)
    throw UsageError("model file '" + path + "': nch must be nmos and pch pmos");
  validate(m.cards.nch, "nch");
  validate(m.cards.pch, "pch");
  return m;
}

inline ModelSource load_models_from_env() {
  const char* p = std::getenv(kModelCardEnv);
  return load_models(p ? p : "");
}

// ---- worker pool ---------------------------------------------------------

// Runs task(i) for i in [0, n) on up to `jobs` threads. The first exception
// thrown by any task is rethrown after all workers stop.
template <class Task>
void parallel_for(std::size_t n, unsigned jobs, Task task) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t i; !failed && (i = next++) < n;) {
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (unsigned k = 1; k < jobs; ++k) pool.emplace_back(worker);
    worker();
  }
  if (error) std::rethrow_exception(error);
}

inline unsigned default_jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

// ---- sweeps --------------------------------------------------------------

enum class SweepParam { vdd, temp };

inline std::string_view sweep_param_name(SweepParam p) { return p == SweepParam::vdd ? "vdd" : "temp"; }

inline SweepParam parse_sweep_param(std::string_view s) {
  if (s == "vdd") return SweepParam::vdd;
  if (s == "temp") return SweepParam::temp;
  throw UsageError("unknown sweep parameter '" + std::string(s) + "' (expected vdd or temp)");
}

struct SweepSpec {
  SweepParam param = SweepParam::vdd;
  double from = 0.8;
  double to = 1.3;
  double step = 0.1;
  SchemeSpec fixed;
  std::vector<Scheme> schemes{kAllSchemes.begin(), kAllSchemes.end()};

  static SweepSpec defaults(SweepParam p) {
    SweepSpec s;
    s.param = p;
    if (p == SweepParam::temp) {
      s.from = 248;
      s.to = 398;
      s.step = 25;
    }
    return s;
  }

  std::vector<double> grid() const {
    std::vector<double> g;
    const auto n = static_cast<long>(std::floor((to - from) / step + 1e-9));
    for (long k = 0; k <= n; ++k) g.push_back(from + static_cast<double>(k) * step);
    return g;
  }

  void validate() const {
    if (!(step > 0)) throw UsageError("sweep step must be > 0");
    if (!(from < to)) throw UsageError("sweep needs from < to");
    if (grid().size() < 3) throw UsageError("sweep grid needs at least 3 points");
    if (schemes.empty()) throw UsageError("sweep needs at least one scheme");
    for (double v : grid()) at(schemes.front(), v).validate();
  }

  SchemeSpec at(Scheme sc, double v) const {
    SchemeSpec s = fixed;
    s.scheme = sc;
    (param == SweepParam::vdd ? s.vdd : s.temp) = v;
    return s;
  }
};

struct SweepRow {
  Scheme scheme;
  double value;
  MetricsReport report;
};

// Rows in canonical order: scheme name, then swept value.
inline void canonical_sort(std::vector<SweepRow>& rows) {
  std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    const auto na = scheme_name(a.scheme), nb = scheme_name(b.scheme);
    return na != nb ? na < nb : a.value < b.value;
  });
}

inline std::vector<SweepRow> run_sweep(const SweepSpec& spec, unsigned jobs) {
  spec.validate();
  const auto g = spec.grid();
  std::vector<SweepRow> rows;
  for (Scheme sc : spec.schemes)
    for (double v : g) rows.push_back({sc, v, {}});
  parallel_for(rows.size(), jobs, [&](std::size_t i) { rows[i].report = report(spec.at(rows[i].scheme, rows[i].value)); });
  canonical_sort(rows);
  return rows;
}

inline std::string sweep_csv(SweepParam p, const std::vector<SweepRow>& rows) {
  std::string out = "param,value," + std::string(kReportHeader) + "\n";
  for (const auto& r : rows) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", r.value);
    out += std::string(sweep_param_name(p)) + "," + buf + "," + csv_row(r.report) + "\n";
  }
  return out;
}

// ---- comparison ----------------------------------------------------------

inline double reduction_pct(double peer, double proposed) { return (peer - proposed) / peer * 100.0; }

// Reports for all four schemes, in kAllSchemes order.
inline std::vector<MetricsReport> run_compare(const SchemeSpec& base, unsigned jobs) {
  std::vector<MetricsReport> out(kAllSchemes.size());
  parallel_for(out.size(), jobs, [&](std::size_t i) {
    SchemeSpec s = base;
    s.scheme = kAllSchemes[i];
    out[i] = report(s);
  });
  return out;
}

inline const MetricsReport& find_report(const std::vector<MetricsReport>& rows, Scheme s) {
  for (const auto& r : rows)
    if (r.scheme == s) return r;
  throw UsageError("no report for scheme " + std::string(scheme_name(s)));
}

inline std::string compare_csv(const std::vector<MetricsReport>& rows) {
  const auto& p = find_report(rows, Scheme::proposed_cg);
  std::string out = std::string(kReportHeader) + ",avg_reduction_pct,static_reduction_pct,pdp_reduction_pct\n";
  for (const auto& r : rows) {
    char buf[128];
    std::snprintf(buf, sizeof buf, ",%.4f,%.4f,%.4f", reduction_pct(r.avg_power, p.avg_power),
                  reduction_pct(r.static_power, p.static_power), reduction_pct(r.pdp, p.pdp));
    out += csv_row(r) + buf + "\n";
  }
  return out;
}

inline std::string compare_text(const std::vector<MetricsReport>& rows) {
  const auto& p = find_report(rows, Scheme::proposed_cg);
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-12s %10s %11s %9s %9s %9s %10s %9s %7s %9s\n", "scheme", "avg_uW", "static_nW",
                "delay_ps", "setup_ps", "hold_ps", "latency_ps", "pdp_fJ", "toggles", "avg_red%");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-12s %10.4f %11.4f %9.2f %9.2f %9.2f %10.2f %9.4f %7ld %9.2f\n",
                  std::string(scheme_name(r.scheme)).c_str(), r.avg_power * 1e6, r.static_power * 1e9,
                  r.delay * 1e12, r.setup * 1e12, r.hold * 1e12, r.latency * 1e12, r.pdp * 1e15,
                  r.toggles_gated_clock, reduction_pct(r.avg_power, p.avg_power));
    out += buf;
  }
  return out;
}

// ---- manifest ------------------------------------------------------------

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::json to_json(const SchemeSpec& s) {
  const auto pair = [](const PairSize& p) { return nlohmann::json{{"wn", p.wn}, {"wp", p.wp}, {"l", p.l}}; };
  const auto& c = s.cells;
  return {
      {"scheme", scheme_name(s.scheme)},
      {"vdd", s.vdd},
      {"f_clk", s.f_clk},
      {"f_data", s.f_data},
      {"edge", s.edge},
      {"temp", s.temp},
      {"seed", s.seed},
      {"bits", s.bits},
      {"pattern", s.pattern},
      {"tstep", s.tstep},
      {"integrator", to_string(s.integrator)},
      {"widths",
       {{"P1", s.widths.p1}, {"P2", s.widths.p2}, {"N1", s.widths.n1}, {"N2", s.widths.n2}, {"N3", s.widths.n3}}},
      {"cells",
       {{"clock_inv", pair(c.clock_inv)},
        {"input_inv", pair(c.input_inv)},
        {"pass_gate", pair(c.pass_gate)},
        {"store_inv", pair(c.store_inv)},
        {"keeper_inv", pair(c.keeper_inv)},
        {"output_inv", pair(c.output_inv)},
        {"xor_inv", pair(c.xor_inv)},
        {"xor_pass", pair(c.xor_pass)},
        {"nand", pair(c.nand)},
        {"lct", pair(c.lct)},
        {"and_inv", pair(c.and_inv)}}},
  };
}

inline nlohmann::json to_json(const SimConfig& c) {
  return {{"abstol", c.abstol}, {"reltol", c.reltol}, {"vntol", c.vntol},
          {"gmin", c.gmin},     {"cmin", c.cmin},     {"max_newton", c.max_newton}};
}

struct Manifest {
  std::string command;
  ModelSource models;
  std::vector<SchemeSpec> schemes;
  std::optional<SweepSpec> sweep;
  std::vector<std::string> outputs;
  unsigned jobs = 1;
};

inline nlohmann::json to_json(const Manifest& m) {
  nlohmann::json j{
      {"tool", "cgbench"},
      {"version", kToolVersion},
      {"command", m.command},
      {"model_card", {{"source", m.models.origin}, {"fnv1a64", hex64(fnv1a64(m.models.text))}}},
      {"sim_config", to_json(SimConfig{})},
      {"setup_hold_resolution", kSetupHoldResolution},
      {"jobs", m.jobs},
      {"timestamp", utc_timestamp()},
      {"outputs", m.outputs},
  };
  auto& specs = j["schemes"] = nlohmann::json::array();
  for (const auto& s : m.schemes) specs.push_back(to_json(s));
  if (m.sweep) {
    j["sweep"] = {{"param", sweep_param_name(m.sweep->param)},
                  {"from", m.sweep->from},
                  {"to", m.sweep->to},
                  {"step", m.sweep->step},
                  {"grid", m.sweep->grid()}};
  }
  return j;
}

// ---- charts --------------------------------------------------------------

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

namespace detail {

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace detail

// Self-contained SVG line chart, one polyline and legend entry per series.
inline std::string svg_line_chart(const Chart& c) {
  constexpr double W = 720, H = 440, L = 80, R = 170, T = 40, B = 60;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : c.series)
    for (const auto& [x, y] : s.points) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  const double pad = y1 > y0 ? 0.05 * (y1 - y0) : std::max(1e-12, 0.05 * std::abs(y0));
  y0 -= pad;
  y1 += pad;
  const auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  const auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  using detail::fmt;

  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"440\" "
                  "font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + fmt("%.1f", (W - R + L) / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" +
       detail::xml_escape(c.title) + "</text>\n";
  s += "<g stroke=\"#333\" fill=\"none\"><rect x=\"" + fmt("%.1f", L) + "\" y=\"" + fmt("%.1f", T) + "\" width=\"" +
       fmt("%.1f", W - L - R) + "\" height=\"" + fmt("%.1f", H - T - B) + "\"/></g>\n";
  for (int k = 0; k <= 5; ++k) {
    const double xv = x0 + (x1 - x0) * k / 5, yv = y0 + (y1 - y0) * k / 5;
    s += "<line x1=\"" + fmt("%.1f", px(xv)) + "\" y1=\"" + fmt("%.1f", H - B) + "\" x2=\"" + fmt("%.1f", px(xv)) +
         "\" y2=\"" + fmt("%.1f", H - B + 5) + "\" stroke=\"#333\"/>\n";
    s += "<text x=\"" + fmt("%.1f", px(xv)) + "\" y=\"" + fmt("%.1f", H - B + 18) + "\" text-anchor=\"middle\">" +
         fmt("%.4g", xv) + "</text>\n";
    s += "<line x1=\"" + fmt("%.1f", L - 5) + "\" y1=\"" + fmt("%.1f", py(yv)) + "\" x2=\"" + fmt("%.1f", W - R) +
         "\" y2=\"" + fmt("%.1f", py(yv)) + "\" stroke=\"#ddd\"/>\n";
    s += "<text x=\"" + fmt("%.1f", L - 8) + "\" y=\"" + fmt("%.1f", py(yv) + 4) + "\" text-anchor=\"end\">" +
         fmt("%.4g", yv) + "</text>\n";
  }
  s += "<text x=\"" + fmt("%.1f", (W - R + L) / 2) + "\" y=\"" + fmt("%.1f", H - 18) + "\" text-anchor=\"middle\">" +
       detail::xml_escape(c.x_label) + "</text>\n";
  s += "<text transform=\"translate(18," + fmt("%.1f", (H - B + T) / 2) +
       ") rotate(-90)\" text-anchor=\"middle\">" + detail::xml_escape(c.y_label) + "</text>\n";

  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  for (std::size_t i = 0; i < c.series.size(); ++i) {
    const auto& ser = c.series[i];
    const char* col = kColors[i % std::size(kColors)];
    std::string pts;
    for (const auto& [x, y] : ser.points) pts += fmt("%.2f", px(x)) + "," + fmt("%.2f", py(y)) + " ";
    s += "<polyline fill=\"none\" stroke=\"" + std::string(col) + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    for (const auto& [x, y] : ser.points)
      s += "<circle cx=\"" + fmt("%.2f", px(x)) + "\" cy=\"" + fmt("%.2f", py(y)) + "\" r=\"3\" fill=\"" + col +
           "\"/>\n";
    const double ly = T + 14 + 20.0 * static_cast<double>(i);
    s += "<line x1=\"" + fmt("%.1f", W - R + 14) + "\" y1=\"" + fmt("%.1f", ly - 4) + "\" x2=\"" +
         fmt("%.1f", W - R + 38) + "\" y2=\"" + fmt("%.1f", ly - 4) + "\" stroke=\"" + col +
         "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + fmt("%.1f", W - R + 44) + "\" y=\"" + fmt("%.1f", ly) + "\">" + detail::xml_escape(ser.name) +
         "</text>\n";
  }
  return s + "</svg>\n";
}

struct SweepChart {
  std::string file_suffix;  // e.g. "avg_power"
  Chart chart;
};

// avg power, delay and PDP against the swept parameter, from the same rows
// that go into the CSV.
inline std::vector<SweepChart> sweep_charts(SweepParam p, const std::vector<SweepRow>& rows) {
  const std::string xl = p == SweepParam::vdd ? "Vdd (V)" : "Temperature (K)";
  struct Metric {
    const char* suffix;
    const char* title;
    const char* unit;
    double scale;
    const char* printed;  // same format as csv_row
    double MetricsReport::*field;
  };
  static constexpr Metric kMetrics[] = {
      {"avg_power", "Average power", "Average power (uW)", 1e6, "%.6f", &MetricsReport::avg_power},
      {"delay", "Clock-to-Q delay", "Delay (ps)", 1e12, "%.4f", &MetricsReport::delay},
      {"pdp", "Power-delay product", "PDP (fJ)", 1e15, "%.6f", &MetricsReport::pdp},
  };
  std::vector<SweepChart> out;
  for (const auto& m : kMetrics) {
    SweepChart sc{m.suffix, {std::string(m.title) + " vs " + std::string(sweep_param_name(p)), xl, m.unit, {}}};
    for (const auto& r : rows) {
      const std::string name(scheme_name(r.scheme));
      auto it = std::find_if(sc.chart.series.begin(), sc.chart.series.end(),
                             [&](const Series& s) { return s.name == name; });
      if (it == sc.chart.series.end()) it = sc.chart.series.insert(sc.chart.series.end(), Series{name, {}});
      // Plotted values are the CSV's printed digits, nothing finer.
      const double y = std::strtod(detail::fmt(m.printed, r.report.*(m.field) * m.scale).c_str(), nullptr);
      const double x = std::strtod(detail::fmt("%.6g", r.value).c_str(), nullptr);
      it->points.emplace_back(x, y);
    }
    out.push_back(std::move(sc));
  }
  return out;
}

}  // namespace cgsim
