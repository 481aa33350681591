#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "cgsim/devices.hpp"
#include "cgsim/error.hpp"

namespace cgsim {

// ---------------------------------------------------------------------------
// Numbers
// ---------------------------------------------------------------------------

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

}  // namespace detail

// Parses a SPICE number with an optional engineering suffix
// (f, p, n, u, m, k, meg; case-insensitive). The suffix is applied by
// shifting the decimal exponent, so "0.2u" is exactly the double nearest 2e-7.
inline std::optional<double> parse_number(std::string_view tok) {
  if (tok.empty()) return std::nullopt;
  std::string_view body = tok;
  if (body.front() == '+') body.remove_prefix(1);
  double value = 0;
  auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), value);
  if (ec != std::errc{} || ptr == body.data()) return std::nullopt;
  const std::string_view numeric(body.data(), static_cast<std::size_t>(ptr - body.data()));
  const std::string suffix = detail::lower(std::string_view(ptr, body.data() + body.size() - ptr));
  if (suffix.empty()) return value;
  if (numeric.find_first_of("eE") != std::string_view::npos) return std::nullopt;

  // "meg" must be tested before "m".
  static constexpr std::array<std::pair<std::string_view, int>, 7> kSuffixes{{
      {"meg", 6}, {"f", -15}, {"p", -12}, {"n", -9}, {"u", -6}, {"m", -3}, {"k", 3}}};
  for (const auto& [sfx, power] : kSuffixes) {
    if (suffix == sfx) {
      const std::string scaled = std::string(numeric) + "e" + std::to_string(power);
      double out = 0;
      auto res = std::from_chars(scaled.data(), scaled.data() + scaled.size(), out);
      if (res.ec != std::errc{} || res.ptr != scaled.data() + scaled.size()) return std::nullopt;
      return out;
    }
  }
  return std::nullopt;
}

// Shortest text that parses back to exactly `v`.
inline std::string format_number(double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

// ---------------------------------------------------------------------------
// Raw (syntactic) netlist
// ---------------------------------------------------------------------------

// A literal number or a reference to a .param name.
struct Value {
  std::optional<double> number;
  std::string param;  // lower case

  bool operator==(const Value&) const = default;
};

enum class WaveKind { dc, pulse, pwl };

enum class StmtKind {
  resistor,
  capacitor,
  vsource,
  mosfet,
  instance,
  model,
  subckt,
  ends,
  param,
  tran,
  op,
  nodeset,
};

struct Statement {
  int line = 0;
  StmtKind kind{};
  std::string name;                // device / model / subckt name
  std::vector<std::string> nodes;  // terminals, or subckt ports
  std::string ref;                 // model or subckt referenced; model type for .model
  WaveKind wave = WaveKind::dc;    // vsource only
  std::vector<Value> values;       // R/C value, source values, .tran step/stop
  std::vector<std::pair<std::string, Value>> keyvals;  // W/L, model params, .param, .nodeset
};

struct RawNetlist {
  std::string title;
  std::vector<Statement> statements;
};

namespace detail {

struct Line {
  int number;
  std::string text;
};

// Splits on whitespace and commas; '(' ')' '=' become their own tokens.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
      flush();
    } else if (c == '(' || c == ')' || c == '=') {
      flush();
      out.emplace_back(1, c);
    } else {
      cur.push_back(c);
    }
  }
  flush();
  return out;
}

inline bool is_identifier(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s.front())) || s.front() == '_'))
    return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  });
}

inline Value parse_value(std::string_view tok, int line) {
  if (tok.size() > 2 && tok.front() == '{' && tok.back() == '}') {
    const auto inner = tok.substr(1, tok.size() - 2);
    if (!is_identifier(inner)) throw ParseError(line, "bad parameter reference '" + std::string(tok) + "'");
    return Value{std::nullopt, lower(inner)};
  }
  const char c = tok.front();
  if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '+' || c == '-') {
    auto v = parse_number(tok);
    if (!v) throw ParseError(line, "malformed number '" + std::string(tok) + "'");
    return Value{*v, {}};
  }
  if (is_identifier(tok)) return Value{std::nullopt, lower(tok)};
  throw ParseError(line, "malformed number '" + std::string(tok) + "'");
}

// Token cursor over one logical line.
class Cursor {
 public:
  Cursor(std::vector<std::string> toks, int line) : toks_(std::move(toks)), line_(line) {}

  bool done() const { return pos_ >= toks_.size(); }
  const std::string& peek() const { return toks_.at(pos_); }
  int line() const { return line_; }

  const std::string& next(const char* what) {
    if (done()) throw ParseError(line_, std::string("expected ") + what);
    return toks_[pos_++];
  }
  bool accept(std::string_view s) {
    if (!done() && iequals(toks_[pos_], s)) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect_end() {
    if (!done()) throw ParseError(line_, "unexpected token '" + toks_[pos_] + "'");
  }
  // Reads `key = value` pairs until the end (parentheses are ignored).
  std::vector<std::pair<std::string, Value>> keyvals() {
    std::vector<std::pair<std::string, Value>> out;
    while (!done()) {
      if (accept("(") || accept(")")) continue;
      std::string key = lower(next("key"));
      if (!accept("=")) throw ParseError(line_, "expected '=' after '" + key + "'");
      out.emplace_back(std::move(key), parse_value(next("value"), line_));
    }
    return out;
  }

 private:
  std::vector<std::string> toks_;
  std::size_t pos_ = 0;
  int line_;
};

inline Statement parse_element(char letter, Cursor& cur) {
  Statement st;
  st.line = cur.line();
  auto node = [&] { return std::string(cur.next("node")); };
  switch (letter) {
    case 'r':
    case 'c':
      st.kind = letter == 'r' ? StmtKind::resistor : StmtKind::capacitor;
      st.nodes = {node(), node()};
      st.values.push_back(parse_value(cur.next("value"), st.line));
      cur.expect_end();
      break;
    case 'v': {
      st.kind = StmtKind::vsource;
      st.nodes = {node(), node()};
      const std::string kw = lower(cur.done() ? std::string() : cur.peek());
      if (kw == "pulse" || kw == "pwl") {
        cur.next("waveform");
        st.wave = kw == "pulse" ? WaveKind::pulse : WaveKind::pwl;
        while (!cur.done()) {
          if (cur.accept("(") || cur.accept(")")) continue;
          st.values.push_back(parse_value(cur.next("value"), st.line));
        }
        if (st.wave == WaveKind::pulse && st.values.size() != 7)
          throw ParseError(st.line, "PULSE needs 7 values (v1 v2 delay rise fall width period)");
        if (st.wave == WaveKind::pwl && (st.values.empty() || st.values.size() % 2 != 0))
          throw ParseError(st.line, "PWL needs (time value) pairs");
      } else {
        cur.accept("dc");
        st.wave = WaveKind::dc;
        st.values.push_back(parse_value(cur.next("value"), st.line));
        cur.expect_end();
      }
      break;
    }
    case 'm':
      st.kind = StmtKind::mosfet;
      st.nodes = {node(), node(), node()};
      st.ref = lower(cur.next("model name"));
      st.keyvals = cur.keyvals();
      for (const auto& [k, v] : st.keyvals)
        if (k != "w" && k != "l") throw ParseError(st.line, "unknown MOSFET parameter '" + k + "'");
      break;
    case 'x': {
      st.kind = StmtKind::instance;
      std::vector<std::string> rest;
      while (!cur.done()) rest.push_back(cur.next("node"));
      if (rest.empty()) throw ParseError(st.line, "instance needs a subcircuit name");
      st.ref = lower(rest.back());
      rest.pop_back();
      st.nodes = std::move(rest);
      break;
    }
    default:
      throw ParseError(cur.line(), std::string("unknown element letter '") + letter + "'");
  }
  return st;
}

inline Statement parse_control(const std::string& kw, Cursor& cur) {
  Statement st;
  st.line = cur.line();
  if (kw == ".model") {
    st.kind = StmtKind::model;
    st.name = cur.next("model name");
    st.ref = lower(cur.next("model type"));
    if (st.ref != "nmos" && st.ref != "pmos")
      throw ParseError(st.line, "model type must be nmos or pmos");
    st.keyvals = cur.keyvals();
  } else if (kw == ".subckt") {
    st.kind = StmtKind::subckt;
    st.name = cur.next("subcircuit name");
    while (!cur.done()) st.nodes.push_back(cur.next("port"));
  } else if (kw == ".ends") {
    st.kind = StmtKind::ends;
    if (!cur.done()) st.name = cur.next("name");
    cur.expect_end();
  } else if (kw == ".param") {
    st.kind = StmtKind::param;
    st.keyvals = cur.keyvals();
    if (st.keyvals.empty()) throw ParseError(st.line, ".param needs name=value");
  } else if (kw == ".tran") {
    st.kind = StmtKind::tran;
    st.values.push_back(parse_value(cur.next("step"), st.line));
    st.values.push_back(parse_value(cur.next("stop"), st.line));
    cur.expect_end();
  } else if (kw == ".op") {
    st.kind = StmtKind::op;
    cur.expect_end();
  } else if (kw == ".nodeset") {
    // .nodeset v(node)=value ...
    st.kind = StmtKind::nodeset;
    while (!cur.done()) {
      if (!cur.accept("v")) throw ParseError(st.line, "expected v(node)=value");
      if (!cur.accept("(")) throw ParseError(st.line, "expected '('");
      std::string n = cur.next("node");
      if (!cur.accept(")")) throw ParseError(st.line, "expected ')'");
      if (!cur.accept("=")) throw ParseError(st.line, "expected '='");
      st.keyvals.emplace_back(std::move(n), parse_value(cur.next("value"), st.line));
    }
  } else {
    throw ParseError(st.line, "unknown control statement '" + kw + "'");
  }
  return st;
}

}  // namespace detail

// Parses the netlist dialect: title line, `*` comments, `+` continuations,
// R/C/V/M/X elements and .model/.subckt/.ends/.param/.tran/.op/.nodeset/.end.
// An element line may also start with a bare kind letter followed by the
// full device name (`M X1.M1 d g s nch ...`), which is how flattened
// hierarchical names are written back out. Model libraries have no title
// line; pass title_line = false for those.
inline RawNetlist parse(std::string_view source, bool title_line = true) {
  std::vector<detail::Line> lines;
  int lineno = 0;
  std::size_t pos = 0;
  std::string title;
  bool have_title = !title_line;
  while (pos <= source.size()) {
    const std::size_t eol = source.find('\n', pos);
    std::string_view raw = source.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = eol == std::string_view::npos ? source.size() + 1 : eol + 1;
    ++lineno;
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    if (!have_title) {
      title = std::string(raw);
      have_title = true;
      continue;
    }
    const auto first = raw.find_first_not_of(" \t");
    if (first == std::string_view::npos) continue;
    raw.remove_prefix(first);
    if (raw.front() == '*') continue;
    if (raw.front() == '+') {
      if (lines.empty()) throw ParseError(lineno, "continuation line with nothing to continue");
      lines.back().text.push_back(' ');
      lines.back().text.append(raw.substr(1));
      continue;
    }
    lines.push_back({lineno, std::string(raw)});
  }

  RawNetlist out;
  out.title = std::move(title);
  for (auto& ln : lines) {
    auto toks = detail::tokenize(ln.text);
    if (toks.empty()) continue;
    const std::string head = detail::lower(toks.front());
    if (head.front() == '.') {
      if (head == ".end") break;
      detail::Cursor cur(std::vector<std::string>(toks.begin() + 1, toks.end()), ln.number);
      out.statements.push_back(detail::parse_control(head, cur));
      continue;
    }
    const char letter = head.front();
    std::string name = toks.front();
    std::size_t skip = 1;
    if (head.size() == 1) {
      if (toks.size() < 2) throw ParseError(ln.number, "expected device name");
      name = toks[1];
      skip = 2;
    }
    detail::Cursor cur(std::vector<std::string>(toks.begin() + static_cast<long>(skip), toks.end()), ln.number);
    Statement st = detail::parse_element(letter, cur);
    st.name = std::move(name);
    out.statements.push_back(std::move(st));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Elaborated circuit
// ---------------------------------------------------------------------------

struct Waveform {
  WaveKind kind = WaveKind::dc;
  double level = 0;                               // dc
  std::array<double, 7> pulse{};                  // v1 v2 delay rise fall width period
  std::vector<std::pair<double, double>> points;  // pwl (time, value)

  static Waveform dc(double v) { return {WaveKind::dc, v, {}, {}}; }
  static Waveform make_pulse(double v1, double v2, double delay, double rise, double fall,
                             double width, double period) {
    return {WaveKind::pulse, 0, {v1, v2, delay, rise, fall, width, period}, {}};
  }
  static Waveform pwl(std::vector<std::pair<double, double>> pts) {
    return {WaveKind::pwl, 0, {}, std::move(pts)};
  }

  bool operator==(const Waveform&) const = default;
};

// Throws ElaborationError naming `where` on an invalid waveform.
inline void validate(const Waveform& w, const std::string& where) {
  if (w.kind == WaveKind::pulse) {
    const auto& p = w.pulse;
    if (!(p[3] > 0 && p[4] > 0 && p[5] > 0 && p[6] > 0))
      throw ElaborationError(where + ": PULSE rise, fall, width and period must be > 0");
    if (p[6] < p[3] + p[4] + p[5])
      throw ElaborationError(where + ": PULSE period shorter than rise + width + fall");
  } else if (w.kind == WaveKind::pwl) {
    if (w.points.empty()) throw ElaborationError(where + ": empty PWL");
    for (std::size_t i = 1; i < w.points.size(); ++i)
      if (w.points[i].first < w.points[i - 1].first)
        throw ElaborationError(where + ": PWL times must be nondecreasing");
  }
}

// Piecewise-linear evaluation at time t >= 0. PULSE repeats with its period
// after the initial delay; PWL holds its end values outside the given points.
inline double eval_waveform(const Waveform& w, double t) {
  switch (w.kind) {
    case WaveKind::dc:
      return w.level;
    case WaveKind::pulse: {
      const auto& [v1, v2, delay, rise, fall, width, period] = w.pulse;
      if (t < delay) return v1;
      const double tau = std::fmod(t - delay, period);
      if (tau < rise) return v1 + (v2 - v1) * (tau / rise);
      if (tau < rise + width) return v2;
      if (tau < rise + width + fall) return v2 + (v1 - v2) * ((tau - rise - width) / fall);
      return v1;
    }
    case WaveKind::pwl: {
      const auto& pts = w.points;
      if (t <= pts.front().first) return pts.front().second;
      if (t >= pts.back().first) return pts.back().second;
      // first point strictly after t
      auto it = std::upper_bound(pts.begin(), pts.end(), t,
                                 [](double x, const auto& p) { return x < p.first; });
      const auto& [t1, y1] = *it;
      const auto& [t0, y0] = *(it - 1);
      if (t1 == t0) return y1;
      return y0 + (y1 - y0) * ((t - t0) / (t1 - t0));
    }
  }
  return 0;
}

enum class DeviceKind { resistor, capacitor, vsource, mosfet };

struct Device {
  std::string name;
  DeviceKind kind{};
  std::vector<int> nodes;  // indices into Circuit::nodes; MOSFET: drain, gate, source
  double value = 0;        // ohms or farads
  Waveform wave;           // vsource
  std::string model;       // mosfet, lower case
  double w = 0;
  double l = 0;

  bool operator==(const Device&) const = default;
};

struct TranSpec {
  double step = 0;
  double stop = 0;
  bool operator==(const TranSpec&) const = default;
};
struct OpSpec {
  bool operator==(const OpSpec&) const = default;
};
using AnalysisSpec = std::variant<TranSpec, OpSpec>;

struct Circuit {
  std::string title;
  std::vector<std::string> nodes{"0"};  // index 0 is ground
  std::vector<Device> devices;
  std::map<std::string, ModelCard> models;
  std::vector<AnalysisSpec> analyses;
  std::map<std::string, double> params;
  std::map<std::string, double> nodesets;  // Newton starting guesses
  std::vector<std::string> warnings;

  bool operator==(const Circuit&) const = default;

  std::optional<int> find_node(std::string_view name) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i] == name) return static_cast<int>(i);
    return std::nullopt;
  }
  int node(std::string_view name) const {
    auto i = find_node(name);
    if (!i) throw ElaborationError("unknown node '" + std::string(name) + "'");
    return *i;
  }
  const Device* find_device(std::string_view name) const {
    for (const auto& d : devices)
      if (d.name == name) return &d;
    return nullptr;
  }
};

namespace detail {

inline bool is_ground(std::string_view n) { return n == "0" || iequals(n, "gnd"); }

inline ModelCard model_from_statement(const Statement& st, const std::map<std::string, double>& params);

class Elaborator {
 public:
  explicit Elaborator(const RawNetlist& raw) : raw_(raw) {}

  Circuit run() {
    circuit_.title = raw_.title;
    collect();
    node_index_.emplace("0", 0);
    expand(top_, "", {}, 0);
    finish();
    return std::move(circuit_);
  }

 private:
  struct SubcktDef {
    const Statement* header;
    std::vector<const Statement*> body;
  };

  double resolve(const Value& v, int line) const {
    if (v.number) return *v.number;
    auto it = circuit_.params.find(v.param);
    if (it == circuit_.params.end())
      throw ElaborationError("line " + std::to_string(line) + ": undefined parameter '" + v.param + "'");
    return it->second;
  }

  void collect() {
    SubcktDef* open = nullptr;
    for (const auto& st : raw_.statements) {
      switch (st.kind) {
        case StmtKind::subckt: {
          if (open) throw ElaborationError("line " + std::to_string(st.line) + ": nested .subckt");
          const std::string key = lower(st.name);
          if (subckts_.count(key))
            throw ElaborationError("line " + std::to_string(st.line) + ": duplicate subcircuit '" + st.name + "'");
          open = &subckts_[key];
          open->header = &st;
          break;
        }
        case StmtKind::ends:
          if (!open) throw ElaborationError("line " + std::to_string(st.line) + ": .ends without .subckt");
          open = nullptr;
          break;
        case StmtKind::param:
          for (const auto& [k, v] : st.keyvals) circuit_.params[k] = resolve(v, st.line);
          break;
        case StmtKind::model:
          models_.push_back(&st);
          break;
        case StmtKind::tran: {
          TranSpec t{resolve(st.values[0], st.line), resolve(st.values[1], st.line)};
          if (!(t.step > 0) || !(t.stop > t.step))
            throw ElaborationError("line " + std::to_string(st.line) + ": .tran needs 0 < step < stop");
          circuit_.analyses.emplace_back(t);
          break;
        }
        case StmtKind::op:
          circuit_.analyses.emplace_back(OpSpec{});
          break;
        case StmtKind::nodeset:
          nodesets_.push_back(&st);
          break;
        default:
          if (open)
            open->body.push_back(&st);
          else
            top_.push_back(&st);
      }
    }
    if (open) throw ElaborationError("missing .ends for subcircuit '" + open->header->name + "'");
    // Models after params so that model values may reference parameters.
    for (const Statement* st : models_) {
      const std::string key = lower(st->name);
      circuit_.models[key] = model_from_statement(*st, circuit_.params);
    }
  }

  int intern(const std::string& name) {
    auto [it, inserted] = node_index_.emplace(name, static_cast<int>(circuit_.nodes.size()));
    if (inserted) circuit_.nodes.push_back(name);
    return it->second;
  }

  std::string map_node(const std::string& local, const std::string& prefix,
                       const std::map<std::string, std::string>& ports) const {
    if (is_ground(local)) return "0";
    if (auto it = ports.find(local); it != ports.end()) return it->second;
    return prefix + local;
  }

  void expand(const std::vector<const Statement*>& body, const std::string& prefix,
              const std::map<std::string, std::string>& ports, int depth) {
    if (depth > 32) throw ElaborationError("subcircuit nesting too deep (recursive definition?)");
    for (const Statement* st : body) {
      const std::string where = "line " + std::to_string(st->line);
      if (st->kind == StmtKind::instance) {
        auto it = subckts_.find(st->ref);
        if (it == subckts_.end()) throw ElaborationError(where + ": undefined subcircuit '" + st->ref + "'");
        const auto& def = it->second;
        if (def.header->nodes.size() != st->nodes.size())
          throw ElaborationError(where + ": instance '" + st->name + "' has " + std::to_string(st->nodes.size()) +
                                 " nodes, subcircuit expects " + std::to_string(def.header->nodes.size()));
        std::map<std::string, std::string> inner;
        for (std::size_t i = 0; i < st->nodes.size(); ++i)
          inner[def.header->nodes[i]] = map_node(st->nodes[i], prefix, ports);
        expand(def.body, prefix + st->name + ".", inner, depth + 1);
        continue;
      }
      Device d;
      d.name = prefix + st->name;
      for (const auto& n : st->nodes) d.nodes.push_back(intern(map_node(n, prefix, ports)));
      switch (st->kind) {
        case StmtKind::resistor:
          d.kind = DeviceKind::resistor;
          d.value = resolve(st->values[0], st->line);
          if (!(d.value > 0)) throw ElaborationError(where + ": resistance must be > 0");
          break;
        case StmtKind::capacitor:
          d.kind = DeviceKind::capacitor;
          d.value = resolve(st->values[0], st->line);
          if (!(d.value >= 0)) throw ElaborationError(where + ": capacitance must be >= 0");
          break;
        case StmtKind::vsource: {
          d.kind = DeviceKind::vsource;
          std::vector<double> v;
          for (const auto& x : st->values) v.push_back(resolve(x, st->line));
          if (st->wave == WaveKind::dc) {
            d.wave = Waveform::dc(v[0]);
          } else if (st->wave == WaveKind::pulse) {
            d.wave = Waveform::make_pulse(v[0], v[1], v[2], v[3], v[4], v[5], v[6]);
          } else {
            std::vector<std::pair<double, double>> pts;
            for (std::size_t i = 0; i + 1 < v.size(); i += 2) pts.emplace_back(v[i], v[i + 1]);
            d.wave = Waveform::pwl(std::move(pts));
          }
          validate(d.wave, where);
          break;
        }
        case StmtKind::mosfet: {
          d.kind = DeviceKind::mosfet;
          d.model = st->ref;
          if (!circuit_.models.count(d.model))
            throw ElaborationError(where + ": undefined model '" + d.model + "'");
          d.l = kDefaultLength;
          bool have_w = false;
          for (const auto& [k, v] : st->keyvals) {
            if (k == "w") {
              d.w = resolve(v, st->line);
              have_w = true;
            } else {
              d.l = resolve(v, st->line);
            }
          }
          if (!have_w) throw ElaborationError(where + ": MOSFET '" + d.name + "' needs W");
          if (!(d.w > 0) || !(d.l > 0)) throw ElaborationError(where + ": MOSFET W and L must be > 0");
          break;
        }
        default:
          throw ElaborationError(where + ": statement not allowed here");
      }
      if (!names_.insert(d.name).second)
        throw ElaborationError(where + ": duplicate device name '" + d.name + "'");
      circuit_.devices.push_back(std::move(d));
    }
  }

  void finish() {
    for (const Statement* st : nodesets_) {
      for (const auto& [n, v] : st->keyvals) {
        const std::string name = is_ground(n) ? "0" : n;
        if (!node_index_.count(name))
          throw ElaborationError("line " + std::to_string(st->line) + ": .nodeset on unknown node '" + n + "'");
        circuit_.nodesets[name] = resolve(v, st->line);
      }
    }
    std::vector<int> uses(circuit_.nodes.size(), 0);
    for (const auto& d : circuit_.devices)
      for (int n : d.nodes) ++uses[static_cast<std::size_t>(n)];
    for (std::size_t i = 1; i < uses.size(); ++i)
      if (uses[i] == 1) circuit_.warnings.push_back("node '" + circuit_.nodes[i] + "' has only one connection");
  }

  const RawNetlist& raw_;
  Circuit circuit_;
  std::vector<const Statement*> top_;
  std::vector<const Statement*> models_;
  std::vector<const Statement*> nodesets_;
  std::map<std::string, SubcktDef> subckts_;
  std::unordered_map<std::string, int> node_index_;
  std::set<std::string> names_;
};

inline ModelCard model_from_statement(const Statement& st, const std::map<std::string, double>& params) {
  const auto defaults = default_model_cards();
  ModelCard card = st.ref == "pmos" ? defaults.pch : defaults.nch;
  for (const auto& [k, v] : st.keyvals) {
    double x = 0;
    if (v.number) {
      x = *v.number;
    } else {
      auto it = params.find(v.param);
      if (it == params.end())
        throw ElaborationError("line " + std::to_string(st.line) + ": undefined parameter '" + v.param + "'");
      x = it->second;
    }
    if (k == "type" || k == "level") continue;
    if (!set_model_param(card, k, x))
      throw ElaborationError("line " + std::to_string(st.line) + ": unknown model parameter '" + k + "'");
  }
  validate(card, st.name);
  return card;
}

}  // namespace detail

// Expands subcircuits (hierarchical names joined by '.'), substitutes
// parameters and checks every Circuit invariant.
inline Circuit elaborate(const RawNetlist& raw) { return detail::Elaborator(raw).run(); }

inline Circuit parse_circuit(std::string_view source) { return elaborate(parse(source)); }

// `.model` line for one card, every parameter spelled out.
inline std::string model_line(const std::string& name, const ModelCard& m) {
  std::string s = ".model " + name + (m.polarity == Polarity::n ? " nmos" : " pmos");
  for (const auto& [key, member] : kModelParams) s += " " + std::string(key) + "=" + format_number(m.*member);
  return s;
}

// Source value text: `DC v`, `PULSE(...)` or `PWL(...)`, one PWL pair per
// continuation line.
inline std::string waveform_text(const Waveform& w) {
  if (w.kind == WaveKind::dc) return "DC " + format_number(w.level);
  std::string s;
  if (w.kind == WaveKind::pulse) {
    s = "PULSE(";
    for (std::size_t i = 0; i < 7; ++i) s += (i ? " " : "") + format_number(w.pulse[i]);
  } else {
    s = "PWL(";
    bool first = true;
    for (const auto& [t, v] : w.points) {
      s += (first ? "" : "\n+ ") + format_number(t) + " " + format_number(v);
      first = false;
    }
  }
  return s + ")";
}

// Canonical flat netlist text. Parsing and elaborating the result yields a
// Circuit equal to `c`.
inline std::string to_netlist(const Circuit& c) {
  std::string out = c.title + "\n";
  for (const auto& [k, v] : c.params) out += ".param " + k + "=" + format_number(v) + "\n";
  for (const auto& [name, card] : c.models) out += model_line(name, card) + "\n";
  for (const auto& d : c.devices) {
    std::string line;
    auto nodes = [&] {
      std::string s;
      for (int n : d.nodes) s += " " + c.nodes[static_cast<std::size_t>(n)];
      return s;
    };
    switch (d.kind) {
      case DeviceKind::resistor:
        line = "R " + d.name + nodes() + " " + format_number(d.value);
        break;
      case DeviceKind::capacitor:
        line = "C " + d.name + nodes() + " " + format_number(d.value);
        break;
      case DeviceKind::vsource:
        line = "V " + d.name + nodes() + " " + waveform_text(d.wave);
        break;
      case DeviceKind::mosfet:
        line = "M " + d.name + nodes() + " " + d.model + " W=" + format_number(d.w) + " L=" + format_number(d.l);
        break;
    }
    out += line + "\n";
  }
  for (const auto& [n, v] : c.nodesets) out += ".nodeset v(" + n + ")=" + format_number(v) + "\n";
  for (const auto& a : c.analyses) {
    if (const auto* t = std::get_if<TranSpec>(&a))
      out += ".tran " + format_number(t->step) + " " + format_number(t->stop) + "\n";
    else
      out += ".op\n";
  }
  out += ".end\n";
  return out;
}

// Reads every `.model` block of a model library: netlist dialect without the
// title line, other statements ignored. Keys are lower-cased model names.
inline std::map<std::string, ModelCard> load_model_cards(std::string_view text) {
  const RawNetlist raw = parse(text, false);
  std::map<std::string, double> params;
  for (const auto& st : raw.statements)
    if (st.kind == StmtKind::param)
      for (const auto& [k, v] : st.keyvals)
        if (v.number) params[k] = *v.number;
  std::map<std::string, ModelCard> out;
  for (const auto& st : raw.statements)
    if (st.kind == StmtKind::model) out[detail::lower(st.name)] = detail::model_from_statement(st, params);
  return out;
}

}  // namespace cgsim
