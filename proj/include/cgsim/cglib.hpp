#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cgsim/devices.hpp"
#include "cgsim/engine.hpp"
#include "cgsim/error.hpp"
#include "cgsim/netlist.hpp"

namespace cgsim {

enum class Scheme { no_gating, nc2mos_cg, lb_cg, proposed_cg };

inline constexpr std::array<Scheme, 4> kAllSchemes{Scheme::no_gating, Scheme::nc2mos_cg, Scheme::lb_cg,
                                                   Scheme::proposed_cg};

inline std::string_view scheme_name(Scheme s) {
  switch (s) {
    case Scheme::no_gating: return "no_gating";
    case Scheme::nc2mos_cg: return "nc2mos_cg";
    case Scheme::lb_cg: return "lb_cg";
    case Scheme::proposed_cg: return "proposed_cg";
  }
  return "?";
}

// Accepts the canonical names plus the short forms without "_cg".
inline std::optional<Scheme> parse_scheme(std::string_view text) {
  const std::string t = detail::lower(text);
  for (Scheme s : kAllSchemes) {
    const std::string_view n = scheme_name(s);
    if (t == n) return s;
    if (n.ends_with("_cg") && t == n.substr(0, n.size() - 3)) return s;
  }
  return std::nullopt;
}

// Widths of the five gating-core transistors.
struct GateWidths {
  double p1 = 0.2e-6;  // precharge
  double p2 = 1.0e-6;  // output inverter pull-up
  double n1 = 1.0e-6;  // clock-gated evaluation
  double n2 = 0.2e-6;  // output inverter pull-down
  double n3 = 0.4e-6;  // comp-gated evaluation
  bool operator==(const GateWidths&) const = default;
};

// One inverter or pass device pair: n and p widths plus a shared length.
struct PairSize {
  double wn;
  double wp;
  double l = kDefaultLength;
  bool operator==(const PairSize&) const = default;
};

// Transistor sizing of the flip-flop, comparator and LECTOR gate.
struct CellSizing {
  PairSize clock_inv{0.4e-6, 0.8e-6};
  // Long-channel input stage and comparator delay data into the master,
  // pushing hold negative.
  PairSize input_inv{0.2e-6, 0.4e-6, 0.3e-6};
  PairSize pass_gate{0.4e-6, 0.8e-6};
  PairSize store_inv{0.4e-6, 0.8e-6};
  PairSize keeper_inv{0.2e-6, 0.2e-6, 1.0e-6};
  PairSize output_inv{0.4e-6, 0.8e-6};
  PairSize xor_inv{0.4e-6, 0.8e-6};
  PairSize xor_pass{0.2e-6, 0.4e-6, 0.4e-6};
  PairSize nand{0.8e-6, 0.8e-6};
  PairSize lct{0.8e-6, 0.8e-6};
  PairSize and_inv{0.4e-6, 0.8e-6};
  bool operator==(const CellSizing&) const = default;
};

struct SchemeSpec {
  Scheme scheme = Scheme::proposed_cg;
  double vdd = 1.1;
  double f_clk = 5e9;
  double f_data = 0.206e9;
  double edge = 20e-12;
  GateWidths widths;
  CellSizing cells;
  std::vector<int> pattern;  // explicit data bits; empty = LFSR
  std::uint32_t seed = 0x5A;
  int bits = 64;
  double temp = 300.0;
  double tstep = 1e-12;
  Integrator integrator = Integrator::trapezoidal;
  DefaultCards models = default_model_cards();

  double clock_period() const { return 1.0 / f_clk; }
  double bit_period() const { return 1.0 / f_data; }

  void validate() const {
    if (!(vdd > 0)) throw UsageError("vdd must be > 0");
    if (!(f_clk > f_data && f_data > 0)) throw UsageError("need f_clk > f_data > 0");
    if (!(edge > 0 && edge < clock_period() / 4)) throw UsageError("need 0 < edge < clock period / 4");
    for (double w : {widths.p1, widths.p2, widths.n1, widths.n2, widths.n3})
      if (!(w > 0)) throw UsageError("gate widths must be > 0");
    if (!(temp > 0)) throw UsageError("temperature must be > 0 K");
    if (pattern.empty() && (bits < 1 || (seed & 0x7F) == 0))
      throw UsageError("LFSR needs bits >= 1 and a nonzero 7-bit seed");
    for (int b : pattern)
      if (b != 0 && b != 1) throw UsageError("data pattern bits must be 0 or 1");
    cgsim::validate(models.nch, "nch");
    cgsim::validate(models.pch, "pch");
  }
};

// Fibonacci LFSR with taps x^7 + x^6 + 1; emits the feedback bit each step.
inline std::vector<int> lfsr_bits(std::uint32_t seed, int n) {
  std::uint32_t s = seed & 0x7F;
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const std::uint32_t bit = ((s >> 6) ^ (s >> 5)) & 1u;
    s = ((s << 1) | bit) & 0x7F;
    out.push_back(static_cast<int>(bit));
  }
  return out;
}

inline std::vector<int> data_bits(const SchemeSpec& s) { return s.pattern.empty() ? lfsr_bits(s.seed, s.bits) : s.pattern; }

// A `.subckt` block in the netlist dialect.
struct Subcircuit {
  std::string name;
  std::vector<std::string> ports;
  std::string text;
  int transistors = 0;
};

namespace detail {

class SubcktWriter {
 public:
  SubcktWriter(std::string name, std::vector<std::string> ports) : sub_{std::move(name), std::move(ports), {}, 0} {
    sub_.text = ".subckt " + sub_.name;
    for (const auto& p : sub_.ports) sub_.text += " " + p;
    sub_.text += "\n";
  }
  void mos(const std::string& name, const std::string& d, const std::string& g, const std::string& s, bool nmos,
           double w, double l = kDefaultLength) {
    sub_.text += "M" + name + " " + d + " " + g + " " + s + (nmos ? " nch" : " pch") + " W=" + format_number(w) +
                 " L=" + format_number(l) + "\n";
    ++sub_.transistors;
  }
  void inverter(const std::string& name, const std::string& in, const std::string& out, const PairSize& sz) {
    mos(name + "p", out, in, "vdd", false, sz.wp, sz.l);
    mos(name + "n", out, in, "0", true, sz.wn, sz.l);
  }
  // Transmission gate a <-> b, conducting when ng is high and pg is low.
  void pass_gate(const std::string& name, const std::string& a, const std::string& b, const std::string& ng,
                 const std::string& pg, const PairSize& sz) {
    mos(name + "n", a, ng, b, true, sz.wn, sz.l);
    mos(name + "p", a, pg, b, false, sz.wp, sz.l);
  }
  Subcircuit finish() {
    sub_.text += ".ends\n";
    return std::move(sub_);
  }

 private:
  Subcircuit sub_;
};

}  // namespace detail

// Transmission-gate master-slave D flip-flop, positive-edge triggered, 20
// transistors. With external_master the master pass gate is driven by the
// ports mn (n side) and mp (p side); the slave still runs off clk.
inline Subcircuit build_msff(const CellSizing& sz = {}, bool external_master = false) {
  std::vector<std::string> ports{"d", "clk", "q", "vdd"};
  if (external_master) ports.insert(ports.end(), {"mn", "mp"});
  detail::SubcktWriter w(external_master ? "msff_ext" : "msff", ports);
  w.inverter("c1", "clk", "clkb", sz.clock_inv);
  w.inverter("c2", "clkb", "clki", sz.clock_inv);
  w.inverter("in", "d", "d1", sz.input_inv);
  if (external_master)
    w.pass_gate("tm", "d1", "m", "mn", "mp", sz.pass_gate);
  else
    w.pass_gate("tm", "d1", "m", "clkb", "clki", sz.pass_gate);
  w.inverter("mf", "m", "mo", sz.store_inv);
  w.inverter("mb", "mo", "m", sz.keeper_inv);
  w.pass_gate("ts", "mo", "s", "clki", "clkb", sz.pass_gate);
  w.inverter("sf", "s", "so", sz.store_inv);
  w.inverter("sb", "so", "s", sz.keeper_inv);
  w.inverter("o", "so", "q", sz.output_inv);
  return w.finish();
}

// y = XOR(a, b): two inverters and two transmission gates.
inline Subcircuit build_comp_generator(const CellSizing& sz = {}) {
  detail::SubcktWriter w("xor2", {"a", "b", "y", "vdd"});
  w.inverter("ia", "a", "ab", sz.xor_inv);
  w.inverter("ib", "b", "bb", sz.xor_inv);
  w.pass_gate("t0", "b", "y", "ab", "a", sz.xor_pass);
  w.pass_gate("t1", "bb", "y", "a", "ab", sz.xor_pass);
  return w.finish();
}

// Precharge / evaluate gating core with an inverting output stage.
// proposed: X - N1(clk) - mid - N3(comp) - ground.
// nc2mos:   NN2 - N3(comp) - NN1 - N1(clk) - ground.
inline Subcircuit build_gate_core(Scheme scheme, const GateWidths& gw) {
  if (scheme != Scheme::proposed_cg && scheme != Scheme::nc2mos_cg)
    throw UsageError("gate core exists only for proposed_cg and nc2mos_cg");
  const bool proposed = scheme == Scheme::proposed_cg;
  detail::SubcktWriter w(proposed ? "cg_proposed" : "cg_nc2mos", {"clk", "comp", "gclk", "vdd"});
  const std::string x = proposed ? "X" : "NN2";
  const std::string mid = proposed ? "mid" : "NN1";
  w.mos("P1", x, "clk", "vdd", false, gw.p1);
  if (proposed) {
    w.mos("N1", x, "clk", mid, true, gw.n1);
    w.mos("N3", mid, "comp", "0", true, gw.n3);
  } else {
    w.mos("N3", x, "comp", mid, true, gw.n3);
    w.mos("N1", mid, "clk", "0", true, gw.n1);
  }
  w.mos("P2", "gclk", x, "vdd", false, gw.p2);
  w.mos("N2", "gclk", x, "0", true, gw.n2);
  return w.finish();
}

// LECTOR NAND (yb) with two leakage-control transistors, each gated by the
// other's source node, followed by an inverter (y = AND(a, b)).
inline Subcircuit build_lector_and(const CellSizing& sz = {}) {
  detail::SubcktWriter w("lector_and", {"a", "b", "y", "yb", "vdd"});
  w.mos("pa", "n1", "a", "vdd", false, sz.nand.wp);
  w.mos("pb", "n1", "b", "vdd", false, sz.nand.wp);
  w.mos("lp", "yb", "n2", "n1", false, sz.lct.wp);
  w.mos("ln", "yb", "n1", "n2", true, sz.lct.wn);
  w.mos("na", "n2", "a", "n3", true, sz.nand.wn);
  w.mos("nb", "n3", "b", "0", true, sz.nand.wn);
  w.inverter("i", "yb", "y", sz.and_inv);
  return w.finish();
}

// Plain static CMOS NAND + inverter, same ports as build_lector_and.
inline Subcircuit build_static_and(const CellSizing& sz = {}) {
  detail::SubcktWriter w("static_and", {"a", "b", "y", "yb", "vdd"});
  w.mos("pa", "yb", "a", "vdd", false, sz.nand.wp);
  w.mos("pb", "yb", "b", "vdd", false, sz.nand.wp);
  w.mos("na", "yb", "a", "n3", true, sz.nand.wn);
  w.mos("nb", "n3", "b", "0", true, sz.nand.wn);
  w.inverter("i", "yb", "y", sz.and_inv);
  return w.finish();
}

// Named probe nodes of a bench, as circuit node names.
struct Probes {
  std::string data = "data";
  std::string clock = "clock";
  std::string comp = "comp";
  std::string gated_clock = "gclk";
  std::string q = "q";
  bool operator==(const Probes&) const = default;
};

// Source waveforms and initial register state for one bench run.
struct Stimulus {
  Waveform data;
  Waveform clock;
  int q0 = 0;
  double tstop = 0;
};

struct BenchHandle {
  SchemeSpec spec;
  Stimulus stimulus;
  std::string netlist;  // hierarchical source text
  Circuit circuit;
  Probes probes;
  std::string supply = "Vdd";
  std::string gate_node;  // dynamic node of the gating core, empty if none

  std::vector<std::string> probe_nodes() const {
    return {probes.data, probes.clock, probes.comp, probes.gated_clock, probes.q, "vdd"};
  }
  SimConfig sim_config(bool all_nodes = false) const {
    SimConfig cfg;
    cfg.tstep = spec.tstep;
    cfg.tstop = stimulus.tstop;
    cfg.temp = spec.temp;
    cfg.integrator = spec.integrator;
    if (!all_nodes) {
      cfg.save_nodes = probe_nodes();
      if (!gate_node.empty()) cfg.save_nodes.push_back(gate_node);
    }
    return cfg;
  }
};

// Rounds up to a whole number of steps.
inline double whole_steps(double t, double step) { return std::ceil(t / step - 1e-9) * step; }

inline Waveform clock_waveform(const SchemeSpec& s) {
  const double T = s.clock_period();
  return Waveform::make_pulse(0, s.vdd, 0, s.edge, s.edge, T / 2 - s.edge, T);
}

// 50% points of the rising clock edges in [0, tstop].
inline std::vector<double> rising_edges(const SchemeSpec& s, double tstop) {
  std::vector<double> out;
  const double T = s.clock_period();
  for (long k = 0;; ++k) {
    const double t = s.edge / 2 + static_cast<double>(k) * T;
    if (t > tstop) break;
    out.push_back(t);
  }
  return out;
}

// Start of the first falling clock edge at or after t.
inline double next_falling_start(const SchemeSpec& s, double t) {
  const double T = s.clock_period();
  const double k = std::ceil((t - T / 2) / T - 1e-9);
  return T / 2 + std::max(0.0, k) * T;
}

// Data bit k is applied from k / f_data on; each change starts at the next
// falling clock edge so every capture sees a full half period of setup.
inline Stimulus default_stimulus(const SchemeSpec& s) {
  const std::vector<int> bits = data_bits(s);
  const double Tb = s.bit_period();
  std::vector<std::pair<double, double>> pts{{0.0, bits[0] * s.vdd}};
  for (std::size_t k = 1; k < bits.size(); ++k) {
    if (bits[k] == bits[k - 1]) continue;
    const double t0 = next_falling_start(s, static_cast<double>(k) * Tb);
    pts.emplace_back(t0, bits[k - 1] * s.vdd);
    pts.emplace_back(t0 + s.edge, bits[k] * s.vdd);
  }
  Stimulus st;
  st.data = Waveform::pwl(std::move(pts));
  st.clock = clock_waveform(s);
  st.q0 = 0;
  st.tstop = whole_steps(static_cast<double>(bits.size()) * Tb + 2 * s.clock_period(), s.tstep);
  return st;
}

// Data pulse rising with its 50% point at t_rise and falling at t_fall
// (a clipped triangle when the two edges overlap).
inline Waveform data_pulse(const SchemeSpec& s, double t_rise, double t_fall) {
  const double e = s.edge, v = s.vdd;
  const double rs = t_rise - e / 2, fs = t_fall - e / 2;
  if (fs <= rs) return Waveform::dc(0);
  if (fs >= rs + e) return Waveform::pwl({{0, 0}, {rs, 0}, {rs + e, v}, {fs, v}, {fs + e, 0}});
  const double tp = 0.5 * (rs + fs + e);
  return Waveform::pwl({{0, 0}, {rs, 0}, {tp, v * (tp - rs) / e}, {fs + e, 0}});
}

inline Waveform data_step(const SchemeSpec& s, double t_mid) {
  const double rs = t_mid - s.edge / 2;
  return Waveform::pwl({{0, 0}, {rs, 0}, {rs + s.edge, s.vdd}});
}

// Complete test bench for one scheme under the given stimulus.
inline BenchHandle build_bench(const SchemeSpec& s, const Stimulus& st) {
  s.validate();
  BenchHandle h;
  h.spec = s;
  h.stimulus = st;
  const auto num = [](double v) { return format_number(v); };

  std::string text = "cgbench " + std::string(scheme_name(s.scheme)) + "\n";
  text += model_line("nch", s.models.nch) + "\n";
  text += model_line("pch", s.models.pch) + "\n";

  const bool ext = s.scheme == Scheme::lb_cg;
  text += build_msff(s.cells, ext).text;
  if (s.scheme != Scheme::no_gating) text += build_comp_generator(s.cells).text;
  if (s.scheme == Scheme::proposed_cg || s.scheme == Scheme::nc2mos_cg)
    text += build_gate_core(s.scheme, s.widths).text;
  if (ext) text += build_lector_and(s.cells).text;

  text += "Vdd vdd 0 DC " + num(s.vdd) + "\n";
  text += "Vclk clock 0 " + waveform_text(st.clock) + "\n";
  text += "Vdata data 0 " + waveform_text(st.data) + "\n";

  switch (s.scheme) {
    case Scheme::no_gating:
      text += "XFF data clock q vdd msff\n";
      h.probes.comp = "0";
      h.probes.gated_clock = "clock";
      break;
    case Scheme::proposed_cg:
    case Scheme::nc2mos_cg: {
      const bool proposed = s.scheme == Scheme::proposed_cg;
      text += "XCMP data q comp vdd xor2\n";
      text += std::string("XG clock comp gclk vdd ") + (proposed ? "cg_proposed" : "cg_nc2mos") + "\n";
      text += "XFF data gclk q vdd msff\n";
      h.gate_node = proposed ? "XG.X" : "XG.NN2";
      break;
    }
    case Scheme::lb_cg:
      text += "XCMP data q comp vdd xor2\n";
      text += "XG clock comp gclk gclkb vdd lector_and\n";
      text += "XFF data clock q vdd gclkb gclk msff_ext\n";
      break;
  }

  // Register state at t = 0: master holds the incoming bit while its clock
  // is low, otherwise both latches hold q0.
  const bool clock_high = eval_waveform(st.clock, 0) > s.vdd / 2;
  const int d0 = eval_waveform(st.data, 0) > s.vdd / 2 ? 1 : 0;
  const int mval = clock_high ? st.q0 : d0;
  const auto lvl = [&](int b) { return num(b ? s.vdd : 0.0); };
  text += ".nodeset v(XFF.m)=" + lvl(!mval) + " v(XFF.mo)=" + lvl(mval) + " v(XFF.s)=" + lvl(st.q0) +
          " v(XFF.so)=" + lvl(!st.q0) + " v(q)=" + lvl(st.q0) + "\n";
  text += ".tran " + num(s.tstep) + " " + num(st.tstop) + "\n.end\n";

  h.netlist = std::move(text);
  h.circuit = parse_circuit(h.netlist);
  return h;
}

inline BenchHandle build_bench(const SchemeSpec& s) { return build_bench(s, default_stimulus(s)); }

}  // namespace cgsim
