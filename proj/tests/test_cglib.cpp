#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <regex>

#include "bench_oracles.hpp"
#include "cgsim/cglib.hpp"
#include "cgsim/engine.hpp"
#include "cgsim/metrics.hpp"

using namespace cgsim;

namespace {

std::string header(const SchemeSpec& s) {
  return "t\n" + model_line("nch", s.models.nch) + "\n" + model_line("pch", s.models.pch) + "\n";
}

// name -> W of every M card in a subcircuit.
std::map<std::string, double> widths_of(const Subcircuit& sub) {
  std::map<std::string, double> out;
  static const std::regex card(R"(^M(\S+) .* W=(\S+) L=\S+$)");
  std::istringstream in(sub.text);
  for (std::string line; std::getline(in, line);) {
    std::smatch m;
    if (std::regex_match(line, m, card)) out[m[1]] = *parse_number(m[2].str());
  }
  return out;
}

const char* core_name(Scheme s) { return s == Scheme::proposed_cg ? "cg_proposed" : "cg_nc2mos"; }

// Gating core alone: clock on clk, Comp held at a DC level.
Trace run_core(Scheme sc, double comp, double tstop = 2e-9) {
  SchemeSpec s;
  s.scheme = sc;
  std::string t = header(s) + build_gate_core(sc, s.widths).text;
  t += "Vdd vdd 0 DC 1.1\nVclk clk 0 " + waveform_text(clock_waveform(s)) + "\n";
  t += "Vc comp 0 DC " + format_number(comp) + "\n";
  t += std::string("XG clk comp gclk vdd ") + core_name(sc) + "\n";
  SimConfig cfg;
  cfg.tstop = tstop;
  return transient(parse_circuit(t), cfg);
}

double supply_current_at(const std::string& text, double a, double b) {
  std::string t = text + "Vdd vdd 0 DC 1.1\nVa a 0 DC " + format_number(a) + "\nVb b 0 DC " + format_number(b) + "\n";
  t += "XG a b y yb vdd gate\n";
  const Circuit c = parse_circuit(t);
  const auto op = dc_operating_point(c, SimConfig{});
  const auto it = std::find(op.source_names.begin(), op.source_names.end(), "Vdd");
  return op.source_currents[static_cast<std::size_t>(it - op.source_names.begin())];
}

std::string renamed(std::string text, const std::string& from) {
  return std::regex_replace(text, std::regex(".subckt " + from), ".subckt gate");
}

}  // namespace

namespace cgsim {
void PrintTo(Scheme s, std::ostream* os) { *os << scheme_name(s); }
}  // namespace cgsim

TEST(Topology, TransistorCounts) {
  EXPECT_EQ(build_msff().transistors, 20);
  EXPECT_EQ(build_msff({}, true).transistors, 20);
  EXPECT_EQ(build_comp_generator().transistors, 8);
  EXPECT_EQ(build_gate_core(Scheme::proposed_cg, {}).transistors, 5);
  EXPECT_EQ(build_gate_core(Scheme::nc2mos_cg, {}).transistors, 5);
  const auto lector = build_lector_and();
  EXPECT_EQ(lector.transistors, 8);
  const auto w = widths_of(lector);
  EXPECT_EQ(std::count_if(w.begin(), w.end(), [](const auto& kv) { return kv.first.front() == 'i'; }), 2);
}

TEST(Topology, CoreWidthsFollowTableOne) {
  for (Scheme sc : {Scheme::proposed_cg, Scheme::nc2mos_cg}) {
    const auto w = widths_of(build_gate_core(sc, {}));
    ASSERT_EQ(w.size(), 5u);
    EXPECT_DOUBLE_EQ(w.at("P1"), 0.2e-6);
    EXPECT_DOUBLE_EQ(w.at("P2"), 1e-6);
    EXPECT_DOUBLE_EQ(w.at("N1"), 1e-6);
    EXPECT_DOUBLE_EQ(w.at("N2"), 0.2e-6);
    EXPECT_DOUBLE_EQ(w.at("N3"), 0.4e-6);
  }
  EXPECT_THROW(build_gate_core(Scheme::lb_cg, {}), UsageError);
}

TEST(Topology, StackOrder) {
  // N3 source on ground in the proposed core, on the inner node in NC2MOS.
  EXPECT_NE(build_gate_core(Scheme::proposed_cg, {}).text.find("MN3 mid comp 0 nch"), std::string::npos);
  EXPECT_NE(build_gate_core(Scheme::nc2mos_cg, {}).text.find("MN3 NN2 comp NN1 nch"), std::string::npos);
  EXPECT_NE(build_gate_core(Scheme::nc2mos_cg, {}).text.find("MN1 NN1 clk 0 nch"), std::string::npos);
}

TEST(CompGenerator, TruthTable) {
  SchemeSpec s;
  for (int a : {0, 1})
    for (int b : {0, 1}) {
      std::string t = header(s) + build_comp_generator().text;
      t += "Vdd vdd 0 DC 1.1\nVa a 0 DC " + format_number(1.1 * a) + "\nVb b 0 DC " + format_number(1.1 * b) + "\n";
      t += "X1 a b y vdd xor2\n";
      const Circuit c = parse_circuit(t);
      const double y = dc_operating_point(c, SimConfig{}).voltage(c, "y");
      if (a != b) {
        EXPECT_GT(y, 0.9 * 1.1) << a << b;
      } else {
        EXPECT_LT(y, 0.1 * 1.1) << a << b;
      }
    }
}

TEST(GateCore, CompLowHoldsGatedClockLow) {
  for (Scheme sc : {Scheme::proposed_cg, Scheme::nc2mos_cg}) {
    const Trace tr = run_core(sc, 0.0);
    EXPECT_EQ(crossings(tr, "gclk", 0.55).size(), 0u) << scheme_name(sc);
  }
}

TEST(GateCore, CompHighFollowsClock) {
  for (Scheme sc : {Scheme::proposed_cg, Scheme::nc2mos_cg}) {
    const Trace tr = run_core(sc, 1.1);
    const auto clk = crossings(tr, "clk", 0.55);
    const auto g = crossings(tr, "gclk", 0.55);
    ASSERT_EQ(clk.size(), 20u);
    ASSERT_EQ(g.size(), clk.size()) << scheme_name(sc);
    for (std::size_t i = 0; i < g.size(); ++i) {
      EXPECT_EQ(g.items[i].dir, clk.items[i].dir);
      EXPECT_GT(g.items[i].time, clk.items[i].time);
      EXPECT_LT(g.items[i].time - clk.items[i].time, 50e-12);
    }
  }
}

TEST(GateCore, EvaluatedNodeIsAStrongZero) {
  for (Scheme sc : {Scheme::proposed_cg, Scheme::nc2mos_cg}) {
    SchemeSpec s;
    std::string t = header(s) + build_gate_core(sc, s.widths).text;
    t += "Vdd vdd 0 DC 1.1\nVclk clk 0 DC 1.1\nVc comp 0 DC 1.1\n";
    t += std::string("XG clk comp gclk vdd ") + core_name(sc) + "\n";
    const Circuit c = parse_circuit(t);
    const auto op = dc_operating_point(c, SimConfig{});
    EXPECT_LT(op.voltage(c, sc == Scheme::proposed_cg ? "XG.X" : "XG.NN2"), 0.05);
    EXPECT_GT(op.voltage(c, "gclk"), 1.05);
  }
}

// With Comp low the proposed core's X node meets a discharged inner node
// through the clocked device; in NC2MOS the off Comp device isolates X.
TEST(GateCore, ChargeSharingFollowsStackOrder) {
  auto first_cycle_droop = [](Scheme sc, const char* x) {
    const Trace tr = run_core(sc, 0.0, 1e-9);
    const auto& v = tr.voltage(x);
    return 1.1 - *std::min_element(v.begin(), v.begin() + 200);
  };
  const double proposed = first_cycle_droop(Scheme::proposed_cg, "XG.X");
  const double nc2mos = first_cycle_droop(Scheme::nc2mos_cg, "XG.NN2");
  EXPECT_GT(proposed, 0.05);
  EXPECT_LT(nc2mos, 1e-3);
  // Pumped up once, the inner node stops drawing charge from X.
  const Trace tr = run_core(Scheme::proposed_cg, 0.0);
  const auto& v = tr.voltage("XG.X");
  EXPECT_LT(1.1 - *std::min_element(v.end() - 200, v.end()), 0.01);
}

// Without barrier lowering in the device model an off pull-down stack fixes
// the NAND leakage at (0,0) and the LCTs cannot cut it further; what they do
// add is a small output droop that opens the inverter's pMOS a little.
TEST(Lector, ZeroInputLeakageAgainstStaticAnd) {
  SchemeSpec s;
  const std::string lector = header(s) + renamed(build_lector_and().text, "lector_and");
  const double il = supply_current_at(lector, 0, 0);
  const double is = supply_current_at(header(s) + renamed(build_static_and().text, "static_and"), 0, 0);
  EXPECT_GT(il, 0);
  EXPECT_GT(il, is);
  EXPECT_LT(il, 1.5 * is);
  std::string t = lector + "Vdd vdd 0 DC 1.1\nVa a 0 DC 0\nVb b 0 DC 0\nXG a b y yb vdd gate\n";
  const Circuit c = parse_circuit(t);
  const double yb = dc_operating_point(c, SimConfig{}).voltage(c, "yb");
  EXPECT_LT(yb, 1.1 - 1e-3);
  EXPECT_GT(yb, 1.1 - 0.05);
}

TEST(Lector, AndTruthTable) {
  SchemeSpec s;
  for (int a : {0, 1})
    for (int b : {0, 1}) {
      std::string t = header(s) + renamed(build_lector_and().text, "lector_and");
      t += "Vdd vdd 0 DC 1.1\nVa a 0 DC " + format_number(1.1 * a) + "\nVb b 0 DC " + format_number(1.1 * b) + "\n";
      t += "XG a b y yb vdd gate\n";
      const Circuit c = parse_circuit(t);
      const auto op = dc_operating_point(c, SimConfig{});
      EXPECT_NEAR(op.voltage(c, "y"), a && b ? 1.1 : 0.0, 0.11) << a << b;
    }
}

TEST(LbCg, MasterClockGatedSlaveClockFree) {
  for (double comp : {0.0, 1.1}) {
    SchemeSpec s;
    std::string t = header(s) + build_msff(s.cells, true).text + build_lector_and(s.cells).text;
    t += "Vdd vdd 0 DC 1.1\nVclk clock 0 " + waveform_text(clock_waveform(s)) + "\n";
    t += "Vc comp 0 DC " + format_number(comp) + "\nVd d 0 DC 0\n";
    t += "XG clock comp gclk gclkb vdd lector_and\nXFF d clock q vdd gclkb gclk msff_ext\n";
    t += ".nodeset v(XFF.m)=1.1 v(XFF.mo)=0 v(XFF.s)=0 v(XFF.so)=1.1\n";
    SimConfig cfg;
    cfg.tstop = 2e-9;
    const Trace tr = transient(parse_circuit(t), cfg);
    EXPECT_EQ(crossings(tr, "XFF.clki", 0.55).size(), 20u);
    EXPECT_EQ(crossings(tr, "gclk", 0.55).size(), comp > 0 ? 20u : 0u);
    if (comp == 0) {
      const auto& g = tr.voltage("gclk");
      EXPECT_LT(*std::max_element(g.begin(), g.end()), 0.11);
    }
  }
}

TEST(Bench, DefaultPeriods) {
  const SchemeSpec s;
  EXPECT_DOUBLE_EQ(s.clock_period(), 200e-12);
  EXPECT_NEAR(s.bit_period(), 4.854e-9, 0.001e-9);
  EXPECT_NO_THROW(s.validate());
}

TEST(Bench, RejectsBadSpecs) {
  SchemeSpec s;
  s.f_data = 6e9;
  EXPECT_THROW(s.validate(), UsageError);
  s = {};
  s.edge = 60e-12;
  EXPECT_THROW(s.validate(), UsageError);
  s = {};
  s.widths.n3 = 0;
  EXPECT_THROW(s.validate(), UsageError);
  s = {};
  s.pattern = {0, 2};
  EXPECT_THROW(s.validate(), UsageError);
}

TEST(Bench, NoGatingProbeAliases) {
  SchemeSpec s;
  s.scheme = Scheme::no_gating;
  const BenchHandle h = build_bench(s);
  EXPECT_EQ(h.probes.comp, "0");
  EXPECT_EQ(h.probes.gated_clock, h.probes.clock);
  EXPECT_TRUE(h.gate_node.empty());
}

TEST(Bench, ProbesExistAndOneSupply) {
  for (Scheme sc : kAllSchemes) {
    SchemeSpec s;
    s.scheme = sc;
    const BenchHandle h = build_bench(s);
    for (const auto& n : h.probe_nodes()) {
      if (n == "0") continue;
      EXPECT_GE(h.circuit.node(n), 1) << scheme_name(sc) << " " << n;
    }
    const auto supplies = std::count_if(h.circuit.devices.begin(), h.circuit.devices.end(), [&](const Device& d) {
      return d.kind == DeviceKind::vsource && d.name == h.supply;
    });
    EXPECT_EQ(supplies, 1);
  }
}

TEST(Bench, SeedDeterminesPattern) {
  SchemeSpec a, b;
  EXPECT_EQ(build_bench(a).netlist, build_bench(b).netlist);
  b.seed = 0x33;
  EXPECT_NE(build_bench(a).netlist, build_bench(b).netlist);
  EXPECT_NE(lfsr_bits(0x5A, 64), lfsr_bits(0x33, 64));
}

TEST(Lfsr, MaximalPeriod) {
  const auto bits = lfsr_bits(1, 254);
  EXPECT_TRUE(std::equal(bits.begin(), bits.begin() + 127, bits.begin() + 127));
  for (int p = 1; p < 127; ++p)
    EXPECT_FALSE(std::equal(bits.begin(), bits.begin() + 127, bits.begin() + p)) << p;
  EXPECT_EQ(std::count(bits.begin(), bits.begin() + 127, 1), 64);
}

TEST(Stimulus, DataChangesOnFallingEdges) {
  const SchemeSpec s;
  const Stimulus st = default_stimulus(s);
  for (const auto& c : oracle::data_changes(s)) {
    // The oracle's edge times are summed, not multiplied; allow for rounding.
    EXPECT_NEAR(eval_waveform(st.data, c.start), c.value ? 0.0 : 1.1, 1e-6);
    EXPECT_NEAR(eval_waveform(st.data, c.end), c.value ? 1.1 : 0.0, 1e-6);
    EXPECT_NEAR(eval_waveform(st.clock, c.start), 1.1, 1e-6);
  }
}

class SchemeBench : public ::testing::TestWithParam<Scheme> {};

// One full 64-bit run per scheme, checked against the ideal register.
TEST_P(SchemeBench, MatchesRegisterAndGatesQuietWindows) {
  SchemeSpec s;
  s.scheme = GetParam();
  const BenchHandle h = build_bench(s);
  const Trace tr = transient(h.circuit, h.sim_config());
  const auto reg = oracle::check_register(s, tr, h.probes.q);
  EXPECT_EQ(reg.mismatches, 0u);
  EXPECT_GT(reg.edges, 64u * 24u);

  const auto gclk = crossings(tr, h.probes.gated_clock, s.vdd / 2);
  const double T = s.clock_period();
  for (const auto& w : oracle::quiet_windows(s, tr.times.back())) {
    const auto expect = s.scheme == Scheme::no_gating ? 2 * static_cast<std::size_t>(std::llround((w.t2 - w.t1) / T)) : 0u;
    EXPECT_EQ(gclk.count_in(w.t1, w.t2), expect) << w.t1;
  }
  if (s.scheme != Scheme::no_gating) {
    ASSERT_GT(reg.captures, 0u);
    EXPECT_LE(static_cast<double>(gclk.size()) / static_cast<double>(reg.captures), 4.0);
  }
}

// The ratioed master write must still win against the keeper at the low
// end of the supply sweep.
TEST_P(SchemeBench, CapturesAtSupplyGridEnds) {
  for (double vdd : {0.8, 1.3}) {
    SchemeSpec s;
    s.scheme = GetParam();
    s.vdd = vdd;
    const BenchHandle h = build_bench(s);
    const Trace tr = transient(h.circuit, h.sim_config());
    EXPECT_EQ(oracle::check_register(s, tr, h.probes.q).mismatches, 0u) << vdd;
  }
}

INSTANTIATE_TEST_SUITE_P(AllSchemes, SchemeBench, ::testing::ValuesIn(kAllSchemes),
                         [](const auto& info) { return std::string(scheme_name(info.param)); });
