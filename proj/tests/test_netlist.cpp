#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cgsim/netlist.hpp"

using namespace cgsim;

TEST(ParseNumber, EngineeringSuffixes) {
  EXPECT_EQ(parse_number("10k"), 1.0e4);
  EXPECT_EQ(parse_number("0.2u"), 2.0e-7);
  EXPECT_EQ(parse_number("20p"), 20e-12);
  EXPECT_EQ(parse_number("1MEG"), 1e6);
  EXPECT_EQ(parse_number("1m"), 1e-3);
  EXPECT_EQ(parse_number("1M"), 1e-3);
  EXPECT_EQ(parse_number("2Meg"), 2e6);
  EXPECT_EQ(parse_number("-1.5"), -1.5);
  EXPECT_EQ(parse_number("+3e-3"), 3e-3);
  EXPECT_FALSE(parse_number("10x"));
  EXPECT_FALSE(parse_number("1e3k"));
  EXPECT_FALSE(parse_number("k"));
  EXPECT_FALSE(parse_number(""));
}

TEST(ParseNumber, SuffixScalingIsExactPowerOfTen) {
  const std::pair<const char*, double> cases[] = {
      {"f", 1e-15}, {"p", 1e-12}, {"n", 1e-9}, {"u", 1e-6}, {"m", 1e-3}, {"k", 1e3}, {"meg", 1e6}};
  const double one = *parse_number("1");
  for (const auto& [sfx, scale] : cases) {
    const auto v = parse_number(std::string("1") + sfx);
    ASSERT_TRUE(v) << sfx;
    EXPECT_EQ(*v * one, scale) << sfx;
  }
}

TEST(Parse, ResistorWithSuffix) {
  const RawNetlist raw = parse("t\nR1 a 0 10k\n.end");
  EXPECT_EQ(raw.title, "t");
  ASSERT_EQ(raw.statements.size(), 1u);
  const auto& st = raw.statements[0];
  EXPECT_EQ(st.kind, StmtKind::resistor);
  EXPECT_EQ(st.line, 2);
  ASSERT_TRUE(st.values[0].number);
  EXPECT_EQ(*st.values[0].number, 1.0e4);
}

TEST(Parse, MosfetWidthAndLength) {
  const RawNetlist raw = parse("t\nM1 d g s nch W=0.2u L=0.1u\n.end");
  ASSERT_EQ(raw.statements.size(), 1u);
  const auto& st = raw.statements[0];
  EXPECT_EQ(st.kind, StmtKind::mosfet);
  ASSERT_EQ(st.keyvals.size(), 2u);
  EXPECT_EQ(st.keyvals[0].first, "w");
  EXPECT_EQ(*st.keyvals[0].second.number, 2.0e-7);
  EXPECT_EQ(*st.keyvals[1].second.number, 1.0e-7);
}

TEST(Parse, MalformedNumberReportsLine) {
  try {
    parse("t\nR1 a 0 10x\n.end");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2);
    EXPECT_NE(std::string(e.what()).find("malformed number"), std::string::npos);
  }
}

TEST(Parse, UnknownElementLetter) {
  try {
    parse("t\n* comment\nL1 a b 1n\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3);
  }
}

TEST(Parse, ContinuationCommentsCrlfAndCase) {
  const char* src =
      "title line\r\n"
      "* a comment\r\n"
      "V1 in 0 PULSE(0 1.1 0\r\n"
      "+ 20p 20p 80p 200p)\r\n"
      ".TRAN 1P 5N\r\n"
      ".END\r\n"
      "R9 this is ignored\r\n";
  const RawNetlist raw = parse(src);
  EXPECT_EQ(raw.title, "title line");
  ASSERT_EQ(raw.statements.size(), 2u);
  EXPECT_EQ(raw.statements[0].wave, WaveKind::pulse);
  EXPECT_EQ(raw.statements[0].values.size(), 7u);
  EXPECT_EQ(raw.statements[1].kind, StmtKind::tran);
}

TEST(Parse, PulseArity) { EXPECT_THROW(parse("t\nV1 a 0 PULSE(0 1 0 1p)\n"), ParseError); }

TEST(Elaborate, SubcircuitNamesAreHierarchical) {
  const char* src =
      "t\n"
      ".model nch nmos\n"
      ".subckt pair a b\n"
      "M1 a b mid nch W=1u\n"
      "M2 mid b 0 nch W=1u\n"
      ".ends\n"
      "X1 in out pair\n"
      "R1 in 0 1k\n"
      ".end\n";
  const Circuit c = parse_circuit(src);
  ASSERT_EQ(c.devices.size(), 3u);
  EXPECT_EQ(c.devices[0].name, "X1.M1");
  EXPECT_EQ(c.devices[1].name, "X1.M2");
  EXPECT_TRUE(c.find_node("X1.mid"));
  EXPECT_EQ(c.nodes[0], "0");
  EXPECT_EQ(c.devices[1].nodes[2], 0);
  EXPECT_EQ(c.devices[0].l, kDefaultLength);
}

TEST(Elaborate, UndefinedModel) {
  try {
    parse_circuit("t\nM1 d g 0 nch W=1u\n.end\n");
    FAIL();
  } catch (const ElaborationError& e) {
    EXPECT_NE(std::string(e.what()).find("undefined model"), std::string::npos);
  }
}

TEST(Elaborate, UndefinedSubcircuitAndParam) {
  EXPECT_THROW(parse_circuit("t\nX1 a b nosuch\n"), ElaborationError);
  EXPECT_THROW(parse_circuit("t\nR1 a 0 {rr}\n"), ElaborationError);
}

TEST(Elaborate, ParamSubstitution) {
  const Circuit c = parse_circuit("t\n.param vdd=1.1\nV1 vdd 0 vdd\nR1 vdd 0 {rload}\n.param rload=2k\n");
  ASSERT_EQ(c.devices.size(), 2u);
  EXPECT_EQ(c.devices[0].wave.kind, WaveKind::dc);
  EXPECT_EQ(c.devices[0].wave.level, 1.1);
  EXPECT_EQ(c.devices[1].value, 2000.0);
}

TEST(Elaborate, DeviceInvariants) {
  EXPECT_THROW(parse_circuit("t\nR1 a 0 0\n"), ElaborationError);
  EXPECT_THROW(parse_circuit("t\nC1 a 0 -1p\n"), ElaborationError);
  EXPECT_THROW(parse_circuit("t\n.model n nmos\nM1 a b 0 n W=0\n"), ElaborationError);
  EXPECT_THROW(parse_circuit("t\nV1 a 0 PULSE(0 1 0 10p 10p 50p 60p)\n"), ElaborationError);
  EXPECT_THROW(parse_circuit("t\nV1 a 0 PWL(0 0 2n 1 1n 0)\n"), ElaborationError);
  EXPECT_THROW(parse_circuit("t\nR1 a 0 1k\nR1 a 0 2k\n"), ElaborationError);
}

TEST(Elaborate, DanglingNodeIsWarningNotError) {
  const Circuit c = parse_circuit("t\nR1 a 0 1k\nC1 a b 1f\n");
  ASSERT_EQ(c.warnings.size(), 1u);
  EXPECT_NE(c.warnings[0].find("'b'"), std::string::npos);
}

TEST(Elaborate, GroundAliases) {
  const Circuit c = parse_circuit("t\nR1 a GND 1k\nR2 a 0 1k\n");
  EXPECT_EQ(c.nodes.size(), 2u);
  EXPECT_EQ(c.devices[0].nodes[1], 0);
}

TEST(Waveform, PulseMidRise) {
  const Waveform clk = Waveform::make_pulse(0, 1.1, 0, 20e-12, 20e-12, 80e-12, 200e-12);
  EXPECT_NEAR(eval_waveform(clk, 10e-12), 0.55, 1e-15);
  EXPECT_EQ(eval_waveform(clk, 0), 0.0);
  EXPECT_EQ(eval_waveform(clk, 50e-12), 1.1);
  EXPECT_NEAR(eval_waveform(clk, 110e-12), 0.55, 1e-12);
  EXPECT_EQ(eval_waveform(clk, 150e-12), 0.0);
}

TEST(Waveform, PwlHoldsLastValue) {
  const Waveform w = Waveform::pwl({{0, 0}, {1e-9, 1.1}});
  EXPECT_EQ(eval_waveform(w, 2e-9), 1.1);
  EXPECT_EQ(eval_waveform(w, 0.5e-9), 0.55);
  const Waveform step = Waveform::pwl({{0, 0}, {1e-9, 0}, {1e-9, 1}});
  EXPECT_EQ(eval_waveform(step, 1e-9), 1.0);
}

// Dyadic timing values keep t + period exact, so periodicity holds bit for bit.
TEST(Waveform, PulseIsPeriodicProperty) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> ticks(0, 1 << 20);
  const double unit = std::ldexp(1.0, -30);
  const Waveform w = Waveform::make_pulse(0.25, 1.5, 64 * unit, 16 * unit, 32 * unit, 64 * unit, 256 * unit);
  for (int i = 0; i < 2000; ++i) {
    const double t = 64 * unit + ticks(rng) * unit / 8;
    EXPECT_EQ(eval_waveform(w, t), eval_waveform(w, t + 256 * unit)) << t;
  }
  const Waveform clk = Waveform::make_pulse(0, 1.1, 0, 20e-12, 20e-12, 80e-12, 200e-12);
  std::uniform_real_distribution<double> tt(0, 100e-9);
  for (int i = 0; i < 2000; ++i) {
    const double t = tt(rng);
    EXPECT_NEAR(eval_waveform(clk, t), eval_waveform(clk, t + 200e-12), 1e-9);
  }
}

TEST(Canonical, RoundTripIsIdentity) {
  const char* src =
      "round trip\n"
      ".param vdd=1.1 w1=0.4u\n"
      ".model nch nmos vth0=0.31 kp=280u\n"
      ".model pch pmos vth0=-0.29\n"
      ".subckt inv a y vdd\n"
      "M1 y a vdd pch W=0.8u\n"
      "M2 y a 0 nch W={w1} L=0.12u\n"
      ".ends\n"
      "V1 vdd 0 {vdd}\n"
      "V2 in 0 PWL(0 0 1n 1.1 2.5n 0.3)\n"
      "V3 clk 0 PULSE(0 1.1 0 20p 20p 80p 200p)\n"
      "X1 in out vdd inv\n"
      "Xk clk ck2 vdd inv\n"
      "C1 out mid 1f\n"
      "R1 mid 0 10k\n"
      ".nodeset v(out)=1.1\n"
      ".tran 1p 5n\n"
      ".op\n"
      ".end\n";
  const Circuit c = parse_circuit(src);
  const std::string text = to_netlist(c);
  const Circuit again = parse_circuit(text);
  EXPECT_EQ(c, again) << text;
  EXPECT_EQ(text, to_netlist(again));
}

TEST(ModelCards, LoadFromFileText) {
  const auto cards = load_model_cards(".model NCH nmos (vth0=0.35 i0=40n)\n.model pch pmos\n");
  ASSERT_EQ(cards.size(), 2u);
  EXPECT_EQ(cards.at("nch").vth0, 0.35);
  EXPECT_EQ(cards.at("nch").i0, 40e-9);
  EXPECT_EQ(cards.at("pch"), default_model_cards().pch);
  EXPECT_THROW(load_model_cards(".model bad nmos vth0=-0.3\n"), DeviceError);
  EXPECT_THROW(load_model_cards("* lib\n.model bad nmos bogus=1\n"), ElaborationError);
}
