#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cgsim/cglib.hpp"
#include "cgsim/engine.hpp"
#include "cgsim/error.hpp"

namespace cgsim {

enum class Direction { rising, falling };

struct Crossing {
  double time;
  Direction dir;
  bool operator==(const Crossing&) const = default;
};

struct CrossingList {
  double threshold = 0;
  std::vector<Crossing> items;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
  std::size_t count_in(double t1, double t2) const {
    return static_cast<std::size_t>(std::count_if(items.begin(), items.end(),
                                                  [&](const Crossing& c) { return c.time >= t1 && c.time < t2; }));
  }
  std::vector<double> times(Direction d) const {
    std::vector<double> out;
    for (const auto& c : items)
      if (c.dir == d) out.push_back(c.time);
    return out;
  }
};

// Threshold crossings by linear interpolation. A crossing that is undone
// within one sample step is dropped together with its reversal.
inline CrossingList crossings(std::span<const double> t, std::span<const double> v, double threshold) {
  CrossingList out;
  out.threshold = threshold;
  for (std::size_t i = 1; i < t.size(); ++i) {
    const bool was = v[i - 1] >= threshold, now = v[i] >= threshold;
    if (was == now) continue;
    const double tc = t[i - 1] + (threshold - v[i - 1]) / (v[i] - v[i - 1]) * (t[i] - t[i - 1]);
    const Crossing c{tc, now ? Direction::rising : Direction::falling};
    if (!out.items.empty() && tc - out.items.back().time <= t[i] - t[i - 1])
      out.items.pop_back();
    else
      out.items.push_back(c);
  }
  return out;
}

inline CrossingList crossings(const Trace& tr, std::string_view node, double threshold) {
  return crossings(tr.times, tr.voltage(node), threshold);
}

// Trapezoidal integral of a sampled series over [t1, t2], interpolating at
// the window ends.
inline double integrate(std::span<const double> t, std::span<const double> y, double t1, double t2) {
  if (t.empty() || t1 < t.front() || t2 > t.back() || !(t2 > t1))
    throw MeasurementError("integration window outside trace");
  auto at = [&](double x) {
    auto it = std::upper_bound(t.begin(), t.end(), x);
    if (it == t.end()) return y.back();
    const auto i = static_cast<std::size_t>(it - t.begin());
    if (i == 0) return y.front();
    return y[i - 1] + (y[i] - y[i - 1]) * (x - t[i - 1]) / (t[i] - t[i - 1]);
  };
  double sum = 0, tp = t1, yp = at(t1);
  for (auto i = static_cast<std::size_t>(std::upper_bound(t.begin(), t.end(), t1) - t.begin());
       i < t.size() && t[i] < t2; ++i) {
    sum += 0.5 * (y[i] + yp) * (t[i] - tp);
    tp = t[i];
    yp = y[i];
  }
  return sum + 0.5 * (at(t2) + yp) * (t2 - tp);
}

// Mean supply power over [t1, t2]; current out of the supply counts positive.
inline double avg_power(const Trace& tr, std::string_view supply, double vdd, double t1, double t2) {
  return vdd * integrate(tr.times, tr.current(supply), t1, t2) / (t2 - t1);
}

inline double dynamic_per_ghz(double avg, double stat, double f_clk) {
  if (avg < stat) throw MeasurementError("average power below static power");
  return (avg - stat) / (f_clk * 1e-9);
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw MeasurementError("median of empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// clk-to-Q delay of every Q transition, measured from the latest rising
// clock crossing before it.
inline std::vector<double> capture_delays(const Trace& tr, std::string_view clock, std::string_view q, double vdd) {
  const std::vector<double> edges = crossings(tr, clock, vdd / 2).times(Direction::rising);
  std::vector<double> out;
  for (const auto& c : crossings(tr, q, vdd / 2).items) {
    auto it = std::upper_bound(edges.begin(), edges.end(), c.time);
    if (it == edges.begin()) continue;
    out.push_back(c.time - *std::prev(it));
  }
  return out;
}

inline double prop_delay(const Trace& tr, std::string_view clock, std::string_view q, double vdd) {
  const auto d = capture_delays(tr, clock, q, vdd);
  if (d.empty()) throw MeasurementError("no Q transition after a clock edge");
  return median(d);
}

// Settling time of the constant-input runs behind static_power.
inline constexpr double kStaticSettle = 1e-9;

inline double static_power_corner(const SchemeSpec& s, int data, int clock) {
  Stimulus st;
  st.data = Waveform::dc(data * s.vdd);
  st.clock = Waveform::dc(clock * s.vdd);
  st.q0 = data;
  st.tstop = whole_steps(kStaticSettle, s.tstep);
  const BenchHandle h = build_bench(s, st);
  const Trace tr = transient(h.circuit, h.sim_config());
  return avg_power(tr, h.supply, s.vdd, 0.75 * st.tstop, st.tstop);
}

// Mean supply power over the four constant (Data, Clock) corners.
inline double static_power(const SchemeSpec& s) {
  double sum = 0;
  for (int d : {0, 1})
    for (int c : {0, 1}) sum += static_power_corner(s, d, c);
  return sum / 4;
}

struct SetupHold {
  double setup = 0;
  double hold = 0;
  double nominal_delay = 0;
  int setup_steps = 0;
  int hold_steps = 0;
  std::vector<double> setup_probes;  // offsets above setup, all passing
  std::vector<double> hold_probes;
};

namespace detail {

// Capturing edge of the setup/hold benches: the third rising edge.
inline double char_edge(const SchemeSpec& s) { return s.edge / 2 + 2 * s.clock_period(); }

struct CaptureResult {
  bool q_high = false;
  double delay = 0;  // NaN when Q never rose
};

inline CaptureResult run_capture(const SchemeSpec& s, const Waveform& data) {
  const double te = char_edge(s), T = s.clock_period();
  Stimulus st;
  st.data = data;
  st.clock = clock_waveform(s);
  st.q0 = 0;
  st.tstop = whole_steps(te + T, s.tstep);
  const BenchHandle h = build_bench(s, st);
  const Trace tr = transient(h.circuit, h.sim_config());
  const auto& q = tr.voltage(h.probes.q);
  const auto k = static_cast<std::size_t>(std::llround((te + 0.75 * T) / s.tstep));
  CaptureResult r;
  r.q_high = q[k] > s.vdd / 2;
  r.delay = std::nan("");
  for (const auto& c : crossings(tr, h.probes.q, s.vdd / 2).items)
    if (c.dir == Direction::rising && c.time > te - T / 2) {
      r.delay = c.time - te;
      break;
    }
  return r;
}

// Smallest passing value in (lo, hi] given pass(lo) false, pass(hi) true.
template <class Pass>
double bisect(double lo, double hi, double resolution, Pass pass, int& steps) {
  steps = 0;
  while (hi - lo > resolution) {
    const double mid = 0.5 * (lo + hi);
    (pass(mid) ? hi : lo) = mid;
    ++steps;
  }
  return hi;
}

}  // namespace detail

inline bool setup_passes(const SchemeSpec& s, double t_su, double nominal) {
  const auto r = detail::run_capture(s, data_step(s, detail::char_edge(s) - t_su));
  return r.q_high && !std::isnan(r.delay) && r.delay <= 1.05 * nominal;
}

inline bool hold_passes(const SchemeSpec& s, double t_h) {
  const double te = detail::char_edge(s);
  return detail::run_capture(s, data_pulse(s, te - s.clock_period() / 2, te + t_h)).q_high;
}

// Setup over [0, T/2] and hold over [-T/2, T/2] by bisection, each followed
// by five passing probes between the bound and the top of its bracket.
inline SetupHold setup_hold(const SchemeSpec& s, double resolution, bool parallel = false) {
  if (!(resolution >= s.tstep / 10)) throw UsageError("setup/hold resolution must be >= tstep/10");
  const double T = s.clock_period();
  SetupHold out;
  const auto nominal = detail::run_capture(s, data_step(s, detail::char_edge(s) - T / 2));
  if (!nominal.q_high || std::isnan(nominal.delay))
    throw MeasurementError("setup search bracket contains no pass/fail boundary");
  out.nominal_delay = nominal.delay;

  auto do_setup = [&] {
    if (setup_passes(s, 0.0, out.nominal_delay))
      throw MeasurementError("setup search bracket contains no pass/fail boundary");
    out.setup = detail::bisect(0.0, T / 2, resolution, [&](double x) { return setup_passes(s, x, out.nominal_delay); },
                               out.setup_steps);
    for (int k = 1; k <= 5; ++k) {
      const double x = out.setup + k * (T / 2 - out.setup) / 5;
      if (!setup_passes(s, x, out.nominal_delay)) throw MeasurementError("setup pass region is not monotone");
      out.setup_probes.push_back(x);
    }
  };
  auto do_hold = [&] {
    if (hold_passes(s, -T / 2) || !hold_passes(s, T / 2))
      throw MeasurementError("hold search bracket contains no pass/fail boundary");
    out.hold = detail::bisect(-T / 2, T / 2, resolution, [&](double x) { return hold_passes(s, x); }, out.hold_steps);
    for (int k = 1; k <= 5; ++k) {
      const double x = out.hold + k * (T / 2 - out.hold) / 5;
      if (!hold_passes(s, x)) throw MeasurementError("hold pass region is not monotone");
      out.hold_probes.push_back(x);
    }
  };
  if (parallel) {
    auto h = std::async(std::launch::async, do_hold);
    do_setup();
    h.get();
  } else {
    do_setup();
    do_hold();
  }
  return out;
}

struct MetricsReport {
  Scheme scheme = Scheme::proposed_cg;
  double vdd = 0, f_clk = 0, temp = 0;
  double avg_power = 0;        // W
  double static_power = 0;     // W
  double dynamic_per_ghz = 0;  // W/GHz
  double delay = 0;            // s
  double setup = 0;            // s
  double hold = 0;             // s
  double latency = 0;          // s
  double pdp = 0;              // J
  long toggles_gated_clock = 0;
  bool operator==(const MetricsReport&) const = default;
};

inline constexpr const char* kReportHeader =
    "scheme,vdd,f_clk,temp,avg_uW,static_uW,dyn_uW_per_GHz,delay_ps,setup_ps,hold_ps,latency_ps,pdp_fJ,toggles";

inline std::string csv_row(const MetricsReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s,%.6g,%.6g,%.6g,%.6f,%.6f,%.6f,%.4f,%.4f,%.4f,%.4f,%.6f,%ld",
                std::string(scheme_name(r.scheme)).c_str(), r.vdd, r.f_clk, r.temp, r.avg_power * 1e6,
                r.static_power * 1e6, r.dynamic_per_ghz * 1e6, r.delay * 1e12, r.setup * 1e12, r.hold * 1e12,
                r.latency * 1e12, r.pdp * 1e15, r.toggles_gated_clock);
  return buf;
}

// Measurements taken from one run of the default random-data bench.
struct BenchRun {
  double avg_power = 0;
  double avg_power_extended = 0;  // window one data period longer
  double delay = 0;
  long toggles = 0;
};

inline BenchRun measure_bench(const SchemeSpec& s) {
  const BenchHandle h = build_bench(s);
  const Trace tr = transient(h.circuit, h.sim_config());
  const double Tb = s.bit_period();
  const auto n = static_cast<double>(data_bits(s).size());
  if (n < 4) throw MeasurementError("power window needs at least 4 data bits");
  BenchRun r;
  r.avg_power = avg_power(tr, h.supply, s.vdd, 2 * Tb, (n - 1) * Tb);
  r.avg_power_extended = avg_power(tr, h.supply, s.vdd, 2 * Tb, n * Tb);
  r.delay = prop_delay(tr, h.probes.clock, h.probes.q, s.vdd);
  r.toggles = static_cast<long>(crossings(tr, h.probes.gated_clock, s.vdd / 2).size());
  return r;
}

inline MetricsReport compose_report(const SchemeSpec& s, const BenchRun& run, double stat, const SetupHold& sh) {
  MetricsReport r;
  r.scheme = s.scheme;
  r.vdd = s.vdd;
  r.f_clk = s.f_clk;
  r.temp = s.temp;
  r.avg_power = run.avg_power;
  r.static_power = stat;
  r.dynamic_per_ghz = dynamic_per_ghz(run.avg_power, stat, s.f_clk);
  r.delay = run.delay;
  r.setup = sh.setup;
  r.hold = sh.hold;
  r.latency = r.delay + r.setup;
  r.pdp = r.avg_power * r.delay;
  r.toggles_gated_clock = run.toggles;
  return r;
}

inline constexpr double kSetupHoldResolution = 0.1e-12;

// All figures for one scheme; with parallel the independent simulations run
// on separate threads.
inline MetricsReport report(const SchemeSpec& s, bool parallel = false) {
  s.validate();
  if (!parallel) {
    const BenchRun run = measure_bench(s);
    const double stat = static_power(s);
    return compose_report(s, run, stat, setup_hold(s, kSetupHoldResolution));
  }
  auto run = std::async(std::launch::async, [&] { return measure_bench(s); });
  auto stat = std::async(std::launch::async, [&] { return static_power(s); });
  const SetupHold sh = setup_hold(s, kSetupHoldResolution, true);
  return compose_report(s, run.get(), stat.get(), sh);
}

}  // namespace cgsim
