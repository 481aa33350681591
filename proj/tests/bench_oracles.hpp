// Independent reference models for bench-level tests: an ideal edge-triggered
// register replayed on the bit sequence, and the windows where Data is quiet.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "cgsim/cglib.hpp"
#include "cgsim/engine.hpp"
#include "cgsim/metrics.hpp"

namespace oracle {

struct DataChange {
  double start;  // ramp begins
  double end;    // ramp done
  int value;     // new level
};

// Bit k takes effect on the first falling clock edge at or after k / f_data.
inline std::vector<DataChange> data_changes(const cgsim::SchemeSpec& s) {
  const auto bits = cgsim::data_bits(s);
  const double T = 1.0 / s.f_clk, Tb = 1.0 / s.f_data;
  std::vector<DataChange> out;
  for (std::size_t k = 1; k < bits.size(); ++k) {
    if (bits[k] == bits[k - 1]) continue;
    const double t = static_cast<double>(k) * Tb;
    double fall = T / 2;
    while (fall < t - 1e-18) fall += T;
    out.push_back({fall, fall + s.edge, bits[k]});
  }
  return out;
}

struct RegisterCheck {
  std::size_t edges = 0;
  std::size_t mismatches = 0;
  std::size_t captures = 0;  // edges where the ideal Q changed
};

// Ideal register: at each rising clock edge Q takes the settled Data value.
// Q is read from the trace 3/4 of a clock period after the edge.
inline RegisterCheck check_register(const cgsim::SchemeSpec& s, const cgsim::Trace& tr, const std::string& qnode) {
  const auto bits = cgsim::data_bits(s);
  const auto changes = data_changes(s);
  const double T = 1.0 / s.f_clk;
  const auto& q = tr.voltage(qnode);
  RegisterCheck r;
  int ideal = 0;
  for (double te = s.edge / 2; te + 0.75 * T <= tr.times.back(); te += T) {
    int d = bits.front();
    for (const auto& c : changes)
      if (c.end <= te) d = c.value;
    if (d != ideal) ++r.captures;
    ideal = d;
    const auto it = std::lower_bound(tr.times.begin(), tr.times.end(), te + 0.75 * T - s.tstep / 2);
    const int got = q[static_cast<std::size_t>(it - tr.times.begin())] > s.vdd / 2 ? 1 : 0;
    ++r.edges;
    if (got != ideal) ++r.mismatches;
  }
  return r;
}

struct QuietWindow {
  double t1, t2;
};

// Intervals where Data is constant and the register has had two clock
// periods to settle, trimmed to whole clock periods; only those >= 2 T.
inline std::vector<QuietWindow> quiet_windows(const cgsim::SchemeSpec& s, double tstop) {
  const double T = 1.0 / s.f_clk;
  std::vector<double> starts{0.0};
  std::vector<double> ends;
  for (const auto& c : data_changes(s)) {
    ends.push_back(c.start);
    starts.push_back(c.end + 2 * T);
  }
  ends.push_back(tstop);
  if (cgsim::data_bits(s).front() == 1) starts.front() = 2 * T;
  std::vector<QuietWindow> out;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const double periods = std::floor((ends[i] - starts[i]) / T);
    if (periods >= 2) out.push_back({starts[i], starts[i] + periods * T});
  }
  return out;
}

}  // namespace oracle
