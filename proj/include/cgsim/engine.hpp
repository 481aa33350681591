#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cgsim/dense_lu.hpp"
#include "cgsim/devices.hpp"
#include "cgsim/error.hpp"
#include "cgsim/netlist.hpp"

namespace cgsim {

enum class Integrator { backward_euler, trapezoidal };

struct SimConfig {
  double tstep = 1e-12;
  double tstop = 1e-9;
  double temp = 300.0;
  double abstol = 1e-12;   // A
  double reltol = 1e-4;
  double vntol = 1e-6;     // V
  double gmin = 1e-12;     // S, every node to ground
  double cmin = 0.1e-15;   // F, every node to ground
  int max_newton = 100;
  Integrator integrator = Integrator::trapezoidal;
  // Nodes to record in the Trace; empty records every node.
  std::vector<std::string> save_nodes;

  void validate() const {
    if (!(abstol > 0 && reltol > 0 && vntol > 0 && gmin > 0 && cmin > 0))
      throw UsageError("simulator tolerances, gmin and cmin must be > 0");
    if (!(tstep > 0) || !(tstop > 0) || tstep > tstop / 10)
      throw UsageError("need 0 < tstep <= tstop/10");
    if (!(temp > 0)) throw UsageError("temperature must be > 0 K");
    if (max_newton < 1) throw UsageError("max_newton must be >= 1");
  }
};

inline const char* to_string(Integrator i) {
  return i == Integrator::trapezoidal ? "trapezoidal" : "backward_euler";
}

inline Integrator parse_integrator(std::string_view s) {
  if (s == "trap" || s == "trapezoidal") return Integrator::trapezoidal;
  if (s == "be" || s == "euler" || s == "backward_euler") return Integrator::backward_euler;
  throw UsageError("unknown integrator '" + std::string(s) + "' (expected trap or be)");
}

// Node voltages and source currents from one transient run. Source current is
// positive when it flows out of the source's + terminal into the circuit.
struct Trace {
  std::vector<double> times;
  std::vector<std::string> node_names;
  std::vector<std::vector<double>> node_voltages;
  std::vector<std::string> source_names;
  std::vector<std::vector<double>> source_currents;

  bool operator==(const Trace&) const = default;

  bool has_node(std::string_view n) const {
    return std::find(node_names.begin(), node_names.end(), n) != node_names.end();
  }
  const std::vector<double>& voltage(std::string_view n) const {
    auto it = std::find(node_names.begin(), node_names.end(), n);
    if (it == node_names.end()) throw MeasurementError("node '" + std::string(n) + "' not in trace");
    return node_voltages[static_cast<std::size_t>(it - node_names.begin())];
  }
  const std::vector<double>& current(std::string_view src) const {
    auto it = std::find(source_names.begin(), source_names.end(), src);
    if (it == source_names.end()) throw MeasurementError("source '" + std::string(src) + "' not in trace");
    return source_currents[static_cast<std::size_t>(it - source_names.begin())];
  }
};

struct OperatingPoint {
  std::vector<double> voltages;  // indexed like Circuit::nodes, [0] = 0
  std::vector<std::string> source_names;
  std::vector<double> source_currents;

  double voltage(const Circuit& c, std::string_view node) const {
    return voltages[static_cast<std::size_t>(c.node(node))];
  }
};

namespace detail {

// Largest node-voltage change one Newton iteration may take (V).
inline constexpr double kMaxNodeStep = 0.5;

// Modified nodal analysis of one Circuit. Unknowns are the non-ground node
// voltages followed by one branch current per voltage source.
class Mna {
 public:
  Mna(const Circuit& c, const SimConfig& cfg) : c_(c), cfg_(cfg) {
    nn_ = c.nodes.size() - 1;
    cap_.assign(c.nodes.size(), cfg.cmin);
    cap_[0] = 0;
    for (const auto& d : c.devices) {
      switch (d.kind) {
        case DeviceKind::resistor:
          res_.push_back({d.nodes[0], d.nodes[1], 1.0 / d.value});
          break;
        case DeviceKind::capacitor:
          if (d.nodes[0] == 0 || d.nodes[1] == 0)
            cap_[static_cast<std::size_t>(d.nodes[0] + d.nodes[1])] += d.value;
          else
            fcap_.push_back({d.nodes[0], d.nodes[1], d.value});
          break;
        case DeviceKind::vsource:
          src_.push_back({d.nodes[0], d.nodes[1], &d.wave, d.name});
          break;
        case DeviceKind::mosfet: {
          const ModelCard& card = c.models.at(d.model);
          const MosCaps caps = mos_caps(card, d.w);
          cap_[static_cast<std::size_t>(d.nodes[0])] += caps.cd;
          cap_[static_cast<std::size_t>(d.nodes[1])] += caps.cg;
          cap_[static_cast<std::size_t>(d.nodes[2])] += caps.cs;
          mos_.push_back({d.nodes[0], d.nodes[1], d.nodes[2], &card, d.w, d.l,
                          card.polarity == Polarity::n ? 1.0 : -1.0});
          break;
        }
      }
    }
    cap_[0] = 0;
    n_ = nn_ + src_.size();
    jac_ = DenseMatrix<double>(n_);
    res_vec_.assign(n_, 0.0);
    scale_.assign(n_, 0.0);
  }

  std::size_t unknowns() const { return n_; }
  std::size_t node_unknowns() const { return nn_; }
  std::size_t sources() const { return src_.size(); }
  const std::string& source_name(std::size_t k) const { return src_[k].name; }

  std::string unknown_name(std::size_t i) const {
    if (i < nn_) return c_.nodes[i + 1];
    return "I(" + src_[i - nn_].name + ")";
  }

  // Integration state for capacitors: nullptr in DC.
  struct Dynamic {
    double h = 0;
    bool trapezoidal = true;
    const std::vector<double>* v_prev = nullptr;    // per node
    const std::vector<double>* i_prev = nullptr;    // grounded cap current per node
    const std::vector<double>* fi_prev = nullptr;   // floating cap currents
  };

  struct Extra {
    double gshunt = 0;                          // added to gmin
    const std::vector<double>* force = nullptr;  // per node target, NaN = free
    double gforce = 0;
    double source_scale = 1;  // multiplies every source value
  };

  // Residual and Jacobian at x; returns squared residual norm.
  double assemble(const std::vector<double>& x, double t, const Dynamic* dyn, const Extra& extra) {
    jac_.fill(0.0);
    std::fill(res_vec_.begin(), res_vec_.end(), 0.0);
    std::fill(scale_.begin(), scale_.end(), 0.0);
    auto v = [&](int node) { return node == 0 ? 0.0 : x[static_cast<std::size_t>(node - 1)]; };
    auto add_current = [&](int node, double i) {
      if (node == 0) return;
      const auto r = static_cast<std::size_t>(node - 1);
      res_vec_[r] += i;
      scale_[r] = std::max(scale_[r], std::abs(i));
    };
    auto add_g = [&](int r, int col, double g) {
      if (r == 0 || col == 0) return;
      jac_(static_cast<std::size_t>(r - 1), static_cast<std::size_t>(col - 1)) += g;
    };
    // Two-terminal conductance-like branch a->b carrying current i with di/dv = g.
    auto branch = [&](int a, int b, double i, double g) {
      add_current(a, i);
      add_current(b, -i);
      add_g(a, a, g);
      add_g(b, b, g);
      add_g(a, b, -g);
      add_g(b, a, -g);
    };

    const double gmin = cfg_.gmin + extra.gshunt;
    for (std::size_t n = 1; n <= nn_; ++n) {
      const int node = static_cast<int>(n);
      branch(node, 0, gmin * v(node), gmin);
      if (extra.force && !std::isnan((*extra.force)[n])) {
        branch(node, 0, extra.gforce * (v(node) - (*extra.force)[n]), extra.gforce);
      }
      if (dyn) {
        const double c = cap_[n];
        const double g = (dyn->trapezoidal ? 2.0 : 1.0) * c / dyn->h;
        double i = g * (v(node) - (*dyn->v_prev)[n]);
        if (dyn->trapezoidal) i -= (*dyn->i_prev)[n];
        branch(node, 0, i, g);
      }
    }
    for (const auto& r : res_) branch(r.a, r.b, r.g * (v(r.a) - v(r.b)), r.g);
    if (dyn) {
      for (std::size_t k = 0; k < fcap_.size(); ++k) {
        const auto& fc = fcap_[k];
        const double g = (dyn->trapezoidal ? 2.0 : 1.0) * fc.c / dyn->h;
        const double vab = v(fc.a) - v(fc.b);
        const double vab_prev = (*dyn->v_prev)[static_cast<std::size_t>(fc.a)] -
                                (*dyn->v_prev)[static_cast<std::size_t>(fc.b)];
        double i = g * (vab - vab_prev);
        if (dyn->trapezoidal) i -= (*dyn->fi_prev)[k];
        branch(fc.a, fc.b, i, g);
      }
    }
    for (const auto& m : mos_) {
      // Reflect p-channel voltages into n-channel convention, then take the
      // higher-potential channel terminal as the drain.
      const double s = m.sign;
      int d = m.d;
      int src = m.s;
      if (s * v(d) < s * v(src)) std::swap(d, src);
      const double vgs = s * (v(m.g) - v(src));
      const double vds = s * (v(d) - v(src));
      const MosOperatingPoint op = mos_ids(*m.card, m.w, m.l, vgs, vds, cfg_.temp);
      const double i = s * op.ids;  // real current from d to src through the channel
      add_current(d, i);
      add_current(src, -i);
      // d i / d v_d = gds, d i / d v_g = gm, d i / d v_src = -(gm + gds)
      add_g(d, d, op.gds);
      add_g(d, m.g, op.gm);
      add_g(d, src, -(op.gm + op.gds));
      add_g(src, d, -op.gds);
      add_g(src, m.g, -op.gm);
      add_g(src, src, op.gm + op.gds);
    }
    for (std::size_t k = 0; k < src_.size(); ++k) {
      const auto& vs = src_[k];
      const std::size_t row = nn_ + k;
      const double ib = x[row];
      // Current ib leaves the + terminal into the circuit.
      add_current(vs.a, -ib);
      add_current(vs.b, ib);
      if (vs.a != 0) {
        jac_(static_cast<std::size_t>(vs.a - 1), row) -= 1;
        jac_(row, static_cast<std::size_t>(vs.a - 1)) += 1;
      }
      if (vs.b != 0) {
        jac_(static_cast<std::size_t>(vs.b - 1), row) += 1;
        jac_(row, static_cast<std::size_t>(vs.b - 1)) -= 1;
      }
      res_vec_[row] = v(vs.a) - v(vs.b) - extra.source_scale * eval_waveform(*vs.wave, t);
    }
    double norm = 0;
    for (double r : res_vec_) norm += r * r;
    return norm;
  }

  bool residual_ok() const {
    for (std::size_t i = 0; i < nn_; ++i)
      if (std::abs(res_vec_[i]) >= cfg_.abstol + cfg_.reltol * scale_[i]) return false;
    for (std::size_t i = nn_; i < n_; ++i)
      if (std::abs(res_vec_[i]) >= cfg_.vntol) return false;
    return true;
  }

  // Damped Newton from x (updated in place). Returns false on nonconvergence.
  bool newton(std::vector<double>& x, double t, const Dynamic* dyn, const Extra& extra, int* iterations = nullptr) {
    double norm = assemble(x, t, dyn, extra);
    std::vector<double> trial(n_);
    for (int it = 0; it < cfg_.max_newton; ++it) {
      if (iterations) ++*iterations;
      if (auto bad = lu_.factor(jac_)) throw SingularMatrix(unknown_name(*bad), *bad);
      for (auto& r : res_vec_) r = -r;
      std::vector<double> dx = lu_.solve(res_vec_);
      for (std::size_t i = 0; i < nn_; ++i) dx[i] = std::clamp(dx[i], -kMaxNodeStep, kMaxNodeStep);
      double lambda = 1.0;
      double trial_norm = 0;
      for (;;) {
        for (std::size_t i = 0; i < n_; ++i) trial[i] = x[i] + lambda * dx[i];
        trial_norm = assemble(trial, t, dyn, extra);
        if (trial_norm < norm || lambda <= 1e-3) break;
        lambda *= 0.5;
      }
      bool small = true;
      for (std::size_t i = 0; i < n_ && small; ++i) {
        const double step = std::abs(trial[i] - x[i]);
        const double tol = i < nn_ ? cfg_.vntol + cfg_.reltol * std::abs(trial[i])
                                   : cfg_.abstol + cfg_.reltol * std::abs(trial[i]);
        small = step < tol;
      }
      x.swap(trial);
      norm = trial_norm;
      if (small && residual_ok()) return true;
    }
    return false;
  }

  // Capacitor currents at the converged point x (same companion as assemble).
  void cap_currents(const std::vector<double>& x, const Dynamic& dyn, std::vector<double>& i_node,
                    std::vector<double>& i_float) const {
    auto v = [&](int node) { return node == 0 ? 0.0 : x[static_cast<std::size_t>(node - 1)]; };
    const double k = dyn.trapezoidal ? 2.0 : 1.0;
    std::vector<double> ni(c_.nodes.size(), 0.0);
    for (std::size_t n = 1; n <= nn_; ++n) {
      double i = k * cap_[n] / dyn.h * (v(static_cast<int>(n)) - (*dyn.v_prev)[n]);
      if (dyn.trapezoidal) i -= (*dyn.i_prev)[n];
      ni[n] = i;
    }
    std::vector<double> fi(fcap_.size(), 0.0);
    for (std::size_t j = 0; j < fcap_.size(); ++j) {
      const auto& fc = fcap_[j];
      const double vab_prev = (*dyn.v_prev)[static_cast<std::size_t>(fc.a)] -
                              (*dyn.v_prev)[static_cast<std::size_t>(fc.b)];
      double i = k * fc.c / dyn.h * (v(fc.a) - v(fc.b) - vab_prev);
      if (dyn.trapezoidal) i -= (*dyn.fi_prev)[j];
      fi[j] = i;
    }
    i_node = std::move(ni);
    i_float = std::move(fi);
  }

  std::vector<double> node_voltages(const std::vector<double>& x) const {
    std::vector<double> out(c_.nodes.size(), 0.0);
    for (std::size_t i = 0; i < nn_; ++i) out[i + 1] = x[i];
    return out;
  }

  std::size_t floating_caps() const { return fcap_.size(); }

 private:
  struct Res {
    int a, b;
    double g;
  };
  struct FCap {
    int a, b;
    double c;
  };
  struct Src {
    int a, b;
    const Waveform* wave;
    std::string name;
  };
  struct Mos {
    int d, g, s;
    const ModelCard* card;
    double w, l, sign;
  };

  const Circuit& c_;
  const SimConfig& cfg_;
  std::size_t nn_ = 0;
  std::size_t n_ = 0;
  std::vector<double> cap_;
  std::vector<Res> res_;
  std::vector<FCap> fcap_;
  std::vector<Src> src_;
  std::vector<Mos> mos_;
  DenseMatrix<double> jac_;
  std::vector<double> res_vec_;
  std::vector<double> scale_;
  DenseLU<double> lu_;
};

// Advances a homotopy parameter from 0 to 1, halving the stride when Newton
// fails. x holds the last converged point.
template <typename Solve>
bool continuation(std::vector<double>& x, Solve solve, int max_halvings = 12) {
  double at = 0, stride = 0.1;
  int halvings = 0;
  while (at < 1) {
    const double next = std::min(1.0, at + stride);
    std::vector<double> trial = x;
    if (solve(trial, next)) {
      x.swap(trial);
      at = next;
      stride = std::min(stride * 2, 0.25);
    } else {
      if (++halvings > max_halvings) return false;
      stride /= 2;
    }
  }
  return true;
}

// Converged point of the circuit plus `base` (pins, no shunt): plain Newton
// from x, then gmin stepping, then source stepping from zero.
inline std::optional<std::vector<double>> robust_newton(Mna& mna, const SimConfig& cfg, double t,
                                                        std::vector<double> x, const Mna::Extra& base) {
  const std::vector<double> guess = x;
  if (mna.newton(x, t, nullptr, base)) return x;

  // gmin from 1e-2 S down to cfg.gmin, log-spaced.
  const double g_hi = 1e-2, decades = std::log10(g_hi / cfg.gmin);
  auto with_shunt = [&](double g) {
    Mna::Extra e = base;
    e.gshunt = g - cfg.gmin;
    return e;
  };
  x = guess;
  if (mna.newton(x, t, nullptr, with_shunt(g_hi))) {
    const bool ok = continuation(x, [&](std::vector<double>& y, double a) {
      return mna.newton(y, t, nullptr, with_shunt(g_hi * std::pow(10.0, -a * decades)));
    });
    if (ok && mna.newton(x, t, nullptr, base)) return x;
  }

  x.assign(mna.unknowns(), 0.0);
  const bool ok = continuation(x, [&](std::vector<double>& y, double a) {
    Mna::Extra ramp = base;
    ramp.source_scale = a;
    return mna.newton(y, t, nullptr, ramp);
  });
  if (ok && mna.newton(x, t, nullptr, base)) return x;
  return std::nullopt;
}

// DC solve at time t. Nodesets are first held by 1 S pins, then released.
inline std::vector<double> solve_dc(Mna& mna, const Circuit& c, const SimConfig& cfg, double t) {
  std::vector<double> x(mna.unknowns(), 0.0);
  if (!c.nodesets.empty()) {
    std::vector<double> force(c.nodes.size(), std::nan(""));
    for (const auto& [name, v] : c.nodesets) {
      const auto idx = static_cast<std::size_t>(c.node(name));
      force[idx] = v;
      if (idx > 0) x[idx - 1] = v;
    }
    Mna::Extra pin{0.0, &force, 1.0};
    if (auto pinned = robust_newton(mna, cfg, t, x, pin)) x = std::move(*pinned);
  }
  if (auto free = robust_newton(mna, cfg, t, x, {})) return std::move(*free);
  throw NonConvergence(t, "DC operating point failed (gmin and source stepping)");
}

}  // namespace detail

// DC operating point with every waveform source frozen at t = 0.
inline OperatingPoint dc_operating_point(const Circuit& c, const SimConfig& cfg) {
  detail::Mna mna(c, cfg);
  const auto x = detail::solve_dc(mna, c, cfg, 0.0);
  OperatingPoint op;
  op.voltages = mna.node_voltages(x);
  for (std::size_t k = 0; k < mna.sources(); ++k) {
    op.source_names.push_back(mna.source_name(k));
    op.source_currents.push_back(x[mna.node_unknowns() + k]);
  }
  return op;
}

struct TransientStats {
  long steps = 0;
  long newton_iterations = 0;
  long retried_steps = 0;
};

// Fixed-step transient from the DC operating point at t = 0 to cfg.tstop.
inline Trace transient(const Circuit& c, const SimConfig& cfg, TransientStats* stats = nullptr) {
  cfg.validate();
  detail::Mna mna(c, cfg);
  std::vector<double> x = detail::solve_dc(mna, c, cfg, 0.0);

  std::vector<int> saved;
  Trace tr;
  if (cfg.save_nodes.empty()) {
    for (std::size_t i = 1; i < c.nodes.size(); ++i) saved.push_back(static_cast<int>(i));
  } else {
    for (const auto& n : cfg.save_nodes) saved.push_back(c.node(n));
  }
  for (int n : saved) tr.node_names.push_back(c.nodes[static_cast<std::size_t>(n)]);
  for (std::size_t k = 0; k < mna.sources(); ++k) tr.source_names.push_back(mna.source_name(k));

  const auto steps = static_cast<long>(std::llround(cfg.tstop / cfg.tstep));
  tr.times.reserve(static_cast<std::size_t>(steps + 1));
  tr.node_voltages.assign(saved.size(), {});
  tr.source_currents.assign(mna.sources(), {});
  for (auto& v : tr.node_voltages) v.reserve(static_cast<std::size_t>(steps + 1));
  for (auto& v : tr.source_currents) v.reserve(static_cast<std::size_t>(steps + 1));

  std::vector<double> v_prev = mna.node_voltages(x);
  std::vector<double> i_prev(c.nodes.size(), 0.0);
  std::vector<double> fi_prev(mna.floating_caps(), 0.0);

  auto record = [&](double t) {
    tr.times.push_back(t);
    for (std::size_t j = 0; j < saved.size(); ++j)
      tr.node_voltages[j].push_back(saved[j] == 0 ? 0.0 : x[static_cast<std::size_t>(saved[j] - 1)]);
    for (std::size_t k = 0; k < mna.sources(); ++k)
      tr.source_currents[k].push_back(x[mna.node_unknowns() + k]);
  };
  record(0.0);

  const bool trap = cfg.integrator == Integrator::trapezoidal;
  detail::Mna::Extra none;
  int iters = 0;
  auto advance = [&](std::vector<double>& xs, double t, double h) {
    detail::Mna::Dynamic dyn{h, trap, &v_prev, &i_prev, &fi_prev};
    if (!mna.newton(xs, t, &dyn, none, &iters)) return false;
    std::vector<double> ni, nf;
    mna.cap_currents(xs, dyn, ni, nf);
    i_prev = std::move(ni);
    fi_prev = std::move(nf);
    v_prev = mna.node_voltages(xs);
    return true;
  };

  for (long k = 1; k <= steps; ++k) {
    const double t = static_cast<double>(k) * cfg.tstep;
    std::vector<double> xs = x;
    if (!advance(xs, t, cfg.tstep)) {
      // One retry of this step as four quarter steps.
      if (stats) ++stats->retried_steps;
      xs = x;
      const double t0 = static_cast<double>(k - 1) * cfg.tstep;
      for (int q = 1; q <= 4; ++q) {
        if (!advance(xs, t0 + q * 0.25 * cfg.tstep, 0.25 * cfg.tstep))
          throw NonConvergence(t, "transient step did not converge");
      }
    }
    x = std::move(xs);
    record(t);
  }
  if (stats) {
    stats->steps += steps;
    stats->newton_iterations += iters;
  }
  return tr;
}

// CSV: time,<node>...,I(<source>)... with 9 significant digits.
inline void write_trace_csv(std::ostream& os, const Trace& tr) {
  os << "time";
  for (const auto& n : tr.node_names) os << ',' << n;
  for (const auto& s : tr.source_names) os << ",I(" << s << ')';
  os << '\n';
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.8e", v);
    os << buf;
  };
  for (std::size_t i = 0; i < tr.times.size(); ++i) {
    put(tr.times[i]);
    for (const auto& s : tr.node_voltages) {
      os << ',';
      put(s[i]);
    }
    for (const auto& s : tr.source_currents) {
      os << ',';
      put(s[i]);
    }
    os << '\n';
  }
}

}  // namespace cgsim
