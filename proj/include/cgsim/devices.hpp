#pragma once

#include <array>
#include <cmath>
#include <string>
#include <string_view>
#include <utility>

#include "cgsim/error.hpp"

namespace cgsim {

enum class Polarity { n, p };

// Level-1 MOSFET parameters plus the subthreshold and temperature terms.
// Units are SI throughout (V, A/V^2, F/m, K).
struct ModelCard {
  Polarity polarity = Polarity::n;
  double vth0 = 0.30;      // threshold at t0 (negative for p)
  double kp = 300e-6;      // transconductance K' at t0
  double lambda = 0.1;     // channel-length modulation
  double n_sub = 1.5;      // subthreshold slope factor
  double i0 = 50e-9;       // subthreshold current per W/L at Vgs = Vth
  double tc_vth = 1.0e-3;  // |Vth| drop per kelvin
  double mu_exp = -1.5;    // K(T) = kp (T/t0)^mu_exp
  double cg_per_w = 1e-9;  // 1 fF/um
  double cj_per_w = 0.5e-9;
  double t0 = 300.0;

  bool operator==(const ModelCard&) const = default;
};

inline constexpr double kBoltzmannOverQ = 8.617333262e-5;  // V/K
inline constexpr double kDefaultLength = 0.1e-6;

inline double thermal_voltage(double temp) { return kBoltzmannOverQ * temp; }

// Throws DeviceError when a card violates its invariants.
inline void validate(const ModelCard& m, std::string_view name = "") {
  auto fail = [&](const char* what) {
    throw DeviceError("model card '" + std::string(name) + "': " + what);
  };
  if (!(m.kp > 0)) fail("kp must be > 0");
  if (!(m.i0 > 0)) fail("i0 must be > 0");
  if (!(m.n_sub >= 1)) fail("n_sub must be >= 1");
  if (!(m.cg_per_w >= 0) || !(m.cj_per_w >= 0)) fail("capacitance per width must be >= 0");
  if (!(m.t0 > 0)) fail("t0 must be > 0");
  if (m.polarity == Polarity::n && !(m.vth0 > 0)) fail("n-channel vth0 must be > 0");
  if (m.polarity == Polarity::p && !(m.vth0 < 0)) fail("p-channel vth0 must be < 0");
}

// Parameter names as they appear in `.model` lines, in canonical order.
inline constexpr std::array<std::pair<std::string_view, double ModelCard::*>, 10> kModelParams{{
    {"vth0", &ModelCard::vth0},
    {"kp", &ModelCard::kp},
    {"lambda", &ModelCard::lambda},
    {"n_sub", &ModelCard::n_sub},
    {"i0", &ModelCard::i0},
    {"tc_vth", &ModelCard::tc_vth},
    {"mu_exp", &ModelCard::mu_exp},
    {"cg_per_w", &ModelCard::cg_per_w},
    {"cj_per_w", &ModelCard::cj_per_w},
    {"t0", &ModelCard::t0},
}};

// Returns false for an unknown key. `key` must already be lower case.
inline bool set_model_param(ModelCard& m, std::string_view key, double value) {
  if (key == "vto") key = "vth0";
  if (key == "n") key = "n_sub";
  for (const auto& [name, member] : kModelParams) {
    if (name == key) {
      m.*member = value;
      return true;
    }
  }
  return false;
}

struct DefaultCards {
  ModelCard nch;
  ModelCard pch;
};

// Generic 90nm-like cards used when no model-card file is supplied.
inline DefaultCards default_model_cards() {
  ModelCard n;
  ModelCard p;
  p.polarity = Polarity::p;
  p.vth0 = -0.30;
  p.kp = 120e-6;
  return {n, p};
}

enum class MosRegion { subthreshold, triode, saturation };

struct MosOperatingPoint {
  double ids = 0;  // drain to source, >= 0 for vds >= 0
  double gm = 0;   // d ids / d vgs
  double gds = 0;  // d ids / d vds
  MosRegion region = MosRegion::subthreshold;
};

// Drain current in n-channel convention. The caller reflects p-channel
// terminal voltages (and swaps drain/source) so that vds >= 0; only the
// threshold magnitude of the card is used.
//
// Above threshold the square-law current is floored at the weak-inversion
// current reached at Vgst = 0, which keeps Ids continuous and monotone in Vgs
// across the subthreshold join. The floor only wins within ~20 mV of
// threshold or at vds of a few vT.
inline MosOperatingPoint mos_ids(const ModelCard& m, double w, double l, double vgs, double vds,
                                 double temp) {
  if (!(w > 0) || !(l > 0)) throw DeviceError("MOSFET W and L must be > 0");
  if (!(temp > 0)) throw DeviceError("temperature must be > 0 K");

  const double vt = thermal_voltage(temp);
  const double beta = w / l;
  const double vth = std::abs(m.vth0) - m.tc_vth * (temp - m.t0);
  const double k = m.kp * std::pow(temp / m.t0, m.mu_exp) * beta;
  const double vgst = vgs - vth;
  const double e_ds = std::exp(-vds / vt);

  MosOperatingPoint op;
  if (vgst <= 0) {
    const double isub = m.i0 * beta * std::exp(vgst / (m.n_sub * vt));
    op.ids = isub * (1 - e_ds);
    op.gm = op.ids / (m.n_sub * vt);
    op.gds = isub * e_ds / vt;
    op.region = MosRegion::subthreshold;
    return op;
  }

  const double clm = 1 + m.lambda * vds;
  if (vds < vgst) {
    const double core = vgst * vds - 0.5 * vds * vds;
    op.ids = k * core * clm;
    op.gm = k * vds * clm;
    op.gds = k * ((vgst - vds) * clm + m.lambda * core);
    op.region = MosRegion::triode;
  } else {
    op.ids = 0.5 * k * vgst * vgst * clm;
    op.gm = k * vgst * clm;
    op.gds = 0.5 * k * vgst * vgst * m.lambda;
    op.region = MosRegion::saturation;
  }

  const double floor = m.i0 * beta * (1 - e_ds);
  if (floor > op.ids) {
    op.ids = floor;
    op.gm = 0;
    op.gds = m.i0 * beta * e_ds / vt;
    op.region = MosRegion::subthreshold;
  }
  return op;
}

struct MosCaps {
  double cg = 0;
  double cd = 0;
  double cs = 0;
};

// Constant lumped capacitances, each from its terminal to ground.
inline MosCaps mos_caps(const ModelCard& m, double w) {
  if (!(w > 0)) throw DeviceError("MOSFET W must be > 0");
  return {m.cg_per_w * w, m.cj_per_w * w, m.cj_per_w * w};
}

}  // namespace cgsim
