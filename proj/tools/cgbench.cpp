// cgbench: characterise the clock-gated flip-flop benches from the command
// line. Exit status 0 on success, 1 on usage or input errors, 2 when a
// simulation or measurement fails.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "cgsim/bench.hpp"
#include "cgsim/engine.hpp"

namespace fs = std::filesystem;
using namespace cgsim;

namespace {

struct Options {
  std::string scheme = "proposed";
  std::vector<std::string> schemes;
  double vdd = 1.1;
  double freq = 5e9;
  double temp = 300;
  std::uint32_t seed = 0x5A;
  std::string integrator = "trap";
  std::string tstep = "1p";
  unsigned jobs = default_jobs();
  std::string out;
  std::string netlist_dump;
  // sweep
  std::string param;
  std::optional<double> from, to, step;
  // sim
  std::string netlist;
  std::vector<std::string> tran;
};

double parse_time(const std::string& s, const char* what) {
  const auto v = parse_number(s);
  if (!v || !(*v > 0)) throw UsageError(std::string("bad ") + what + " '" + s + "'");
  return *v;
}

SchemeSpec make_spec(const Options& o, const ModelSource& m, const std::string& scheme) {
  SchemeSpec s;
  const auto sc = parse_scheme(scheme);
  if (!sc) throw UsageError("unknown scheme '" + scheme + "' (expected no_gating, nc2mos, lb or proposed)");
  s.scheme = *sc;
  s.vdd = o.vdd;
  s.f_clk = o.freq;
  s.temp = o.temp;
  s.seed = o.seed;
  s.integrator = parse_integrator(o.integrator);
  s.tstep = parse_time(o.tstep, "--tstep");
  s.models = m.cards;
  s.validate();
  return s;
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw UsageError("cannot write '" + p.string() + "'");
  f << text;
}

void write_manifest(const fs::path& p, const Manifest& m) { write_text(p, to_json(m).dump(2) + "\n"); }

void add_conditions(CLI::App* c, Options& o) {
  c->add_option("--vdd", o.vdd, "supply voltage (V)");
  c->add_option("--freq", o.freq, "clock frequency (Hz)");
  c->add_option("--temp", o.temp, "temperature (K)");
  c->add_option("--seed", o.seed, "data LFSR seed");
  c->add_option("--integrator", o.integrator, "trap or be");
  c->add_option("--tstep", o.tstep, "time step, e.g. 1p");
}

int cmd_run(const Options& o) {
  const ModelSource models = load_models_from_env();
  const SchemeSpec s = make_spec(o, models, o.scheme);
  if (!o.netlist_dump.empty()) write_text(o.netlist_dump, to_netlist(build_bench(s).circuit));
  const MetricsReport r = report(s, o.jobs > 1);
  const std::string row = csv_row(r);
  if (o.out.empty()) {
    std::cout << kReportHeader << "\n" << row << "\n";
    return 0;
  }
  const fs::path out(o.out);
  const bool fresh = !fs::exists(out) || fs::file_size(out) == 0;
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream f(out, std::ios::app | std::ios::binary);
  if (!f) throw UsageError("cannot write '" + o.out + "'");
  if (fresh) f << kReportHeader << "\n";
  f << row << "\n";
  std::cout << row << "\n";
  write_manifest(o.out + ".manifest.json", {"run", models, {s}, std::nullopt, {o.out}, o.jobs});
  return 0;
}

int cmd_compare(const Options& o) {
  const ModelSource models = load_models_from_env();
  const SchemeSpec base = make_spec(o, models, "proposed");
  const auto rows = run_compare(base, o.jobs);
  const fs::path dir(o.out.empty() ? "." : o.out);
  const std::string text = compare_text(rows);
  write_text(dir / "compare.csv", compare_csv(rows));
  write_text(dir / "compare.txt", text);
  std::vector<SchemeSpec> specs;
  for (const auto& r : rows) {
    SchemeSpec s = base;
    s.scheme = r.scheme;
    specs.push_back(s);
  }
  write_manifest(dir / "compare.manifest.json",
                 {"compare", models, specs, std::nullopt,
                  {(dir / "compare.csv").string(), (dir / "compare.txt").string()}, o.jobs});
  std::cout << text;
  return 0;
}

int cmd_sweep(const Options& o) {
  const ModelSource models = load_models_from_env();
  SweepSpec sw = SweepSpec::defaults(parse_sweep_param(o.param));
  if (o.from) sw.from = *o.from;
  if (o.to) sw.to = *o.to;
  if (o.step) sw.step = *o.step;
  sw.fixed = make_spec(o, models, "proposed");
  if (!o.schemes.empty()) {
    sw.schemes.clear();
    for (const auto& n : o.schemes) sw.schemes.push_back(make_spec(o, models, n).scheme);
  }
  const auto rows = run_sweep(sw, o.jobs);
  const fs::path dir(o.out.empty() ? "." : o.out);
  const std::string stem = "sweep_" + std::string(sweep_param_name(sw.param));
  std::vector<std::string> outputs{(dir / (stem + ".csv")).string()};
  write_text(outputs.front(), sweep_csv(sw.param, rows));
  for (const auto& c : sweep_charts(sw.param, rows)) {
    outputs.push_back((dir / (stem + "_" + c.file_suffix + ".svg")).string());
    write_text(outputs.back(), svg_line_chart(c.chart));
  }
  std::vector<SchemeSpec> specs;
  for (Scheme sc : sw.schemes) specs.push_back(sw.at(sc, sw.from));
  write_manifest(dir / (stem + ".manifest.json"), {"sweep", models, specs, sw, outputs, o.jobs});
  std::cout << rows.size() << " rows -> " << outputs.front() << "\n";
  return 0;
}

int cmd_char(const Options& o) {
  const ModelSource models = load_models_from_env();
  const SchemeSpec s = make_spec(o, models, o.scheme);
  const SetupHold sh = setup_hold(s, kSetupHoldResolution, o.jobs > 1);
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%.6g,%.6g,%.6g,%.4f,%.4f,%.4f,%d,%d", std::string(scheme_name(s.scheme)).c_str(),
                s.vdd, s.f_clk, s.temp, sh.nominal_delay * 1e12, sh.setup * 1e12, sh.hold * 1e12, sh.setup_steps,
                sh.hold_steps);
  const std::string text =
      std::string("scheme,vdd,f_clk,temp,nominal_delay_ps,setup_ps,hold_ps,setup_steps,hold_steps\n") + buf + "\n";
  if (o.out.empty()) {
    std::cout << text;
  } else {
    write_text(o.out, text);
    write_manifest(o.out + ".manifest.json", {"char", models, {s}, std::nullopt, {o.out}, o.jobs});
  }
  return 0;
}

int cmd_sim(const Options& o) {
  const std::string text = read_file(o.netlist);
  const Circuit c = parse_circuit(text);
  SimConfig cfg;
  cfg.temp = o.temp;
  cfg.integrator = parse_integrator(o.integrator);
  if (!o.tran.empty()) {
    if (o.tran.size() != 2) throw UsageError("--tran takes <tstep> <tstop>");
    cfg.tstep = parse_time(o.tran[0], "--tran step");
    cfg.tstop = parse_time(o.tran[1], "--tran stop");
  } else {
    const TranSpec* t = nullptr;
    for (const auto& a : c.analyses)
      if ((t = std::get_if<TranSpec>(&a))) break;
    if (!t) throw UsageError("no .tran in netlist and no --tran given");
    cfg.tstep = t->step;
    cfg.tstop = t->stop;
  }
  const Trace tr = transient(c, cfg);
  if (o.out.empty()) {
    write_trace_csv(std::cout, tr);
    return 0;
  }
  std::ostringstream os;
  write_trace_csv(os, tr);
  write_text(o.out, os.str());
  nlohmann::json j{{"tool", "cgbench"},
                   {"version", kToolVersion},
                   {"command", "sim"},
                   {"netlist", {{"path", o.netlist}, {"fnv1a64", hex64(fnv1a64(text))}}},
                   {"tstep", cfg.tstep},
                   {"tstop", cfg.tstop},
                   {"temp", cfg.temp},
                   {"integrator", to_string(cfg.integrator)},
                   {"sim_config", to_json(cfg)},
                   {"timestamp", utc_timestamp()},
                   {"outputs", {o.out}}};
  write_text(o.out + ".manifest.json", j.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clock-gating flip-flop characterisation bench"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);
  Options o;

  auto* run = app.add_subcommand("run", "report one scheme (CSV row)");
  run->add_option("--scheme", o.scheme, "no_gating | nc2mos | lb | proposed")->required();
  add_conditions(run, o);
  run->add_option("--jobs", o.jobs, "worker threads");
  run->add_option("--out", o.out, "CSV file to append to");
  run->add_option("--netlist", o.netlist_dump, "also write the bench netlist here");

  auto* cmp = app.add_subcommand("compare", "all four schemes side by side");
  add_conditions(cmp, o);
  cmp->add_option("--jobs", o.jobs, "worker threads");
  cmp->add_option("--out", o.out, "output directory");

  auto* sweep = app.add_subcommand("sweep", "vdd or temperature sweep with charts");
  sweep->add_option("--param", o.param, "vdd or temp")->required();
  sweep->add_option("--from", o.from, "first grid value");
  sweep->add_option("--to", o.to, "last grid value");
  sweep->add_option("--step", o.step, "grid spacing");
  sweep->add_option("--scheme", o.schemes, "restrict to these schemes");
  add_conditions(sweep, o);
  sweep->add_option("--jobs", o.jobs, "worker threads");
  sweep->add_option("--out", o.out, "output directory");

  auto* chr = app.add_subcommand("char", "setup and hold only");
  chr->add_option("--scheme", o.scheme, "no_gating | nc2mos | lb | proposed")->required();
  add_conditions(chr, o);
  chr->add_option("--jobs", o.jobs, "worker threads");
  chr->add_option("--out", o.out, "CSV file");

  auto* sim = app.add_subcommand("sim", "simulate a netlist and dump the waveforms");
  sim->add_option("netlist", o.netlist, "netlist file")->required();
  sim->add_option("--tran", o.tran, "<tstep> <tstop>")->expected(2);
  sim->add_option("--temp", o.temp, "temperature (K)");
  sim->add_option("--integrator", o.integrator, "trap or be");
  sim->add_option("--out", o.out, "CSV file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) return cmd_run(o);
    if (*cmp) return cmd_compare(o);
    if (*sweep) return cmd_sweep(o);
    if (*chr) return cmd_char(o);
    return cmd_sim(o);
  } catch (const ParseError& e) {
    std::cerr << "cgbench: " << (o.netlist.empty() ? "" : o.netlist + ": ") << e.what() << "\n";
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "cgbench: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "cgbench: " << e.what() << "\n";
    return 2;
  }
}
