#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vdm/config.hpp"
#include "vdm/engine.hpp"
#include "vdm/io.hpp"
#include "vdm/markov.hpp"

namespace vdm {

namespace cli_detail {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;  // key=value
  int jobs = 0;                        // 0 = hardware concurrency
};

inline void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "key=value configuration file");
  cmd->add_option("--out", o.out_dir, "output directory (default $VDM_OUT_DIR or ./out)");
  cmd->add_option("--seed", o.seed, "RNG seed override");
  cmd->add_option("--set", o.overrides, "configuration override key=value (repeatable)");
  cmd->add_option("--jobs", o.jobs, "parallel workers for campaigns");
}

inline std::string resolve_out_dir(const CommonOpts& o) {
  if (!o.out_dir.empty()) return o.out_dir;
  if (const char* env = std::getenv("VDM_OUT_DIR")) return env;
  return "out";
}

struct LoadedConfig {
  SimConfig cfg;
  std::vector<std::string> explicit_keys;
};

inline LoadedConfig build_config(const CommonOpts& o) {
  LoadedConfig lc;
  if (!o.config_path.empty()) lc.cfg = load_config_file(o.config_path);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    apply_config_entry(lc.cfg, key, kv.substr(eq + 1));
    lc.explicit_keys.push_back(key);
  }
  if (o.seed) lc.cfg.seed = *o.seed;
  lc.cfg.validate();
  return lc;
}

inline bool was_set(const LoadedConfig& lc, const std::string& key) {
  return std::find(lc.explicit_keys.begin(), lc.explicit_keys.end(), key) !=
         lc.explicit_keys.end();
}

/// Strategy-parameter precedence: values that the selected strategy cannot
/// use are ignored with a warning instead of failing the run.
inline void warn_conflicts(const LoadedConfig& lc) {
  if (lc.cfg.strategy == Strategy::kPB && was_set(lc, "e_thr"))
    std::cerr << "warning: e_thr is ignored with the PB strategy\n";
  if (lc.cfg.strategy == Strategy::kETB && was_set(lc, "t_period") &&
      lc.cfg.congestion == Congestion::kNone)
    std::cerr << "warning: t_period is ignored with the ETB strategy\n";
}

inline std::optional<ErrorPeriodMap> load_map_if_needed(const SimConfig& cfg) {
  if (cfg.strategy == Strategy::kETB && cfg.congestion != Congestion::kNone) {
    if (cfg.map_file.empty())
      throw ConfigError(
          "ETB with congestion control requires a calibration map: set map_file "
          "(produced by the calibrate command)");
    return ErrorPeriodMap::load_csv_file(cfg.map_file);
  }
  if (!cfg.map_file.empty()) return ErrorPeriodMap::load_csv_file(cfg.map_file);
  return std::nullopt;
}

inline std::filesystem::path prepare_out(const CommonOpts& o) {
  std::filesystem::path dir = resolve_out_dir(o);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + p.string() + "'");
  out << text;
}

inline int effective_jobs(int jobs) {
  if (jobs > 0) return jobs;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 4 : static_cast<int>(hw);
}

inline std::vector<double> parse_list(const std::string& csv) {
  std::vector<double> out;
  std::istringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stod(item));
  }
  return out;
}

struct SchemeSpec {
  Strategy strategy;
  Congestion congestion;
};

inline SchemeSpec parse_scheme(const std::string& s) {
  const auto plus = s.find('+');
  const std::string strat = plus == std::string::npos ? s : s.substr(0, plus);
  const std::string cong = plus == std::string::npos ? "none" : s.substr(plus + 1);
  SchemeSpec spec;
  if (strat == "pb") spec.strategy = Strategy::kPB;
  else if (strat == "etb") spec.strategy = Strategy::kETB;
  else throw ConfigError("unknown strategy '" + strat + "' in scheme '" + s + "'");
  if (cong == "none") spec.congestion = Congestion::kNone;
  else if (cong == "cscc") spec.congestion = Congestion::kCSCC;
  else if (cong == "nacc") spec.congestion = Congestion::kNACC;
  else throw ConfigError("unknown congestion scheme '" + cong + "' in '" + s + "'");
  return spec;
}

inline std::string format_num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

// ---- commands -----------------------------------------------------------

inline int cmd_run(const CommonOpts& o) {
  LoadedConfig lc = build_config(o);
  warn_conflicts(lc);
  const auto map = load_map_if_needed(lc.cfg);
  const auto out_dir = prepare_out(o);

  const std::uint64_t rs = run_seed_for(lc.cfg.seed, 0);
  const TraceSet trace = make_trace(lc.cfg, rs);
  const RunMetrics m = run_sim(lc.cfg, trace, rs, map ? &*map : nullptr);

  write_file(out_dir / "run_metrics.json", metrics_to_json(m).dump(2) + "\n");
  std::ostringstream ts;
  write_timeseries_csv(m, ts);
  write_file(out_dir / "run_timeseries.csv", ts.str());

  std::cout << "run: mean_error=" << m.mean_error << " m, p95=" << m.p95_error
            << " m, detection_error=" << m.detection_error_prob
            << ", collision_rate=" << m.collision_rate << " /veh/s, mean_inter_tx="
            << m.mean_inter_tx << " s\n";
  return kExitOk;
}

inline int cmd_sweep(const CommonOpts& o, const std::string& schemes_csv,
                     const std::string& t_periods_csv, const std::string& e_thrs_csv,
                     const std::string& n_scs_csv) {
  LoadedConfig lc = build_config(o);
  const auto out_dir = prepare_out(o);

  std::vector<SchemeSpec> schemes;
  if (!schemes_csv.empty()) {
    std::istringstream ss(schemes_csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) schemes.push_back(parse_scheme(item));
    }
  } else {
    schemes.push_back({lc.cfg.strategy, lc.cfg.congestion});
  }
  const std::vector<double> t_periods = parse_list(t_periods_csv);
  const std::vector<double> e_thrs = parse_list(e_thrs_csv);
  std::vector<int> n_scs;
  for (double v : parse_list(n_scs_csv)) n_scs.push_back(static_cast<int>(v));
  if (n_scs.empty()) n_scs.push_back(lc.cfg.n_sc);

  const bool any_axis = !schemes_csv.empty() || !t_periods.empty() || !e_thrs.empty() ||
                        !n_scs_csv.empty();
  if (!any_axis) throw ConfigError("empty sweep grid: give --scheme, --t-period, --e-thr or --n-sc");

  std::vector<SweepPoint> points;
  for (const SchemeSpec& sch : schemes) {
    const bool etb = sch.strategy == Strategy::kETB;
    const bool controlled = sch.congestion != Congestion::kNone;
    std::vector<double> axis;
    if (controlled) {
      axis = {0.0};  // parameters come from the congestion controller
    } else if (etb) {
      axis = e_thrs.empty() ? std::vector<double>{lc.cfg.e_thr} : e_thrs;
    } else {
      axis = t_periods.empty() ? std::vector<double>{lc.cfg.t_period} : t_periods;
    }
    for (int nsc : n_scs) {
      for (double v : axis) {
        SweepPoint p;
        p.cfg = lc.cfg;
        p.cfg.strategy = sch.strategy;
        p.cfg.congestion = sch.congestion;
        p.cfg.n_sc = nsc;
        std::string key = to_string(sch.strategy) + "+" + to_string(sch.congestion);
        if (!controlled) {
          if (etb) {
            p.cfg.e_thr = v;
            key += "_et" + format_num(v);
          } else {
            p.cfg.t_period = v;
            key += "_tp" + format_num(v);
          }
        }
        key += "_nsc" + std::to_string(nsc);
        p.key = key;
        points.push_back(std::move(p));
      }
    }
  }
  if (points.empty()) throw ConfigError("empty sweep grid");

  std::optional<ErrorPeriodMap> map;
  for (const auto& p : points) {
    if (p.cfg.strategy == Strategy::kETB && p.cfg.congestion != Congestion::kNone) {
      map = load_map_if_needed(p.cfg);
      break;
    }
  }

  const CampaignSummary summary = monte_carlo(points, lc.cfg.n_sim, lc.cfg.seed,
                                              effective_jobs(o.jobs), map ? &*map : nullptr);

  write_file(out_dir / "summary.json", campaign_to_json(summary).dump(2) + "\n");
  std::ostringstream pts, agg;
  write_points_csv(summary, pts);
  write_points_summary_csv(summary, agg);
  write_file(out_dir / "points.csv", pts.str());
  write_file(out_dir / "points_summary.csv", agg.str());
  std::cout << "sweep: " << summary.points.size() << " points x " << summary.n_sim
            << " runs written to " << out_dir.string() << "\n";
  return kExitOk;
}

inline int cmd_calibrate(const CommonOpts& o) {
  LoadedConfig lc = build_config(o);
  const auto out_dir = prepare_out(o);
  const std::uint64_t rs = run_seed_for(lc.cfg.seed, 0);
  const TraceSet trace = make_trace(lc.cfg, rs);
  const HorizonCdfs cdfs = calibrate_error_distribution(lc.cfg, trace, rs);
  bool corrected = false;
  const ErrorPeriodMap map = build_error_period_map(cdfs, lc.cfg.t_t, &corrected);
  if (corrected) std::cerr << "warning: non-monotone empirical CDFs corrected isotonically\n";
  if (!cdfs.sparse_horizons.empty())
    std::cerr << "warning: " << cdfs.sparse_horizons.size()
              << " horizons had < 100 samples (bins widened)\n";

  std::ostringstream map_os, hor_os;
  map.save_csv(map_os);
  write_horizon_csv(cdfs, lc.cfg.t_t, hor_os);
  write_file(out_dir / "error_period_map.csv", map_os.str());
  write_file(out_dir / "horizon_error.csv", hor_os.str());
  std::cout << "calibrate: map over E_thr in [" << map.thresholds().front() << ", "
            << map.thresholds().back() << "] m -> T_period in [" << map.periods().front()
            << ", " << map.periods().back() << "] s\n";
  return kExitOk;
}

inline int cmd_analyze_pcoll(const CommonOpts& o, int n_sc_max, int rho_count, double rho_min,
                             double rho_max) {
  const auto out_dir = prepare_out(o);
  if (n_sc_max < 1 || rho_count < 2 || rho_min <= 0 || rho_max > 1 || rho_min >= rho_max)
    throw ConfigError("analyze-pcoll: need n_sc_max >= 1 and 0 < rho_min < rho_max <= 1");
  std::ostringstream os;
  os << "# vdm-csv v1\n";
  os << "n_sc,rho,p_coll\n";
  char buf[96];
  for (int nsc = 1; nsc <= n_sc_max; ++nsc) {
    const double n_ht = nsc * hidden_area_fraction();
    for (int i = 0; i < rho_count; ++i) {
      const double f = static_cast<double>(i) / (rho_count - 1);
      const double rho = rho_min * std::pow(rho_max / rho_min, f);
      std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", nsc, rho, p_coll(rho, n_ht));
      os << buf;
    }
  }
  write_file(out_dir / "pcoll.csv", os.str());
  std::cout << "analyze-pcoll: " << n_sc_max * rho_count << " rows written\n";
  return kExitOk;
}

inline int cmd_analyze_map(const CommonOpts& o, const std::string& map_path,
                           const std::string& t_periods_csv) {
  const auto out_dir = prepare_out(o);
  if (map_path.empty()) throw ConfigError("analyze-map: --map is required");
  const ErrorPeriodMap map = ErrorPeriodMap::load_csv_file(map_path);

  std::ostringstream os;
  os << "# vdm-csv v1\n";
  os << "e_thr_m,t_period_s,e_roundtrip_m\n";
  char buf[128];
  for (std::size_t i = 0; i < map.thresholds().size(); ++i) {
    const double e = map.thresholds()[i];
    const double t = map.periods()[i];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", e, t, map.threshold_for(t));
    os << buf;
  }
  write_file(out_dir / "map_curve.csv", os.str());

  if (!t_periods_csv.empty()) {
    std::ostringstream inv;
    inv << "# vdm-csv v1\n";
    inv << "t_period_s,e_thr_m\n";
    for (double t : parse_list(t_periods_csv)) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", t, map.threshold_for(t));
      inv << buf;
    }
    write_file(out_dir / "map_inverse.csv", inv.str());
  }
  std::cout << "analyze-map: " << map.thresholds().size() << " rows written\n";
  return kExitOk;
}

inline int cmd_gen_traffic(const CommonOpts& o, std::int64_t slots) {
  LoadedConfig lc = build_config(o);
  const auto out_dir = prepare_out(o);
  const std::uint64_t rs = run_seed_for(lc.cfg.seed, 0);
  GridMapSpec map = GridMapSpec::square(lc.cfg.area, lc.cfg.block, lc.cfg.v_max);
  map.p_straight = lc.cfg.p_straight;
  map.p_left = lc.cfg.p_left;
  map.p_right = lc.cfg.p_right;
  const std::int64_t n = slots > 0 ? slots : lc.cfg.n_slots();
  const TraceSet trace = synth_trips(map, lc.cfg.n_vehicles, n, lc.cfg.t_t, rs);
  std::ostringstream os;
  save_trace_csv(trace, os);
  write_file(out_dir / "trace.csv", os.str());
  std::cout << "gen-traffic: " << trace.vehicles.size() << " vehicles, " << trace.n_slots
            << " slots, " << trace.area_km2 << " km^2 ("
            << trace.vehicles.size() / std::max(trace.area_km2, 1e-9) << " vehicles/km^2)\n";
  return kExitOk;
}

}  // namespace cli_detail

/// Entry point shared by the binary and the CLI tests.
inline int run_cli(int argc, const char* const* argv) {
  using namespace cli_detail;
  CLI::App app{"vdm - cooperative vehicle dynamic-mapping simulator"};
  app.require_subcommand(1);

  CommonOpts run_o, sweep_o, cal_o, pcoll_o, amap_o, gen_o;
  std::string schemes, t_periods, e_thrs, n_scs;
  int n_sc_max = 10, rho_count = 100;
  double rho_min = 0.001, rho_max = 1.0;
  std::string map_path, inv_periods;
  std::int64_t gen_slots = 0;

  auto* c_run = app.add_subcommand("run", "single simulation run");
  add_common(c_run, run_o);

  auto* c_sweep = app.add_subcommand("sweep", "Monte Carlo campaign over a parameter grid");
  add_common(c_sweep, sweep_o);
  c_sweep->add_option("--scheme", schemes,
                      "comma list of strategy[+congestion], e.g. pb,etb+nacc");
  c_sweep->add_option("--t-period", t_periods, "comma list of PB periods (s)");
  c_sweep->add_option("--e-thr", e_thrs, "comma list of ETB thresholds (m)");
  c_sweep->add_option("--n-sc", n_scs, "comma list of subcarrier counts");

  auto* c_cal = app.add_subcommand("calibrate", "build the error-threshold/period map");
  add_common(c_cal, cal_o);

  auto* c_pcoll = app.add_subcommand("analyze-pcoll", "collision probability curves");
  add_common(c_pcoll, pcoll_o);
  c_pcoll->add_option("--n-sc-max", n_sc_max, "curves for 1..N same-subcarrier users");
  c_pcoll->add_option("--rho-count", rho_count, "points per curve");
  c_pcoll->add_option("--rho-min", rho_min, "smallest rho");
  c_pcoll->add_option("--rho-max", rho_max, "largest rho");

  auto* c_amap = app.add_subcommand("analyze-map", "export a calibration map curve");
  add_common(c_amap, amap_o);
  c_amap->add_option("--map", map_path, "error_period_map.csv path");
  c_amap->add_option("--t-period", inv_periods, "comma list of periods to invert (s)");

  auto* c_gen = app.add_subcommand("gen-traffic", "synthesize a mobility trace CSV");
  add_common(c_gen, gen_o);
  c_gen->add_option("--slots", gen_slots, "trace length in slots (default t_sim/t_t)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (c_run->parsed()) return cmd_run(run_o);
    if (c_sweep->parsed()) return cmd_sweep(sweep_o, schemes, t_periods, e_thrs, n_scs);
    if (c_cal->parsed()) return cmd_calibrate(cal_o);
    if (c_pcoll->parsed())
      return cmd_analyze_pcoll(pcoll_o, n_sc_max, rho_count, rho_min, rho_max);
    if (c_amap->parsed()) return cmd_analyze_map(amap_o, map_path, inv_periods);
    if (c_gen->parsed()) return cmd_gen_traffic(gen_o, gen_slots);
    std::cerr << "error: no subcommand given\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace vdm
