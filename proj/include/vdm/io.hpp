#pragma once

#include <cstdio>
#include <ostream>
#include <string>

#include <json.hpp>

#include "vdm/congestion.hpp"
#include "vdm/engine.hpp"
#include "vdm/metrics.hpp"

namespace vdm {

inline nlohmann::json metrics_to_json(const RunMetrics& m) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["t_sim"] = m.t_sim;
  j["t_t"] = m.t_t;
  j["n_vehicles"] = m.n_vehicles;
  j["mean_error_m"] = m.mean_error;
  j["p95_error_m"] = m.p95_error;
  j["misdetect_prob"] = m.misdetect_prob;
  j["false_detect_prob"] = m.false_detect_prob;
  j["detection_error_prob"] = m.detection_error_prob;
  j["collision_rate_per_vehicle_s"] = m.collision_rate;
  j["mean_inter_tx_s"] = m.mean_inter_tx;
  j["hidden_collisions"] = m.hidden_collisions;
  j["grants"] = m.grants;
  j["tx_decisions"] = m.tx_decisions;
  j["mean_rho"] = m.mean_rho;
  return j;
}

inline void write_timeseries_csv(const RunMetrics& m, std::ostream& out) {
  out << "# vdm-csv v1\n";
  out << "slot,t_s,network_error_m\n";
  char buf[96];
  for (std::size_t i = 0; i < m.network_error_per_slot.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", i, static_cast<double>(i) * m.t_t,
                  m.network_error_per_slot[i]);
    out << buf;
  }
}

inline nlohmann::json point_coords_json(const SweepPoint& p) {
  nlohmann::json j;
  j["key"] = p.key;
  j["strategy"] = to_string(p.cfg.strategy);
  j["congestion"] = to_string(p.cfg.congestion);
  j["t_period_s"] = p.cfg.t_period;
  j["e_thr_m"] = p.cfg.e_thr;
  j["n_sc"] = p.cfg.n_sc;
  return j;
}

inline nlohmann::json campaign_to_json(const CampaignSummary& s) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["n_sim"] = s.n_sim;
  j["seed"] = s.base_seed;
  j["points"] = nlohmann::json::array();
  for (const auto& pr : s.points) {
    nlohmann::json p;
    p["coords"] = point_coords_json(pr.point);
    auto agg = [&](const char* name, auto getter) {
      nlohmann::json a;
      a["mean"] = mean_of(pr.runs, getter);
      a["std"] = stddev_of(pr.runs, getter);
      p["aggregates"][name] = a;
    };
    agg("mean_error_m", [](const RunMetrics& r) { return r.mean_error; });
    agg("p95_error_m", [](const RunMetrics& r) { return r.p95_error; });
    agg("detection_error_prob", [](const RunMetrics& r) { return r.detection_error_prob; });
    agg("collision_rate_per_vehicle_s", [](const RunMetrics& r) { return r.collision_rate; });
    agg("mean_inter_tx_s", [](const RunMetrics& r) { return r.mean_inter_tx; });
    p["runs"] = nlohmann::json::array();
    for (const auto& r : pr.runs) p["runs"].push_back(metrics_to_json(r));
    j["points"].push_back(std::move(p));
  }
  return j;
}

/// One row per (point, run): flat table for plotting.
inline void write_points_csv(const CampaignSummary& s, std::ostream& out) {
  out << "# vdm-csv v1\n";
  out << "key,strategy,congestion,t_period_s,e_thr_m,n_sc,run,mean_error_m,p95_error_m,"
         "misdetect_prob,false_detect_prob,detection_error_prob,collision_rate_per_vehicle_s,"
         "mean_inter_tx_s,mean_rho\n";
  char buf[512];
  for (const auto& pr : s.points) {
    for (std::size_t k = 0; k < pr.runs.size(); ++k) {
      const RunMetrics& r = pr.runs[k];
      std::snprintf(buf, sizeof buf,
                    "%s,%s,%s,%.17g,%.17g,%d,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                    "%.17g\n",
                    pr.point.key.c_str(), to_string(pr.point.cfg.strategy).c_str(),
                    to_string(pr.point.cfg.congestion).c_str(), pr.point.cfg.t_period,
                    pr.point.cfg.e_thr, pr.point.cfg.n_sc, k, r.mean_error, r.p95_error,
                    r.misdetect_prob, r.false_detect_prob, r.detection_error_prob,
                    r.collision_rate, r.mean_inter_tx, r.mean_rho);
      out << buf;
    }
  }
}

/// One row per point: cross-run means and standard deviations.
inline void write_points_summary_csv(const CampaignSummary& s, std::ostream& out) {
  out << "# vdm-csv v1\n";
  out << "key,strategy,congestion,t_period_s,e_thr_m,n_sc,n_runs,mean_error_m,std_error_m,"
         "p95_error_m,detection_error_prob,collision_rate_per_vehicle_s,mean_inter_tx_s\n";
  char buf[512];
  for (const auto& pr : s.points) {
    std::snprintf(
        buf, sizeof buf, "%s,%s,%s,%.17g,%.17g,%d,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
        pr.point.key.c_str(), to_string(pr.point.cfg.strategy).c_str(),
        to_string(pr.point.cfg.congestion).c_str(), pr.point.cfg.t_period, pr.point.cfg.e_thr,
        pr.point.cfg.n_sc, pr.runs.size(),
        mean_of(pr.runs, [](const RunMetrics& r) { return r.mean_error; }),
        stddev_of(pr.runs, [](const RunMetrics& r) { return r.mean_error; }),
        mean_of(pr.runs, [](const RunMetrics& r) { return r.p95_error; }),
        mean_of(pr.runs, [](const RunMetrics& r) { return r.detection_error_prob; }),
        mean_of(pr.runs, [](const RunMetrics& r) { return r.collision_rate; }),
        mean_of(pr.runs, [](const RunMetrics& r) { return r.mean_inter_tx; }));
    out << buf;
  }
}

/// Per-horizon mean predictive error (the calibration diagnostic curve).
inline void write_horizon_csv(const HorizonCdfs& cdfs, double t_t, std::ostream& out) {
  out << "# vdm-csv v1\n";
  out << "h_slots,t_s,mean_error_m,samples\n";
  char buf[128];
  for (int h = 1; h <= cdfs.h_max; ++h) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%lld\n", h, h * t_t, cdfs.mean_error[h - 1],
                  static_cast<long long>(cdfs.samples[h - 1]));
    out << buf;
  }
}

}  // namespace vdm
