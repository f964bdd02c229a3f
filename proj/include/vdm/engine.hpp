#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "vdm/channel.hpp"
#include "vdm/config.hpp"
#include "vdm/congestion.hpp"
#include "vdm/core.hpp"
#include "vdm/fcd.hpp"
#include "vdm/markov.hpp"
#include "vdm/metrics.hpp"
#include "vdm/mobility.hpp"
#include "vdm/strategy.hpp"
#include "vdm/tracking.hpp"
#include "vdm/ukf.hpp"

namespace vdm {

inline NoiseModel noise_from_config(const SimConfig& cfg) {
  NoiseModel nm;
  nm.q = cfg.q;
  // table labels r33/r44/r55 are speed/acceleration/heading; state order is
  // (x, y, h, u, a, omega)
  nm.r_diag << cfg.r11, cfg.r22, cfg.r55, cfg.r33, cfg.r44, cfg.r66;
  return nm;
}

inline RichardsParams richards_from_config(const SimConfig& cfg) {
  return RichardsParams{cfg.richards_a, cfg.richards_b, cfg.richards_c,
                        cfg.richards_d, cfg.richards_e, cfg.richards_nu, cfg.d0};
}

inline UtParams ut_from_config(const SimConfig& cfg) {
  return UtParams{cfg.ut_alpha, cfg.ut_beta, cfg.ut_kappa};
}

/// Full per-run simulation state. One instance per run; single-threaded.
class World {
 public:
  World(const SimConfig& cfg, const TraceSet& trace, std::uint64_t seed,
        const ErrorPeriodMap* map = nullptr)
      : cfg_(cfg),
        trace_(trace),
        map_(map),
        nm_(noise_from_config(cfg)),
        ut_(ut_from_config(cfg)),
        richards_(richards_from_config(cfg)),
        channel_(cfg.n_sc, cfg.delay_slots()),
        noise_rng_(derive_seed(seed, static_cast<std::uint64_t>(RngStream::kNoise))),
        chan_rng_(derive_seed(seed, static_cast<std::uint64_t>(RngStream::kChannel))),
        engine_rng_(derive_seed(seed, static_cast<std::uint64_t>(RngStream::kEngine))),
        metrics_(cfg.t_sim, cfg.t_t, cfg.n_vehicles, cfg.warmup_slots()) {
    cfg_.validate();
    const bool etb = cfg_.strategy == Strategy::kETB;
    if (etb && cfg_.congestion != Congestion::kNone && (map_ == nullptr || map_->empty()))
      throw ConfigError(
          "ETB with congestion control needs a calibrated error-period map "
          "(set map_file or run the calibrate command first)");
    if (cfg_.congestion == Congestion::kNACC)
      nacc_ = std::make_unique<NaccSolver>(cfg_.rho_min, cfg_.rho_max);
    vehicles_.resize(trace_.vehicles.size());
  }

  std::int64_t now() const { return now_; }

  /// One timeslot. Sub-step order is fixed: truth, graph, deliveries,
  /// track expiry, filters, congestion, strategy decisions, channel
  /// arbitration, metrics. Returns false once the trace is exhausted.
  bool step() {
    if (now_ >= trace_.n_slots || now_ >= cfg_.n_slots()) return false;

    // (1) ground truth for this slot
    std::vector<std::pair<VehicleId, VehicleState>> truth_vec;
    truth_.clear();
    for (std::size_t k = 0; k < trace_.vehicles.size(); ++k) {
      const VehicleState* s = trace_.state_at(k, now_);
      auto& ctx = vehicles_[k];
      if (s == nullptr) {
        ctx.active = false;
        continue;
      }
      truth_.emplace(trace_.vehicles[k].id, *s);
      truth_vec.emplace_back(trace_.vehicles[k].id, *s);
      if (!ctx.initialized) activate(ctx, trace_.vehicles[k].id, *s);
      ctx.active = true;
    }

    // (2) connectivity
    graph_ = EuclideanGraph::build(truth_vec, cfg_.range);

    // (3) due deliveries -> remote track ingestion + new-neighbor flags
    for (const Delivery& d : channel_.deliver_due(now_)) {
      VehicleCtx* rx = find(d.receiver);
      if (rx == nullptr || !rx->active) continue;
      if (rx->tracks.ingest(d.packet.sender, d.packet.payload, now_))
        rx->strat.new_neighbor = true;
    }

    // (4) track timeout
    for (auto& ctx : vehicles_) {
      if (ctx.active) ctx.tracks.expire(now_, cfg_.t_t, cfg_.delta_track);
    }

    // (5) filter bank: self predict+update, shadow predict, tracks predict
    for (auto& ctx : vehicles_) {
      if (!ctx.active) continue;
      const VehicleState& truth = truth_.at(ctx.id);
      if (ctx.fresh) {
        ctx.fresh = false;  // seeded from the first observation this slot
      } else {
        try {
          ctx.self = ukf_predict(ctx.self, cfg_.t_t, nm_, ut_, cfg_.eps_omega);
          const Vec6 obs = noisy_observation(truth, nm_, noise_rng_);
          ctx.self = ukf_update(ctx.self, obs, nm_, ut_);
        } catch (const FilterDivergence&) {
          // restart from a fresh observation
          seed_self(ctx, truth);
        }
        try {
          ctx.shadow = shadow_predict(ctx.shadow, cfg_.t_t, nm_, ut_, cfg_.eps_omega);
        } catch (const FilterDivergence&) {
          ctx.shadow = shadow_reset(ctx.self);
        }
        ctx.tracks.predict_all(cfg_.t_t, nm_, ut_, cfg_.eps_omega);
      }
    }

    // (6) congestion control
    if (cfg_.congestion != Congestion::kNone) {
      LimericParams lp{cfg_.alpha,     cfg_.beta_eff(), cfg_.delta_min, cfg_.delta_max,
                       cfg_.cbr_target, cfg_.rho_min,    cfg_.rho_max};
      const bool etb = cfg_.strategy == Strategy::kETB;
      for (auto& ctx : vehicles_) {
        if (!ctx.active) continue;
        if (!ctx.cong.update_cbr(ctx.busy_prev)) continue;
        double rho;
        if (cfg_.congestion == Congestion::kCSCC) {
          rho = limeric_step(ctx.cong.rho(), ctx.cong.cbr_vehicle(), lp);
        } else {
          rho = nacc_->solve(static_cast<double>(ctx.tracks.size()), cfg_.n_sc, cfg_.p_thr);
          rho = std::clamp(rho, cfg_.rho_min, cfg_.rho_max);
        }
        ctx.cong.set_rho(rho);
        const StrategyUpdate upd = apply_congestion(rho, etb, cfg_.t_t, map_);
        if (etb)
          ctx.strat.e_thr = upd.e_thr;
        else
          ctx.strat.t_period = upd.t_period;
        metrics_.record_rho(rho);
      }
    }

    // (7) transmission decisions
    for (auto& ctx : vehicles_) {
      if (!ctx.active) continue;
      bool tx;
      if (ctx.strat.kind == StrategyKind::kPB) {
        std::tie(tx, ctx.strat) = pb_decide(ctx.strat, cfg_.t_t);
      } else {
        const double d_div = distance(ctx.self.mean, ctx.shadow.mean);
        std::tie(tx, ctx.strat) = etb_decide(ctx.strat, d_div, cfg_.t_t);
      }
      ctx.strat.new_neighbor = false;
      if (tx) {
        channel_.enqueue(ctx.id, ctx.self, now_);
        ctx.shadow = shadow_reset(ctx.self);
        metrics_.record_decision();
      }
    }

    // (8) channel arbitration
    const SlotOutcome outcome = channel_.resolve_slot(graph_, now_, chan_rng_);
    for (const Packet& p : outcome.granted) metrics_.record_grant(p.sender, now_);
    metrics_.record_collisions(static_cast<std::int64_t>(outcome.collisions.size()));
    for (auto& ctx : vehicles_) {
      if (ctx.active) ctx.busy_prev = outcome.busy.count(ctx.id) != 0;
    }

    // (9) metrics snapshot
    std::vector<double> ego_errors;
    std::vector<DetectionCounts> detections;
    for (const auto& ctx : vehicles_) {
      if (!ctx.active) continue;
      ego_errors.push_back(ego_error(ctx.id, ctx.self, ctx.tracks, truth_, richards_));
      std::vector<VehicleId> believed;
      believed.reserve(ctx.tracks.size());
      for (const auto& [tid, _] : ctx.tracks.entries()) believed.push_back(tid);
      detections.push_back(detection_error(graph_.neighbors(ctx.id), believed));
    }
    metrics_.record_slot(now_, ego_errors, detections);

    ++now_;
    return true;
  }

  RunMetrics finish() const { return metrics_.aggregate(); }

  // introspection for tests
  struct VehicleCtx {
    VehicleId id = 0;
    bool initialized = false;
    bool active = false;
    bool fresh = false;
    StateEstimate self;
    StateEstimate shadow;
    TrackTable tracks;
    StrategyState strat;
    CongestionState cong;
    bool busy_prev = false;
  };

  const VehicleCtx* vehicle(VehicleId id) const {
    for (const auto& ctx : vehicles_)
      if (ctx.initialized && ctx.id == id) return &ctx;
    return nullptr;
  }
  const EuclideanGraph& graph() const { return graph_; }
  const Channel& channel() const { return channel_; }

 private:
  VehicleCtx* find(VehicleId id) {
    for (auto& ctx : vehicles_)
      if (ctx.initialized && ctx.id == id) return &ctx;
    return nullptr;
  }

  void seed_self(VehicleCtx& ctx, const VehicleState& truth) {
    const Vec6 obs = noisy_observation(truth, nm_, noise_rng_);
    ctx.self.mean = from_vec(obs);
    ctx.self.cov = nm_.measurement();
    ctx.shadow = shadow_reset(ctx.self);
  }

  void activate(VehicleCtx& ctx, VehicleId id, const VehicleState& truth) {
    ctx.id = id;
    ctx.initialized = true;
    ctx.fresh = true;
    seed_self(ctx, truth);
    ctx.strat.kind = cfg_.strategy == Strategy::kETB ? StrategyKind::kETB : StrategyKind::kPB;
    ctx.strat.t_period = cfg_.t_period;
    ctx.strat.e_thr = cfg_.e_thr;
    ctx.strat.t_max = cfg_.t_max;
    // randomized initial phase; synchronized timers would lock every
    // vehicle into the same transmission slots
    const double horizon = std::min(
        ctx.strat.kind == StrategyKind::kPB ? cfg_.t_period : cfg_.t_max, cfg_.t_sim);
    ctx.strat.t_last_tx = engine_rng_.uniform(0.0, std::max(horizon, cfg_.t_t));
    const double rho0 =
        std::clamp(cfg_.cbr_target / cfg_.k_eff(), cfg_.rho_min, cfg_.rho_max);
    ctx.cong = CongestionState(rho0, cfg_.n_cbr_avg, cfg_.n_cbr_update);
  }

  SimConfig cfg_;
  const TraceSet& trace_;
  const ErrorPeriodMap* map_;
  NoiseModel nm_;
  UtParams ut_;
  RichardsParams richards_;
  Channel channel_;
  Rng noise_rng_;
  Rng chan_rng_;
  Rng engine_rng_;
  MetricsAccumulator metrics_;
  std::unique_ptr<NaccSolver> nacc_;

  std::int64_t now_ = 0;
  std::vector<VehicleCtx> vehicles_;  // same order as trace_.vehicles (ascending id)
  std::map<VehicleId, VehicleState> truth_;
  EuclideanGraph graph_;
};

/// One complete deterministic run.
inline RunMetrics run_sim(const SimConfig& cfg, const TraceSet& trace, std::uint64_t seed,
                          const ErrorPeriodMap* map = nullptr) {
  World w(cfg, trace, seed, map);
  while (w.step()) {
  }
  return w.finish();
}

// ---------------------------------------------------------------------------
// Calibration: purely predictive error distributions per horizon

/// Runs self-tracking UKFs over the trace and, from reset points every
/// `calib_stride` slots, lets shadow branches coast for h = 1..h_max slots,
/// recording the position error against truth on 1 m bins.
inline HorizonCdfs calibrate_error_distribution(const SimConfig& cfg, const TraceSet& trace,
                                                std::uint64_t seed) {
  const NoiseModel nm = noise_from_config(cfg);
  const UtParams ut = ut_from_config(cfg);
  Rng noise_rng(derive_seed(seed, static_cast<std::uint64_t>(RngStream::kNoise)));

  constexpr int kMaxBin = 200;  // m
  const int h_max = cfg.h_max;
  std::vector<std::vector<std::int64_t>> hist(h_max, std::vector<std::int64_t>(kMaxBin + 1, 0));
  std::vector<double> err_sum(h_max, 0.0);
  std::vector<std::int64_t> samples(h_max, 0);

  struct Branch {
    StateEstimate est;
    int age = 0;
  };
  struct Ctx {
    bool init = false;
    StateEstimate self;
    std::vector<Branch> branches;
    std::int64_t entry = 0;
  };
  std::vector<Ctx> ctxs(trace.vehicles.size());

  const std::int64_t end = std::min<std::int64_t>(trace.n_slots, cfg.n_slots());
  for (std::int64_t slot = 0; slot < end; ++slot) {
    for (std::size_t k = 0; k < trace.vehicles.size(); ++k) {
      const VehicleState* truth = trace.state_at(k, slot);
      auto& c = ctxs[k];
      if (truth == nullptr) {
        c.init = false;  // vehicle left; branches die with it
        c.branches.clear();
        continue;
      }
      if (!c.init) {
        const Vec6 obs = noisy_observation(*truth, nm, noise_rng);
        c.self.mean = from_vec(obs);
        c.self.cov = nm.measurement();
        c.init = true;
        c.entry = slot;
        c.branches.clear();
      } else {
        try {
          c.self = ukf_predict(c.self, cfg.t_t, nm, ut, cfg.eps_omega);
          const Vec6 obs = noisy_observation(*truth, nm, noise_rng);
          c.self = ukf_update(c.self, obs, nm, ut);
        } catch (const FilterDivergence&) {
          const Vec6 obs = noisy_observation(*truth, nm, noise_rng);
          c.self.mean = from_vec(obs);
          c.self.cov = nm.measurement();
        }
        for (auto& b : c.branches) {
          b.est = ukf_predict(b.est, cfg.t_t, nm, ut, cfg.eps_omega);
          b.age += 1;
          const double e = distance(b.est.mean, *truth);
          const int bin = std::min(kMaxBin, static_cast<int>(std::floor(e)));
          hist[b.age - 1][bin] += 1;
          err_sum[b.age - 1] += e;
          samples[b.age - 1] += 1;
        }
        std::erase_if(c.branches, [&](const Branch& b) { return b.age >= h_max; });
      }
      if ((slot - c.entry) % cfg.calib_stride == 0) c.branches.push_back({c.self, 0});
    }
  }

  HorizonCdfs out;
  out.h_max = h_max;
  out.edges.resize(kMaxBin);
  for (int e = 0; e < kMaxBin; ++e) out.edges[e] = static_cast<double>(e + 1);
  out.cdf.assign(h_max, std::vector<double>(kMaxBin, 0.0));
  out.mean_error.assign(h_max, 0.0);
  out.samples = samples;
  for (int h = 0; h < h_max; ++h) {
    const double n = static_cast<double>(std::max<std::int64_t>(samples[h], 1));
    std::int64_t cum = 0;
    for (int e = 0; e < kMaxBin; ++e) {
      cum += hist[h][e];
      out.cdf[h][e] = static_cast<double>(cum) / n;
    }
    out.mean_error[h] = err_sum[h] / n;
    if (samples[h] < 100) {
      // sparse horizon: keep the 2 m-bin values (even edges) exact and
      // interpolate the odd edges between them
      auto& row = out.cdf[h];
      for (int e = 0; e < kMaxBin; e += 2) {
        const double below = e == 0 ? 0.0 : row[e - 1];
        const double above = e + 1 < kMaxBin ? row[e + 1] : row[e];
        row[e] = 0.5 * (below + above);
      }
      out.sparse_horizons.push_back(h + 1);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo campaigns

struct SweepPoint {
  std::string key;  // human-readable coordinates, e.g. "pb_tp0.5_nsc8"
  SimConfig cfg;
};

struct PointResult {
  SweepPoint point;
  std::vector<RunMetrics> runs;
};

struct CampaignSummary {
  std::vector<PointResult> points;
  int n_sim = 0;
  std::uint64_t base_seed = 0;
};

inline double mean_of(const std::vector<RunMetrics>& runs,
                      const std::function<double(const RunMetrics&)>& f) {
  if (runs.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : runs) s += f(r);
  return s / static_cast<double>(runs.size());
}

inline double stddev_of(const std::vector<RunMetrics>& runs,
                        const std::function<double(const RunMetrics&)>& f) {
  if (runs.size() < 2) return 0.0;
  const double m = mean_of(runs, f);
  double s = 0.0;
  for (const auto& r : runs) {
    const double d = f(r) - m;
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(runs.size() - 1));
}

/// Ground truth for one run: a shared file trace, or an on-the-fly grid
/// synthesis keyed by the run seed (so paired runs across sweep points see
/// identical traffic).
inline TraceSet make_trace(const SimConfig& cfg, std::uint64_t run_seed) {
  if (!cfg.trace.empty()) {
    if (cfg.trace.size() >= 4 && cfg.trace.substr(cfg.trace.size() - 4) == ".xml")
      return load_fcd_trace_file(cfg.trace, cfg.t_t);
    return load_trace_csv_file(cfg.trace);
  }
  GridMapSpec map = GridMapSpec::square(cfg.area, cfg.block, cfg.v_max);
  map.p_straight = cfg.p_straight;
  map.p_left = cfg.p_left;
  map.p_right = cfg.p_right;
  return synth_trips(map, cfg.n_vehicles, cfg.n_slots(), cfg.t_t, run_seed);
}

inline std::uint64_t run_seed_for(std::uint64_t base_seed, int run_index) {
  return derive_seed(base_seed, 0xC0FFEEull + static_cast<std::uint64_t>(run_index));
}

/// N_sim runs per sweep point with paired seeds across points. Runs execute
/// on `jobs` worker threads; results are ordered, so the summary is
/// independent of scheduling.
inline CampaignSummary monte_carlo(const std::vector<SweepPoint>& points, int n_sim,
                                   std::uint64_t base_seed, int jobs,
                                   const ErrorPeriodMap* map = nullptr) {
  if (points.empty()) throw ConfigError("monte_carlo: empty sweep");
  if (n_sim < 1) throw ConfigError("monte_carlo: n_sim must be >= 1");
  CampaignSummary summary;
  summary.n_sim = n_sim;
  summary.base_seed = base_seed;
  summary.points.resize(points.size());
  for (std::size_t p = 0; p < points.size(); ++p) {
    summary.points[p].point = points[p];
    summary.points[p].runs.resize(n_sim);
  }

  // pre-load file traces once; synthesized traces are per-run
  std::map<std::string, TraceSet> file_traces;
  for (const auto& pt : points) {
    if (!pt.cfg.trace.empty() && file_traces.find(pt.cfg.trace) == file_traces.end())
      file_traces.emplace(pt.cfg.trace, make_trace(pt.cfg, 0));
  }

  const int total = static_cast<int>(points.size()) * n_sim;
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&]() {
    while (true) {
      const int task = next.fetch_add(1);
      if (task >= total) return;
      const int p = task / n_sim;
      const int k = task % n_sim;
      try {
        const SimConfig& cfg = points[p].cfg;
        const std::uint64_t rs = run_seed_for(base_seed, k);
        if (!cfg.trace.empty()) {
          summary.points[p].runs[k] = run_sim(cfg, file_traces.at(cfg.trace), rs, map);
        } else {
          const TraceSet trace = make_trace(cfg, rs);
          summary.points[p].runs[k] = run_sim(cfg, trace, rs, map);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };

  const int n_workers = std::max(1, std::min(jobs, total));
  std::vector<std::thread> threads;
  threads.reserve(n_workers);
  for (int i = 0; i < n_workers; ++i) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return summary;
}

}  // namespace vdm
