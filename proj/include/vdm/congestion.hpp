#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "vdm/errors.hpp"
#include "vdm/markov.hpp"

namespace vdm {

/// LIMERIC knobs (CSCC scheme).
struct LimericParams {
  double alpha = 0.1;
  double beta = 0.245;  // (2 - alpha) / K
  double delta_min = -1.0;
  double delta_max = 1.0;
  double cbr_target = 0.68;
  double rho_min = 0.0006;
  double rho_max = 1.0;
};

/// Per-vehicle congestion bookkeeping: attempt probability rho, the busy
/// history window feeding CBR_local, and the smoothed CBR_vehicle.
class CongestionState {
 public:
  CongestionState() = default;
  CongestionState(double rho, int window, int update_period)
      : rho_(rho), window_(std::max(1, window)), update_period_(std::max(1, update_period)) {
    history_.assign(window_, 0);
  }

  /// Records one slot's busy flag. Every update_period slots CBR_vehicle is
  /// smoothed as 0.5*CBR_vehicle + 0.5*CBR_local; returns true on those
  /// update slots so the caller can refresh rho and strategy parameters.
  bool update_cbr(bool busy) {
    if (filled_ == window_) busy_count_ -= history_[head_];
    history_[head_] = busy ? 1 : 0;
    busy_count_ += history_[head_];
    head_ = (head_ + 1) % window_;
    filled_ = std::min(filled_ + 1, static_cast<std::int64_t>(window_));
    if (++since_update_ < update_period_) return false;
    since_update_ = 0;
    cbr_vehicle_ = 0.5 * cbr_vehicle_ + 0.5 * cbr_local();
    return true;
  }

  /// Busy fraction over the last min(window, age) slots.
  double cbr_local() const {
    if (filled_ == 0) return 0.0;
    return static_cast<double>(busy_count_) / static_cast<double>(filled_);
  }

  double cbr_vehicle() const { return cbr_vehicle_; }
  double rho() const { return rho_; }
  void set_rho(double rho) { rho_ = rho; }

 private:
  double rho_ = 0.1;
  double cbr_vehicle_ = 0.0;
  int window_ = 100;
  int update_period_ = 10;
  std::vector<std::uint8_t> history_;
  int head_ = 0;
  std::int64_t filled_ = 0;
  std::int64_t busy_count_ = 0;
  int since_update_ = 0;
};

/// One LIMERIC adaptation: delta = beta * (CBR_target - CBR_vehicle) clamped
/// one-sidedly (min on the positive branch, max on the negative one), then
/// rho' = [(1-alpha) rho + delta] clamped into [rho_min, rho_max].
inline double limeric_step(double rho, double cbr_vehicle, const LimericParams& p) {
  const double err = p.cbr_target - cbr_vehicle;
  double delta;
  if (err > 0.0)
    delta = std::min(p.beta * err, p.delta_max);
  else
    delta = std::max(p.beta * err, p.delta_min);
  return std::clamp((1.0 - p.alpha) * rho + delta, p.rho_min, p.rho_max);
}

/// Empirical per-horizon error distributions from the calibration run:
/// cdf[h-1][k] = P(e_h <= edges[k]) for horizons h = 1..h_max.
struct HorizonCdfs {
  std::vector<double> edges;               // m, ascending (1 m bins)
  std::vector<std::vector<double>> cdf;    // [h_max][edges.size()]
  std::vector<double> mean_error;          // [h_max], diagnostic
  std::vector<std::int64_t> samples;       // [h_max]
  std::vector<int> sparse_horizons;        // horizons with < 100 samples (bins widened)
  int h_max = 0;
};

/// Monotone map between the ETB error threshold and the equivalent mean
/// inter-transmission period, with an interpolated inverse.
class ErrorPeriodMap {
 public:
  ErrorPeriodMap() = default;
  ErrorPeriodMap(std::vector<double> e_grid, std::vector<double> periods)
      : e_grid_(std::move(e_grid)), period_(std::move(periods)) {}

  bool empty() const { return e_grid_.empty(); }
  const std::vector<double>& thresholds() const { return e_grid_; }
  const std::vector<double>& periods() const { return period_; }

  /// F(E): expected period for threshold e, clamped to the table range.
  double period_for(double e) const {
    return interp(e_grid_, period_, e);
  }

  /// F^-1(T): smallest threshold whose period reaches t, by monotone
  /// interpolation; clamped to the tabulated threshold range.
  double threshold_for(double t) const {
    if (period_.empty()) throw ConfigError("error-period map is empty");
    if (t <= period_.front()) return e_grid_.front();
    if (t >= period_.back()) return e_grid_.back();
    // first index with period >= t
    auto it = std::lower_bound(period_.begin(), period_.end(), t);
    std::size_t hi = static_cast<std::size_t>(it - period_.begin());
    std::size_t lo = hi - 1;
    const double span = period_[hi] - period_[lo];
    if (span <= 0.0) return e_grid_[lo];
    const double f = (t - period_[lo]) / span;
    return e_grid_[lo] + f * (e_grid_[hi] - e_grid_[lo]);
  }

  void save_csv(std::ostream& out) const {
    out << "# vdm-map v1\n";
    out << "e_thr_m,t_period_s\n";
    char buf[64];
    for (std::size_t i = 0; i < e_grid_.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", e_grid_[i], period_[i]);
      out << buf;
    }
  }

  static ErrorPeriodMap load_csv(std::istream& in) {
    std::vector<double> e, t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      if (line.rfind("e_thr_m", 0) == 0) continue;  // header
      std::istringstream ss(line);
      std::string a, b;
      if (!std::getline(ss, a, ',') || !std::getline(ss, b))
        throw ParseError("expected 'e_thr,t_period' row", lineno);
      try {
        e.push_back(std::stod(a));
        t.push_back(std::stod(b));
      } catch (const std::exception&) {
        throw ParseError("bad numeric value in map row", lineno);
      }
    }
    if (e.empty()) throw ParseError("error-period map file has no rows");
    return ErrorPeriodMap(std::move(e), std::move(t));
  }

  static ErrorPeriodMap load_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open map file '" + path + "'");
    return load_csv(in);
  }

 private:
  static double interp(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
    if (xs.empty()) throw ConfigError("error-period map is empty");
    if (x <= xs.front()) return ys.front();
    if (x >= xs.back()) return ys.back();
    auto it = std::upper_bound(xs.begin(), xs.end(), x);
    std::size_t hi = static_cast<std::size_t>(it - xs.begin());
    std::size_t lo = hi - 1;
    const double f = (x - xs[lo]) / (xs[hi] - xs[lo]);
    return ys[lo] + f * (ys[hi] - ys[lo]);
  }

  std::vector<double> e_grid_;
  std::vector<double> period_;
};

/// T_period(E) = T_t * sum_{H=1..H_max} prod_{h=1..H} P(e_h <= E), floored
/// at one slot. Empirical CDFs are clamped monotone first (isotonic guard);
/// `warned` reports whether that correction actually changed anything.
inline ErrorPeriodMap build_error_period_map(const HorizonCdfs& cdfs, double t_t,
                                             bool* warned = nullptr) {
  if (cdfs.h_max <= 0 || cdfs.edges.empty())
    throw ConfigError("build_error_period_map: empty calibration input");
  bool corrected = false;
  std::vector<std::vector<double>> cdf = cdfs.cdf;
  for (auto& row : cdf) {
    double run_max = 0.0;
    for (auto& v : row) {
      if (v < run_max - 1e-12) corrected = true;
      run_max = std::max(run_max, std::clamp(v, 0.0, 1.0));
      v = run_max;
    }
  }
  if (warned) *warned = corrected;

  std::vector<double> periods(cdfs.edges.size(), 0.0);
  for (std::size_t k = 0; k < cdfs.edges.size(); ++k) {
    double sum = 0.0;
    double prod = 1.0;
    for (int h = 1; h <= cdfs.h_max; ++h) {
      prod *= cdf[h - 1][k];
      sum += prod;
      if (prod < 1e-9) break;  // geometric tail below any meaningful slot fraction
    }
    periods[k] = std::max(t_t, t_t * sum);
  }
  // monotone in E by construction; enforce against roundoff
  for (std::size_t k = 1; k < periods.size(); ++k)
    periods[k] = std::max(periods[k], periods[k - 1]);
  return ErrorPeriodMap(cdfs.edges, std::move(periods));
}

/// Converts a per-slot attempt probability into strategy parameters:
/// PB gets T_period = T_t / rho; ETB gets E_thr = F^-1(T_t / rho) through
/// the calibrated map.
struct StrategyUpdate {
  double t_period = 0.0;  // s (PB)
  double e_thr = 0.0;     // m (ETB)
};

inline StrategyUpdate apply_congestion(double rho, bool etb, double t_t,
                                       const ErrorPeriodMap* map) {
  if (rho <= 0.0) throw ConfigError("apply_congestion: rho must be > 0");
  StrategyUpdate out;
  const double period = t_t / rho;
  if (!etb) {
    out.t_period = period;
  } else {
    if (map == nullptr || map->empty())
      throw ConfigError("ETB with congestion control requires a calibrated error-period map");
    out.e_thr = map->threshold_for(period);
    out.t_period = period;
  }
  return out;
}

}  // namespace vdm
