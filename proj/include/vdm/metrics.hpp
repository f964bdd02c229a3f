#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "vdm/core.hpp"
#include "vdm/tracking.hpp"

namespace vdm {

/// Generalized logistic weight discounting far-away targets.
struct RichardsParams {
  double a = 1.0;
  double b = 0.05;
  double c = 1.0;
  double d = 1.0;
  double e = 0.0;
  double nu = 0.2;
  double d0 = 42.0;  // m
};

inline double richards_weight(double dist, const RichardsParams& p) {
  return p.a + (p.e - p.a) / std::pow(p.c + p.d * std::exp(-p.b * (dist - p.d0)), 1.0 / p.nu);
}

/// Weighted positioning error of one ego vehicle: the self estimate plus
/// every tracked target with ground truth this slot, each weighted by the
/// Richards curve at the true distance. Tracks of vehicles that left the
/// scenario carry no truth and are skipped here (they still count as false
/// detections in the detection metric).
inline double ego_error(VehicleId ego, const StateEstimate& self, const TrackTable& tracks,
                        const std::map<VehicleId, VehicleState>& truth,
                        const RichardsParams& rp) {
  const auto self_truth = truth.find(ego);
  if (self_truth == truth.end()) return 0.0;
  double sum = richards_weight(0.0, rp) * distance(self.mean, self_truth->second);
  std::size_t count = 1;
  for (const auto& [target, entry] : tracks.entries()) {
    if (target == ego) continue;
    const auto it = truth.find(target);
    if (it == truth.end()) continue;  // stale track on an exited vehicle
    const double true_dist = distance(self_truth->second, it->second);
    sum += richards_weight(true_dist, rp) * distance(entry.est.mean, it->second);
    ++count;
  }
  return sum / static_cast<double>(count);
}

/// Network-wide error: arithmetic mean of the per-ego errors.
inline double network_error(const std::vector<double>& ego_errors) {
  if (ego_errors.empty()) return 0.0;
  double s = 0.0;
  for (double e : ego_errors) s += e;
  return s / static_cast<double>(ego_errors.size());
}

/// Set mismatch between the true neighbor set N_i and the believed set
/// N_hat_i for one (vehicle, slot) pair.
struct DetectionCounts {
  int misdetections = 0;     // in N_i but untracked
  int false_detections = 0;  // tracked but not in N_i
  int union_size = 0;
};

inline DetectionCounts detection_error(const std::vector<VehicleId>& true_neighbors,
                                       const std::vector<VehicleId>& believed) {
  DetectionCounts out;
  std::vector<VehicleId> t(true_neighbors), b(believed);
  std::sort(t.begin(), t.end());
  std::sort(b.begin(), b.end());
  std::vector<VehicleId> tmp;
  std::set_difference(t.begin(), t.end(), b.begin(), b.end(), std::back_inserter(tmp));
  out.misdetections = static_cast<int>(tmp.size());
  tmp.clear();
  std::set_difference(b.begin(), b.end(), t.begin(), t.end(), std::back_inserter(tmp));
  out.false_detections = static_cast<int>(tmp.size());
  tmp.clear();
  std::set_union(t.begin(), t.end(), b.begin(), b.end(), std::back_inserter(tmp));
  out.union_size = static_cast<int>(tmp.size());
  return out;
}

/// Nearest-rank percentile (p in [0, 100]) over a copy of the samples.
inline double percentile_nearest_rank(std::vector<double> samples, double p) {
  if (samples.empty()) return 0.0;
  std::sort(samples.begin(), samples.end());
  const auto n = static_cast<double>(samples.size());
  std::size_t rank = static_cast<std::size_t>(std::ceil(p / 100.0 * n));
  rank = std::clamp<std::size_t>(rank, 1, samples.size());
  return samples[rank - 1];
}

/// Aggregates of one run: the four evaluation metrics plus the measured
/// mean inter-transmission time and bookkeeping counters.
struct RunMetrics {
  double t_sim = 0.0;
  double t_t = 0.0;
  int n_vehicles = 0;

  std::vector<double> network_error_per_slot;  // full run, one value per slot

  double mean_error = 0.0;        // m, pooled post-warmup (vehicle, slot) samples
  double p95_error = 0.0;         // m, nearest rank over the same pool
  double misdetect_prob = 0.0;
  double false_detect_prob = 0.0;
  double detection_error_prob = 0.0;  // sum of the two components
  double collision_rate = 0.0;        // hidden-terminal events / (|V| * T_sim)
  double mean_inter_tx = 0.0;         // s, mean over vehicles of mean grant gap

  std::int64_t hidden_collisions = 0;
  std::int64_t grants = 0;
  std::int64_t tx_decisions = 0;
  double mean_rho = 0.0;  // mean commanded attempt probability (diagnostic)
};

/// Streaming collector fed once per slot by the engine; aggregate() applies
/// the warm-up exclusion and the pooled nearest-rank percentile.
class MetricsAccumulator {
 public:
  MetricsAccumulator(double t_sim, double t_t, int n_vehicles, std::int64_t warmup_slots)
      : warmup_slots_(warmup_slots) {
    rm_.t_sim = t_sim;
    rm_.t_t = t_t;
    rm_.n_vehicles = n_vehicles;
  }

  void record_slot(std::int64_t slot, const std::vector<double>& ego_errors,
                   const std::vector<DetectionCounts>& detections) {
    rm_.network_error_per_slot.push_back(network_error(ego_errors));
    if (slot < warmup_slots_) return;
    pooled_.insert(pooled_.end(), ego_errors.begin(), ego_errors.end());
    for (const auto& d : detections) {
      if (d.union_size > 0) {
        mis_sum_ += static_cast<double>(d.misdetections) / d.union_size;
        false_sum_ += static_cast<double>(d.false_detections) / d.union_size;
      }
      ++detect_obs_;
    }
  }

  void record_collisions(std::int64_t events) { rm_.hidden_collisions += events; }

  void record_grant(VehicleId v, std::int64_t slot) {
    ++rm_.grants;
    auto it = last_grant_.find(v);
    if (it != last_grant_.end()) {
      gap_sum_[v] += static_cast<double>(slot - it->second);
      gap_count_[v] += 1;
    }
    last_grant_[v] = slot;
  }

  void record_decision() { ++rm_.tx_decisions; }
  void record_rho(double rho) {
    rho_sum_ += rho;
    ++rho_obs_;
  }

  RunMetrics aggregate() const {
    RunMetrics out = rm_;
    if (!pooled_.empty()) {
      double s = 0.0;
      for (double e : pooled_) s += e;
      out.mean_error = s / static_cast<double>(pooled_.size());
      out.p95_error = percentile_nearest_rank(pooled_, 95.0);
    }
    if (detect_obs_ > 0) {
      out.misdetect_prob = mis_sum_ / static_cast<double>(detect_obs_);
      out.false_detect_prob = false_sum_ / static_cast<double>(detect_obs_);
      out.detection_error_prob = out.misdetect_prob + out.false_detect_prob;
    }
    out.collision_rate = rm_.n_vehicles > 0 && rm_.t_sim > 0
                             ? static_cast<double>(rm_.hidden_collisions) /
                                   (static_cast<double>(rm_.n_vehicles) * rm_.t_sim)
                             : 0.0;
    double gap_mean_sum = 0.0;
    int gap_vehicles = 0;
    for (const auto& [v, total] : gap_sum_) {
      const auto cnt = gap_count_.at(v);
      if (cnt > 0) {
        gap_mean_sum += total / static_cast<double>(cnt) * rm_.t_t;
        ++gap_vehicles;
      }
    }
    out.mean_inter_tx = gap_vehicles > 0 ? gap_mean_sum / gap_vehicles : 0.0;
    out.mean_rho = rho_obs_ > 0 ? rho_sum_ / static_cast<double>(rho_obs_) : 0.0;
    return out;
  }

 private:
  RunMetrics rm_;
  std::int64_t warmup_slots_;
  std::vector<double> pooled_;
  double mis_sum_ = 0.0;
  double false_sum_ = 0.0;
  std::int64_t detect_obs_ = 0;
  std::map<VehicleId, std::int64_t> last_grant_;
  std::map<VehicleId, double> gap_sum_;
  std::map<VehicleId, std::int64_t> gap_count_;
  double rho_sum_ = 0.0;
  std::int64_t rho_obs_ = 0;
};

}  // namespace vdm
