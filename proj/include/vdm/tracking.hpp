#pragma once

#include <cstdint>
#include <map>

#include "vdm/ukf.hpp"

namespace vdm {

/// One tracked neighbor: who, current estimate, and when it was last fed by
/// a received message.
struct TrackEntry {
  VehicleId target = 0;
  StateEstimate est;
  std::int64_t last_update_slot = 0;
};

/// Per-vehicle bank of remote tracks (the believed neighbor set N_hat).
/// Ordered by id so iteration is deterministic.
class TrackTable {
 public:
  /// Ingests a delivered state message. An unknown sender seeds a fresh
  /// track; a known sender's estimate is replaced by the received one.
  /// Returns true when the sender was previously untracked.
  bool ingest(VehicleId sender, const StateEstimate& est, std::int64_t slot) {
    auto [it, inserted] = entries_.insert_or_assign(sender, TrackEntry{sender, est, slot});
    (void)it;
    return inserted;
  }

  /// Drops tracks not refreshed within delta_track seconds.
  void expire(std::int64_t now, double t_t, double delta_track) {
    for (auto it = entries_.begin(); it != entries_.end();) {
      if (static_cast<double>(now - it->second.last_update_slot) * t_t > delta_track)
        it = entries_.erase(it);
      else
        ++it;
    }
  }

  /// Blind model propagation of every track by one step. A track whose
  /// covariance collapses beyond repair is reset (dropped); it will be
  /// re-seeded by the next received message.
  void predict_all(double dt, const NoiseModel& nm, const UtParams& ut, double eps_omega) {
    for (auto it = entries_.begin(); it != entries_.end();) {
      try {
        it->second.est = ukf_predict(it->second.est, dt, nm, ut, eps_omega);
        ++it;
      } catch (const FilterDivergence&) {
        it = entries_.erase(it);
      }
    }
  }

  bool tracks(VehicleId id) const { return entries_.count(id) != 0; }
  std::size_t size() const { return entries_.size(); }
  const std::map<VehicleId, TrackEntry>& entries() const { return entries_; }

 private:
  std::map<VehicleId, TrackEntry> entries_;
};

/// Spec-level helper mirroring the message-ingestion contract on a single
/// track entry.
inline TrackEntry ingest_remote(const TrackEntry* existing, VehicleId sender,
                                const StateEstimate& est, std::int64_t slot) {
  (void)existing;  // replacement semantics: the received state wins either way
  return TrackEntry{sender, est, slot};
}

}  // namespace vdm
