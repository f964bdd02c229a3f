#pragma once

#include <algorithm>
#include <cstdint>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vdm/core.hpp"
#include "vdm/rng.hpp"
#include "vdm/ukf.hpp"

namespace vdm {

/// Deterministic, run-stable subcarrier assignment: identity hash mod n_sc.
/// Dense id ranges (the common case) spread perfectly evenly, and once
/// n_sc >= the population size every vehicle sits alone on its subcarrier.
inline int assign_subcarrier(VehicleId id, int n_sc) {
  return static_cast<int>(id % static_cast<VehicleId>(n_sc));
}

/// One broadcast state message in flight.
struct Packet {
  VehicleId sender = 0;
  StateEstimate payload;
  std::int64_t created_slot = 0;  // grant slot; delivery at created + delay
  int subcarrier = 0;
};

struct Delivery {
  VehicleId receiver = 0;
  Packet packet;
};

/// Result of arbitrating one timeslot.
struct SlotOutcome {
  std::vector<Packet> granted;                              // per-subcarrier winners
  std::vector<std::pair<VehicleId, VehicleId>> collisions;  // (receiver, sender) hidden hits
  std::unordered_set<VehicleId> busy;                       // sensed-busy on own subcarrier
};

/// Slotted broadcast channel: n_sc subcarriers, idealized 1-persistent
/// CSMA/CA among in-range contenders, hidden-terminal collisions between
/// mutually out-of-range winners, fixed delivery delay.
class Channel {
 public:
  Channel(int n_sc, int delay_slots, double /*range; taken from the graph*/ = 0.0)
      : n_sc_(n_sc), delay_slots_(delay_slots), queues_(n_sc) {}

  int n_sc() const { return n_sc_; }

  /// Adds the vehicle to its subcarrier's access queue with the given
  /// payload. A vehicle already waiting keeps its position but refreshes
  /// the payload (at most one queue entry per vehicle).
  void enqueue(VehicleId v, const StateEstimate& payload, std::int64_t slot) {
    auto& q = queues_[assign_subcarrier(v, n_sc_)];
    for (auto& p : q) {
      if (p.vehicle == v) {
        p.payload = payload;
        return;
      }
    }
    q.push_back({v, payload, slot});
  }

  /// Arbitrates every subcarrier for the current slot. Contenders are
  /// visited in uniformly random order; a contender transmits iff no
  /// already-granted same-subcarrier transmitter is within carrier-sense
  /// range. Winners leave the queue, losers persist. Each neighbor of a
  /// winner receives after the delay unless some other same-subcarrier
  /// winner hidden from the sender covers that neighbor, which is recorded
  /// as a hidden-terminal collision.
  SlotOutcome resolve_slot(const EuclideanGraph& graph, std::int64_t now, Rng& rng) {
    SlotOutcome out;
    for (int sc = 0; sc < n_sc_; ++sc) {
      auto& q = queues_[sc];
      if (q.empty()) continue;

      std::vector<std::size_t> order(q.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      rng.shuffle(order);

      std::vector<std::size_t> granted_idx;
      for (std::size_t idx : order) {
        const VehicleId v = q[idx].vehicle;
        if (!graph.contains(v)) continue;  // left the scenario while queued
        bool blocked = false;
        for (std::size_t g : granted_idx) {
          if (graph.in_range(v, q[g].vehicle)) {
            blocked = true;
            break;
          }
        }
        if (!blocked) granted_idx.push_back(idx);
      }
      if (granted_idx.empty()) continue;

      // stable id order for everything derived from the grant set
      std::sort(granted_idx.begin(), granted_idx.end(),
                [&](std::size_t a, std::size_t b) { return q[a].vehicle < q[b].vehicle; });
      for (std::size_t g : granted_idx) {
        out.granted.push_back(Packet{q[g].vehicle, q[g].payload, now, sc});
      }

      // deliveries and hidden-terminal collisions
      const std::size_t first = out.granted.size() - granted_idx.size();
      for (std::size_t pi = first; pi < out.granted.size(); ++pi) {
        const Packet& pkt = out.granted[pi];
        for (VehicleId rx : graph.neighbors(pkt.sender)) {
          bool hidden_hit = false;
          for (std::size_t qi = first; qi < out.granted.size(); ++qi) {
            if (qi == pi) continue;
            const VehicleId other = out.granted[qi].sender;
            if (graph.in_range(other, rx) && !graph.in_range(other, pkt.sender)) {
              hidden_hit = true;
              break;
            }
          }
          if (hidden_hit) {
            out.collisions.emplace_back(rx, pkt.sender);
          } else {
            in_flight_.push_back({now + delay_slots_, {rx, pkt}});
          }
        }
      }

      // drop winners from the queue, preserving arrival order of the rest
      std::vector<Pending> keep;
      keep.reserve(q.size() - granted_idx.size());
      for (std::size_t i = 0; i < q.size(); ++i) {
        if (std::find(granted_idx.begin(), granted_idx.end(), i) == granted_idx.end())
          keep.push_back(std::move(q[i]));
      }
      q = std::move(keep);
    }

    // busy flags: a vehicle senses its own subcarrier busy when any winner
    // on that subcarrier is within range (a transmitter hears itself)
    for (VehicleId v : graph.ids()) {
      const int sc = assign_subcarrier(v, n_sc_);
      for (const Packet& pkt : out.granted) {
        if (pkt.subcarrier != sc) continue;
        if (pkt.sender == v || graph.in_range(pkt.sender, v)) {
          out.busy.insert(v);
          break;
        }
      }
    }
    return out;
  }

  /// Packets whose delay expires at `now`, in scheduling order.
  std::vector<Delivery> deliver_due(std::int64_t now) {
    std::vector<Delivery> due;
    std::size_t w = 0;
    for (std::size_t i = 0; i < in_flight_.size(); ++i) {
      if (in_flight_[i].first == now)
        due.push_back(std::move(in_flight_[i].second));
      else
        in_flight_[w++] = std::move(in_flight_[i]);
    }
    in_flight_.resize(w);
    return due;
  }

  std::size_t queue_size(int sc) const { return queues_.at(sc).size(); }
  bool queued(VehicleId v) const {
    const auto& q = queues_[assign_subcarrier(v, n_sc_)];
    return std::any_of(q.begin(), q.end(), [&](const Pending& p) { return p.vehicle == v; });
  }
  std::size_t in_flight_count() const { return in_flight_.size(); }

 private:
  struct Pending {
    VehicleId vehicle;
    StateEstimate payload;
    std::int64_t enqueue_slot;
  };

  int n_sc_;
  int delay_slots_;
  std::vector<std::vector<Pending>> queues_;
  std::vector<std::pair<std::int64_t, Delivery>> in_flight_;
};

}  // namespace vdm
