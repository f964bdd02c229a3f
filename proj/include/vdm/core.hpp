#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <unordered_map>
#include <utility>
#include <vector>

namespace vdm {

using VehicleId = std::uint32_t;

/// Kinematic state of one vehicle at one timeslot: planar position,
/// heading (rad, counterclockwise from +x, in (-pi, pi]), tangent speed,
/// tangent acceleration and turn rate.
struct VehicleState {
  double x = 0.0;      // m
  double y = 0.0;      // m
  double h = 0.0;      // rad
  double u = 0.0;      // m/s
  double a = 0.0;      // m/s^2
  double omega = 0.0;  // rad/s
};

/// Normalizes an angle to (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double pi = std::numbers::pi;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a + pi, two_pi);
  if (a <= 0.0) a += two_pi;
  return a - pi;
}

/// Planar distance between two states; heading/speed components are ignored.
inline double distance(const VehicleState& s1, const VehicleState& s2) {
  return std::hypot(s1.x - s2.x, s1.y - s2.y);
}

/// Range-limited connectivity snapshot: <vi,vj> is an edge iff the pairwise
/// distance is strictly below the communication range r. Rebuilt every slot;
/// immutable afterwards.
class EuclideanGraph {
 public:
  EuclideanGraph() = default;

  static EuclideanGraph build(const std::vector<std::pair<VehicleId, VehicleState>>& states,
                              double range) {
    EuclideanGraph g;
    g.range_ = range;
    g.ids_.reserve(states.size());
    g.pos_.reserve(states.size());
    std::vector<std::pair<VehicleId, std::array<double, 2>>> items;
    items.reserve(states.size());
    for (const auto& [id, s] : states) items.push_back({id, {s.x, s.y}});
    std::sort(items.begin(), items.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [id, p] : items) {
      g.index_[id] = g.ids_.size();
      g.ids_.push_back(id);
      g.pos_.push_back(p);
    }
    const std::size_t n = g.ids_.size();
    g.adj_.assign(n, {});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dx = g.pos_[i][0] - g.pos_[j][0];
        const double dy = g.pos_[i][1] - g.pos_[j][1];
        if (std::hypot(dx, dy) < range) {
          g.adj_[i].push_back(g.ids_[j]);
          g.adj_[j].push_back(g.ids_[i]);
        }
      }
    }
    return g;
  }

  static EuclideanGraph build(const std::map<VehicleId, VehicleState>& states, double range) {
    std::vector<std::pair<VehicleId, VehicleState>> v(states.begin(), states.end());
    return build(v, range);
  }

  /// Node ids, ascending.
  const std::vector<VehicleId>& ids() const { return ids_; }

  /// Neighbor set N_i, ascending ids. Empty for unknown ids.
  const std::vector<VehicleId>& neighbors(VehicleId id) const {
    static const std::vector<VehicleId> kEmpty;
    auto it = index_.find(id);
    return it == index_.end() ? kEmpty : adj_[it->second];
  }

  bool contains(VehicleId id) const { return index_.count(id) != 0; }

  bool in_range(VehicleId a, VehicleId b) const {
    auto ia = index_.find(a);
    auto ib = index_.find(b);
    if (ia == index_.end() || ib == index_.end()) return false;
    const double dx = pos_[ia->second][0] - pos_[ib->second][0];
    const double dy = pos_[ia->second][1] - pos_[ib->second][1];
    return std::hypot(dx, dy) < range_;
  }

  std::array<double, 2> position(VehicleId id) const { return pos_.at(index_.at(id)); }

  double range() const { return range_; }
  std::size_t size() const { return ids_.size(); }

 private:
  double range_ = 0.0;
  std::vector<VehicleId> ids_;
  std::vector<std::array<double, 2>> pos_;
  std::vector<std::vector<VehicleId>> adj_;
  std::unordered_map<VehicleId, std::size_t> index_;
};

/// Spec entry point; edges use the strict d < r criterion.
inline EuclideanGraph build_graph(const std::map<VehicleId, VehicleState>& states, double range) {
  return EuclideanGraph::build(states, range);
}

}  // namespace vdm
