#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "vdm/core.hpp"
#include "vdm/errors.hpp"
#include "vdm/rng.hpp"

namespace vdm {

/// Slot-aligned ground-truth series of one vehicle. States are contiguous
/// from first_slot.
struct VehicleTrace {
  VehicleId id = 0;
  std::int64_t first_slot = 0;
  std::vector<VehicleState> states;

  std::int64_t last_slot() const {
    return first_slot + static_cast<std::int64_t>(states.size()) - 1;
  }
};

struct TraceSet {
  std::vector<VehicleTrace> vehicles;  // sorted by id
  double area_km2 = 0.0;
  std::int64_t n_slots = 0;

  const VehicleState* state_at(std::size_t vehicle_index, std::int64_t slot) const {
    const VehicleTrace& v = vehicles[vehicle_index];
    if (slot < v.first_slot || slot > v.last_slot()) return nullptr;
    return &v.states[static_cast<std::size_t>(slot - v.first_slot)];
  }

  std::map<VehicleId, VehicleState> states_at(std::int64_t slot) const {
    std::map<VehicleId, VehicleState> out;
    for (std::size_t i = 0; i < vehicles.size(); ++i) {
      if (const VehicleState* s = state_at(i, slot)) out.emplace(vehicles[i].id, *s);
    }
    return out;
  }

  void finalize() {
    std::sort(vehicles.begin(), vehicles.end(),
              [](const VehicleTrace& a, const VehicleTrace& b) { return a.id < b.id; });
    n_slots = 0;
    for (const auto& v : vehicles) n_slots = std::max(n_slots, v.last_slot() + 1);
  }
};

/// Synthetic street grid: intersections every `block` meters on an
/// nx-by-ny lattice. nx == 1 or ny == 1 degenerates to one endless straight
/// street (no intersections).
struct GridMapSpec {
  double block = 80.0;  // m
  int nx = 10;
  int ny = 10;
  double v_max = 13.89;  // m/s
  double p_straight = 0.5;
  double p_left = 0.25;
  double p_right = 0.25;
  double v_turn = 5.0;       // m/s ceiling through corners
  double a_max = 2.5;        // m/s^2
  double b_max = 4.0;        // m/s^2 braking
  double turn_radius = 6.0;  // m

  /// Square map matching a target area, block size adjusted to fit.
  static GridMapSpec square(double area_km2, double approx_block, double v_max) {
    GridMapSpec m;
    const double side = std::sqrt(area_km2 * 1e6);
    m.nx = m.ny = std::max(2, static_cast<int>(std::lround(side / approx_block)) + 1);
    m.block = side / (m.nx - 1);
    m.v_max = v_max;
    return m;
  }

  double width() const { return (nx - 1) * block; }
  double height() const { return (ny - 1) * block; }
  double area_km2() const { return width() * height() * 1e-6; }
  bool open_road() const { return nx < 2 || ny < 2; }
};

namespace detail {

// direction encoding: 0=+x 1=+y 2=-x 3=-y
constexpr int kDx[4] = {1, 0, -1, 0};
constexpr int kDy[4] = {0, 1, 0, -1};

inline double dir_angle(int d) { return wrap_angle(d * std::numbers::pi / 2.0); }

struct GridVehicle {
  double x = 0, y = 0;
  int dir = 0;
  double u = 0;
  double a_cmd = 0;
  int node_i = 0, node_j = 0;  // decision node ahead
  int turn = 0;                // action there: 0 straight, +1 left, -1 right
  bool turning = false;
  double cx = 0, cy = 0;  // arc center
  double ang = 0, ang_end = 0, turn_sign = 0, arc_speed = 0;
};

class GridMobility {
 public:
  GridMobility(const GridMapSpec& map, int n_vehicles, Rng& rng) : map_(map) {
    vehicles_.reserve(n_vehicles);
    for (int k = 0; k < n_vehicles; ++k) vehicles_.push_back(spawn(rng));
  }

  VehicleState state(int k) const {
    const GridVehicle& v = vehicles_[k];
    VehicleState s;
    s.x = v.x;
    s.y = v.y;
    s.u = v.u;
    if (v.turning) {
      s.h = wrap_angle(v.ang + v.turn_sign * std::numbers::pi / 2.0);
      s.a = 0.0;
      s.omega = v.turn_sign * v.arc_speed / map_.turn_radius;
    } else {
      s.h = dir_angle(v.dir);
      s.a = v.a_cmd;
      s.omega = 0.0;
    }
    return s;
  }

  void step(double dt, Rng& rng) {
    for (auto& v : vehicles_) advance(v, dt, rng);
  }

 private:
  bool feasible(int i, int j, int d) const {
    const int ni = i + kDx[d];
    const int nj = j + kDy[d];
    return ni >= 0 && ni < map_.nx && nj >= 0 && nj < map_.ny;
  }

  int sample_turn(int i, int j, int dir, Rng& rng) const {
    // candidate actions and their configured weights
    const int acts[3] = {0, 1, -1};
    const double w[3] = {map_.p_straight, map_.p_left, map_.p_right};
    double total = 0.0;
    bool ok[3];
    for (int c = 0; c < 3; ++c) {
      const int nd = (dir + (acts[c] == 0 ? 0 : (acts[c] == 1 ? 1 : 3))) % 4;
      ok[c] = feasible(i, j, nd);
      if (ok[c]) total += w[c];
    }
    if (total <= 0.0) {
      for (int c = 0; c < 3; ++c)
        if (ok[c]) return acts[c];
      return 0;  // unreachable on nx,ny >= 2 grids
    }
    double pick = rng.uniform() * total;
    for (int c = 0; c < 3; ++c) {
      if (!ok[c]) continue;
      if (pick < w[c]) return acts[c];
      pick -= w[c];
    }
    for (int c = 2; c >= 0; --c)
      if (ok[c]) return acts[c];
    return 0;
  }

  GridVehicle spawn(Rng& rng) {
    GridVehicle v;
    if (map_.open_road()) {
      const bool horizontal = map_.ny < 2;
      v.dir = horizontal ? 0 : 1;
      const double span = std::max(horizontal ? map_.width() : map_.height(), 200.0);
      v.x = horizontal ? rng.uniform(0.0, span) : 0.0;
      v.y = horizontal ? 0.0 : rng.uniform(0.0, span);
      v.u = rng.uniform(0.0, 0.5 * map_.v_max);
      return v;
    }
    for (int attempt = 0; attempt < 64; ++attempt) {
      const int i = static_cast<int>(rng.below(map_.nx));
      const int j = static_cast<int>(rng.below(map_.ny));
      const int d = static_cast<int>(rng.below(4));
      if (!feasible(i, j, d)) continue;
      v.node_i = i + kDx[d];
      v.node_j = j + kDy[d];
      v.dir = d;
      const double safe = std::max(0.0, map_.block - map_.turn_radius - 1.0);
      const double along = rng.uniform(0.0, std::min(0.8 * map_.block, safe));
      v.x = i * map_.block + kDx[d] * along;
      v.y = j * map_.block + kDy[d] * along;
      v.u = rng.uniform(0.3, 1.0) * std::min(map_.v_max, 10.0);
      v.turn = sample_turn(v.node_i, v.node_j, d, rng);
      return v;
    }
    throw NumericError("grid spawn failed");  // cannot happen on valid grids
  }

  /// Distance (along the travel direction) from the vehicle to the point
  /// where the current segment's plan changes.
  double event_distance(const GridVehicle& v) const {
    const double nx = v.node_i * map_.block;
    const double ny = v.node_j * map_.block;
    double d = (nx - v.x) * kDx[v.dir] + (ny - v.y) * kDy[v.dir];
    if (v.turn != 0) d -= map_.turn_radius;  // arc entry sits before the node
    return d;
  }

  void choose_accel(GridVehicle& v, double dt) {
    if (v.turning) {
      v.a_cmd = 0.0;
      return;
    }
    if (map_.open_road()) {
      v.a_cmd = v.u < map_.v_max ? std::min(map_.a_max, (map_.v_max - v.u) / dt) : 0.0;
      return;
    }
    const double dist = event_distance(v);
    if (v.turn != 0 && v.u > map_.v_turn) {
      const double d_stop = (v.u * v.u - map_.v_turn * map_.v_turn) / (2.0 * map_.b_max);
      if (dist <= d_stop + v.u * dt) {
        v.a_cmd = std::max(-map_.b_max, (map_.v_turn - v.u) / dt);
        return;
      }
      // hold speed if accelerating now would force harsher braking
      const double u_next = std::min(v.u + map_.a_max * dt, map_.v_max);
      const double d_stop_next =
          (u_next * u_next - map_.v_turn * map_.v_turn) / (2.0 * map_.b_max);
      if (dist <= d_stop_next + 2.0 * u_next * dt) {
        v.a_cmd = 0.0;
        return;
      }
    }
    v.a_cmd = v.u < map_.v_max ? std::min(map_.a_max, (map_.v_max - v.u) / dt) : 0.0;
  }

  void enter_arc(GridVehicle& v) {
    const double phi = dir_angle(v.dir);
    const int nd = (v.dir + (v.turn == 1 ? 1 : 3)) % 4;
    const double nx = v.node_i * map_.block;
    const double ny = v.node_j * map_.block;
    const double r = map_.turn_radius;
    v.cx = nx - r * kDx[v.dir] + r * kDx[nd];
    v.cy = ny - r * kDy[v.dir] + r * kDy[nd];
    v.turn_sign = v.turn == 1 ? 1.0 : -1.0;
    v.ang = phi - v.turn_sign * std::numbers::pi / 2.0;
    v.ang_end = phi;
    v.arc_speed = std::max(v.u, 0.5);  // never park inside an intersection
    v.turning = true;
    v.dir = nd;
  }

  void exit_arc(GridVehicle& v, Rng& rng) {
    const double r = map_.turn_radius;
    const double nx = v.node_i * map_.block;
    const double ny = v.node_j * map_.block;
    v.x = nx + r * kDx[v.dir];
    v.y = ny + r * kDy[v.dir];
    v.u = v.arc_speed;
    v.turning = false;
    v.node_i += kDx[v.dir];
    v.node_j += kDy[v.dir];
    v.turn = sample_turn(v.node_i, v.node_j, v.dir, rng);
  }

  void advance(GridVehicle& v, double dt, Rng& rng) {
    choose_accel(v, dt);
    double tau = dt;
    int guard = 0;
    while (tau > 1e-12 && ++guard < 16) {
      if (v.turning) {
        const double w = v.arc_speed / map_.turn_radius;
        const double remaining = std::abs(wrap_angle(v.ang_end - v.ang));
        const double t_fin = remaining / w;
        if (t_fin <= tau) {
          exit_arc(v, rng);
          tau -= t_fin;
        } else {
          v.ang += v.turn_sign * w * tau;
          v.x = v.cx + map_.turn_radius * std::cos(v.ang);
          v.y = v.cy + map_.turn_radius * std::sin(v.ang);
          tau = 0.0;
        }
        continue;
      }
      if (map_.open_road()) {
        move_straight(v, tau);
        tau = 0.0;
        continue;
      }
      const double dist_event = event_distance(v);
      const double travel = v.u * tau + 0.5 * v.a_cmd * tau * tau;
      if (travel < dist_event - 1e-9) {
        move_straight(v, tau);
        tau = 0.0;
      } else {
        const double t_star = time_to_distance(v.u, v.a_cmd, dist_event, tau);
        move_straight(v, t_star);
        tau -= t_star;
        if (v.turn != 0) {
          enter_arc(v);
        } else {
          v.node_i += kDx[v.dir];
          v.node_j += kDy[v.dir];
          v.turn = sample_turn(v.node_i, v.node_j, v.dir, rng);
        }
      }
    }
  }

  void move_straight(GridVehicle& v, double t) {
    const double du = v.a_cmd * t;
    double dist;
    if (v.u + du < 0.0) {  // braking to standstill inside the interval
      const double t_stop = v.a_cmd < 0.0 ? -v.u / v.a_cmd : 0.0;
      dist = v.u * t_stop + 0.5 * v.a_cmd * t_stop * t_stop;
      v.u = 0.0;
    } else {
      dist = v.u * t + 0.5 * v.a_cmd * t * t;
      v.u += du;
    }
    v.u = std::min(v.u, map_.v_max);
    v.x += kDx[v.dir] * dist;
    v.y += kDy[v.dir] * dist;
  }

  static double time_to_distance(double u, double a, double d, double t_max) {
    if (d <= 0.0) return 0.0;
    if (std::abs(a) < 1e-12) return u > 0.0 ? std::min(d / u, t_max) : t_max;
    const double disc = u * u + 2.0 * a * d;
    if (disc <= 0.0) return t_max;
    const double t = (-u + std::sqrt(disc)) / a;
    return std::clamp(t, 0.0, t_max);
  }

  GridMapSpec map_;
  std::vector<GridVehicle> vehicles_;
};

}  // namespace detail

/// Deterministic grid-mobility synthesis: n_vehicles random trips over
/// `duration_slots` slots of t_t seconds. Vehicles accelerate toward v_max,
/// brake into corners, and traverse them on constant-rate arcs.
inline TraceSet synth_trips(const GridMapSpec& map, int n_vehicles,
                            std::int64_t duration_slots, double t_t, std::uint64_t seed) {
  if (n_vehicles <= 0) throw ConfigError("synth_trips: n_vehicles must be > 0");
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(RngStream::kMobility)));
  detail::GridMobility mob(map, n_vehicles, rng);

  TraceSet ts;
  ts.area_km2 = map.area_km2();
  ts.vehicles.resize(n_vehicles);
  for (int k = 0; k < n_vehicles; ++k) {
    ts.vehicles[k].id = static_cast<VehicleId>(k);
    ts.vehicles[k].first_slot = 0;
    ts.vehicles[k].states.reserve(duration_slots);
  }
  for (std::int64_t slot = 0; slot < duration_slots; ++slot) {
    if (slot > 0) mob.step(t_t, rng);
    for (int k = 0; k < n_vehicles; ++k) ts.vehicles[k].states.push_back(mob.state(k));
  }
  ts.finalize();
  return ts;
}

/// Fills heading/speed/acceleration/turn-rate from a position-only series
/// via central finite differences (one-sided at the ends). Heading is held
/// through stationary samples. Needs at least 3 samples.
inline std::vector<VehicleState> derive_state(const std::vector<std::array<double, 2>>& pos,
                                              double t_t) {
  const std::size_t n = pos.size();
  if (n < 3) throw ConfigError("derive_state: need at least 3 samples");
  std::vector<VehicleState> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].x = pos[i][0];
    out[i].y = pos[i][1];
  }
  auto diff = [&](std::size_t i, int axis) {
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = i + 1 >= n ? n - 1 : i + 1;
    return (pos[hi][axis] - pos[lo][axis]) / (static_cast<double>(hi - lo) * t_t);
  };
  double held_heading = 0.0;
  bool have_heading = false;
  std::size_t first_moving = n;
  for (std::size_t i = 0; i < n; ++i) {
    const double vx = diff(i, 0);
    const double vy = diff(i, 1);
    out[i].u = std::hypot(vx, vy);
    if (out[i].u > 1e-6) {
      held_heading = std::atan2(vy, vx);
      have_heading = true;
      if (first_moving == n) first_moving = i;
    }
    out[i].h = have_heading ? held_heading : 0.0;
  }
  // backfill a leading stationary stretch with the first real heading
  if (first_moving < n) {
    for (std::size_t i = 0; i < first_moving; ++i) out[i].h = out[first_moving].h;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = i + 1 >= n ? n - 1 : i + 1;
    const double span = static_cast<double>(hi - lo) * t_t;
    out[i].a = (out[hi].u - out[lo].u) / span;
    out[i].omega =
        (out[hi].u > 1e-6 && out[lo].u > 1e-6) ? wrap_angle(out[hi].h - out[lo].h) / span : 0.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV trace format: header "slot,id,x,y,h,u,a,omega"

inline void save_trace_csv(const TraceSet& ts, std::ostream& out) {
  out << "slot,id,x,y,h,u,a,omega\n";
  char buf[256];
  for (std::int64_t slot = 0; slot < ts.n_slots; ++slot) {
    for (std::size_t k = 0; k < ts.vehicles.size(); ++k) {
      const VehicleState* s = ts.state_at(k, slot);
      if (!s) continue;
      std::snprintf(buf, sizeof buf, "%lld,%u,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                    static_cast<long long>(slot), ts.vehicles[k].id, s->x, s->y, s->h, s->u,
                    s->a, s->omega);
      out << buf;
    }
  }
}

inline TraceSet load_trace_csv(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError("empty trace file", 1);
  ++lineno;
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
  if (line != "slot,id,x,y,h,u,a,omega")
    throw ParseError("expected header 'slot,id,x,y,h,u,a,omega'", lineno);

  std::map<VehicleId, VehicleTrace> per_vehicle;
  double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    double vals[8];
    for (int f = 0; f < 8; ++f) {
      if (!std::getline(ss, field, ',')) throw ParseError("expected 8 fields", lineno);
      try {
        vals[f] = std::stod(field);
      } catch (const std::exception&) {
        throw ParseError("bad numeric field '" + field + "'", lineno);
      }
    }
    const auto slot = static_cast<std::int64_t>(vals[0]);
    const auto id = static_cast<VehicleId>(vals[1]);
    VehicleState s{vals[2], vals[3], vals[4], vals[5], vals[6], vals[7]};
    auto& vt = per_vehicle[id];
    if (vt.states.empty()) {
      vt.id = id;
      vt.first_slot = slot;
    } else if (slot != vt.last_slot() + 1) {
      throw ParseError("vehicle " + std::to_string(id) + " slots must be contiguous", lineno);
    }
    vt.states.push_back(s);
    min_x = std::min(min_x, s.x);
    max_x = std::max(max_x, s.x);
    min_y = std::min(min_y, s.y);
    max_y = std::max(max_y, s.y);
  }
  TraceSet ts;
  for (auto& [id, vt] : per_vehicle) ts.vehicles.push_back(std::move(vt));
  ts.finalize();
  if (!ts.vehicles.empty()) ts.area_km2 = (max_x - min_x) * (max_y - min_y) * 1e-6;
  return ts;
}

inline TraceSet load_trace_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trace file '" + path + "'");
  return load_trace_csv(in);
}

}  // namespace vdm
