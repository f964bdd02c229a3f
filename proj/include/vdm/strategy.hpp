#pragma once

#include <algorithm>
#include <utility>

namespace vdm {

enum class StrategyKind { kPB, kETB };

/// Per-vehicle transmission decision state. new_neighbor is set by the
/// engine on slots where a first packet from an unknown sender arrived and
/// cleared again at the next slot boundary.
struct StrategyState {
  StrategyKind kind = StrategyKind::kPB;
  double t_period = 1.0;  // s, PB
  double e_thr = 5.0;     // m, ETB
  double t_max = 10.0;    // s, ETB upper bound on silence
  double t_last_tx = 0.0; // s since the last transmission decision
  bool new_neighbor = false;
};

/// Periodic Broadcasting: fire when the elapsed time exceeds T_period, or
/// early for a new neighbor if at least two slots passed. On a transmission
/// the timer keeps the overshoot as residual (anti-burst).
inline std::pair<bool, StrategyState> pb_decide(StrategyState st, double t_t) {
  st.t_last_tx += t_t;
  bool transmit = false;
  if (st.t_last_tx > st.t_period)
    transmit = true;
  else if (st.new_neighbor && st.t_last_tx > 2.0 * t_t)
    transmit = true;
  if (transmit) st.t_last_tx = std::max(st.t_last_tx - st.t_period, 0.0);
  return {transmit, st};
}

/// Error Threshold Broadcasting: fire when the predicted-track divergence
/// d_div = d(s_hat, s_hat_pred) exceeds E_thr, when T_max elapsed, or for a
/// new neighbor. The caller must shadow_reset on a positive decision.
/// The residual update reuses the PB rule with T_max standing in for the
/// undefined T_period.
inline std::pair<bool, StrategyState> etb_decide(StrategyState st, double d_div, double t_t) {
  st.t_last_tx += t_t;
  const bool transmit = d_div > st.e_thr || st.t_last_tx > st.t_max ||
                        (st.new_neighbor && st.t_last_tx > 2.0 * t_t);
  if (transmit) st.t_last_tx = std::max(st.t_last_tx - st.t_max, 0.0);
  return {transmit, st};
}

}  // namespace vdm
