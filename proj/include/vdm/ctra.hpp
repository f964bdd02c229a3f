#pragma once

#include <algorithm>
#include <cmath>

#include "vdm/core.hpp"

namespace vdm {

/// Constant Turn Rate and Acceleration transition over dt seconds.
///
/// Closed form for |omega| >= eps_omega; below the threshold a second-order
/// Taylor expansion in omega keeps the two branches continuous to well under
/// 1e-6 m. Speed is clamped at zero: when braking would cross u = 0 inside
/// the interval, position and heading stop integrating at the crossing time
/// (so predict(dt/2) twice composes exactly to predict(dt)).
inline VehicleState ctra_predict(const VehicleState& s, double dt, double eps_omega = 1e-4) {
  VehicleState out = s;
  if (dt <= 0.0) return out;

  const double u0 = std::max(s.u, 0.0);
  const double a = s.a;
  const double w = s.omega;

  // stopping time when decelerating through zero
  double t_int = dt;
  if (u0 + a * dt < 0.0) {
    t_int = (a < 0.0) ? std::min(dt, -u0 / a) : 0.0;
  }
  out.u = std::max(u0 + a * dt, 0.0);
  out.h = wrap_angle(s.h + w * t_int);

  const double ch = std::cos(s.h);
  const double sh = std::sin(s.h);
  double dx, dy;
  if (std::abs(w) >= eps_omega) {
    const double th = s.h + w * t_int;
    const double cth = std::cos(th);
    const double sth = std::sin(th);
    const double ut = u0 + a * t_int;
    dx = (ut * sth - u0 * sh) / w + a * (cth - ch) / (w * w);
    dy = (-ut * cth + u0 * ch) / w + a * (sth - sh) / (w * w);
  } else {
    const double t2 = t_int * t_int;
    const double t3 = t2 * t_int;
    const double t4 = t3 * t_int;
    const double p1 = u0 * t_int + 0.5 * a * t2;
    const double p2 = 0.5 * u0 * t2 + a * t3 / 3.0;
    const double p3 = u0 * t3 / 3.0 + 0.25 * a * t4;
    dx = ch * p1 - w * sh * p2 - 0.5 * w * w * ch * p3;
    dy = sh * p1 + w * ch * p2 - 0.5 * w * w * sh * p3;
  }
  out.x = s.x + dx;
  out.y = s.y + dy;
  return out;
}

}  // namespace vdm
