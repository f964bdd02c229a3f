#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <array>
#include <cmath>

#include "vdm/core.hpp"
#include "vdm/ctra.hpp"
#include "vdm/errors.hpp"
#include "vdm/rng.hpp"

namespace vdm {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

constexpr int kStateDim = 6;
constexpr int kHeadingIdx = 2;  // (x, y, h, u, a, omega)

inline Vec6 to_vec(const VehicleState& s) {
  Vec6 v;
  v << s.x, s.y, s.h, s.u, s.a, s.omega;
  return v;
}

inline VehicleState from_vec(const Vec6& v) {
  return VehicleState{v[0], v[1], wrap_angle(v[2]), v[3], v[4], v[5]};
}

/// State mean plus 6x6 covariance. Covariance is kept symmetric by every
/// producer; PSD up to a -1e-9 eigenvalue tolerance.
struct StateEstimate {
  VehicleState mean;
  Mat6 cov = Mat6::Zero();
};

/// Process noise Q = q*I and diagonal measurement covariance R, laid out in
/// state order (x, y, h, u, a, omega).
struct NoiseModel {
  double q = 1.0;
  Vec6 r_diag = (Vec6() << 1.18535, 1.18535, 0.09211, 0.5, 0.39, 0.01587).finished();

  Mat6 process() const { return q * Mat6::Identity(); }
  Mat6 measurement() const { return r_diag.asDiagonal(); }
};

/// Scaled unscented transform parameters.
struct UtParams {
  double alpha = 0.5;
  double beta = 2.0;
  double kappa = 0.0;

  double lambda() const { return alpha * alpha * (kStateDim + kappa) - kStateDim; }
};

struct SigmaPoints {
  static constexpr int kCount = 2 * kStateDim + 1;
  std::array<Vec6, kCount> pts;
  double wm0, wc0, wi;
};

namespace detail {

/// Square root of a PSD covariance. LLT on the fast path; semidefinite
/// matrices (zero covariance included) fall back to an eigendecomposition
/// with eigenvalues clamped at zero. Eigenvalues below the -1e-9 tolerance
/// mean the filter diverged.
inline Mat6 safe_cholesky(const Mat6& p) {
  Eigen::LLT<Mat6> llt(p);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Mat6> eig(p);
  if (eig.info() != Eigen::Success)
    throw FilterDivergence("covariance eigendecomposition failed");
  const double tol = -1e-9 * std::max(1.0, p.trace() / kStateDim);
  if (eig.eigenvalues().minCoeff() < tol)
    throw FilterDivergence("covariance is not positive semi-definite");
  const Vec6 clamped = eig.eigenvalues().cwiseMax(0.0);
  return eig.eigenvectors() * clamped.cwiseSqrt().asDiagonal();
}

/// Projects a symmetric matrix onto the PSD cone. The scaled transform's
/// negative center weight can push a strongly nonlinear propagation (large
/// heading spread folding through the wrap) slightly indefinite; the filter
/// contract keeps eigenvalues >= -1e-9, so the excursion is floored here
/// rather than poisoning the next sigma-point draw.
inline Mat6 floor_psd(const Mat6& p) {
  Eigen::LLT<Mat6> llt(p);
  if (llt.info() == Eigen::Success) return p;
  Eigen::SelfAdjointEigenSolver<Mat6> eig(p);
  if (eig.info() != Eigen::Success) throw FilterDivergence("covariance repair failed");
  const Vec6 clamped = eig.eigenvalues().cwiseMax(0.0);
  return eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace detail

/// 2n+1 = 13 scaled sigma points around the estimate.
inline SigmaPoints sigma_points(const StateEstimate& est, const UtParams& ut = {}) {
  SigmaPoints sp;
  const double lambda = ut.lambda();
  const double scale = kStateDim + lambda;
  sp.wm0 = lambda / scale;
  sp.wc0 = sp.wm0 + (1.0 - ut.alpha * ut.alpha + ut.beta);
  sp.wi = 0.5 / scale;

  const Vec6 mu = to_vec(est.mean);
  const Mat6 l = detail::safe_cholesky(est.cov);
  const double spread = std::sqrt(scale);
  sp.pts[0] = mu;
  for (int i = 0; i < kStateDim; ++i) {
    sp.pts[1 + i] = mu + spread * l.col(i);
    sp.pts[1 + kStateDim + i] = mu - spread * l.col(i);
  }
  return sp;
}

namespace detail {

struct Reconstructed {
  Vec6 mean;
  Mat6 cov;
};

/// Weighted mean/covariance of transformed sigma points. With
/// circular_heading the h component is averaged via atan2 of weighted
/// sines/cosines and residuals are wrapped.
inline Reconstructed ut_reconstruct(const std::array<Vec6, SigmaPoints::kCount>& pts,
                                    double wm0, double wc0, double wi,
                                    bool circular_heading) {
  Vec6 mean = Vec6::Zero();
  double sin_sum = 0.0, cos_sum = 0.0;
  for (int i = 0; i < SigmaPoints::kCount; ++i) {
    const double w = (i == 0) ? wm0 : wi;
    mean += w * pts[i];
    if (circular_heading) {
      sin_sum += w * std::sin(pts[i][kHeadingIdx]);
      cos_sum += w * std::cos(pts[i][kHeadingIdx]);
    }
  }
  if (circular_heading) mean[kHeadingIdx] = std::atan2(sin_sum, cos_sum);

  Mat6 cov = Mat6::Zero();
  for (int i = 0; i < SigmaPoints::kCount; ++i) {
    const double w = (i == 0) ? wc0 : wi;
    Vec6 d = pts[i] - mean;
    if (circular_heading) d[kHeadingIdx] = wrap_angle(d[kHeadingIdx]);
    cov += w * (d * d.transpose());
  }
  cov = 0.5 * (cov + cov.transpose()).eval();
  return {mean, cov};
}

}  // namespace detail

/// Generic unscented predict: propagates sigma points through `f` (Vec6 ->
/// Vec6) and adds q_add. The production CTRA path wraps this; the generic
/// form exists so linear test systems can certify the transform itself.
template <class F>
StateEstimate ut_predict(const StateEstimate& est, F&& f, const Mat6& q_add,
                         const UtParams& ut = {}, bool circular_heading = true) {
  SigmaPoints sp = sigma_points(est, ut);
  for (auto& p : sp.pts) p = f(p);
  auto rec = detail::ut_reconstruct(sp.pts, sp.wm0, sp.wc0, sp.wi, circular_heading);
  StateEstimate out;
  out.mean = from_vec(rec.mean);
  if (!circular_heading) out.mean.h = rec.mean[kHeadingIdx];  // no wrap for generic states
  out.cov = rec.cov + q_add;
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  out.cov = detail::floor_psd(out.cov);
  return out;
}

/// UKF predict step over dt seconds through the CTRA model; adds Q = q*I
/// once per call (one discrete-time transition).
inline StateEstimate ukf_predict(const StateEstimate& est, double dt, const NoiseModel& nm,
                                 const UtParams& ut = {}, double eps_omega = 1e-4) {
  return ut_predict(
      est,
      [dt, eps_omega](const Vec6& v) { return to_vec(ctra_predict(from_vec(v), dt, eps_omega)); },
      nm.process(), ut, /*circular_heading=*/true);
}

/// Identity measurement function m(s) = s.
inline Vec6 measure(const VehicleState& s) { return to_vec(s); }

/// Draws an observation of `truth` with additive N(0, R) noise; heading
/// wrapped back into (-pi, pi].
inline Vec6 noisy_observation(const VehicleState& truth, const NoiseModel& nm, Rng& rng) {
  Vec6 o = to_vec(truth);
  for (int i = 0; i < kStateDim; ++i) o[i] += std::sqrt(nm.r_diag[i]) * rng.normal();
  o[kHeadingIdx] = wrap_angle(o[kHeadingIdx]);
  return o;
}

/// Unscented measurement update with the identity measurement model.
/// Heading innovation is wrapped. A singular innovation covariance gets one
/// jitter retry before FilterDivergence.
inline StateEstimate ukf_update(const StateEstimate& est, const Vec6& obs, const NoiseModel& nm,
                                const UtParams& ut = {}, bool circular_heading = true) {
  SigmaPoints sp = sigma_points(est, ut);
  // m = identity: measurement sigma points coincide with the state points.
  auto zrec = detail::ut_reconstruct(sp.pts, sp.wm0, sp.wc0, sp.wi, circular_heading);
  const Vec6 xmean = to_vec(est.mean);
  const Vec6 zmean = zrec.mean;

  Mat6 p_xz = Mat6::Zero();
  for (int i = 0; i < SigmaPoints::kCount; ++i) {
    const double w = (i == 0) ? sp.wc0 : sp.wi;
    Vec6 dx = sp.pts[i] - xmean;
    Vec6 dz = sp.pts[i] - zmean;
    if (circular_heading) {
      dx[kHeadingIdx] = wrap_angle(dx[kHeadingIdx]);
      dz[kHeadingIdx] = wrap_angle(dz[kHeadingIdx]);
    }
    p_xz += w * (dx * dz.transpose());
  }

  Mat6 s = zrec.cov + nm.measurement();
  Eigen::LLT<Mat6> llt(s);
  if (llt.info() != Eigen::Success) {
    s += 1e-9 * Mat6::Identity();
    llt.compute(s);
    if (llt.info() != Eigen::Success)
      throw FilterDivergence("singular innovation covariance");
  }
  const Mat6 gain = llt.solve(p_xz.transpose()).transpose();

  Vec6 innovation = obs - zmean;
  if (circular_heading) innovation[kHeadingIdx] = wrap_angle(innovation[kHeadingIdx]);

  StateEstimate out;
  Vec6 xm = xmean + gain * innovation;
  out.mean = from_vec(xm);
  if (!circular_heading) out.mean.h = xm[kHeadingIdx];
  out.cov = est.cov - gain * s * gain.transpose();
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  out.cov = detail::floor_psd(out.cov);
  return out;
}

/// ETB shadow filter: on every broadcast the replica is reset to the
/// transmitted estimate, then advanced by predict steps only.
inline StateEstimate shadow_reset(const StateEstimate& current) { return current; }

inline StateEstimate shadow_predict(const StateEstimate& shadow, double dt, const NoiseModel& nm,
                                    const UtParams& ut = {}, double eps_omega = 1e-4) {
  return ukf_predict(shadow, dt, nm, ut, eps_omega);
}

}  // namespace vdm
