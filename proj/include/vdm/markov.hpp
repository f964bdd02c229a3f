#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <unordered_map>
#include <vector>

#include "vdm/errors.hpp"

namespace vdm {

/// Fraction of a receiver's disc hidden from the sender, averaged over the
/// sender-receiver distance: E[A(d)] / (pi r^2) = 3*sqrt(3) / (4*pi).
inline double hidden_area_fraction() {
  return 3.0 * std::sqrt(3.0) / (4.0 * std::numbers::pi);
}

/// Intersection area of two discs of radius r at center distance d:
/// Phi(d) = 2r (r acos(d/2r) - (d/2) sqrt(1 - (d/2r)^2)). Zero beyond 2r.
inline double phi(double d, double r) {
  if (d >= 2.0 * r) return 0.0;
  if (d <= 0.0) return std::numbers::pi * r * r;
  const double half = d / (2.0 * r);
  return 2.0 * r * (r * std::acos(half) - 0.5 * d * std::sqrt(1.0 - half * half));
}

/// Closed form of E[Phi(d)] under the in-range distance density
/// f_d(d) = 2d/r^2 on [0, r].
inline double expected_phi(double r) {
  return r * r * (std::numbers::pi - 3.0 * std::sqrt(3.0) / 4.0);
}

/// Expected same-subcarrier vehicle count in the hidden region of a receiver
/// that is tracking n_hat neighbors: (n_hat + 1)/n_sc * 3*sqrt(3)/(4*pi).
inline double estimate_hidden(double n_hat, int n_sc) {
  return (n_hat + 1.0) / static_cast<double>(n_sc) * hidden_area_fraction();
}

/// P(a_t = a | x_{t-1} = i): Binomial(N - i, rho) arrival mass.
inline double arrival_pmf(int a, int i, double rho, int n) {
  const int free_count = n - i;
  if (a < 0 || a > free_count) return 0.0;
  if (free_count == 0) return a == 0 ? 1.0 : 0.0;
  // log-space binomial for numerical robustness at larger N
  if (rho <= 0.0) return a == 0 ? 1.0 : 0.0;
  if (rho >= 1.0) return a == free_count ? 1.0 : 0.0;
  const double log_c = std::lgamma(free_count + 1.0) - std::lgamma(a + 1.0) -
                       std::lgamma(free_count - a + 1.0);
  return std::exp(log_c + a * std::log(rho) + (free_count - a) * std::log1p(-rho));
}

/// Backlog chain of the 1-persistent shared-subcarrier population: states
/// x_t in {0..N-1}, transitions driven by binomial arrivals with one
/// departure per busy slot.
struct MarkovModel {
  int n = 0;
  double rho = 0.0;
  Eigen::MatrixXd t;   // row-stochastic transition matrix
  Eigen::VectorXd pi;  // steady state (filled by steady_state)
};

inline MarkovModel transition_matrix(double rho, int n) {
  MarkovModel m;
  m.n = n;
  m.rho = rho;
  m.t = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == 0 && j == 0) {
        m.t(i, j) = arrival_pmf(0, 0, rho, n) + arrival_pmf(1, 0, rho, n);
      } else if (i == 0) {
        m.t(i, j) = arrival_pmf(j + 1, 0, rho, n);
      } else if (j < i - 1) {
        m.t(i, j) = 0.0;
      } else {
        m.t(i, j) = arrival_pmf(j - i + 1, i, rho, n);
      }
    }
  }
  return m;
}

/// Solves pi T = pi, sum(pi) = 1. Direct solve up to N = 64, power
/// iteration (tol 1e-12, <= 1e6 sweeps) beyond.
inline Eigen::VectorXd steady_state(MarkovModel& m) {
  const int n = m.n;
  if (n <= 0) throw NumericError("steady_state: empty chain");
  if (n == 1) {
    m.pi = Eigen::VectorXd::Ones(1);
    return m.pi;
  }
  if (n <= 64) {
    // (T' - I) pi = 0 with the last equation replaced by normalization
    Eigen::MatrixXd a = m.t.transpose() - Eigen::MatrixXd::Identity(n, n);
    a.row(n - 1).setOnes();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    b(n - 1) = 1.0;
    m.pi = a.fullPivLu().solve(b);
    // tiny negative entries from roundoff
    m.pi = m.pi.cwiseMax(0.0);
    m.pi /= m.pi.sum();
    return m.pi;
  }
  Eigen::VectorXd pi = Eigen::VectorXd::Constant(n, 1.0 / n);
  for (std::int64_t iter = 0; iter < 1000000; ++iter) {
    Eigen::VectorXd next = m.t.transpose() * pi;
    next /= next.sum();
    const double diff = (next - pi).cwiseAbs().maxCoeff();
    pi = next;
    if (diff < 1e-12) {
      m.pi = pi;
      return m.pi;
    }
  }
  throw NumericError("steady_state: power iteration did not converge (N=" + std::to_string(n) +
                     ", rho=" + std::to_string(m.rho) + ")");
}

/// Steady-state probability of an empty backlog.
inline double pi_zero(double rho, int n) {
  if (n <= 1) return 1.0;
  MarkovModel m = transition_matrix(rho, n);
  return steady_state(m)(0);
}

/// Packet collision probability against n_ht hidden contenders:
/// P_coll = 1 - Pi_0(rho, N) (1-rho)^n_ht. A fractional population keeps the
/// real-valued exponent while the chain is evaluated at N = ceil(n_ht).
inline double p_coll(double rho, double n_ht) {
  if (n_ht <= 0.0) return 0.0;
  const int n = static_cast<int>(std::ceil(n_ht - 1e-12));
  const double p0 = pi_zero(rho, n);
  return 1.0 - p0 * std::pow(1.0 - rho, n_ht);
}

/// Memoizing solver for the NACC argmin. The rho grid is geometric with
/// grid_size points over [rho_min, rho_max]; Pi_0 values are cached per
/// (grid index, N). One instance per run, not thread-shared.
class NaccSolver {
 public:
  NaccSolver(double rho_min, double rho_max, int grid_size = 512)
      : rho_min_(rho_min), rho_max_(rho_max) {
    grid_.reserve(grid_size);
    const double ratio = rho_max / rho_min;
    for (int i = 0; i < grid_size; ++i) {
      const double f = grid_size == 1 ? 0.0 : static_cast<double>(i) / (grid_size - 1);
      grid_.push_back(rho_min * std::pow(ratio, f));
    }
  }

  const std::vector<double>& grid() const { return grid_; }

  /// rho* = argmin |P_coll(rho, N_ht(n_hat)) - p_thr|; ties go to the
  /// smaller rho.
  double solve(double n_hat, int n_sc, double p_thr) {
    const double n_ht = estimate_hidden(n_hat, n_sc);
    double best_rho = grid_.front();
    double best_obj = std::numeric_limits<double>::infinity();
    const int n = n_ht <= 0.0 ? 0 : static_cast<int>(std::ceil(n_ht - 1e-12));
    for (std::size_t k = 0; k < grid_.size(); ++k) {
      double pc;
      if (n <= 0) {
        pc = 0.0;
      } else {
        const double p0 = cached_pi0(k, n);
        pc = 1.0 - p0 * std::pow(1.0 - grid_[k], n_ht);
      }
      const double obj = std::abs(pc - p_thr);
      if (obj < best_obj) {
        best_obj = obj;
        best_rho = grid_[k];
      }
    }
    return best_rho;
  }

 private:
  double cached_pi0(std::size_t grid_idx, int n) {
    const std::uint64_t key = (static_cast<std::uint64_t>(grid_idx) << 32) |
                              static_cast<std::uint32_t>(n);
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
    const double p0 = pi_zero(grid_[grid_idx], n);
    memo_.emplace(key, p0);
    return p0;
  }

  double rho_min_, rho_max_;
  std::vector<double> grid_;
  std::unordered_map<std::uint64_t, double> memo_;
};

/// One-shot form of the NACC rho choice.
inline double nacc_rho(double n_hat, int n_sc, double p_thr, double rho_min, double rho_max,
                       int grid_size = 512) {
  NaccSolver solver(rho_min, rho_max, grid_size);
  return solver.solve(n_hat, n_sc, p_thr);
}

}  // namespace vdm
