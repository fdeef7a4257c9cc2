#pragma once

// Axial Green function of the integrable waveguide and the secular matrix
// for all four models.
//
// Per transverse channel n the axial momentum is p^2 = k2 = eps - lambda*n.
// Every channel term is an even analytic function of p, so one generic
// real-arithmetic form (in k2) covers open, closed and near-threshold
// channels alike:
//
//   periodic, separation zeta in [0,1):
//     C(zeta) = x1*cos(2 p zeta) + sin(2 p zeta)/p + i*x3s*sin(2 p zeta)/(2p)
//     x1  = -sinc(2p) / (sin(pi l0 + p) sin(pi l0 - p))
//     x3s =  sin(2 pi l0) / (sin(pi l0 + p) sin(pi l0 - p))
//   with sin+sin- = (cos 2p - cos 2 pi l0)/2, all even in p.
//
// Far-closed channels (k2 <= -0.25) switch to explicitly exponential forms
// to avoid the cancellation the generic form develops at large |p|.
//
// The regularized diagonal pairs the first closed counterterm with the
// leading term of the Hurwitz zeta,
//   sqrt(lambda)/|p_{N+1}| = q^{-1/2},  q = [eps/lambda]+1 - eps/lambda,
// leaving zeta(1/2, q+1), which is smooth through channel thresholds.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "wgscat/common.hpp"
#include "wgscat/params.hpp"
#include "wgscat/specfun.hpp"

namespace wgscat {

struct pole_error : numeric_error {
  using numeric_error::numeric_error;
};

namespace detail {

inline constexpr double kGenericBand = 0.25;  // |k2| below this -> even/generic path
inline constexpr double kPoleGuard = 1e-13;
inline constexpr double kClosedTol = 1e-13;  // per-term closed-channel cutoff

// sinc(x) = sin(x)/x, cos(x) and m(x) = (cos x - sinc x)/x^2 as even
// functions of x, parameterized by q = x^2 (q < 0 means hyperbolic).
inline double sincq(double q) {
  if (std::abs(q) < 1e-7) return 1.0 - q / 6.0 + q * q / 120.0;
  if (q > 0.0) {
    const double x = std::sqrt(q);
    return std::sin(x) / x;
  }
  const double x = std::sqrt(-q);
  return std::sinh(x) / x;
}

inline double cosq(double q) {
  if (std::abs(q) < 1e-7) return 1.0 - q / 2.0 + q * q / 24.0;
  return q > 0.0 ? std::cos(std::sqrt(q)) : std::cosh(std::sqrt(-q));
}

inline double mq(double q) {
  if (std::abs(q) < 1e-4) return -1.0 / 3.0 + q / 30.0 - q * q / 840.0;
  return (cosq(q) - sincq(q)) / q;
}

inline double em(double x) { return -std::expm1(-x); }  // 1 - exp(-x), stable

// ---------------------------------------------------------------------------
// Periodic channel terms (without the global sqrt(lambda) and the common
// phase exp(2 pi i l0 zeta)).

struct PeriodicCtx {
  double l0 = 0.0;
  double c0 = 1.0;        // cos(2 pi l0)
  double s2l0 = 0.0;      // sin(2 pi l0)
  cplx phase1{1.0, 0.0};  // exp(2 pi i l0)
  bool real = true;
  explicit PeriodicCtx(double l0_)
      : l0(l0_), c0(std::cos(2.0 * kPi * l0_)), s2l0(std::sin(2.0 * kPi * l0_)),
        phase1(std::exp(cplx(0.0, 2.0 * kPi * l0_))), real(l0_ == 0.0) {}
};

// sin(pi l0 + p) sin(pi l0 - p) = (cos 2p - cos 2 pi l0)/2, even in p.
// For open channels the sine product is evaluated directly: each factor is
// correctly rounded near its own zeros, which keeps the relative accuracy
// of the product near poles (the subtractive form loses it, catastrophically
// so at the quadratic pole zeros of the l0 = 0 model).
inline double spsm(double k2, const PeriodicCtx& c) {
  if (k2 >= kGenericBand) {
    const double p = std::sqrt(k2);
    return std::sin(kPi * c.l0 + p) * std::sin(kPi * c.l0 - p);
  }
  return 0.5 * (cosq(4.0 * k2) - c.c0);
}

inline void guard_periodic(double k2, const PeriodicCtx& c) {
  if (k2 >= kGenericBand) {
    const double p = std::sqrt(k2);
    const double sa = std::sin(kPi * c.l0 + p), sb = std::sin(kPi * c.l0 - p);
    // Argument-reduction noise makes each sine unreliable below ~eps*|arg|.
    if (std::min(std::abs(sa), std::abs(sb)) < kPoleGuard * std::max(1.0, p))
      throw pole_error("secular entry evaluated at a spectral pole");
    return;
  }
  if (std::abs(2.0 * spsm(k2, c)) < kPoleGuard)
    throw pole_error("secular entry evaluated at a spectral pole");
}

// Generic channel term, valid for any k2 (loses digits once k2 < -0.25).
inline cplx p_term_generic(double k2, double zeta, const PeriodicCtx& c) {
  const double ss = spsm(k2, c);
  const double x1 = -sincq(4.0 * k2) / ss;
  const double ct = cosq(4.0 * k2 * zeta * zeta);
  const double q2 = zeta * sincq(4.0 * k2 * zeta * zeta);  // sin(2 p zeta)/(2p)
  return {x1 * ct + 2.0 * q2, c.s2l0 / ss * q2};
}

// d/d(eps) of the generic term; every factor stays even in p.
inline cplx p_term_generic_deriv(double k2, double zeta, const PeriodicCtx& c) {
  const double ss = spsm(k2, c);
  const double x1 = -sincq(4.0 * k2) / ss;
  const double x3s = c.s2l0 / ss;
  const double z2 = zeta * zeta;
  const double ct = cosq(4.0 * k2 * z2);
  const double q2 = zeta * sincq(4.0 * k2 * z2);
  const double s2 = sincq(4.0 * k2);
  const double dx1 = -(2.0 * mq(4.0 * k2) * ss + s2 * s2) / (ss * ss);
  const double dx3s = c.s2l0 * s2 / (ss * ss);
  const double dq2 = 2.0 * z2 * zeta * mq(4.0 * k2 * z2);  // d q2/d eps
  const double re = dx1 * ct - 2.0 * zeta * x1 * q2 + 2.0 * dq2;
  const double im = dx3s * q2 + x3s * dq2;
  return {re, im};
}

// Far-closed channel (k2 <= -0.25), y = sqrt(-k2):
//   term = -(1/y) [ T1/(1-g) + conj(phase1) T2/(1-conj(g)) ],
//   T1 = exp(-2 y zeta), T2 = exp(-2 y (1-zeta)), g = phase1 exp(-2y).
inline cplx p_term_far(double y, double zeta, const PeriodicCtx& c) {
  const double T1 = std::exp(-2.0 * y * zeta);
  const double T2 = std::exp(-2.0 * y * (1.0 - zeta));
  const cplx g = c.phase1 * std::exp(-2.0 * y);
  return (-1.0 / y) *
         (T1 / (1.0 - g) + std::conj(c.phase1) * T2 / (1.0 - std::conj(g)));
}

inline cplx p_term_far_deriv(double y, double zeta, const PeriodicCtx& c) {
  const double T1 = std::exp(-2.0 * y * zeta);
  const double T2 = std::exp(-2.0 * y * (1.0 - zeta));
  const cplx g = c.phase1 * std::exp(-2.0 * y);
  const cplx gb = std::conj(g);
  const cplx d1 = 1.0 - g, d2 = 1.0 - gb;
  const cplx Q = T1 / d1 + std::conj(c.phase1) * T2 / d2;
  const cplx dQ = (T1 / y) * (zeta * d1 + g) / (d1 * d1) +
                  std::conj(c.phase1) * (T2 / y) * ((1.0 - zeta) * d2 + gb) / (d2 * d2);
  return -dQ / y - Q / (2.0 * y * y * y);
}

// Regularized closed diagonal for n >= N+2 (counterterm included):
//   combo = (2/y) E (E - c0) / (1 + E^2 - 2 c0 E),  E = exp(-2y).
inline double p_diag_combo_far(double y, const PeriodicCtx& c) {
  const double E = std::exp(-2.0 * y);
  return 2.0 / y * E * (E - c.c0) / (1.0 + E * E - 2.0 * c.c0 * E);
}

inline double p_diag_combo_far_deriv(double y, const PeriodicCtx& c) {
  const double E = std::exp(-2.0 * y);
  const double num = 2.0 * E * (E - c.c0);
  const double den = y * (1.0 + E * E - 2.0 * c.c0 * E);
  const double dnum = -4.0 * E * (2.0 * E - c.c0);
  const double dden = (1.0 + E * E - 2.0 * c.c0 * E) - 4.0 * y * E * (E - c.c0);
  return (dnum * den - num * dden) / (den * den) * (-0.5 / y);
}

// First closed channel n = N+1 (its counterterm is paired into the zeta):
//   g_c = -(1/y) (1 - E^2) / (1 + E^2 - 2 c0 E).
inline double p_diag_first_far(double y, const PeriodicCtx& c) {
  const double E = std::exp(-2.0 * y);
  return -(1.0 - E * E) / (y * (1.0 + E * E - 2.0 * c.c0 * E));
}

inline double p_diag_first_far_deriv(double y, const PeriodicCtx& c) {
  const double E = std::exp(-2.0 * y);
  const double num = -(1.0 - E * E);
  const double den = y * (1.0 + E * E - 2.0 * c.c0 * E);
  const double dnum = 4.0 * E * E;
  const double dden = (1.0 + E * E - 2.0 * c.c0 * E) - 4.0 * y * E * (E - c.c0);
  return (dnum * den - num * dden) / (den * den) * (-0.5 / y);
}

// Open/near-threshold diagonal is the zeta -> 0 limit of the generic term.
inline double p_diag_generic(double k2, const PeriodicCtx& c) {
  return -sincq(4.0 * k2) / spsm(k2, c);
}

inline double p_diag_generic_deriv(double k2, const PeriodicCtx& c) {
  const double ss = spsm(k2, c);
  const double s2 = sincq(4.0 * k2);
  return -(2.0 * mq(4.0 * k2) * ss + s2 * s2) / (ss * ss);
}

// ---------------------------------------------------------------------------
// Box channel terms. alpha = 1 - z_upper, beta = z_lower.

inline void guard_box(double k2) {
  // Genuine poles sit at sin(2p) = 0 with p bounded away from zero; the
  // p -> 0 threshold is regular (box levels start at l = 1).
  if (k2 > kGenericBand) {
    const double p2 = 2.0 * std::sqrt(k2);
    if (std::abs(std::sin(p2)) < kPoleGuard * std::max(1.0, p2))
      throw pole_error("secular entry evaluated at a spectral pole (box)");
  }
}

inline double b_term_generic(double k2, double alpha, double beta) {
  return -4.0 * alpha * beta * sincq(4.0 * k2 * alpha * alpha) *
         sincq(4.0 * k2 * beta * beta) / sincq(4.0 * k2);
}

inline double b_term_generic_deriv(double k2, double alpha, double beta) {
  const double Sa = sincq(4.0 * k2 * alpha * alpha);
  const double Sb = sincq(4.0 * k2 * beta * beta);
  const double S2 = sincq(4.0 * k2);
  const double Ma = mq(4.0 * k2 * alpha * alpha);
  const double Mb = mq(4.0 * k2 * beta * beta);
  const double M2 = mq(4.0 * k2);
  return -4.0 * alpha * beta *
         ((2.0 * alpha * alpha * Ma * Sb + 2.0 * beta * beta * Sa * Mb) * S2 -
          2.0 * Sa * Sb * M2) /
         (S2 * S2);
}

inline double b_term_far(double y, double alpha, double beta) {
  const double delta = 1.0 - alpha - beta;  // z_upper - z_lower >= 0
  return -std::exp(-2.0 * y * delta) * em(4.0 * y * alpha) * em(4.0 * y * beta) /
         (y * em(4.0 * y));
}

inline double b_term_far_deriv(double y, double alpha, double beta) {
  const double delta = 1.0 - alpha - beta;
  const double F = std::exp(-2.0 * y * delta) * em(4.0 * y * alpha) *
                   em(4.0 * y * beta) / em(4.0 * y);
  const double logd = -2.0 * delta +
                      4.0 * alpha * std::exp(-4.0 * y * alpha) / em(4.0 * y * alpha) +
                      4.0 * beta * std::exp(-4.0 * y * beta) / em(4.0 * y * beta) -
                      4.0 * std::exp(-4.0 * y) / em(4.0 * y);
  // t = -F/y;  dt/deps = (-1/(2y)) * d(-F/y)/dy
  const double dt_dy = -(logd * F) / y + F / (y * y);
  return dt_dy * (-0.5 / y);
}

// Regularized closed diagonal (n >= N+2): combo = (a + b - 2ab)/(y (1-ab)),
// a = exp(-4 y (1-z)), b = exp(-4 y z), ab = exp(-4y).
inline double b_diag_combo_far(double y, double z) {
  const double a = std::exp(-4.0 * y * (1.0 - z));
  const double b = std::exp(-4.0 * y * z);
  const double ab = std::exp(-4.0 * y);
  return (a + b - 2.0 * ab) / (y * em(4.0 * y));
}

inline double b_diag_combo_far_deriv(double y, double z) {
  const double alpha = 1.0 - z, beta = z;
  const double a = std::exp(-4.0 * y * alpha);
  const double b = std::exp(-4.0 * y * beta);
  const double ab = std::exp(-4.0 * y);
  const double num = a + b - 2.0 * ab;
  const double den = y * (1.0 - ab);
  // d/deps with dy/deps = -1/(2y)
  const double dnum = (2.0 / y) * (alpha * a + beta * b - 2.0 * ab);
  const double dden = -(1.0 - ab) / (2.0 * y) + y * (-2.0 * ab / y);
  return (dnum * den - num * dden) / (den * den);
}

inline double b_diag_first_far(double y, double z) {
  return -em(4.0 * y * (1.0 - z)) * em(4.0 * y * z) / (y * em(4.0 * y));
}

inline double b_diag_first_far_deriv(double y, double z) {
  return b_term_far_deriv(y, 1.0 - z, z);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Entry-level evaluators (readable path; the scanner uses SecularEvaluator).

namespace detail {

// Sum of channel terms for a periodic off-diagonal entry at separation
// zeta in (0,1); returns the pre-phase, pre-sqrt(lambda) value.
inline cplx p_entry_sum(double zeta, double eps, const PeriodicCtx& ctx, double lambda,
                        bool deriv) {
  cplx sum{0.0, 0.0};
  const double zmin = std::min(zeta, 1.0 - zeta);
  for (int n = 0;; ++n) {
    const double k2 = eps - lambda * n;
    if (k2 > -kGenericBand) {
      guard_periodic(k2, ctx);
      sum += deriv ? p_term_generic_deriv(k2, zeta, ctx) : p_term_generic(k2, zeta, ctx);
    } else {
      const double y = std::sqrt(-k2);
      if (2.0 * y * zmin > 36.0) break;
      sum += deriv ? p_term_far_deriv(y, zeta, ctx) : p_term_far(y, zeta, ctx);
    }
    if (n > 400000) throw numeric_error("periodic entry sum did not truncate");
  }
  return sum;
}

inline double p_diag_sum(double eps, const PeriodicCtx& ctx, double lambda, bool deriv) {
  const int N = static_cast<int>(std::floor(eps / lambda));
  double sum = 0.0;
  for (int n = 0; n <= N; ++n) {
    const double k2 = eps - lambda * n;
    guard_periodic(k2, ctx);
    sum += deriv ? p_diag_generic_deriv(k2, ctx) : p_diag_generic(k2, ctx);
  }
  {  // n = N+1, counterterm paired into the zeta term
    const double k2 = eps - lambda * (N + 1);
    guard_periodic(k2, ctx);
    if (k2 > -kGenericBand) {
      sum += deriv ? p_diag_generic_deriv(k2, ctx) : p_diag_generic(k2, ctx);
    } else {
      const double y = std::sqrt(-k2);
      sum += deriv ? p_diag_first_far_deriv(y, ctx) : p_diag_first_far(y, ctx);
    }
  }
  for (int n = N + 2;; ++n) {
    const double y = std::sqrt(lambda * n - eps);
    const double t = deriv ? p_diag_combo_far_deriv(y, ctx) : p_diag_combo_far(y, ctx);
    sum += t;
    if (std::abs(t) < 1e-17 || 2.0 * y > 40.0) break;
    if (n - N > 100000) throw numeric_error("diagonal combo sum did not truncate");
  }
  return sum;
}

inline double b_entry_sum(double z_hi, double z_lo, double eps, double lambda, bool deriv) {
  const double alpha = 1.0 - z_hi, beta = z_lo;
  const double delta = z_hi - z_lo;
  const double reach = std::min({delta > 0.0 ? delta : 1.0, alpha, beta});
  double sum = 0.0;
  for (int n = 0;; ++n) {
    const double k2 = eps - lambda * n;
    if (k2 > -kGenericBand) {
      guard_box(k2);
      sum += deriv ? b_term_generic_deriv(k2, alpha, beta) : b_term_generic(k2, alpha, beta);
    } else {
      const double y = std::sqrt(-k2);
      if (2.0 * y * reach > 36.0) break;
      sum += deriv ? b_term_far_deriv(y, alpha, beta) : b_term_far(y, alpha, beta);
    }
    if (n > 400000) throw numeric_error("box entry sum did not truncate");
  }
  return sum;
}

inline double b_diag_sum(double z, double eps, double lambda, bool deriv) {
  const int N = static_cast<int>(std::floor(eps / lambda));
  double sum = 0.0;
  for (int n = 0; n <= N; ++n) {
    const double k2 = eps - lambda * n;
    guard_box(k2);
    sum += deriv ? b_term_generic_deriv(k2, 1.0 - z, z) : b_term_generic(k2, 1.0 - z, z);
  }
  {
    const double k2 = eps - lambda * (N + 1);
    if (k2 > -kGenericBand) {
      guard_box(k2);
      sum += deriv ? b_term_generic_deriv(k2, 1.0 - z, z) : b_term_generic(k2, 1.0 - z, z);
    } else {
      const double y = std::sqrt(-k2);
      sum += deriv ? b_diag_first_far_deriv(y, z) : b_diag_first_far(y, z);
    }
  }
  for (int n = N + 2;; ++n) {
    const double y = std::sqrt(lambda * n - eps);
    const double t = deriv ? b_diag_combo_far_deriv(y, z) : b_diag_combo_far(y, z);
    sum += t;
    if (std::abs(t) < 1e-17) break;
    if (n - N > 400000) throw numeric_error("box diagonal combo sum did not truncate");
  }
  return sum;
}

}  // namespace detail

// Periodic axial Green function S(z, eps) for z in (-1,0) U (0,1);
// S(-z) = conj(S(z)). `tol` is accepted for interface stability; the
// closed-channel truncation already resolves entries to ~1e-13.
inline cplx greens_axis(double z, double eps, const WaveguideParams& p,
                        double /*tol*/ = 1e-13) {
  if (p.boundary != Boundary::Periodic)
    throw domain_error("greens_axis: periodic boundary only (use box_kernel)");
  if (z == 0.0 || std::abs(z) >= 1.0)
    throw domain_error("greens_axis: need 0 < |z| < 1");
  const bool flip = z < 0.0;
  const double zeta = flip ? -z : z;
  detail::PeriodicCtx ctx(p.l0);
  const cplx phase = std::exp(cplx(0.0, 2.0 * kPi * p.l0 * zeta));
  const cplx val =
      std::sqrt(p.lambda) * phase * detail::p_entry_sum(zeta, eps, ctx, p.lambda, false);
  return flip ? std::conj(val) : val;
}

inline cplx greens_axis_deriv(double z, double eps, const WaveguideParams& p) {
  const bool flip = z < 0.0;
  const double zeta = flip ? -z : z;
  detail::PeriodicCtx ctx(p.l0);
  const cplx phase = std::exp(cplx(0.0, 2.0 * kPi * p.l0 * zeta));
  const cplx val =
      std::sqrt(p.lambda) * phase * detail::p_entry_sum(zeta, eps, ctx, p.lambda, true);
  return flip ? std::conj(val) : val;
}

// Regularized diagonal kernel <F|S|F> (strength-free).
inline double greens_diag_kernel(double eps, const WaveguideParams& p) {
  if (std::abs(eps / p.lambda - std::round(eps / p.lambda)) < 1e-13)
    throw pole_error("greens_diag_kernel: eps/lambda integer (threshold)");
  detail::PeriodicCtx ctx(p.l0);
  const int N = static_cast<int>(std::floor(eps / p.lambda));
  const double q = (N + 1) - eps / p.lambda;
  return std::sqrt(p.lambda) * detail::p_diag_sum(eps, ctx, p.lambda, false) -
         hurwitz_zeta(0.5, q + 1.0, 1e-12);
}

inline double greens_diag_kernel_deriv(double eps, const WaveguideParams& p) {
  detail::PeriodicCtx ctx(p.l0);
  const int N = static_cast<int>(std::floor(eps / p.lambda));
  const double q = (N + 1) - eps / p.lambda;
  return std::sqrt(p.lambda) * detail::p_diag_sum(eps, ctx, p.lambda, true) -
         hurwitz_zeta(1.5, q + 1.0, 1e-12) / (2.0 * p.lambda);
}

// The s = 1 secular function v * kernel - 1.
inline double greens_diag(double eps, const WaveguideParams& p, double v) {
  return v * greens_diag_kernel(eps, p) - 1.0;
}

inline double box_kernel(double z_hi, double z_lo, double eps, const WaveguideParams& p) {
  return std::sqrt(p.lambda) * detail::b_entry_sum(std::max(z_hi, z_lo),
                                                   std::min(z_hi, z_lo), eps, p.lambda,
                                                   false);
}

inline double box_kernel_deriv(double z_hi, double z_lo, double eps,
                               const WaveguideParams& p) {
  return std::sqrt(p.lambda) * detail::b_entry_sum(std::max(z_hi, z_lo),
                                                   std::min(z_hi, z_lo), eps, p.lambda,
                                                   true);
}

inline double box_diag_kernel(double z, double eps, const WaveguideParams& p) {
  const int N = static_cast<int>(std::floor(eps / p.lambda));
  const double q = (N + 1) - eps / p.lambda;
  return std::sqrt(p.lambda) * detail::b_diag_sum(z, eps, p.lambda, false) -
         hurwitz_zeta(0.5, q + 1.0, 1e-12);
}

inline double box_diag_kernel_deriv(double z, double eps, const WaveguideParams& p) {
  const int N = static_cast<int>(std::floor(eps / p.lambda));
  const double q = (N + 1) - eps / p.lambda;
  return std::sqrt(p.lambda) * detail::b_diag_sum(z, eps, p.lambda, true) -
         hurwitz_zeta(1.5, q + 1.0, 1e-12) / (2.0 * p.lambda);
}

// ---------------------------------------------------------------------------
// Kernel matrix K_jk = <F_j|S|F_k> and the symmetrized secular matrix
//   M = D_sqrt(v) K D_sqrt(v) - I,
// which is Hermitian with real determinant for every model. Coincident
// positions (allowed only in custom sets) use the regularized diagonal
// kernel for their off-diagonal entries.

inline Eigen::MatrixXcd kernel_matrix(double eps, const ScattererSet& sc,
                                      const WaveguideParams& p, bool deriv = false) {
  const int s = sc.s;
  Eigen::MatrixXcd k(s, s);
  if (p.boundary == Boundary::Periodic) {
    const double diag = deriv ? greens_diag_kernel_deriv(eps, p)
                              : greens_diag_kernel(eps, p);
    for (int j = 0; j < s; ++j) {
      k(j, j) = diag;
      for (int i = 0; i < j; ++i) {
        const double zeta = sc.positions[j] - sc.positions[i];
        const cplx val = (zeta < 1e-12)
                             ? cplx(diag, 0.0)
                             : (deriv ? greens_axis_deriv(zeta, eps, p)
                                      : greens_axis(zeta, eps, p));
        k(j, i) = val;
        k(i, j) = std::conj(val);
      }
    }
  } else {
    for (int j = 0; j < s; ++j) {
      k(j, j) = deriv ? box_diag_kernel_deriv(sc.positions[j], eps, p)
                      : box_diag_kernel(sc.positions[j], eps, p);
      for (int i = 0; i < j; ++i) {
        const double zeta = sc.positions[j] - sc.positions[i];
        double val;
        if (zeta < 1e-12)
          val = deriv ? box_diag_kernel_deriv(sc.positions[j], eps, p)
                      : box_diag_kernel(sc.positions[j], eps, p);
        else
          val = deriv ? box_kernel_deriv(sc.positions[j], sc.positions[i], eps, p)
                      : box_kernel(sc.positions[j], sc.positions[i], eps, p);
        k(j, i) = val;
        k(i, j) = val;
      }
    }
  }
  return k;
}

inline Eigen::MatrixXcd kernel_matrix_deriv(double eps, const ScattererSet& sc,
                                            const WaveguideParams& p) {
  return kernel_matrix(eps, sc, p, true);
}

struct SecularMatrix {
  double eps = 0.0;
  Model model = Model::NonSymmetric;
  Eigen::MatrixXcd m;
};

inline SecularMatrix build_secular_matrix(double eps, const ScattererSet& sc,
                                          const WaveguideParams& p) {
  SecularMatrix out;
  out.eps = eps;
  out.model = sc.model;
  Eigen::MatrixXcd k = kernel_matrix(eps, sc, p);
  const int s = sc.s;
  Eigen::VectorXd sq(s);
  for (int j = 0; j < s; ++j) sq(j) = std::sqrt(sc.strengths[j]);
  out.m = sq.asDiagonal() * k * sq.asDiagonal();
  out.m -= Eigen::MatrixXcd::Identity(s, s);
  return out;
}

// ---------------------------------------------------------------------------
// Fast determinant evaluator used by the root scanner. Not thread safe;
// use one instance per worker.

class SecularEvaluator {
 public:
  SecularEvaluator(const WaveguideParams& p, const ScattererSet& sc)
      : p_(p), sc_(sc), ctx_(p.l0), s_(sc.s) {
    real_ = (p_.boundary == Boundary::HardWallBox) || p_.l0 == 0.0;
    sqv_.resize(s_);
    for (int j = 0; j < s_; ++j) sqv_[j] = std::sqrt(sc_.strengths[j]);
    const int np = s_ * (s_ - 1) / 2;
    zetas_.resize(np);
    coincident_.resize(np);
    wre_.resize(np);
    wim_.resize(np);
    min_reach_ = 1.0;
    for (int j = 1, idx = 0; j < s_; ++j)
      for (int i = 0; i < j; ++i, ++idx) {
        const double zeta = sc_.positions[j] - sc_.positions[i];
        zetas_[idx] = zeta;
        coincident_[idx] = zeta < 1e-12;
        if (!coincident_[idx])
          min_reach_ = std::min(min_reach_, std::min(zeta, 1.0 - zeta));
        const cplx w = std::exp(cplx(0.0, 2.0 * kPi * p_.l0 * zeta));
        wre_[idx] = w.real();
        wim_[idx] = w.imag();
      }
    if (p_.boundary == Boundary::HardWallBox)
      for (double z : sc_.positions)
        min_reach_ = std::min({min_reach_, z, 1.0 - z});
    cj_.resize(s_);
    sj_.resize(s_);
    accRe_.resize(np);
    accIm_.resize(np);
    mc_.resize(s_, s_);
    mr_.resize(s_, s_);
  }

  const WaveguideParams& params() const { return p_; }
  const ScattererSet& scatterers() const { return sc_; }
  bool real_arithmetic() const { return real_; }

  struct DetValue {
    double sign = 0.0;    // +1 / -1
    double logabs = 0.0;  // log |det|
  };

  DetValue det(double eps) {
    build(eps);
    return real_ ? det_real() : det_complex();
  }

  // det rescaled by exp(-logscale), clamped to avoid overflow; sign-faithful.
  double scaled_det(double eps, double logscale) {
    const DetValue d = det(eps);
    return d.sign * std::exp(std::clamp(d.logabs - logscale, -600.0, 600.0));
  }

  // Eigenvalues of the symmetrized secular matrix, ascending. Between two
  // poles every branch is strictly decreasing in eps (the kernel derivative
  // is negative definite), which the scanner relies on.
  Eigen::VectorXd eigenvalues(double eps) {
    build(eps);
    if (real_) {
      saes_r_.compute(mr_, Eigen::EigenvaluesOnly);
      return saes_r_.eigenvalues();
    }
    saes_c_.compute(mc_, Eigen::EigenvaluesOnly);
    return saes_c_.eigenvalues();
  }

  // Clean Hermitian matrix at eps (for null vectors and tests).
  Eigen::MatrixXcd matrix(double eps) const {
    return build_secular_matrix(eps, sc_, p_).m;
  }

  Eigen::MatrixXcd kernel_deriv(double eps) const {
    return kernel_matrix_deriv(eps, sc_, p_);
  }

 private:
  void build(double eps) {
    std::fill(accRe_.begin(), accRe_.end(), 0.0);
    std::fill(accIm_.begin(), accIm_.end(), 0.0);
    if (p_.boundary == Boundary::Periodic)
      build_periodic(eps);
    else
      build_box(eps);
  }

  void build_periodic(double eps) {
    const double lam = p_.lambda;
    const double sqlam = std::sqrt(lam);
    const int N = static_cast<int>(std::floor(eps / lam));
    // Open + near-threshold channels.
    for (int n = 0; n <= N + 1; ++n) {
      const double k2 = eps - lam * n;
      if (k2 <= -detail::kGenericBand) break;
      detail::guard_periodic(k2, ctx_);
      if (k2 >= detail::kGenericBand) {
        const double ss = detail::spsm(k2, ctx_);
        const double x1 = -detail::sincq(4.0 * k2) / ss;
        const double x3s = ctx_.s2l0 / ss;
        const double pch = std::sqrt(k2);
        const double inv2p = 0.5 / pch;
        for (int j = 0; j < s_; ++j) {
          cj_[j] = std::cos(2.0 * pch * sc_.positions[j]);
          sj_[j] = std::sin(2.0 * pch * sc_.positions[j]);
        }
        for (int j = 1, idx = 0; j < s_; ++j) {
          const double cjv = cj_[j], sjv = sj_[j];
          for (int i = 0; i < j; ++i, ++idx) {
            const double ct = cjv * cj_[i] + sjv * sj_[i];
            const double st = sjv * cj_[i] - cjv * sj_[i];
            const double q2 = st * inv2p;
            accRe_[idx] += x1 * ct + 2.0 * q2;
            accIm_[idx] += x3s * q2;
          }
        }
      } else {
        for (int j = 1, idx = 0; j < s_; ++j)
          for (int i = 0; i < j; ++i, ++idx) {
            if (coincident_[idx]) continue;
            const cplx t = detail::p_term_generic(k2, zetas_[idx], ctx_);
            accRe_[idx] += t.real();
            accIm_[idx] += t.imag();
          }
      }
    }
    // Far-closed channels, exponentially truncated per pair.
    for (int n = N + 1;; ++n) {
      const double k2 = eps - lam * n;
      if (k2 > -detail::kGenericBand) continue;  // handled above (n = N+1 only)
      const double y = std::sqrt(-k2);
      if (2.0 * y * min_reach_ > 36.0) break;
      const double E = std::exp(-2.0 * y);
      const cplx g = ctx_.phase1 * E;
      const cplx invd1 = 1.0 / (1.0 - g);
      const cplx invd2 = 1.0 / (1.0 - std::conj(g));
      const cplx pc = std::conj(ctx_.phase1);
      for (int j = 1, idx = 0; j < s_; ++j)
        for (int i = 0; i < j; ++i, ++idx) {
          if (coincident_[idx]) continue;
          const double zeta = zetas_[idx];
          if (2.0 * y * std::min(zeta, 1.0 - zeta) > 36.0) continue;
          const double T1 = std::exp(-2.0 * y * zeta);
          const double T2 = std::exp(-2.0 * y * (1.0 - zeta));
          const cplx t = (-1.0 / y) * (T1 * invd1 + pc * T2 * invd2);
          accRe_[idx] += t.real();
          accIm_[idx] += t.imag();
        }
      if (n > 4000000) throw numeric_error("closed-channel loop did not truncate");
    }
    const int np = s_ * (s_ - 1) / 2;
    for (int idx = 0; idx < np; ++idx) {
      accRe_[idx] *= sqlam;
      accIm_[idx] *= sqlam;
    }
    const double diag = greens_diag_kernel(eps, p_);
    assemble(&diag, nullptr);
  }

  void build_box(double eps) {
    const double lam = p_.lambda;
    const double sqlam = std::sqrt(lam);
    const int N = static_cast<int>(std::floor(eps / lam));
    // accRe_ holds strict lower-triangle sums; diagonal sums go to diag_.
    diag_.assign(s_, 0.0);
    for (int n = 0; n <= N + 1; ++n) {
      const double k2 = eps - lam * n;
      if (k2 <= -detail::kGenericBand) break;
      detail::guard_box(k2);
      if (k2 >= detail::kGenericBand) {
        const double pch = std::sqrt(k2);
        const double coeff = -2.0 / (pch * std::sin(2.0 * pch));
        for (int j = 0; j < s_; ++j) {
          cj_[j] = std::sin(2.0 * pch * (1.0 - sc_.positions[j]));  // upper factor
          sj_[j] = std::sin(2.0 * pch * sc_.positions[j]);          // lower factor
        }
        for (int j = 1, idx = 0; j < s_; ++j)
          for (int i = 0; i < j; ++i, ++idx) accRe_[idx] += coeff * cj_[j] * sj_[i];
        for (int j = 0; j < s_; ++j) diag_[j] += coeff * cj_[j] * sj_[j];
      } else {
        for (int j = 1, idx = 0; j < s_; ++j)
          for (int i = 0; i < j; ++i, ++idx) {
            if (coincident_[idx]) continue;
            accRe_[idx] += detail::b_term_generic(k2, 1.0 - sc_.positions[j],
                                                  sc_.positions[i]);
          }
        for (int j = 0; j < s_; ++j)
          diag_[j] += detail::b_term_generic(k2, 1.0 - sc_.positions[j],
                                             sc_.positions[j]);
      }
    }
    for (int n = N + 1;; ++n) {
      const double k2 = eps - lam * n;
      if (k2 > -detail::kGenericBand) continue;
      const double y = std::sqrt(-k2);
      if (2.0 * y * min_reach_ > 36.0) break;
      for (int j = 1, idx = 0; j < s_; ++j)
        for (int i = 0; i < j; ++i, ++idx) {
          if (coincident_[idx]) continue;
          const double delta = zetas_[idx];
          if (2.0 * y * delta > 36.0) continue;
          accRe_[idx] += detail::b_term_far(y, 1.0 - sc_.positions[j],
                                            sc_.positions[i]);
        }
      if (n == N + 1) {
        for (int j = 0; j < s_; ++j)
          diag_[j] += detail::b_diag_first_far(y, sc_.positions[j]);
      } else {
        bool all_small = true;
        for (int j = 0; j < s_; ++j) {
          const double t = detail::b_diag_combo_far(y, sc_.positions[j]);
          diag_[j] += t;
          if (std::abs(t) > 1e-17) all_small = false;
        }
        if (all_small && 2.0 * y * min_reach_ > 36.0) break;
      }
      if (n - N > 4000000) throw numeric_error("box closed-channel loop did not truncate");
    }
    // The counterterm of the first closed channel pairs with the leading
    // zeta term regardless of which evaluation band that channel used.
    const double q = (N + 1) - eps / lam;
    const double zterm = hurwitz_zeta(0.5, q + 1.0, 1e-12);
    const int np = s_ * (s_ - 1) / 2;
    for (int idx = 0; idx < np; ++idx) accRe_[idx] *= sqlam;
    for (int j = 0; j < s_; ++j) diag_[j] = sqlam * diag_[j] - zterm;
    assemble(nullptr, &diag_);
  }

  // Accumulators arrive fully scaled (sqrt(lambda) applied); the diagonal is
  // either one shared kernel value (periodic) or per-scatterer (box).
  void assemble(const double* shared_diag, const std::vector<double>* per_diag) {
    auto diag_of = [&](int j) { return shared_diag ? *shared_diag : (*per_diag)[j]; };
    if (real_) {
      for (int j = 1, idx = 0; j < s_; ++j)
        for (int i = 0; i < j; ++i, ++idx) {
          const double re = coincident_[idx] ? diag_of(j) : accRe_[idx];
          mr_(j, i) = sqv_[j] * sqv_[i] * re;
          mr_(i, j) = mr_(j, i);
        }
      for (int j = 0; j < s_; ++j) mr_(j, j) = sc_.strengths[j] * diag_of(j) - 1.0;
    } else {
      for (int j = 1, idx = 0; j < s_; ++j)
        for (int i = 0; i < j; ++i, ++idx) {
          const cplx v = coincident_[idx]
                             ? cplx(diag_of(j), 0.0)
                             : cplx(wre_[idx], wim_[idx]) * cplx(accRe_[idx], accIm_[idx]);
          mc_(j, i) = sqv_[j] * sqv_[i] * v;
          mc_(i, j) = std::conj(mc_(j, i));
        }
      for (int j = 0; j < s_; ++j) mc_(j, j) = sc_.strengths[j] * diag_of(j) - 1.0;
    }
  }

  DetValue det_real() {
    lu_r_.compute(mr_);
    double logabs = 0.0;
    double sign = lu_r_.permutationP().determinant() > 0 ? 1.0 : -1.0;
    for (int i = 0; i < s_; ++i) {
      const double d = lu_r_.matrixLU()(i, i);
      if (d < 0.0) sign = -sign;
      logabs += std::log(std::abs(d) + 1e-300);
    }
    return {sign, logabs};
  }

  DetValue det_complex() {
    lu_c_.compute(mc_);
    double logabs = 0.0, phase = 0.0;
    for (int i = 0; i < s_; ++i) {
      const cplx d = lu_c_.matrixLU()(i, i);
      logabs += std::log(std::abs(d) + 1e-300);
      phase += std::arg(d);
    }
    const double perm = lu_c_.permutationP().determinant() > 0 ? 0.0 : kPi;
    const double c = std::cos(phase + perm);
    // The symmetrized matrix is Hermitian, so the determinant is real.
    return {c >= 0.0 ? 1.0 : -1.0, logabs};
  }

  WaveguideParams p_;
  ScattererSet sc_;
  detail::PeriodicCtx ctx_;
  int s_;
  bool real_ = false;
  double min_reach_ = 1.0;
  std::vector<double> sqv_, zetas_, wre_, wim_, cj_, sj_, accRe_, accIm_, diag_;
  std::vector<char> coincident_;
  Eigen::MatrixXcd mc_;
  Eigen::MatrixXd mr_;
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu_c_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_r_;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> saes_c_;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> saes_r_;
};

}  // namespace wgscat
