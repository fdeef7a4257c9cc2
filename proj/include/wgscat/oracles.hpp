#pragma once

// Independent numerical routes used to check the closed forms before any
// physics run: brute-force resolvent sums over the (n,l) basis, an
// Abel-Plana integral for the Hurwitz zeta, an accelerated alternating
// series for zeta(1/2), and first-order perturbation shifts. Everything
// here deliberately avoids the evaluation paths in greens.hpp.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "wgscat/common.hpp"
#include "wgscat/greens.hpp"
#include "wgscat/params.hpp"
#include "wgscat/specfun.hpp"

namespace wgscat::oracle {

// zeta(1/2) from the alternating series eta(1/2) = (1 - sqrt(2)) zeta(1/2),
// accelerated with the Cohen--Rodriguez Villegas--Zagier scheme.
inline double zeta_half_alternating() {
  const int n = 40;
  double d = std::pow(3.0 + std::sqrt(8.0), n);
  d = 0.5 * (d + 1.0 / d);
  double b = -1.0, c = -d, s = 0.0;
  for (int k = 0; k < n; ++k) {
    c = b - c;
    s += c / std::sqrt(static_cast<double>(k + 1));
    b = (k + n) * (k - n) * b / ((k + 0.5) * (k + 1));
  }
  const double eta = s / d;
  return eta / (1.0 - std::sqrt(2.0));
}

// Abel-Plana: zeta(s,q) = q^-s/2 + q^{1-s}/(s-1)
//   + 2 Integral_0^inf sin(s atan(t/q)) / ((q^2+t^2)^{s/2} (e^{2 pi t}-1)) dt.
inline double hurwitz_zeta_abel_plana(double s, double q) {
  auto f = [&](double t) {
    if (t == 0.0) return s / (2.0 * kPi * std::pow(q, s + 1.0));
    return std::sin(s * std::atan2(t, q)) /
           (std::pow(q * q + t * t, 0.5 * s) * std::expm1(2.0 * kPi * t));
  };
  // The integrand decays like e^{-2 pi t} and is finite at 0.
  const double a = 0.0, b = 12.0;
  const int n = 96000;  // even
  const double h = (b - a) / n;
  double acc = f(a) + f(b);
  for (int i = 1; i < n; ++i) acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  const double integral = acc * h / 3.0;
  return 0.5 * std::pow(q, -s) + std::pow(q, 1.0 - s) / (s - 1.0) + 2.0 * integral;
}

// Periodic channel sum over l by partial fractions into two lattice sums,
// both evaluated by the accelerated brute force (never the closed form):
//   sum_l e^{2 pi i l zeta} / (eps_ax - pi^2 (l - l0)^2)
//     = -1/(2 pi^2 pt) [ L(zeta, -l0 - pt) - L(zeta, -l0 + pt) ],
// pt = sqrt(eps_ax)/pi on the upper branch.
inline cplx channel_sum_bruteforce(double zeta, double eps_ax, double l0,
                                   double tol = 1e-10) {
  const cplx pt = eps_ax >= 0.0 ? cplx(std::sqrt(eps_ax) / kPi, 0.0)
                                : cplx(0.0, std::sqrt(-eps_ax) / kPi);
  const cplx la = lattice_sum_bruteforce(zeta, cplx(-l0, 0.0) - pt, tol);
  const cplx lb = lattice_sum_bruteforce(zeta, cplx(-l0, 0.0) + pt, tol);
  return -(la - lb) / (2.0 * kPi * kPi * pt);
}

// Brute-force S(z, eps) = sqrt(lambda) * sum_{n,l} e^{2 pi i l z}/(eps - eps_nl).
inline cplx greens_axis_bruteforce(double z, double eps, const WaveguideParams& p,
                                   double tol = 1e-9) {
  cplx sum{0.0, 0.0};
  const double zmin = std::min(z, 1.0 - z);
  for (int n = 0;; ++n) {
    const double eps_ax = eps - p.lambda * n;
    sum += channel_sum_bruteforce(z, eps_ax, p.l0, tol * 0.03);
    if (eps_ax < 0.0 && 2.0 * std::sqrt(-eps_ax) * zmin > 36.0) break;
    if (n > 100000) throw numeric_error("greens_axis_bruteforce: no truncation");
  }
  return std::sqrt(p.lambda) * sum;
}

// Brute-force regularized diagonal: per-channel symmetric l sums with an
// integral tail correction, the closed-channel counterterm, and the zeta
// subtraction evaluated by Euler-Maclaurin (validated independently).
inline double greens_diag_bruteforce(double eps, const WaveguideParams& p) {
  const double lam = p.lambda;
  const int N = static_cast<int>(std::floor(eps / lam));
  auto lsum = [&](double eps_ax) {
    // sum_l 1/(eps_ax - pi^2 (l - l0)^2) by symmetric sums; tail from the
    // analytic integral of the 1/(l-l0)^2 remainder.
    const int L = 40000;
    double s = 0.0;
    for (int l = -L; l <= L; ++l) {
      const double d = l - p.l0;
      s += 1.0 / (eps_ax - kPi * kPi * d * d);
    }
    // Integral tail: 2/(pi^2 (L+1/2)) to leading order, next correction is
    // O(L^-3); also the eps_ax shift at O(L^-3).
    s += -2.0 / (kPi * kPi) * (1.0 / (L + 0.5 - p.l0) + 1.0 / (L + 0.5 + p.l0)) * 0.5 -
         0.0;
    return s;
  };
  double sum = 0.0;
  for (int n = 0; n <= N + 1; ++n) sum += lsum(eps - lam * n);
  for (int n = N + 2;; ++n) {
    const double y = std::sqrt(lam * n - eps);
    const double t = lsum(eps - lam * n) + 1.0 / y;  // counterterm
    sum += t;
    if (std::abs(t) < 1e-13 && n > N + 6) break;
    if (n - N > 4000) break;
  }
  const double q = (N + 1) - eps / lam;
  return std::sqrt(lam) * sum - hurwitz_zeta(0.5, q + 1.0, 1e-12);
}

// Box channel brute force: sum_{l>=1} 2 sin(pi l zj) sin(pi l zk) /
// (eps_ax - pi^2 l^2/4), with oscillatory tails removed by averaging.
inline double box_channel_bruteforce(double zj, double zk, double eps_ax) {
  auto partial = [&](int upto) {
    double s = 0.0;
    for (int l = 1; l <= upto; ++l)
      s += 2.0 * std::sin(kPi * l * zj) * std::sin(kPi * l * zk) /
           (eps_ax - 0.25 * kPi * kPi * l * l);
    return s;
  };
  const int n0 = 20000, kAvg = 24;
  std::vector<double> seq(kAvg + 1);
  for (int k = 0; k <= kAvg; ++k) seq[k] = partial(n0 + k);
  for (int round = 0; round < kAvg; ++round)
    for (int k = 0; k + 1 < static_cast<int>(seq.size()) - round; ++k)
      seq[k] = 0.5 * (seq[k] + seq[k + 1]);
  return seq[0];
}

inline double box_kernel_bruteforce(double z_hi, double z_lo, double eps,
                                    const WaveguideParams& p) {
  double sum = 0.0;
  const double reach = std::min({z_hi - z_lo > 0 ? z_hi - z_lo : 1.0, z_lo, 1.0 - z_hi});
  for (int n = 0;; ++n) {
    const double eps_ax = eps - p.lambda * n;
    sum += box_channel_bruteforce(z_hi, z_lo, eps_ax);
    if (eps_ax < 0.0 && 2.0 * std::sqrt(-eps_ax) * reach > 36.0) break;
    if (n > 4000) break;
  }
  return std::sqrt(p.lambda) * sum;
}

// First-order shifts for weak scatterers: eps ~ eps_nl + sum_j v_j |<nl|F_j>|^2
// with |<nl|F_j>|^2 the residue of the diagonal kernel at the level.
inline double first_order_shift(const IntegrableLevel& lev, const ScattererSet& sc,
                                const WaveguideParams& p) {
  double shift = 0.0;
  for (int j = 0; j < sc.s; ++j) {
    double w2;
    if (p.boundary == Boundary::Periodic)
      w2 = std::sqrt(p.lambda);
    else
      w2 = 2.0 * std::sqrt(p.lambda) * std::pow(std::sin(kPi * lev.l * sc.positions[j]), 2);
    shift += sc.strengths[j] * w2;
  }
  return shift;
}

}  // namespace wgscat::oracle
