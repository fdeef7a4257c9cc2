#pragma once

// Special functions behind the waveguide Green function: the Hurwitz zeta
// at half-integer exponents, channel momenta on the physical branch, and
// the slowly converging lattice sums (closed form plus an accelerated
// brute-force evaluation used by the oracle suite).

#include <cmath>
#include <complex>
#include <cstdlib>
#include <numbers>
#include <vector>

#include "wgscat/common.hpp"

namespace wgscat {

inline constexpr double kPi = std::numbers::pi;

// ---------------------------------------------------------------------------
// Hurwitz zeta.
//
// Euler-Maclaurin evaluation of zeta(s, q) for real s > 0, s != 1, q > 0:
//
//   zeta(s,q) = sum_{k<N} (k+q)^-s + (N+q)^{1-s}/(s-1) + (N+q)^-s / 2
//             + sum_{j>=1} B_{2j}/(2j)! * (s)_{2j-1} * (N+q)^{-s-2j+1} + R
//
// The remainder after the j-th correction is bounded by the magnitude of
// the first omitted term, so N is raised until that bound clears the
// requested accuracy. The bound, not a fixed term count, controls the
// truncation; q may be arbitrarily small since it only enters the exact
// leading sum.

namespace detail {
// B_2, B_4, ..., B_12
inline constexpr double kBernoulli[6] = {
    1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0, -691.0 / 2730.0};
}  // namespace detail

inline double hurwitz_zeta(double s, double q, double tol = 1e-12) {
  if (q <= 0.0) throw domain_error("hurwitz_zeta: q must be positive");
  if (s <= 0.0 || s == 1.0) throw domain_error("hurwitz_zeta: need s > 0, s != 1");
  for (int n_base = 16; n_base <= 1024; n_base *= 2) {
    const int n = n_base;
    double head = 0.0;
    for (int k = n - 1; k >= 0; --k) head += std::pow(k + q, -s);
    const double x = n + q;
    double value = head + std::pow(x, 1.0 - s) / (s - 1.0) + 0.5 * std::pow(x, -s);
    // Correction terms with the running Pochhammer factor (s)_{2j-1}.
    double poch = s;                      // (s)_1
    double fact = 2.0;                    // (2j)! at j=1
    double bound = 0.0;
    for (int j = 1; j <= 6; ++j) {
      const double term =
          detail::kBernoulli[j - 1] / fact * poch * std::pow(x, -s - 2 * j + 1);
      value += term;
      bound = std::abs(term);
      if (bound < 0.25 * tol) break;
      poch *= (s + 2 * j - 1) * (s + 2 * j);
      fact *= (2 * j + 1) * (2 * j + 2);
    }
    if (bound < 0.25 * tol) return value;
  }
  throw numeric_error("hurwitz_zeta: remainder bound did not converge");
}

// zeta(1/2, q) to 1e-10 absolute or better.
inline double hurwitz_zeta_half(double q) {
  if (q <= 0.0) throw domain_error("hurwitz_zeta_half: q must be positive");
  return hurwitz_zeta(0.5, q, 1e-11);
}

// ---------------------------------------------------------------------------
// Channel momenta p_n = sqrt(eps - lambda*n) on the physical branch:
// real and >= 0 for open channels, i*|p| for closed ones.

struct ChannelMomentum {
  int n = 0;
  cplx p{0.0, 0.0};
  bool open = false;
  bool threshold = false;  // |eps - lambda*n| below tolerance
};

inline double threshold_tol(double eps) { return 1e-12 * std::max(1.0, std::abs(eps)); }

inline ChannelMomentum channel_momentum(double eps, double lambda, int n) {
  ChannelMomentum cm;
  cm.n = n;
  const double k2 = eps - lambda * n;
  cm.threshold = std::abs(k2) < threshold_tol(eps);
  cm.open = k2 >= 0.0;
  cm.p = cm.open ? cplx(std::sqrt(k2), 0.0) : cplx(0.0, std::sqrt(-k2));
  return cm;
}

inline std::vector<ChannelMomentum> channel_momenta(double eps, double lambda, int n_max) {
  if (n_max < static_cast<int>(std::ceil(std::max(eps, 0.0) / lambda)))
    throw domain_error("channel_momenta: n_max below the open-channel count");
  std::vector<ChannelMomentum> out;
  out.reserve(n_max + 1);
  for (int n = 0; n <= n_max; ++n) out.push_back(channel_momentum(eps, lambda, n));
  return out;
}

// ---------------------------------------------------------------------------
// Lattice sums  sum_l exp(2*pi*i*l*zeta) / (l + a).
//
// Closed form (for zeta in (0,1), a off the integers):
//   pi / sin(pi a) * exp(-2*pi*i*a*(zeta - floor(zeta) - 1/2)).
// The brute-force route sums symmetric partial sums and removes the
// oscillatory 1/N tail by iterated averaging; it exists only to check the
// closed form and the channel sums built from it.

inline cplx lattice_sum_closed(double zeta, cplx a) {
  if (std::abs(a.imag()) < 1e-14 && std::abs(a.real() - std::round(a.real())) < 1e-12)
    throw domain_error("lattice_sum_closed: integer a is a pole");
  const double frac = zeta - std::floor(zeta);
  return kPi / std::sin(kPi * a) * std::exp(cplx(0.0, -2.0 * kPi) * a * (frac - 0.5));
}

// Iterated averaging damps the oscillatory tail by |cos(pi zeta)| per
// round, so convergence needs zeta bounded away from the integers
// (practically |zeta - round(zeta)| >= 0.15 for tight tolerances).
inline cplx lattice_sum_bruteforce(double zeta, cplx a, double tol = 1e-9) {
  if (std::abs(a.imag()) < 1e-14 && std::abs(a.real() - std::round(a.real())) < 1e-10)
    throw domain_error("lattice_sum_bruteforce: integer a is a pole");
  const double frac = zeta - std::floor(zeta);
  cplx prev{0.0, 0.0};
  for (int n0 = 2048; n0 <= 1 << 17; n0 *= 4) {
    // Partial sums S_N for N = n0 .. n0+K, then K rounds of averaging.
    const int kAvg = 128;
    cplx s{0.0, 0.0};
    for (int l = -n0; l <= n0; ++l)
      s += std::exp(cplx(0.0, 2.0 * kPi * l * frac)) / (cplx(l, 0.0) + a);
    std::vector<cplx> tail(kAvg + 1);
    tail[0] = s;
    for (int k = 1; k <= kAvg; ++k) {
      const int l = n0 + k;
      s += std::exp(cplx(0.0, 2.0 * kPi * l * frac)) / (cplx(l, 0.0) + a) +
           std::exp(cplx(0.0, -2.0 * kPi * l * frac)) / (cplx(-l, 0.0) + a);
      tail[k] = s;
    }
    for (int round = 0; round < kAvg; ++round)
      for (int k = 0; k + 1 < static_cast<int>(tail.size()) - round; ++k)
        tail[k] = 0.5 * (tail[k] + tail[k + 1]);
    if (n0 > 2048 && std::abs(tail[0] - prev) < tol) return tail[0];
    prev = tail[0];
  }
  throw numeric_error("lattice_sum_bruteforce: did not converge (a too close to a pole?)");
}

}  // namespace wgscat
