#pragma once

// Dimensionless model parameters, scatterer layouts for the four models,
// and the integrable level lattice. All energies are eps = m L^2 (E -
// hbar*omega)/(2 hbar^2); strengths are v = V/V0 with V0 the natural
// zero-range interaction scale, so no unit handling exists at runtime.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wgscat/common.hpp"
#include "wgscat/specfun.hpp"

namespace wgscat {

enum class Boundary { Periodic, HardWallBox };
enum class Model { NonSymmetric, Symmetric, TInvariant, Box };

inline const char* model_name(Model m) {
  switch (m) {
    case Model::NonSymmetric: return "nonsym";
    case Model::Symmetric: return "sym";
    case Model::TInvariant: return "tinv";
    case Model::Box: return "box";
  }
  return "?";
}

inline Model model_from_name(const std::string& s) {
  if (s == "nonsym") return Model::NonSymmetric;
  if (s == "sym") return Model::Symmetric;
  if (s == "tinv") return Model::TInvariant;
  if (s == "box") return Model::Box;
  throw domain_error("unknown model '" + s + "' (expected nonsym|sym|tinv|box)");
}

inline Boundary model_boundary(Model m) {
  return m == Model::Box ? Boundary::HardWallBox : Boundary::Periodic;
}

// Paper-scale defaults, both transcendental on purpose so that no level
// degeneracies appear except the exact l <-> -l pairs at l0 = 0.
inline double default_lambda() { return std::pow(kPi, 3) * (1.0 + std::sqrt(5.0)); }
inline double default_l0() { return 0.25 - std::exp(-4.0); }

struct WaveguideParams {
  double lambda = 0.0;  // m L^2 omega / hbar
  double l0 = 0.0;      // L A / (2 pi); 0 for the T-invariant and box models
  Boundary boundary = Boundary::Periodic;
  bool t_invariant = false;  // derived
};

inline WaveguideParams build_params(double lambda, double l0, Boundary boundary) {
  if (!(lambda > 0.0)) throw domain_error("build_params: lambda must be positive");
  if (boundary == Boundary::HardWallBox && l0 != 0.0)
    throw domain_error("build_params: hard-wall box requires l0 = 0");
  WaveguideParams p;
  p.lambda = lambda;
  p.l0 = l0;
  p.boundary = boundary;
  p.t_invariant = (boundary == Boundary::HardWallBox) || (l0 == 0.0);
  return p;
}

inline WaveguideParams params_for_model(Model m, double lambda = default_lambda()) {
  const bool needs_l0 = (m == Model::NonSymmetric || m == Model::Symmetric);
  return build_params(lambda, needs_l0 ? default_l0() : 0.0, model_boundary(m));
}

// ---------------------------------------------------------------------------
// Scatterer sets.

struct ScattererSet {
  Model model = Model::NonSymmetric;
  int s = 0;
  std::vector<double> positions;  // z_j / L, ascending
  std::vector<double> strengths;  // v_j = V_j / V0, >= 0
  std::uint64_t seed = 0;
  std::vector<double> shifts;  // realized delta_j in [-0.25, 0.25)
};

namespace detail {

// Portable uniform draws: raw mt19937_64 bits mapped to [0,1). The standard
// distributions are not bit-reproducible across library implementations,
// the raw engine is.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// One shift vector per (s, seed). The draw is shared by all models so that
// the T-invariant layout coincides with the non-symmetric one.
inline std::vector<double> draw_shifts(int s, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(s)));
  std::vector<double> d(s);
  for (int j = 0; j < s; ++j) d[j] = 0.5 * uniform01(rng) - 0.25;
  return d;
}

inline void check_strictly_increasing(const std::vector<double>& z) {
  for (std::size_t i = 1; i < z.size(); ++i)
    if (!(z[i] > z[i - 1]))
      throw numeric_error(
          "scatterer positions not strictly increasing; change the seed explicitly");
}

}  // namespace detail

inline ScattererSet generate_scatterers(Model model, int s, double v, std::uint64_t seed) {
  if (s < 1) throw domain_error("generate_scatterers: s must be >= 1");
  if (v < 0.0) throw domain_error("generate_scatterers: strength must be >= 0");
  ScattererSet set;
  set.model = model;
  set.s = s;
  set.seed = seed;
  set.shifts = detail::draw_shifts(s, seed);
  set.strengths.assign(s, v);
  set.positions.resize(s);
  switch (model) {
    case Model::NonSymmetric:
    case Model::TInvariant:
      set.positions[0] = 0.0;
      for (int j = 1; j < s; ++j) set.positions[j] = (j + set.shifts[j]) / s;
      break;
    case Model::Symmetric: {
      // z_1 = 0, the top position drawn as in the non-symmetric model, the
      // lower half drawn likewise and mirrored: z_{s-j+1} = z_s - z_j.
      set.positions[0] = 0.0;
      if (s > 1) set.positions[s - 1] = (s - 1 + set.shifts[s - 1]) / s;
      const double zs = set.positions[s - 1];
      for (int j = 1; j < s / 2; ++j) {  // 0-based index j -> scatterer j+1
        set.positions[j] = (j + set.shifts[j]) / s;
        set.positions[s - 1 - j] = zs - set.positions[j];
      }
      if (s % 2 == 1 && s > 1) set.positions[s / 2] = 0.5 * zs;
      break;
    }
    case Model::Box:
      for (int j = 0; j < s; ++j) set.positions[j] = (j + 1 + set.shifts[j]) / (s + 1);
      break;
  }
  detail::check_strictly_increasing(set.positions);
  return set;
}

// Direct construction for control experiments (coincident scatterers are
// allowed here and only here; generated layouts never produce them).
inline ScattererSet custom_scatterers(Model model, std::vector<double> positions,
                                      std::vector<double> strengths) {
  if (positions.empty() || positions.size() != strengths.size())
    throw domain_error("custom_scatterers: need matching nonempty positions/strengths");
  for (std::size_t i = 1; i < positions.size(); ++i)
    if (positions[i] < positions[i - 1])
      throw domain_error("custom_scatterers: positions must be sorted");
  for (double v : strengths)
    if (v < 0.0) throw domain_error("custom_scatterers: strengths must be >= 0");
  ScattererSet set;
  set.model = model;
  set.s = static_cast<int>(positions.size());
  set.positions = std::move(positions);
  set.strengths = std::move(strengths);
  return set;
}

inline bool mirror_symmetric(const ScattererSet& set, double tol = 1e-12) {
  const int s = set.s;
  const double zs = set.positions[s - 1];
  for (int j = 0; j < s; ++j) {
    if (std::abs(set.positions[s - 1 - j] - (zs - set.positions[j])) > tol) return false;
    if (set.strengths[j] != set.strengths[0]) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Integrable levels. Periodic: eps = lambda*n + pi^2 (l - l0)^2, l in Z.
// Box: eps = lambda*n + pi^2 l^2 / 4, l >= 1.

struct IntegrableLevel {
  int n = 0;
  long l = 0;
  double eps = 0.0;
};

inline double level_energy(const WaveguideParams& p, int n, long l) {
  if (p.boundary == Boundary::Periodic) {
    const double d = l - p.l0;
    return p.lambda * n + kPi * kPi * d * d;
  }
  return p.lambda * n + 0.25 * kPi * kPi * static_cast<double>(l) * static_cast<double>(l);
}

inline std::vector<IntegrableLevel> integrable_levels(const WaveguideParams& p,
                                                      double eps_max) {
  if (!(eps_max > 0.0)) throw domain_error("integrable_levels: eps_max must be positive");
  std::vector<IntegrableLevel> out;
  for (int n = 0; p.lambda * n <= eps_max; ++n) {
    const double room = eps_max - p.lambda * n;
    if (p.boundary == Boundary::Periodic) {
      const double r = std::sqrt(room) / kPi;
      const long lo = static_cast<long>(std::ceil(p.l0 - r));
      const long hi = static_cast<long>(std::floor(p.l0 + r));
      for (long l = lo; l <= hi; ++l) out.push_back({n, l, level_energy(p, n, l)});
    } else {
      const long hi = static_cast<long>(std::floor(2.0 * std::sqrt(room) / kPi));
      for (long l = 1; l <= hi; ++l) out.push_back({n, l, level_energy(p, n, l)});
    }
  }
  std::sort(out.begin(), out.end(),
            [](const IntegrableLevel& a, const IntegrableLevel& b) { return a.eps < b.eps; });
  return out;
}

// Counting function N(eps) without materializing levels.
inline long level_count(const WaveguideParams& p, double eps) {
  if (eps <= 0.0) return 0;
  long count = 0;
  for (int n = 0; p.lambda * n <= eps; ++n) {
    const double room = eps - p.lambda * n;
    if (p.boundary == Boundary::Periodic) {
      const double r = std::sqrt(room) / kPi;
      count += static_cast<long>(std::floor(p.l0 + r)) -
               static_cast<long>(std::ceil(p.l0 - r)) + 1;
    } else {
      count += static_cast<long>(std::floor(2.0 * std::sqrt(room) / kPi));
    }
  }
  return count;
}

// Smooth density of states dN/deps; both boundaries give the same
// continuum form sum_n 1/(pi sqrt(eps - lambda n)).
inline double smooth_density(const WaveguideParams& p, double eps) {
  double rho = 0.0;
  for (int n = 0; p.lambda * n < eps; ++n) rho += 1.0 / (kPi * std::sqrt(eps - p.lambda * n));
  return rho;
}

inline double local_mean_spacing(const WaveguideParams& p, double eps) {
  const double rho = smooth_density(p, eps);
  if (rho <= 0.0) throw domain_error("local_mean_spacing: eps below the spectrum");
  return 1.0 / rho;
}

// Mean spacing of the levels inside [lo, hi], defined as window width over
// (count - 1).
inline double mean_level_spacing(const WaveguideParams& p, double lo, double hi,
                                 long min_levels = 100) {
  if (!(hi > lo)) throw domain_error("mean_level_spacing: empty window");
  const long count = level_count(p, hi) - level_count(p, lo);
  if (count < min_levels)
    throw domain_error("mean_level_spacing: window holds fewer than the required levels");
  return (hi - lo) / static_cast<double>(count - 1);
}

// ---------------------------------------------------------------------------
// Manifest serialization.

inline nlohmann::ordered_json to_json(const WaveguideParams& p) {
  return {{"lambda", p.lambda},
          {"l0", p.l0},
          {"boundary", p.boundary == Boundary::Periodic ? "periodic" : "box"},
          {"t_invariant", p.t_invariant}};
}

inline nlohmann::ordered_json to_json(const ScattererSet& s) {
  return {{"model", model_name(s.model)}, {"s", s.s},       {"seed", s.seed},
          {"positions", s.positions},     {"strengths", s.strengths},
          {"shifts", s.shifts}};
}

}  // namespace wgscat
