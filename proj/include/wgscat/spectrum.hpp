#pragma once

// Finds all eigenenergies in a range as roots of det M(eps) = 0. The pole
// lattice (the integrable levels) is known in closed form, so the scan
// walks inter-pole intervals directly: endpoints are clamped off the poles,
// sign changes are bracketed on a per-interval grid and refined by Brent.
// Window-level root counts are verified against the pole multiplicities
// (min(mult, s) branches wrap per pole) with grid refinement on deficit.

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wgscat/common.hpp"
#include "wgscat/greens.hpp"
#include "wgscat/params.hpp"
#include "wgscat/threading.hpp"

namespace wgscat {

// A cache key collision with a different manifest is never recovered from.
struct cache_collision_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ScanOptions {
  double grid_factor = 0.1;     // initial points per interval = ceil(1/grid_factor)
  double root_rel_tol = 1e-10;  // bracket width < tol * max(1, eps)
  double clamp_rel = 1e-10;     // endpoint offset from each pole
  int max_refine = 4;
  int threads = 1;
  long window_intervals = 1000;  // count-check granularity
};

inline nlohmann::ordered_json to_json(const ScanOptions& o) {
  return {{"grid_factor", o.grid_factor},
          {"root_rel_tol", o.root_rel_tol},
          {"clamp_rel", o.clamp_rel},
          {"max_refine", o.max_refine}};
}

struct SpectralLine {
  long alpha = 0;  // 1-based rank within the scanned range
  double eps = 0.0;
  double residual = 0.0;  // final bracket width / max(1, eps)
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
};

struct Spectrum {
  WaveguideParams params;
  ScattererSet scatterers;
  double eps_lo = 0.0;
  double eps_hi = 0.0;
  ScanOptions options;
  std::vector<SpectralLine> lines;
  long expected_roots = 0;
  std::vector<std::string> warnings;
  bool from_cache = false;
  std::string cache_key;
};

namespace detail {

inline std::atomic<long>& scan_counter() {
  static std::atomic<long> n{0};
  return n;
}

struct PoleInterval {
  double lo = 0.0, hi = 0.0;
  int expected = 0;  // min(multiplicity of the pole at lo, s); 0 for the leading gap
};

// Distinct pole values with multiplicities, then intervals covering
// [eps_lo, eps_hi].
inline std::vector<PoleInterval> pole_intervals(const WaveguideParams& p, int s,
                                                double eps_lo, double eps_hi) {
  const auto levels = integrable_levels(p, eps_hi + 2.0);
  std::vector<std::pair<double, int>> poles;  // (eps, multiplicity)
  for (const auto& lv : levels) {
    if (!poles.empty() && lv.eps - poles.back().first < 1e-9 * std::max(1.0, lv.eps))
      poles.back().second++;
    else
      poles.emplace_back(lv.eps, 1);
  }
  std::vector<PoleInterval> out;
  double prev = std::max(0.0, eps_lo);
  int prev_mult = 0;
  for (const auto& [pe, mult] : poles) {
    if (pe <= prev) {
      // A pole at the range start contributes its wraps; one strictly
      // below it may have placed roots below eps_lo, so claim nothing.
      prev_mult = (pe >= eps_lo) ? mult : 0;
      prev = std::max(prev, pe);
      continue;
    }
    if (prev >= eps_hi) break;
    out.push_back({prev, std::min(pe, eps_hi), std::min(prev_mult, s)});
    prev = pe;
    prev_mult = mult;
    if (pe >= eps_hi) break;
  }
  if (prev < eps_hi) out.push_back({prev, eps_hi, std::min(prev_mult, s)});
  return out;
}

// Brent root refinement on the scaled determinant.
template <typename F>
double brent(F&& f, double a, double b, double fa, double fb, double xtol) {
  double c = a, fc = fa;
  double d = b - a, e = d;
  for (int iter = 0; iter < 200; ++iter) {
    if (std::abs(fc) < std::abs(fb)) {
      a = b; b = c; c = a;
      fa = fb; fb = fc; fc = fa;
    }
    const double tol1 = 0.5 * xtol + 2.0 * std::numeric_limits<double>::epsilon() * std::abs(b);
    const double xm = 0.5 * (c - b);
    if (std::abs(xm) <= tol1 || fb == 0.0) return b;
    if (std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
      double p, q, r;
      const double sfrac = fb / fa;
      if (a == c) {
        p = 2.0 * xm * sfrac;
        q = 1.0 - sfrac;
      } else {
        q = fa / fc;
        r = fb / fc;
        p = sfrac * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0));
        q = (q - 1.0) * (r - 1.0) * (sfrac - 1.0);
      }
      if (p > 0.0) q = -q;
      p = std::abs(p);
      if (2.0 * p < std::min(3.0 * xm * q - std::abs(tol1 * q), std::abs(e * q))) {
        e = d;
        d = p / q;
      } else {
        d = xm;
        e = d;
      }
    } else {
      d = xm;
      e = d;
    }
    a = b;
    fa = fb;
    b += std::abs(d) > tol1 ? d : (xm > 0 ? tol1 : -tol1);
    fb = f(b);
    if ((fb > 0.0) == (fc > 0.0)) {
      c = a;
      fc = fa;
      d = b - a;
      e = d;
    }
  }
  return b;
}

// Roots inside one inter-pole interval, found as branch crossings of the
// Hermitian eigenvalues. Every branch decreases strictly between poles, so
// the k-th sorted eigenvalue is monotone (Weyl) and each crossing is a
// guaranteed bracket; tangential pairs that a determinant sign scan misses
// are two adjacent branches here and cannot hide.
inline void scan_interval(SecularEvaluator& ev, const PoleInterval& iv,
                          const ScanOptions& opt, std::vector<SpectralLine>& out) {
  double lo = iv.lo + opt.clamp_rel * std::max(1.0, std::abs(iv.lo));
  double hi = iv.hi - opt.clamp_rel * std::max(1.0, std::abs(iv.hi));
  if (!(hi > lo)) return;
  const double step = hi - lo;
  // On a pole hit the sample is nudged inward deterministically.
  auto eig_safe = [&](double& x) {
    for (int k = 0;; ++k) {
      try {
        return ev.eigenvalues(x);
      } catch (const pole_error&) {
        if (k >= 4) throw;
        x += (x - lo < 0.5 * step ? 1.0 : -1.0) * 1e-3 * step;
      }
    }
  };
  const Eigen::VectorXd elo = eig_safe(lo);
  const Eigen::VectorXd ehi = eig_safe(hi);
  const int s = static_cast<int>(elo.size());
  int neg_lo = 0, neg_hi = 0;
  for (int k = 0; k < s; ++k) {
    neg_lo += elo[k] < 0.0;
    neg_hi += ehi[k] < 0.0;
  }
  for (int k = neg_lo; k < neg_hi; ++k) {
    if (!(elo[k] > 0.0 && ehi[k] < 0.0)) continue;
    auto f = [&](double x) { return ev.eigenvalues(x)[k]; };
    const double xtol = opt.root_rel_tol * std::max(1.0, lo);
    const double root = brent(f, lo, hi, elo[k], ehi[k], xtol);
    SpectralLine line;
    line.eps = root;
    line.residual = xtol / std::max(1.0, root);
    line.bracket_lo = lo;
    line.bracket_hi = hi;
    out.push_back(line);
  }
}

}  // namespace detail

inline long scan_count() { return detail::scan_counter().load(); }

inline Spectrum scan_roots(const WaveguideParams& params, const ScattererSet& sc,
                           double eps_lo, double eps_hi, const ScanOptions& opt = {}) {
  if (!(eps_hi > eps_lo) || eps_lo < 0.0)
    throw domain_error("scan_roots: need 0 <= eps_lo < eps_hi");
  if (!(opt.grid_factor > 0.0 && opt.grid_factor <= 0.5))
    throw domain_error("scan_roots: grid_factor in (0, 0.5]");
  bool any_strength = false;
  for (double v : sc.strengths) any_strength |= v > 0.0;
  if (!any_strength)
    throw domain_error(
        "scan_roots: all strengths are zero (integrable passthrough; no secular roots)");
  detail::scan_counter().fetch_add(1);

  Spectrum spec;
  spec.params = params;
  spec.scatterers = sc;
  spec.eps_lo = eps_lo;
  spec.eps_hi = eps_hi;
  spec.options = opt;

  const auto intervals = detail::pole_intervals(params, sc.s, eps_lo, eps_hi);
  const int n_iv = static_cast<int>(intervals.size());

  // Scan over fixed chunks (results identical for any worker count).
  const int chunk_size = 256;
  const int n_chunks = (n_iv + chunk_size - 1) / chunk_size;
  std::vector<std::vector<std::vector<SpectralLine>>> found(n_chunks);
  parallel_chunks(n_chunks, opt.threads, [&](int c) {
    SecularEvaluator ev(params, sc);
    const int a = c * chunk_size, b = std::min(n_iv, a + chunk_size);
    found[c].resize(b - a);
    for (int i = a; i < b; ++i)
      detail::scan_interval(ev, intervals[i], opt, found[c][i - a]);
  });
  auto roots_of = [&](int i) -> std::vector<SpectralLine>& {
    return found[i / chunk_size][i % chunk_size];
  };

  // Count verification: over every prefix of windows the found count can
  // trail the wrap count by at most the rank s (branches still positive at
  // the window edge cross later); any larger gap means a scan defect.
  const long win = std::max<long>(1, opt.window_intervals);
  long cum_expected = 0, cum_found = 0;
  for (int w0 = 0; w0 < n_iv; w0 += win) {
    const int w1 = static_cast<int>(std::min<long>(n_iv, w0 + win));
    for (int i = w0; i < w1; ++i) {
      cum_expected += intervals[i].expected;
      cum_found += static_cast<long>(roots_of(i).size());
    }
    if (std::abs(cum_found - cum_expected) > sc.s) {
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "count mismatch below eps = %.6g: found %ld, wrap count %ld",
                    intervals[w1 - 1].hi, cum_found, cum_expected);
      throw numeric_error(buf);
    }
  }
  if (cum_found != cum_expected) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%ld branch(es) cross above eps_hi = %.6g",
                  cum_expected - cum_found, eps_hi);
    spec.warnings.emplace_back(buf);
  }

  for (int i = 0; i < n_iv; ++i)
    for (auto& line : roots_of(i)) spec.lines.push_back(line);
  std::sort(spec.lines.begin(), spec.lines.end(),
            [](const SpectralLine& a, const SpectralLine& b) { return a.eps < b.eps; });
  for (std::size_t i = 0; i < spec.lines.size(); ++i)
    spec.lines[i].alpha = static_cast<long>(i) + 1;
  for (const auto& iv : intervals) spec.expected_roots += iv.expected;
  return spec;
}

// Smallest eps whose level count reaches `alpha`, plus a small margin, so a
// scan of [0, eps] yields at least alpha roots.
inline double eps_for_alpha(const WaveguideParams& p, long alpha) {
  double lo = 1.0, hi = 2.0;
  while (level_count(p, hi) < alpha) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e12) throw domain_error("eps_for_alpha: alpha out of range");
  }
  for (int i = 0; i < 200 && hi - lo > 1e-9 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (level_count(p, mid) < alpha ? lo : hi) = mid;
  }
  return hi + 3.0 * local_mean_spacing(p, hi);
}

// ---------------------------------------------------------------------------
// Cache: <key>.json manifest + <key>.bin payload, atomic writes, integrity
// checked on load. The key hashes everything the result depends on.

namespace detail {

inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* b = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline nlohmann::ordered_json spectrum_config_json(const Spectrum& s) {
  nlohmann::ordered_json j;
  j["cache_epoch"] = kCacheEpoch;
  j["params"] = to_json(s.params);
  j["scatterers"] = to_json(s.scatterers);
  j["eps_lo"] = s.eps_lo;
  j["eps_hi"] = s.eps_hi;
  j["scan"] = to_json(s.options);
  return j;
}

inline std::string spectrum_key(const nlohmann::ordered_json& config) {
  const std::string dump = config.dump();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(dump.data(), dump.size())));
  return buf;
}

}  // namespace detail

inline void cache_put(const std::string& dir, Spectrum& spec) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto config = detail::spectrum_config_json(spec);
  const std::string key = detail::spectrum_key(config);
  spec.cache_key = key;

  std::vector<double> payload;
  payload.reserve(spec.lines.size() * 4);
  for (const auto& l : spec.lines) {
    payload.push_back(l.eps);
    payload.push_back(l.residual);
    payload.push_back(l.bracket_lo);
    payload.push_back(l.bracket_hi);
  }
  const std::size_t bytes = payload.size() * sizeof(double);

  nlohmann::ordered_json man;
  man["config"] = config;
  man["count"] = spec.lines.size();
  man["expected_roots"] = spec.expected_roots;
  man["warnings"] = spec.warnings;
  man["payload_bytes"] = bytes;
  man["payload_fnv"] = detail::fnv1a(payload.data(), bytes);
  man["version"] = kVersion;

  const fs::path base = fs::path(dir) / key;
  const std::string tag = "." + std::to_string(::getpid()) + ".tmp";
  {
    std::ofstream out(base.string() + ".bin" + tag, std::ios::binary);
    out.write(reinterpret_cast<const char*>(payload.data()), bytes);
  }
  {
    std::ofstream out(base.string() + ".json" + tag);
    out << man.dump(1) << "\n";
  }
  fs::rename(base.string() + ".bin" + tag, base.string() + ".bin");
  fs::rename(base.string() + ".json" + tag, base.string() + ".json");
}

// Loads a cached spectrum matching the request exactly; returns nullopt on
// miss. Integrity failures raise numeric_error (callers recompute); a key
// collision with a different manifest is refused loudly.
inline std::optional<Spectrum> cache_get(const std::string& dir,
                                         const WaveguideParams& params,
                                         const ScattererSet& sc, double eps_lo,
                                         double eps_hi, const ScanOptions& opt) {
  namespace fs = std::filesystem;
  Spectrum probe;
  probe.params = params;
  probe.scatterers = sc;
  probe.eps_lo = eps_lo;
  probe.eps_hi = eps_hi;
  probe.options = opt;
  const auto config = detail::spectrum_config_json(probe);
  const std::string key = detail::spectrum_key(config);
  const fs::path base = fs::path(dir) / key;
  if (!fs::exists(base.string() + ".json") || !fs::exists(base.string() + ".bin"))
    return std::nullopt;

  nlohmann::ordered_json man;
  {
    std::ifstream in(base.string() + ".json");
    in >> man;
  }
  if (man["config"].dump() != config.dump())
    throw cache_collision_error("spectrum cache: key collision with mismatched manifest: " +
                                key);

  std::ifstream in(base.string() + ".bin", std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  if (bytes.size() != man["payload_bytes"].get<std::size_t>() ||
      detail::fnv1a(bytes.data(), bytes.size()) != man["payload_fnv"].get<std::uint64_t>())
    throw numeric_error("spectrum cache: integrity check failed for " + key);

  probe.cache_key = key;
  probe.from_cache = true;
  probe.warnings = man["warnings"].get<std::vector<std::string>>();
  probe.expected_roots = man["expected_roots"].get<long>();
  const auto* d = reinterpret_cast<const double*>(bytes.data());
  const std::size_t n = man["count"].get<std::size_t>();
  probe.lines.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    probe.lines[i].alpha = static_cast<long>(i) + 1;
    probe.lines[i].eps = d[4 * i];
    probe.lines[i].residual = d[4 * i + 1];
    probe.lines[i].bracket_lo = d[4 * i + 2];
    probe.lines[i].bracket_hi = d[4 * i + 3];
  }
  return probe;
}

// Cache-through scan.
inline Spectrum ensure_spectrum(const WaveguideParams& params, const ScattererSet& sc,
                                double eps_lo, double eps_hi, const ScanOptions& opt,
                                const std::string& cache_dir) {
  if (!cache_dir.empty()) {
    try {
      if (auto hit = cache_get(cache_dir, params, sc, eps_lo, eps_hi, opt)) return *hit;
    } catch (const numeric_error&) {
      // fall through to recompute (corrupt or truncated payload)
    }
  }
  Spectrum spec = scan_roots(params, sc, eps_lo, eps_hi, opt);
  if (!cache_dir.empty()) cache_put(cache_dir, spec);
  return spec;
}

}  // namespace wgscat
