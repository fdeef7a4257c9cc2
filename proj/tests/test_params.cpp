#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "wgscat/params.hpp"

using namespace wgscat;

TEST_CASE("build_params validates and derives T-invariance", "[params]") {
  const auto p = build_params(default_lambda(), default_l0(), Boundary::Periodic);
  CHECK(p.lambda == Catch::Approx(100.33841906661672).epsilon(1e-12));
  CHECK(p.l0 == Catch::Approx(0.23168436111126578).epsilon(1e-12));
  CHECK_FALSE(p.t_invariant);
  CHECK(build_params(100.0, 0.0, Boundary::Periodic).t_invariant);
  CHECK(build_params(100.0, 0.0, Boundary::HardWallBox).t_invariant);
  CHECK_THROWS_AS(build_params(-1.0, 0.0, Boundary::Periodic), domain_error);
  CHECK_THROWS_AS(build_params(100.0, 0.2, Boundary::HardWallBox), domain_error);
}

TEST_CASE("single scatterer sits at the origin", "[params]") {
  for (auto m : {Model::NonSymmetric, Model::TInvariant}) {
    const auto sc = generate_scatterers(m, 1, 1e6, 7);
    REQUIRE(sc.positions.size() == 1);
    CHECK(sc.positions[0] == 0.0);
  }
}

TEST_CASE("symmetric model obeys the mirror identity", "[params]") {
  for (int s : {2, 3, 5, 8, 16, 31}) {
    const auto sc = generate_scatterers(Model::Symmetric, s, 1e6, 7);
    CHECK(mirror_symmetric(sc, 1e-12));
    for (int j = 1; j < s; ++j) CHECK(sc.positions[j] > sc.positions[j - 1]);
  }
  // s=3: z3 - z2 = z2 - z1
  const auto sc3 = generate_scatterers(Model::Symmetric, 3, 1e6, 7);
  CHECK(std::abs((sc3.positions[2] - sc3.positions[1]) -
                 (sc3.positions[1] - sc3.positions[0])) < 1e-12);
}

TEST_CASE("box positions interior and bit-identical regeneration", "[params]") {
  const auto a = generate_scatterers(Model::Box, 4, 1e6, 42);
  const auto b = generate_scatterers(Model::Box, 4, 1e6, 42);
  REQUIRE(a.positions.size() == 4);
  for (int j = 0; j < 4; ++j) {
    CHECK(a.positions[j] > 0.0);
    CHECK(a.positions[j] < 1.0);
    CHECK(a.positions[j] == b.positions[j]);  // bit-identical
    CHECK(a.shifts[j] == b.shifts[j]);
    CHECK(a.shifts[j] >= -0.25);
    CHECK(a.shifts[j] < 0.25);
  }
  const auto c = generate_scatterers(Model::Box, 4, 1e6, 43);
  CHECK(a.positions != c.positions);
}

TEST_CASE("T-invariant layout coincides with the non-symmetric one", "[params]") {
  const auto a = generate_scatterers(Model::NonSymmetric, 8, 1e6, 5);
  const auto b = generate_scatterers(Model::TInvariant, 8, 1e6, 5);
  CHECK(a.positions == b.positions);
}

TEST_CASE("non-symmetric rule z_j = (j-1+delta_j)/s", "[params]") {
  const int s = 6;
  const auto sc = generate_scatterers(Model::NonSymmetric, s, 1e6, 11);
  for (int j = 1; j < s; ++j)
    CHECK(sc.positions[j] == Catch::Approx((j + sc.shifts[j]) / s).margin(1e-15));
}

TEST_CASE("generator rejects bad inputs", "[params]") {
  CHECK_THROWS_AS(generate_scatterers(Model::Box, 0, 1e6, 1), domain_error);
  CHECK_THROWS_AS(generate_scatterers(Model::Box, 2, -1.0, 1), domain_error);
  CHECK_THROWS_AS(custom_scatterers(Model::NonSymmetric, {0.5, 0.2}, {1.0, 1.0}),
                  domain_error);
}

TEST_CASE("custom sets allow coincident positions for controls", "[params]") {
  const auto sc = custom_scatterers(Model::NonSymmetric, {0.3, 0.3}, {1e6, 1e6});
  CHECK(sc.s == 2);
}

TEST_CASE("integrable levels: closed forms at small energy", "[params]") {
  const auto p = build_params(100.0, 0.2317, Boundary::Periodic);
  const auto lv = integrable_levels(p, 100.0);
  REQUIRE(!lv.empty());
  // Contains (n=0, l=0) with eps = pi^2 l0^2 and nothing from n=1 below lambda.
  bool found = false;
  for (const auto& x : lv) {
    CHECK(x.n == 0);
    if (x.l == 0) {
      found = true;
      CHECK(x.eps == Catch::Approx(kPi * kPi * 0.2317 * 0.2317));
    }
  }
  CHECK(found);

  const auto pb = build_params(100.0, 0.0, Boundary::HardWallBox);
  const auto lb = integrable_levels(pb, 50.0);
  REQUIRE(!lb.empty());
  CHECK(lb.front().n == 0);
  CHECK(lb.front().l == 1);
  CHECK(lb.front().eps == Catch::Approx(kPi * kPi / 4.0));
}

TEST_CASE("level count matches brute-force enumeration", "[params]") {
  for (auto m : {Model::NonSymmetric, Model::Box}) {
    const auto p = params_for_model(m);
    for (double e : {97.0, 1003.0, 9870.5}) {
      const auto lv = integrable_levels(p, e);
      CHECK(level_count(p, e) == static_cast<long>(lv.size()));
      for (std::size_t i = 1; i < lv.size(); ++i) CHECK(lv[i].eps >= lv[i - 1].eps);
    }
  }
}

TEST_CASE("counting function grows as eps^{3/2}", "[params]") {
  const auto p = params_for_model(Model::NonSymmetric);
  // Log-log fit of N(eps) over eps in [1e3, 1e5].
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int k = 0;
  for (double e = 1e3; e <= 1.0001e5; e *= std::pow(10.0, 0.25)) {
    const double x = std::log(e), y = std::log(static_cast<double>(level_count(p, e)));
    sx += x; sy += y; sxx += x * x; sxy += x * y;
    ++k;
  }
  const double slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  CHECK(slope == Catch::Approx(1.5).margin(0.05));
}

TEST_CASE("T-invariant levels come in degenerate pairs", "[params]") {
  const auto p = build_params(100.0, 0.0, Boundary::Periodic);
  const auto lv = integrable_levels(p, 500.0);
  long paired = 0, zero = 0;
  for (const auto& x : lv) (x.l == 0 ? zero : paired)++;
  CHECK(paired % 2 == 0);
  for (const auto& x : lv)
    if (x.l != 0)
      CHECK(level_energy(p, x.n, -x.l) == Catch::Approx(x.eps).margin(0));
}

TEST_CASE("mean level spacing: synthetic window and counting oracle", "[params]") {
  const auto p = params_for_model(Model::NonSymmetric);
  // Window width over (count-1): for a window holding 101 levels of exact
  // spacing h this is h; emulate via the box-counting identity instead of
  // synthetic levels: [lo, hi] chosen so the formula is directly checkable.
  const double lo = 1e4, hi = 1.1e4;
  const double de = mean_level_spacing(p, lo, hi);
  const double oracle = 1.0 / smooth_density(p, 0.5 * (lo + hi));
  CHECK(de == Catch::Approx(oracle).epsilon(0.05));
  CHECK_THROWS_AS(mean_level_spacing(p, 1.0, 1.5), domain_error);

  // Spacing trend ~ eps^{-1/2}: fitted exponent within [-0.6, -0.4].
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int k = 0;
  for (double c = 1e3; c <= 1.1e5; c *= 10.0) {
    const double d = mean_level_spacing(p, c, c * 1.5);
    const double x = std::log(1.25 * c), y = std::log(d);
    sx += x; sy += y; sxx += x * x; sxy += x * y;
    ++k;
  }
  const double slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  CHECK(slope == Catch::Approx(-0.5).margin(0.1));
}

TEST_CASE("synthetic equally spaced window gives the spacing back", "[params]") {
  // 101 levels spacing h across [lo, lo+100h]: width/(count-1) = h.
  // Verified against the real lattice: pick a window and check the identity
  // with explicit enumeration.
  const auto p = params_for_model(Model::Box);
  const double lo = 5e3, hi = 6e3;
  const auto lv = integrable_levels(p, hi);
  long count = 0;
  for (const auto& x : lv) count += (x.eps > lo && x.eps <= hi) ? 1 : 0;
  REQUIRE(count >= 100);
  CHECK(mean_level_spacing(p, lo, hi) ==
        Catch::Approx((hi - lo) / static_cast<double>(count - 1)));
}
