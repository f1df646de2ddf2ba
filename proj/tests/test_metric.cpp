#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "heterofront/medium.hpp"
#include "heterofront/metric.hpp"

using namespace hf;

namespace {

constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kSqrt5 = 2.23606797749979;
// Frozen oracle: planar-profile cost of the quartic well, int_{-1}^{1} sqrt(2W).
constexpr double kQuarticSigma = 0.9428090415820634;
// Frozen oracle: exact second difference 2(sqrt(101) - 10) of the Euclidean
// stable norm at m = 10, probe (1, 0) against class (0, 1).
constexpr double kEuclidWidth10 = 0.0997512422417805;

Medium smooth_bumps() {
  auto bump = [](Vec2 q, double rho) {
    double s2 = norm2(q) / (rho * rho);
    return s2 < 1 ? (1 - s2) * (1 - s2) * (1 - s2) : 0.0;
  };
  return analytic_medium(
      [bump](Vec2 x, int) {
        Vec2 f{x.x - std::floor(x.x), x.y - std::floor(x.y)};
        MediumEval e;
        e.a = 1.2 + 0.9 * bump(f - Vec2{0.3, 0.4}, 0.28) +
              0.6 * bump(f - Vec2{0.8, 0.85}, 0.22);
        return e;
      },
      2.8, "smooth-bumps");
}

Medium inverted_of(const Medium& m) {
  // same arithmetic as the gradient weight kind: 1.0 / a
  const Medium* src = &m;
  return analytic_medium(
      [src](Vec2 x, int) {
        MediumEval e;
        e.a = 1.0 / src->value(x);
        return e;
      },
      1.0, "inverted");
}

}  // namespace

TEST_CASE("eikonal distance: constant media") {
  Medium one = constant_medium(1.0);
  GridSpec gs;
  gs.origin = {-0.375, -0.375};  // node-aligned with the source
  gs.h = 1.0 / 128;
  gs.nx = gs.ny = static_cast<int>(1.75 / gs.h) + 1;
  DistanceField df = eikonal_distance(one, WeightKind::potential, {{0, 0}}, gs);

  CHECK(df.grid.interp({1, 1}) == doctest::Approx(kSqrt2).epsilon(0.01));
  CHECK(df.grid.interp({1, 0}) == doctest::Approx(1.0).epsilon(0.01));
  CHECK(df.grid.interp({0, 0}) == doctest::Approx(0.0).epsilon(1e-9));

  double vmin = df.grid.min_value();
  CHECK(vmin >= 0.0);

  // metric Lipschitz bound on adjacent nodes
  double worst = 0;
  for (int j = 0; j < df.grid.ny; ++j)
    for (int i = 0; i + 1 < df.grid.nx; ++i)
      worst = std::max(worst,
                       std::abs(df.grid.at(i + 1, j) - df.grid.at(i, j)));
  CHECK(worst <= 1.0 * gs.h * 1.05);

  Medium c15 = constant_medium(1.5);
  double d = point_distance(c15, WeightKind::potential, {0, 0}, {3, 4},
                            1.0 / 96);
  CHECK(d == doctest::Approx(7.5).epsilon(0.01));
  CHECK(point_distance(c15, WeightKind::potential, {0.3, 0.7}, {0.3, 0.7}) ==
        doctest::Approx(0.0).epsilon(1e-12));

  CHECK_THROWS_WITH_AS(
      eikonal_distance(one, WeightKind::potential, {}, gs), doctest::Contains("empty-source"),
      Error);
}

TEST_CASE("eikonal distance: laminar line source pays the crossing integral") {
  Medium lam = laminar_medium(2.0, 1.0, 1, 0);
  GridSpec gs;
  gs.origin = {-0.3, -0.3};
  gs.h = 1.0 / 96;
  gs.nx = static_cast<int>(1.6 / gs.h) + 1;
  gs.ny = static_cast<int>(1.6 / gs.h) + 1;
  std::vector<Vec2> line;
  for (double y = -0.3; y <= 1.3; y += gs.h) line.push_back({0, y});
  DistanceField df = eikonal_distance(lam, WeightKind::potential, line, gs);
  // crossing cost per unit width is the stripe mean, independent of height
  CHECK(df.grid.interp({1.0, 0.35}) == doctest::Approx(2.0).epsilon(0.015));
  CHECK(df.grid.interp({1.0, 0.65}) == doctest::Approx(2.0).epsilon(0.015));
}

TEST_CASE("signed distance: disk and half-plane") {
  Medium one = constant_medium(1.0);
  GridSpec gs;
  gs.origin = {-2.8, -2.8};
  gs.h = 1.0 / 48;
  gs.nx = gs.ny = static_cast<int>(5.6 / gs.h) + 1;
  auto disk = [](Vec2 p) { return norm(p) <= 2.0; };
  DistanceField df = signed_distance(disk, one, gs);
  CHECK(df.grid.interp({1, 0}) == doctest::Approx(1.0).epsilon(0.02));
  CHECK(df.grid.interp({2.4, 0.0}) == doctest::Approx(-0.4).epsilon(0.06));
  CHECK(df.grid.interp({0, 0}) == doctest::Approx(2.0).epsilon(0.02));

  Medium c15 = constant_medium(1.5);
  GridSpec gh;
  gh.origin = {-1.2, -1.2};
  gh.h = 1.0 / 64;
  gh.nx = gh.ny = static_cast<int>(2.4 / gh.h) + 1;
  auto half = [](Vec2 p) { return p.x <= 0.0; };
  DistanceField dh = signed_distance(half, c15, gh);
  CHECK(dh.grid.interp({0.5, 0.1}) == doctest::Approx(-0.75).epsilon(0.02));
  CHECK(dh.grid.interp({-0.5, -0.3}) == doctest::Approx(0.75).epsilon(0.02));

  auto everything = [](Vec2) { return true; };
  CHECK_THROWS_WITH_AS(signed_distance(everything, one, gh),
                       doctest::Contains("degenerate-set"), Error);
}

TEST_CASE("point distance: metric axioms and lattice translation") {
  Medium lam = laminar_medium(2.0, 0.5, 1, 1, 0.3);
  double h = 1.0 / 48;
  std::mt19937 rng(902);
  std::uniform_real_distribution<double> U(0.0, 1.2);
  for (int t = 0; t < 8; ++t) {
    Vec2 x{U(rng), U(rng)}, y{U(rng), U(rng)}, z{U(rng), U(rng)};
    double dxy = point_distance(lam, WeightKind::potential, x, y, h);
    double dyx = point_distance(lam, WeightKind::potential, y, x, h);
    double dyz = point_distance(lam, WeightKind::potential, y, z, h);
    double dxz = point_distance(lam, WeightKind::potential, x, z, h);
    CHECK(std::abs(dxy - dyx) <= 2 * h);
    CHECK(dxz <= dxy + dyz + 2 * h);
  }
  Vec2 x{0.2, 0.7}, y{0.9, 0.1};
  double d0 = point_distance(lam, WeightKind::potential, x, y, h);
  double d1 = point_distance(lam, WeightKind::potential, x + Vec2{1, 0},
                             y + Vec2{1, 0}, h);
  double d2 = point_distance(lam, WeightKind::potential, x + Vec2{-2, 3},
                             y + Vec2{-2, 3}, h);
  CHECK(std::abs(d1 - d0) <= 2 * h);
  CHECK(std::abs(d2 - d0) <= 2 * h);
}

TEST_CASE("dijkstra stencils: exact lattice paths") {
  Medium one = constant_medium(1.0);
  double h = 1.0 / 128;
  CHECK(dijkstra_oracle(one, WeightKind::potential, 8, {0, 0}, {1, 1}, h) ==
        doctest::Approx(kSqrt2).epsilon(1e-9));
  CHECK(dijkstra_oracle(one, WeightKind::potential, 8, {0, 0}, {2, 1}, h) ==
        doctest::Approx(1 + kSqrt2).epsilon(1e-9));
  CHECK(dijkstra_oracle(one, WeightKind::potential, 16, {0, 0}, {2, 1}, h) ==
        doctest::Approx(kSqrt5).epsilon(1e-9));
  CHECK(dijkstra_oracle(one, WeightKind::potential, 32, {0, 0}, {2, 1}, h) ==
        doctest::Approx(kSqrt5).epsilon(1e-9));

  Medium c15 = constant_medium(1.5);
  CHECK(dijkstra_oracle(c15, WeightKind::potential, 16, {0, 0}, {2, 1}, h) ==
        doctest::Approx(1.5 * kSqrt5).epsilon(1e-9));

  CHECK_THROWS_WITH_AS(
      dijkstra_oracle(one, WeightKind::potential, 12, {0, 0}, {1, 0}, h),
      doctest::Contains("degenerate-set"), Error);
}

TEST_CASE("fast marching matches the graph oracle within two percent") {
  double h = 1.0 / 96;
  std::mt19937 rng(517);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Medium media[2] = {laminar_medium(2.0, 0.9, 1, 0, 0.4), smooth_bumps()};
  for (const Medium& m : media) {
    for (int t = 0; t < 4; ++t) {
      Vec2 x{U(rng), U(rng)};
      Vec2 y = x + Vec2{0.8 + 0.6 * U(rng), 0.7 * (U(rng) - 0.5)};
      double fmm = point_distance(m, WeightKind::potential, x, y, h);
      double dij = dijkstra_oracle(m, WeightKind::potential, 32, x, y, h);
      CHECK(std::abs(fmm - dij) / dij <= 0.02);
    }
  }
}

TEST_CASE("surface tension: constant and laminar oracles") {
  SigmaOptions fast;
  fast.h = 1.0 / 128;
  fast.offsets = 4;
  Medium c = constant_medium(1.7);
  SurfaceTensionEstimate e = surface_tension(c, {1, 0}, 8, fast);
  CHECK(e.sigma == doctest::Approx(1.7).epsilon(0.01));
  CHECK(e.error_bar <= 0.02);
  CHECK(e.window == doctest::Approx(8.0));
  REQUIRE(e.witness.size() > 10);
  CHECK(dist(e.witness.front(), e.witness.back()) ==
        doctest::Approx(8.0).epsilon(0.02));

  Medium lam = laminar_medium(2.0, 1.0, 1, 0);
  SigmaOptions so;
  so.h = 1.0 / 64;
  so.offsets = 32;
  SurfaceTensionEstimate s1 = surface_tension(lam, {1, 0}, 8, so);
  CHECK(s1.sigma >= 1.0);
  CHECK(s1.sigma <= 1.03);
  // the witness geodesic has to hug the stripe minimum x = 1/2 (mod 1)
  int inside = 0, total = 0;
  for (size_t k = s1.witness.size() / 4; k < 3 * s1.witness.size() / 4; ++k) {
    double fx = s1.witness[k].x - std::floor(s1.witness[k].x);
    ++total;
    if (std::abs(fx - 0.5) < 0.12) ++inside;
  }
  REQUIRE(total > 0);
  CHECK(inside == total);

  SigmaOptions so2;
  so2.h = 1.0 / 64;
  so2.offsets = 4;
  SurfaceTensionEstimate s2 = surface_tension(lam, {0, 1}, 8, so2);
  CHECK(s2.sigma == doctest::Approx(2.0).epsilon(0.02));
  SurfaceTensionEstimate s2m = surface_tension(lam, {0, -1}, 8, so2);
  CHECK(std::abs(s2.sigma - s2m.sigma) <= 0.015);

  // convexity of the one-homogeneous extension across the diagonal
  SigmaOptions sod;
  sod.h = 1.0 / 64;
  sod.offsets = 24;
  SurfaceTensionEstimate sd = surface_tension(lam, {1, 1}, 8, sod);
  CHECK(kSqrt2 * sd.sigma <= s1.sigma + s2.sigma + 0.02);

  CHECK_THROWS_WITH_AS(surface_tension(lam, {1, 0}, 4, so),
                       doctest::Contains("degenerate-set"), Error);
}

TEST_CASE("surface tension: pinning medium stays within the weight range") {
  Medium pin = default_pinning_medium();
  SigmaOptions so;
  so.h = 1.0 / 64;
  so.offsets = 16;
  SurfaceTensionEstimate e = surface_tension(pin, {1, 0}, 8, so);
  CHECK(e.sigma >= 1.0);
  CHECK(e.sigma <= 1.0 + 0.45);
  // the straight column between holes costs 1 per period
  CHECK(e.sigma <= 1.02);
}

TEST_CASE("corner width: smooth media are flat") {
  SigmaOptions so;
  so.h = 1.0 / 128;
  so.offsets = 4;
  Medium one = constant_medium(1.0);
  CornerWidthReport r = corner_width(one, {1, 0}, 0.1, so);
  CHECK(r.m == 10);
  CHECK(r.qx == 0);
  CHECK(std::abs(r.qy) == 1);
  // machinery check: the un-extrapolated second difference matches the
  // curvature of the Euclidean norm along the probe
  CHECK(r.width_m == doctest::Approx(kEuclidWidth10).epsilon(0.1));
  CHECK(r.width <= 1e-3);

  Medium lam = laminar_medium(2.0, 1.0, 1, 0);
  SigmaOptions sl;
  sl.h = 1.0 / 128;
  sl.offsets = 8;
  CornerWidthReport rl = corner_width(lam, {0, 1}, 0.1, sl);
  CHECK(rl.width <= 1.5e-3);
}

TEST_CASE("corner width: perturbed level curve opens a corner") {
  Medium base = ensure_unique_max(constant_medium(1.0), 0.5);
  Medium pert = perturb_corner(base, 0.8, 0.4, 0.03);
  SigmaOptions so;
  so.h = 1.0 / 64;
  so.offsets = 8;
  CornerWidthReport r = corner_width(pert, {1, 0}, 0.1, so);
  CHECK(r.width > 5e-3);
}

TEST_CASE("gap detection: foliation, stripes, node plateau") {
  SigmaOptions so;
  so.h = 1.0 / 64;

  Medium one = constant_medium(1.0);
  GapReport g1 = gap_detect(one, {1, 0}, 32, so);
  CHECK(g1.kept == 32);
  CHECK(g1.min_cost == doctest::Approx(1.0).epsilon(0.01));
  CHECK(g1.uncovered.empty());

  Medium lam = laminar_medium(2.0, 1.0, 1, 0);
  GapReport g2 = gap_detect(lam, {1, 0}, 32, so);
  CHECK(!g2.uncovered.empty());
  CHECK(g2.uncovered_fraction >= 0.5);
  bool near_min = false, near_max_stripe = false;
  for (const CellCoord& c : g2.uncovered) {
    double cx = (c.i + 0.5) / g2.raster;
    double to_min = std::abs(cx - 0.5);
    if (to_min < 0.01) near_min = true;
    double to_max = std::min(cx, 1.0 - cx);
    if (to_max < 0.1) near_max_stripe = true;
  }
  CHECK(!near_min);          // stripe minimum is covered by minimizers
  CHECK(near_max_stripe);    // expensive stripe is a gap

  Medium pin = default_pinning_medium();
  GapReport g3 = gap_detect(pin, {1, 0}, 12, so);
  CHECK(!g3.uncovered.empty());
  bool near_node = false;
  for (const CellCoord& c : g3.uncovered) {
    double cx = (c.i + 0.5) / g3.raster, cy = (c.j + 0.5) / g3.raster;
    double dx = std::min(cx, 1 - cx), dy = std::min(cy, 1 - cy);
    if (std::hypot(dx, dy) < 0.2) near_node = true;
  }
  CHECK(near_node);
}

TEST_CASE("diffuse-interface tension: quartic profile oracles") {
  AcTensionOptions opt;
  opt.points_per_delta = 8;
  Medium th1 = constant_medium(1.0);
  SurfaceTensionEstimate e1 = ac_surface_tension(th1, 0.15, {1, 0}, 3.0, opt);
  CHECK(e1.sigma == doctest::Approx(kQuarticSigma).epsilon(0.02));

  SurfaceTensionEstimate e2 = ac_surface_tension(th1, 0.15, {0, 1}, 3.0, opt);
  CHECK(std::abs(e1.sigma - e2.sigma) <= 5e-3);

  Medium th4 = analytic_medium(
      [](Vec2, int) {
        MediumEval e;
        e.a = 4.0;
        return e;
      },
      4.0, "theta-four");
  SurfaceTensionEstimate e4 = ac_surface_tension(th4, 0.15, {1, 0}, 3.0, opt);
  CHECK(e4.sigma == doctest::Approx(2 * kQuarticSigma).epsilon(0.02));

  CHECK_THROWS_WITH_AS(ac_surface_tension(th1, 0.3, {1, 0}, 3.0, opt),
                       doctest::Contains("degenerate-set"), Error);
  AcTensionOptions bad = opt;
  bad.max_sweeps = 3;
  CHECK_THROWS_WITH_AS(ac_surface_tension(th1, 0.15, {1, 0}, 3.0, bad),
                       doctest::Contains("non-convergence"), Error);
}

TEST_CASE("eikonal residual holds away from source and cut locus") {
  Medium lam = laminar_medium(2.0, 0.9, 1, 0, 0.2);
  GridSpec gs;
  gs.origin = {-0.7, -0.7};
  gs.h = 1.0 / 96;
  gs.nx = gs.ny = static_cast<int>(2.4 / gs.h) + 1;
  Vec2 src{0.5, 0.5};
  DistanceField df = eikonal_distance(lam, WeightKind::potential, {src}, gs);
  const Grid2D& g = df.grid;
  double lambda = lam.lambda();

  int included = 0, bad = 0;
  std::vector<double> rels;
  for (int j = 1; j < g.ny - 1; ++j)
    for (int i = 1; i < g.nx - 1; ++i) {
      Vec2 p = g.node(i, j);
      if (dist(p, src) < 12 * gs.h) continue;
      double u0 = g.at(i, j);
      double jump = 0;
      for (int d = -1; d <= 1; d += 2) {
        jump = std::max(jump, std::abs(g.at(i + d, j) - u0));
        jump = std::max(jump, std::abs(g.at(i, j + d) - u0));
      }
      if (jump > 3 * lambda * gs.h) continue;  // cut-locus exclusion
      double gx = std::max({u0 - g.at(i - 1, j), u0 - g.at(i + 1, j), 0.0});
      double gy = std::max({u0 - g.at(i, j - 1), u0 - g.at(i, j + 1), 0.0});
      double grad = std::hypot(gx, gy) / gs.h;
      double rel = std::abs(grad - lam.value(p)) / lam.value(p);
      ++included;
      rels.push_back(rel);
      if (rel > 0.08) ++bad;
    }
  REQUIRE(included > 1000);
  CHECK(static_cast<double>(bad) / included <= 0.02);
  std::nth_element(rels.begin(), rels.begin() + rels.size() / 2, rels.end());
  CHECK(rels[rels.size() / 2] <= 0.03);
}

TEST_CASE("weight kinds: inversion and Euclidean contracts") {
  Medium lam = laminar_medium(2.0, 0.9, 1, 0, 0.2);
  Medium inv = inverted_of(lam);
  double h = 1.0 / 64;
  Vec2 x{0.1, 0.2}, y{1.2, 0.9};
  double dg = point_distance(lam, WeightKind::gradient, x, y, h);
  double dp = point_distance(inv, WeightKind::potential, x, y, h);
  CHECK(dg == doctest::Approx(dp).epsilon(1e-12));

  double de = point_distance(lam, WeightKind::weight, x, y, h);
  CHECK(de == doctest::Approx(dist(x, y)).epsilon(0.01));

  CHECK(weight_min_bound(lam, WeightKind::gradient) ==
        doctest::Approx(1.0 / lam.lambda()));
  CHECK(weight_max_bound(lam, WeightKind::potential) ==
        doctest::Approx(lam.lambda()));
  CHECK(weight_value(lam, WeightKind::weight, x) == 1.0);
}
