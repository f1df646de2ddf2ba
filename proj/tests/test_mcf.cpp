#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "heterofront/errors.hpp"
#include "heterofront/mcf.hpp"
#include "heterofront/medium.hpp"

using namespace hf;

namespace {

constexpr double kTau = 6.283185307179586;

Grid2D signed_circle(int n, double h, Vec2 origin, Vec2 center, double r) {
  Grid2D g(n, n, h, origin);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      Vec2 p = g.node(i, j);
      g.at(i, j) = r - std::hypot(p.x - center.x, p.y - center.y);
    }
  return g;
}

double mean_front_radius(const TrajectoryFrame& frame) {
  double acc = 0;
  int cnt = 0;
  for (const auto& f : frame.fronts)
    for (const auto& p : f.pts) {
      acc += std::hypot(p.x, p.y);
      ++cnt;
    }
  REQUIRE(cnt > 0);
  return acc / cnt;
}

// mean-radius error of the shrinking circle r0 = 5 at t = 8 (exact radius 3)
double circle_law_error(double h) {
  Medium m = constant_medium(1.0);
  int n = 2 * static_cast<int>(std::lround(5.6 / h)) + 1;
  Grid2D u0 = signed_circle(n, h, {-5.6, -5.6}, {0, 0}, 5.0);
  McfParams prm;
  prm.band_halfwidth = 24;
  prm.reinit_motion = 0.75;
  FrontTrajectory tr = mcf_evolve(
      make_level_set_state(std::move(u0), m, 1.0, 0.0, false, false, prm), m,
      8.0, 4.0);
  REQUIRE(!tr.extinct);
  REQUIRE(tr.frames.back().t == doctest::Approx(8.0).epsilon(1e-9));
  return mean_front_radius(tr.frames.back()) - 3.0;
}

}  // namespace

TEST_CASE("stable step bound and oversized step rejection") {
  Medium m = constant_medium(2.0);
  Grid2D u0 = signed_circle(41, 0.1, {-2, -2}, {0, 0}, 1.0);
  LevelSetState s = make_level_set_state(std::move(u0), m, 1.0, 0.5, false,
                                         false);
  // parabolic bound h^2/(8 a) = 0.01/16, advective bound h/(4 F) = 0.05
  CHECK(cfl_limit(s) == doctest::Approx(0.01 / 16.0).epsilon(1e-12));

  LevelSetState s2 = make_level_set_state(
      signed_circle(41, 0.1, {-2, -2}, {0, 0}, 1.0), m, 0.25, 0.5, false,
      false);
  // forcing acts at 1/eps, so the advective bound picks up a factor eps
  CHECK(cfl_limit(s2) ==
        doctest::Approx(std::min(0.01 / 16.0, 0.1 * 0.25 / 2.0))
            .epsilon(1e-12));

  CHECK_THROWS_WITH_AS(mcf_step(s, m, 2 * cfl_limit(s)), doctest::Contains(
                           "cfl-violation"), Error);
  CHECK_THROWS_AS(mcf_step(s, m, 0.0), Error);
}

TEST_CASE("one step reproduces the curvature velocity") {
  Medium m = constant_medium(1.7);
  const double h = 0.01;
  const int n = 301;
  Grid2D u0 = signed_circle(n, h, {-1.5, -1.5}, {0, 0}, 1.2);
  LevelSetState s = make_level_set_state(u0, m, 1.0, 0.0, false, false);
  double dt = 0.9 * cfl_limit(s);
  mcf_step(s, m, dt);

  // on a signed-distance circle the operator equals -a / |x| pointwise
  int checked = 0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      if (std::abs(u0.at(i, j)) > 2 * h) continue;
      Vec2 p = u0.node(i, j);
      double d = std::hypot(p.x, p.y);
      double rate = (s.u.at(i, j) - u0.at(i, j)) / dt;
      CHECK(rate == doctest::Approx(-1.7 / d).epsilon(0.02));
      ++checked;
    }
  CHECK(checked > 500);

  // constants are discrete equilibria and the step commutes with shifts
  Grid2D flat(21, 21, 0.1, {0, 0}, 0.5);
  LevelSetState sf = make_level_set_state(std::move(flat), m, 1.0, 0.0, false,
                                          false);
  CHECK(mcf_step(sf, m, 1e-4) == 0.0);

  LevelSetState sa = make_level_set_state(u0, m, 1.0, 0.0, false, false);
  Grid2D shifted = u0;
  for (double& v : shifted.data) v += 10.0;
  LevelSetState sb = make_level_set_state(std::move(shifted), m, 1.0, 0.0,
                                          false, false);
  mcf_step(sa, m, dt);
  mcf_step(sb, m, dt);
  double worst = 0;
  for (size_t c = 0; c < sa.u.data.size(); ++c)
    worst = std::max(worst,
                     std::abs(sb.u.data[c] - 10.0 - sa.u.data[c]));
  CHECK(worst <= 1e-12);
}

TEST_CASE("ordered data stays ordered") {
  Medium m = laminar_medium(2.0, 0.9, 1, 0);
  const int n = 32;
  const double h = 1.0 / n;
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> uni(0, 1);
  double worst = 0;
  for (int pair = 0; pair < 20; ++pair) {
    Grid2D u0(n, n, h, {0, 0}), v0(n, n, h, {0, 0});
    double ax = 0.3 * uni(rng), ay = 0.3 * uni(rng);
    double px = uni(rng), py = uni(rng);
    double bx = 0.2 * uni(rng), by = 0.2 * uni(rng);
    double qx = uni(rng), qy = uni(rng);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        Vec2 q = u0.node(i, j);
        double f = ax * std::sin(kTau * (q.x + px)) +
                   ay * std::cos(kTau * (q.y + py));
        double g = bx * std::sin(kTau * (q.x + qx)) +
                   by * std::cos(kTau * (q.y + qy));
        u0.at(i, j) = f;
        v0.at(i, j) = f + 0.05 + 0.2 * (g + 0.4) * (g + 0.4);
      }
    LevelSetState su = make_level_set_state(std::move(u0), m, 1.0, 0.3, true,
                                            true);
    LevelSetState sv = make_level_set_state(std::move(v0), m, 1.0, 0.3, true,
                                            true);
    double dt = 0.8 * cfl_limit(su);
    for (int step = 0; step < 100; ++step) {
      mcf_step(su, m, dt);
      mcf_step(sv, m, dt);
    }
    for (size_t c = 0; c < su.u.data.size(); ++c)
      worst = std::max(worst, su.u.data[c] - sv.u.data[c]);
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("step commutes with lattice translations") {
  Medium m = default_pinning_medium();
  const int n = 32;
  const double h = 1.0 / n;
  Grid2D u0(n, n, h, {0, 0});
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      Vec2 q = u0.node(i, j);
      u0.at(i, j) = 0.4 * std::sin(kTau * q.x) * std::cos(kTau * q.y) +
                    0.1 * std::sin(kTau * (q.x + 2 * q.y));
    }

  // quarter-period index shift paired with the matching origin shift lands
  // every node on the same medium point, so steps agree bit for bit
  const int k = 8;
  Grid2D v0(n, n, h, {k * h, 0});
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) v0.at(i, j) = u0.at((i + k) % n, j);

  LevelSetState sa = make_level_set_state(std::move(u0), m, 0.5, 0.8, true,
                                          true);
  LevelSetState sb = make_level_set_state(std::move(v0), m, 0.5, 0.8, true,
                                          true);
  double dt = 0.9 * cfl_limit(sa);
  for (int step = 0; step < 25; ++step) {
    mcf_step(sa, m, dt);
    mcf_step(sb, m, dt);
  }
  double worst = 0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      worst = std::max(worst, std::abs(sb.u.at(i, j) -
                                       sa.u.at((i + k) % n, j)));
  CHECK(worst <= 1e-14);
}

TEST_CASE("front extraction and front distances") {
  // circle: one closed curve with the right length, vertices on the circle
  Grid2D g = signed_circle(151, 0.02, {-1.5, -1.5}, {0, 0}, 1.0);
  std::vector<FrontCurve> fronts = extract_zero_contour(g);
  REQUIRE(fronts.size() == 1);
  CHECK(fronts[0].closed);
  double len = 0, worst = 0;
  const auto& pts = fronts[0].pts;
  REQUIRE(pts.size() > 100);
  for (size_t k = 0; k < pts.size(); ++k) {
    const Vec2& a = pts[k];
    const Vec2& b = pts[(k + 1) % pts.size()];
    len += std::hypot(b.x - a.x, b.y - a.y);
    worst = std::max(worst, std::abs(std::hypot(a.x, a.y) - 1.0));
  }
  CHECK(len == doctest::Approx(kTau).epsilon(0.01));
  CHECK(worst <= 1e-3);

  // five disjoint bumps give five closed loops
  Grid2D g5(201, 201, 0.02, {0, 0});
  Vec2 centers[5] = {{1, 1}, {3, 1}, {1, 3}, {3, 3}, {2, 2}};
  for (int j = 0; j < 201; ++j)
    for (int i = 0; i < 201; ++i) {
      Vec2 p = g5.node(i, j);
      double best = -1e9;
      for (const Vec2& c : centers)
        best = std::max(best,
                        0.35 - std::hypot(p.x - c.x, p.y - c.y));
      g5.at(i, j) = best;
    }
  CHECK(extract_zero_contour(g5).size() == 5);

  // a graph crossing the window is one open chain
  Grid2D go(101, 101, 0.01, {0, 0});
  for (int j = 0; j < 101; ++j)
    for (int i = 0; i < 101; ++i) {
      Vec2 p = go.node(i, j);
      go.at(i, j) = p.y - 0.5 - 0.2 * std::sin(kTau * p.x);
    }
  std::vector<FrontCurve> open = extract_zero_contour(go);
  REQUIRE(open.size() == 1);
  CHECK(!open[0].closed);

  // one-signed data has no front to extract
  Medium m = constant_medium(1.0);
  Grid2D pos(21, 21, 0.1, {0, 0}, 1.0);
  LevelSetState sp = make_level_set_state(std::move(pos), m, 1.0, 0.0, false,
                                          false);
  CHECK_THROWS_WITH_AS(extract_front(sp), doctest::Contains("empty-front"),
                       Error);

  // displacement extremes and the Hausdorff distance on known curves
  TrajectoryFrame frame;
  frame.fronts = fronts;  // the unit circle
  auto [lo, hi] = displacement_extremes(frame, {1, 0});
  CHECK(lo == doctest::Approx(-1.0).epsilon(1e-3));
  CHECK(hi == doctest::Approx(1.0).epsilon(1e-3));

  std::vector<Vec2> ref;
  for (int k = 0; k < 720; ++k)
    ref.push_back({std::cos(kTau * k / 720), std::sin(kTau * k / 720)});
  // vertex-sampled curves carry about half a vertex spacing of slack
  CHECK(hausdorff_distance(fronts, ref) <= 0.02);
  std::vector<Vec2> ref_shift = ref;
  for (Vec2& p : ref_shift) p.x += 0.3;
  CHECK(hausdorff_distance(fronts, ref_shift) ==
        doctest::Approx(0.3).epsilon(0.05));
}

TEST_CASE("evolution reports extinction") {
  Medium m = constant_medium(1.0);
  Grid2D u0 = signed_circle(81, 0.02, {-0.8, -0.8}, {0, 0}, 0.3);
  FrontTrajectory tr = mcf_evolve(
      make_level_set_state(std::move(u0), m, 1.0, 0.0, false, false), m, 0.2,
      0.01);
  CHECK(tr.extinct);
  // the circle dies at t = r^2 / 2 = 0.045
  CHECK(tr.frames.back().t <= 0.06);
}

TEST_CASE("planar fronts move at the forced speed") {
  SpeedOptions so;
  so.h = 1.0 / 32;
  Medium one = constant_medium(1.0);

  SpeedPair p = front_speed(one, {1, 0}, 0.5, 50, so);
  CHECK(p.c_min == doctest::Approx(0.5).epsilon(0.01));
  CHECK(p.c_max == doctest::Approx(0.5).epsilon(0.01));

  p = front_speed(one, {1, 1}, 0.5, 50, so);
  CHECK(p.c_min == doctest::Approx(0.5).epsilon(0.01));
  CHECK(p.c_max == doctest::Approx(0.5).epsilon(0.01));

  // stripes parallel to the motion never obstruct: c = F exactly
  Medium lam = laminar_medium(2.0, 0.9, 1, 0);
  p = front_speed(lam, {0, 1}, 0.4, 50, so);
  CHECK(p.c_min == doctest::Approx(0.4).epsilon(0.02));
  CHECK(p.c_max == doctest::Approx(0.4).epsilon(0.02));

  CHECK_THROWS_AS(front_speed(one, {0, 0}, 0.5, 50, so), Error);
  CHECK_THROWS_AS(front_speed(one, {1, 0}, 0.5, 10, so), Error);
}

TEST_CASE("laminar fronts pin below the gradient threshold") {
  // max |a'| = 2 pi 0.9 = 5.65, so F = 0.3 cannot move the front
  SpeedOptions so;
  so.h = 1.0 / 32;
  Medium lam = laminar_medium(2.0, 0.9, 1, 0);
  SpeedPair p = front_speed(lam, {1, 0}, 0.3, 50, so);
  CHECK(std::abs(p.c_min) <= 1e-3);
  CHECK(std::abs(p.c_max) <= 1e-3);
}

TEST_CASE("mobility reads the linear response") {
  SpeedOptions so;
  so.h = 1.0 / 32;
  CHECK(mobility(constant_medium(1.0), {1, 0}, 0.2, so) ==
        doctest::Approx(1.0).epsilon(0.02));
  CHECK(std::abs(mobility(laminar_medium(2.0, 0.9, 1, 0), {1, 0}, 0.5, so)) <=
        1e-3);
  CHECK_THROWS_AS(mobility(constant_medium(1.0), {1, 0}, 0.0, so), Error);
}

TEST_CASE("partly depinned fronts split their speeds") {
  // halfway past the obstacle lattice threshold the front advances but
  // leaves pinned holes behind, so min and max rates genuinely disagree
  SpeedOptions so;
  so.h = 1.0 / 32;
  Medium pin = default_pinning_medium();
  SpeedPair p = front_speed(pin, {1, 0}, 4.0, 50, so);
  CHECK(std::abs(p.c_min) <= 0.05);
  CHECK(p.c_max >= 0.5);
  CHECK_THROWS_WITH_AS(mobility(pin, {1, 0}, 4.0, so),
                       doctest::Contains("speeds-disagree"), Error);
}

TEST_CASE("pinning interval brackets the thresholds") {
  SpeedOptions so;
  so.h = 1.0 / 32;
  // no heterogeneity: both thresholds collapse to zero within tolerance
  auto iv = pinning_interval(constant_medium(1.0), {1, 0}, 1.0, 0.02, so);
  CHECK(iv.first <= 0.05);
  CHECK(iv.second <= 0.05);

  // stripes across the motion hold against the whole bracket
  iv = pinning_interval(laminar_medium(2.0, 0.9, 1, 0), {1, 0}, 1.0, 0.02,
                        so);
  CHECK(iv.first == 1.0);
  CHECK(iv.second == 1.0);

  CHECK_THROWS_WITH_AS(
      pinning_interval(constant_medium(1.0), {1, 0}, 1.0, 1e-8, so),
      doctest::Contains("degenerate-set"), Error);
}

TEST_CASE("shrinking circle follows the radius law") {
  Medium m = constant_medium(1.0);
  const double h = 0.05;
  int n = 2 * static_cast<int>(std::lround(5.6 / h)) + 1;
  Grid2D u0 = signed_circle(n, h, {-5.6, -5.6}, {0, 0}, 5.0);
  McfParams prm;
  prm.band_halfwidth = 24;
  prm.reinit_motion = 0.75;
  FrontTrajectory tr = mcf_evolve(
      make_level_set_state(std::move(u0), m, 1.0, 0.0, false, false, prm), m,
      8.0, 4.0);
  REQUIRE(tr.frames.size() == 3);
  // r(t) = sqrt(25 - 2 t): 4.1231 at t = 4 and 3 at t = 8
  CHECK(mean_front_radius(tr.frames[1]) ==
        doctest::Approx(std::sqrt(17.0)).epsilon(0.02));
  CHECK(mean_front_radius(tr.frames[2]) == doctest::Approx(3.0).epsilon(0.02));

  // redistancing must not move the interpolated zero level
  LevelSetState s = make_level_set_state(
      signed_circle(n, h, {-5.6, -5.6}, {0, 0}, 5.0), m, 1.0, 0.0, false,
      false, prm);
  REQUIRE(reinitialize(s));
  TrajectoryFrame frame;
  frame.t = 0;
  frame.fronts = extract_front(s);
  CHECK(std::abs(mean_front_radius(frame) - 5.0) <= h / 10);
}

TEST_CASE("circle-law error halves when the grid does") {
  double coarse = circle_law_error(0.05);
  double fine = circle_law_error(0.025);
  CHECK(std::abs(coarse) <= 5e-3);
  CHECK(std::abs(fine) <= 5e-3);
  double ratio = coarse / fine;
  CHECK(ratio >= 1.4);
  CHECK(ratio <= 2.6);
}

TEST_CASE("pinned shapes hold and strong forcing expels") {
  // without heterogeneity a disk shrinks away and drifts by its radius
  DriftOptions dop;
  dop.h = 0.05;
  DriftReport rep = pinned_drift(constant_medium(1.0), disk_set({0, 0}, 6.0),
                                 1.0, 0.0, 20.0, dop);
  CHECK(rep.extinct);
  CHECK(!rep.departed);
  CHECK(rep.drift >= 3.0);

  // the obstacle lattice holds the same disk near its starting place
  dop.h = 0.04;
  rep = pinned_drift(default_pinning_medium(), disk_set({0, 0}, 6.0), 1.0,
                     0.0, 20.0, dop);
  CHECK(!rep.extinct);
  CHECK(!rep.departed);
  CHECK(rep.drift + rep.projected_extra <= 1.2);

  // forcing far above the hold strength pushes the front out of the window
  rep = pinned_drift(default_pinning_medium(), disk_set({0, 0}, 6.0), 1.0,
                     28.0, 20.0, dop);
  CHECK(rep.departed);
  CHECK(!rep.extinct);

  // shapes too small for the diffuse scale are rejected
  CHECK_THROWS_WITH_AS(
      pinned_drift(constant_medium(1.0), disk_set({0, 0}, 2.0), 1.0, 0.0,
                   20.0, dop),
      doctest::Contains("degenerate-set"), Error);

  // boundary samplers behave
  CompactSet e = ellipse_set({1, 2}, 2.0, 1.0);
  CHECK(e.boundary.size() == 720);
  CHECK(e.inside({1, 2}));
  CHECK(!e.inside({4, 2}));
  CompactSet rs = rounded_square_set({0, 0}, 1.0, 0.3);
  CHECK(rs.inside({0, 0}));
  CHECK(!rs.inside({1.2, 1.2}));
}
