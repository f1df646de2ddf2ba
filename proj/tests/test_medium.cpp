#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "heterofront/medium.hpp"

using namespace hf;

namespace {

// Frozen oracle: R(2) = sqrt(17)/2.
constexpr double kR2 = 2.0615528128088303;

Medium two_bump_medium() {
  auto bump = [](Vec2 q, double rho) {
    double s2 = norm2(q) / (rho * rho);
    return s2 < 1 ? (1 - s2) * (1 - s2) * (1 - s2) : 0.0;
  };
  return analytic_medium(
      [bump](Vec2 x, int) {
        Vec2 f{x.x - std::floor(x.x), x.y - std::floor(x.y)};
        MediumEval e;
        e.a = 1 + 0.5 * bump(f - Vec2{0.25, 0.25}, 0.15) +
              0.5 * bump(f - Vec2{0.75, 0.75}, 0.15);
        return e;
      },
      2.0, "two-bumps");
}

// Central-difference gradient of the medium value.
Vec2 fd_gradient(const Medium& m, Vec2 x, double h) {
  return {(m.value({x.x + h, x.y}) - m.value({x.x - h, x.y})) / (2 * h),
          (m.value({x.x, x.y + h}) - m.value({x.x, x.y - h})) / (2 * h)};
}

Mat2 fd_hessian(const Medium& m, Vec2 x, double h) {
  double axx = (m.value({x.x + h, x.y}) - 2 * m.value(x) + m.value({x.x - h, x.y})) / (h * h);
  double ayy = (m.value({x.x, x.y + h}) - 2 * m.value(x) + m.value({x.x, x.y - h})) / (h * h);
  double axy = (m.value({x.x + h, x.y + h}) - m.value({x.x + h, x.y - h}) -
                m.value({x.x - h, x.y + h}) + m.value({x.x - h, x.y - h})) /
               (4 * h * h);
  return {axx, axy, axy, ayy};
}

// Level-curve curvature of {a = c} w.r.t. the outward normal of {a > c},
// written out independently of the library formula.
double level_curvature(const Medium& m, Vec2 xi) {
  MediumEval e = m.eval(xi, 2);
  double gx = e.grad.x, gy = e.grad.y;
  double g = std::hypot(gx, gy);
  double quad = gx * gx * e.hess.a00 + 2 * gx * gy * e.hess.a01 + gy * gy * e.hess.a11;
  return -(e.hess.trace() * g * g - quad) / (g * g * g);
}

}  // namespace

TEST_CASE("pinning geometry hits the closed-form radius and sagitta") {
  Medium m = default_pinning_medium();
  const NetworkGeometry* g = m.network();
  REQUIRE(g != nullptr);

  CHECK(g->R == doctest::Approx(kR2).epsilon(1e-15));
  CHECK(g->R == doctest::Approx(std::sqrt(17.0) / 2).epsilon(1e-15));
  CHECK(g->sagitta == doctest::Approx(kR2 - 2.0).epsilon(1e-12));
  CHECK(g->sagitta <= 0.25);

  // Sagitta oracle: max distance from 1000 arc samples to the chord.
  ArcSpec a = g->arc(0);
  double worst = 0;
  for (int k = 0; k <= 1000; ++k) {
    double ang = a.ang_tail + (a.ang_head - a.ang_tail) * k / 1000.0;
    worst = std::max(worst, segment_distance(a.point(ang), a.tail, a.head));
  }
  CHECK(worst == doctest::Approx(g->sagitta).epsilon(1e-6));

  // The canonical arc for +x: center at (1/2, -t), endpoints on the axis.
  CHECK(a.center.x == doctest::Approx(0.5));
  CHECK(a.center.y == doctest::Approx(-2.0));
  CHECK(norm(a.tail) < 1e-12);
  CHECK(dist(a.head, {1, 0}) < 1e-12);
  // Clockwise traversal: angle decreases from tail to head.
  CHECK(a.ang_tail > a.ang_head);
}

TEST_CASE("zero-amplitude pinning medium is identically one") {
  Medium m = build_pinning_medium(2.0, 0.195, 0.09, 0.03, 0.0);
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> U(-3, 3);
  for (int k = 0; k < 200; ++k) {
    MediumEval e = m.eval({U(rng), U(rng)}, 2);
    CHECK(e.a == 1.0);
    CHECK(e.grad.x == 0.0);
    CHECK(e.grad.y == 0.0);
  }
  CHECK(m.network() != nullptr);
}

TEST_CASE("constant and laminar evaluations match the closed forms") {
  Medium c = constant_medium(1.5);
  MediumEval e = c.eval({0.37, -1.2}, 2);
  CHECK(e.a == 1.5);
  CHECK(e.grad.x == 0.0);
  CHECK(e.hess.a00 == 0.0);
  CHECK(e.hess.a11 == 0.0);

  // a(x) = 2 + cos(2 pi x1) at (0, 0.7): cosine extremum.
  Medium lam = laminar_medium(2.0, 1.0, 1, 0);
  MediumEval l = lam.eval({0.0, 0.7}, 2);
  CHECK(l.a == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(std::abs(l.grad.x) < 1e-12);
  CHECK(std::abs(l.grad.y) < 1e-12);
  // Second derivative at the extremum: -(2 pi)^2.
  CHECK(l.hess.a00 == doctest::Approx(-4 * M_PI * M_PI).epsilon(1e-12));

  CHECK_THROWS_AS(laminar_medium(1.5, 1.0, 1, 0), Error);  // dips below 1
}

TEST_CASE("pinning plateaus: hole interior and far field are exact") {
  Medium m = default_pinning_medium();
  const NetworkGeometry* g = m.network();

  // Deep inside the hole around a vertex (lattice copies included).
  for (Vec2 v : {Vec2{0, 0}, Vec2{3, -2}, Vec2{-1, 5}}) {
    MediumEval e = m.eval(v, 2);
    CHECK(e.a == 1.0 + g->amp);
    CHECK(e.grad.x == 0.0);
    CHECK(e.grad.y == 0.0);
    CHECK(e.hess.a00 == 0.0);
  }
  // Below the band but past the radial fast path: still exactly 1 + amp.
  {
    Vec2 p{0.163 / std::sqrt(2.0), 0.163 / std::sqrt(2.0)};
    NodeProjection pr = g->project({0, 0}, p);
    REQUIRE(pr.d < -g->zeta);
    MediumEval e = m.eval(p, 2);
    CHECK(e.a == 1.0 + g->amp);
    CHECK(norm(e.grad) == 0.0);
  }
  // Far field: cell center and arc midpoints sit outside every band.
  for (Vec2 p : {Vec2{0.5, 0.5}, Vec2{0.5, -(kR2 - 2.0)}, Vec2{0.3, 0.01}}) {
    MediumEval e = m.eval(p, 2);
    CHECK(e.a == 1.0);
    CHECK(norm(e.grad) == 0.0);
  }
}

TEST_CASE("arc points outside the node bands see coefficient exactly one") {
  Medium m = default_pinning_medium();
  const NetworkGeometry* g = m.network();
  ArcSpec a = g->arc(0);
  int checked = 0;
  for (int k = 0; k <= 400; ++k) {
    double ang = a.ang_tail + (a.ang_head - a.ang_tail) * k / 400.0;
    Vec2 p = a.point(ang);
    double d_tail = g->project(a.tail, p).d;
    double d_head = g->project(a.head, p).d;
    if (d_tail < g->nu || d_head < g->nu) continue;
    MediumEval e = m.eval(p, 1);
    CHECK(e.a == 1.0);
    CHECK(norm(e.grad) == 0.0);
    ++checked;
  }
  CHECK(checked > 100);
}

TEST_CASE("profile eta satisfies the plateau, slope, and symmetry constraints") {
  Medium m = default_pinning_medium();
  const NetworkGeometry* g = m.network();
  double nu = g->nu, zeta = g->zeta, amp = g->amp;

  CHECK(g->eta(-nu) == amp);
  CHECK(g->eta(-nu / 2) == amp);
  CHECK(g->eta(nu / 2) == 0.0);
  CHECK(g->eta(nu) == 0.0);
  CHECK(g->eta(0) == doctest::Approx(amp / 2).epsilon(1e-14));

  // Max slope sits at the midpoint: A = 1.875 amp / (2 zeta).
  CHECK(g->A == doctest::Approx(1.875 * amp / (2 * zeta)).epsilon(1e-14));
  CHECK(std::abs(g->deta(0.0)) == doctest::Approx(g->A).epsilon(1e-14));
  double max_slope = 0;
  for (int k = 0; k <= 2000; ++k) {
    double s = -nu + 2 * nu * k / 2000.0;
    max_slope = std::max(max_slope, std::abs(g->deta(s)));
    // Slope cap on [-nu, -zeta]: the profile is flat there.
    if (s <= -zeta) CHECK(std::abs(g->deta(s)) <= 1.0 / (2 * g->R));
  }
  CHECK(max_slope == doctest::Approx(g->A).epsilon(1e-12));

  // A-condition against an independently sampled curve curvature max.
  double kmax = 0;
  for (int k = 0; k < 4096; ++k) kmax = std::max(kmax, std::abs(g->curve_kappa(2 * M_PI * k / 4096)));
  CHECK(g->A > 2 * kmax);
  CHECK(g->kappa_max == doctest::Approx(kmax).epsilon(1e-6));

  // C2 joins: eta' and eta'' vanish at both plateau edges.
  CHECK(std::abs(g->deta(-zeta + 1e-9)) < 1e-6);
  CHECK(std::abs(g->deta(zeta - 1e-9)) < 1e-6);
  CHECK(std::abs(g->ddeta(-zeta + 1e-7)) < 5e-2);
  CHECK(std::abs(g->ddeta(zeta - 1e-7)) < 5e-2);
}

TEST_CASE("arc crossings are orthogonal and unique; incident arcs disjoint") {
  Medium m = default_pinning_medium();
  const NetworkGeometry* g = m.network();

  CHECK(g->crossing_residual <= 1e-8);
  CHECK(std::abs(g->b1) < 0.05);
  CHECK(g->b1 != 0.0);

  // Re-derive the crossing and its orthogonality for both arc ends.
  ArcSpec a = g->arc(0);
  for (int end = 0; end < 2; ++end) {
    Vec2 v = end == 0 ? a.tail : a.head;
    double phi, theta;
    g->arc_crossing(a, v, phi, theta);
    // On the curve: |p - v| = rho(theta).
    Vec2 q = a.point(phi) - v;
    CHECK(norm(q) == doctest::Approx(g->rho(theta)).epsilon(1e-10));
    // Arc tangent parallel to curve normal, i.e. orthogonal to curve tangent.
    CHECK(std::abs(dot(a.tangent(phi), g->curve_tangent(v, theta))) < 1e-7);
  }

  // The arc leaves the tail hole exactly once: one sign change of the
  // radial clearance along the whole arc.
  int changes = 0;
  double prev = -g->rho(0);
  for (int k = 1; k <= 4000; ++k) {
    double ang = a.ang_tail + (a.ang_head - a.ang_tail) * k / 4000.0;
    Vec2 q = a.point(ang) - a.tail;
    double h = norm(q) - g->rho(std::atan2(q.y, q.x));
    if ((prev < 0) != (h < 0)) ++changes;
    prev = h;
  }
  CHECK(changes == 1);

  CHECK(g->arc_min_separation > 1e-3);

  // Hole stays inside the quarter ball around the vertex.
  double rho_max = 0;
  for (int k = 0; k < 1024; ++k) rho_max = std::max(rho_max, g->rho(2 * M_PI * k / 1024));
  CHECK(rho_max < 0.25);
}

TEST_CASE("band orthogonality: distance gradient nearly parallel to the arc") {
  Medium m = default_pinning_medium();
  const NetworkGeometry* g = m.network();
  REQUIRE(g->ortho_bound > 0);
  CHECK(g->ortho_bound == doctest::Approx(1.0 / (2 * g->R * g->A)).epsilon(1e-14));

  double worst = 0;
  ArcSpec a = g->arc(0);
  for (int end = 0; end < 2; ++end) {
    Vec2 v = end == 0 ? a.tail : a.head;
    for (int k = 0; k <= 600; ++k) {
      double ang = a.ang_tail + (a.ang_head - a.ang_tail) * k / 600.0;
      Vec2 p = a.point(ang);
      NodeProjection pr = g->project(v, p);
      if (std::abs(pr.d) > g->zeta) continue;
      worst = std::max(worst, std::abs(dot(rot90ccw(a.tangent(ang)), pr.grad)));
    }
  }
  CHECK(worst > 0);
  CHECK(worst <= g->ortho_bound);
  CHECK(g->band_dev_max <= g->ortho_bound);
}

TEST_CASE("infeasible profile parameters are rejected with the right code") {
  // amp so small that A = 1.875 amp / (2 zeta) cannot beat 2 kappa_max.
  CHECK_THROWS_WITH_AS(build_pinning_medium(2.0, 0.195, 0.09, 0.03, 0.05),
                       doctest::Contains("slope"), Error);
  try {
    build_pinning_medium(2.0, 0.195, 0.09, 0.03, 0.05);
  } catch (const Error& e) {
    CHECK(std::string(e.code()) == "infeasible-parameters");
  }
  // Bad nesting of the widths.
  CHECK_THROWS_AS(build_pinning_medium(2.0, 0.195, 0.2, 0.03, 0.45), Error);
  CHECK_THROWS_AS(build_pinning_medium(1.0, 0.195, 0.09, 0.03, 0.45), Error);
}

TEST_CASE("evaluations are periodic: exact on representable shifts") {
  Medium pin = default_pinning_medium();
  Medium lam = laminar_medium(2.0, 1.0, 1, 0);
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> U(0, 1);

  // Dyadic points: x + k is exactly representable, so folding is bit-exact.
  for (int k = 0; k < 50; ++k) {
    Vec2 x{std::floor(U(rng) * 1024) / 1024.0, std::floor(U(rng) * 1024) / 1024.0};
    for (const Medium& m : {pin, lam}) {
      MediumEval e0 = m.eval(x, 1);
      MediumEval e1 = m.eval(x + Vec2{3, -2}, 1);
      CHECK(e0.a == e1.a);
      CHECK(e0.grad.x == e1.grad.x);
      CHECK(e0.grad.y == e1.grad.y);
    }
  }
  // Generic points: agreement to round-off.
  for (int k = 0; k < 50; ++k) {
    Vec2 x{U(rng), U(rng)};
    CHECK(pin.value(x + Vec2{5, 7}) == doctest::Approx(pin.value(x)).epsilon(1e-11));
  }
}

TEST_CASE("range invariant: dense sample stays within [1, lambda]") {
  Medium pin = default_pinning_medium();
  double lo = INFINITY, hi = -INFINITY;
  int N = 1024;
  for (int j = 0; j < N; ++j)
    for (int i = 0; i < N; ++i) {
      double v = pin.value({(i + 0.5) / N, (j + 0.5) / N});
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  CHECK(lo >= 1.0 - 1e-12);
  CHECK(hi <= pin.lambda() + 1e-12);
  CHECK(hi == doctest::Approx(1.45).epsilon(1e-9));
  CHECK(lo == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("analytic derivatives match central differences") {
  Medium pin = default_pinning_medium();
  const NetworkGeometry* g = pin.network();
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> ANG(0, 2 * M_PI);
  std::uniform_real_distribution<double> DD(-g->zeta * 0.9, g->zeta * 0.9);

  // Points inside the transition band, where all derivative terms are live.
  for (int k = 0; k < 60; ++k) {
    double th = ANG(rng), s = DD(rng);
    Vec2 p = g->curve_point({0, 0}, th);
    NodeProjection pr = g->project({0, 0}, p);
    Vec2 x = p + pr.grad * s;
    MediumEval e = pin.eval(x, 2);

    Vec2 gfd = fd_gradient(pin, x, 1e-5);
    CHECK(norm(e.grad - gfd) <= 1e-4 * (1 + norm(e.grad)));

    Mat2 hfd = fd_hessian(pin, x, 3e-5);
    double scale = 1 + std::abs(e.hess.a00) + std::abs(e.hess.a11);
    CHECK(std::abs(e.hess.a00 - hfd.a00) <= 2e-2 * scale);
    CHECK(std::abs(e.hess.a11 - hfd.a11) <= 2e-2 * scale);
    CHECK(std::abs(e.hess.a01 - hfd.a01) <= 2e-2 * scale);
    CHECK(std::abs(e.hess.a01 - e.hess.a10) < 1e-12);
  }

  // Laminar: exact trig derivatives.
  Medium lam = laminar_medium(2.0, 0.7, 2, 1, 0.3);
  for (int k = 0; k < 40; ++k) {
    Vec2 x{ANG(rng), ANG(rng)};
    MediumEval e = lam.eval(x, 2);
    CHECK(norm(e.grad - fd_gradient(lam, x, 1e-6)) < 1e-6);
    Mat2 hfd = fd_hessian(lam, x, 1e-4);
    CHECK(std::abs(e.hess.a00 - hfd.a00) < 1e-3);
    CHECK(std::abs(e.hess.a01 - hfd.a01) < 1e-3);
  }
}

TEST_CASE("square returns a^2 with the exact chain-rule gradient") {
  CHECK(square(constant_medium(1.5)).value({0.1, 0.9}) == doctest::Approx(2.25).epsilon(1e-15));
  Medium lam = laminar_medium(2.0, 1.0, 1, 0);
  Medium th = square(lam);
  CHECK(th.value({0, 0.4}) == doctest::Approx(9.0).epsilon(1e-14));
  CHECK(th.lambda() == doctest::Approx(9.0));

  std::mt19937 rng(5);
  std::uniform_real_distribution<double> U(-2, 2);
  Medium pin = default_pinning_medium();
  Medium thp = square(pin);
  for (int k = 0; k < 100; ++k) {
    Vec2 x{U(rng), U(rng)};
    MediumEval b = pin.eval(x, 1);
    MediumEval s = thp.eval(x, 1);
    CHECK(s.a == doctest::Approx(b.a * b.a).epsilon(1e-14));
    Vec2 want = b.grad * (2 * b.a);
    CHECK(norm(s.grad - want) <= 1e-10 * (1 + norm(want)));
    CHECK(s.a >= 1.0 - 1e-12);
    CHECK(s.a <= pin.lambda() * pin.lambda() + 1e-12);
  }
}

TEST_CASE("corner perturbation: margin positive at sampled boundary points") {
  // Base: 1 + 0.5 bump, level at 80% of the max.
  Medium base = ensure_unique_max(constant_medium(1.0), 0.5);
  Medium out = perturb_corner(base, 0.8, 0.4, 0.03);
  const CornerDiagnostics* d = corner_diagnostics(out);
  REQUIRE(d != nullptr);

  CHECK(d->min_margin > 0);
  CHECK(d->psi_slope > d->kappa_max);

  // Independent margin re-derivation: walk rays from the max point, bisect
  // a(x) = c, then use FD curvature of the base level curve.
  double c = d->level_c;
  Vec2 x0 = d->max_point;
  double worst = INFINITY;
  for (int k = 0; k < 720; ++k) {
    double ang = 2 * M_PI * k / 720;
    Vec2 dir{std::cos(ang), std::sin(ang)};
    double lo = 0, hi = 0.45;
    REQUIRE(base.value(x0) > c);
    for (int it = 0; it < 80; ++it) {
      double mid = 0.5 * (lo + hi);
      (base.value(x0 + dir * mid) > c ? lo : hi) = mid;
    }
    Vec2 xi = x0 + dir * (0.5 * (lo + hi));
    double kap = level_curvature(base, xi);
    Vec2 n = -normalized(base.eval(xi, 1).grad);
    MediumEval ep = out.eval(xi, 1);
    worst = std::min(worst, -ep.a * kap - dot(ep.grad, n));
  }
  CHECK(worst > 0);
  CHECK(worst == doctest::Approx(d->min_margin).epsilon(0.05));

  // Support confinement: outside the band the output equals the base.
  CHECK(out.value(x0) == doctest::Approx(base.value(x0)).epsilon(1e-14));
  CHECK(out.value(x0 + Vec2{0.49, 0.49}) ==
        doctest::Approx(base.value(x0 + Vec2{0.49, 0.49})).epsilon(1e-14));

  // Sup distance within eps.
  double sup = 0;
  int N = 400;
  for (int j = 0; j < N; ++j)
    for (int i = 0; i < N; ++i) {
      Vec2 p{(i + 0.5) / N, (j + 0.5) / N};
      sup = std::max(sup, std::abs(out.value(p) - base.value(p)));
    }
  CHECK(sup <= 0.4);
  CHECK(sup > 0);
}

TEST_CASE("corner perturbation scales linearly in eps and obeys the coarea bound") {
  Medium base = ensure_unique_max(constant_medium(1.0), 0.5);
  double sup[3];
  double epses[3] = {0.1, 0.05, 0.025};
  for (int t = 0; t < 3; ++t) {
    Medium out = perturb_corner(base, 0.8, epses[t], 0.02);
    const CornerDiagnostics* d = corner_diagnostics(out);
    // Quadrature report against the coarea bound 2^{p+1} kappa^p eta.
    CHECK(d->grad_lp_pow > 0);
    CHECK(d->grad_lp_pow <= d->coarea_bound);

    // Sup distance measured on a ring through the band.
    double s = 0;
    Vec2 x0 = d->max_point;
    for (int k = 0; k < 3000; ++k) {
      double ang = 2 * M_PI * k / 3000;
      for (double rad = 0.05; rad < 0.25; rad += 0.002) {
        Vec2 p = x0 + Vec2{std::cos(ang), std::sin(ang)} * rad;
        s = std::max(s, std::abs(out.value(p) - base.value(p)));
      }
    }
    sup[t] = s;
    CHECK(s <= epses[t]);
  }
  CHECK(sup[0] / sup[1] == doctest::Approx(2.0).epsilon(0.03));
  CHECK(sup[1] / sup[2] == doctest::Approx(2.0).epsilon(0.03));
}

TEST_CASE("corner perturbation rejects degenerate level sets") {
  CHECK_THROWS_AS(perturb_corner(constant_medium(3.0), 0.8, 0.3, 0.05), Error);
  try {
    perturb_corner(constant_medium(3.0), 0.8, 0.3, 0.05);
  } catch (const Error& e) {
    CHECK(std::string(e.code()) == "multi-component-level-set");
  }
  // Laminar medium: the level set wraps the torus, never a closed disk.
  CHECK_THROWS_AS(perturb_corner(laminar_medium(2.0, 1.0, 1, 0), 0.9, 0.3, 0.02), Error);
}

TEST_CASE("ensure_unique_max produces a unique nondegenerate maximum") {
  // Flat input: single max at the bump center, negative definite Hessian.
  Medium flat = ensure_unique_max(constant_medium(1.0), 0.1);
  int N = 512;
  double best = -INFINITY;
  Vec2 arg{0, 0};
  int near_ties = 0;
  for (int j = 0; j < N; ++j)
    for (int i = 0; i < N; ++i) {
      double v = flat.value({(i + 0.5) / N, (j + 0.5) / N});
      if (v > best + 1e-12) {
        best = v;
        arg = {(i + 0.5) / N, (j + 0.5) / N};
        near_ties = 1;
      } else if (std::abs(v - best) <= 1e-12) {
        ++near_ties;
      }
    }
  CHECK(near_ties == 1);
  CHECK(best == doctest::Approx(1.1).epsilon(1e-6));
  MediumEval e = flat.eval(arg, 2);
  // Eigenvalues of the symmetric Hessian.
  double tr = e.hess.trace();
  double det = e.hess.a00 * e.hess.a11 - e.hess.a01 * e.hess.a10;
  double disc = std::sqrt(std::max(0.0, tr * tr / 4 - det));
  CHECK(tr / 2 + disc < 0);
  CHECK(tr / 2 - disc < 0);

  // Two equal maxima: the bump breaks the tie.
  Medium two = two_bump_medium();
  Medium fixed = ensure_unique_max(two, 0.01);
  best = -INFINITY;
  near_ties = 0;
  for (int j = 0; j < N; ++j)
    for (int i = 0; i < N; ++i) {
      double v = fixed.value({(i + 0.5) / N, (j + 0.5) / N});
      if (v > best + 1e-13) {
        best = v;
        near_ties = 1;
      } else if (std::abs(v - best) <= 1e-13) {
        ++near_ties;
      }
    }
  CHECK(near_ties == 1);

  // C0 distance bounded by delta.
  double sup = 0;
  for (int k = 0; k < 4000; ++k) {
    Vec2 p{(k % 63) / 63.0, (k / 63) / 63.0};
    sup = std::max(sup, std::abs(fixed.value(p) - two.value(p)));
  }
  CHECK(sup <= 0.01 + 1e-12);

  // delta = 0: unchanged input plus a warning flag.
  Medium same = ensure_unique_max(two, 0.0);
  CHECK(same.value({0.3, 0.8}) == two.value({0.3, 0.8}));
  REQUIRE(!same.warnings().empty());
  CHECK(same.warnings()[0].find("delta-zero") != std::string::npos);

  // Bound overflow: range-violation.
  try {
    ensure_unique_max(constant_medium(2.0), 0.5);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(std::string(e.code()) == "range-violation");
  }
}

TEST_CASE("grid-sampled media interpolate their cell and validate the floor") {
  int n = 64;
  Grid2D cell(n, n, 1.0 / n, {0, 0});
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      cell.at(i, j) = 2.0 + std::cos(2 * M_PI * i / n);
  Medium gm = grid_medium(cell);

  // Exact at the sample nodes.
  CHECK(gm.value({0.0, 0.5}) == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(gm.value({32.0 / n, 0.25}) == doctest::Approx(1.0).epsilon(1e-14));
  // Interpolates across the periodic seam without a glitch.
  CHECK(gm.value({1.0 - 0.5 / n, 0.5}) ==
        doctest::Approx(2.0 + 0.5 * (std::cos(2 * M_PI * (n - 1.0) / n) + 1.0)).epsilon(1e-12));
  // Gradient consistent with differences at a generic point.
  Vec2 gfd = fd_gradient(gm, {0.3712, 0.41}, 1e-7);
  CHECK(norm(gm.gradient({0.3712, 0.41}) - gfd) < 1e-5);

  Grid2D bad(8, 8, 0.125, {0, 0});
  for (int j = 0; j < 8; ++j)
    for (int i = 0; i < 8; ++i) bad.at(i, j) = 0.5;
  CHECK_THROWS_AS(grid_medium(bad), Error);
}

TEST_CASE("serialization round-trips every descriptor kind") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "hf_medium_io";
  fs::create_directories(dir);

  std::mt19937 rng(31);
  std::uniform_real_distribution<double> U(-1, 2);
  auto same_field = [&](const Medium& a, const Medium& b, double tol) {
    for (int k = 0; k < 60; ++k) {
      Vec2 x{U(rng), U(rng)};
      if (std::abs(a.value(x) - b.value(x)) > tol) return false;
    }
    return true;
  };

  Medium pin = default_pinning_medium();
  write_medium(pin, (dir / "pin.json").string());
  Medium pin2 = read_medium((dir / "pin.json").string());
  CHECK(same_field(pin, pin2, 0.0));
  CHECK(pin2.network() != nullptr);
  CHECK(pin2.network()->b1 == doctest::Approx(pin.network()->b1).epsilon(1e-12));

  Medium lam = laminar_medium(2.0, 0.8, 1, 2, 0.25);
  write_medium(lam, (dir / "lam.json").string());
  CHECK(same_field(lam, read_medium((dir / "lam.json").string()), 0.0));

  Medium cst = constant_medium(1.7);
  write_medium(cst, (dir / "cst.json").string());
  CHECK(same_field(cst, read_medium((dir / "cst.json").string()), 0.0));

  Medium sq = square(lam);
  write_medium(sq, (dir / "sq.json").string());
  CHECK(same_field(sq, read_medium((dir / "sq.json").string()), 1e-14));

  // Grid medium: descriptor plus binary sidecar.
  int n = 32;
  Grid2D cell(n, n, 1.0 / n, {0, 0});
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) cell.at(i, j) = 1.5 + 0.3 * std::sin(2 * M_PI * j / n);
  Medium gm = grid_medium(cell);
  write_medium(gm, (dir / "gm.json").string());
  CHECK(same_field(gm, read_medium((dir / "gm.json").string()), 0.0));
  CHECK(fs::exists(dir / "gm.grid"));

  // Analytic media cannot round-trip.
  try {
    write_medium(two_bump_medium(), (dir / "an.json").string());
    CHECK(false);
  } catch (const Error& e) {
    CHECK(std::string(e.code()) == "not-serializable");
  }

  // Composite kinds rebuild deterministically.
  Medium bumped = ensure_unique_max(constant_medium(1.0), 0.5);
  write_medium(bumped, (dir / "bump.json").string());
  CHECK(same_field(bumped, read_medium((dir / "bump.json").string()), 1e-12));

  Medium pert = perturb_corner(bumped, 0.8, 0.3, 0.03);
  write_medium(pert, (dir / "pert.json").string());
  CHECK(same_field(pert, read_medium((dir / "pert.json").string()), 1e-9));
}
