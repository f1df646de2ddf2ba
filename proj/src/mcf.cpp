#include "heterofront/mcf.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <limits>
#include <queue>
#include <unordered_map>
#include <utility>
#include <vector>

#include "heterofront/errors.hpp"
#include "heterofront/metric.hpp"

namespace hf {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSqrt2 = 1.4142135623730951;

int wrap_idx(int i, int n) {
  i %= n;
  return i < 0 ? i + n : i;
}

// Grid value with one layer of ghost nodes: periodic wrap where requested,
// linear extrapolation otherwise. Only offsets of one node are ever needed.
double bc_value(const Grid2D& g, bool px, bool py, int i, int j) {
  if (px) i = wrap_idx(i, g.nx);
  if (py) j = wrap_idx(j, g.ny);
  if (i < 0) return 2 * bc_value(g, px, py, 0, j) - bc_value(g, px, py, 1, j);
  if (i >= g.nx)
    return 2 * bc_value(g, px, py, g.nx - 1, j) -
           bc_value(g, px, py, g.nx - 2, j);
  if (j < 0) return 2 * bc_value(g, px, py, i, 0) - bc_value(g, px, py, i, 1);
  if (j >= g.ny)
    return 2 * bc_value(g, px, py, i, g.ny - 1) -
           bc_value(g, px, py, i, g.ny - 2);
  return g.at(i, j);
}

// One-sided Eikonal update through the triangle spanned by an axis neighbor
// holding ua and a flanking diagonal neighbor holding ud (unit weight).
double tri_update(double ua, double ud, double h) {
  double best = ua + h;
  best = std::min(best, ud + h * kSqrt2);
  double s = (ua - ud) / h;
  if (s > 0 && s < 1.0 / kSqrt2) {
    double t = s / std::sqrt(1 - s * s);
    if (t < 1) {
      double cand = (1 - t) * ua + t * ud + h * std::sqrt(1 + t * t);
      best = std::min(best, cand);
    }
  }
  return best;
}

struct HeapEntry {
  double v;
  int i, j;
  bool operator>(const HeapEntry& o) const { return v > o.v; }
};

// First-arrival Euclidean march from the finite entries of d. Marching stops
// once the accepted value exceeds cap; untouched nodes keep kInf.
void euclid_march(std::vector<double>& d, int nx, int ny, double h, bool px,
                  bool py, double cap) {
  auto idx = [nx](int i, int j) { return j * nx + i; };
  std::vector<unsigned char> frozen(d.size(), 0);
  std::priority_queue<HeapEntry, std::vector<HeapEntry>, std::greater<>> heap;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      if (d[idx(i, j)] < kInf) heap.push({d[idx(i, j)], i, j});

  auto fetch = [&](int i, int j, double& out) {
    if (px) i = wrap_idx(i, nx);
    if (py) j = wrap_idx(j, ny);
    if (i < 0 || i >= nx || j < 0 || j >= ny) return false;
    if (!frozen[idx(i, j)]) return false;
    out = d[idx(i, j)];
    return true;
  };

  const int ax[4] = {1, -1, 0, 0};
  const int ay[4] = {0, 0, 1, -1};
  auto solve_node = [&](int i, int j) {
    double best = kInf;
    for (int k = 0; k < 4; ++k) {
      double ua;
      if (!fetch(i + ax[k], j + ay[k], ua)) continue;
      best = std::min(best, ua + h);
      // the two diagonals flanking this axis direction
      for (int s = 0; s < 2; ++s) {
        int ddx = ax[k] ? ax[k] : (s ? -1 : 1);
        int ddy = ax[k] ? (s ? -1 : 1) : ay[k];
        double ud;
        if (fetch(i + ddx, j + ddy, ud))
          best = std::min(best, tri_update(ua, ud, h));
      }
    }
    return best;
  };

  while (!heap.empty()) {
    HeapEntry e = heap.top();
    heap.pop();
    size_t id = idx(e.i, e.j);
    if (frozen[id]) continue;
    if (e.v > d[id]) continue;
    frozen[id] = 1;
    if (e.v > cap) continue;  // beyond the band: freeze but do not expand
    for (int k = 0; k < 8; ++k) {
      static const int ox[8] = {1, -1, 0, 0, 1, 1, -1, -1};
      static const int oy[8] = {0, 0, 1, -1, 1, -1, 1, -1};
      int ni = e.i + ox[k], nj = e.j + oy[k];
      if (px) ni = wrap_idx(ni, nx);
      if (py) nj = wrap_idx(nj, ny);
      if (ni < 0 || ni >= nx || nj < 0 || nj >= ny) continue;
      if (frozen[idx(ni, nj)]) continue;
      double cand = solve_node(ni, nj);
      if (cand < d[idx(ni, nj)]) {
        d[idx(ni, nj)] = cand;
        heap.push({cand, ni, nj});
      }
    }
  }
}

void rebuild_band(LevelSetState& s) {
  s.band.clear();
  s.band_ij.clear();
  if (s.params.band_halfwidth <= 0) return;
  double lim = s.params.band_halfwidth * s.u.h;
  double cap = (s.params.band_halfwidth + 4) * s.u.h;
  size_t c = 0;
  for (int j = 0; j < s.u.ny; ++j)
    for (int i = 0; i < s.u.nx; ++i, ++c) {
      if (std::abs(s.u.data[c]) < lim) {
        s.band.push_back(static_cast<int>(c));
        s.band_ij.push_back(static_cast<unsigned>(j) << 16 |
                            static_cast<unsigned>(i));
      } else {
        s.u.data[c] = s.u.data[c] >= 0 ? cap : -cap;
      }
    }
}

void fill_cache(LevelSetState& s, const Medium& m, int c) {
  int i = c % s.u.nx, j = c / s.u.nx;
  Vec2 pos = s.u.node(i, j);
  Vec2 world{s.world_origin.x + pos.x * s.world_ex.x + pos.y * s.world_ey.x,
             s.world_origin.y + pos.x * s.world_ex.y + pos.y * s.world_ey.y};
  MediumEval me = m.eval({world.x / s.eps, world.y / s.eps}, 1);
  s.a_cache[c] = me.a;
  // chain rule back into grid coordinates
  s.cx_cache[c] = (me.grad.x * s.world_ex.x + me.grad.y * s.world_ex.y) / s.eps;
  s.cy_cache[c] = (me.grad.x * s.world_ey.x + me.grad.y * s.world_ey.y) / s.eps;
  s.cache_ok[c] = 1;
}

// One explicit update of u_t = a tr((I - g^ x g^) D2 u) + c . Du + f |Du|
// where g = Du + shift, c = Da/eps, f = F/eps. Central differences feed the
// curvature part, upwinding the advection, Godunov the forcing. Returns the
// max-norm of the increment actually applied.
double apply_step(LevelSetState& s, const Medium& m, double dt, Vec2 shift,
                  double& front_inc) {
  Grid2D& g = s.u;
  const int nx = g.nx, ny = g.ny;
  const double h = g.h;
  const double inv2h = 1.0 / (2 * h), invh = 1.0 / h, invh2 = 1.0 / (h * h);
  const double f = s.F / s.eps;
  const double sig2 = s.sigma_reg * s.sigma_reg;
  if (s.a_cache.size() != g.data.size()) {
    s.a_cache.assign(g.data.size(), 0.0);
    s.cx_cache.assign(g.data.size(), 0.0);
    s.cy_cache.assign(g.data.size(), 0.0);
    s.cache_ok.assign(g.data.size(), 0);
  }

  const bool banded = !s.band.empty();
  const size_t count = banded ? s.band.size() : g.data.size();
  static thread_local std::vector<double> inc;
  inc.resize(count);

  double max_inc = 0;
  front_inc = 0;
  const double near_front = 2 * h;

  auto node_inc = [&](size_t k, int c, double u0, double uE, double uW,
                      double uN, double uS, double uNE, double uNW, double uSE,
                      double uSW) {
    const double a = s.a_cache[c], cx = s.cx_cache[c], cy = s.cy_cache[c];

    double gx = (uE - uW) * inv2h + shift.x;
    double gy = (uN - uS) * inv2h + shift.y;
    double uxx = (uE - 2 * u0 + uW) * invh2;
    double uyy = (uN - 2 * u0 + uS) * invh2;
    double uxy = (uNE - uNW - uSE + uSW) * invh2 * 0.25;
    double den = gx * gx + gy * gy + sig2;
    double curv = uxx + uyy -
                  (gx * gx * uxx + 2 * gx * gy * uxy + gy * gy * uyy) / den;

    double dmx = (u0 - uW) * invh + shift.x, dpx = (uE - u0) * invh + shift.x;
    double dmy = (u0 - uS) * invh + shift.y, dpy = (uN - u0) * invh + shift.y;
    double adv = cx * (cx > 0 ? dmx : dpx) + cy * (cy > 0 ? dmy : dpy);

    double force = 0;
    if (f != 0) {
      double g2;
      if (f > 0) {
        double q1 = std::max(dmx, 0.0), q2 = std::min(dpx, 0.0);
        double q3 = std::max(dmy, 0.0), q4 = std::min(dpy, 0.0);
        g2 = q1 * q1 + q2 * q2 + q3 * q3 + q4 * q4;
      } else {
        double q1 = std::min(dmx, 0.0), q2 = std::max(dpx, 0.0);
        double q3 = std::min(dmy, 0.0), q4 = std::max(dpy, 0.0);
        g2 = q1 * q1 + q2 * q2 + q3 * q3 + q4 * q4;
      }
      force = f * std::sqrt(g2);
    }

    double di = dt * (a * curv + adv + force);
    inc[k] = di;
    double adi = std::abs(di);
    if (adi > max_inc) max_inc = adi;
    if (std::abs(u0) <= near_front && adi > front_inc) front_inc = adi;
  };

  if (!banded) {
    for (int j = 0; j < ny; ++j) {
      const bool jin = j > 0 && j < ny - 1;
      int c = j * nx;
      for (int i = 0; i < nx; ++i, ++c) {
        if (!s.cache_ok[c]) fill_cache(s, m, c);
        if (jin && i > 0 && i < nx - 1) {
          node_inc(c, c, g.data[c], g.data[c + 1], g.data[c - 1],
                   g.data[c + nx], g.data[c - nx], g.data[c + nx + 1],
                   g.data[c + nx - 1], g.data[c - nx + 1], g.data[c - nx - 1]);
        } else {
          node_inc(c, c, g.data[c],
                   bc_value(g, s.periodic_x, s.periodic_y, i + 1, j),
                   bc_value(g, s.periodic_x, s.periodic_y, i - 1, j),
                   bc_value(g, s.periodic_x, s.periodic_y, i, j + 1),
                   bc_value(g, s.periodic_x, s.periodic_y, i, j - 1),
                   bc_value(g, s.periodic_x, s.periodic_y, i + 1, j + 1),
                   bc_value(g, s.periodic_x, s.periodic_y, i - 1, j + 1),
                   bc_value(g, s.periodic_x, s.periodic_y, i + 1, j - 1),
                   bc_value(g, s.periodic_x, s.periodic_y, i - 1, j - 1));
        }
      }
    }
  } else {
    for (size_t k = 0; k < count; ++k) {
      int c = s.band[k];
      unsigned ij = s.band_ij[k];
      int i = static_cast<int>(ij & 0xffffu), j = static_cast<int>(ij >> 16);
      if (!s.cache_ok[c]) fill_cache(s, m, c);
      if (i > 0 && i < nx - 1 && j > 0 && j < ny - 1) {
        node_inc(k, c, g.data[c], g.data[c + 1], g.data[c - 1], g.data[c + nx],
                 g.data[c - nx], g.data[c + nx + 1], g.data[c + nx - 1],
                 g.data[c - nx + 1], g.data[c - nx - 1]);
      } else {
        node_inc(k, c, g.data[c],
                 bc_value(g, s.periodic_x, s.periodic_y, i + 1, j),
                 bc_value(g, s.periodic_x, s.periodic_y, i - 1, j),
                 bc_value(g, s.periodic_x, s.periodic_y, i, j + 1),
                 bc_value(g, s.periodic_x, s.periodic_y, i, j - 1),
                 bc_value(g, s.periodic_x, s.periodic_y, i + 1, j + 1),
                 bc_value(g, s.periodic_x, s.periodic_y, i - 1, j + 1),
                 bc_value(g, s.periodic_x, s.periodic_y, i + 1, j - 1),
                 bc_value(g, s.periodic_x, s.periodic_y, i - 1, j - 1));
      }
    }
  }

  if (!banded) {
    for (size_t k = 0; k < count; ++k) g.data[k] += inc[k];
  } else {
    for (size_t k = 0; k < count; ++k) g.data[s.band[k]] += inc[k];
  }
  return max_inc;
}

double checked_step(LevelSetState& s, const Medium& m, double dt, Vec2 shift) {
  require(dt > 0, "cfl-violation", "step size must be positive");
  double lim = cfl_limit(s);
  if (dt > lim * (1 + 1e-9)) {
    char msg[160];
    std::snprintf(msg, sizeof msg,
                  "dt = %.3e exceeds the stability bound %.3e", dt, lim);
    fail("cfl-violation", msg);
  }
  double front_inc = 0;
  double inc = apply_step(s, m, dt, shift, front_inc);
  s.t += dt;
  s.steps_since_reinit += 1;
  // only increments near the zero level count as front motion
  s.motion_since_reinit += front_inc;
  return inc;
}

// Redistancing is due once the front has plausibly moved reinit_motion cells
// (each sweep carries an O(h^2) level shift, so cadence must scale with
// motion, not step count) or when the step cap is hit.
bool reinit_due(const LevelSetState& s) {
  const McfParams& p = s.params;
  if (p.reinit_motion > 0 && s.motion_since_reinit >= p.reinit_motion * s.u.h)
    return true;
  if (p.reinit_every > 0 && s.steps_since_reinit >= p.reinit_every)
    return true;
  return false;
}

int64_t edge_key(int kind, int i, int j, int nx, int ny) {
  return static_cast<int64_t>(kind) * nx * ny + static_cast<int64_t>(j) * nx +
         i;
}

struct MsSegment {
  int64_t e0, e1;
};

Vec2 edge_point(const Grid2D& g, int64_t key) {
  int64_t n = static_cast<int64_t>(g.nx) * g.ny;
  int kind = key >= n ? 1 : 0;
  int64_t rem = key - kind * n;
  int i = static_cast<int>(rem % g.nx), j = static_cast<int>(rem / g.nx);
  double ua = g.at(i, j);
  double ub = kind == 0 ? g.at(i + 1, j) : g.at(i, j + 1);
  double t = ua / (ua - ub);
  Vec2 p = g.node(i, j);
  if (kind == 0)
    p.x += t * g.h;
  else
    p.y += t * g.h;
  return p;
}

}  // namespace

LevelSetState make_level_set_state(Grid2D u0, const Medium& m, double eps,
                                   double F, bool periodic_x, bool periodic_y,
                                   McfParams params) {
  require(u0.nx >= 8 && u0.ny >= 8, "degenerate-set",
          "level-set grid needs at least 8 nodes per axis");
  require(u0.nx < 65536 && u0.ny < 65536, "degenerate-set",
          "level-set grid axis exceeds 65535 nodes");
  require(eps > 0, "degenerate-set", "eps must be positive");
  LevelSetState s;
  s.u = std::move(u0);
  s.eps = eps;
  s.F = F;
  s.periodic_x = periodic_x;
  s.periodic_y = periodic_y;
  s.params = params;
  s.max_a = m.lambda();
  s.sigma_reg = params.sigma_reg_factor * s.max_a;

  double gmax = 0;
  if (m.network() && m.network()->A > 0) {
    gmax = m.network()->A;
  } else {
    const int n = 192;
    for (int j = 0; j <= n; ++j)
      for (int i = 0; i <= n; ++i) {
        Vec2 gr = m.gradient({i / double(n), j / double(n)});
        gmax = std::max(gmax, std::hypot(gr.x, gr.y));
      }
    gmax *= 1.02;
  }
  s.grad_bound = gmax;
  rebuild_band(s);
  return s;
}

double cfl_limit(const LevelSetState& s) {
  double h = s.u.h;
  double para = h * h / (8 * s.max_a);
  double den = s.grad_bound + std::abs(s.F);
  double adv = den > 0 ? h * s.eps / (4 * den) : kInf;
  return std::min(para, adv);
}

double mcf_step(LevelSetState& s, const Medium& m, double dt) {
  return checked_step(s, m, dt, {0, 0});
}

bool reinitialize(LevelSetState& s) {
  Grid2D& g = s.u;
  const int nx = g.nx, ny = g.ny;
  const double h = g.h;
  std::vector<FrontCurve> chains = extract_zero_contour(g);
  if (chains.empty()) return false;

  std::vector<signed char> sgn(g.data.size());
  for (size_t c = 0; c < g.data.size(); ++c) sgn[c] = g.data[c] >= 0 ? 1 : -1;

  const double bh = s.params.band_halfwidth;
  const double cap = bh > 0 ? (bh + 4) * h : kInf;
  // Exact point-to-polyline distances across the band (or the whole grid).
  // On the two node rings adjacent to the front these are then overridden by
  // per-edge crossing distances: both endpoints of a sign-change edge measure
  // to the same interpolated crossing, so the interpolated zero of the
  // rebuilt field reproduces the extracted front instead of the slightly
  // rounded corners of the polyline's own distance field.
  const double rad = bh > 0 ? (bh + 6.0) * h : kInf;
  std::vector<double> d(g.data.size(), kInf);

  auto stamp_segment = [&](Vec2 p, Vec2 q) {
    double sx = q.x - p.x, sy = q.y - p.y;
    double ss = sx * sx + sy * sy;
    int ilo, ihi, jlo, jhi;
    if (rad == kInf) {
      ilo = 0, ihi = nx - 1, jlo = 0, jhi = ny - 1;
    } else {
      ilo = static_cast<int>(std::floor((std::min(p.x, q.x) - rad - g.origin.x) / h));
      ihi = static_cast<int>(std::ceil((std::max(p.x, q.x) + rad - g.origin.x) / h));
      jlo = static_cast<int>(std::floor((std::min(p.y, q.y) - rad - g.origin.y) / h));
      jhi = static_cast<int>(std::ceil((std::max(p.y, q.y) + rad - g.origin.y) / h));
      if (!s.periodic_x || ihi - ilo >= nx) {
        ilo = std::max(ilo, 0);
        ihi = std::min(ihi, nx - 1);
        if (s.periodic_x && ihi - ilo >= nx) ilo = 0, ihi = nx - 1;
      }
      if (!s.periodic_y || jhi - jlo >= ny) {
        jlo = std::max(jlo, 0);
        jhi = std::min(jhi, ny - 1);
        if (s.periodic_y && jhi - jlo >= ny) jlo = 0, jhi = ny - 1;
      }
    }
    for (int jj = jlo; jj <= jhi; ++jj) {
      int jw = s.periodic_y ? wrap_idx(jj, ny) : jj;
      double py = g.origin.y + jj * h;
      for (int ii = ilo; ii <= ihi; ++ii) {
        int iw = s.periodic_x ? wrap_idx(ii, nx) : ii;
        double px = g.origin.x + ii * h;
        double t = ss > 0 ? ((px - p.x) * sx + (py - p.y) * sy) / ss : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        double ddx = px - (p.x + t * sx), ddy = py - (p.y + t * sy);
        double dd = std::sqrt(ddx * ddx + ddy * ddy);
        size_t cw = static_cast<size_t>(jw) * nx + iw;
        if (dd < d[cw]) d[cw] = dd;
      }
    }
  };
  for (const FrontCurve& fc : chains) {
    for (size_t k = 0; k + 1 < fc.pts.size(); ++k)
      stamp_segment(fc.pts[k], fc.pts[k + 1]);
    if (fc.closed && fc.pts.size() > 2)
      stamp_segment(fc.pts.back(), fc.pts.front());
  }

  std::vector<double> ring(g.data.size(), kInf);
  auto cross_seed = [&](int i0, int j0, int i1, int j1, double len) {
    int ia = i1, ja = j1;
    if (s.periodic_x) ia = wrap_idx(ia, nx);
    if (s.periodic_y) ja = wrap_idx(ja, ny);
    if (ia < 0 || ia >= nx || ja < 0 || ja >= ny) return;
    int c0 = j0 * nx + i0, c1 = ja * nx + ia;
    if (sgn[c0] == sgn[c1]) return;
    double u0 = g.data[c0], u1 = g.data[c1];
    double t = u0 / (u0 - u1);
    ring[c0] = std::min(ring[c0], t * len);
    ring[c1] = std::min(ring[c1], (1 - t) * len);
  };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      cross_seed(i, j, i + 1, j, h);
      cross_seed(i, j, i, j + 1, h);
      cross_seed(i, j, i + 1, j + 1, h * kSqrt2);
      cross_seed(i, j, i + 1, j - 1, h * kSqrt2);
    }

  for (size_t c = 0; c < g.data.size(); ++c) {
    double v = ring[c] < kInf ? ring[c] : d[c];
    g.data[c] = sgn[c] * std::min(v, cap);
  }
  rebuild_band(s);
  s.steps_since_reinit = 0;
  s.motion_since_reinit = 0;
  return true;
}

std::vector<FrontCurve> extract_zero_contour(const Grid2D& g) {
  require(g.nx >= 2 && g.ny >= 2, "degenerate-set",
          "contour extraction needs a 2x2 grid at least");
  const int nx = g.nx, ny = g.ny;
  std::vector<MsSegment> segs;
  auto in = [&](int i, int j) { return g.at(i, j) >= 0; };
  for (int j = 0; j + 1 < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i) {
      int pat = (in(i, j) ? 1 : 0) | (in(i + 1, j) ? 2 : 0) |
                (in(i + 1, j + 1) ? 4 : 0) | (in(i, j + 1) ? 8 : 0);
      if (pat == 0 || pat == 15) continue;
      int64_t B = edge_key(0, i, j, nx, ny), T = edge_key(0, i, j + 1, nx, ny);
      int64_t L = edge_key(1, i, j, nx, ny), R = edge_key(1, i + 1, j, nx, ny);
      switch (pat) {
        case 1: case 14: segs.push_back({L, B}); break;
        case 2: case 13: segs.push_back({B, R}); break;
        case 3: case 12: segs.push_back({L, R}); break;
        case 4: case 11: segs.push_back({T, R}); break;
        case 6: case 9: segs.push_back({B, T}); break;
        case 7: case 8: segs.push_back({L, T}); break;
        case 5: case 10: {
          double center = 0.25 * (g.at(i, j) + g.at(i + 1, j) +
                                  g.at(i + 1, j + 1) + g.at(i, j + 1));
          bool cpos = center >= 0;
          bool diag_in = (pat == 5);  // corners (i,j) and (i+1,j+1) inside
          if (diag_in == cpos) {
            segs.push_back({L, T});
            segs.push_back({B, R});
          } else {
            segs.push_back({L, B});
            segs.push_back({T, R});
          }
          break;
        }
        default: break;
      }
    }

  std::unordered_map<int64_t, std::vector<int>> at_edge;
  at_edge.reserve(segs.size() * 2);
  for (int si = 0; si < static_cast<int>(segs.size()); ++si) {
    at_edge[segs[si].e0].push_back(si);
    at_edge[segs[si].e1].push_back(si);
  }
  std::vector<unsigned char> used(segs.size(), 0);

  auto walk = [&](int start_seg, int64_t start_edge) {
    FrontCurve curve;
    int64_t cur = start_edge;
    curve.pts.push_back(edge_point(g, cur));
    int si = start_seg;
    while (true) {
      used[si] = 1;
      int64_t next = segs[si].e0 == cur ? segs[si].e1 : segs[si].e0;
      curve.pts.push_back(edge_point(g, next));
      cur = next;
      int nxt = -1;
      for (int cand : at_edge[cur])
        if (!used[cand]) nxt = cand;
      if (nxt < 0) break;
      si = nxt;
    }
    if (cur == start_edge && curve.pts.size() > 3) {
      curve.pts.pop_back();
      curve.closed = true;
    }
    return curve;
  };

  std::vector<FrontCurve> out;
  // open chains first, anchored at the edges used by exactly one segment
  for (const auto& kv : at_edge) {
    if (kv.second.size() != 1) continue;
    int si = kv.second[0];
    if (used[si]) continue;
    out.push_back(walk(si, kv.first));
  }
  for (int si = 0; si < static_cast<int>(segs.size()); ++si)
    if (!used[si]) out.push_back(walk(si, segs[si].e0));
  return out;
}

std::vector<FrontCurve> extract_front(const LevelSetState& s) {
  std::vector<FrontCurve> out = extract_zero_contour(s.u);
  require(!out.empty(), "empty-front", "the level set has no zero crossing");
  return out;
}

std::pair<double, double> displacement_extremes(const TrajectoryFrame& frame,
                                                Vec2 n) {
  double lo = kInf, hi = -kInf;
  for (const auto& c : frame.fronts)
    for (const auto& p : c.pts) {
      double v = p.x * n.x + p.y * n.y;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  require(lo <= hi, "empty-front", "frame holds no front vertices");
  return {lo, hi};
}

double hausdorff_distance(const std::vector<FrontCurve>& fronts,
                          const std::vector<Vec2>& reference) {
  std::vector<Vec2> a;
  for (const auto& c : fronts) a.insert(a.end(), c.pts.begin(), c.pts.end());
  require(!a.empty() && !reference.empty(), "empty-front",
          "hausdorff distance needs two nonempty point sets");
  auto decimate = [](std::vector<Vec2> v) {
    const size_t cap = 1400;
    if (v.size() <= cap) return v;
    std::vector<Vec2> w;
    size_t stride = (v.size() + cap - 1) / cap;
    for (size_t k = 0; k < v.size(); k += stride) w.push_back(v[k]);
    return w;
  };
  std::vector<Vec2> b = reference;
  a = decimate(std::move(a));
  b = decimate(std::move(b));
  auto one_sided = [](const std::vector<Vec2>& from,
                      const std::vector<Vec2>& to) {
    double worst = 0;
    for (const auto& p : from) {
      double best = kInf;
      for (const auto& q : to)
        best = std::min(best, (p.x - q.x) * (p.x - q.x) +
                                  (p.y - q.y) * (p.y - q.y));
      worst = std::max(worst, best);
    }
    return std::sqrt(worst);
  };
  return std::max(one_sided(a, b), one_sided(b, a));
}

namespace {

bool grid_has_interface(const LevelSetState& s) {
  bool plus = false, minus = false;
  for (double v : s.u.data) {
    if (v >= 0) plus = true;
    if (v < 0) minus = true;
    if (plus && minus) return true;
  }
  return false;
}

bool near_open_boundary(const LevelSetState& s,
                        const std::vector<FrontCurve>& fronts) {
  const Grid2D& g = s.u;
  double x0 = g.origin.x, x1 = g.origin.x + (g.nx - 1) * g.h;
  double y0 = g.origin.y, y1 = g.origin.y + (g.ny - 1) * g.h;
  double pad = 2 * g.h;
  for (const auto& c : fronts)
    for (const auto& p : c.pts) {
      if (!s.periodic_x && (p.x < x0 + pad || p.x > x1 - pad)) return true;
      if (!s.periodic_y && (p.y < y0 + pad || p.y > y1 - pad)) return true;
    }
  return false;
}

}  // namespace

FrontTrajectory mcf_evolve(LevelSetState s, const Medium& m, double T_end,
                           double record_every) {
  require(record_every > 0, "degenerate-set",
          "record interval must be positive");
  require(T_end > s.t, "degenerate-set", "end time precedes the state time");
  FrontTrajectory traj;
  auto record = [&]() {
    TrajectoryFrame f;
    f.t = s.t;
    if (grid_has_interface(s)) f.fronts = extract_zero_contour(s.u);
    traj.frames.push_back(std::move(f));
  };
  record();
  if (traj.frames.back().fronts.empty()) {
    traj.extinct = true;
    return traj;
  }

  double dt_base = s.params.cfl_safety * cfl_limit(s);
  double next_rec = s.t + record_every;
  bool recorded_last = true;
  while (s.t < T_end - 1e-12) {
    double dt = std::min(dt_base, T_end - s.t);
    double inc = checked_step(s, m, dt, {0, 0});
    recorded_last = false;
    if (reinit_due(s)) {
      if (!reinitialize(s)) {
        traj.extinct = true;
        record();
        return traj;
      }
    }
    if (inc == 0.0) {
      traj.frozen_at = s.t;
      record();
      return traj;
    }
    if (s.t >= next_rec - 1e-12 || s.t >= T_end - 1e-12) {
      next_rec += record_every;
      if (!grid_has_interface(s)) {
        traj.extinct = true;
        record();
        return traj;
      }
      record();
      recorded_last = true;
      if (near_open_boundary(s, traj.frames.back().fronts)) {
        traj.hit_boundary = true;
        return traj;
      }
    }
  }
  if (!recorded_last) record();
  return traj;
}

namespace {

struct DispSeries {
  std::vector<double> ts, lo, hi;
  double lo_at(double t) const { return interp(ts, lo, t); }
  double hi_at(double t) const { return interp(ts, hi, t); }
  static double interp(const std::vector<double>& ts,
                       const std::vector<double>& vs, double t) {
    if (t <= ts.front()) return vs.front();
    if (t >= ts.back()) return vs.back();
    size_t k = std::lower_bound(ts.begin(), ts.end(), t) - ts.begin();
    double t0 = ts[k - 1], t1 = ts[k];
    double w = (t - t0) / (t1 - t0);
    return (1 - w) * vs[k - 1] + w * vs[k];
  }
};

}  // namespace

SpeedPair front_speed(const Medium& m, Vec2 n, double F, double T_end,
                      const SpeedOptions& opt) {
  double nn = std::hypot(n.x, n.y);
  require(nn > 0, "degenerate-set", "front normal must be nonzero");
  require(T_end >= 50, "degenerate-set",
          "speed horizon must cover at least 50 time units");
  require(opt.h > 0 && opt.h <= 0.25, "degenerate-set",
          "speed grid spacing out of range");
  Vec2 nu{n.x / nn, n.y / nn};

  // The run lives on a strip aligned with the front: grid x along n, grid y
  // along a perpendicular lattice vector q, so the field is exactly periodic
  // across the strip with period |q| and the strip can slide along n by
  // whole periods when the front approaches an end. Irrational normals
  // admit no such q.
  int qx = 0, qy = 0;
  require(rationalize_direction({-nu.y, nu.x}, qx, qy),
          "degenerate-set", "front_speed needs a rational front normal");
  double P = std::hypot(static_cast<double>(qx), static_cast<double>(qy));
  Vec2 ehat{qx / P, qy / P};
  Vec2 nhat{ehat.y, -ehat.x};
  if (nhat.x * nu.x + nhat.y * nu.y < 0) {
    ehat = {-ehat.x, -ehat.y};
    nhat = {-nhat.x, -nhat.y};
  }

  int sny = std::max(8, static_cast<int>(std::lround(P / opt.h)));
  double h = P / sny;
  int marg = static_cast<int>(std::lround((2.0 + P) / h));
  int snx = 2 * marg + 1;
  Grid2D u0(snx, sny, h, {-marg * h, 0});
  for (int j = 0; j < sny; ++j)
    for (int i = 0; i < snx; ++i) u0.at(i, j) = -(u0.origin.x + i * h);
  LevelSetState s = make_level_set_state(std::move(u0), m, 1.0, F, false,
                                         true, {});
  s.world_ex = nhat;
  s.world_ey = ehat;
  double dt_base = s.params.cfl_safety * cfl_limit(s);

  // Re-seat the window on new x-extent [x0 + shift*h, ...] x [same y],
  // keeping overlapping columns (field and coefficient caches alike) and
  // extrapolating the rest. Slides pass shift = +-sny (one exact period)
  // and growth passes a widened node count.
  auto rewindow = [&](int shift, int new_nx) {
    Grid2D g2(new_nx, sny, h, {s.u.origin.x + shift * h, 0});
    std::vector<double> a2(g2.size()), cx2(g2.size()), cy2(g2.size());
    std::vector<unsigned char> ok2(g2.size(), 0);
    for (int j = 0; j < sny; ++j) {
      int lo_new = std::max(0, -shift);
      int hi_new = std::min(new_nx, s.u.nx - shift);  // copyable range
      for (int i = lo_new; i < hi_new; ++i) {
        size_t cn = static_cast<size_t>(j) * new_nx + i;
        size_t co = static_cast<size_t>(j) * s.u.nx + (i + shift);
        g2.data[cn] = s.u.data[co];
        a2[cn] = s.a_cache[co];
        cx2[cn] = s.cx_cache[co];
        cy2[cn] = s.cy_cache[co];
        ok2[cn] = s.cache_ok[co];
      }
      size_t row = static_cast<size_t>(j) * new_nx;
      for (int i = lo_new - 1; i >= 0; --i)
        g2.data[row + i] = 2 * g2.data[row + i + 1] - g2.data[row + i + 2];
      for (int i = hi_new; i < new_nx; ++i)
        g2.data[row + i] = 2 * g2.data[row + i - 1] - g2.data[row + i - 2];
    }
    s.u = std::move(g2);
    s.a_cache = std::move(a2);
    s.cx_cache = std::move(cx2);
    s.cy_cache = std::move(cy2);
    s.cache_ok = std::move(ok2);
  };

  DispSeries ser;
  double fmin = 0, fmax = 0;
  auto record = [&]() {
    fmin = kInf;
    fmax = -kInf;
    for (const FrontCurve& fc : extract_front(s))
      for (const Vec2& p : fc.pts) {
        fmin = std::min(fmin, p.x);
        fmax = std::max(fmax, p.x);
      }
    ser.ts.push_back(s.t);
    ser.lo.push_back(fmin);
    ser.hi.push_back(fmax);
  };
  record();

  double frozen_at = -1;
  double next_rec = opt.record_dt;
  double conv_floor = std::max(opt.min_time, 0.04 * T_end);
  while (s.t < T_end - 1e-12) {
    double dt = std::min(dt_base, T_end - s.t);
    double inc = checked_step(s, m, dt, {0, 0});
    if (reinit_due(s)) reinitialize(s);
    if (s.t < next_rec - 1e-12 && s.t < T_end - 1e-12) continue;
    next_rec += opt.record_dt;
    record();
    if (inc == 0.0) {
      frozen_at = s.t;
      break;
    }
    // keep a guard margin between the front and both strip ends
    double guard = 1.0 + 0.5 * P;
    double x_lo = s.u.origin.x, x_hi = s.u.origin.x + (s.u.nx - 1) * h;
    if (x_hi - fmax < guard) {
      if (fmin - x_lo >= guard + P)
        rewindow(sny, s.u.nx);
      else if (static_cast<size_t>(s.u.nx + sny) * sny <= 4000000)
        rewindow(0, s.u.nx + sny);
      else
        fail("front-left-domain", "front spread beyond the tractable strip");
    } else if (fmin - x_lo < guard) {
      if (x_hi - fmax >= guard + P)
        rewindow(-sny, s.u.nx);
      else if (static_cast<size_t>(s.u.nx + sny) * sny <= 4000000)
        rewindow(-sny, s.u.nx + sny);
      else
        fail("front-left-domain", "front spread beyond the tractable strip");
    }
    double t = s.t;
    if (t >= 2 * opt.min_time) {
      // sub-cell displacement across half the horizon: the front is stalled
      double dlo = std::abs(ser.lo.back() - ser.lo_at(t / 2));
      double dhi = std::abs(ser.hi.back() - ser.hi_at(t / 2));
      if (std::max(dlo, dhi) < 0.3 * s.u.h) break;
    }
    if (t >= conv_floor) {
      // nested-window agreement of both speed estimates: converged
      auto rate = [&](const std::vector<double>& vs, double frac) {
        double t0 = frac * t;
        return (vs.back() - DispSeries::interp(ser.ts, vs, t0)) / (t - t0);
      };
      double l50 = rate(ser.lo, 0.5), l40 = rate(ser.lo, 0.4),
             l60 = rate(ser.lo, 0.6);
      double h50 = rate(ser.hi, 0.5), h40 = rate(ser.hi, 0.4),
             h60 = rate(ser.hi, 0.6);
      double spread_l = std::max({l40, l50, l60}) - std::min({l40, l50, l60});
      double spread_h = std::max({h40, h50, h60}) - std::min({h40, h50, h60});
      double scale = std::max(1.0, std::abs(l50) + std::abs(h50));
      if (spread_l <= opt.conv_tol * scale && spread_h <= opt.conv_tol * scale)
        break;
    }
  }

  // A frozen state stays put, so the full requested horizon applies to it.
  double T_hor = frozen_at >= 0 ? T_end : s.t;
  auto win = [&](const std::vector<double>& vs, double frac) {
    double t0 = frac * T_hor;
    double v1 = T_hor >= ser.ts.back() ? vs.back()
                                       : DispSeries::interp(ser.ts, vs, T_hor);
    return (v1 - DispSeries::interp(ser.ts, vs, t0)) / (T_hor - t0);
  };
  SpeedPair out;
  out.c_min = win(ser.lo, 0.5);
  out.c_max = win(ser.hi, 0.5);
  out.sensitivity = std::max(std::abs(win(ser.lo, 0.4) - win(ser.lo, 0.6)),
                             std::abs(win(ser.hi, 0.4) - win(ser.hi, 0.6)));
  out.window = T_hor / 2;
  out.frozen_at = frozen_at;
  return out;
}

std::pair<double, double> pinning_interval(const Medium& m, Vec2 n,
                                           double F_max, double tol,
                                           const SpeedOptions& opt) {
  require(F_max > 0, "degenerate-set", "forcing bracket must be positive");
  double floor = 0.6 * opt.h / opt.min_time;
  if (tol < floor) {
    char msg[160];
    std::snprintf(msg, sizeof msg,
                  "tolerance %.3g is below the speed resolution %.3g of the "
                  "chosen grid",
                  tol, floor);
    fail("degenerate-set", msg);
  }
  const double T = 50;
  auto threshold = [&](bool upper) {
    auto pinned = [&](double Fv) {
      SpeedPair p = front_speed(m, n, upper ? Fv : -Fv, T, opt);
      return upper ? p.c_max <= tol : p.c_min >= -tol;
    };
    if (!pinned(0)) return 0.0;
    if (pinned(F_max)) return F_max;
    double lo = 0, hi = F_max;
    while (hi - lo > tol) {
      double mid = 0.5 * (lo + hi);
      (pinned(mid) ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  };
  return {threshold(false), threshold(true)};
}

double mobility(const Medium& m, Vec2 n, double dF, const SpeedOptions& opt) {
  require(dF > 0, "degenerate-set", "forcing increment must be positive");
  const double T = 50;
  auto common_speed = [&](double Fv) {
    SpeedPair p = front_speed(m, n, Fv, T, opt);
    double spread = p.c_max - p.c_min;
    double tol = std::max(2e-3, 0.05 * std::max(std::abs(p.c_max),
                                                std::abs(p.c_min)));
    if (spread > tol) {
      char msg[200];
      std::snprintf(msg, sizeof msg,
                    "front speeds split at F = %.4g: c_* = %.5g, c^* = %.5g",
                    Fv, p.c_min, p.c_max);
      fail("speeds-disagree", msg);
    }
    return 0.5 * (p.c_min + p.c_max);
  };
  return (common_speed(dF) - common_speed(-dF)) / (2 * dF);
}

CompactSet disk_set(Vec2 center, double r, int samples) {
  require(r > 0 && samples >= 8, "degenerate-set", "disk needs r > 0");
  CompactSet k;
  k.inside = [center, r](Vec2 p) {
    return std::hypot(p.x - center.x, p.y - center.y) <= r;
  };
  for (int i = 0; i < samples; ++i) {
    double th = 2 * M_PI * i / samples;
    k.boundary.push_back(
        {center.x + r * std::cos(th), center.y + r * std::sin(th)});
  }
  return k;
}

CompactSet ellipse_set(Vec2 center, double a, double b, int samples) {
  require(a > 0 && b > 0 && samples >= 8, "degenerate-set",
          "ellipse needs positive semi-axes");
  CompactSet k;
  k.inside = [center, a, b](Vec2 p) {
    double qx = (p.x - center.x) / a, qy = (p.y - center.y) / b;
    return qx * qx + qy * qy <= 1;
  };
  for (int i = 0; i < samples; ++i) {
    double th = 2 * M_PI * i / samples;
    k.boundary.push_back(
        {center.x + a * std::cos(th), center.y + b * std::sin(th)});
  }
  return k;
}

CompactSet rounded_square_set(Vec2 center, double half, double corner,
                              int samples) {
  require(half > 0 && corner > 0 && corner < half, "degenerate-set",
          "rounded square needs 0 < corner < half");
  CompactSet k;
  double core = half - corner;
  k.inside = [center, core, corner](Vec2 p) {
    double dx = std::max(std::abs(p.x - center.x) - core, 0.0);
    double dy = std::max(std::abs(p.y - center.y) - core, 0.0);
    return std::hypot(dx, dy) <= corner;
  };
  // walk the boundary: four straight sides plus four quarter arcs
  int per_side = samples / 8;
  auto arc = [&](Vec2 c, double a0) {
    for (int i = 0; i < per_side; ++i) {
      double th = a0 + 0.5 * M_PI * i / per_side;
      k.boundary.push_back(
          {c.x + corner * std::cos(th), c.y + corner * std::sin(th)});
    }
  };
  auto side = [&](Vec2 from, Vec2 to) {
    for (int i = 0; i < per_side; ++i) {
      double w = double(i) / per_side;
      k.boundary.push_back(
          {from.x + w * (to.x - from.x), from.y + w * (to.y - from.y)});
    }
  };
  double cx = center.x, cy = center.y;
  side({cx + half, cy - core}, {cx + half, cy + core});
  arc({cx + core, cy + core}, 0);
  side({cx + core, cy + half}, {cx - core, cy + half});
  arc({cx - core, cy + core}, 0.5 * M_PI);
  side({cx - half, cy + core}, {cx - half, cy - core});
  arc({cx - core, cy - core}, M_PI);
  side({cx - core, cy - half}, {cx + core, cy - half});
  arc({cx + core, cy - core}, 1.5 * M_PI);
  return k;
}

DriftReport pinned_drift(const Medium& m, const CompactSet& K, double eps,
                         double F, double T_end, const DriftOptions& opt) {
  require(eps > 0 && T_end > 0, "degenerate-set",
          "pinned drift needs eps > 0 and T_end > 0");
  require(K.inside && K.boundary.size() >= 8, "degenerate-set",
          "shape needs an inside test and a sampled boundary");

  // inscribed-ball check at the boundary centroid (shapes here are convex)
  Vec2 cen{0, 0};
  for (const auto& p : K.boundary) {
    cen.x += p.x;
    cen.y += p.y;
  }
  cen.x /= K.boundary.size();
  cen.y /= K.boundary.size();
  double r_in = kInf;
  for (const auto& p : K.boundary)
    r_in = std::min(r_in, std::hypot(p.x - cen.x, p.y - cen.y));
  if (r_in < 5 * eps - 1e-9) {
    char msg[160];
    std::snprintf(msg, sizeof msg,
                  "shape holds a ball of radius %.3g but the diffuse scale "
                  "needs %.3g",
                  r_in, 5 * eps);
    fail("degenerate-set", msg);
  }

  // rescale to the cell frame y = x/eps, where the operator has eps = 1
  std::vector<Vec2> bnd;
  bnd.reserve(K.boundary.size());
  double lox = kInf, hix = -kInf, loy = kInf, hiy = -kInf;
  for (const auto& p : K.boundary) {
    Vec2 q{p.x / eps, p.y / eps};
    bnd.push_back(q);
    lox = std::min(lox, q.x);
    hix = std::max(hix, q.x);
    loy = std::min(loy, q.y);
    hiy = std::max(hiy, q.y);
  }
  auto inside_y = [&](Vec2 q) { return K.inside({q.x * eps, q.y * eps}); };
  double T_y = T_end / (eps * eps);

  const double h = opt.h;
  Vec2 origin{lox - opt.margin, loy - opt.margin};
  int nx = static_cast<int>(std::ceil((hix - lox + 2 * opt.margin) / h)) + 1;
  int ny = static_cast<int>(std::ceil((hiy - loy + 2 * opt.margin) / h)) + 1;
  require(static_cast<int64_t>(nx) * ny < 40'000'000, "degenerate-set",
          "drift window is too large for the chosen spacing");

  // signed Euclidean distance seeds by bisection along grid edges
  const double band_h = 12;
  double cap = (band_h + 4) * h;
  Grid2D u0(nx, ny, h, origin);
  {
    std::vector<double> d(u0.data.size(), kInf);
    std::vector<signed char> sgn(u0.data.size());
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        sgn[j * nx + i] = inside_y(u0.node(i, j)) ? 1 : -1;
    auto cross_seed = [&](int i0, int j0, int i1, int j1) {
      Vec2 a = u0.node(i0, j0), b = u0.node(i1, j1);
      bool ia = sgn[j0 * nx + i0] > 0;
      for (int it = 0; it < 30; ++it) {
        Vec2 mid{0.5 * (a.x + b.x), 0.5 * (a.y + b.y)};
        if (inside_y(mid) == ia)
          a = mid;
        else
          b = mid;
      }
      Vec2 xc{0.5 * (a.x + b.x), 0.5 * (a.y + b.y)};
      Vec2 pa = u0.node(i0, j0), pb = u0.node(i1, j1);
      int ca = j0 * nx + i0, cb = j1 * nx + i1;
      d[ca] = std::min(d[ca], std::hypot(pa.x - xc.x, pa.y - xc.y));
      d[cb] = std::min(d[cb], std::hypot(pb.x - xc.x, pb.y - xc.y));
    };
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        if (i + 1 < nx && sgn[j * nx + i] != sgn[j * nx + i + 1])
          cross_seed(i, j, i + 1, j);
        if (j + 1 < ny && sgn[j * nx + i] != sgn[(j + 1) * nx + i])
          cross_seed(i, j, i, j + 1);
        if (i + 1 < nx && j + 1 < ny &&
            sgn[j * nx + i] != sgn[(j + 1) * nx + i + 1])
          cross_seed(i, j, i + 1, j + 1);
      }
    bool any = false;
    for (double v : d)
      if (v < kInf) any = true;
    require(any, "degenerate-set", "shape boundary misses the drift window");
    euclid_march(d, nx, ny, h, false, false, cap);
    for (size_t c = 0; c < u0.data.size(); ++c)
      u0.data[c] = sgn[c] * std::min(d[c] < kInf ? d[c] : cap, cap);
  }

  McfParams params;
  params.band_halfwidth = band_h;
  LevelSetState s =
      make_level_set_state(std::move(u0), m, 1.0, F, false, false, params);

  DriftReport rep;
  // a vanished interface means the set died (all u < 0) or swallowed the
  // whole window on its way out (all u > 0)
  auto classify_vanished = [&]() {
    double umax = -kInf;
    for (double v : s.u.data) umax = std::max(umax, v);
    (umax > 0 ? rep.departed : rep.extinct) = true;
  };
  double dt_base = s.params.cfl_safety * cfl_limit(s);
  double next_rec = opt.record_every;
  std::vector<Vec2> prev_pts = bnd;
  double drift_y = 0;
  int recs = 0;
  while (s.t < T_y - 1e-12) {
    double dt = std::min(dt_base, T_y - s.t);
    double inc = checked_step(s, m, dt, {0, 0});
    if (reinit_due(s)) {
      if (!reinitialize(s)) {
        classify_vanished();
        break;
      }
    }
    if (inc == 0.0) {
      rep.frozen_at = s.t * eps * eps;
      break;
    }
    if (s.t < next_rec - 1e-12 && s.t < T_y - 1e-12) continue;
    next_rec += opt.record_every;
    recs += 1;
    if (!grid_has_interface(s)) {
      classify_vanished();
      break;
    }
    std::vector<FrontCurve> front = extract_zero_contour(s.u);
    drift_y = std::max(drift_y, hausdorff_distance(front, bnd));
    if (near_open_boundary(s, front)) {
      rep.departed = true;
      break;
    }
    // projected residual drift if the front keeps slowing down
    double step_move = hausdorff_distance(front, prev_pts);
    if (recs >= 5) {
      double proj = step_move / opt.record_every * (T_y - s.t);
      if (proj * eps < opt.stall_bound) {
        rep.projected_extra = proj * eps;
        break;
      }
    }
    prev_pts.clear();
    for (const auto& c : front)
      prev_pts.insert(prev_pts.end(), c.pts.begin(), c.pts.end());
  }
  rep.drift = drift_y * eps;
  return rep;
}

}  // namespace hf
