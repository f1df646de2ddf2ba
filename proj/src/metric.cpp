#include "heterofront/metric.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <queue>
#include <utility>
#include <vector>

namespace hf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSqrt2 = 1.4142135623730951;

// 5-point Gauss-Legendre nodes/weights on [0, 1].
const double kGX[5] = {0.046910077030668004, 0.23076534494715845, 0.5,
                       0.76923465505284155, 0.953089922969332};
const double kGW[5] = {0.11846344252809454, 0.23931433524968324,
                       0.28444444444444444, 0.23931433524968324,
                       0.11846344252809454};

double line_integral(const Medium& m, WeightKind k, Vec2 a, Vec2 b) {
  double len = dist(a, b);
  if (len == 0) return 0;
  double s = 0;
  for (int i = 0; i < 5; ++i) {
    Vec2 p = a + (b - a) * kGX[i];
    s += kGW[i] * weight_value(m, k, p);
  }
  return s * len;
}

// Uniform square grid in a rotated orthonormal frame; node (i, j) sits at
// origin + ex*(i*h) + ey*(j*h).
struct Frame {
  Vec2 origin{0, 0};
  Vec2 ex{1, 0}, ey{0, 1};
  double h = 0;
  int nx = 0, ny = 0;

  Vec2 pos(int i, int j) const { return origin + ex * (i * h) + ey * (j * h); }
  size_t idx(int i, int j) const {
    return static_cast<size_t>(j) * nx + i;
  }
  Vec2 local(Vec2 w) const {
    Vec2 d = w - origin;
    return {dot(d, ex), dot(d, ey)};
  }
  size_t size() const { return static_cast<size_t>(nx) * ny; }
};

double frame_interp(const Frame& fr, const std::vector<double>& u, Vec2 world) {
  Vec2 lc = fr.local(world);
  double fx = lc.x / fr.h, fy = lc.y / fr.h;
  int i = std::clamp(static_cast<int>(std::floor(fx)), 0, fr.nx - 2);
  int j = std::clamp(static_cast<int>(std::floor(fy)), 0, fr.ny - 2);
  double tx = std::clamp(fx - i, 0.0, 1.0), ty = std::clamp(fy - j, 0.0, 1.0);
  double v00 = u[fr.idx(i, j)], v10 = u[fr.idx(i + 1, j)];
  double v01 = u[fr.idx(i, j + 1)], v11 = u[fr.idx(i + 1, j + 1)];
  return (1 - tx) * (1 - ty) * v00 + tx * (1 - ty) * v10 +
         (1 - tx) * ty * v01 + tx * ty * v11;
}

// Planar-wave update over the triangle (node, axis neighbor at h, diagonal
// neighbor at h*sqrt(2)); exact for linear fronts under constant weight.
double tri_update(double ua, double ud, double w, double h) {
  double best = ua + w * h;
  best = std::min(best, ud + w * h * kSqrt2);
  double s = (ua - ud) / (w * h);
  if (s > 0 && s < 1.0 / kSqrt2) {
    double t = s / std::sqrt(1 - s * s);
    if (t < 1) {
      double cand = (1 - t) * ua + t * ud + w * h * std::sqrt(1 + t * t);
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

// First-arrival march from the seeded nodes (finite entries of u). The local
// solve scans all eight frozen neighbors through the four triangles incident
// to each axis direction.
std::vector<double> fmm_march(const Frame& fr,
                              const std::function<double(Vec2)>& weight,
                              std::vector<double> u) {
  const int nx = fr.nx, ny = fr.ny;
  std::vector<char> frozen(fr.size(), 0);
  std::vector<double> wcache(fr.size(), -1.0);
  auto wat = [&](int i, int j) {
    size_t id = fr.idx(i, j);
    if (wcache[id] < 0) wcache[id] = weight(fr.pos(i, j));
    return wcache[id];
  };

  std::priority_queue<HeapEntry, std::vector<HeapEntry>, std::greater<>> heap;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      if (u[fr.idx(i, j)] < kInf) heap.push({u[fr.idx(i, j)], i, j});

  const int ax[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};

  auto solve_node = [&](int i, int j) {
    double w0 = wat(i, j);
    double best = kInf;
    for (auto& d : ax) {
      int ia = i + d[0], ja = j + d[1];
      bool have_a = ia >= 0 && ia < nx && ja >= 0 && ja < ny &&
                    frozen[fr.idx(ia, ja)];
      double ua = have_a ? u[fr.idx(ia, ja)] : kInf;
      if (have_a) best = std::min(best, ua + w0 * fr.h);
      // the two diagonals flanking this axis
      int px = -d[1], py = d[0];
      for (int sgn = -1; sgn <= 1; sgn += 2) {
        int id = i + d[0] + sgn * px, jd = j + d[1] + sgn * py;
        if (id < 0 || id >= nx || jd < 0 || jd >= ny) continue;
        if (!frozen[fr.idx(id, jd)]) continue;
        double ud = u[fr.idx(id, jd)];
        if (have_a) {
          best = std::min(best, tri_update(ua, ud, w0, fr.h));
        } else {
          best = std::min(best, ud + w0 * fr.h * kSqrt2);
        }
      }
    }
    return best;
  };

  while (!heap.empty()) {
    HeapEntry e = heap.top();
    heap.pop();
    size_t id = fr.idx(e.i, e.j);
    if (frozen[id]) continue;
    if (e.v > u[id]) continue;  // stale entry
    frozen[id] = 1;
    for (int dj = -1; dj <= 1; ++dj)
      for (int di = -1; di <= 1; ++di) {
        if (di == 0 && dj == 0) continue;
        int i2 = e.i + di, j2 = e.j + dj;
        if (i2 < 0 || i2 >= nx || j2 < 0 || j2 >= ny) continue;
        size_t id2 = fr.idx(i2, j2);
        if (frozen[id2]) continue;
        double cand = solve_node(i2, j2);
        if (cand < u[id2]) {
          u[id2] = cand;
          heap.push({cand, i2, j2});
        }
      }
  }
  return u;
}

// Seed every node within `radius` of the source with the straight-segment
// cost; removes the first-order corner error at the point source.
void seed_ball(const Frame& fr, const Medium& m, WeightKind kind, Vec2 src,
               double radius, std::vector<double>& u) {
  Vec2 lc = fr.local(src);
  int i0 = static_cast<int>(std::floor((lc.x - radius) / fr.h));
  int i1 = static_cast<int>(std::ceil((lc.x + radius) / fr.h));
  int j0 = static_cast<int>(std::floor((lc.y - radius) / fr.h));
  int j1 = static_cast<int>(std::ceil((lc.y + radius) / fr.h));
  i0 = std::max(i0, 0);
  j0 = std::max(j0, 0);
  i1 = std::min(i1, fr.nx - 1);
  j1 = std::min(j1, fr.ny - 1);
  for (int j = j0; j <= j1; ++j)
    for (int i = i0; i <= i1; ++i) {
      Vec2 p = fr.pos(i, j);
      if (dist(p, src) > radius) continue;
      double val = line_integral(m, kind, src, p);
      size_t id = fr.idx(i, j);
      u[id] = std::min(u[id], val);
    }
}

// One strip solve: point source at x0, window [-pad, len+pad] along ex and
// [-width, width] along ey.
struct StripSolve {
  Frame fr;
  std::vector<double> u;
  double read(Vec2 world) const { return frame_interp(fr, u, world); }
};

StripSolve solve_strip(const Medium& m, WeightKind kind, Vec2 x0, Vec2 ex,
                       Vec2 ey, double len, double pad, double width,
                       double h) {
  StripSolve s;
  s.fr.ex = ex;
  s.fr.ey = ey;
  s.fr.h = h;
  s.fr.origin = x0 - ex * pad - ey * width;
  s.fr.nx = static_cast<int>(std::ceil((len + 2 * pad) / h)) + 1;
  s.fr.ny = static_cast<int>(std::ceil(2 * width / h)) + 1;
  s.u.assign(s.fr.size(), kInf);
  seed_ball(s.fr, m, kind, x0, 6 * h, s.u);
  auto w = [&](Vec2 p) { return weight_value(m, kind, p); };
  s.u = fmm_march(s.fr, w, std::move(s.u));
  return s;
}

// Steepest-descent polyline from `target` back to `src` on a solved field.
std::vector<Vec2> backtrace(const StripSolve& s, Vec2 src, Vec2 target) {
  std::vector<Vec2> path;
  Vec2 p = target;
  double step = s.fr.h * 0.5;
  int max_steps = static_cast<int>(
      8 * (s.fr.nx + s.fr.ny) + 1000);
  for (int k = 0; k < max_steps; ++k) {
    path.push_back(p);
    if (dist(p, src) < 8 * s.fr.h) break;
    Vec2 lc = s.fr.local(p);
    double fx = lc.x / s.fr.h, fy = lc.y / s.fr.h;
    int i = std::clamp(static_cast<int>(std::floor(fx)), 0, s.fr.nx - 2);
    int j = std::clamp(static_cast<int>(std::floor(fy)), 0, s.fr.ny - 2);
    double tx = std::clamp(fx - i, 0.0, 1.0), ty = std::clamp(fy - j, 0.0, 1.0);
    double v00 = s.u[s.fr.idx(i, j)], v10 = s.u[s.fr.idx(i + 1, j)];
    double v01 = s.u[s.fr.idx(i, j + 1)], v11 = s.u[s.fr.idx(i + 1, j + 1)];
    double gx = ((1 - ty) * (v10 - v00) + ty * (v11 - v01)) / s.fr.h;
    double gy = ((1 - tx) * (v01 - v00) + tx * (v11 - v10)) / s.fr.h;
    double gn = std::hypot(gx, gy);
    if (!(gn > 1e-14)) break;
    Vec2 dir = (s.fr.ex * gx + s.fr.ey * gy) * (1.0 / gn);
    p = p - dir * step;
  }
  path.push_back(src);
  std::reverse(path.begin(), path.end());
  return path;
}

struct RationalClass {
  int qx = 0, qy = 0;  // primitive integer vector along the geodesic
  double qlen = 0;
  Vec2 ehat;         // unit vector along (qx, qy)
  Vec2 nhat;         // unit normal
  double trans_period = 0;  // transversal period of the offset lattice
};

RationalClass geodesic_class(Vec2 n) {
  require(norm(n) > 0, "degenerate-set", "direction must be nonzero");
  Vec2 nh = normalized(n);
  RationalClass rc;
  rc.nhat = nh;
  Vec2 perp = rot90ccw(nh);
  if (rationalize_direction(perp, rc.qx, rc.qy)) {
    rc.qlen = std::hypot(static_cast<double>(rc.qx), static_cast<double>(rc.qy));
    rc.ehat = Vec2{rc.qx / rc.qlen, rc.qy / rc.qlen};
    rc.trans_period = 1.0 / rc.qlen;
  } else {
    rc.qx = rc.qy = 0;
    rc.qlen = 0;
    rc.ehat = perp;
    rc.trans_period = 1.0;
  }
  return rc;
}

double well(double u) {
  double t = 1 - u * u;
  return 0.25 * t * t;
}
double dwell(double u) { return u * u * u - u; }

}  // namespace

double weight_value(const Medium& m, WeightKind k, Vec2 x) {
  switch (k) {
    case WeightKind::potential:
      return m.value(x);
    case WeightKind::gradient:
      return 1.0 / m.value(x);
    case WeightKind::weight:
      return 1.0;
  }
  return 1.0;
}

double weight_min_bound(const Medium& m, WeightKind k) {
  switch (k) {
    case WeightKind::potential:
      return 1.0;
    case WeightKind::gradient:
      return 1.0 / m.lambda();
    case WeightKind::weight:
      return 1.0;
  }
  return 1.0;
}

double weight_max_bound(const Medium& m, WeightKind k) {
  switch (k) {
    case WeightKind::potential:
      return m.lambda();
    case WeightKind::gradient:
      return 1.0;
    case WeightKind::weight:
      return 1.0;
  }
  return 1.0;
}

bool rationalize_direction(Vec2 v, int& ix, int& iy, int maxden) {
  double n = std::max(std::abs(v.x), std::abs(v.y));
  if (!(n > 0)) return false;
  double ax = v.x / n, ay = v.y / n;
  for (int den = 1; den <= maxden; ++den) {
    double cx = ax * den, cy = ay * den;
    double rx = std::round(cx), ry = std::round(cy);
    if (std::abs(cx - rx) < 1e-7 * den && std::abs(cy - ry) < 1e-7 * den) {
      int gx = static_cast<int>(rx), gy = static_cast<int>(ry);
      int g = std::abs(std::gcd(gx, gy));
      if (g == 0) return false;
      ix = gx / g;
      iy = gy / g;
      return true;
    }
  }
  return false;
}

DistanceField eikonal_distance(const Medium& m, WeightKind kind,
                               const std::vector<Vec2>& sources,
                               const GridSpec& gs) {
  require(!sources.empty(), "empty-source", "no source points given");
  require(gs.nx >= 2 && gs.ny >= 2 && gs.h > 0, "degenerate-set",
          "solve window has no interior");
  Frame fr;
  fr.origin = gs.origin;
  fr.h = gs.h;
  fr.nx = gs.nx;
  fr.ny = gs.ny;
  std::vector<double> u(fr.size(), kInf);
  for (const Vec2& s : sources) seed_ball(fr, m, kind, s, 6 * gs.h, u);
  bool any = false;
  for (double v : u)
    if (v < kInf) any = true;
  require(any, "empty-source", "all source points fall outside the window");
  auto w = [&](Vec2 p) { return weight_value(m, kind, p); };
  u = fmm_march(fr, w, std::move(u));

  DistanceField df;
  df.grid = Grid2D(gs.nx, gs.ny, gs.h, gs.origin);
  df.grid.data = std::move(u);
  df.weight = kind;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu point sources", sources.size());
  df.source = buf;
  return df;
}

DistanceField signed_distance(const std::function<bool(Vec2)>& inside,
                              const Medium& m, const GridSpec& gs) {
  require(gs.nx >= 2 && gs.ny >= 2 && gs.h > 0, "degenerate-set",
          "solve window has no interior");
  Frame fr;
  fr.origin = gs.origin;
  fr.h = gs.h;
  fr.nx = gs.nx;
  fr.ny = gs.ny;
  std::vector<char> member(fr.size(), 0);
  for (int j = 0; j < gs.ny; ++j)
    for (int i = 0; i < gs.nx; ++i)
      member[fr.idx(i, j)] = inside(fr.pos(i, j)) ? 1 : 0;

  bool any_in = false, any_out = false;
  for (char c : member) (c ? any_in : any_out) = true;
  require(any_in && any_out, "degenerate-set",
          "set boundary does not meet the window");

  // Seed both sides of the interface with the cost to the bisected crossing.
  std::vector<double> u(fr.size(), kInf);
  auto seed_edge = [&](int i0, int j0, int i1, int j1) {
    char ma = member[fr.idx(i0, j0)], mb = member[fr.idx(i1, j1)];
    if (ma == mb) return;
    Vec2 a = fr.pos(i0, j0), b = fr.pos(i1, j1);
    double lo = 0, hi = 1;
    // invariant: membership(a + lo*(b-a)) == ma, differs at hi
    for (int it = 0; it < 30; ++it) {
      double mid = 0.5 * (lo + hi);
      if ((inside(a + (b - a) * mid) ? 1 : 0) == ma)
        lo = mid;
      else
        hi = mid;
    }
    Vec2 c = a + (b - a) * (0.5 * (lo + hi));
    size_t ia = fr.idx(i0, j0), ib = fr.idx(i1, j1);
    u[ia] = std::min(u[ia], line_integral(m, WeightKind::potential, a, c));
    u[ib] = std::min(u[ib], line_integral(m, WeightKind::potential, c, b));
  };
  for (int j = 0; j < gs.ny; ++j)
    for (int i = 0; i < gs.nx; ++i) {
      if (i + 1 < gs.nx) seed_edge(i, j, i + 1, j);
      if (j + 1 < gs.ny) seed_edge(i, j, i, j + 1);
      if (i + 1 < gs.nx && j + 1 < gs.ny) seed_edge(i, j, i + 1, j + 1);
    }

  auto w = [&](Vec2 p) { return weight_value(m, WeightKind::potential, p); };
  u = fmm_march(fr, w, std::move(u));
  for (size_t k = 0; k < u.size(); ++k)
    if (!member[k]) u[k] = -u[k];

  DistanceField df;
  df.grid = Grid2D(gs.nx, gs.ny, gs.h, gs.origin);
  df.grid.data = std::move(u);
  df.weight = WeightKind::potential;
  df.source = "set boundary";
  return df;
}

DistanceField signed_distance(const CubeSet& E, const Medium& m,
                              const GridSpec& gs) {
  require(!E.empty(), "degenerate-set", "cube set is empty");
  return signed_distance([&E](Vec2 p) { return E.covers(p); }, m, gs);
}

double point_distance(const Medium& m, WeightKind kind, Vec2 x, Vec2 y,
                      double h) {
  double d = dist(x, y);
  double pad = std::max(0.4 * d, 0.35) + 2 * h;
  Vec2 lo{std::min(x.x, y.x) - pad, std::min(x.y, y.y) - pad};
  Vec2 hi{std::max(x.x, y.x) + pad, std::max(x.y, y.y) + pad};
  // shift the window so the source sits exactly on a node
  lo.x = x.x - std::ceil((x.x - lo.x) / h) * h;
  lo.y = x.y - std::ceil((x.y - lo.y) / h) * h;
  GridSpec gs;
  gs.origin = lo;
  gs.h = h;
  gs.nx = static_cast<int>(std::ceil((hi.x - lo.x) / h)) + 1;
  gs.ny = static_cast<int>(std::ceil((hi.y - lo.y) / h)) + 1;
  DistanceField df = eikonal_distance(m, kind, {x}, gs);
  return df.grid.interp(y);
}

double dijkstra_oracle(const Medium& m, WeightKind kind, int refinement,
                       Vec2 x, Vec2 y, double h) {
  require(refinement == 8 || refinement == 16 || refinement == 32,
          "degenerate-set", "stencil refinement must be 8, 16 or 32");
  std::vector<std::pair<int, int>> offs = {{1, 0},  {-1, 0}, {0, 1},  {0, -1},
                                           {1, 1},  {1, -1}, {-1, 1}, {-1, -1}};
  if (refinement >= 16) {
    int kn[8][2] = {{1, 2},  {2, 1},  {-1, 2}, {-2, 1},
                    {1, -2}, {2, -1}, {-1, -2}, {-2, -1}};
    for (auto& k : kn) offs.push_back({k[0], k[1]});
  }
  if (refinement >= 32) {
    int th[16][2] = {{3, 1},  {1, 3},  {-3, 1}, {-1, 3}, {3, -1}, {1, -3},
                     {-3, -1}, {-1, -3}, {3, 2},  {2, 3},  {-3, 2}, {-2, 3},
                     {3, -2},  {2, -3},  {-3, -2}, {-2, -3}};
    for (auto& k : th) offs.push_back({k[0], k[1]});
  }

  double d = dist(x, y);
  double pad = std::max(0.35 * d, 0.3) + 4 * h;
  Frame fr;
  fr.h = h;
  fr.origin = {std::min(x.x, y.x) - pad, std::min(x.y, y.y) - pad};
  // put x exactly on a node
  double sx = (x.x - fr.origin.x) / h, sy = (x.y - fr.origin.y) / h;
  fr.origin = fr.origin + Vec2{(sx - std::floor(sx)) * h,
                               (sy - std::floor(sy)) * h};
  Vec2 hi{std::max(x.x, y.x) + pad, std::max(x.y, y.y) + pad};
  fr.nx = static_cast<int>(std::floor((hi.x - fr.origin.x) / h)) + 1;
  fr.ny = static_cast<int>(std::floor((hi.y - fr.origin.y) / h)) + 1;

  auto node_of = [&](Vec2 p) {
    int i = static_cast<int>(std::lround((p.x - fr.origin.x) / h));
    int j = static_cast<int>(std::lround((p.y - fr.origin.y) / h));
    i = std::clamp(i, 0, fr.nx - 1);
    j = std::clamp(j, 0, fr.ny - 1);
    return std::pair<int, int>{i, j};
  };
  auto [xi, xj] = node_of(x);
  auto [yi, yj] = node_of(y);

  std::vector<double> dval(fr.size(), kInf);
  std::vector<char> done(fr.size(), 0);
  std::priority_queue<HeapEntry, std::vector<HeapEntry>, std::greater<>> heap;
  dval[fr.idx(xi, xj)] = 0;
  heap.push({0, xi, xj});
  size_t target = fr.idx(yi, yj);
  while (!heap.empty()) {
    HeapEntry e = heap.top();
    heap.pop();
    size_t id = fr.idx(e.i, e.j);
    if (done[id]) continue;
    done[id] = 1;
    if (id == target) break;
    Vec2 p = fr.pos(e.i, e.j);
    for (auto& [di, dj] : offs) {
      int i2 = e.i + di, j2 = e.j + dj;
      if (i2 < 0 || i2 >= fr.nx || j2 < 0 || j2 >= fr.ny) continue;
      size_t id2 = fr.idx(i2, j2);
      if (done[id2]) continue;
      double cand = dval[id] + line_integral(m, kind, p, fr.pos(i2, j2));
      if (cand < dval[id2]) {
        dval[id2] = cand;
        heap.push({cand, i2, j2});
      }
    }
  }
  return dval[target];
}

SurfaceTensionEstimate surface_tension(const Medium& m, Vec2 n, double T,
                                       const SigmaOptions& opt) {
  require(T >= 8, "degenerate-set", "window must span at least eight periods");
  require(opt.offsets >= 1, "degenerate-set", "need at least one offset");
  RationalClass rc = geodesic_class(n);

  double len_full, len_half;
  Vec2 step_full, step_half;
  if (rc.qlen > 0) {
    int mm = std::max(2, static_cast<int>(std::lround(T / rc.qlen)));
    int mh = std::max(1, mm / 2);
    len_full = mm * rc.qlen;
    len_half = mh * rc.qlen;
    step_full = Vec2{static_cast<double>(rc.qx), static_cast<double>(rc.qy)} *
                static_cast<double>(mm);
    step_half = Vec2{static_cast<double>(rc.qx), static_cast<double>(rc.qy)} *
                static_cast<double>(mh);
  } else {
    len_full = T;
    len_half = T / 2;
    step_full = rc.ehat * len_full;
    step_half = rc.ehat * len_half;
  }

  double best_full = kInf, best_half = kInf;
  StripSolve best_solve;
  Vec2 best_x0{0, 0};
  for (int k = 0; k < opt.offsets; ++k) {
    double off = (k + 0.5) / opt.offsets * rc.trans_period;
    Vec2 x0 = rc.nhat * off;
    StripSolve s = solve_strip(m, opt.weight, x0, rc.ehat, rc.nhat, len_full,
                               0.75, opt.margin, opt.h);
    double df = s.read(x0 + step_full);
    double dh = s.read(x0 + step_half);
    best_half = std::min(best_half, dh / len_half);
    if (df / len_full < best_full) {
      best_full = df / len_full;
      best_solve = std::move(s);
      best_x0 = x0;
    }
  }

  SurfaceTensionEstimate est;
  est.n = rc.nhat;
  est.window = len_full;
  est.error_bar = std::abs(best_full - best_half);
  double lo = weight_min_bound(m, opt.weight);
  double hi = weight_max_bound(m, opt.weight);
  est.sigma = std::clamp(best_full, lo, hi);
  est.witness = backtrace(best_solve, best_x0, best_x0 + step_full);
  return est;
}

CornerWidthReport corner_width(const Medium& m, Vec2 n, double angle_step,
                               const SigmaOptions& opt) {
  require(angle_step > 0 && angle_step < 0.8, "degenerate-set",
          "angle step out of range");
  RationalClass rc = geodesic_class(n);
  require(rc.qlen > 0, "degenerate-set",
          "corner probe needs a rational direction");
  int px, py;
  bool ok = rationalize_direction(rc.nhat, px, py);
  require(ok, "degenerate-set", "corner probe needs a rational direction");
  Vec2 p{static_cast<double>(px), static_cast<double>(py)};
  double plen = norm(p);

  int mm = std::max(2, static_cast<int>(std::lround(plen / (angle_step * rc.qlen))));
  Vec2 q{static_cast<double>(rc.qx), static_cast<double>(rc.qy)};
  double len_full = 2 * mm * rc.qlen;

  // Targets at m and 2m periods, each straight and deflected by +-p; all six
  // read from the same per-offset solve so the source bias cancels in the
  // second differences.
  Vec2 tg[6] = {q * static_cast<double>(mm),
                q * static_cast<double>(mm) + p,
                q * static_cast<double>(mm) - p,
                q * static_cast<double>(2 * mm),
                q * static_cast<double>(2 * mm) + p,
                q * static_cast<double>(2 * mm) - p};
  double best[6] = {kInf, kInf, kInf, kInf, kInf, kInf};

  for (int k = 0; k < opt.offsets; ++k) {
    double off = (k + 0.5) / opt.offsets * rc.trans_period;
    Vec2 x0 = rc.nhat * off;
    StripSolve s = solve_strip(m, opt.weight, x0, rc.ehat, rc.nhat, len_full,
                               0.75, opt.margin + plen, opt.h);
    for (int t = 0; t < 6; ++t)
      best[t] = std::min(best[t], s.read(x0 + tg[t]));
  }

  CornerWidthReport rep;
  rep.m = mm;
  rep.qx = rc.qx;
  rep.qy = rc.qy;
  rep.px = px;
  rep.py = py;
  rep.width_m = best[1] + best[2] - 2 * best[0];
  rep.width_2m = best[4] + best[5] - 2 * best[3];
  rep.width = std::max(0.0, 2 * rep.width_2m - rep.width_m);
  return rep;
}

GapReport gap_detect(const Medium& m, Vec2 n, int resolution,
                     const SigmaOptions& opt) {
  require(resolution >= 2, "degenerate-set", "need at least two offsets");
  RationalClass rc = geodesic_class(n);
  require(rc.qlen > 0, "degenerate-set",
          "gap probe needs a rational direction");
  require(rc.qlen <= 8 + 1e-9, "degenerate-set",
          "geodesic class is too long for the probe");

  const int periods = 4;
  double len = periods * rc.qlen;
  Vec2 step = Vec2{static_cast<double>(rc.qx), static_cast<double>(rc.qy)} *
              static_cast<double>(periods);

  std::vector<double> cost(resolution, kInf);
  for (int k = 0; k < resolution; ++k) {
    double off = (k + 0.5) / resolution * rc.trans_period;
    Vec2 x0 = rc.nhat * off;
    StripSolve s = solve_strip(m, opt.weight, x0, rc.ehat, rc.nhat, len, 0.75,
                               opt.margin, opt.h);
    cost[k] = s.read(x0 + step) / len;
  }
  double cmin = *std::min_element(cost.begin(), cost.end());

  const int R = 96;
  std::vector<char> hit(static_cast<size_t>(R) * R, 0);
  double spacing = rc.trans_period / resolution;
  double infl = std::max(0.5 * spacing, opt.h) + 0.75 / R;
  int rad_cells = static_cast<int>(std::ceil(infl * R)) + 1;

  int kept = 0;
  for (int k = 0; k < resolution; ++k) {
    if (cost[k] > 1.01 * cmin) continue;
    ++kept;
    double off = (k + 0.5) / resolution * rc.trans_period;
    Vec2 x0 = rc.nhat * off;
    StripSolve s = solve_strip(m, opt.weight, x0, rc.ehat, rc.nhat, len, 0.75,
                               opt.margin, opt.h);
    std::vector<Vec2> path = backtrace(s, x0, x0 + step);
    for (const Vec2& wp : path) {
      Vec2 f{wp.x - std::floor(wp.x), wp.y - std::floor(wp.y)};
      int ci = static_cast<int>(f.x * R), cj = static_cast<int>(f.y * R);
      for (int dj = -rad_cells; dj <= rad_cells; ++dj)
        for (int di = -rad_cells; di <= rad_cells; ++di) {
          double cx = (ci + di + 0.5) / R, cy = (cj + dj + 0.5) / R;
          double dx = cx - f.x, dy = cy - f.y;
          dx -= std::round(dx);
          dy -= std::round(dy);
          if (dx * dx + dy * dy > infl * infl) continue;
          int ii = ((ci + di) % R + R) % R, jj = ((cj + dj) % R + R) % R;
          hit[static_cast<size_t>(jj) * R + ii] = 1;
        }
    }
  }

  GapReport rep;
  rep.n = rc.nhat;
  rep.min_cost = cmin;
  rep.kept = kept;
  rep.raster = R;
  for (int j = 0; j < R; ++j)
    for (int i = 0; i < R; ++i)
      if (!hit[static_cast<size_t>(j) * R + i]) rep.uncovered.push_back({i, j});
  rep.uncovered_fraction =
      static_cast<double>(rep.uncovered.size()) / (static_cast<double>(R) * R);
  return rep;
}

namespace {

// Energy of the relaxed diffuse profile over [-L, L]^2 with the interface
// normal to nhat pinned by the boundary data.
double relax_box(const Medium& theta, double delta, Vec2 nhat, double L,
                 const AcTensionOptions& opt) {
  double h0 = delta / opt.points_per_delta;
  int cells = std::max(8, static_cast<int>(std::lround(2 * L / h0)));
  double h = 2 * L / cells;
  int nn = cells + 1;

  std::vector<double> u(static_cast<size_t>(nn) * nn);
  std::vector<double> th(u.size());
  auto id = [nn](int i, int j) { return static_cast<size_t>(j) * nn + i; };
  for (int j = 0; j < nn; ++j)
    for (int i = 0; i < nn; ++i) {
      Vec2 p{-L + i * h, -L + j * h};
      th[id(i, j)] = theta.value(p);
      double s = dot(nhat, p);
      bool bdry = i == 0 || j == 0 || i == nn - 1 || j == nn - 1;
      u[id(i, j)] = bdry ? -std::tanh(s) : -std::tanh(s / (delta * kSqrt2));
    }

  const double omega = 1.7;
  double resid = kInf;
  int sweep = 0;
  for (; sweep < opt.max_sweeps; ++sweep) {
    for (int parity = 0; parity < 2; ++parity) {
      for (int j = 1; j < nn - 1; ++j) {
        int i0 = 1 + ((j + parity) & 1);
        for (int i = i0; i < nn - 1; i += 2) {
          size_t c = id(i, j);
          double S = u[c - 1] + u[c + 1] + u[c - nn] + u[c + nn];
          double a = delta / (h * h), b = th[c] / delta;
          double v = u[c];
          // local Newton on a*(4v - S) + b*W'(v) = 0
          for (int it = 0; it < 2; ++it) {
            double f = a * (4 * v - S) + b * dwell(v);
            double fp = 4 * a + b * (3 * v * v - 1);
            v -= f / fp;
          }
          u[c] += omega * (v - u[c]);
        }
      }
    }
    if (sweep % 25 == 24) {
      resid = 0;
      for (int j = 1; j < nn - 1; ++j)
        for (int i = 1; i < nn - 1; ++i) {
          size_t c = id(i, j);
          double lap = (u[c - 1] + u[c + 1] + u[c - nn] + u[c + nn] - 4 * u[c]) /
                       (h * h);
          double r = -delta * lap + th[c] / delta * dwell(u[c]);
          resid = std::max(resid, std::abs(r));
        }
      if (resid <= opt.tol) break;
    }
  }
  if (resid > opt.tol) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "relaxation stalled at residual %.3e after %d sweeps (target "
                  "%.1e)",
                  resid, sweep, opt.tol);
    fail("non-convergence", buf);
  }

  double energy = 0;
  for (int j = 0; j < nn - 1; ++j)
    for (int i = 0; i < nn - 1; ++i) {
      size_t c = id(i, j);
      double gx = (u[c + 1] - u[c]) / h;
      double gy = (u[c + nn] - u[c]) / h;
      energy += h * h * (0.5 * delta * (gx * gx + gy * gy) +
                         th[c] / delta * well(u[c]));
    }
  return energy;
}

}  // namespace

SurfaceTensionEstimate ac_surface_tension(const Medium& theta, double delta,
                                          Vec2 n, double L,
                                          const AcTensionOptions& opt) {
  require(norm(n) > 0, "degenerate-set", "direction must be nonzero");
  require(delta > 0 && delta <= L / 20 + 1e-12, "degenerate-set",
          "interface width must not exceed a twentieth of the box");
  require(opt.points_per_delta >= 8, "degenerate-set",
          "need at least eight grid points per interface width");
  Vec2 nh = normalized(n);

  auto cut_length = [&](double boxL) {
    return 2 * boxL / std::max(std::abs(nh.x), std::abs(nh.y));
  };
  double e1 = relax_box(theta, delta, nh, L, opt);
  double e2 = relax_box(theta, delta, nh, 2 * L, opt);
  double s1 = e1 / cut_length(L);
  double s2 = e2 / cut_length(2 * L);

  SurfaceTensionEstimate est;
  est.n = nh;
  est.window = 2 * L;
  est.sigma = 2 * s2 - s1;
  est.error_bar = std::abs(s2 - s1);
  return est;
}

}  // namespace hf
