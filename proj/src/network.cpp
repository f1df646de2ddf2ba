#include "heterofront/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <limits>
#include <map>
#include <set>

#include "heterofront/errors.hpp"

namespace hf {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2 * kPi;

double positive_fmod(double x, double m) {
  double r = std::fmod(x, m);
  return r < 0 ? r + m : r;
}

Vec2 unit_at(double ang) { return {std::cos(ang), std::sin(ang)}; }

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// ChainPiece

Vec2 ChainPiece::at(double s, const NetworkGeometry* g) const {
  switch (kind) {
    case Kind::kArc:
      return center + radius * unit_at(phi0 + s * (phi1 - phi0));
    case Kind::kNodeCurve:
      require(g != nullptr, "incompatibility",
              "node-curve chain piece evaluated without network geometry");
      return g->curve_point(v, th0 + s * (th1 - th0));
    case Kind::kSegment:
      return p + s * (q - p);
  }
  return {};
}

Vec2 ChainPiece::tangent(double s, const NetworkGeometry* g) const {
  switch (kind) {
    case Kind::kArc: {
      double phi = phi0 + s * (phi1 - phi0);
      Vec2 ccw = rot90ccw(unit_at(phi));  // d/dphi of the circle point
      return phi1 >= phi0 ? ccw : -ccw;
    }
    case Kind::kNodeCurve: {
      require(g != nullptr, "incompatibility",
              "node-curve chain piece evaluated without network geometry");
      Vec2 ccw = g->curve_tangent(v, th0 + s * (th1 - th0));
      return th1 >= th0 ? ccw : -ccw;
    }
    case Kind::kSegment:
      return normalized(q - p);
  }
  return {};
}

Vec2 ChainPiece::normal(double s, const NetworkGeometry* g) const {
  // Outer normal of S; the set sits on the right of the travel direction.
  return rot90ccw(tangent(s, g));
}

double ChainPiece::kappa(double s, const NetworkGeometry* g) const {
  switch (kind) {
    case Kind::kArc:
      // Clockwise travel keeps S on the center side: locally convex.
      return phi1 < phi0 ? 1.0 / radius : -1.0 / radius;
    case Kind::kNodeCurve: {
      require(g != nullptr, "incompatibility",
              "node-curve chain piece evaluated without network geometry");
      double k = g->curve_kappa(th0 + s * (th1 - th0));
      // Counterclockwise travel puts S outside the hole: locally concave.
      return th1 >= th0 ? -k : k;
    }
    case Kind::kSegment:
      return 0.0;
  }
  return 0.0;
}

double ChainPiece::length(const NetworkGeometry* g) const {
  switch (kind) {
    case Kind::kArc:
      return radius * std::abs(phi1 - phi0);
    case Kind::kNodeCurve: {
      require(g != nullptr, "incompatibility",
              "node-curve chain piece evaluated without network geometry");
      double lo = std::min(th0, th1), hi = std::max(th0, th1);
      int n = 128;
      double len = 0;
      for (int k = 0; k < n; ++k) {
        double th = lo + (hi - lo) * (k + 0.5) / n;
        double rr = g->rho(th), dr = g->drho(th);
        len += std::sqrt(rr * rr + dr * dr) * (hi - lo) / n;
      }
      return len;
    }
    case Kind::kSegment:
      return dist(p, q);
  }
  return 0.0;
}

ChainPiece ChainPiece::reversed() const {
  ChainPiece r = *this;
  switch (kind) {
    case Kind::kArc:
      std::swap(r.phi0, r.phi1);
      break;
    case Kind::kNodeCurve:
      std::swap(r.th0, r.th1);
      break;
    case Kind::kSegment:
      std::swap(r.p, r.q);
      break;
  }
  return r;
}

ChainPiece ChainPiece::translated(Vec2 k) const {
  ChainPiece r = *this;
  r.center += k;
  r.v += k;
  r.p += k;
  r.q += k;
  return r;
}

ChainRun ChainRun::reversed() const {
  ChainRun r;
  r.closed = closed;
  for (auto it = pieces.rbegin(); it != pieces.rend(); ++it)
    r.pieces.push_back(it->reversed());
  return r;
}

ChainRun ChainRun::translated(Vec2 k) const {
  ChainRun r;
  r.closed = closed;
  for (const auto& pc : pieces) r.pieces.push_back(pc.translated(k));
  return r;
}

double LocalSupersolution::chain_length() const {
  double len = 0;
  for (const auto& run : chain)
    for (const auto& pc : run.pieces) len += pc.length(geomp());
  return len;
}

// ---------------------------------------------------------------------------
// NodeShape

double NodeShape::d(Vec2 x) const {
  if (kind == Kind::kCircle) return dist(x, v) - r0;
  double rmax = geom->r * (1 + std::abs(geom->b1));
  double s = dist(x, v);
  if (s > rmax + 3 * band + 0.05) return s - rmax;  // sign-correct far field
  return geom->project(v, x).d;
}

double NodeShape::theta_of(Vec2 x) const {
  if (kind == Kind::kCircle) return std::atan2(x.y - v.y, x.x - v.x);
  return geom->project(v, x).theta;
}

Vec2 NodeShape::boundary_point(double th) const {
  if (kind == Kind::kCircle) return v + r0 * unit_at(th);
  return geom->curve_point(v, th);
}

ChainPiece NodeShape::curve_piece(double a, double b) const {
  ChainPiece pc;
  if (kind == Kind::kCircle) {
    pc.kind = ChainPiece::Kind::kArc;
    pc.center = v;
    pc.radius = r0;
    pc.phi0 = a;
    pc.phi1 = b;
  } else {
    pc.kind = ChainPiece::Kind::kNodeCurve;
    pc.v = v;
    pc.th0 = a;
    pc.th1 = b;
  }
  return pc;
}

double NodeShape::max_extent() const {
  if (kind == Kind::kCircle) return r0 + band;
  return geom->r * (1 + std::abs(geom->b1)) + band;
}

// ---------------------------------------------------------------------------
// Membership layers and the composed oracle

struct Layer {
  Vec2 box_lo, box_hi;  // quick reject over the coverage region
  std::function<bool(Vec2)> covers;  // closure of the localization
  std::function<bool(Vec2)> member;  // S membership, consulted when covered
};

struct MembershipLayers {
  std::vector<Layer> layers;
  // Chain fallback for points no layer covers: the point belongs to S when
  // the nearest chain point sees it on the inner (right-of-travel) side.
  std::vector<ChainPiece> fallback_pieces;
  std::optional<NetworkGeometry> geom;
  bool empty_means_outside = true;  // no chain, no layer: not in S
};

namespace {

bool in_box(Vec2 x, Vec2 lo, Vec2 hi) {
  return x.x >= lo.x && x.x <= hi.x && x.y >= lo.y && x.y <= hi.y;
}

// Nearest point (parameter) of one chain piece; returns squared distance.
double piece_nearest(const ChainPiece& pc, const NetworkGeometry* g, Vec2 x,
                     double& s_best) {
  switch (pc.kind) {
    case ChainPiece::Kind::kSegment: {
      Vec2 ab = pc.q - pc.p;
      double den = norm2(ab);
      double t = den > 0 ? dot(x - pc.p, ab) / den : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      s_best = t;
      return norm2(x - (pc.p + t * ab));
    }
    case ChainPiece::Kind::kArc: {
      double lo = std::min(pc.phi0, pc.phi1), hi = std::max(pc.phi0, pc.phi1);
      double phix = std::atan2(x.y - pc.center.y, x.x - pc.center.x);
      double best = std::numeric_limits<double>::infinity();
      s_best = 0;
      for (int k = -1; k <= 1; ++k) {
        double cand = phix + k * kTwoPi;
        if (cand >= lo && cand <= hi) {
          double s = (cand - pc.phi0) / (pc.phi1 - pc.phi0);
          double d2 = norm2(x - pc.at(s, g));
          if (d2 < best) {
            best = d2;
            s_best = s;
          }
        }
      }
      for (double s : {0.0, 1.0}) {
        double d2 = norm2(x - pc.at(s, g));
        if (d2 < best) {
          best = d2;
          s_best = s;
        }
      }
      return best;
    }
    case ChainPiece::Kind::kNodeCurve: {
      int n = 48;
      double best = std::numeric_limits<double>::infinity();
      double sb = 0;
      for (int k = 0; k <= n; ++k) {
        double s = double(k) / n;
        double d2 = norm2(x - pc.at(s, g));
        if (d2 < best) {
          best = d2;
          sb = s;
        }
      }
      double lo = std::max(0.0, sb - 1.5 / n), hi = std::min(1.0, sb + 1.5 / n);
      for (int it = 0; it < 60; ++it) {
        double m1 = lo + 0.382 * (hi - lo), m2 = lo + 0.618 * (hi - lo);
        if (norm2(x - pc.at(m1, g)) < norm2(x - pc.at(m2, g)))
          hi = m2;
        else
          lo = m1;
      }
      s_best = 0.5 * (lo + hi);
      return norm2(x - pc.at(s_best, g));
    }
  }
  return std::numeric_limits<double>::infinity();
}

bool chain_side_test(const std::vector<ChainPiece>& pieces,
                     const NetworkGeometry* g, Vec2 x) {
  double best = std::numeric_limits<double>::infinity();
  const ChainPiece* bp = nullptr;
  double bs = 0;
  for (const auto& pc : pieces) {
    double s;
    double d2 = piece_nearest(pc, g, x, s);
    if (d2 < best) {
      best = d2;
      bp = &pc;
      bs = s;
    }
  }
  if (!bp) return false;
  Vec2 foot = bp->at(bs, g);
  Vec2 n = bp->normal(bs, g);
  return dot(x - foot, n) <= 1e-12;
}

bool composed_in_S(const std::shared_ptr<const MembershipLayers>& ml, Vec2 x) {
  bool covered = false;
  for (const auto& layer : ml->layers) {
    if (!in_box(x, layer.box_lo, layer.box_hi)) continue;
    if (!layer.covers(x)) continue;
    covered = true;
    if (!layer.member(x)) return false;
  }
  if (covered) return true;
  if (ml->fallback_pieces.empty()) return !ml->empty_means_outside;
  return chain_side_test(ml->fallback_pieces, ml->geom ? &*ml->geom : nullptr,
                         x);
}

// Rebuilds the composed in_S closure and collects the fallback chain from
// the piece's runs.
void finalize_membership(LocalSupersolution& piece,
                         std::shared_ptr<MembershipLayers> ml) {
  ml->geom = piece.geom;
  for (const auto& run : piece.chain)
    for (const auto& pc : run.pieces) ml->fallback_pieces.push_back(pc);
  std::shared_ptr<const MembershipLayers> cml = std::move(ml);
  piece.layers = cml;
  piece.in_S = [cml](Vec2 x) { return composed_in_S(cml, x); };
}

Vec2 bbox_lo(const std::vector<Vec2>& pts, double pad) {
  Vec2 lo{std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
  for (auto p : pts) {
    lo.x = std::min(lo.x, p.x);
    lo.y = std::min(lo.y, p.y);
  }
  return lo - Vec2{pad, pad};
}

Vec2 bbox_hi(const std::vector<Vec2>& pts, double pad) {
  Vec2 hi{-std::numeric_limits<double>::infinity(),
          -std::numeric_limits<double>::infinity()};
  for (auto p : pts) {
    hi.x = std::max(hi.x, p.x);
    hi.y = std::max(hi.y, p.y);
  }
  return hi + Vec2{pad, pad};
}

double bbox_diag(const std::vector<Vec2>& pts) {
  if (pts.empty()) return 0;
  return dist(bbox_lo(pts, 0), bbox_hi(pts, 0));
}

// Drops candidate boundary samples that ended up interior to the open
// region; keeps points on the true topological boundary.
std::vector<Vec2> filter_boundary(const std::vector<Vec2>& cand,
                                  const std::function<bool(Vec2)>& in_open,
                                  const std::function<bool(Vec2)>& in_closed) {
  std::vector<Vec2> out;
  out.reserve(cand.size());
  for (auto x : cand)
    if (in_closed(x) && !in_open(x)) out.push_back(x);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// verify_piece

MarginReport verify_piece(const LocalSupersolution& piece, const Medium& medium,
                          double forcing, int samples) {
  const NetworkGeometry* g = piece.geomp();
  if (!g) g = medium.network();

  MarginReport rep;
  rep.forcing = forcing;
  rep.min_margin = std::numeric_limits<double>::infinity();
  rep.max_margin = -std::numeric_limits<double>::infinity();

  double total_len = 0;
  for (const auto& run : piece.chain)
    for (const auto& pc : run.pieces) total_len += pc.length(g);

  for (const auto& run : piece.chain) {
    for (const auto& pc : run.pieces) {
      double len = pc.length(g);
      int n = std::max(32, total_len > 0
                               ? int(std::lround(samples * len / total_len))
                               : 32);
      for (int k = 0; k < n; ++k) {
        double s = (k + 0.5) / n;
        Vec2 x = pc.at(s, g);
        MediumEval e = medium.eval(x, 1);
        double m = -e.a * pc.kappa(s, g) - dot(e.grad, pc.normal(s, g));
        if (m < rep.min_margin) {
          rep.min_margin = m;
          if (piece.subsolution) rep.worst = x;
        }
        if (m > rep.max_margin) {
          rep.max_margin = m;
          if (!piece.subsolution) rep.worst = x;
        }
        ++rep.samples;
      }
    }
  }

  rep.corners_ok = true;
  for (int r = 0; r < int(piece.chain.size()); ++r) {
    const auto& run = piece.chain[r];
    int np = int(run.pieces.size());
    for (int i = 0; i < np; ++i) {
      bool seam = i > 0 || run.closed;
      if (!seam) continue;
      const ChainPiece& prev = run.pieces[(i + np - 1) % np];
      const ChainPiece& next = run.pieces[i];
      Vec2 tin = prev.tangent(1.0, g);
      Vec2 tout = next.tangent(0.0, g);
      double cr = cross(tin, tout), dt = dot(tin, tout);
      if (std::abs(cr) <= 1e-9 && dt > 0) continue;  // smooth continuation
      CornerInfo c;
      c.where = next.at(0.0, g);
      c.turn = std::atan2(cr, dt);
      c.convex = cr < -1e-9;  // right turn: opens toward the set
      c.run = r;
      c.piece = i;
      rep.corners.push_back(c);
      if (!c.convex) rep.corners_ok = false;
    }
  }

  if (rep.samples == 0) {
    // Empty chain: boundary(S) does not meet U, the barrier is vacuous and
    // certifies at every forcing level.
    rep.certified = rep.corners_ok;
    return rep;
  }
  rep.certified = rep.corners_ok && (piece.subsolution
                                         ? rep.min_margin >= forcing
                                         : rep.max_margin <= -forcing);
  return rep;
}

// ---------------------------------------------------------------------------
// Synthetic pieces

LocalSupersolution make_disk_piece(Vec2 center, double radius, double band) {
  require(radius > 0 && band > 0 && band < radius, "infeasible-parameters",
          "disk piece needs 0 < band < radius");
  LocalSupersolution P;
  P.kind = LocalSupersolution::Kind::kEdge;
  ChainPiece pc;
  pc.kind = ChainPiece::Kind::kArc;
  pc.center = center;
  pc.radius = radius;
  pc.phi0 = kPi;
  pc.phi1 = -kPi;  // clockwise: the disk sits on the center side
  ChainRun run;
  run.closed = true;
  run.pieces = {pc};
  P.chain = {run};
  double R = radius, b = band;
  Vec2 c = center;
  P.in_S = [c, R](Vec2 x) { return dist(x, c) <= R; };
  P.in_U = [c, R, b](Vec2 x) { return std::abs(dist(x, c) - R) < b; };
  P.in_U_closure = [c, R, b](Vec2 x) { return std::abs(dist(x, c) - R) <= b; };
  P.in_fill = P.in_U;
  P.feature_size = band;
  P.u_diameter = 2 * (radius + band);
  for (int k = 0; k < 256; ++k) {
    double th = -kPi + kTwoPi * k / 256.0;
    P.u_boundary_samples.push_back(c + (R - b) * unit_at(th));
    P.u_boundary_samples.push_back(c + (R + b) * unit_at(th));
  }
  auto ml = std::make_shared<MembershipLayers>();
  Layer L;
  L.box_lo = c - Vec2{R + b, R + b};
  L.box_hi = c + Vec2{R + b, R + b};
  L.covers = P.in_U_closure;
  L.member = P.in_S;
  ml->layers.push_back(L);
  finalize_membership(P, ml);
  return P;
}

LocalSupersolution make_circle_node(Vec2 center, double r0, double band) {
  require(r0 > 0 && band > 0 && band < r0, "infeasible-parameters",
          "circle node needs 0 < band < r0");
  LocalSupersolution P;
  P.kind = LocalSupersolution::Kind::kNode;
  NodeShape ns;
  ns.kind = NodeShape::Kind::kCircle;
  ns.v = center;
  ns.r0 = r0;
  ns.band = band;
  P.node = ns;
  ChainRun run;
  run.closed = true;
  run.pieces = {ns.curve_piece(-kPi, kPi)};  // ccw: S outside the hole
  P.chain = {run};
  P.in_S = [ns](Vec2 x) { return ns.d(x) >= 0; };
  P.in_U = [ns](Vec2 x) { return std::abs(ns.d(x)) < ns.band; };
  P.in_U_closure = [ns](Vec2 x) { return std::abs(ns.d(x)) <= ns.band; };
  P.in_fill = [ns](Vec2 x) { return ns.d(x) < ns.band; };
  P.feature_size = band;
  P.u_diameter = 2 * (r0 + band);
  for (int k = 0; k < 256; ++k) {
    double th = -kPi + kTwoPi * k / 256.0;
    P.u_boundary_samples.push_back(center + (r0 - band) * unit_at(th));
    P.u_boundary_samples.push_back(center + (r0 + band) * unit_at(th));
  }
  auto ml = std::make_shared<MembershipLayers>();
  Layer L;
  double ext = r0 + band;
  L.box_lo = center - Vec2{ext, ext};
  L.box_hi = center + Vec2{ext, ext};
  L.covers = [ns](Vec2 x) { return ns.d(x) <= ns.band; };  // closed fill
  L.member = [ns](Vec2 x) { return ns.d(x) >= 0; };
  ml->layers.push_back(L);
  finalize_membership(P, ml);
  return P;
}

LocalSupersolution make_halfplane_edge(Vec2 n, double offset, Vec2 p0, Vec2 p1,
                                       double halfwidth) {
  Vec2 nh = normalized(n);
  require(halfwidth > 0 && dist(p0, p1) > 0, "infeasible-parameters",
          "half-plane edge needs positive width and a nonzero segment");
  require(std::abs(dot(p0, nh) - offset) < 1e-9 &&
              std::abs(dot(p1, nh) - offset) < 1e-9,
          "infeasible-parameters",
          "half-plane edge endpoints must lie on the front line");
  Vec2 tdir = normalized(p1 - p0);
  require(dot(tdir, rot90cw(nh)) > 0.999, "orientation-mismatch",
          "half-plane edge must travel with the set on its right");
  LocalSupersolution P;
  P.kind = LocalSupersolution::Kind::kEdge;
  ChainPiece pc;
  pc.kind = ChainPiece::Kind::kSegment;
  pc.p = p0;
  pc.q = p1;
  ChainRun run;
  run.closed = false;
  run.pieces = {pc};
  P.chain = {run};
  double L = dist(p0, p1), w = halfwidth, off = offset;
  P.in_S = [nh, off](Vec2 x) { return dot(x, nh) <= off; };
  auto coords = [nh, p0, tdir, off](Vec2 x, double& u, double& s) {
    u = dot(x - p0, tdir);
    s = dot(x, nh) - off;
  };
  P.in_U = [coords, L, w](Vec2 x) {
    double u, s;
    coords(x, u, s);
    return u > 0 && u < L && std::abs(s) < w;
  };
  P.in_U_closure = [coords, L, w](Vec2 x) {
    double u, s;
    coords(x, u, s);
    return u >= 0 && u <= L && std::abs(s) <= w;
  };
  P.in_fill = P.in_U;
  P.feature_size = std::min(L, halfwidth);
  P.u_diameter = std::sqrt(L * L + 4 * w * w);
  int nu = 128, nw = 32;
  for (int k = 0; k <= nu; ++k) {
    Vec2 base = p0 + (L * k / nu) * tdir;
    P.u_boundary_samples.push_back(base + w * nh);
    P.u_boundary_samples.push_back(base - w * nh);
  }
  for (int k = 0; k <= nw; ++k) {
    double s = -w + 2 * w * k / nw;
    P.u_boundary_samples.push_back(p0 + s * nh);
    P.u_boundary_samples.push_back(p1 + s * nh);
  }
  auto ml = std::make_shared<MembershipLayers>();
  Layer layer;
  layer.box_lo = bbox_lo(P.u_boundary_samples, 1e-9);
  layer.box_hi = bbox_hi(P.u_boundary_samples, 1e-9);
  layer.covers = P.in_U_closure;
  layer.member = P.in_S;
  ml->layers.push_back(layer);
  finalize_membership(P, ml);
  return P;
}

LocalSupersolution make_cube_piece(CellCoord cell) {
  LocalSupersolution P;
  P.kind = LocalSupersolution::Kind::kEdge;
  Vec2 lo{double(cell.i), double(cell.j)};
  Vec2 hi{double(cell.i + 1), double(cell.j + 1)};
  // boundary(S) does not meet the open cube: the chain is empty and the
  // piece is a barrier at every forcing level.
  P.in_S = [lo, hi](Vec2 x) { return in_box(x, lo, hi); };
  P.in_U = [lo, hi](Vec2 x) {
    return x.x > lo.x && x.x < hi.x && x.y > lo.y && x.y < hi.y;
  };
  P.in_U_closure = P.in_S;
  P.in_fill = P.in_U;
  P.feature_size = 1.0;
  P.u_diameter = std::sqrt(2.0);
  int n = 32;
  for (int k = 0; k <= n; ++k) {
    double t = double(k) / n;
    P.u_boundary_samples.push_back({lo.x + t, lo.y});
    P.u_boundary_samples.push_back({lo.x + t, hi.y});
    P.u_boundary_samples.push_back({lo.x, lo.y + t});
    P.u_boundary_samples.push_back({hi.x, lo.y + t});
  }
  auto ml = std::make_shared<MembershipLayers>();
  Layer layer;
  layer.box_lo = lo;
  layer.box_hi = hi;
  layer.covers = P.in_S;
  layer.member = [](Vec2) { return true; };
  ml->layers.push_back(layer);
  finalize_membership(P, ml);
  return P;
}

// ---------------------------------------------------------------------------
// Canonical lattice pieces

namespace {

LocalSupersolution make_lattice_node(const Medium& medium, Vec2 v) {
  const NetworkGeometry* g = medium.network();
  require(g != nullptr, "incompatibility",
          "medium carries no hole network; node pieces need a pinning medium");
  LocalSupersolution P;
  P.kind = LocalSupersolution::Kind::kNode;
  P.geom = *g;
  NodeShape ns;
  ns.kind = NodeShape::Kind::kLattice;
  ns.v = v;
  ns.band = g->zeta;
  ns.geom = *g;
  P.node = ns;
  ChainRun run;
  run.closed = true;
  run.pieces = {ns.curve_piece(-kPi, kPi)};  // ccw: S outside the hole
  P.chain = {run};
  P.in_S = [ns](Vec2 x) { return ns.d(x) >= 0; };
  P.in_U = [ns](Vec2 x) { return std::abs(ns.d(x)) < ns.band; };
  P.in_U_closure = [ns](Vec2 x) { return std::abs(ns.d(x)) <= ns.band; };
  P.in_fill = [ns](Vec2 x) { return ns.d(x) < ns.band; };
  P.feature_size = ns.band;
  P.u_diameter = 2 * ns.max_extent();
  for (int k = 0; k < 256; ++k) {
    double th = -kPi + kTwoPi * k / 256.0;
    NodeProjection pr = g->project(v, g->curve_point(v, th));
    Vec2 base = g->curve_point(v, th);
    P.u_boundary_samples.push_back(base + ns.band * pr.grad);
    P.u_boundary_samples.push_back(base - ns.band * pr.grad);
  }
  auto ml = std::make_shared<MembershipLayers>();
  Layer layer;
  double ext = ns.max_extent();
  layer.box_lo = v - Vec2{ext, ext};
  layer.box_hi = v + Vec2{ext, ext};
  layer.covers = [ns](Vec2 x) { return ns.d(x) <= ns.band; };  // closed fill
  layer.member = [ns](Vec2 x) { return ns.d(x) >= 0; };
  ml->layers.push_back(layer);
  finalize_membership(P, ml);
  return P;
}

// Angle along the arc where the level d_vertex = -2 zeta is crossed,
// searching from the vertex endpoint toward the far end.
double trim_angle(const NetworkGeometry& g, const ArcSpec& spec, Vec2 vertex,
                  double from_ang, double to_ang) {
  double target = -2 * g.zeta;
  auto dv = [&](double ang) { return g.project(vertex, spec.point(ang)).d; };
  double prev = from_ang, dprev = dv(from_ang);
  require(dprev < target, "incompatibility",
          "arc endpoint is not inside the node hole");
  int K = 512;
  for (int k = 1; k <= K; ++k) {
    double ang = from_ang + (to_ang - from_ang) * k / double(K);
    double dc = dv(ang);
    if (dc >= target) {
      double lo = prev, hi = ang;
      for (int it = 0; it < 90; ++it) {
        double mid = 0.5 * (lo + hi);
        if (dv(mid) >= target)
          hi = mid;
        else
          lo = mid;
      }
      return 0.5 * (lo + hi);
    }
    prev = ang;
    dprev = dc;
  }
  fail("incompatibility", "arc never leaves the node hole");
}

LocalSupersolution make_lattice_edge(const Medium& medium, Vec2 tail,
                                     Vec2 head) {
  const NetworkGeometry* g = medium.network();
  require(g != nullptr, "incompatibility",
          "medium carries no hole network; edge pieces need a pinning medium");
  Vec2 u = head - tail;
  require(std::abs(norm(u) - 1.0) < 1e-12 &&
              std::abs(u.x * u.y) < 1e-12,
          "incompatibility", "edge must be a unit lattice step");

  ArcSpec spec = g->arc_for_edge(tail, head);
  double phi_a = trim_angle(*g, spec, tail, spec.ang_tail, spec.ang_head);
  double phi_b = trim_angle(*g, spec, head, spec.ang_head, spec.ang_tail);
  require(phi_b < phi_a, "incompatibility", "arc trims out of order");

  LocalSupersolution P;
  P.kind = LocalSupersolution::Kind::kEdge;
  P.geom = *g;
  ChainPiece pc;
  pc.kind = ChainPiece::Kind::kArc;
  pc.center = spec.center;
  pc.radius = spec.radius;
  pc.phi0 = phi_a;  // clockwise travel tail -> head, S on the center side
  pc.phi1 = phi_b;
  ChainRun run;
  run.closed = false;
  run.pieces = {pc};
  P.chain = {run};

  // Localization in the edge frame (tail at the origin, head at (1, 0)):
  // the solid region between the slightly lowered chord and the arc, plus a
  // tube of half-width w around the trimmed arc with flat radial caps.
  Vec2 e = u;  // exact unit frame axis
  Vec2 c0{0.5, -g->t};
  double R = g->R;
  double w = g->zeta / 2;
  double x_lo = g->rho(0) + g->zeta / 2;
  double x_hi = 1.0 - x_lo;
  auto to_local = [tail, e](Vec2 xw) {
    Vec2 d = xw - tail;
    return Vec2{dot(d, e), dot(d, rot90ccw(e))};
  };
  Vec2 lp_a = to_local(spec.point(phi_a));
  Vec2 lp_b = to_local(spec.point(phi_b));
  double la = std::atan2(lp_a.y - c0.y, lp_a.x - c0.x);
  double lb = std::atan2(lp_b.y - c0.y, lp_b.x - c0.x);
  require(lb < la, "incompatibility", "trimmed arc angles out of order");

  auto in_u_impl = [to_local, c0, R, w, x_lo, x_hi, la, lb](Vec2 xw,
                                                            bool closed) {
    Vec2 lp = to_local(xw);
    double dc = dist(lp, c0);
    bool solid, tube;
    if (closed) {
      solid = lp.x >= x_lo && lp.x <= x_hi && lp.y >= -w && dc <= R;
      double phi = std::atan2(lp.y - c0.y, lp.x - c0.x);
      tube = std::abs(dc - R) <= w && phi >= lb && phi <= la;
    } else {
      solid = lp.x > x_lo && lp.x < x_hi && lp.y > -w && dc < R;
      double phi = std::atan2(lp.y - c0.y, lp.x - c0.x);
      tube = std::abs(dc - R) < w && phi > lb && phi < la;
    }
    return solid || tube;
  };
  Vec2 cw = spec.center;
  P.in_S = [cw, R](Vec2 x) { return dist(x, cw) <= R; };
  P.in_U = [in_u_impl](Vec2 x) { return in_u_impl(x, false); };
  P.in_U_closure = [in_u_impl](Vec2 x) { return in_u_impl(x, true); };
  P.in_fill = P.in_U;
  P.feature_size = w;

  auto to_world = [tail, e](Vec2 lp) {
    return tail + lp.x * e + lp.y * rot90ccw(e);
  };
  std::vector<Vec2> cand;
  auto arc_y = [c0, R](double x) {
    return c0.y + std::sqrt(std::max(0.0, R * R - (x - c0.x) * (x - c0.x)));
  };
  for (int k = 0; k <= 200; ++k) {  // lowered chord
    double x = x_lo + (x_hi - x_lo) * k / 200.0;
    cand.push_back({x, -w});
  }
  for (int k = 0; k <= 40; ++k) {  // side walls up to the circle
    double ya = arc_y(x_lo), yb = arc_y(x_hi);
    cand.push_back({x_lo, -w + (ya + w) * k / 40.0});
    cand.push_back({x_hi, -w + (yb + w) * k / 40.0});
  }
  for (int k = 0; k <= 300; ++k) {  // circle between the walls
    double x = x_lo + (x_hi - x_lo) * k / 300.0;
    cand.push_back({x, arc_y(x)});
  }
  for (int k = 0; k <= 300; ++k) {  // tube offsets
    double phi = lb + (la - lb) * k / 300.0;
    cand.push_back(c0 + (R - w) * unit_at(phi));
    cand.push_back(c0 + (R + w) * unit_at(phi));
  }
  for (int k = 0; k <= 20; ++k) {  // flat tube caps
    double rr = R - w + 2 * w * k / 20.0;
    cand.push_back(c0 + rr * unit_at(la));
    cand.push_back(c0 + rr * unit_at(lb));
  }
  std::vector<Vec2> world_cand;
  world_cand.reserve(cand.size());
  for (auto lp : cand) world_cand.push_back(to_world(lp));
  P.u_boundary_samples = filter_boundary(world_cand, P.in_U, P.in_U_closure);
  P.u_diameter = bbox_diag(P.u_boundary_samples);

  auto ml = std::make_shared<MembershipLayers>();
  Layer layer;
  layer.box_lo = bbox_lo(P.u_boundary_samples, 1e-6);
  layer.box_hi = bbox_hi(P.u_boundary_samples, 1e-6);
  layer.covers = P.in_U_closure;
  layer.member = P.in_S;
  ml->layers.push_back(layer);
  finalize_membership(P, ml);
  return P;
}

}  // namespace

LocalSupersolution translated_piece(const LocalSupersolution& piece, Vec2 k) {
  LocalSupersolution P;
  P.kind = piece.kind;
  P.subsolution = piece.subsolution;
  for (const auto& run : piece.chain) P.chain.push_back(run.translated(k));
  P.geom = piece.geom;
  if (piece.node) {
    P.node = *piece.node;
    P.node->v += k;
  }
  auto shift = [k](std::function<bool(Vec2)> f) -> std::function<bool(Vec2)> {
    if (!f) return f;
    return [f = std::move(f), k](Vec2 x) { return f(x - k); };
  };
  P.in_S = shift(piece.in_S);
  P.in_U = shift(piece.in_U);
  P.in_U_closure = shift(piece.in_U_closure);
  P.in_fill = shift(piece.in_fill);
  P.feature_size = piece.feature_size;
  P.u_diameter = piece.u_diameter;
  P.u_boundary_samples.reserve(piece.u_boundary_samples.size());
  for (auto x : piece.u_boundary_samples) P.u_boundary_samples.push_back(x + k);
  if (piece.layers) {
    auto ml = std::make_shared<MembershipLayers>();
    for (const auto& layer : piece.layers->layers) {
      Layer t;
      t.box_lo = layer.box_lo + k;
      t.box_hi = layer.box_hi + k;
      t.covers = [f = layer.covers, k](Vec2 x) { return f(x - k); };
      t.member = [f = layer.member, k](Vec2 x) { return f(x - k); };
      ml->layers.push_back(t);
    }
    for (const auto& pc : piece.layers->fallback_pieces)
      ml->fallback_pieces.push_back(pc.translated(k));
    ml->geom = piece.layers->geom;
    ml->empty_means_outside = piece.layers->empty_means_outside;
    std::shared_ptr<const MembershipLayers> cml = std::move(ml);
    P.layers = cml;
    P.in_S = [cml](Vec2 x) { return composed_in_S(cml, x); };
  }
  return P;
}

// ---------------------------------------------------------------------------
// build_network

namespace {

// Minimum distance between two boundary sample clouds, plus an overlap test
// (no sample of one closure inside the other region's closure).
double cloud_separation(const std::vector<Vec2>& A, const std::vector<Vec2>& B,
                        const std::function<bool(Vec2)>& inA,
                        const std::function<bool(Vec2)>& inB, bool& overlap) {
  double best = std::numeric_limits<double>::infinity();
  for (auto a : A) {
    if (inB(a)) overlap = true;
    for (auto b : B) best = std::min(best, dist(a, b));
  }
  for (auto b : B)
    if (inA(b)) overlap = true;
  return best;
}

// Signed crossings of the node band by one chain: records of the chain
// passing d = 0 with the travel direction of d.
struct BandCrossing {
  int run = 0, piece = 0;
  double s = 0;
  Vec2 x;
  double theta = 0;
  int dir = 0;  // +1 leaving the hole, -1 entering it
};

std::vector<BandCrossing> find_band_crossings(const LocalSupersolution& P,
                                              const NodeShape& ns) {
  std::vector<BandCrossing> out;
  double reach = ns.max_extent() + 0.1;
  for (int r = 0; r < int(P.chain.size()); ++r) {
    const auto& run = P.chain[r];
    for (int i = 0; i < int(run.pieces.size()); ++i) {
      const ChainPiece& pc = run.pieces[i];
      // quick reject by sampled proximity
      bool near = false;
      for (int k = 0; k <= 8; ++k)
        if (dist(pc.at(k / 8.0, P.geomp()), ns.v) < reach) near = true;
      if (!near) continue;
      int n = 192;
      double sprev = 0, dprev = ns.d(pc.at(0.0, P.geomp()));
      for (int k = 1; k <= n; ++k) {
        double s = double(k) / n;
        double dc = ns.d(pc.at(s, P.geomp()));
        if ((dprev < 0) != (dc < 0)) {
          double lo = sprev, hi = s;
          for (int it = 0; it < 80; ++it) {
            double mid = 0.5 * (lo + hi);
            if ((ns.d(pc.at(mid, P.geomp())) < 0) == (dprev < 0))
              lo = mid;
            else
              hi = mid;
          }
          BandCrossing bc;
          bc.run = r;
          bc.piece = i;
          bc.s = 0.5 * (lo + hi);
          bc.x = pc.at(bc.s, P.geomp());
          bc.theta = ns.theta_of(bc.x);
          bc.dir = dprev < 0 ? +1 : -1;
          out.push_back(bc);
        }
        sprev = s;
        dprev = dc;
      }
    }
  }
  return out;
}

ChainPiece piece_sub(const ChainPiece& pc, double s0, double s1) {
  ChainPiece r = pc;
  switch (pc.kind) {
    case ChainPiece::Kind::kArc: {
      double a = pc.phi0 + s0 * (pc.phi1 - pc.phi0);
      double b = pc.phi0 + s1 * (pc.phi1 - pc.phi0);
      r.phi0 = a;
      r.phi1 = b;
      break;
    }
    case ChainPiece::Kind::kNodeCurve: {
      double a = pc.th0 + s0 * (pc.th1 - pc.th0);
      double b = pc.th0 + s1 * (pc.th1 - pc.th0);
      r.th0 = a;
      r.th1 = b;
      break;
    }
    case ChainPiece::Kind::kSegment: {
      Vec2 a = pc.at(s0, nullptr), b = pc.at(s1, nullptr);
      r.p = a;
      r.q = b;
      break;
    }
  }
  return r;
}

// Exact/scan intersection test between two chain pieces, restricted to the
// given parameter windows. Returns true when the curves meet.
bool pieces_intersect(const ChainPiece& P, double p0, double p1,
                      const ChainPiece& Q, double q0, double q1,
                      const NetworkGeometry* g) {
  using K = ChainPiece::Kind;
  auto in_win = [](double s, double a, double b) {
    return s >= a - 1e-12 && s <= b + 1e-12;
  };
  if (P.kind == K::kSegment && Q.kind == K::kSegment) {
    Vec2 a = P.at(p0, g), b = P.at(p1, g);
    Vec2 c = Q.at(q0, g), d = Q.at(q1, g);
    Vec2 ab = b - a, cd = d - c;
    double den = cross(ab, cd);
    if (std::abs(den) < 1e-15) return false;  // parallel: treated as clear
    double t = cross(c - a, cd) / den;
    double u = cross(c - a, ab) / den;
    return t >= -1e-12 && t <= 1 + 1e-12 && u >= -1e-12 && u <= 1 + 1e-12;
  }
  if (P.kind == K::kArc && Q.kind == K::kArc) {
    double d2 = norm2(Q.center - P.center);
    double d = std::sqrt(d2);
    if (d > P.radius + Q.radius || d < std::abs(P.radius - Q.radius) ||
        d < 1e-15)
      return false;
    double a = (d2 + P.radius * P.radius - Q.radius * Q.radius) / (2 * d);
    double h2 = P.radius * P.radius - a * a;
    if (h2 < 0) return false;
    double h = std::sqrt(h2);
    Vec2 mid = P.center + (a / d) * (Q.center - P.center);
    Vec2 off = (h / d) * rot90ccw(Q.center - P.center);
    for (Vec2 x : {mid + off, mid - off}) {
      double phiP = std::atan2(x.y - P.center.y, x.x - P.center.x);
      double phiQ = std::atan2(x.y - Q.center.y, x.x - Q.center.x);
      auto param = [&](const ChainPiece& pc, double phi, double& s) {
        double span = pc.phi1 - pc.phi0;
        for (int k = -1; k <= 1; ++k) {
          double cand = phi + k * kTwoPi;
          double ss = (cand - pc.phi0) / span;
          if (ss >= -1e-9 && ss <= 1 + 1e-9) {
            s = ss;
            return true;
          }
        }
        return false;
      };
      double sP, sQ;
      if (param(P, phiP, sP) && param(Q, phiQ, sQ) && in_win(sP, p0, p1) &&
          in_win(sQ, q0, q1))
        return true;
    }
    return false;
  }
  if ((P.kind == K::kArc && Q.kind == K::kSegment) ||
      (P.kind == K::kSegment && Q.kind == K::kArc)) {
    const ChainPiece& arc = P.kind == K::kArc ? P : Q;
    const ChainPiece& seg = P.kind == K::kArc ? Q : P;
    double a0 = P.kind == K::kArc ? p0 : q0, a1 = P.kind == K::kArc ? p1 : q1;
    double s0 = P.kind == K::kArc ? q0 : p0, s1 = P.kind == K::kArc ? q1 : p1;
    Vec2 a = seg.at(s0, g), b = seg.at(s1, g);
    Vec2 ab = b - a;
    double len2 = norm2(ab);
    if (len2 < 1e-24) return false;
    double t0 = dot(arc.center - a, ab) / len2;
    Vec2 foot = a + t0 * ab;
    double h2 = arc.radius * arc.radius - norm2(foot - arc.center);
    if (h2 < 0) return false;
    double dt = std::sqrt(h2 / len2);
    for (double t : {t0 - dt, t0 + dt}) {
      if (t < -1e-12 || t > 1 + 1e-12) continue;
      Vec2 x = a + t * ab;
      double phi = std::atan2(x.y - arc.center.y, x.x - arc.center.x);
      double span = arc.phi1 - arc.phi0;
      for (int k = -1; k <= 1; ++k) {
        double ss = (phi + k * kTwoPi - arc.phi0) / span;
        if (ss >= -1e-9 && ss <= 1 + 1e-9 && in_win(ss, a0, a1)) return true;
      }
    }
    return false;
  }
  // A node-curve participant: scan one curve against the other's nearest
  // distance, refine the closest approach, and call contact an intersection.
  int n = 256;
  double best = std::numeric_limits<double>::infinity();
  double sp_best = p0;
  for (int k = 0; k <= n; ++k) {
    double sp = p0 + (p1 - p0) * k / n;
    double sq;
    double d2 = piece_nearest(Q, g, P.at(sp, g), sq);
    if (d2 < best && in_win(sq, q0, q1)) {
      best = d2;
      sp_best = sp;
    }
  }
  double step = (p1 - p0) / n;
  double lo = std::max(p0, sp_best - 1.5 * step);
  double hi = std::min(p1, sp_best + 1.5 * step);
  for (int it = 0; it < 60; ++it) {
    double m1 = lo + 0.382 * (hi - lo), m2 = lo + 0.618 * (hi - lo);
    double s1, s2;
    double d1 = piece_nearest(Q, g, P.at(m1, g), s1);
    double d2 = piece_nearest(Q, g, P.at(m2, g), s2);
    if (d1 < d2)
      hi = m2;
    else
      lo = m1;
  }
  double sq;
  double d2 = piece_nearest(Q, g, P.at(0.5 * (lo + hi), g), sq);
  return d2 < 1e-14 && in_win(sq, q0, q1);
}

}  // namespace

LocalSupersolution SupersolutionNetwork::node_at(Vec2 v) const {
  if (v == Vec2{0, 0}) return node0;
  return translated_piece(node0, v);
}

LocalSupersolution SupersolutionNetwork::edge_at(Vec2 tail, Vec2 head) const {
  Vec2 u = head - tail;
  int dir = -1;
  if (u == Vec2{1, 0}) dir = 0;
  if (u == Vec2{0, 1}) dir = 1;
  if (u == Vec2{-1, 0}) dir = 2;
  if (u == Vec2{0, -1}) dir = 3;
  require(dir >= 0, "incompatibility", "edge must be a unit lattice step");
  if (tail == Vec2{0, 0}) return edge0[dir];
  return translated_piece(edge0[dir], tail);
}

SupersolutionNetwork build_network(const Medium& medium) {
  const NetworkGeometry* g = medium.network();
  require(g != nullptr, "incompatibility",
          "medium carries no hole network; build one with a pinning medium");

  SupersolutionNetwork net;
  net.medium = medium;
  net.node0 = make_lattice_node(medium, {0, 0});
  const Vec2 dirs[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  for (auto u : dirs)
    net.edge0.push_back(make_lattice_edge(medium, {0, 0}, u));

  // Uniform margin level.
  net.node_report = verify_piece(net.node0, medium, 0.0, 2000);
  double worst = net.node_report.max_margin;
  Vec2 worst_at = net.node_report.worst;
  for (const auto& e : net.edge0) {
    net.edge_reports.push_back(verify_piece(e, medium, 0.0, 2000));
    if (net.edge_reports.back().max_margin > worst) {
      worst = net.edge_reports.back().max_margin;
      worst_at = net.edge_reports.back().worst;
    }
  }
  require(net.node_report.corners_ok, "non-convex-corner",
          "node chain has a corner opening away from the set");
  net.F_a = -worst;
  require(net.F_a > 0, "margin-failure",
          fmt("no uniform margin: worst boundary margin %+.6f at (%.4f, %.4f)",
              worst, worst_at.x, worst_at.y));

  // Condition: node neighborhoods of distinct vertices stay disjoint.
  double rmax = g->r * (1 + std::abs(g->b1));
  require(2 * (rmax + g->zeta) < 1.0, "incompatibility",
          "node bands of adjacent vertices overlap");

  // Condition: localizations of distinct edges sharing a vertex have
  // disjoint closures. The eight directed arcs around the origin cover all
  // cases up to lattice symmetry; same-support pairs are exempt.
  struct DirectedEdge {
    Vec2 tail, head;
    const LocalSupersolution* piece;
    LocalSupersolution storage;
  };
  std::vector<DirectedEdge> around;
  for (auto u : dirs) {
    DirectedEdge de;
    de.tail = Vec2{0, 0};
    de.head = u;
    de.storage = net.edge_at(de.tail, de.head);
    around.push_back(std::move(de));
  }
  for (auto u : dirs) {
    DirectedEdge de;
    de.tail = -1.0 * u;
    de.head = Vec2{0, 0};
    de.storage = net.edge_at(de.tail, de.head);
    around.push_back(std::move(de));
  }
  auto same_support = [](const DirectedEdge& a, const DirectedEdge& b) {
    return (a.tail == b.tail && a.head == b.head) ||
           (a.tail == b.head && a.head == b.tail);
  };
  double min_sep = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < around.size(); ++i) {
    for (size_t j = i + 1; j < around.size(); ++j) {
      if (same_support(around[i], around[j])) continue;
      bool overlap = false;
      double sep = cloud_separation(
          around[i].storage.u_boundary_samples,
          around[j].storage.u_boundary_samples,
          around[i].storage.in_U_closure, around[j].storage.in_U_closure,
          overlap);
      require(!overlap, "incompatibility",
              "edge localizations sharing a vertex overlap");
      min_sep = std::min(min_sep, sep);
    }
  }
  net.min_edge_separation = min_sep;
  require(min_sep > 5e-3, "incompatibility",
          fmt("edge localizations sharing a vertex come within %.4f", min_sep));

  // Condition: edges with disjoint supports have disjoint closures. Bounding
  // boxes of the localizations shrink the search to nearby translates.
  double far_sep = std::numeric_limits<double>::infinity();
  for (int d0 = 0; d0 < 2; ++d0) {
    const auto& base = net.edge0[d0];
    Vec2 blo = bbox_lo(base.u_boundary_samples, 0);
    Vec2 bhi = bbox_hi(base.u_boundary_samples, 0);
    for (int dx = -2; dx <= 2; ++dx) {
      for (int dy = -2; dy <= 2; ++dy) {
        for (int d1 = 0; d1 < 4; ++d1) {
          Vec2 tail{double(dx), double(dy)};
          Vec2 head = tail + dirs[d1];
          bool adjacent = false;
          for (Vec2 a : {Vec2{0, 0}, dirs[d0]})
            for (Vec2 b : {tail, head})
              if (a == b) adjacent = true;
          if (adjacent) continue;
          LocalSupersolution other = net.edge_at(tail, head);
          Vec2 olo = bbox_lo(other.u_boundary_samples, 0);
          Vec2 ohi = bbox_hi(other.u_boundary_samples, 0);
          double gap = std::max(
              std::max(olo.x - bhi.x, blo.x - ohi.x),
              std::max(olo.y - bhi.y, blo.y - ohi.y));
          far_sep = std::min(far_sep, gap);
        }
      }
    }
  }
  net.min_far_separation = far_sep;
  require(far_sep > 0.1, "incompatibility",
          fmt("localizations of non-adjacent edges come within %.4f", far_sep));

  // Condition: every edge is admissibly incident at both endpoints,
  // outgoing at its tail and incoming at its head.
  for (int d = 0; d < 4; ++d) {
    const auto& e = net.edge0[d];
    NodeShape tail_ns = *net.node0.node;
    NodeShape head_ns = tail_ns;
    head_ns.v = dirs[d];
    auto at_tail = find_band_crossings(e, tail_ns);
    auto at_head = find_band_crossings(e, head_ns);
    require(at_tail.size() == 1 && at_head.size() == 1, "incidence-violation",
            "edge chain must cross each endpoint band exactly once");
    require(at_tail[0].dir == +1, "orientation-mismatch",
            "edge chain must leave its tail hole (outgoing)");
    require(at_head[0].dir == -1, "orientation-mismatch",
            "edge chain must enter its head hole (incoming)");
    // Full crossing: chain ends reach past the band on the hole side.
    const ChainPiece& pc = e.chain[0].pieces[0];
    require(tail_ns.d(pc.at(0.0, e.geomp())) < -tail_ns.band &&
                head_ns.d(pc.at(1.0, e.geomp())) < -head_ns.band,
            "incidence-violation", "edge chain stops inside a node band");
  }

  // Condition: the two node fills and the edge localization cover a
  // neighborhood of each lattice segment.
  for (int d = 0; d < 2; ++d) {
    const auto& e = net.edge0[d];
    LocalSupersolution far_node = net.node_at(dirs[d]);
    for (int k = 0; k <= 2000; ++k) {
      double t = double(k) / 2000.0;
      Vec2 base = t * dirs[d];
      for (Vec2 off : {Vec2{0, 0}, Vec2{-1e-7, 1e-7}, Vec2{1e-7, -1e-7}}) {
        Vec2 x = base + off;
        bool covered = net.node0.in_fill(x) || e.in_U(x) || far_node.in_fill(x);
        require(covered, "incompatibility",
                fmt("segment point (%.4f, %.4f) not covered by the fills",
                    x.x, x.y));
      }
    }
  }

  // Condition: uniformly bounded localization diameters.
  net.C = 8.0;
  require(net.node0.u_diameter <= net.C, "incompatibility",
          "node localization diameter exceeds the uniform constant");
  for (const auto& e : net.edge0)
    require(e.u_diameter <= net.C, "incompatibility",
            "edge localization diameter exceeds the uniform constant");

  return net;
}

// ---------------------------------------------------------------------------
// node_join

namespace {

struct SpliceData {
  BandCrossing cross;
  std::vector<ChainPiece> kept;  // trimmed chain, travel order preserved
};

// Trims the chain of an incoming piece at its band crossing (keeps the part
// before it) or of an outgoing piece (keeps the part after it).
SpliceData trim_at_crossing(const LocalSupersolution& P, const NodeShape& ns,
                            bool incoming) {
  auto crossings = find_band_crossings(P, ns);
  if (crossings.empty())
    fail("incidence-violation", "chain never crosses the node curve");
  if (crossings.size() > 1)
    fail("incidence-violation", "chain crosses the node curve more than once");
  SpliceData sd;
  sd.cross = crossings[0];
  if (incoming && sd.cross.dir != -1)
    fail("orientation-mismatch",
         "incoming chain must enter the hole at the node");
  if (!incoming && sd.cross.dir != +1)
    fail("orientation-mismatch",
         "outgoing chain must leave the hole at the node");
  const ChainRun& run = P.chain[sd.cross.run];
  require(!run.closed, "incidence-violation",
          "cannot splice a closed chain run through a node");
  // The crossing must be full: the terminal side finishes inside the hole
  // and the other side genuinely comes from outside the band.
  if (incoming) {
    Vec2 tail_end = run.pieces.back().at(1.0, P.geomp());
    require(ns.d(tail_end) < -ns.band, "incidence-violation",
            "incoming chain stops inside the node band");
    require(ns.d(run.pieces.front().at(0.0, P.geomp())) > ns.band,
            "incidence-violation",
            "incoming chain never leaves the node band");
    for (int i = 0; i < sd.cross.piece; ++i) sd.kept.push_back(run.pieces[i]);
    ChainPiece tail = piece_sub(run.pieces[sd.cross.piece], 0.0, sd.cross.s);
    if (sd.cross.s > 1e-12 || sd.kept.empty()) sd.kept.push_back(tail);
  } else {
    Vec2 head_start = run.pieces.front().at(0.0, P.geomp());
    require(ns.d(head_start) < -ns.band, "incidence-violation",
            "outgoing chain starts inside the node band");
    require(ns.d(run.pieces.back().at(1.0, P.geomp())) > ns.band,
            "incidence-violation",
            "outgoing chain never leaves the node band");
    ChainPiece head = piece_sub(run.pieces[sd.cross.piece], sd.cross.s, 1.0);
    if (sd.cross.s < 1 - 1e-12 ||
        sd.cross.piece + 1 == int(run.pieces.size()))
      sd.kept.push_back(head);
    for (int i = sd.cross.piece + 1; i < int(run.pieces.size()); ++i)
      sd.kept.push_back(run.pieces[i]);
  }
  return sd;
}

// Chain pieces within reach of the node, with their parameter windows
// clipped to the filled neighborhood, for the pairwise intersection test.
std::vector<std::pair<const ChainPiece*, std::pair<double, double>>>
pieces_near_node(const std::vector<ChainPiece>& pieces,
                 const NetworkGeometry* g, const NodeShape& ns) {
  std::vector<std::pair<const ChainPiece*, std::pair<double, double>>> out;
  double reach = ns.max_extent() + 0.05;
  for (const auto& pc : pieces) {
    double lo = 2, hi = -1;
    int n = 64;
    for (int k = 0; k <= n; ++k) {
      double s = double(k) / n;
      if (dist(pc.at(s, g), ns.v) <= reach) {
        lo = std::min(lo, s);
        hi = std::max(hi, s);
      }
    }
    if (hi >= lo) out.push_back({&pc, {std::max(0.0, lo - 1.0 / n),
                                       std::min(1.0, hi + 1.0 / n)}});
  }
  return out;
}

// Sector membership of the spliced node band: between the entry cut at
// theta_in and the exit cut at theta_in + delta (counterclockwise) the set
// is the outer band; near the cuts the incoming/outgoing pieces decide.
struct SectorLayer {
  NodeShape ns;
  double theta_in = 0, delta = 0, dtheta = 0.35;
  std::function<bool(Vec2)> in_S_in, in_S_out;

  bool member(Vec2 x) const {
    double dd = ns.d(x);
    if (dd < 0) return false;  // hole side stays carved out
    double rel = positive_fmod(ns.theta_of(x) - theta_in, kTwoPi);
    if (rel > dtheta && rel < delta - dtheta) return true;
    if (rel <= dtheta || rel >= kTwoPi - dtheta) return in_S_in(x);
    if (std::abs(rel - delta) <= dtheta) return in_S_out(x);
    return false;  // strictly outside the detour sector
  }
};

}  // namespace

LocalSupersolution node_join(const LocalSupersolution& incoming,
                             const LocalSupersolution& node,
                             const LocalSupersolution& outgoing) {
  require(node.kind == LocalSupersolution::Kind::kNode && node.node,
          "incompatibility", "node_join needs a node piece in the middle");
  require(!incoming.subsolution && !node.subsolution && !outgoing.subsolution,
          "incompatibility", "node_join operates on supersolution pieces");
  const NodeShape& ns = *node.node;

  SpliceData in_sd = trim_at_crossing(incoming, ns, true);
  SpliceData out_sd = trim_at_crossing(outgoing, ns, false);

  double theta_in = in_sd.cross.theta;
  double delta = positive_fmod(out_sd.cross.theta - theta_in, kTwoPi);
  require(delta > 0.75 && delta < kTwoPi - 0.05, "incidence-violation",
          "node crossings are too close to splice a detour between them");

  // The two edge chains may not intersect inside the node neighborhood.
  const NetworkGeometry* g = incoming.geomp() ? incoming.geomp()
                                              : outgoing.geomp();
  auto near_in = pieces_near_node(in_sd.kept, g, ns);
  auto near_out = pieces_near_node(out_sd.kept, g, ns);
  for (const auto& [pp, pw] : near_in) {
    for (const auto& [qp, qw] : near_out) {
      if (pieces_intersect(*pp, pw.first, pw.second, *qp, qw.first, qw.second,
                           g))
        fail("incidence-violation",
             "edge chains intersect inside the node neighborhood");
    }
  }

  ChainPiece detour = ns.curve_piece(theta_in, theta_in + delta);

  // Corner turning checks at the two splice points.
  {
    const ChainPiece& last_in = in_sd.kept.back();
    double cr = cross(last_in.tangent(1.0, g), detour.tangent(0.0, g));
    require(cr < 1e-9, "non-convex-corner",
            "entry splice corner opens away from the set");
    const ChainPiece& first_out = out_sd.kept.front();
    double cr2 = cross(detour.tangent(1.0, g), first_out.tangent(0.0, g));
    require(cr2 < 1e-9, "non-convex-corner",
            "exit splice corner opens away from the set");
  }

  LocalSupersolution J;
  J.kind = LocalSupersolution::Kind::kJoin;
  J.geom = incoming.geom ? incoming.geom
                         : (node.geom ? node.geom : outgoing.geom);

  // Untouched runs ride along; the crossing runs merge into one open run.
  for (int r = 0; r < int(incoming.chain.size()); ++r)
    if (r != in_sd.cross.run) J.chain.push_back(incoming.chain[r]);
  ChainRun spliced;
  spliced.closed = false;
  for (auto& pc : in_sd.kept) spliced.pieces.push_back(pc);
  spliced.pieces.push_back(detour);
  for (auto& pc : out_sd.kept) spliced.pieces.push_back(pc);
  J.chain.push_back(spliced);
  for (int r = 0; r < int(outgoing.chain.size()); ++r)
    if (r != out_sd.cross.run) J.chain.push_back(outgoing.chain[r]);

  // Membership: all incoming/outgoing layers, plus the spliced band layer.
  auto ml = std::make_shared<MembershipLayers>();
  if (incoming.layers)
    for (const auto& layer : incoming.layers->layers)
      ml->layers.push_back(layer);
  SectorLayer sec;
  sec.ns = ns;
  sec.theta_in = theta_in;
  sec.delta = delta;
  sec.in_S_in = incoming.in_S;
  sec.in_S_out = outgoing.in_S;
  Layer band;
  double ext = ns.max_extent();
  band.box_lo = ns.v - Vec2{ext, ext};
  band.box_hi = ns.v + Vec2{ext, ext};
  band.covers = [ns](Vec2 x) { return ns.d(x) <= ns.band; };
  band.member = [sec](Vec2 x) { return sec.member(x); };
  ml->layers.push_back(band);
  if (outgoing.layers)
    for (const auto& layer : outgoing.layers->layers)
      ml->layers.push_back(layer);

  auto in_U1 = incoming.in_U, in_U2 = outgoing.in_U;
  auto in_Uc1 = incoming.in_U_closure, in_Uc2 = outgoing.in_U_closure;
  auto fill1 = incoming.in_fill, fill2 = outgoing.in_fill;
  J.in_U = [in_U1, in_U2, ns](Vec2 x) {
    return in_U1(x) || ns.d(x) < ns.band || in_U2(x);
  };
  J.in_U_closure = [in_Uc1, in_Uc2, ns](Vec2 x) {
    return in_Uc1(x) || ns.d(x) <= ns.band || in_Uc2(x);
  };
  J.in_fill = [fill1, fill2, ns](Vec2 x) {
    return fill1(x) || ns.d(x) < ns.band || fill2(x);
  };
  J.feature_size = std::min({incoming.feature_size, node.feature_size,
                             outgoing.feature_size});
  std::vector<Vec2> cand = incoming.u_boundary_samples;
  cand.insert(cand.end(), node.u_boundary_samples.begin(),
              node.u_boundary_samples.end());
  cand.insert(cand.end(), outgoing.u_boundary_samples.begin(),
              outgoing.u_boundary_samples.end());
  J.u_boundary_samples = filter_boundary(cand, J.in_U, J.in_U_closure);
  J.u_diameter = bbox_diag(J.u_boundary_samples);
  finalize_membership(J, ml);
  return J;
}

// ---------------------------------------------------------------------------
// path_supersolution

LocalSupersolution path_supersolution(const LatticePath& path,
                                      const SupersolutionNetwork& net) {
  const auto& vs = path.vertices;
  require(int(vs.size()) >= 2, "incompatibility",
          "path needs at least two vertices");
  {
    std::set<std::pair<int, int>> seen;
    for (auto c : vs)
      require(seen.insert({c.i, c.j}).second, "non-simple-path",
              fmt("vertex (%d, %d) repeats", c.i, c.j));
  }
  auto vat = [&](int k) {
    const CellCoord& c = vs[size_t(k % int(vs.size()))];
    return Vec2{double(c.i), double(c.j)};
  };
  int n = int(vs.size());
  int nedges = path.closed ? n : n - 1;
  require(!path.closed || n >= 4, "incompatibility",
          "closed path needs at least four vertices");
  for (int i = 0; i < nedges; ++i) {
    Vec2 step = vat(i + 1) - vat(i);
    require(std::abs(norm(step) - 1.0) < 1e-12, "incompatibility",
            "path steps must be unit lattice moves");
  }

  LocalSupersolution sigma = net.edge_at(vat(0), vat(1));
  for (int i = 1; i < nedges; ++i) {
    LocalSupersolution nxt = net.edge_at(vat(i), vat(i + 1));
    sigma = node_join(sigma, net.node_at(vat(i)), nxt);
  }

  if (path.closed) {
    // Seam at the start vertex: the composed chain is one open run that
    // leaves the start hole near its beginning and re-enters it at the end.
    // Trim both tails at their crossings and close the run with a detour.
    LocalSupersolution nodep = net.node_at(vat(0));
    const NodeShape& ns = *nodep.node;
    auto crossings = find_band_crossings(sigma, ns);
    require(crossings.size() == 2, "incidence-violation",
            "closed path seam expects exactly two node curve crossings");
    const BandCrossing* out_c = nullptr;
    const BandCrossing* in_c = nullptr;
    for (const auto& bc : crossings) {
      if (bc.dir == +1) out_c = &bc;
      if (bc.dir == -1) in_c = &bc;
    }
    require(out_c && in_c && out_c->run == in_c->run, "orientation-mismatch",
            "closed path seam crossings have the wrong directions");
    const ChainRun& run = sigma.chain[out_c->run];
    require(!run.closed, "incidence-violation",
            "closed path seam expects an open composed run");
    require(out_c->piece < in_c->piece ||
                (out_c->piece == in_c->piece && out_c->s < in_c->s),
            "incidence-violation", "seam crossings out of order");

    ChainRun merged;
    merged.closed = true;
    if (out_c->piece == in_c->piece) {
      merged.pieces.push_back(
          piece_sub(run.pieces[out_c->piece], out_c->s, in_c->s));
    } else {
      if (out_c->s < 1 - 1e-12)
        merged.pieces.push_back(
            piece_sub(run.pieces[out_c->piece], out_c->s, 1.0));
      for (int i = out_c->piece + 1; i < in_c->piece; ++i)
        merged.pieces.push_back(run.pieces[i]);
      if (in_c->s > 1e-12)
        merged.pieces.push_back(
            piece_sub(run.pieces[in_c->piece], 0.0, in_c->s));
    }
    require(!merged.pieces.empty(), "incidence-violation",
            "seam trimming consumed the whole chain");

    double theta_in = in_c->theta;
    double delta = positive_fmod(out_c->theta - theta_in, kTwoPi);
    require(delta > 0.75 && delta < kTwoPi - 0.05, "incidence-violation",
            "seam crossings are too close to splice a detour between them");
    ChainPiece detour = ns.curve_piece(theta_in, theta_in + delta);
    const NetworkGeometry* g = sigma.geomp();
    {
      // The two seam tails may not cross inside the node localization.
      std::vector<ChainPiece> first{merged.pieces.front()};
      std::vector<ChainPiece> last{merged.pieces.back()};
      if (merged.pieces.size() > 1) {
        auto near_a = pieces_near_node(last, g, ns);
        auto near_b = pieces_near_node(first, g, ns);
        for (const auto& [pp, pw] : near_a)
          for (const auto& [qp, qw] : near_b)
            if (pieces_intersect(*pp, pw.first, pw.second, *qp, qw.first,
                                 qw.second, g))
              fail("incidence-violation",
                   "edge chains intersect inside the node neighborhood");
      }
    }
    require(cross(merged.pieces.back().tangent(1.0, g),
                  detour.tangent(0.0, g)) < 1e-9,
            "non-convex-corner", "seam entry corner opens away from the set");
    require(cross(detour.tangent(1.0, g),
                  merged.pieces.front().tangent(0.0, g)) < 1e-9,
            "non-convex-corner", "seam exit corner opens away from the set");
    merged.pieces.push_back(detour);

    LocalSupersolution closed_sigma;
    closed_sigma.kind = LocalSupersolution::Kind::kJoin;
    closed_sigma.geom = sigma.geom;
    for (int r = 0; r < int(sigma.chain.size()); ++r)
      if (r != out_c->run) closed_sigma.chain.push_back(sigma.chain[r]);
    closed_sigma.chain.push_back(merged);

    auto ml = std::make_shared<MembershipLayers>();
    if (sigma.layers)
      for (const auto& layer : sigma.layers->layers)
        ml->layers.push_back(layer);
    SectorLayer sec;
    sec.ns = ns;
    sec.theta_in = theta_in;
    sec.delta = delta;
    sec.in_S_in = sigma.in_S;
    sec.in_S_out = sigma.in_S;
    Layer band;
    double ext = ns.max_extent();
    band.box_lo = ns.v - Vec2{ext, ext};
    band.box_hi = ns.v + Vec2{ext, ext};
    band.covers = [ns](Vec2 x) { return ns.d(x) <= ns.band; };
    band.member = [sec](Vec2 x) { return sec.member(x); };
    ml->layers.push_back(band);

    auto in_U0 = sigma.in_U;
    auto in_Uc0 = sigma.in_U_closure;
    auto fill0 = sigma.in_fill;
    closed_sigma.in_U = [in_U0, ns](Vec2 x) {
      return in_U0(x) || ns.d(x) < ns.band;
    };
    closed_sigma.in_U_closure = [in_Uc0, ns](Vec2 x) {
      return in_Uc0(x) || ns.d(x) <= ns.band;
    };
    closed_sigma.in_fill = [fill0, ns](Vec2 x) {
      return fill0(x) || ns.d(x) < ns.band;
    };
    closed_sigma.feature_size =
        std::min(sigma.feature_size, nodep.feature_size);
    std::vector<Vec2> cand = sigma.u_boundary_samples;
    cand.insert(cand.end(), nodep.u_boundary_samples.begin(),
                nodep.u_boundary_samples.end());
    closed_sigma.u_boundary_samples =
        filter_boundary(cand, closed_sigma.in_U, closed_sigma.in_U_closure);
    closed_sigma.u_diameter = bbox_diag(closed_sigma.u_boundary_samples);
    finalize_membership(closed_sigma, ml);
    sigma = std::move(closed_sigma);
  }

  // Hausdorff control against the lattice path itself.
  std::vector<Vec2> chain_pts;
  for (const auto& run : sigma.chain)
    for (const auto& pc : run.pieces)
      for (int k = 0; k <= 24; ++k)
        chain_pts.push_back(pc.at(k / 24.0, sigma.geomp()));
  std::vector<Vec2> path_pts;
  for (int i = 0; i < nedges; ++i)
    for (int k = 0; k < 8; ++k)
      path_pts.push_back(vat(i) + (vat(i + 1) - vat(i)) * (k / 8.0));
  if (!path.closed) path_pts.push_back(vat(n - 1));
  double dh = hausdorff_distance(chain_pts, path_pts);
  require(dh <= net.C, "incompatibility",
          fmt("path barrier strays %.3f from the path, beyond the bound %.3f",
              dh, net.C));
  return sigma;
}

// ---------------------------------------------------------------------------
// edge_join

namespace {

// Parameters on P (strictly inside (0, 1)) where P meets Q. Exact formulas
// for segment/arc pairs; scanned closest approach when a node curve is
// involved.
std::vector<double> crossing_params(const ChainPiece& P, const ChainPiece& Q,
                                    const NetworkGeometry* g) {
  using K = ChainPiece::Kind;
  std::vector<double> out;
  auto push_if = [&out](double s) {
    if (s > 1e-9 && s < 1 - 1e-9) out.push_back(s);
  };
  if (P.kind == K::kSegment && Q.kind == K::kSegment) {
    Vec2 ab = P.q - P.p, cd = Q.q - Q.p;
    double den = cross(ab, cd);
    if (std::abs(den) < 1e-15) return out;
    double t = cross(Q.p - P.p, cd) / den;
    double u = cross(Q.p - P.p, ab) / den;
    if (u >= -1e-12 && u <= 1 + 1e-12) push_if(t);
    return out;
  }
  auto arc_params_at = [](const ChainPiece& arc, Vec2 x,
                          std::vector<double>& ss) {
    double phi = std::atan2(x.y - arc.center.y, x.x - arc.center.x);
    double span = arc.phi1 - arc.phi0;
    for (int k = -1; k <= 1; ++k) {
      double s = (phi + k * kTwoPi - arc.phi0) / span;
      if (s >= -1e-9 && s <= 1 + 1e-9) ss.push_back(s);
    }
  };
  if (P.kind == K::kArc && Q.kind == K::kArc) {
    double d2 = norm2(Q.center - P.center);
    double d = std::sqrt(d2);
    if (d > P.radius + Q.radius || d < std::abs(P.radius - Q.radius) ||
        d < 1e-15)
      return out;
    double a = (d2 + P.radius * P.radius - Q.radius * Q.radius) / (2 * d);
    double h2 = P.radius * P.radius - a * a;
    if (h2 < 0) return out;
    double h = std::sqrt(h2);
    Vec2 mid = P.center + (a / d) * (Q.center - P.center);
    Vec2 off = (h / d) * rot90ccw(Q.center - P.center);
    for (Vec2 x : {mid + off, mid - off}) {
      std::vector<double> sp, sq;
      arc_params_at(P, x, sp);
      arc_params_at(Q, x, sq);
      if (!sq.empty())
        for (double s : sp) push_if(s);
      if (h < 1e-15) break;  // tangent circles: one contact point
    }
    return out;
  }
  if ((P.kind == K::kArc && Q.kind == K::kSegment) ||
      (P.kind == K::kSegment && Q.kind == K::kArc)) {
    const ChainPiece& arc = P.kind == K::kArc ? P : Q;
    const ChainPiece& seg = P.kind == K::kArc ? Q : P;
    Vec2 ab = seg.q - seg.p;
    double len2 = norm2(ab);
    if (len2 < 1e-24) return out;
    double t0 = dot(arc.center - seg.p, ab) / len2;
    Vec2 foot = seg.p + t0 * ab;
    double h2 = arc.radius * arc.radius - norm2(foot - arc.center);
    if (h2 < 0) return out;
    double dt = std::sqrt(h2 / len2);
    for (double t : {t0 - dt, t0 + dt}) {
      if (t < -1e-12 || t > 1 + 1e-12) continue;
      Vec2 x = seg.p + t * ab;
      std::vector<double> sa;
      arc_params_at(arc, x, sa);
      if (P.kind == K::kArc) {
        for (double s : sa) push_if(s);
      } else if (!sa.empty()) {
        push_if(t);
      }
      if (dt < 1e-15) break;  // tangency
    }
    return out;
  }
  // Node-curve participant: scan for contact points.
  int n = 512;
  double prev_d2 = std::numeric_limits<double>::infinity();
  bool descending = false;
  for (int k = 0; k <= n; ++k) {
    double s = double(k) / n;
    double sq;
    double d2 = piece_nearest(Q, g, P.at(s, g), sq);
    if (d2 < prev_d2) {
      descending = true;
    } else if (descending) {
      // local minimum at k-1: refine
      double lo = std::max(0.0, double(k - 2) / n);
      double hi = s;
      for (int it = 0; it < 60; ++it) {
        double m1 = lo + 0.382 * (hi - lo), m2 = lo + 0.618 * (hi - lo);
        double t1, t2;
        if (piece_nearest(Q, g, P.at(m1, g), t1) <
            piece_nearest(Q, g, P.at(m2, g), t2))
          hi = m2;
        else
          lo = m1;
      }
      double sm = 0.5 * (lo + hi), st;
      if (piece_nearest(Q, g, P.at(sm, g), st) < 1e-14) push_if(sm);
      descending = false;
    }
    prev_d2 = d2;
  }
  return out;
}

}  // namespace

LocalSupersolution edge_join(const std::vector<LocalSupersolution>& pieces) {
  require(!pieces.empty(), "incompatibility",
          "edge_join needs at least one piece");
  for (const auto& p : pieces)
    require(!p.subsolution, "incompatibility",
            "edge_join operates on supersolution pieces");
  if (pieces.size() == 1) return pieces[0];

  const NetworkGeometry* g = nullptr;
  std::optional<NetworkGeometry> geom;
  for (const auto& p : pieces)
    if (p.geomp() && !g) {
      g = p.geomp();
      geom = p.geom;
    }

  // Patching hypothesis: near a boundary point of U_e that other pieces
  // cover, those pieces may not jointly re-admit points e excludes; the
  // patched set would otherwise grow a front absent from every chain.
  double rho = std::numeric_limits<double>::infinity();
  for (const auto& p : pieces) rho = std::min(rho, p.feature_size);
  require(rho > 0, "incompatibility", "piece with vanishing feature size");
  rho /= 8;
  for (size_t i = 0; i < pieces.size(); ++i) {
    const auto& e = pieces[i];
    for (Vec2 x0 : e.u_boundary_samples) {
      std::vector<size_t> coverers;
      for (size_t j = 0; j < pieces.size(); ++j)
        if (j != i && pieces[j].in_U(x0)) coverers.push_back(j);
      if (coverers.empty()) continue;
      for (int k = 0; k < 37; ++k) {
        Vec2 y = x0;
        if (k > 0) {
          int ring = (k - 1) / 12 + 1;
          int slot = (k - 1) % 12;
          y = x0 + (rho * ring / 3.0) * unit_at(kTwoPi * slot / 12.0);
        }
        if (!e.in_U_closure(y) || e.in_S(y)) continue;
        bool all_in = true;
        for (size_t j : coverers)
          if (!pieces[j].in_S(y)) {
            all_in = false;
            break;
          }
        if (all_in)
          fail("hypothesis-violation",
               fmt("patching hypothesis fails near (%.4f, %.4f)", x0.x,
                   x0.y));
      }
    }
  }

  // Chain of the patch: subdivide every piece's chain at crossings with the
  // other chains and at transitions of the other localizations, then keep
  // the parts the other pieces do not exclude.
  struct SubPiece {
    ChainPiece pc;
    Vec2 a, b;
  };
  std::vector<SubPiece> pool;
  for (size_t i = 0; i < pieces.size(); ++i) {
    const auto& e = pieces[i];
    for (const auto& run : e.chain) {
      for (const auto& pc : run.pieces) {
        std::vector<double> cuts{0.0, 1.0};
        for (size_t j = 0; j < pieces.size(); ++j) {
          if (j == i) continue;
          for (const auto& orun : pieces[j].chain)
            for (const auto& opc : orun.pieces)
              for (double s : crossing_params(pc, opc, g)) cuts.push_back(s);
          auto inside = [&](double s) {
            return pieces[j].in_U_closure(pc.at(s, g));
          };
          int n = 128;
          bool prev = inside(0.0);
          for (int k = 1; k <= n; ++k) {
            double s = double(k) / n;
            bool cur = inside(s);
            if (cur != prev) {
              double lo = double(k - 1) / n, hi = s;
              for (int it = 0; it < 60; ++it) {
                double mid = 0.5 * (lo + hi);
                if (inside(mid) == prev)
                  lo = mid;
                else
                  hi = mid;
              }
              cuts.push_back(0.5 * (lo + hi));
              prev = cur;
            }
          }
        }
        std::sort(cuts.begin(), cuts.end());
        for (size_t k = 0; k + 1 < cuts.size(); ++k) {
          double a = cuts[k], b = cuts[k + 1];
          if (b - a < 1e-9) continue;
          Vec2 mid = pc.at(0.5 * (a + b), g);
          bool keep = true;
          for (size_t j = 0; j < pieces.size() && keep; ++j) {
            if (j == i) continue;
            if (pieces[j].in_U_closure(mid) && !pieces[j].in_S(mid))
              keep = false;
          }
          if (!keep) continue;
          SubPiece sp;
          sp.pc = piece_sub(pc, a, b);
          sp.a = pc.at(a, g);
          sp.b = pc.at(b, g);
          pool.push_back(sp);
        }
      }
    }
  }

  // Stitch the kept sub-pieces into runs by endpoint matching.
  std::vector<char> used(pool.size(), 0);
  std::vector<ChainRun> runs;
  auto matches = [](Vec2 a, Vec2 b) { return dist(a, b) < 1e-9; };
  for (size_t seed = 0; seed < pool.size(); ++seed) {
    if (used[seed]) continue;
    used[seed] = 1;
    std::vector<int> order{int(seed)};
    for (;;) {
      Vec2 end = pool[size_t(order.back())].b;
      int found = -1;
      for (size_t j = 0; j < pool.size(); ++j)
        if (!used[j] && matches(pool[j].a, end)) {
          found = int(j);
          break;
        }
      if (found < 0) break;
      used[size_t(found)] = 1;
      order.push_back(found);
    }
    for (;;) {
      Vec2 start = pool[size_t(order.front())].a;
      int found = -1;
      for (size_t j = 0; j < pool.size(); ++j)
        if (!used[j] && matches(pool[j].b, start)) {
          found = int(j);
          break;
        }
      if (found < 0) break;
      used[size_t(found)] = 1;
      order.insert(order.begin(), found);
    }
    ChainRun run;
    run.closed =
        matches(pool[size_t(order.front())].a, pool[size_t(order.back())].b);
    for (int idx : order) run.pieces.push_back(pool[size_t(idx)].pc);
    runs.push_back(run);
  }

  LocalSupersolution J;
  J.kind = LocalSupersolution::Kind::kJoin;
  J.geom = geom;
  J.chain = runs;

  std::vector<std::function<bool(Vec2)>> us, ucs, fills;
  for (const auto& p : pieces) {
    us.push_back(p.in_U);
    ucs.push_back(p.in_U_closure);
    fills.push_back(p.in_fill);
  }
  J.in_U = [us](Vec2 x) {
    for (const auto& f : us)
      if (f(x)) return true;
    return false;
  };
  J.in_U_closure = [ucs](Vec2 x) {
    for (const auto& f : ucs)
      if (f(x)) return true;
    return false;
  };
  J.in_fill = [fills](Vec2 x) {
    for (const auto& f : fills)
      if (f(x)) return true;
    return false;
  };
  J.feature_size = std::numeric_limits<double>::infinity();
  for (const auto& p : pieces)
    J.feature_size = std::min(J.feature_size, p.feature_size);

  auto ml = std::make_shared<MembershipLayers>();
  for (const auto& p : pieces) {
    if (p.layers) {
      for (const auto& layer : p.layers->layers) ml->layers.push_back(layer);
    } else {
      // Pieces without a layer stack contribute one layer built from their
      // own oracles.
      Layer layer;
      layer.box_lo = p.u_boundary_samples.empty()
                         ? Vec2{-1e30, -1e30}
                         : bbox_lo(p.u_boundary_samples, 1e-6);
      layer.box_hi = p.u_boundary_samples.empty()
                         ? Vec2{1e30, 1e30}
                         : bbox_hi(p.u_boundary_samples, 1e-6);
      layer.covers = p.in_U_closure;
      layer.member = p.in_S;
      ml->layers.push_back(layer);
    }
  }

  std::vector<Vec2> cand;
  for (const auto& p : pieces)
    cand.insert(cand.end(), p.u_boundary_samples.begin(),
                p.u_boundary_samples.end());
  J.u_boundary_samples = filter_boundary(cand, J.in_U, J.in_U_closure);
  J.u_diameter = bbox_diag(J.u_boundary_samples);
  finalize_membership(J, ml);
  return J;
}

// ---------------------------------------------------------------------------
// cubeset_supersolution

LocalSupersolution cubeset_supersolution(const CubeSet& cells,
                                         const SupersolutionNetwork& net) {
  require(cells.wrap_axis() < 0, "incompatibility",
          "wrapped cube sets have no plane barrier");
  require(!cells.empty(), "incompatibility", "cube set is empty");
  RegularityReport reg = is_regular(cells);
  if (!reg.regular) {
    const auto& v = reg.violations.front();
    fail("irregular-input",
         fmt("cube set fails regularity condition %d at cell (%d, %d)",
             v.condition, v.a.i, v.a.j));
  }

  // Dilate by one ring of cells so the input set ends up strictly inside
  // the barrier: the chain then hugs the dilated boundary, one cell out.
  CubeSet grown;
  for (CellCoord c : cells.cells())
    for (int di = -1; di <= 1; ++di)
      for (int dj = -1; dj <= 1; ++dj) grown.insert({c.i + di, c.j + dj});
  RegularityReport reg2 = is_regular(grown);
  if (!reg2.regular)
    fail("irregular-input",
         "the one-ring dilation of the cube set is irregular");

  // Boundary loops traced with the material on the right of travel.
  std::vector<LocalSupersolution> parts;
  for (const auto& lp : boundary_paths(grown)) {
    require(lp.closed, "incompatibility",
            "cube set boundary must close up");
    LatticePath rev;
    rev.closed = true;
    rev.vertices.push_back(lp.vertices.front());
    for (size_t k = lp.vertices.size(); k-- > 1;)
      rev.vertices.push_back(lp.vertices[k]);
    parts.push_back(path_supersolution(rev, net));
  }

  LocalSupersolution S;
  S.kind = LocalSupersolution::Kind::kJoin;
  S.geom = net.node0.geom;
  for (const auto& p : parts)
    for (const auto& run : p.chain) S.chain.push_back(run);

  auto grown_ptr = std::make_shared<const CubeSet>(std::move(grown));
  // Interior of the closed cell union: every cell whose closure holds the
  // point is present.
  auto cell_interior = [grown_ptr](Vec2 x) {
    double fx = std::floor(x.x), fy = std::floor(x.y);
    bool vx = x.x == fx, vy = x.y == fy;
    for (int di = vx ? -1 : 0; di <= 0; ++di)
      for (int dj = vy ? -1 : 0; dj <= 0; ++dj)
        if (!grown_ptr->contains({int(fx) + di, int(fy) + dj})) return false;
    return true;
  };

  std::vector<std::function<bool(Vec2)>> us, ucs, fills;
  for (const auto& p : parts) {
    us.push_back(p.in_U);
    ucs.push_back(p.in_U_closure);
    fills.push_back(p.in_fill);
  }
  S.in_U = [us, cell_interior](Vec2 x) {
    if (cell_interior(x)) return true;
    for (const auto& f : us)
      if (f(x)) return true;
    return false;
  };
  S.in_U_closure = [ucs, grown_ptr](Vec2 x) {
    if (grown_ptr->covers(x)) return true;
    for (const auto& f : ucs)
      if (f(x)) return true;
    return false;
  };
  S.in_fill = [fills, cell_interior](Vec2 x) {
    if (cell_interior(x)) return true;
    for (const auto& f : fills)
      if (f(x)) return true;
    return false;
  };
  S.feature_size = std::numeric_limits<double>::infinity();
  for (const auto& p : parts)
    S.feature_size = std::min(S.feature_size, p.feature_size);

  auto ml = std::make_shared<MembershipLayers>();
  for (const auto& p : parts) {
    require(p.layers != nullptr, "incompatibility",
            "loop barrier carries no membership stack");
    for (const auto& layer : p.layers->layers) ml->layers.push_back(layer);
  }
  {
    Layer cell_layer;
    int imin, imax, jmin, jmax;
    grown_ptr->index_bounds(&imin, &imax, &jmin, &jmax);
    cell_layer.box_lo = {double(imin), double(jmin)};
    cell_layer.box_hi = {double(imax + 1), double(jmax + 1)};
    cell_layer.covers = [grown_ptr](Vec2 x) { return grown_ptr->covers(x); };
    cell_layer.member = [](Vec2) { return true; };
    ml->layers.push_back(cell_layer);
  }

  std::vector<Vec2> cand;
  for (const auto& p : parts)
    cand.insert(cand.end(), p.u_boundary_samples.begin(),
                p.u_boundary_samples.end());
  S.u_boundary_samples = filter_boundary(cand, S.in_U, S.in_U_closure);
  S.u_diameter = bbox_diag(S.u_boundary_samples);
  finalize_membership(S, ml);

  // The chain must stay within the uniform constant of the input boundary.
  std::vector<Vec2> chain_pts;
  for (const auto& run : S.chain)
    for (const auto& pc : run.pieces)
      for (int k = 0; k <= 16; ++k)
        chain_pts.push_back(pc.at(k / 16.0, S.geomp()));
  double dh =
      hausdorff_distance(chain_pts, sample_cubeset_boundary(cells, 8));
  require(dh <= net.C, "incompatibility",
          fmt("cube set barrier strays %.3f from the set, beyond %.3f", dh,
              net.C));
  return S;
}

// ---------------------------------------------------------------------------
// complement_subsolution

LocalSubsolution complement_subsolution(const LocalSupersolution& piece) {
  LocalSubsolution Q;
  Q.kind = piece.kind;
  Q.subsolution = !piece.subsolution;
  for (const auto& run : piece.chain) Q.chain.push_back(run.reversed());
  Q.geom = piece.geom;
  Q.node = piece.node;
  auto inS = piece.in_S;
  Q.in_S = [inS](Vec2 x) { return !inS(x); };
  Q.in_U = piece.in_U;
  Q.in_U_closure = piece.in_U_closure;
  Q.in_fill = piece.in_fill;
  Q.feature_size = piece.feature_size;
  Q.u_diameter = piece.u_diameter;
  Q.u_boundary_samples = piece.u_boundary_samples;
  // Complements do not feed further joins, so no layer stack is carried.
  return Q;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

nlohmann::json vec_json(Vec2 v) { return nlohmann::json::array({v.x, v.y}); }

Vec2 vec_from(const nlohmann::json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>()};
}

nlohmann::json geom_json(const NetworkGeometry& g) {
  nlohmann::json j;
  j["t"] = g.t;
  j["R"] = g.R;
  j["r"] = g.r;
  j["nu"] = g.nu;
  j["zeta"] = g.zeta;
  j["amp"] = g.amp;
  j["b1"] = g.b1;
  j["A"] = g.A;
  j["kappa_max"] = g.kappa_max;
  j["ortho_bound"] = g.ortho_bound;
  j["band_dev_max"] = g.band_dev_max;
  j["crossing_residual"] = g.crossing_residual;
  j["cross_phi"] = g.cross_phi;
  j["cross_theta"] = g.cross_theta;
  j["sagitta"] = g.sagitta;
  j["arc_min_separation"] = g.arc_min_separation;
  return j;
}

NetworkGeometry geom_from(const nlohmann::json& j) {
  NetworkGeometry g;
  g.t = j.at("t").get<double>();
  g.R = j.at("R").get<double>();
  g.r = j.at("r").get<double>();
  g.nu = j.at("nu").get<double>();
  g.zeta = j.at("zeta").get<double>();
  g.amp = j.at("amp").get<double>();
  g.b1 = j.at("b1").get<double>();
  g.A = j.at("A").get<double>();
  g.kappa_max = j.at("kappa_max").get<double>();
  g.ortho_bound = j.at("ortho_bound").get<double>();
  g.band_dev_max = j.at("band_dev_max").get<double>();
  g.crossing_residual = j.at("crossing_residual").get<double>();
  g.cross_phi = j.at("cross_phi").get<double>();
  g.cross_theta = j.at("cross_theta").get<double>();
  g.sagitta = j.at("sagitta").get<double>();
  g.arc_min_separation = j.at("arc_min_separation").get<double>();
  return g;
}

}  // namespace

nlohmann::json piece_to_json(const LocalSupersolution& piece) {
  nlohmann::json j;
  switch (piece.kind) {
    case LocalSupersolution::Kind::kEdge:
      j["kind"] = "edge";
      break;
    case LocalSupersolution::Kind::kNode:
      j["kind"] = "node";
      break;
    case LocalSupersolution::Kind::kJoin:
      j["kind"] = "join";
      break;
  }
  j["subsolution"] = piece.subsolution;
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& run : piece.chain) {
    nlohmann::json jr;
    jr["closed"] = run.closed;
    nlohmann::json jp = nlohmann::json::array();
    for (const auto& pc : run.pieces) {
      nlohmann::json e;
      switch (pc.kind) {
        case ChainPiece::Kind::kArc:
          e["type"] = "arc";
          e["center"] = vec_json(pc.center);
          e["radius"] = pc.radius;
          e["phi"] = nlohmann::json::array({pc.phi0, pc.phi1});
          break;
        case ChainPiece::Kind::kNodeCurve:
          e["type"] = "node-curve";
          e["vertex"] = vec_json(pc.v);
          e["theta"] = nlohmann::json::array({pc.th0, pc.th1});
          break;
        case ChainPiece::Kind::kSegment:
          e["type"] = "segment";
          e["from"] = vec_json(pc.p);
          e["to"] = vec_json(pc.q);
          break;
      }
      jp.push_back(e);
    }
    jr["pieces"] = jp;
    runs.push_back(jr);
  }
  j["runs"] = runs;
  if (piece.geom) j["geometry"] = geom_json(*piece.geom);
  if (piece.node) {
    nlohmann::json n;
    n["kind"] =
        piece.node->kind == NodeShape::Kind::kLattice ? "lattice" : "circle";
    n["v"] = vec_json(piece.node->v);
    n["r0"] = piece.node->r0;
    n["band"] = piece.node->band;
    j["node"] = n;
  }
  j["feature_size"] = piece.feature_size;
  j["u_diameter"] = piece.u_diameter;
  return j;
}

LocalSupersolution piece_from_json(const nlohmann::json& j) {
  LocalSupersolution P;
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "edge") {
    P.kind = LocalSupersolution::Kind::kEdge;
  } else if (kind == "node") {
    P.kind = LocalSupersolution::Kind::kNode;
  } else if (kind == "join") {
    P.kind = LocalSupersolution::Kind::kJoin;
  } else {
    fail("incompatibility", "unknown piece kind '" + kind + "'");
  }
  P.subsolution = j.at("subsolution").get<bool>();
  for (const auto& jr : j.at("runs")) {
    ChainRun run;
    run.closed = jr.at("closed").get<bool>();
    for (const auto& e : jr.at("pieces")) {
      ChainPiece pc;
      std::string type = e.at("type").get<std::string>();
      if (type == "arc") {
        pc.kind = ChainPiece::Kind::kArc;
        pc.center = vec_from(e.at("center"));
        pc.radius = e.at("radius").get<double>();
        pc.phi0 = e.at("phi").at(0).get<double>();
        pc.phi1 = e.at("phi").at(1).get<double>();
      } else if (type == "node-curve") {
        pc.kind = ChainPiece::Kind::kNodeCurve;
        pc.v = vec_from(e.at("vertex"));
        pc.th0 = e.at("theta").at(0).get<double>();
        pc.th1 = e.at("theta").at(1).get<double>();
      } else if (type == "segment") {
        pc.kind = ChainPiece::Kind::kSegment;
        pc.p = vec_from(e.at("from"));
        pc.q = vec_from(e.at("to"));
      } else {
        fail("incompatibility", "unknown chain piece type '" + type + "'");
      }
      run.pieces.push_back(pc);
    }
    P.chain.push_back(run);
  }
  if (j.contains("geometry")) P.geom = geom_from(j.at("geometry"));
  if (j.contains("node")) {
    NodeShape ns;
    std::string nk = j.at("node").at("kind").get<std::string>();
    if (nk == "lattice") {
      require(P.geom.has_value(), "incompatibility",
              "lattice node piece without its generating geometry");
      ns.kind = NodeShape::Kind::kLattice;
      ns.geom = P.geom;
    } else {
      ns.kind = NodeShape::Kind::kCircle;
    }
    ns.v = vec_from(j.at("node").at("v"));
    ns.r0 = j.at("node").at("r0").get<double>();
    ns.band = j.at("node").at("band").get<double>();
    P.node = ns;
  }
  P.feature_size = j.at("feature_size").get<double>();
  P.u_diameter = j.at("u_diameter").get<double>();

  // Membership: node pieces rebuild their full oracles from the level
  // function; everything else falls back to the nearest-front side test
  // (localization interiors are not serialized).
  if (P.node && P.kind == LocalSupersolution::Kind::kNode) {
    NodeShape ns = *P.node;
    bool sub = P.subsolution;
    P.in_S = [ns, sub](Vec2 x) {
      return sub ? ns.d(x) <= 0 : ns.d(x) >= 0;
    };
    P.in_U = [ns](Vec2 x) { return std::abs(ns.d(x)) < ns.band; };
    P.in_U_closure = [ns](Vec2 x) { return std::abs(ns.d(x)) <= ns.band; };
    P.in_fill = [ns](Vec2 x) { return ns.d(x) < ns.band; };
    if (!P.subsolution) {
      auto ml = std::make_shared<MembershipLayers>();
      Layer layer;
      double ext = ns.max_extent();
      layer.box_lo = ns.v - Vec2{ext, ext};
      layer.box_hi = ns.v + Vec2{ext, ext};
      layer.covers = [ns](Vec2 x) { return ns.d(x) <= ns.band; };
      layer.member = [ns](Vec2 x) { return ns.d(x) >= 0; };
      ml->layers.push_back(layer);
      finalize_membership(P, ml);
    }
  } else {
    auto always_false = [](Vec2) { return false; };
    P.in_U = always_false;
    P.in_U_closure = always_false;
    P.in_fill = always_false;
    if (P.subsolution) {
      // The reversed chain's side test lands on the complement directly.
      std::vector<ChainPiece> flat;
      for (const auto& run : P.chain)
        for (const auto& pc : run.pieces) flat.push_back(pc);
      std::optional<NetworkGeometry> geom = P.geom;
      P.in_S = [flat, geom](Vec2 x) {
        return chain_side_test(flat, geom ? &*geom : nullptr, x);
      };
    } else {
      finalize_membership(P, std::make_shared<MembershipLayers>());
    }
  }
  return P;
}

}  // namespace hf
