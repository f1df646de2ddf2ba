#include "heterofront/medium.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <set>

namespace hf {

namespace {

constexpr double kPi = std::numbers::pi;

// Quintic smoothstep on [0,1] with vanishing first and second derivatives at
// both ends; max slope 1.875 at the midpoint.
double smoothstep5(double u) { return u * u * u * (10 + u * (-15 + 6 * u)); }
double dsmoothstep5(double u) {
  double v = u * (1 - u);
  return 30 * v * v;
}
double ddsmoothstep5(double u) { return 60 * u * (1 - u) * (1 - 2 * u); }

double clamp01(double u) { return std::clamp(u, 0.0, 1.0); }

Vec2 fold_unit(Vec2 x) {
  Vec2 f{x.x - std::floor(x.x), x.y - std::floor(x.y)};
  if (f.x >= 1.0) f.x = 0.0;
  if (f.y >= 1.0) f.y = 0.0;
  return f;
}

}  // namespace

// ---------------------------------------------------------------------------
// NetworkGeometry

Vec2 NetworkGeometry::curve_tangent(Vec2 v, double th) const {
  (void)v;
  double rh = rho(th), dr = drho(th);
  Vec2 g{dr * std::cos(th) - rh * std::sin(th),
         dr * std::sin(th) + rh * std::cos(th)};
  return normalized(g);
}

double NetworkGeometry::curve_kappa(double th) const {
  double rh = rho(th), dr = drho(th), ddr = ddrho(th);
  double num = rh * rh + 2 * dr * dr - rh * ddr;
  double den = std::pow(rh * rh + dr * dr, 1.5);
  return num / den;
}

NodeProjection NetworkGeometry::project(Vec2 v, Vec2 p) const {
  Vec2 q = p - v;
  double th = std::atan2(q.y, q.x);
  if (!std::isfinite(th)) th = 0.0;

  auto gamma = [&](double s) {
    return Vec2{rho(s) * std::cos(s), rho(s) * std::sin(s)};
  };
  auto dgamma = [&](double s) {
    double rh = rho(s), dr = drho(s);
    return Vec2{dr * std::cos(s) - rh * std::sin(s),
                dr * std::sin(s) + rh * std::cos(s)};
  };
  auto ddgamma = [&](double s) {
    double rh = rho(s), dr = drho(s), ddr = ddrho(s);
    return Vec2{(ddr - rh) * std::cos(s) - 2 * dr * std::sin(s),
                (ddr - rh) * std::sin(s) + 2 * dr * std::cos(s)};
  };

  bool ok = false;
  for (int it = 0; it < 40; ++it) {
    Vec2 g = gamma(th), dg = dgamma(th);
    double f = dot(q - g, dg);
    double df = -norm2(dg) + dot(q - g, ddgamma(th));
    if (std::abs(df) < 1e-30) break;
    double step = f / df;
    th -= step;
    if (std::abs(step) < 1e-15) {
      ok = true;
      break;
    }
  }
  if (!ok) {
    // Newton stalled; the residual may still be tiny.
    Vec2 g = gamma(th);
    if (std::abs(dot(q - g, dgamma(th))) > 1e-10 * std::max(1.0, norm(q - g))) {
      // Dense scan plus golden-section refinement.
      double best = INFINITY, bth = 0;
      for (int k = 0; k < 1440; ++k) {
        double s = -kPi + 2 * kPi * k / 1440.0;
        double d2 = norm2(q - gamma(s));
        if (d2 < best) {
          best = d2;
          bth = s;
        }
      }
      double lo = bth - 2 * kPi / 1440, hi = bth + 2 * kPi / 1440;
      for (int it = 0; it < 80; ++it) {
        double m1 = lo + 0.382 * (hi - lo), m2 = lo + 0.618 * (hi - lo);
        if (norm2(q - gamma(m1)) < norm2(q - gamma(m2)))
          hi = m2;
        else
          lo = m1;
      }
      th = 0.5 * (lo + hi);
    }
  }

  NodeProjection out;
  out.theta = th;
  Vec2 g = gamma(th);
  out.foot = v + g;
  Vec2 that = normalized(dgamma(th));
  Vec2 nout = -rot90ccw(that);  // away from the vertex
  out.d = dot(q - g, nout);
  out.grad = std::abs(out.d) > 1e-13 ? (q - g) / out.d : nout;
  out.kappa = curve_kappa(th);
  return out;
}

double NetworkGeometry::eta(double s) const {
  if (s <= -zeta) return amp;
  if (s >= zeta) return 0.0;
  return amp * (1.0 - smoothstep5(clamp01((s + zeta) / (2 * zeta))));
}

double NetworkGeometry::deta(double s) const {
  if (s <= -zeta || s >= zeta) return 0.0;
  return -amp * dsmoothstep5((s + zeta) / (2 * zeta)) / (2 * zeta);
}

double NetworkGeometry::ddeta(double s) const {
  if (s <= -zeta || s >= zeta) return 0.0;
  return -amp * ddsmoothstep5((s + zeta) / (2 * zeta)) / (4 * zeta * zeta);
}

ArcSpec NetworkGeometry::arc(int dir) const {
  require(dir >= 0 && dir < 4, "bad-format", "arc direction must be 0..3");
  static const Vec2 units[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  Vec2 u = units[dir];
  ArcSpec s;
  s.tail = {0, 0};
  s.head = u;
  s.center = u * 0.5 + rot90cw(u) * t;
  s.radius = R;
  s.ang_tail = std::atan2(-s.center.y, -s.center.x);
  s.ang_head = std::atan2(u.y - s.center.y, u.x - s.center.x);
  if (s.ang_head >= s.ang_tail) s.ang_head -= 2 * kPi;
  return s;
}

ArcSpec NetworkGeometry::arc_for_edge(Vec2 tail, Vec2 head) const {
  Vec2 u = head - tail;
  int dir = -1;
  if (std::abs(u.x - 1) < 1e-9 && std::abs(u.y) < 1e-9) dir = 0;
  if (std::abs(u.y - 1) < 1e-9 && std::abs(u.x) < 1e-9) dir = 1;
  if (std::abs(u.x + 1) < 1e-9 && std::abs(u.y) < 1e-9) dir = 2;
  if (std::abs(u.y + 1) < 1e-9 && std::abs(u.x) < 1e-9) dir = 3;
  require(dir >= 0, "bad-format", "edge must be a unit lattice step");
  return arc(dir).translated(tail);
}

void NetworkGeometry::arc_crossing(const ArcSpec& a, Vec2 v, double& phi,
                                   double& theta) const {
  bool at_tail = dist(a.tail, v) < 1e-9;
  require(at_tail || dist(a.head, v) < 1e-9, "bad-format",
          "vertex is not an endpoint of the arc");
  double a0 = at_tail ? a.ang_tail : a.ang_head;
  double a1 = at_tail ? a.ang_head : a.ang_tail;

  auto h = [&](double ang) {
    Vec2 q = a.point(ang) - v;
    double s = norm(q);
    return s - rho(std::atan2(q.y, q.x));
  };
  // March from the vertex end toward the middle until the arc exits the hole.
  int n = 400;
  double prev = -rho(0);  // at the vertex the arc is depth r inside
  double lo = a0, hi = a0;
  bool found = false;
  for (int k = 1; k <= n; ++k) {
    double ang = a0 + (a1 - a0) * k / n;
    double val = h(ang);
    if (prev < 0 && val >= 0) {
      lo = a0 + (a1 - a0) * (k - 1) / n;
      hi = ang;
      found = true;
      break;
    }
    prev = val;
  }
  require(found, "geometry-degenerate", "arc never exits the node hole");
  for (int it = 0; it < 100; ++it) {
    double mid = 0.5 * (lo + hi);
    if (h(lo) * h(mid) <= 0)
      hi = mid;
    else
      lo = mid;
  }
  phi = 0.5 * (lo + hi);
  Vec2 q = a.point(phi) - v;
  theta = std::atan2(q.y, q.x);
}

// ---------------------------------------------------------------------------
// Medium impl hierarchy

class MediumImpl {
 public:
  virtual ~MediumImpl() = default;
  virtual MediumEval eval(Vec2 folded, int order) const = 0;
  virtual double lambda() const = 0;
  virtual const std::string& kind() const = 0;
  virtual nlohmann::json descriptor(const std::string& sidecar_dir,
                                    const std::string& stem) const = 0;
  virtual const NetworkGeometry* network() const { return nullptr; }
  virtual const CornerDiagnostics* corner() const { return nullptr; }
};

namespace {

class ConstantMedium : public MediumImpl {
 public:
  explicit ConstantMedium(double c) : c_(c), kind_("constant") {
    require(c >= 1.0, "range-violation", "constant medium must be >= 1");
  }
  MediumEval eval(Vec2, int) const override {
    MediumEval e;
    e.a = c_;
    return e;
  }
  double lambda() const override { return std::max(2.0, c_); }
  const std::string& kind() const override { return kind_; }
  nlohmann::json descriptor(const std::string&, const std::string&) const override {
    return {{"kind", "constant"}, {"value", c_}};
  }

 private:
  double c_;
  std::string kind_;
};

class LaminarMedium : public MediumImpl {
 public:
  LaminarMedium(double mean, double amplitude, int kx, int ky, double phase)
      : mean_(mean), amp_(amplitude), kx_(kx), ky_(ky), phase_(phase),
        kind_("laminar") {
    require(mean - std::abs(amplitude) >= 1.0 - 1e-12, "range-violation",
            "laminar medium dips below 1");
    require(kx != 0 || ky != 0, "bad-format", "laminar wave vector is zero");
  }
  MediumEval eval(Vec2 x, int order) const override {
    double w = 2 * kPi;
    double s = w * (kx_ * x.x + ky_ * x.y) + phase_;
    MediumEval e;
    e.a = mean_ + amp_ * std::cos(s);
    if (order >= 1) {
      double ds = -amp_ * std::sin(s) * w;
      e.grad = {ds * kx_, ds * ky_};
    }
    if (order >= 2) {
      double dds = -amp_ * std::cos(s) * w * w;
      e.hess = {dds * kx_ * kx_, dds * kx_ * ky_, dds * kx_ * ky_,
                dds * ky_ * ky_};
    }
    return e;
  }
  double lambda() const override { return std::max(2.0, mean_ + std::abs(amp_)); }
  const std::string& kind() const override { return kind_; }
  nlohmann::json descriptor(const std::string&, const std::string&) const override {
    return {{"kind", "laminar"}, {"mean", mean_},   {"amplitude", amp_},
            {"kx", kx_},         {"ky", ky_},       {"phase", phase_}};
  }

 private:
  double mean_, amp_;
  int kx_, ky_;
  double phase_;
  std::string kind_;
};

class AnalyticMedium : public MediumImpl {
 public:
  AnalyticMedium(std::function<MediumEval(Vec2, int)> f, double lambda,
                 std::string label)
      : f_(std::move(f)), lambda_(lambda), kind_(std::move(label)) {}
  MediumEval eval(Vec2 x, int order) const override { return f_(x, order); }
  double lambda() const override { return lambda_; }
  const std::string& kind() const override { return kind_; }
  nlohmann::json descriptor(const std::string&, const std::string&) const override {
    fail("not-serializable",
         "analytic media hold closures and have no descriptor");
  }

 private:
  std::function<MediumEval(Vec2, int)> f_;
  double lambda_;
  std::string kind_;
};

class GridMedium : public MediumImpl {
 public:
  explicit GridMedium(Grid2D cell) : cell_(std::move(cell)), kind_("grid-sampled") {
    require(cell_.nx >= 2 && cell_.ny >= 2, "bad-format",
            "grid medium needs at least 2x2 samples");
    require(cell_.min_value() >= 1.0 - 1e-12, "range-violation",
            "grid medium dips below 1");
  }
  MediumEval eval(Vec2 x, int order) const override {
    MediumEval e;
    e.a = value_periodic(x);
    if (order >= 1) e.grad = grad_periodic(x);
    if (order >= 2) {
      // The bilinear interpolant has no classical Hessian; difference the
      // patch gradients across one cell.
      double h = 1.0 / cell_.nx;
      Vec2 gxp = grad_periodic({x.x + h, x.y});
      Vec2 gxm = grad_periodic({x.x - h, x.y});
      Vec2 gyp = grad_periodic({x.x, x.y + h});
      Vec2 gym = grad_periodic({x.x, x.y - h});
      e.hess = {(gxp.x - gxm.x) / (2 * h), (gyp.x - gym.x) / (2 * h),
                (gxp.y - gxm.y) / (2 * h), (gyp.y - gym.y) / (2 * h)};
    }
    return e;
  }
  double lambda() const override { return std::max(2.0, cell_.max_value()); }
  const std::string& kind() const override { return kind_; }
  nlohmann::json descriptor(const std::string& dir,
                            const std::string& stem) const override {
    require(!dir.empty(), "not-serializable",
            "grid medium needs a sidecar directory (use write_medium)");
    std::string file = stem + ".grid";
    write_grid(cell_, (std::filesystem::path(dir) / file).string());
    return {{"kind", "grid-sampled"}, {"grid_file", file}};
  }
  const Grid2D& cell() const { return cell_; }

 private:
  double value_periodic(Vec2 x) const {
    Vec2 f = fold_unit(x);
    double fx = f.x * cell_.nx, fy = f.y * cell_.ny;
    int i0 = std::min(static_cast<int>(fx), cell_.nx - 1);
    int j0 = std::min(static_cast<int>(fy), cell_.ny - 1);
    double tx = fx - i0, ty = fy - j0;
    int i1 = (i0 + 1) % cell_.nx, j1 = (j0 + 1) % cell_.ny;
    return (1 - tx) * (1 - ty) * cell_.at(i0, j0) +
           tx * (1 - ty) * cell_.at(i1, j0) +
           (1 - tx) * ty * cell_.at(i0, j1) + tx * ty * cell_.at(i1, j1);
  }
  Vec2 grad_periodic(Vec2 x) const {
    Vec2 f = fold_unit(x);
    double fx = f.x * cell_.nx, fy = f.y * cell_.ny;
    int i0 = std::min(static_cast<int>(fx), cell_.nx - 1);
    int j0 = std::min(static_cast<int>(fy), cell_.ny - 1);
    double tx = fx - i0, ty = fy - j0;
    int i1 = (i0 + 1) % cell_.nx, j1 = (j0 + 1) % cell_.ny;
    double v00 = cell_.at(i0, j0), v10 = cell_.at(i1, j0);
    double v01 = cell_.at(i0, j1), v11 = cell_.at(i1, j1);
    double gx = ((1 - ty) * (v10 - v00) + ty * (v11 - v01)) * cell_.nx;
    double gy = ((1 - tx) * (v01 - v00) + tx * (v11 - v10)) * cell_.ny;
    return {gx, gy};
  }

  Grid2D cell_;
  std::string kind_;
};

class PinningMedium : public MediumImpl {
 public:
  explicit PinningMedium(NetworkGeometry geo) : geo_(geo), kind_("pinning") {}
  MediumEval eval(Vec2 x, int order) const override {
    MediumEval e;
    Vec2 v{std::round(x.x), std::round(x.y)};
    Vec2 p = x - v;
    double s = norm(p);
    double rmax = geo_.r * (1 + std::abs(geo_.b1));
    double rmin = geo_.r * (1 - std::abs(geo_.b1));
    if (s >= rmax + geo_.zeta) {
      e.a = 1.0;
      return e;
    }
    if (s <= rmin - geo_.zeta) {
      e.a = 1.0 + geo_.amp;
      return e;
    }
    NodeProjection pr = geo_.project({0, 0}, p);
    e.a = 1.0 + geo_.eta(pr.d);
    if (order >= 1) e.grad = geo_.deta(pr.d) * pr.grad;
    if (order >= 2) {
      double de = geo_.deta(pr.d), dde = geo_.ddeta(pr.d);
      double curv = pr.kappa / (1.0 + pr.d * pr.kappa);
      Mat2 nn = outer(pr.grad, pr.grad);
      Mat2 tt{1 - nn.a00, -nn.a01, -nn.a10, 1 - nn.a11};
      e.hess = nn * dde + tt * (de * curv);
    }
    return e;
  }
  double lambda() const override { return std::max(2.0, 1.0 + geo_.amp); }
  const std::string& kind() const override { return kind_; }
  const NetworkGeometry* network() const override { return &geo_; }
  nlohmann::json descriptor(const std::string&, const std::string&) const override {
    return {{"kind", "pinning"},
            {"t", geo_.t},
            {"r", geo_.r},
            {"nu", geo_.nu},
            {"zeta", geo_.zeta},
            {"amp", geo_.amp},
            {"fitted_b1", geo_.b1},
            {"eta_knots", {-geo_.zeta, 0.0, geo_.zeta}}};
  }

 private:
  NetworkGeometry geo_;
  std::string kind_;
};

class SquaredMedium : public MediumImpl {
 public:
  explicit SquaredMedium(Medium base) : base_(std::move(base)), kind_("squared") {}
  MediumEval eval(Vec2 x, int order) const override {
    MediumEval b = base_.eval(x, order);
    MediumEval e;
    e.a = b.a * b.a;
    if (order >= 1) e.grad = b.grad * (2 * b.a);
    if (order >= 2) e.hess = outer(b.grad, b.grad) * 2.0 + b.hess * (2 * b.a);
    return e;
  }
  double lambda() const override { return base_.lambda() * base_.lambda(); }
  const std::string& kind() const override { return kind_; }
  nlohmann::json descriptor(const std::string& dir,
                            const std::string& stem) const override {
    return {{"kind", "squared"},
            {"base", base_.descriptor_with_sidecar(dir, stem + "-base")}};
  }

 private:
  Medium base_;
  std::string kind_;
};

class BumpMedium : public MediumImpl {
 public:
  BumpMedium(Medium base, Vec2 center, double delta, double radius)
      : base_(std::move(base)), center_(center), delta_(delta), radius_(radius),
        kind_("bump-adjusted") {}
  MediumEval eval(Vec2 x, int order) const override {
    MediumEval e = base_.eval(x, order);
    // Nearest periodic copy of the bump center.
    Vec2 q = x - center_;
    q = {q.x - std::round(q.x), q.y - std::round(q.y)};
    double s2 = norm2(q) / (radius_ * radius_);
    if (s2 >= 1.0) return e;
    double w = 1 - s2;
    e.a += delta_ * w * w * w;
    if (order >= 1) {
      Vec2 dsq = q * (2.0 / (radius_ * radius_));
      e.grad += dsq * (-3 * delta_ * w * w);
    }
    if (order >= 2) {
      Vec2 dsq = q * (2.0 / (radius_ * radius_));
      Mat2 hs2{2 / (radius_ * radius_), 0, 0, 2 / (radius_ * radius_)};
      e.hess = e.hess + outer(dsq, dsq) * (6 * delta_ * w) +
               hs2 * (-3 * delta_ * w * w);
    }
    return e;
  }
  double lambda() const override { return base_.lambda() + std::max(0.0, delta_); }
  const std::string& kind() const override { return kind_; }
  nlohmann::json descriptor(const std::string& dir,
                            const std::string& stem) const override {
    return {{"kind", "bump-adjusted"},
            {"base", base_.descriptor_with_sidecar(dir, stem + "-base")},
            {"delta", delta_},
            {"center", {center_.x, center_.y}},
            {"radius", radius_}};
  }

 private:
  Medium base_;
  Vec2 center_;
  double delta_, radius_;
  std::string kind_;
};

// Closed level curve {a = c} sampled and arc-length indexed, with Newton
// projection onto the exact level set for signed distances.
struct LevelCurve {
  std::vector<Vec2> pts;  // ccw, refined onto the level set
  Vec2 center{0, 0};      // the max point; curve winds around it
  double level = 0;
  double len = 0;
  double radial_min = 0, radial_max = 0;

  Vec2 nearest_sample(Vec2 p) const {
    double best = INFINITY;
    size_t bi = 0;
    for (size_t k = 0; k < pts.size(); ++k) {
      double d2 = norm2(p - pts[k]);
      if (d2 < best) {
        best = d2;
        bi = k;
      }
    }
    return pts[bi];
  }
};

// Odd quintic rise with prescribed start slope 1.5 (in u), flat C^2 landing
// at u = 1: Q(0)=0, Q'(0)=1.5, Q''(0)=0, Q(1)=1, Q'(1)=Q''(1)=0.
namespace riseshape {
inline double Q(double u) {
  return u * (1.5 + u * u * (1.0 + u * (-3.0 + 1.5 * u)));
}
inline double dQ(double u) {
  return 1.5 + u * u * (3.0 + u * (-12.0 + 7.5 * u));
}
inline double ddQ(double u) { return u * (6.0 + u * (-36.0 + 30.0 * u)); }
}  // namespace riseshape

struct CornerField {
  LevelCurve curve;
  double slope = 0;      // psi'(0)
  double amp = 0;        // plateau height = max |psi|
  double s1 = 0;         // end of the rise, amp = psi(s1)
  double s2 = 0;         // start of the fall back to zero
  double eta_width = 0;
  Medium base;

  // Odd rise-plateau-fall profile: psi climbs at psi'(0) = slope to the
  // plateau amp by s1, stays flat, and lands C^2 at zero by eta_width.
  double psi(double s) const {
    double sg = s < 0 ? -1.0 : 1.0;
    double t = std::abs(s);
    if (t >= eta_width) return 0;
    if (t <= s1) return sg * amp * riseshape::Q(t / s1);
    if (t < s2) return sg * amp;
    return sg * amp * (1 - smoothstep5((t - s2) / (eta_width - s2)));
  }
  double dpsi(double s) const {
    double t = std::abs(s);
    if (t >= eta_width) return 0;
    if (t <= s1) return amp * riseshape::dQ(t / s1) / s1;
    if (t < s2) return 0;
    return -amp * dsmoothstep5((t - s2) / (eta_width - s2)) / (eta_width - s2);
  }
  double ddpsi(double s) const {
    double sg = s < 0 ? -1.0 : 1.0;
    double t = std::abs(s);
    if (t >= eta_width) return 0;
    if (t <= s1) return sg * amp * riseshape::ddQ(t / s1) / (s1 * s1);
    if (t < s2) return 0;
    double w = eta_width - s2;
    return -sg * amp * ddsmoothstep5((t - s2) / w) / (w * w);
  }

  // Foot of p on the exact level set plus signed distance (positive inside
  // {a > c}). Returns false when p is clearly outside the band.
  bool project(Vec2 p, double& d, Vec2& foot) const {
    double rad = dist(p, curve.center);
    if (rad < curve.radial_min - eta_width || rad > curve.radial_max + eta_width)
      return false;
    Vec2 y = curve.nearest_sample(p);
    for (int it = 0; it < 60; ++it) {
      MediumEval e = base.eval(y, 1);
      double g2 = norm2(e.grad);
      if (g2 < 1e-20) return false;
      // Pull back onto the level set, then slide toward the foot.
      y -= e.grad * ((e.a - curve.level) / g2);
      Vec2 n = normalized(base.eval(y, 1).grad);
      Vec2 tangential = (p - y) - n * dot(p - y, n);
      y += tangential;
      if (norm(tangential) < 1e-13) break;
    }
    MediumEval e = base.eval(y, 1);
    double g2 = norm2(e.grad);
    if (g2 > 1e-20) y -= e.grad * ((e.a - curve.level) / g2);
    foot = y;
    double dd = dist(p, y);
    d = (base.value(p) > curve.level) ? dd : -dd;
    return std::abs(d) < eta_width;
  }

  // Curvature of the level curve at a point xi on it, with respect to the
  // outward normal of {a > c} (positive when the set is convex there).
  double level_kappa(Vec2 xi) const {
    MediumEval e = base.eval(xi, 2);
    double gx = e.grad.x, gy = e.grad.y;
    double g = std::sqrt(gx * gx + gy * gy);
    double quad = gx * (e.hess.a00 * gx + e.hess.a01 * gy) +
                  gy * (e.hess.a10 * gx + e.hess.a11 * gy);
    return -(e.hess.trace() * g * g - quad) / (g * g * g);
  }
};

class PerturbedMedium : public MediumImpl {
 public:
  PerturbedMedium(CornerField field, CornerDiagnostics diag)
      : field_(std::move(field)), diag_(diag), kind_("perturbed") {}

  MediumEval eval(Vec2 x, int order) const override {
    // Work in the frame of the representative curve copy.
    Vec2 q = x - field_.curve.center;
    q = {q.x - std::round(q.x), q.y - std::round(q.y)};
    Vec2 p = field_.curve.center + q;

    MediumEval b = field_.base.eval(p, order);
    double d;
    Vec2 foot;
    if (!field_.project(p, d, foot)) return b;

    double ps = field_.psi(d);
    MediumEval e;
    e.a = (1 + ps) * b.a;
    if (order >= 1) {
      // d grows toward the max, so its gradient tracks +grad a at the foot.
      Vec2 gd = std::abs(d) > 1e-12 ? (p - foot) / d
                                    : normalized(field_.base.eval(foot, 1).grad);
      double dps = field_.dpsi(d);
      if (order >= 1) e.grad = b.grad * (1 + ps) + gd * (dps * b.a);
      if (order >= 2) {
        double ddps = field_.ddpsi(d);
        double kf = field_.level_kappa(foot);
        double curv = -kf / (1 - d * kf);
        Mat2 nn = outer(gd, gd);
        Mat2 tt{1 - nn.a00, -nn.a01, -nn.a10, 1 - nn.a11};
        Mat2 hphi = nn * ddps + tt * (dps * curv);
        e.hess = b.hess * (1 + ps) + (outer(gd, b.grad) + outer(b.grad, gd)) * dps +
                 hphi * b.a;
      }
    }
    return e;
  }
  double lambda() const override {
    return field_.base.lambda() * (1 + diag_.psi_max);
  }
  const std::string& kind() const override { return kind_; }
  const CornerDiagnostics* corner() const override { return &diag_; }
  nlohmann::json descriptor(const std::string& dir,
                            const std::string& stem) const override {
    return {{"kind", "perturbed"},
            {"base", field_.base.descriptor_with_sidecar(dir, stem + "-base")},
            {"level_fraction", diag_.level_c_fraction},
            {"eps", diag_.eps},
            {"eta_width", field_.eta_width}};
  }

 private:
  CornerField field_;
  CornerDiagnostics diag_;
  std::string kind_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Medium wrapper

Medium::Medium() : impl_(std::make_shared<ConstantMedium>(1.0)) {}
Medium::Medium(std::shared_ptr<const MediumImpl> impl) : impl_(std::move(impl)) {}

MediumEval Medium::eval(Vec2 x, int order) const {
  return impl_->eval(fold_unit(x), order);
}
double Medium::lambda() const { return impl_->lambda(); }
const std::string& Medium::kind() const { return impl_->kind(); }
const NetworkGeometry* Medium::network() const { return impl_->network(); }
nlohmann::json Medium::descriptor() const { return impl_->descriptor("", ""); }
nlohmann::json Medium::descriptor_with_sidecar(const std::string& dir,
                                               const std::string& stem) const {
  return impl_->descriptor(dir, stem);
}

const CornerDiagnostics* corner_diagnostics(const Medium& m) {
  return m.impl().corner();
}

Medium constant_medium(double c) {
  return Medium(std::make_shared<ConstantMedium>(c));
}

Medium laminar_medium(double mean, double amplitude, int kx, int ky,
                      double phase) {
  return Medium(std::make_shared<LaminarMedium>(mean, amplitude, kx, ky, phase));
}

Medium analytic_medium(std::function<MediumEval(Vec2, int)> eval, double lambda,
                       const std::string& label) {
  return Medium(std::make_shared<AnalyticMedium>(std::move(eval), lambda, label));
}

Medium grid_medium(Grid2D unit_cell) {
  return Medium(std::make_shared<GridMedium>(std::move(unit_cell)));
}

Medium square(const Medium& m) {
  return Medium(std::make_shared<SquaredMedium>(m));
}

// ---------------------------------------------------------------------------
// Pinning construction

namespace {

// Orthogonality mismatch between an arc and the node curve at their crossing.
double crossing_ortho_residual(const NetworkGeometry& g) {
  ArcSpec a = g.arc(0);
  double phi, theta;
  g.arc_crossing(a, a.tail, phi, theta);
  Vec2 tarc = a.tangent(phi);
  Vec2 tcurve = g.curve_tangent({0, 0}, theta);
  return dot(tarc, tcurve);
}

}  // namespace

Medium build_pinning_medium(double t, double r, double nu, double zeta,
                            double amp) {
  require(t >= 2.0, "infeasible-parameters", "arc offset t must be >= 2");
  require(r > 0 && r < 0.2, "infeasible-parameters",
          "node radius r must lie in (0, 1/5)");
  require(zeta > 0 && zeta < nu / 2, "infeasible-parameters",
          "need 0 < zeta < nu/2");
  require(nu / 2 < r / 4, "infeasible-parameters", "need nu/2 < r/4");
  require(amp >= 0 && amp <= 1.0, "infeasible-parameters",
          "amplitude must lie in [0, 1]");

  NetworkGeometry g;
  g.t = t;
  g.R = std::sqrt(t * t + 0.25);
  g.r = r;
  g.nu = nu;
  g.zeta = zeta;
  g.amp = amp;
  g.sagitta = g.R - t;

  // Fit the node-curve perturbation so the arc meets the curve orthogonally
  // at the crossing. One crossing suffices: the curve and the arc family are
  // symmetric under the 8-fold dihedral group of the lattice.
  double b_lo = 0.0, b_hi = -0.05;
  g.b1 = b_lo;
  double f_lo = crossing_ortho_residual(g);
  g.b1 = b_hi;
  double f_hi = crossing_ortho_residual(g);
  for (int it = 0; it < 80 && std::abs(f_hi) > 1e-13; ++it) {
    double b_next = b_hi - f_hi * (b_hi - b_lo) / (f_hi - f_lo);
    b_lo = b_hi;
    f_lo = f_hi;
    b_hi = b_next;
    g.b1 = b_hi;
    f_hi = crossing_ortho_residual(g);
  }
  g.b1 = b_hi;
  g.crossing_residual = std::abs(f_hi);
  require(g.crossing_residual <= 1e-8, "geometry-degenerate",
          "node curve fit did not converge");
  require(std::abs(g.b1) < 0.1, "geometry-degenerate",
          "node curve perturbation is implausibly large");
  require(g.r * (1 + std::abs(g.b1)) < 0.25, "infeasible-parameters",
          "node hole exceeds the quarter ball around the vertex");

  {
    ArcSpec a = g.arc(0);
    g.arc_crossing(a, a.tail, g.cross_phi, g.cross_theta);
  }

  // Curve curvature maximum (dense scan with parabolic refinement).
  double km = 0;
  for (int k = 0; k < 8192; ++k) {
    double th = 2 * kPi * k / 8192;
    km = std::max(km, std::abs(g.curve_kappa(th)));
  }
  g.kappa_max = km;

  if (amp > 0) {
    g.A = 1.875 * amp / (2 * zeta);
    if (!(g.A > 2 * g.kappa_max)) {
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "profile slope A=%.4f must exceed twice the node curvature "
                    "%.4f; raise amp above %.4f or shrink zeta",
                    g.A, g.kappa_max, 2 * g.kappa_max * 2 * zeta / 1.875);
      fail("infeasible-parameters", buf);
    }
    g.ortho_bound = 1.0 / (2 * g.R * g.A);

    // Measured arc-normal leakage of the distance gradient inside the band.
    double dev = 0;
    for (int end = 0; end < 2; ++end) {
      ArcSpec a = g.arc(0);
      Vec2 v = end == 0 ? a.tail : a.head;
      for (int k = 0; k <= 400; ++k) {
        double ang = a.ang_tail + (a.ang_head - a.ang_tail) * k / 400.0;
        Vec2 p = a.point(ang);
        NodeProjection pr = g.project(v, p);
        if (std::abs(pr.d) > zeta) continue;
        Vec2 n_arc = rot90ccw(a.tangent(ang));
        dev = std::max(dev, std::abs(dot(n_arc, pr.grad)));
      }
    }
    g.band_dev_max = dev;
    if (dev > g.ortho_bound) {
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "band orthogonality fails: measured %.5f > bound %.5f; "
                    "shrink zeta or lower amp",
                    dev, g.ortho_bound);
      fail("infeasible-parameters", buf);
    }
  }

  // The eight arcs incident on a vertex must be disjoint away from it.
  {
    std::vector<std::vector<Vec2>> arcs;
    for (int dir = 0; dir < 4; ++dir) {
      ArcSpec out = g.arc(dir);
      // Arc of the reverse edge from the neighbor; it ends at the origin.
      ArcSpec in = g.arc((dir + 2) % 4).translated(out.head);
      std::vector<Vec2> po, pi;
      for (int k = 0; k <= 256; ++k) {
        double ao = out.ang_tail + (out.ang_head - out.ang_tail) * k / 256.0;
        double ai = in.ang_tail + (in.ang_head - in.ang_tail) * k / 256.0;
        po.push_back(out.point(ao));
        pi.push_back(in.point(ai));
      }
      arcs.push_back(po);
      arcs.push_back(pi);
    }
    auto near_vertex = [](Vec2 p) {
      return dist(p, {std::round(p.x), std::round(p.y)}) < 0.02;
    };
    double minsep = INFINITY;
    for (size_t i = 0; i < arcs.size(); ++i)
      for (size_t j = i + 1; j < arcs.size(); ++j)
        for (Vec2 pa : arcs[i])
          for (Vec2 pb : arcs[j]) {
            // Arcs may meet at shared lattice endpoints; ignore those caps.
            if (near_vertex(pa) && near_vertex(pb)) continue;
            minsep = std::min(minsep, dist(pa, pb));
          }
    g.arc_min_separation = minsep;
    require(minsep > 1e-3, "geometry-degenerate",
            "arcs incident on a vertex are not disjoint");
  }

  return Medium(std::make_shared<PinningMedium>(g));
}

Medium default_pinning_medium() {
  return build_pinning_medium(2.0, 0.195, 0.09, 0.03, 0.45);
}

// ---------------------------------------------------------------------------
// Corner perturbation

namespace {

Vec2 refine_max(const Medium& m, Vec2 x0) {
  Vec2 x = x0;
  for (int it = 0; it < 12; ++it) {
    MediumEval e = m.eval(x, 2);
    double det = e.hess.a00 * e.hess.a11 - e.hess.a01 * e.hess.a10;
    if (std::abs(det) < 1e-14) break;
    Vec2 step{(e.hess.a11 * e.grad.x - e.hess.a01 * e.grad.y) / det,
              (-e.hess.a10 * e.grad.x + e.hess.a00 * e.grad.y) / det};
    x -= step;
    if (norm(step) < 1e-13) break;
  }
  return x;
}

// Marching squares around the center; returns the loops of {a = c} found in
// the unit window centered at x0.
std::vector<std::vector<Vec2>> extract_level_loops(const Medium& m, Vec2 x0,
                                                   double c, int n) {
  Vec2 org = x0 - Vec2{0.5, 0.5};
  double h = 1.0 / n;
  std::vector<double> val(static_cast<size_t>(n + 1) * (n + 1));
  auto V = [&](int i, int j) -> double& {
    return val[static_cast<size_t>(j) * (n + 1) + i];
  };
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i)
      V(i, j) = m.value(org + Vec2{i * h, j * h}) - c;

  // Segment endpoints live on cell edges; key them by (edge kind, i, j).
  struct EdgeKey {
    int kind, i, j;  // kind 0: horizontal edge (i,j)-(i+1,j); 1: vertical
    auto operator<=>(const EdgeKey&) const = default;
  };
  auto lerp_point = [&](EdgeKey e) {
    double va, vb;
    Vec2 pa, pb;
    if (e.kind == 0) {
      va = V(e.i, e.j);
      vb = V(e.i + 1, e.j);
      pa = org + Vec2{e.i * h, e.j * h};
      pb = org + Vec2{(e.i + 1) * h, e.j * h};
    } else {
      va = V(e.i, e.j);
      vb = V(e.i, e.j + 1);
      pa = org + Vec2{e.i * h, e.j * h};
      pb = org + Vec2{e.i * h, (e.j + 1) * h};
    }
    double tdenom = va - vb;
    double tt = std::abs(tdenom) > 1e-300 ? va / tdenom : 0.5;
    return pa + (pb - pa) * std::clamp(tt, 0.0, 1.0);
  };

  std::map<EdgeKey, std::vector<EdgeKey>> links;
  auto add_seg = [&](EdgeKey a, EdgeKey b) {
    links[a].push_back(b);
    links[b].push_back(a);
  };
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      double v00 = V(i, j), v10 = V(i + 1, j), v01 = V(i, j + 1),
             v11 = V(i + 1, j + 1);
      int idx = (v00 > 0 ? 1 : 0) | (v10 > 0 ? 2 : 0) | (v11 > 0 ? 4 : 0) |
                (v01 > 0 ? 8 : 0);
      if (idx == 0 || idx == 15) continue;
      EdgeKey bottom{0, i, j}, top{0, i, j + 1}, left{1, i, j}, right{1, i + 1, j};
      switch (idx) {
        case 1: case 14: add_seg(bottom, left); break;
        case 2: case 13: add_seg(bottom, right); break;
        case 3: case 12: add_seg(left, right); break;
        case 4: case 11: add_seg(top, right); break;
        case 6: case 9: add_seg(bottom, top); break;
        case 7: case 8: add_seg(left, top); break;
        case 5: case 10: {
          // Saddle; split by the cell-center sample.
          double vc = m.value(org + Vec2{(i + 0.5) * h, (j + 0.5) * h}) - c;
          bool pos_diag = (idx == 5);
          if ((vc > 0) == pos_diag) {
            add_seg(left, bottom);
            add_seg(top, right);
          } else {
            add_seg(left, top);
            add_seg(bottom, right);
          }
          break;
        }
      }
    }

  std::vector<std::vector<Vec2>> loops;
  std::set<EdgeKey> used;
  for (auto& [start, nb] : links) {
    if (used.count(start) || nb.size() != 2) continue;
    std::vector<Vec2> loop;
    EdgeKey prev = start, cur = start;
    while (true) {
      used.insert(cur);
      loop.push_back(lerp_point(cur));
      const auto& cn = links[cur];
      if (cn.size() != 2) break;  // open chain hit the window edge
      EdgeKey nxt = (cn[0] == prev) ? cn[1] : cn[0];
      if (used.count(nxt)) {
        if (nxt == start) loops.push_back(std::move(loop));
        break;
      }
      prev = cur;
      cur = nxt;
    }
  }
  return loops;
}

}  // namespace

Medium perturb_corner(const Medium& m, double level_fraction, double eps,
                      double eta_width) {
  require(level_fraction > 0 && level_fraction < 1, "bad-format",
          "level_fraction must lie in (0,1)");
  require(eps > 0 && eta_width > 0, "bad-format",
          "eps and eta_width must be positive");

  // Locate the maximum.
  double best = -INFINITY;
  Vec2 x0{0, 0};
  int N = 512;
  for (int j = 0; j < N; ++j)
    for (int i = 0; i < N; ++i) {
      Vec2 p{(i + 0.5) / N, (j + 0.5) / N};
      double v = m.value(p);
      if (v > best) {
        best = v;
        x0 = p;
      }
    }
  x0 = refine_max(m, x0);
  double max_a = m.value(x0);
  double c = level_fraction * max_a;
  require(c > 1.0, "multi-component-level-set",
          "level sits below the medium floor; no closed level curve exists");

  auto loops = extract_level_loops(m, x0, c, 768);
  if (loops.size() != 1) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "level set {a = c} has %zu closed components",
                  loops.size());
    fail("multi-component-level-set", buf);
  }

  CornerField field;
  field.base = m;
  field.eta_width = eta_width;
  field.curve.center = x0;
  field.curve.level = c;

  // Refine onto the exact level set and orient counterclockwise.
  std::vector<Vec2> raw = loops[0];
  {
    double area2 = 0;
    for (size_t k = 0; k < raw.size(); ++k) {
      Vec2 a = raw[k], b = raw[(k + 1) % raw.size()];
      area2 += cross(a - x0, b - x0);
    }
    if (area2 < 0) std::reverse(raw.begin(), raw.end());
  }
  for (Vec2& p : raw) {
    for (int it = 0; it < 6; ++it) {
      MediumEval e = m.eval(p, 1);
      double g2 = norm2(e.grad);
      if (g2 < 1e-18) break;
      p -= e.grad * ((e.a - c) / g2);
    }
  }
  // Arc-length resample to a uniform table.
  {
    std::vector<double> cum{0};
    for (size_t k = 0; k < raw.size(); ++k)
      cum.push_back(cum.back() + dist(raw[k], raw[(k + 1) % raw.size()]));
    double L = cum.back();
    int M = 1024;
    field.curve.pts.resize(M);
    size_t seg = 0;
    for (int k = 0; k < M; ++k) {
      double target = L * k / M;
      while (seg + 1 < cum.size() - 1 && cum[seg + 1] < target) ++seg;
      double t0 = cum[seg], t1 = cum[seg + 1];
      double tt = t1 > t0 ? (target - t0) / (t1 - t0) : 0.0;
      Vec2 a = raw[seg], b = raw[(seg + 1) % raw.size()];
      field.curve.pts[k] = a + (b - a) * tt;
    }
    field.curve.len = L;
  }
  {
    double rmin = INFINITY, rmax = 0;
    for (Vec2 p : field.curve.pts) {
      double rr = dist(p, x0);
      rmin = std::min(rmin, rr);
      rmax = std::max(rmax, rr);
    }
    field.curve.radial_min = rmin;
    field.curve.radial_max = rmax;
    require(rmax + eta_width < 0.5, "bad-format",
            "perturbation band leaves the unit cell; shrink eta_width");
  }

  // Curvature bound of the level curve.
  double kmax = 0;
  for (Vec2 p : field.curve.pts) kmax = std::max(kmax, std::abs(field.level_kappa(p)));
  require(eta_width * kmax < 0.8, "margin-violation",
          "eta_width exceeds the tubular reach of the level curve");

  // The start slope must beat the curvature for the boundary margin; the
  // plateau height carries the eps-proportional amplitude and is capped so
  // the rise fits in a quarter of the band.
  double lam = m.lambda();
  field.slope = 1.25 * kmax;
  field.amp = std::min(0.95 * eps / (2 * lam), field.slope * eta_width / 6);
  field.s1 = 1.5 * field.amp / field.slope;
  field.s2 = 0.5 * eta_width;

  CornerDiagnostics diag;
  diag.level_c = c;
  diag.level_c_fraction = level_fraction;
  diag.eps = eps;
  diag.kappa_max = kmax;
  diag.psi_slope = field.slope;
  diag.psi_max = field.amp;
  diag.curve_length = field.curve.len;
  diag.max_point = x0;

  auto impl = std::make_shared<PerturbedMedium>(field, diag);
  Medium out{impl};

  // Boundary margin check: the indicator of {a > c} must be a strict
  // subsolution, i.e. -a k - Da.n > 0 at the sampled boundary points.
  double min_margin = INFINITY;
  const LevelCurve& cv = field.curve;
  for (int k = 0; k < 720; ++k) {
    Vec2 xi = cv.pts[static_cast<size_t>(k) * cv.pts.size() / 720];
    double kap = field.level_kappa(xi);
    Vec2 n = -normalized(m.eval(xi, 1).grad);  // outward of {a > c}
    MediumEval ep = out.eval(xi, 1);
    double margin = -ep.a * kap - dot(ep.grad, n);
    min_margin = std::min(min_margin, margin);
  }
  diag.min_margin = min_margin;

  // W^{1,p} control: tubular-coordinate quadrature of |D phi|^p over the
  // band (area element (1 - s kappa) dl ds) against the coarea bound
  // 2^{p+1} kappa^p eta.
  {
    double p_exp = diag.w1p_p;
    double sum = 0;
    int NS = 2000;
    double dl = cv.len / cv.pts.size();
    for (Vec2 xi : cv.pts) {
      double kap = field.level_kappa(xi);
      double acc = 0;
      for (int k = 0; k < NS; ++k) {
        double s = -eta_width + 2 * eta_width * (k + 0.5) / NS;
        double jac = std::max(0.0, 1 - s * kap);
        acc += std::pow(std::abs(field.dpsi(s)), p_exp) * jac;
      }
      sum += acc * (2 * eta_width / NS) * dl;
    }
    diag.grad_lp_pow = sum;
    diag.coarea_bound = std::pow(2.0, p_exp + 1) * std::pow(kmax, p_exp) * eta_width;
  }

  if (min_margin <= 0) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "sampled boundary margin %.6f is not positive",
                  min_margin);
    fail("margin-violation", buf);
  }

  // Rebuild with the completed diagnostics.
  return Medium(std::make_shared<PerturbedMedium>(field, diag));
}

Medium ensure_unique_max(const Medium& m, double delta) {
  if (delta == 0.0) {
    Medium out = m;
    out.add_warning("delta-zero: input returned unchanged");
    return out;
  }
  require(delta > 0, "bad-format", "delta must be nonnegative");

  double best = -INFINITY;
  Vec2 x0{0, 0};
  int N = 512;
  for (int j = 0; j < N; ++j)
    for (int i = 0; i < N; ++i) {
      Vec2 p{(i + 0.5) / N, (j + 0.5) / N};
      double v = m.value(p);
      if (v > best) {
        best = v;
        x0 = p;
      }
    }
  double lam = m.lambda();
  require(best + delta <= lam + 1e-12, "range-violation",
          "bump would push the maximum past the bound");
  return Medium(std::make_shared<BumpMedium>(m, x0, delta, 0.22));
}

// ---------------------------------------------------------------------------
// Serialization

void write_medium(const Medium& m, const std::string& path) {
  std::filesystem::path p(path);
  std::string dir = p.parent_path().string();
  if (dir.empty()) dir = ".";
  std::string stem = p.stem().string();
  nlohmann::json j = m.descriptor_with_sidecar(dir, stem);
  std::ofstream out(path);
  require(out.good(), "io-error", "cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
  require(out.good(), "io-error", "short write to " + path);
}

Medium medium_from_descriptor(const nlohmann::json& j,
                              const std::string& base_dir) {
  require(j.contains("kind"), "bad-format", "medium descriptor lacks 'kind'");
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "constant") return constant_medium(j.at("value").get<double>());
  if (kind == "laminar")
    return laminar_medium(j.at("mean").get<double>(),
                          j.at("amplitude").get<double>(), j.at("kx").get<int>(),
                          j.at("ky").get<int>(),
                          j.value("phase", 0.0));
  if (kind == "pinning") {
    Medium m = build_pinning_medium(j.at("t").get<double>(), j.at("r").get<double>(),
                                    j.at("nu").get<double>(),
                                    j.at("zeta").get<double>(),
                                    j.at("amp").get<double>());
    if (j.contains("fitted_b1")) {
      double want = j.at("fitted_b1").get<double>();
      require(std::abs(m.network()->b1 - want) < 1e-9, "bad-format",
              "descriptor b1 does not match the refit geometry");
    }
    return m;
  }
  if (kind == "grid-sampled") {
    std::string file = j.at("grid_file").get<std::string>();
    std::filesystem::path full =
        base_dir.empty() ? std::filesystem::path(file)
                         : std::filesystem::path(base_dir) / file;
    return grid_medium(read_grid(full.string()));
  }
  if (kind == "squared")
    return square(medium_from_descriptor(j.at("base"), base_dir));
  if (kind == "perturbed")
    return perturb_corner(medium_from_descriptor(j.at("base"), base_dir),
                          j.at("level_fraction").get<double>(),
                          j.at("eps").get<double>(),
                          j.at("eta_width").get<double>());
  if (kind == "bump-adjusted") {
    Medium base = medium_from_descriptor(j.at("base"), base_dir);
    // Deterministic rebuild: same argmax search as ensure_unique_max.
    return ensure_unique_max(base, j.at("delta").get<double>());
  }
  fail("bad-format", "unknown medium kind '" + kind + "'");
}

Medium read_medium(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "io-error", "cannot open " + path);
  nlohmann::json j;
  in >> j;
  std::string dir = std::filesystem::path(path).parent_path().string();
  return medium_from_descriptor(j, dir);
}

}  // namespace hf
