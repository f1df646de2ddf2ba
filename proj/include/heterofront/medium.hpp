#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "heterofront/errors.hpp"
#include "heterofront/grid.hpp"
#include "heterofront/vec2.hpp"
#include "json.hpp"

namespace hf {

struct MediumEval {
  double a = 1.0;
  Vec2 grad{0, 0};
  Mat2 hess{};
};

// One lattice arc as a circle segment. Traversal runs from tail to head
// clockwise around the center (angle decreases), which keeps the center side
// of the arc on the right of travel and the bulge on the left.
struct ArcSpec {
  Vec2 center{0, 0};
  double radius = 1;
  double ang_tail = 0;  // polar angle of tail on the circle
  double ang_head = 0;  // ang_head < ang_tail, traversal decreases the angle
  Vec2 tail{0, 0}, head{0, 0};

  Vec2 point(double ang) const {
    return center + Vec2{radius * std::cos(ang), radius * std::sin(ang)};
  }
  // Unit travel-direction tangent for the clockwise parameterization.
  Vec2 tangent(double ang) const { return {std::sin(ang), -std::cos(ang)}; }
  ArcSpec translated(Vec2 k) const {
    ArcSpec s = *this;
    s.center += k;
    s.tail += k;
    s.head += k;
    return s;
  }
};

struct NodeProjection {
  double d = 0;       // signed distance to the node curve, negative in the hole
  double theta = 0;   // foot parameter on the curve
  Vec2 foot{0, 0};
  Vec2 grad{0, 0};    // gradient of the signed distance
  double kappa = 0;   // curve curvature at the foot (positive, hole convex side)
};

// Geometry of the constructed medium: one closed curve around every lattice
// vertex (the hole boundary), eight circular arcs incident on each vertex,
// and the profile eta applied to the signed distance.
struct NetworkGeometry {
  double t = 2, R = 0, r = 0.195, nu = 0.09, zeta = 0.03, amp = 0.45;
  double b1 = 0;          // node curve rho(th) = r*(1 + b1*cos(4 th))
  double A = 0;           // max |eta'|
  double kappa_max = 0;   // max curvature of the node curve
  double ortho_bound = 0;      // (2 R A)^{-1}, 0 when amp = 0
  double band_dev_max = 0;     // measured max |n_arc . grad d| inside the band
  double crossing_residual = 0;
  double cross_phi = 0;    // arc angle parameter of the tail-curve crossing
  double cross_theta = 0;  // curve parameter of that crossing
  double sagitta = 0;
  double arc_min_separation = 0;

  // Node curve around a vertex, counterclockwise in theta.
  double rho(double th) const { return r * (1 + b1 * std::cos(4 * th)); }
  double drho(double th) const { return -4 * r * b1 * std::sin(4 * th); }
  double ddrho(double th) const { return -16 * r * b1 * std::cos(4 * th); }
  Vec2 curve_point(Vec2 v, double th) const {
    return v + Vec2{rho(th) * std::cos(th), rho(th) * std::sin(th)};
  }
  Vec2 curve_tangent(Vec2 v, double th) const;  // unit, counterclockwise
  double curve_kappa(double th) const;          // positive for the oval
  // Signed distance with foot data; exact Newton projection (bisection
  // fallback). Valid for |p - v| within a few radii of the curve.
  NodeProjection project(Vec2 v, Vec2 p) const;

  // Profile eta: amp for s <= -zeta, 0 for s >= zeta, quintic drop between.
  double eta(double s) const;
  double deta(double s) const;
  double ddeta(double s) const;

  // Canonical directed arc leaving the origin toward dir (0:+x 1:+y 2:-x 3:-y).
  ArcSpec arc(int dir) const;
  // Directed arc for the lattice edge tail -> head (unit lattice step).
  ArcSpec arc_for_edge(Vec2 tail, Vec2 head) const;

  // Angle parameter where the arc crosses the node curve around vertex v
  // (v must be one of the arc's endpoints). Also returns the curve parameter.
  void arc_crossing(const ArcSpec& arc, Vec2 v, double& phi, double& theta) const;
};

class MediumImpl;

// Periodic coefficient field on the unit torus, 1 <= a <= lambda. Value
// semantics, cheap to copy; evaluators are immutable and thread-safe.
class Medium {
 public:
  Medium();  // a == 1
  explicit Medium(std::shared_ptr<const MediumImpl> impl);

  MediumEval eval(Vec2 x, int order = 2) const;
  double value(Vec2 x) const { return eval(x, 0).a; }
  Vec2 gradient(Vec2 x) const { return eval(x, 1).grad; }

  double lambda() const;
  const std::string& kind() const;
  const NetworkGeometry* network() const;
  const std::vector<std::string>& warnings() const { return warnings_; }
  void add_warning(std::string w) { warnings_.push_back(std::move(w)); }

  nlohmann::json descriptor() const;  // throws not-serializable for closures
  // Descriptor that may write sidecar files (raw grids) into dir.
  nlohmann::json descriptor_with_sidecar(const std::string& dir,
                                         const std::string& stem) const;
  const MediumImpl& impl() const { return *impl_; }

 private:
  std::shared_ptr<const MediumImpl> impl_;
  std::vector<std::string> warnings_;
};

Medium constant_medium(double c);
// a(x) = mean + amplitude * cos(2 pi (kx x + ky y) + phase)
Medium laminar_medium(double mean, double amplitude, int kx, int ky,
                      double phase = 0.0);
Medium analytic_medium(std::function<MediumEval(Vec2, int)> eval, double lambda,
                       const std::string& label = "analytic");
// Bilinear periodic interpolation of one unit cell of samples (value at node
// (i/n, j/n)); exact to order 1, Hessian by differencing.
Medium grid_medium(Grid2D unit_cell);

// The constructed pinning medium a = 1 + eta(signed distance to the hole
// curves). amp = 0 gives a == 1 with the geometry still attached.
Medium build_pinning_medium(double t, double r, double nu, double zeta,
                            double amp);
Medium default_pinning_medium();

// theta = a^2.
Medium square(const Medium& m);

// Multiplies a by (1 + psi(signed distance to the level curve {a = c})),
// c = level_fraction * max a. The level curve must be one closed loop.
Medium perturb_corner(const Medium& m, double level_fraction, double eps,
                      double eta_width);

struct CornerDiagnostics {
  double level_c = 0;
  double level_c_fraction = 0;
  double eps = 0;
  double kappa_max = 0;      // max |curvature| of the level curve
  double psi_slope = 0;      // psi'(0)
  double psi_max = 0;        // max |psi|
  double min_margin = 0;     // min over boundary samples of -a k - Da.n
  double curve_length = 0;
  double w1p_p = 4;
  double grad_lp_pow = 0;    // integral of |D phi|^p
  double coarea_bound = 0;   // 2^{p+1} kappa^p eta_width
  Vec2 max_point{0, 0};
};
const CornerDiagnostics* corner_diagnostics(const Medium& m);

// Adds delta * (radially decreasing bump) at a grid argmax so the maximum is
// unique and nondegenerate. delta = 0 returns the input with a warning.
Medium ensure_unique_max(const Medium& m, double delta);

void write_medium(const Medium& m, const std::string& path);
Medium read_medium(const std::string& path);
Medium medium_from_descriptor(const nlohmann::json& j,
                              const std::string& base_dir = "");

}  // namespace hf
