#pragma once

#include <functional>
#include <string>
#include <vector>

#include "heterofront/cubeset.hpp"
#include "heterofront/grid.hpp"
#include "heterofront/medium.hpp"

namespace hf {

// Which scalar field weighs path length in the metric.
enum class WeightKind {
  potential,  // a(x): interfaces of the potential-model energy
  gradient,   // 1/a(x)
  weight      // 1: plain Euclidean lengths
};

double weight_value(const Medium& m, WeightKind k, Vec2 x);
double weight_min_bound(const Medium& m, WeightKind k);
double weight_max_bound(const Medium& m, WeightKind k);

// Rectangular solve window; nodes at origin + (i h, j h).
struct GridSpec {
  Vec2 origin{0, 0};
  double h = 1.0 / 128;
  int nx = 0, ny = 0;
};

struct DistanceField {
  Grid2D grid;
  WeightKind weight = WeightKind::potential;
  std::string source;
};

// First-arrival distance from a finite source set, fast-marching with an
// 8-neighbor triangulated update.
DistanceField eikonal_distance(const Medium& m, WeightKind kind,
                               const std::vector<Vec2>& sources,
                               const GridSpec& gs);

// Signed weighted distance to the boundary of E = {inside}, positive in E.
DistanceField signed_distance(const std::function<bool(Vec2)>& inside,
                              const Medium& m, const GridSpec& gs);
DistanceField signed_distance(const CubeSet& E, const Medium& m,
                              const GridSpec& gs);

double point_distance(const Medium& m, WeightKind kind, Vec2 x, Vec2 y,
                      double h = 1.0 / 128);

// Shortest path on the grid graph with straight edges; upper-bounds the true
// distance. refinement picks the stencil: 8, 16, or 32 neighbors.
double dijkstra_oracle(const Medium& m, WeightKind kind, int refinement,
                       Vec2 x, Vec2 y, double h = 1.0 / 128);

struct SurfaceTensionEstimate {
  Vec2 n{1, 0};
  double sigma = 0;
  double window = 0;     // arclength of the geodesic class actually used
  double error_bar = 0;  // half-window vs full-window discrepancy
  std::vector<Vec2> witness;  // one minimizing geodesic, world coordinates
};

struct SigmaOptions {
  double h = 1.0 / 128;
  int offsets = 64;       // transversal shifts minimized over
  double margin = 1.2;    // strip half-width beyond the targets
  WeightKind weight = WeightKind::potential;
};

// Effective tension: per-length cost of the minimal interface with normal n.
// Rational n uses periodic geodesics in the class of the integer vector
// q perpendicular to n, cost min over offsets of D(x, x + m q)/(m|q|).
SurfaceTensionEstimate surface_tension(const Medium& m, Vec2 n, double T,
                                       const SigmaOptions& opt = {});

struct CornerWidthReport {
  double width = 0;  // extrapolated one-sided derivative gap, >= 0
  double width_m = 0, width_2m = 0;
  int m = 0;
  int qx = 0, qy = 0;  // geodesic class (perpendicular to n)
  int px = 0, py = 0;  // probe direction (parallel to n)
};

// Subdifferential width of the direction-to-tension map at rational n via
// second differences of the stable norm, Richardson-extrapolated in the
// window length.
CornerWidthReport corner_width(const Medium& m, Vec2 n, double angle_step = 0.1,
                               const SigmaOptions& opt = {});

struct GapReport {
  Vec2 n{1, 0};
  double min_cost = 0;  // per unit of |q|
  int kept = 0;         // offsets whose geodesic is within tolerance of min
  int raster = 0;       // torus raster resolution
  std::vector<CellCoord> uncovered;
  double uncovered_fraction = 0;
};

// Cover the torus by near-minimal periodic geodesics in the class of n's
// perpendicular; report raster cells no minimizer passes through.
GapReport gap_detect(const Medium& m, Vec2 n, int resolution,
                     const SigmaOptions& opt = {});

struct AcTensionOptions {
  double points_per_delta = 10;
  int max_sweeps = 60000;
  double tol = 1e-8;
};

// Diffuse-interface tension: minimize the scaled Allen-Cahn energy with the
// quartic well over a box with u = -tanh(n.x) boundary data; two box sizes
// extrapolate away the wall-layer cost.
SurfaceTensionEstimate ac_surface_tension(const Medium& theta, double delta,
                                          Vec2 n, double L,
                                          const AcTensionOptions& opt = {});

// Smallest integer vector parallel to v, if v is rational with denominator
// up to maxden. Returns false for (numerically) irrational directions.
bool rationalize_direction(Vec2 v, int& ix, int& iy, int maxden = 32);

}  // namespace hf
