#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "heterofront/grid.hpp"
#include "heterofront/medium.hpp"

namespace hf {

struct McfParams {
  double sigma_reg_factor = 1e-6;  // gradient regularization, times max a
  double reinit_motion = 1.5;      // redistance after this much accumulated
                                   // front motion, in cells; 0 disables
  int reinit_every = 0;            // hard step-count cap between sweeps; 0 = none
  double band_halfwidth = 0;       // active band in cells; 0 = full grid
  double cfl_safety = 0.9;
};

// Level-set snapshot: u > 0 inside the evolving set, outward normal -Du/|Du|.
// The driving field is evaluated at x/eps and the forcing F enters at 1/eps,
// so eps = 1 is the cell-scale flow. Grid coordinates map to medium
// coordinates through the affine frame below; the default is the identity,
// rotated strips use an orthonormal pair.
struct LevelSetState {
  Grid2D u;
  double eps = 1;
  double F = 0;
  double t = 0;
  bool periodic_x = false, periodic_y = false;  // else linear extrapolation
  Vec2 world_origin{0, 0};  // medium point of grid coordinate (0, 0)
  Vec2 world_ex{1, 0};      // medium direction of the grid x axis
  Vec2 world_ey{0, 1};      // medium direction of the grid y axis
  double max_a = 1;       // cached coefficient bound
  double grad_bound = 0;  // cached sup |Da| estimate
  double sigma_reg = 0;
  McfParams params;
  std::vector<int> band;          // active node indices; empty = every node
  std::vector<unsigned> band_ij;  // same nodes, packed (j << 16) | i
  int steps_since_reinit = 0;
  double motion_since_reinit = 0;  // summed step increments, a motion proxy
  // per-node coefficient caches (position only, so valid for the whole run)
  std::vector<double> a_cache, cx_cache, cy_cache;
  std::vector<unsigned char> cache_ok;
};

LevelSetState make_level_set_state(Grid2D u0, const Medium& m, double eps,
                                   double F, bool periodic_x = false,
                                   bool periodic_y = false,
                                   McfParams params = {});

// Largest stable step: min of the parabolic bound h^2/(8 max a) and the
// advective bound h eps / (4 (sup|Da| + |F|)).
double cfl_limit(const LevelSetState& s);

// One explicit monotone update of the forced curvature-flow operator
//   u_t = a tr((I - u^ ox u^) D^2 u) + (1/eps) Da . Du + (1/eps) F |Du|.
// Returns the max-norm of the applied increment.
double mcf_step(LevelSetState& s, const Medium& m, double dt);

// Redistance u to a signed Euclidean distance of its own zero level (subcell
// seeds, so the level moves by far less than h/2) and rebuild the active
// band. Returns false when u has one sign only, in which case u is untouched.
bool reinitialize(LevelSetState& s);

struct FrontCurve {
  std::vector<Vec2> pts;
  bool closed = false;
};

// Marching-squares zero contour with linear interpolation.
std::vector<FrontCurve> extract_zero_contour(const Grid2D& g);
std::vector<FrontCurve> extract_front(const LevelSetState& s);

struct TrajectoryFrame {
  double t = 0;
  std::vector<FrontCurve> fronts;
};

struct FrontTrajectory {
  std::vector<TrajectoryFrame> frames;
  double frozen_at = -1;  // time of an exact discrete fixpoint; <0 if none
  bool hit_boundary = false;
  bool extinct = false;
};

FrontTrajectory mcf_evolve(LevelSetState s, const Medium& m, double T_end,
                           double record_every);

// min / max of x.n over every front vertex of one frame
std::pair<double, double> displacement_extremes(const TrajectoryFrame& frame,
                                                Vec2 n);
// symmetric Hausdorff distance between a frame's fronts and a reference curve
double hausdorff_distance(const std::vector<FrontCurve>& fronts,
                          const std::vector<Vec2>& reference);

struct SpeedOptions {
  double h = 1.0 / 64;
  double conv_tol = 5e-3;  // nested-window agreement for early stop
  double min_time = 2.0;   // earliest time a moving front may stop at
  double record_dt = 0.05;
};

struct SpeedPair {
  double c_min = 0;        // asymptotic speed of the slowest front point
  double c_max = 0;        // and of the fastest
  double sensitivity = 0;  // 40% vs 60% averaging-window discrepancy
  double window = 0;       // time interval actually used
  double frozen_at = -1;
};

// Planar-front speeds for normal n, which must be rational (the medium is
// only periodic across the strip for integer transverse vectors). Evolves
// u0 = -x.n on a strip one transverse period wide that slides or grows with
// the front, and reads the min / max displacement rates over the second half
// of the run. Early stops: an exact discrete freeze, a stalled front, or
// nested averaging windows agreeing to conv_tol.
SpeedPair front_speed(const Medium& m, Vec2 n, double F, double T_end,
                      const SpeedOptions& opt = {});

// Bisection for the pinning thresholds: largest F with c^*(n,F) below tol and
// largest F with c_*(n,-F) above -tol. Both brackets are tol wide; F_max is
// returned when the corresponding side stays pinned throughout.
std::pair<double, double> pinning_interval(const Medium& m, Vec2 n,
                                           double F_max, double tol,
                                           const SpeedOptions& opt = {});

// Centered difference (c(n,dF) - c(n,-dF)) / (2 dF) of the common speed.
double mobility(const Medium& m, Vec2 n, double dF,
                const SpeedOptions& opt = {});

struct CompactSet {
  std::function<bool(Vec2)> inside;
  std::vector<Vec2> boundary;
};

CompactSet disk_set(Vec2 center, double r, int samples = 720);
CompactSet ellipse_set(Vec2 center, double a, double b, int samples = 720);
CompactSet rounded_square_set(Vec2 center, double half, double corner,
                              int samples = 720);

struct DriftOptions {
  double h = 0.015;          // spacing in medium units (the rescaled frame)
  double margin = 2.0;       // window beyond the shape, medium units
  double record_every = 0.25;
  double stall_bound = 0.2;  // stop when projected extra drift is below this
};

struct DriftReport {
  double drift = 0;  // sup over recorded times of d_H(front, boundary of K)
  bool extinct = false;
  bool departed = false;
  double frozen_at = -1;
  double projected_extra = 0;  // extrapolated drift bound after early stop
};

// Hausdorff drift of the front started on the boundary of K under forcing F;
// the solve runs in the rescaled frame y = x/eps and reports lengths in x.
DriftReport pinned_drift(const Medium& m, const CompactSet& K, double eps,
                         double F, double T_end,
                         const DriftOptions& opt = {});

}  // namespace hf
