#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "heterofront/cubeset.hpp"
#include "heterofront/medium.hpp"
#include "heterofront/vec2.hpp"
#include "json.hpp"

namespace hf {

// Stationary local barriers for the forced curvature flow
//   V = -a(x) kappa - grad a . n + F.
// A supersolution piece is a pair (S, U): S a closed set, U an open
// neighborhood of the active part of its boundary, such that the front chain
// C = boundary(S) intersect U satisfies  -a kappa_S - grad a . n_S <= -F
// pointwise (kappa_S > 0 where S is locally convex, n_S the outer normal of
// S) and every corner of C turns toward S. Fronts evolving outside S then
// stay outside S under any forcing of magnitude at most F. Subsolution
// pieces are the mirror image: same machinery with the chain reversed, the
// margin changes sign, and certification asks for margin >= +F.
//
// Chains are stored as exact analytic primitives (arcs, node-curve portions,
// straight segments), so curvature and normals are evaluated in closed form
// and translations by lattice vectors are bit-exact.

// ---------------------------------------------------------------------------
// Chain primitives

struct ChainPiece {
  enum class Kind { kArc, kNodeCurve, kSegment };
  Kind kind = Kind::kSegment;

  // kArc: circle portion, traveled phi0 -> phi1. Decreasing phi means
  // clockwise travel, which puts S on the center side (kappa = +1/radius);
  // increasing phi puts S outside the circle (kappa = -1/radius).
  Vec2 center;
  double radius = 0;
  double phi0 = 0, phi1 = 0;

  // kNodeCurve: portion of the node boundary curve around vertex v,
  // traveled th0 -> th1 in the curve's angular parameter. Increasing theta
  // is counterclockwise travel, which puts S outside the enclosed hole
  // (kappa = -curve_kappa); decreasing theta puts S inside the hole.
  Vec2 v;
  double th0 = 0, th1 = 0;

  // kSegment: straight piece p -> q (kappa = 0).
  Vec2 p, q;

  // Evaluation at the normalized parameter s in [0, 1] along the travel
  // direction. kNodeCurve pieces need the generating geometry; the other
  // kinds ignore it.
  Vec2 at(double s, const NetworkGeometry* g) const;
  Vec2 tangent(double s, const NetworkGeometry* g) const;  // unit, travel dir
  Vec2 normal(double s, const NetworkGeometry* g) const;   // n_S = rot90ccw(tangent)
  double kappa(double s, const NetworkGeometry* g) const;  // + where S convex
  double length(const NetworkGeometry* g) const;

  ChainPiece reversed() const;
  ChainPiece translated(Vec2 k) const;
};

// A maximal connected run of chain pieces. Closed runs wrap around (the end
// of the last piece meets the start of the first); open runs end on the
// boundary of U.
struct ChainRun {
  std::vector<ChainPiece> pieces;
  bool closed = false;

  ChainRun reversed() const;
  ChainRun translated(Vec2 k) const;
};

// ---------------------------------------------------------------------------
// Verification report

struct CornerInfo {
  Vec2 where;
  double turn = 0;      // signed angle in_tangent -> out_tangent, radians
  bool convex = false;  // corner opens toward the piece's own set
  int run = 0;          // index of the chain run holding the corner
  int piece = 0;        // corner sits at the start of pieces[piece]
};

struct MarginReport {
  // Extremes of the sampled margin -a kappa - grad a . n along the chain.
  // Supersolutions certify by max_margin <= -forcing, subsolutions by
  // min_margin >= +forcing.
  double min_margin = 0;
  double max_margin = 0;
  Vec2 worst;  // sample attaining max_margin (min_margin for subsolutions)
  int samples = 0;
  std::vector<CornerInfo> corners;
  bool corners_ok = false;  // all corners turn the certifiable way
  double forcing = 0;       // level the certification was requested at
  bool certified = false;   // margin bound and corner test both pass at forcing
};

// ---------------------------------------------------------------------------
// Node shapes

// Closed loop bounding a node hole, with a band of half-width `band` around
// it: U = {|d| < band}, fill(U) = {d < band}, d the signed distance-like
// level function (negative inside the hole). Lattice nodes take the level
// function from the medium's network geometry; circle nodes are synthetic
// shapes for tests of the joining machinery.
struct NodeShape {
  enum class Kind { kLattice, kCircle };
  Kind kind = Kind::kCircle;
  Vec2 v;            // vertex (lattice) or center (circle)
  double r0 = 0;     // circle radius
  double band = 0;   // band half-width
  std::optional<NetworkGeometry> geom;  // lattice nodes only

  double d(Vec2 x) const;            // negative inside the hole
  double theta_of(Vec2 x) const;     // angular parameter of the projection
  Vec2 boundary_point(double th) const;
  ChainPiece curve_piece(double th0, double th1) const;  // travel th0 -> th1
  double max_extent() const;         // max distance from v to the band's edge
};

// ---------------------------------------------------------------------------
// Local pieces

// Opaque composition state: the stack of (coverage, membership) layers a
// join accumulates, plus the chain fallback used outside every layer.
struct MembershipLayers;

struct LocalSupersolution {
  enum class Kind { kEdge, kNode, kJoin };
  Kind kind = Kind::kEdge;
  bool subsolution = false;  // chain oriented for the complement barrier

  std::vector<ChainRun> chain;          // boundary(S) intersect U
  std::optional<NetworkGeometry> geom;  // present when the chain uses kNodeCurve
  std::optional<NodeShape> node;        // node pieces only
  std::shared_ptr<const MembershipLayers> layers;  // set by constructors/joins

  // Membership oracles. in_S tests the closed barrier set, in_U the open
  // localization region, in_U_closure its closure. in_fill is the filled
  // region fill(U) (node pieces and joins that absorbed node fills); for
  // plain edge pieces it coincides with in_U.
  std::function<bool(Vec2)> in_S;
  std::function<bool(Vec2)> in_U;
  std::function<bool(Vec2)> in_U_closure;
  std::function<bool(Vec2)> in_fill;

  double feature_size = 0;  // smallest geometric feature (sets the probe radius)
  double u_diameter = 0;    // diameter of U
  // Dense samples of boundary(U), used by the patching hypothesis check.
  std::vector<Vec2> u_boundary_samples;

  const NetworkGeometry* geomp() const { return geom ? &*geom : nullptr; }
  double chain_length() const;
};

using LocalSubsolution = LocalSupersolution;

// ---------------------------------------------------------------------------
// Whole-network certificate

struct SupersolutionNetwork {
  Medium medium;

  // Canonical pieces: the node at the origin and the four unit edges
  // leaving it (directions +e1, +e2, -e1, -e2 in that order). Every other
  // piece is an exact integer translate.
  LocalSupersolution node0;
  std::vector<LocalSupersolution> edge0;  // size 4
  MarginReport node_report;
  std::vector<MarginReport> edge_reports;

  double F_a = 0;  // every piece is certified for all |F| <= F_a
  double C = 0;    // uniform diameter / Hausdorff constant

  // Measured compatibility data (recorded for inspection).
  double min_edge_separation = 0;  // distinct edge localizations, same vertex
  double min_far_separation = 0;   // localizations of non-adjacent edges

  LocalSupersolution node_at(Vec2 v) const;
  // tail -> head must be a unit lattice step.
  LocalSupersolution edge_at(Vec2 tail, Vec2 head) const;
};

// ---------------------------------------------------------------------------
// Operations

// Certify the standard barrier family of a pinning medium: one node piece
// per lattice vertex, one arc piece per directed lattice edge, all exact
// translates of the canonical pieces built here. Checks the compatibility
// conditions (disjoint node neighborhoods, disjoint localizations of
// distinct edges at a shared vertex and of non-adjacent edges, admissible
// incidence at both endpoints, coverage of each lattice segment by the two
// node fills and the edge localization, uniformly bounded diameters) and
// requires a strictly positive uniform margin F_a.
SupersolutionNetwork build_network(const Medium& medium);

// Exact translation of a piece by a vector (lattice translations preserve
// margins exactly in a periodic medium).
LocalSupersolution translated_piece(const LocalSupersolution& piece, Vec2 k);

// Patch overlapping pieces: S = {x in union(U_e) : x in S_e for every e
// whose closure contains x}, U = union(U_e). Requires the patching
// hypothesis: near every point of a piece boundary that other pieces cover,
// the piece is not the local minimum (checked by set comparison on disks of
// radius one eighth of the smallest feature).
LocalSupersolution edge_join(const std::vector<LocalSupersolution>& pieces);

// Splice an incoming edge piece and an outgoing edge piece through a node:
// the output chain follows the incoming chain to its crossing of the node
// curve, detours along the node curve counterclockwise, and leaves on the
// outgoing chain. Checks admissible incidence (each edge chain crosses the
// node band exactly once, in the stated direction), that the two edge
// chains do not intersect inside the node localization, and that the
// spliced front is simple.
LocalSupersolution node_join(const LocalSupersolution& incoming,
                             const LocalSupersolution& node,
                             const LocalSupersolution& outgoing);

// Assemble the barrier of a simple lattice path (open or closed) by
// node-joining along its edges. Closed paths splice the seam at the start
// vertex and verify the resulting patch agrees with the two-sided join.
LocalSupersolution path_supersolution(const LatticePath& path,
                                      const SupersolutionNetwork& net);

// Barrier enclosing a regular cube set: the cube set is dilated by one ring
// of cells, its boundary paths are traversed with the set on the right, the
// path barriers are patched, and the enclosed cells are filled. The input
// set ends up in the interior of the output barrier.
LocalSupersolution cubeset_supersolution(const CubeSet& cells,
                                         const SupersolutionNetwork& net);

// Sample the margin -a kappa - grad a . n along the chain (about `samples`
// points distributed by arc length, at least 32 per primitive) and test
// every corner's turning direction. Supersolutions certify at `forcing`
// when max_margin <= -forcing; subsolutions when min_margin >= +forcing.
MarginReport verify_piece(const LocalSupersolution& piece, const Medium& medium,
                          double forcing, int samples = 1000);

// The complement barrier: same geometry with the chain reversed and the
// membership flipped. The complement of a supersolution blocks inward
// motion; taking the complement twice returns the original piece exactly.
LocalSubsolution complement_subsolution(const LocalSupersolution& piece);

// Serialization: the boundary chain as a JSON list of primitives (plus the
// generating geometry when node-curve portions appear). Deserialized pieces
// carry the exact chain and support verify_piece; the membership oracles of
// composite joins are not serialized.
nlohmann::json piece_to_json(const LocalSupersolution& piece);
LocalSupersolution piece_from_json(const nlohmann::json& j);

// Test helpers: synthetic pieces over arbitrary media.
// Barrier disk: S = closed disk, U = annulus of half-width `band`.
LocalSupersolution make_disk_piece(Vec2 center, double radius, double band);
// Circle node: hole = open disk, S = its closed complement inside the band.
LocalSupersolution make_circle_node(Vec2 center, double r0, double band);
// Half-plane edge piece: S = {dot(x, n) <= offset} clipped to a rectangle
// of half-width `halfwidth` around the segment p0 -> p1 on the front line.
LocalSupersolution make_halfplane_edge(Vec2 n, double offset, Vec2 p0, Vec2 p1,
                                       double halfwidth);
// Axis-aligned closed unit cube piece: S = closed cell, U = open cell.
LocalSupersolution make_cube_piece(CellCoord cell);

}  // namespace hf
