#pragma once

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "heterofront/errors.hpp"
#include "heterofront/vec2.hpp"

namespace hf {

// Dual-lattice cell: the integer pair (i, j) stands for the cell centered at
// (i+1/2, j+1/2), i.e. the closed unit cube [i, i+1] x [j, j+1].
struct CellCoord {
  int i = 0;
  int j = 0;
  auto operator<=>(const CellCoord&) const = default;
};

struct BBox {
  Vec2 lo{0, 0};
  Vec2 hi{0, 0};
};

// A finite union of closed unit lattice cubes. Optionally the set is
// interpreted on a cylinder: wrap_axis 0 or 1 identifies coordinates modulo
// wrap_period along that axis, which is how infinite strips (half-planes)
// are represented on a window.
class CubeSet {
 public:
  CubeSet() = default;

  void insert(CellCoord c);
  bool contains(CellCoord c) const;
  size_t size() const { return cells_.size(); }
  bool empty() const { return cells_.empty(); }
  const std::set<CellCoord>& cells() const { return cells_; }

  void set_wrap(int axis, int period);
  int wrap_axis() const { return wrap_axis_; }
  int wrap_period() const { return wrap_period_; }

  // Reduces the wrapped coordinate into [0, period).
  CellCoord canonical(CellCoord c) const;

  // True if the point lies in the union of closed cubes. Points on shared
  // faces belong to both cells; any containing cell counts.
  bool covers(Vec2 p) const;

  CubeSet translated(CellCoord k) const;

  // Integer bounding box over cell indices [imin, imax] x [jmin, jmax].
  void index_bounds(int& imin, int& imax, int& jmin, int& jmax) const;

 private:
  std::set<CellCoord> cells_;
  int wrap_axis_ = -1;
  int wrap_period_ = 0;
};

// Interior cells have all 8 wired neighbors (l-inf distance 1) present;
// everything else in the set is boundary.
struct Classification {
  std::vector<CellCoord> boundary;
  std::vector<CellCoord> interior;
};
Classification classify_cells(const CubeSet& A);

struct RegularityViolation {
  int condition = 0;  // 1 or 2
  CellCoord a, b;
};
struct RegularityReport {
  bool regular = true;
  std::vector<RegularityViolation> violations;
};
// Condition 1: every boundary cell has an interior wired neighbor.
// Condition 2: every wired-neighbor pair of boundary cells has a common
// cell of the set at l2-distance <= 1 from each.
RegularityReport is_regular(const CubeSet& A);

struct LatticePath {
  std::vector<CellCoord> vertices;  // lattice points; closed paths repeat none
  bool closed = true;
};

// Boundary edges traced with the set interior on the left of travel.
// Wrapped sets may produce open paths spanning one period. clip_x suppresses
// boundary edges lying on the vertical lines x = clip_x->first or ->second,
// which is how window-clipping artifacts of infinite sets are dropped.
// Throws irregular-input when is_regular fails.
std::vector<LatticePath> boundary_paths(
    const CubeSet& A,
    std::optional<std::pair<int, int>> clip_x = std::nullopt);

// Even-odd fill of closed boundary paths; inverse of boundary_paths for
// regular sets without wrap.
CubeSet fill_paths(const std::vector<LatticePath>& paths);

// Membership test plus optional exact cube-intersection test. When cell_test
// is absent the cube is probed on a 5x5 stencil.
struct Shape {
  std::function<bool(Vec2)> member;
  std::function<bool(Vec2 lo, Vec2 hi)> cell_test;
};
Shape disk_shape(Vec2 center, double radius);
Shape halfplane_shape(Vec2 n, double offset);  // {x : x.n <= offset}
Shape union_shape(std::vector<Shape> parts);

// Cells whose cube meets the shape, restricted to bbox. The sphere_radius is
// the caller's guarantee about K (interior+exterior sphere condition); the
// result is validated with is_regular and regularity-failure is thrown when
// that guarantee was too weak.
CubeSet approximate_regular_set(const Shape& shape, double sphere_radius,
                                BBox bbox);
// Same, but skips the regularity validation (used to window infinite sets
// whose clipped corners are irregular by construction).
CubeSet approximate_set(const Shape& shape, BBox bbox);

double hausdorff_distance(const std::vector<Vec2>& P, const std::vector<Vec2>& Q);

// Points along the topological boundary of the cube union, samples_per_edge
// per unit edge (endpoints included once).
std::vector<Vec2> sample_cubeset_boundary(const CubeSet& A, int samples_per_edge);

void write_cubeset(const CubeSet& A, const std::string& path);
CubeSet read_cubeset(const std::string& path);

}  // namespace hf
