#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "heterofront/errors.hpp"
#include "heterofront/vec2.hpp"

namespace hf {

// Node-centered scalar samples on a uniform square grid. Node (i, j) sits at
// origin + (i*h, j*h); storage is row-major in j (one y-row at a time), which
// is also the layout of the on-disk dump.
struct Grid2D {
  int nx = 0;
  int ny = 0;
  double h = 1.0;
  Vec2 origin{0, 0};
  std::vector<double> data;

  Grid2D() = default;
  Grid2D(int nx_, int ny_, double h_, Vec2 origin_, double fill = 0.0)
      : nx(nx_), ny(ny_), h(h_), origin(origin_),
        data(static_cast<size_t>(nx_) * ny_, fill) {}

  double& at(int i, int j) { return data[static_cast<size_t>(j) * nx + i]; }
  double at(int i, int j) const { return data[static_cast<size_t>(j) * nx + i]; }
  Vec2 node(int i, int j) const { return origin + Vec2{i * h, j * h}; }
  size_t size() const { return data.size(); }

  bool contains_node(int i, int j) const {
    return i >= 0 && i < nx && j >= 0 && j < ny;
  }

  // Bilinear interpolation, clamped to the grid rectangle.
  double interp(Vec2 p) const;
  // Gradient of the bilinear interpolant (cellwise; clamped like interp).
  Vec2 interp_grad(Vec2 p) const;

  double min_value() const;
  double max_value() const;
};

// Binary dump: one text header line "GRID2D n m\n" (n rows, m columns),
// then n*m native little-endian 64-bit floats, row-major.
void write_grid(const Grid2D& g, const std::string& path);
Grid2D read_grid(const std::string& path);

// 8-bit PGM snapshot, values linearly mapped from [lo, hi] to 0..255.
void write_pgm(const Grid2D& g, const std::string& path, double lo, double hi);

}  // namespace hf
