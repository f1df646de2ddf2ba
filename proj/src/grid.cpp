#include "heterofront/grid.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace hf {

double Grid2D::interp(Vec2 p) const {
  double fx = (p.x - origin.x) / h;
  double fy = (p.y - origin.y) / h;
  fx = std::clamp(fx, 0.0, static_cast<double>(nx - 1));
  fy = std::clamp(fy, 0.0, static_cast<double>(ny - 1));
  int i = std::min(static_cast<int>(fx), nx - 2);
  int j = std::min(static_cast<int>(fy), ny - 2);
  if (nx == 1) i = 0;
  if (ny == 1) j = 0;
  double tx = fx - i, ty = fy - j;
  if (nx == 1) tx = 0;
  if (ny == 1) ty = 0;
  double v00 = at(i, j);
  double v10 = at(std::min(i + 1, nx - 1), j);
  double v01 = at(i, std::min(j + 1, ny - 1));
  double v11 = at(std::min(i + 1, nx - 1), std::min(j + 1, ny - 1));
  return (1 - tx) * (1 - ty) * v00 + tx * (1 - ty) * v10 + (1 - tx) * ty * v01 +
         tx * ty * v11;
}

Vec2 Grid2D::interp_grad(Vec2 p) const {
  double fx = (p.x - origin.x) / h;
  double fy = (p.y - origin.y) / h;
  fx = std::clamp(fx, 0.0, static_cast<double>(nx - 1));
  fy = std::clamp(fy, 0.0, static_cast<double>(ny - 1));
  int i = std::min(static_cast<int>(fx), nx - 2);
  int j = std::min(static_cast<int>(fy), ny - 2);
  if (i < 0) i = 0;
  if (j < 0) j = 0;
  double tx = fx - i, ty = fy - j;
  double v00 = at(i, j);
  double v10 = at(std::min(i + 1, nx - 1), j);
  double v01 = at(i, std::min(j + 1, ny - 1));
  double v11 = at(std::min(i + 1, nx - 1), std::min(j + 1, ny - 1));
  double gx = ((1 - ty) * (v10 - v00) + ty * (v11 - v01)) / h;
  double gy = ((1 - tx) * (v01 - v00) + tx * (v11 - v10)) / h;
  return {gx, gy};
}

double Grid2D::min_value() const {
  return *std::min_element(data.begin(), data.end());
}

double Grid2D::max_value() const {
  return *std::max_element(data.begin(), data.end());
}

void write_grid(const Grid2D& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "io-error", "cannot open " + path + " for writing");
  char header[64];
  int len = std::snprintf(header, sizeof header, "GRID2D %d %d\n", g.ny, g.nx);
  out.write(header, len);
  out.write(reinterpret_cast<const char*>(g.data.data()),
            static_cast<std::streamsize>(g.data.size() * sizeof(double)));
  require(out.good(), "io-error", "short write to " + path);
}

Grid2D read_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "io-error", "cannot open " + path);
  std::string line;
  std::getline(in, line);
  int n = 0, m = 0;
  if (std::sscanf(line.c_str(), "GRID2D %d %d", &n, &m) != 2 || n <= 0 || m <= 0)
    fail("bad-format", path + ": expected header 'GRID2D n m'");
  Grid2D g(m, n, 1.0, {0, 0});
  in.read(reinterpret_cast<char*>(g.data.data()),
          static_cast<std::streamsize>(g.data.size() * sizeof(double)));
  require(in.gcount() ==
              static_cast<std::streamsize>(g.data.size() * sizeof(double)),
          "bad-format", path + ": truncated payload");
  return g;
}

void write_pgm(const Grid2D& g, const std::string& path, double lo, double hi) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "io-error", "cannot open " + path + " for writing");
  char header[64];
  int len = std::snprintf(header, sizeof header, "P5\n%d %d\n255\n", g.nx, g.ny);
  out.write(header, len);
  double span = hi > lo ? hi - lo : 1.0;
  std::vector<uint8_t> row(static_cast<size_t>(g.nx));
  // PGM scans top to bottom; emit rows with decreasing j so +y is up.
  for (int j = g.ny - 1; j >= 0; --j) {
    for (int i = 0; i < g.nx; ++i) {
      double t = (g.at(i, j) - lo) / span;
      t = std::clamp(t, 0.0, 1.0);
      row[static_cast<size_t>(i)] = static_cast<uint8_t>(t * 255.0 + 0.5);
    }
    out.write(reinterpret_cast<const char*>(row.data()), g.nx);
  }
  require(out.good(), "io-error", "short write to " + path);
}

}  // namespace hf
