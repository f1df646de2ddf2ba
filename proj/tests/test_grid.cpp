#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "heterofront/grid.hpp"

using namespace hf;

TEST_CASE("grid round-trips through the binary dump") {
  Grid2D g(7, 5, 0.25, {-1.0, 2.0});
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) g.at(i, j) = i * 100.0 + j + 0.5;

  auto path = (std::filesystem::temp_directory_path() / "hf_grid_rt.bin").string();
  write_grid(g, path);
  Grid2D r = read_grid(path);
  std::remove(path.c_str());

  REQUIRE(r.nx == g.nx);
  REQUIRE(r.ny == g.ny);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) CHECK(r.at(i, j) == g.at(i, j));
}

TEST_CASE("bilinear interpolation reproduces affine fields exactly") {
  Grid2D g(9, 9, 0.5, {1.0, -1.0});
  auto f = [](Vec2 p) { return 3.0 * p.x - 2.0 * p.y + 0.75; };
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) g.at(i, j) = f(g.node(i, j));

  for (Vec2 p : {Vec2{1.3, -0.2}, Vec2{2.71, 1.99}, Vec2{4.99, 2.99}}) {
    CHECK(g.interp(p) == doctest::Approx(f(p)).epsilon(1e-14));
    Vec2 grad = g.interp_grad(p);
    CHECK(grad.x == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(grad.y == doctest::Approx(-2.0).epsilon(1e-12));
  }
}

TEST_CASE("reading a truncated dump reports bad-format") {
  auto path = (std::filesystem::temp_directory_path() / "hf_grid_bad.bin").string();
  {
    FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("GRID2D 4 4\n", f);
    double one = 1.0;
    std::fwrite(&one, sizeof one, 1, f);
    std::fclose(f);
  }
  CHECK_THROWS_WITH_AS(read_grid(path), doctest::Contains("truncated"), Error);
  std::remove(path.c_str());
}
