#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "morphopt/common/errors.hpp"
#include "morphopt/terrain/terrain.hpp"

using namespace morphopt;
using namespace morphopt::terrain;

namespace {

double max_abs(const Heightfield& f) {
  double m = 0.0;
  for (double h : f.heights()) m = std::max(m, std::abs(h));
  return m;
}

}  // namespace

TEST_CASE("flat and zero-difficulty hills are identically zero") {
  TerrainParams p;
  CHECK(max_abs(generate(p, 3)) == 0.0);
  p.kind = TerrainKind::hills;
  p.difficulty = 0.0;
  CHECK(max_abs(generate(p, 3)) == 0.0);
}

TEST_CASE("generation is deterministic in the seed") {
  auto p = terrain_preset("hills_hard");
  const auto a = generate(p, 42);
  const auto b = generate(p, 42);
  CHECK(a.heights() == b.heights());
  CHECK(a.mu() == b.mu());
  const auto c = generate(p, 43);
  CHECK(a.heights() != c.heights());
}

TEST_CASE("hills amplitude bound holds on every node") {
  TerrainParams p;
  p.kind = TerrainKind::hills;
  p.difficulty = 1.0;
  p.amplitude = 0.2;
  p.roughness = 0.03;
  const double bound = p.amplitude + p.amplitude / 3.0 + p.roughness;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    CHECK(max_abs(generate(p, seed)) <= bound);
  }
}

TEST_CASE("hills magnitude is non-decreasing in difficulty") {
  TerrainParams p;
  p.kind = TerrainKind::hills;
  for (uint64_t seed : {1u, 2u, 3u}) {
    double prev = 0.0;
    for (double d = 0.0; d <= 1.0001; d += 0.1) {
      p.difficulty = std::min(d, 1.0);
      const double m = max_abs(generate(p, seed));
      CHECK(m >= prev);
      prev = m;
    }
  }
}

TEST_CASE("friction stays inside its range") {
  TerrainParams p = terrain_preset("steps_mid");
  p.mu_min = 0.4;
  p.mu_max = 0.9;
  for (uint64_t seed = 0; seed < 200; ++seed) {
    const double mu = generate(p, seed).mu();
    CHECK(mu >= 0.4);
    CHECK(mu <= 0.9);
  }
}

TEST_CASE("height_at interpolates and clamps") {
  Heightfield f(0.0, 0.1, {0.0, 0.2, 0.5, -0.1}, 0.8, 0);
  CHECK(f.height_at(0.1) == 0.2);
  CHECK(f.height_at(0.2) == 0.5);
  CHECK(f.height_at(0.05) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(f.height_at(5.0) == -0.1);
  CHECK(f.height_at(-5.0) == 0.0);
  CHECK(f.slope_at(0.05) == doctest::Approx(2.0));
}

TEST_CASE("hills are continuous at grid resolution") {
  auto p = terrain_preset("hills_hard");
  const auto f = generate(p, 9);
  double worst = 0.0;
  const auto& h = f.heights();
  for (std::size_t i = 1; i < h.size(); ++i) worst = std::max(worst, std::abs(h[i] - h[i - 1]));
  // Between nodes the interpolant never jumps more than one node difference.
  for (double x = -2.0; x < 2.0; x += 0.0037) {
    CHECK(std::abs(f.height_at(x + 0.001) - f.height_at(x)) <= worst + 1e-12);
  }
}

TEST_CASE("steps are piecewise constant plateaus") {
  TerrainParams p = terrain_preset("steps_hard");
  p.step_width = 0.5;
  const auto f = generate(p, 5);
  const auto& h = f.heights();
  int changes = 0;
  for (std::size_t i = 1; i < h.size(); ++i) {
    if (h[i] != h[i - 1]) {
      ++changes;
      CHECK(std::abs(h[i] - h[i - 1]) <= p.step_height + 1e-12);
    }
  }
  CHECK(changes > 0);
  CHECK(changes <= static_cast<int>(p.extent / p.step_width) + 1);
}

TEST_CASE("height_scan") {
  SUBCASE("flat field gives zeros") {
    const auto f = generate(TerrainParams{}, 1);
    const std::vector<double> offsets{-0.2, -0.1, 0.1, 0.2, 0.3};
    for (double v : f.height_scan(1.3, offsets)) CHECK(v == 0.0);
  }
  SUBCASE("self-relative zero offset") {
    const auto f = generate(terrain_preset("hills_mid"), 2);
    const std::vector<double> zero{0.0};
    CHECK(f.height_scan(0.77, zero)[0] == 0.0);
  }
  SUBCASE("two plateaus") {
    // Nodes 0..9 at 0.0, nodes 10..19 at 0.1, spacing 0.02: edge between x=0.18 and x=0.2.
    std::vector<double> h(20, 0.0);
    for (std::size_t i = 10; i < 20; ++i) h[i] = 0.1;
    Heightfield f(0.0, 0.02, h, 1.0, 0);
    const std::vector<double> offsets{-0.1, 0.0, 0.1, 0.19};
    const auto scan = f.height_scan(0.1, offsets);
    CHECK(scan[0] == 0.0);
    CHECK(scan[1] == 0.0);
    CHECK(scan[2] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(scan[3] == doctest::Approx(0.1).epsilon(1e-12));
  }
}

TEST_CASE("invalid terrain parameters are rejected") {
  TerrainParams p;
  p.step_width = 0.0;
  CHECK_THROWS_AS(generate(p, 0), ConfigError);
  p = TerrainParams{};
  p.amplitude = std::nan("");
  CHECK_THROWS_AS(generate(p, 0), ConfigError);
  CHECK_THROWS_AS(terrain_preset("lava_hard"), ConfigError);
}

TEST_CASE("csv export has a header and one row per node") {
  Heightfield f(0.0, 0.5, {0.0, 1.0, 2.0}, 1.0, 0);
  std::ostringstream out;
  f.write_csv(out);
  const auto s = out.str();
  CHECK(s.rfind("x,h\n", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 4);
}
