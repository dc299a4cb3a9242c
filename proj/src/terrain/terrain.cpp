#include "morphopt/terrain/terrain.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "morphopt/common/errors.hpp"
#include "morphopt/common/rng.hpp"

namespace morphopt::terrain {

std::string to_string(TerrainKind kind) {
  switch (kind) {
    case TerrainKind::flat: return "flat";
    case TerrainKind::hills: return "hills";
    case TerrainKind::steps: return "steps";
  }
  return "flat";
}

TerrainKind terrain_kind_from_string(const std::string& name) {
  if (name == "flat") return TerrainKind::flat;
  if (name == "hills") return TerrainKind::hills;
  if (name == "steps") return TerrainKind::steps;
  throw ConfigError("unknown terrain kind '" + name + "'");
}

void TerrainParams::validate() const {
  for (double v : {difficulty, amplitude, frequency, roughness, step_width, step_height, mu_min,
                   mu_max, spacing, x_min, extent}) {
    if (!std::isfinite(v)) throw ConfigError("terrain parameters must be finite");
  }
  if (difficulty < 0.0 || difficulty > 1.0) throw ConfigError("terrain difficulty must be in [0, 1]");
  if (amplitude < 0.0 || roughness < 0.0 || step_height < 0.0) {
    throw ConfigError("terrain amplitude, roughness and step height must be non-negative");
  }
  if (!(step_width > 0.0)) throw ConfigError("terrain step width must be positive");
  if (frequency < 0.0) throw ConfigError("terrain frequency must be non-negative");
  if (!(mu_min > 0.0) || mu_min > mu_max) throw ConfigError("friction range must satisfy 0 < min <= max");
  if (!(spacing > 0.0) || !(extent > spacing)) throw ConfigError("terrain grid spacing/extent invalid");
}

double difficulty_preset(const std::string& level) {
  if (level == "easy") return 0.3;
  if (level == "mid") return 0.6;
  if (level == "hard") return 1.0;
  throw ConfigError("unknown difficulty level '" + level + "'");
}

TerrainParams terrain_preset(const std::string& name, TerrainParams base) {
  if (name == "flat") {
    base.kind = TerrainKind::flat;
    base.difficulty = 0.0;
    return base;
  }
  const auto sep = name.find('_');
  if (sep == std::string::npos) throw ConfigError("unknown terrain preset '" + name + "'");
  base.kind = terrain_kind_from_string(name.substr(0, sep));
  if (base.kind == TerrainKind::flat) throw ConfigError("unknown terrain preset '" + name + "'");
  base.difficulty = difficulty_preset(name.substr(sep + 1));
  return base;
}

Heightfield::Heightfield(double x_min, double spacing, std::vector<double> heights, double mu,
                         uint64_t seed)
    : x_min_(x_min), spacing_(spacing), heights_(std::move(heights)), mu_(mu), seed_(seed) {
  require(spacing_ > 0.0, "heightfield spacing must be positive");
  require(heights_.size() >= 2, "heightfield needs at least two nodes");
}

double Heightfield::height_at(double x) const {
  const double u = (x - x_min_) / spacing_;
  if (!(u > 0.0)) return heights_.front();
  const auto last = static_cast<double>(heights_.size() - 1);
  if (u >= last) return heights_.back();
  const auto i = static_cast<std::size_t>(u);
  const double t = u - static_cast<double>(i);
  return heights_[i] + t * (heights_[i + 1] - heights_[i]);
}

double Heightfield::slope_at(double x) const {
  const double u = (x - x_min_) / spacing_;
  const auto last = static_cast<double>(heights_.size() - 1);
  if (!(u > 0.0) || u >= last) return 0.0;
  const auto i = static_cast<std::size_t>(u);
  return (heights_[i + 1] - heights_[i]) / spacing_;
}

std::vector<double> Heightfield::height_scan(double x_center, std::span<const double> offsets) const {
  const double h0 = height_at(x_center);
  std::vector<double> scan(offsets.size());
  for (std::size_t i = 0; i < offsets.size(); ++i) scan[i] = height_at(x_center + offsets[i]) - h0;
  return scan;
}

void Heightfield::write_csv(std::ostream& out) const {
  out << "x,h\n";
  out.precision(17);
  for (std::size_t i = 0; i < heights_.size(); ++i) {
    out << x_min_ + spacing_ * static_cast<double>(i) << ',' << heights_[i] << '\n';
  }
}

Heightfield generate(const TerrainParams& params, uint64_t seed) {
  params.validate();
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double mu = params.mu_min == params.mu_max
                        ? params.mu_min
                        : std::uniform_real_distribution<double>(params.mu_min, params.mu_max)(rng);

  const auto n = static_cast<std::size_t>(std::floor(params.extent / params.spacing)) + 1;
  std::vector<double> h(n, 0.0);
  const double d = params.difficulty;

  switch (params.kind) {
    case TerrainKind::flat:
      break;
    case TerrainKind::hills: {
      const double two_pi = 2.0 * std::numbers::pi;
      const double phase1 = std::uniform_real_distribution<double>(0.0, two_pi)(rng);
      const double phase2 = std::uniform_real_distribution<double>(0.0, two_pi)(rng);
      const double a = d * params.amplitude;
      const double r = d * params.roughness;
      for (std::size_t i = 0; i < n; ++i) {
        const double x = params.x_min + params.spacing * static_cast<double>(i);
        const double noise = unit(rng);
        h[i] = a * std::sin(two_pi * params.frequency * x + phase1) +
               a / 3.0 * std::sin(two_pi * 2.7 * params.frequency * x + phase2) + r * noise;
      }
      break;
    }
    case TerrainKind::steps: {
      const double step = d * params.step_height;
      double level = 0.0;
      long plateau = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double along = params.spacing * static_cast<double>(i);
        const auto k = static_cast<long>(std::floor(along / params.step_width + 1e-9));
        while (plateau < k) {
          level += step * unit(rng);
          ++plateau;
        }
        h[i] = level;
      }
      break;
    }
  }
  return Heightfield(params.x_min, params.spacing, std::move(h), mu, seed);
}

}  // namespace morphopt::terrain
