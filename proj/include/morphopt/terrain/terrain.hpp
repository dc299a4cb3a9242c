#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace morphopt::terrain {

enum class TerrainKind { flat, hills, steps };

std::string to_string(TerrainKind kind);
TerrainKind terrain_kind_from_string(const std::string& name);

// Generator knobs. Amplitude, roughness and step height are maxima that get
// multiplied by the difficulty in [0, 1].
struct TerrainParams {
  TerrainKind kind = TerrainKind::flat;
  double difficulty = 0.0;
  double amplitude = 0.15;   // m
  double frequency = 0.3;    // 1/m
  double roughness = 0.02;   // m
  double step_width = 0.5;   // m
  double step_height = 0.1;  // m
  double mu_min = 0.6;
  double mu_max = 1.0;
  double spacing = 0.02;     // m
  double x_min = -15.0;      // m
  double extent = 40.0;      // m

  void validate() const;
};

// Difficulty presets: easy 0.3, mid 0.6, hard 1.0.
double difficulty_preset(const std::string& level);

// Parses "flat", "hills_easy", "steps_hard", ... onto a copy of base.
TerrainParams terrain_preset(const std::string& name, TerrainParams base = {});

// Immutable 1-D elevation grid with an episode friction coefficient.
class Heightfield {
 public:
  Heightfield(double x_min, double spacing, std::vector<double> heights, double mu,
              uint64_t seed);

  // Linear interpolation between nodes, clamped to the boundary values.
  double height_at(double x) const;
  // Slope of the interpolant at x (zero outside the extent).
  double slope_at(double x) const;
  // height_at(x_center + o) - height_at(x_center) for each offset o.
  std::vector<double> height_scan(double x_center, std::span<const double> offsets) const;

  double x_min() const { return x_min_; }
  double x_max() const { return x_min_ + spacing_ * static_cast<double>(heights_.size() - 1); }
  double spacing() const { return spacing_; }
  double mu() const { return mu_; }
  uint64_t seed() const { return seed_; }
  const std::vector<double>& heights() const { return heights_; }

  void write_csv(std::ostream& out) const;

 private:
  double x_min_;
  double spacing_;
  std::vector<double> heights_;
  double mu_;
  uint64_t seed_;
};

Heightfield generate(const TerrainParams& params, uint64_t seed);

}  // namespace morphopt::terrain
