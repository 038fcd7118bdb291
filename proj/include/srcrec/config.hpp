#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "srcrec/expression.hpp"
#include "srcrec/mesh.hpp"
#include "srcrec/optimize.hpp"

namespace srcrec {

enum class SigmaKind { cosine_plateau, constant };

struct DomainConfig {
  int dim = 1;
  Box bounds{0.0, 1.0, 0.0, 1.0};
  std::size_t nx = 100;
  std::size_t ny = 0;  // 2D only
  double nu = 0.1;
  friend bool operator==(const DomainConfig&, const DomainConfig&) = default;
};

struct TimeConfig {
  double T = 0.5;
  std::size_t steps = 50;
  SigmaKind sigma = SigmaKind::cosine_plateau;
  double t0 = 0.05;
  double sigma_value = 1.0;  // constant profile
  friend bool operator==(const TimeConfig&, const TimeConfig&) = default;
};

struct CouplingConfig {
  std::size_t n = 2;
  std::vector<Expression> q;  // row-major n x n, "0" when not given
  friend bool operator==(const CouplingConfig&, const CouplingConfig&) = default;
};

struct ObservationConfig {
  std::vector<Box> boxes{Box{0.5, 0.9, 0.0, 0.0}};
  std::vector<std::size_t> observed{0, 1};  // 0-based
  friend bool operator==(const ObservationConfig&, const ObservationConfig&) = default;
};

struct OptimizerConfig {
  double k = 1e5;
  double step = 1e-4;
  std::size_t iters = 2000;
  GradientRepresentation gradient = GradientRepresentation::nodal;
  DescentEngine engine = DescentEngine::iterative;
  std::size_t krylov_dim = 400;
  std::vector<double> k_sweep{1e2, 1e3, 1e4, 1e5, 1e6};
  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

struct SpectralConfig {
  int k_max = 8;
  std::vector<double> horizons{0.25, 0.5};
  double epsilon = 1e-6;
  std::size_t control_iters = 500;
  friend bool operator==(const SpectralConfig&, const SpectralConfig&) = default;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::optional<double> noise_snr_db;
  DomainConfig domain;
  TimeConfig time;
  CouplingConfig coupling;
  std::vector<Expression> source;  // one per component
  ObservationConfig observation;
  OptimizerConfig optimizer;
  SpectralConfig spectral;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;

  const Expression& q(std::size_t i, std::size_t j) const { return coupling.q.at(i * coupling.n + j); }
  DescentSettings descent_settings() const;
};

// INI text: [section] headers, "key = value" lines, '#' or ';' comment lines.
// Unknown sections or keys, malformed values and dimension mismatches raise
// ConfigError carrying the line number.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::string& path);
// Canonical text with every field; parse_config(emit_config(c)) == c.
std::string emit_config(const RunConfig& c);

// Defaults of the 1D linear-coupling benchmark: (0,1), 100 elements, T = 0.5,
// 50 steps, nu = 0.1, q12 = 4x-2, q21 = -4x+2, F = (sin 2 pi x, -sin 2 pi x),
// O = (0.5, 0.9), both components observed.
RunConfig default_config();

}  // namespace srcrec
