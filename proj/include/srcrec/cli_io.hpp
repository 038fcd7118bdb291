#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "srcrec/config.hpp"
#include "srcrec/forward.hpp"
#include "srcrec/mesh.hpp"
#include "srcrec/optimize.hpp"

namespace srcrec {

// Discrete objects described by a configuration. Solvers keep pointers to the
// mesh, so a Problem stays where it was built.
class Problem {
 public:
  explicit Problem(const RunConfig& cfg);
  Problem(const Problem&) = delete;
  Problem& operator=(const Problem&) = delete;

  RunConfig config;
  Mesh mesh;
  TimeGrid grid;
  SigmaProfile sigma;
  CouplingMatrix q;
  std::vector<NodalField> f_true;
  SubdomainMask obs;
};

// Noise-free state of the configured source, plus seeded Gaussian noise on the
// observed components inside O when the configuration asks for it.
FieldSeries synthesize_observations(const Problem& p);

FieldSeries read_trajectory_csv(std::istream& is, const TimeGrid& grid, std::size_t n_components,
                                std::size_t node_count);

struct InversionResult {
  std::vector<NodalField> f;
  double rel_err = 0.0;
  std::vector<double> component_err;
  std::size_t best_iter = 0;
  std::size_t iterations = 0;
  std::size_t increases = 0;
  bool diverged = false;
  DescentTrace trace;
};

// Least-squares reconstruction from synthetic observations of the configured
// source, or from the given observations.
InversionResult run_inversion(const RunConfig& cfg, const FieldSeries* observations = nullptr);

// Runs fn(i) for i < n on up to `threads` worker threads.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

// Benchmark grids.
struct BenchCell {
  std::string group;     // figure row, e.g. "1d-cubic-F1-O1"
  std::string observed;  // "both", "first", "second"
  RunConfig config;
  std::optional<double> reference;  // published relative error, when one exists
};

// Regularization sweep on the default configuration.
std::vector<RunConfig> sweep_configs(std::span<const double> ks, std::size_t iters = 80000);
std::vector<BenchCell> figure_cells_1d(std::size_t iters = 80000);
std::vector<BenchCell> figure_cells_2d(std::size_t iters = 5000000);

struct TrendSummary {
  std::size_t groups = 0;
  std::size_t both_wins = 0;     // groups where observing both components beats every single one
  std::size_t accuracy_ok = 0;   // groups whose both-component error is within the bound
  std::size_t accuracy_checked = 0;
};

// Groups cells by `group` and compares the "both" cell with the single-component ones.
TrendSummary summarize_trend(std::span<const BenchCell> cells, std::span<const InversionResult> results,
                             double both_bound, std::optional<double> reference_cap = std::nullopt);

struct CommandOptions {
  std::filesystem::path out = "out";
  std::size_t threads = 1;
  std::optional<std::filesystem::path> observations;  // invert: read instead of synthesizing
  int bench_dim = 0;                                  // bench-figures: 1, 2 or 0 for both
  std::optional<std::size_t> iters;                   // overrides for sweeps and benches
};

// Subcommands. Each writes CSV files into options.out and returns the exit status.
int cmd_forward(const RunConfig& cfg, const CommandOptions& opt);
int cmd_synth(const RunConfig& cfg, const CommandOptions& opt);
int cmd_invert(const RunConfig& cfg, const CommandOptions& opt);
int cmd_spectral(const RunConfig& cfg, const CommandOptions& opt);
int cmd_control(const RunConfig& cfg, const CommandOptions& opt);
int cmd_volterra_test(const RunConfig& cfg, const CommandOptions& opt);
int cmd_sweep_k(const RunConfig& cfg, const CommandOptions& opt);
int cmd_bench_figures(const RunConfig& cfg, const CommandOptions& opt);
int cmd_reconstruct(const RunConfig& cfg, const CommandOptions& opt);

constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitCheck = 4;

}  // namespace srcrec
