#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "srcrec/cli_io.hpp"
#include "srcrec/error.hpp"

namespace {

struct Common {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  std::optional<double> noise_snr;
  std::string observations;
  int dim = 0;
  std::optional<std::size_t> iters;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "INI run configuration (defaults to the 1D linear-coupling benchmark)");
  sub->add_option("--out", c.out, "Output directory")->capture_default_str();
  sub->add_option("--seed", c.seed, "Noise seed, overrides [run] seed");
  sub->add_option("--threads", c.threads, "Worker threads for sweeps")->check(CLI::PositiveNumber);
  sub->add_option("--noise-snr", c.noise_snr, "Observation noise level in dB");
}

}  // namespace

int main(int argc, char** argv) {
  using namespace srcrec;
  CLI::App app{"Source identification for coupled parabolic systems"};
  app.require_subcommand(1);
  Common c;
  using Cmd = int (*)(const RunConfig&, const CommandOptions&);
  const std::pair<const char*, std::pair<const char*, Cmd>> table[] = {
      {"forward", {"Solve the forward problem for the configured source", cmd_forward}},
      {"synth", {"Generate synthetic observations", cmd_synth}},
      {"invert", {"Reconstruct the source by steepest descent", cmd_invert}},
      {"spectral", {"Report per-mode coefficients", cmd_spectral}},
      {"control", {"Compute a penalized null control", cmd_control}},
      {"volterra-test", {"Solve the Volterra equation with unit data", cmd_volterra_test}},
      {"sweep-k", {"Relative error over the penalty sweep", cmd_sweep_k}},
      {"bench-figures", {"Observation-regime benchmark grids", cmd_bench_figures}},
      {"reconstruct", {"Reconstruct from local measurements via controls and Volterra equations", cmd_reconstruct}},
  };
  std::vector<std::pair<CLI::App*, Cmd>> subs;
  for (const auto& [name, info] : table) {
    CLI::App* sub = app.add_subcommand(name, info.first);
    add_common(sub, c);
    subs.emplace_back(sub, info.second);
    const std::string n = name;
    if (n == "invert") sub->add_option("--observations", c.observations, "Trajectory CSV written by synth");
    if (n == "bench-figures") sub->add_option("--dim", c.dim, "1, 2 or 0 for both")->check(CLI::IsMember({0, 1, 2}));
    if (n == "bench-figures" || n == "sweep-k") sub->add_option("--iters", c.iters, "Descent iterations per cell");
  }
  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = c.config.empty() ? default_config() : load_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (c.noise_snr) cfg.noise_snr_db = *c.noise_snr;
    CommandOptions opt;
    opt.out = c.out;
    opt.threads = c.threads;
    if (!c.observations.empty()) opt.observations = c.observations;
    opt.bench_dim = c.dim;
    opt.iters = c.iters;
    for (const auto& [sub, fn] : subs)
      if (sub->parsed()) return fn(cfg, opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitConfig;
  } catch (const SolverError& e) {
    std::cerr << "solver failure: " << e.what() << " (residual " << e.residual() << ")\n";
    return kExitSolver;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
