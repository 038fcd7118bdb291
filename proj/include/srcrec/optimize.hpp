#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "srcrec/fem.hpp"
#include "srcrec/forward.hpp"
#include "srcrec/mesh.hpp"

namespace srcrec {

// How the derivative of J is turned into a descent direction.
enum class GradientRepresentation {
  nodal,     // dJ/dF_i, the raw derivative with respect to nodal values
  l2_riesz,  // M^{-1} dJ/dF, the L2 Riesz representative
};

// How the fixed-step iterates are produced. J is quadratic in F, so the
// iterates F_N = F_0 - p_N(A) g_0 with p_N(t) = (1 - (1 - s t)^N) / t can be
// evaluated from a Lanczos decomposition of the Hessian A instead of N
// forward/adjoint solves.
enum class DescentEngine {
  iterative,  // one forward and one adjoint solve per iteration
  krylov,     // Lanczos with full reorthogonalization, krylov_dim Hessian products
};

struct DescentSettings {
  double penalty_k = 1e5;
  double step_size = 1e-4;
  std::size_t max_iters = 2000;
  double grad_tol = 1e-8;
  double divergence_factor = 10.0;
  GradientRepresentation gradient = GradientRepresentation::nodal;
  DescentEngine engine = DescentEngine::iterative;
  std::size_t krylov_dim = 400;
  // Krylov engine: gradient norm and error are traced every trace_every
  // iterations (0 picks about 1000 rows); J is checked every iteration.
  std::size_t trace_every = 0;
};

struct DescentTrace {
  std::vector<std::size_t> iter;
  std::vector<double> J;
  std::vector<double> grad_norm;
  std::vector<double> rel_err;  // empty when no reference source is known
  std::size_t increases = 0;    // iterations where J went up
  std::size_t krylov_steps = 0;
};

struct DescentResult {
  std::vector<NodalField> f;  // best iterate
  std::size_t best_iter = 0;
  double best_J = 0.0;
  bool diverged = false;
  bool converged = false;  // gradient tolerance reached
  DescentTrace trace;
};

// Least-squares source identification for the coupled system:
//   J(F) = 1/2 int |sigma F|^2 + k/2 sum_{i observed} int_O |y_i - y_i^obs|^2 + |d_t y_i - d_t y_i^obs|^2
// with d_t the backward difference on the time grid, trapezoid in time for the
// function terms and right-point weights for the difference terms.
class InverseProblem {
 public:
  InverseProblem(const Mesh& mesh, const CouplingMatrix& q, double nu, const SigmaProfile& sigma,
                 const SubdomainMask& obs, std::vector<std::size_t> observed_components, DescentSettings settings);

  const Mesh& mesh() const noexcept { return system_.mesh(); }
  const ParabolicSystem& system() const noexcept { return system_; }
  const TimeGrid& grid() const noexcept { return sigma_.grid(); }
  const DescentSettings& settings() const noexcept { return settings_; }
  void set_settings(const DescentSettings& s) { settings_ = s; }
  std::span<const std::size_t> observed_components() const noexcept { return observed_; }
  const SparseMatrix& obs_mass() const noexcept { return mass_obs_; }

  void set_observations(FieldSeries y_obs);
  const FieldSeries& observations() const;

  FieldSeries simulate(std::span<const NodalField> f) const;
  double objective(std::span<const NodalField> f) const;
  double objective(std::span<const NodalField> f, const FieldSeries& y) const;
  // Exact derivative of the discrete J; representation per settings unless given.
  std::vector<NodalField> gradient(std::span<const NodalField> f,
                                   std::optional<GradientRepresentation> rep = std::nullopt) const;
  // J and the gradient sharing one forward solve.
  double objective_and_gradient(std::span<const NodalField> f, std::vector<NodalField>& grad,
                                std::optional<GradientRepresentation> rep = std::nullopt) const;

  // Fixed-step steepest descent from f0, returning the best iterate.
  DescentResult descend(std::vector<NodalField> f0, const std::vector<NodalField>* truth = nullptr) const;
  // Hessian product in the configured representation (gradient for zero data).
  std::vector<NodalField> hessian_apply(std::span<const NodalField> v) const;

  // ||F - G||_{L2} / ||d_t y_n(F) - d_t y_n(G)||_{L2(0,T;L2(O))}.
  double stability_ratio(std::span<const NodalField> f, std::span<const NodalField> g) const;

 private:
  ParabolicSystem system_;
  SigmaProfile sigma_;
  SubdomainMask obs_;
  std::vector<std::size_t> observed_;
  DescentSettings settings_;
  SparseMatrix mass_obs_;
  std::optional<FieldSeries> y_obs_;
  std::vector<double> w_sigma2_;  // dt * trapezoid weight * sigma_m^2

  double evaluate(std::span<const NodalField> f, const FieldSeries* y_obs, std::vector<NodalField>* grad,
                  GradientRepresentation rep) const;
  DescentResult descend_iterative(std::vector<NodalField> f, const std::vector<NodalField>* truth) const;
  DescentResult descend_krylov(std::vector<NodalField> f, const std::vector<NodalField>* truth) const;
};

// ||F_rec - F_true|| / ||F_true|| over all components, mass-weighted.
double relative_error(const Mesh& mesh, std::span<const NodalField> f_rec, std::span<const NodalField> f_true);
std::vector<double> component_relative_errors(const Mesh& mesh, std::span<const NodalField> f_rec,
                                              std::span<const NodalField> f_true);

// Adds seeded Gaussian noise to the observed components on the observation
// nodes. The noise level is the RMS of those values times 10^(-snr_db/20).
void add_observation_noise(FieldSeries& y, const SubdomainMask& obs, std::span<const std::size_t> components,
                           double snr_db, std::uint64_t seed);

void write_trace_csv(std::ostream& os, const DescentTrace& trace);

}  // namespace srcrec
