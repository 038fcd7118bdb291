#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "srcrec/fem.hpp"
#include "srcrec/forward.hpp"
#include "srcrec/mesh.hpp"
#include "srcrec/volterra.hpp"

namespace srcrec {

// Control acting on the last component inside O, one nodal field per time
// level of the horizon grid. Values off the control nodes are exactly zero and
// the control is taken as zero beyond the horizon.
struct ControlFunction {
  TimeGrid grid;
  std::size_t n_components = 1;
  TimeSeriesField u;

  ControlFunction(const TimeGrid& g, std::size_t n, std::size_t nodes) : grid(g), n_components(n), u(g, nodes) {}
};

struct ControlReport {
  double epsilon = 0.0;
  double terminal_residual = 0.0;  // ||Psi(0)|| / ||Psi^0||, or / ||uncontrolled Psi(0)|| when Psi^0 = 0
  double terminal_norm = 0.0;      // ||Psi(0)||
  double control_cost = 0.0;       // ||u||_{L2(0,tau; L2(O))}
  std::size_t cg_iterations = 0;
  bool converged = true;
  bool hypothesis_ok = true;  // coupling into the controlled component is positive somewhere in O
  std::string note;
};

struct ControlSettings {
  double epsilon = 1e-6;
  std::size_t max_iters = 500;
  double rel_tol = 1e-8;
};

struct ControlResult {
  ControlFunction control;
  ControlReport report;
};

// Penalized HUM for the backward system
//   -d_t Psi - nu Laplace Psi + Qt Psi = 1_O B U,  Psi(tau) = Psi^0,
// with B selecting the last component: minimizes
//   1/2 ||u||^2 + 1/(2 eps) ||Psi(0)||^2
// through conjugate gradients on the dual variable, with the forward companion
// system (coupling Qt^T) giving the adjoint of the control-to-state map.
class NullControlSolver {
 public:
  NullControlSolver(const Mesh& mesh, const CouplingMatrix& qt, double nu, double dt, const SubdomainMask& mask,
                    ControlSettings settings = {});

  const ParabolicSystem& system() const noexcept { return system_; }
  const SparseMatrix& control_mass() const noexcept { return mass_o_; }
  const SubdomainMask& mask() const noexcept { return mask_; }
  bool hypothesis_ok() const noexcept { return hypothesis_ok_; }

  // With a source s the backward system gains s on the right-hand side over
  // the whole domain; Psi^0 may then vanish.
  ControlResult solve(std::span<const NodalField> psi0, const TimeGrid& horizon,
                      const FieldSeries* source = nullptr) const;

  // Backward solve driven by a control and a whole-domain source (either may be null).
  FieldSeries backward(std::span<const double> psi0, const TimeGrid& horizon, const ControlFunction* u,
                       const FieldSeries* source = nullptr) const;

 private:
  ControlFunction companion(std::span<const double> phi, const TimeGrid& horizon) const;

  ParabolicSystem system_;
  SubdomainMask mask_;
  ControlSettings settings_;
  SparseMatrix mass_o_;
  bool hypothesis_ok_ = true;
};

ControlResult solve_null_control(const Mesh& mesh, const CouplingMatrix& qt, double nu,
                                 std::span<const NodalField> psi0, const TimeGrid& horizon,
                                 const SubdomainMask& mask, double epsilon);

// Adjoint coupling Qt = [[0, q], [0, 0]] of the 2x2 cascade with unit diffusion.
ControlResult solve_null_control_2x2_variable(const Mesh& mesh, const NodalField& q,
                                              std::span<const NodalField> psi0, const TimeGrid& horizon,
                                              const SubdomainMask& mask, double epsilon);

// (Qt B U)_i = Qt(i, n) u: the last-component control spread by column n.
FieldSeries transport_control(const ControlFunction& u, const Eigen::MatrixXd& qt);

void write_control_csv(std::ostream& os, const ControlFunction& u);
void write_control_report_csv(std::ostream& os, const ControlReport& r, bool header = true);

}  // namespace srcrec
