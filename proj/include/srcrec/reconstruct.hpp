#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "srcrec/control.hpp"
#include "srcrec/fem.hpp"
#include "srcrec/forward.hpp"
#include "srcrec/mesh.hpp"
#include "srcrec/spectral.hpp"
#include "srcrec/volterra.hpp"

namespace srcrec {

// Last state component restricted to the observation nodes, with backward
// differences in time: deriv(m) = (y(m) - y(m-1)) / dt for m >= 1.
struct MeasurementSet {
  TimeSeriesField y;
  std::optional<FieldSeries> full;  // whole-domain state, oracle use only

  static MeasurementSet from_state(const FieldSeries& state, const SubdomainMask& mask, bool keep_full = false);
  // Measurements on the first `steps` steps.
  MeasurementSet prefix(std::size_t steps) const;
};

TimeSeriesField prefix(const TimeSeriesField& f, std::size_t steps);
FieldSeries prefix(const FieldSeries& f, std::size_t steps);

// H1(0,tau; L2(O)) pairing of measured data with a Volterra solution in the
// right-point form matching the euler_adjoint scheme.
double measurement_pairing(const TimeSeriesField& y, const TimeSeriesField& theta, const SparseMatrix& mass_o);

struct CoefficientEstimate {
  int k = 0;
  double tau = 0.0;
  double combined = 0.0;
  std::vector<double> terms;  // C1, C2, C3 (constant coupling) or C1, C2 (2x2 variable)
  std::vector<double> row;    // coefficients of the unknowns in `combined`
  // Bound on |combined - exact| per unit ||F||_{L2} caused by the inexact
  // controls: sum of their weighted terminal norms ||Psi(0)||.
  double tol_ctrl = 0.0;
};

struct SeparatedCoefficients {
  int k = 0;
  std::vector<double> f;
  double cond = 0.0;
  double residual = 0.0;
  bool ok = false;
};

// Whole-domain terms of the reconstruction identity on the grid of w (the
// unit-datum homogeneous flow):
//   c1 = sigma(0) (W(tau), Psi0),  c2 = int sigma'(tau - s) (W(s), Psi0) ds,
//   c3 = int sigma(tau - s) (W(s), Qt Psi0) ds,
// with right-point quadrature in time.
struct GlobalTerms {
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  double sum() const noexcept { return c1 + c2 + c3; }
};

GlobalTerms global_terms(const FieldSeries& w, std::span<const NodalField> psi0, std::span<const NodalField> qt_psi0,
                         const SigmaProfile& sigma, const SparseMatrix& mass);

// sum_j a_j f_j^k from whole-domain data, constant coupling.
double reconstruct_global_constQ(const FieldSeries& w, const Eigen::MatrixXd& q, const SigmaProfile& sigma,
                                 const ModeBasis& mode, const SparseMatrix& mass);

// a (alpha_F + beta_F) + b beta_F from whole-domain data, 2x2 variable coupling.
double reconstruct_global_2x2(const FieldSeries& w, const SigmaProfile& sigma, const ModeBasis& mode,
                              const SparseMatrix& mass);

// Local formula for constant coupling. theta_n solves the Volterra equation for
// the control of Psi0, theta_sigma for the control of the sigma'-driven source,
// theta_hat for the control of the Qt Psi0 source.
CoefficientEstimate reconstruct_local_constQ(const MeasurementSet& meas, const TimeSeriesField& theta_n,
                                             const TimeSeriesField& theta_sigma, const TimeSeriesField& theta_hat,
                                             const SigmaProfile& sigma, const SparseMatrix& mass_o,
                                             std::span<const double> aQ, int k);

// Local formula for the 2x2 variable coupling on (0, pi).
CoefficientEstimate reconstruct_local_2x2_variable(const MeasurementSet& meas, const TimeSeriesField& theta,
                                                   const TimeSeriesField& theta_sigma, const SigmaProfile& sigma,
                                                   const SparseMatrix& mass_o, double aL, double bL, int k);

// Least-squares solve over horizons; ill-conditioned systems (cond > 1e8) are flagged.
SeparatedCoefficients separate_coefficients(std::span<const CoefficientEstimate> estimates);

enum class SourceExpansion {
  laplace,  // f_j = sum f_j^k phi_k
  riesz,    // coefficients (alpha_F, beta_F): f1 = sum beta phi, f2 = sum alpha phi + beta psi
};

struct SynthesizedSource {
  std::vector<NodalField> f;
  std::size_t covered = 0;  // modes that entered the sum
};

SynthesizedSource synthesize_source(std::span<const ModeBasis> modes, std::span<const SeparatedCoefficients> coeffs,
                                    std::size_t n_components, std::size_t node_count,
                                    SourceExpansion expansion = SourceExpansion::laplace);

// Laplace modes with index up to k_max per direction (k_max^2 modes in 2D).
std::vector<ModeBasis> laplace_modes(const Mesh& mesh, double nu, int k_max);

struct ModeResult {
  std::vector<CoefficientEstimate> estimates;  // one per horizon
  std::vector<ControlReport> controls;
  SeparatedCoefficients separated;
};

struct ReconstructionResult {
  std::vector<ModeResult> modes;
  SynthesizedSource source;
};

// Local-measurement reconstruction with constant coupling: per mode and
// horizon, null controls of the adjoint system for Psi0 = (phi_k, ..., phi_k),
// for the sigma'-driven source and for the Qt Psi0 source, Volterra solves, and
// separation across horizons.
class ConstQReconstructor {
 public:
  ConstQReconstructor(const Mesh& mesh, const Eigen::MatrixXd& q, double nu, const SigmaProfile& sigma,
                      const SubdomainMask& mask, ControlSettings settings = {});

  std::size_t n_components() const noexcept { return static_cast<std::size_t>(q_.rows()); }
  const NullControlSolver& controller() const noexcept { return control_; }

  CoefficientEstimate local(const MeasurementSet& meas, const ModeBasis& mode, std::size_t steps,
                            std::vector<ControlReport>* reports = nullptr) const;
  double global(const FieldSeries& w, const ModeBasis& mode, std::size_t steps) const;
  Eigen::VectorXd a_coefficients(const ModeBasis& mode, std::size_t steps) const;

  ReconstructionResult run(const MeasurementSet& meas, std::span<const ModeBasis> modes,
                           std::span<const std::size_t> horizon_steps) const;

 private:
  const Mesh* mesh_;
  Eigen::MatrixXd q_;
  SigmaProfile sigma_;
  NullControlSolver control_;
};

// Same for the 2x2 cascade y2' - y2'' + q y1 on (0, pi) with unit diffusion,
// observing the second component; unknowns per mode are (alpha_F, beta_F).
class VariableQReconstructor {
 public:
  VariableQReconstructor(const Mesh& mesh, const NodalField& q, const SigmaProfile& sigma, const SubdomainMask& mask,
                         ControlSettings settings = {});

  const NullControlSolver& controller() const noexcept { return control_; }

  CoefficientEstimate local(const MeasurementSet& meas, const ModeBasis& mode, std::size_t steps,
                            std::vector<ControlReport>* reports = nullptr) const;
  double global(const FieldSeries& w, const ModeBasis& mode, std::size_t steps) const;

  ReconstructionResult run(const MeasurementSet& meas, std::span<const ModeBasis> modes,
                           std::span<const std::size_t> horizon_steps) const;

 private:
  const Mesh* mesh_;
  NodalField q_;
  SigmaProfile sigma_;
  NullControlSolver control_;
};

// Psi0 of the 2x2 variable case: Phi*_1 + Phi*_2 = (psi + phi, phi).
std::vector<NodalField> riesz_terminal(const ModeBasis& mode);

void write_reconstruction_report(std::ostream& os, const ReconstructionResult& r, std::size_t n_unknowns);
void write_source_csv(std::ostream& os, const Mesh& mesh, std::span<const NodalField> truth,
                      std::span<const NodalField> rec);

}  // namespace srcrec
