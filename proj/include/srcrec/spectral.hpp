#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "srcrec/fem.hpp"
#include "srcrec/forward.hpp"
#include "srcrec/mesh.hpp"

namespace srcrec {

struct Eigenpair {
  double lambda = 0.0;
  NodalField phi;
};

// Dirichlet eigenpair of -nu*Laplace on the mesh's interval, L2-normalized.
Eigenpair laplace_eigenpair(const Mesh& mesh, int k, double nu);
// Tensor-product eigenpair on the mesh's rectangle.
Eigenpair laplace_eigenpair(const Mesh& mesh, int k1, int k2, double nu);

// Composite trapezoid of a*b on a uniform 1D node grid.
double trapezoid_inner(const Mesh& mesh, const NodalField& a, const NodalField& b);

// Definition of the coupling moment I_k(q) used by the second Riesz family.
enum class IkDefinition {
  weighted_square,  // int q phi_k^2: the value that makes psi_k vanish at both ends
  first_moment,     // int q phi_k
};

// Meshes passed below must discretize (0, pi).
double compute_Ik(const Mesh& mesh, const NodalField& q, int k, IkDefinition def = IkDefinition::weighted_square);

struct PsiAlpha {
  NodalField psi;
  double alpha = 0.0;
};

// psi_k = alpha_k phi_k - (1/k) int_0^x sin(k(x-z)) (I_k phi_k - q phi_k)(z) dz,
// with alpha_k making psi_k orthogonal to phi_k in the trapezoid inner product.
PsiAlpha compute_psi_alpha(const Mesh& mesh, const NodalField& q, int k,
                           IkDefinition def = IkDefinition::weighted_square);

// Per-mode data. psi is set for the 2x2 variable coupling basis:
// Phi_1 = (0, phi), Phi_2 = (phi, psi), Phi*_1 = (psi, phi), Phi*_2 = (phi, 0).
struct ModeBasis {
  int k = 1;
  double lambda = 0.0;
  NodalField phi;
  std::optional<NodalField> psi;
  double alpha = 0.0;
  double Ik = 0.0;
};

ModeBasis build_mode_basis(const Mesh& mesh, int k, double nu);
ModeBasis build_mode_basis(const Mesh& mesh, const NodalField& q, int k,
                           IkDefinition def = IkDefinition::weighted_square);

// exp(-(lambda I + Q) t).
Eigen::MatrixXd fundamental_matrix(const Eigen::MatrixXd& q, double lambda, double t);

// M(t) = int_0^t Phi(t - s) sigma(s) ds by composite trapezoid on the sigma
// grid, each step split into `refine` sub-intervals. t must be a grid time.
Eigen::MatrixXd compute_M(const Eigen::MatrixXd& q, double lambda, const SigmaProfile& sigma, double t,
                          int refine = 1);

struct HypothesisFlags {
  std::vector<char> violated;  // |a| < 1e-10
  std::vector<char> weak;      // |a| < 1e-6
  bool any_violated() const;
};

struct AQCoefficients {
  Eigen::VectorXd a;
  HypothesisFlags flags;
};

// a_j = 1 - (lambda / sigma(t)) sum_i m_ij(t).
AQCoefficients coeff_aQ(const Eigen::MatrixXd& q, double lambda, const SigmaProfile& sigma, double t,
                        int refine = 1);

struct LCoefficients {
  double a = 0.0;
  double b = 0.0;         // iterated-integral form
  double b_kernel = 0.0;  // single integral with (t - s) kernel
  double E = 0.0;         // int_0^t e^{-k^2 (t-s)} sigma(s) ds
  double G = 0.0;         // int_0^t e^{-k^2 (t-s)} E(s) ds
  HypothesisFlags flags;
};

// a = sigma(t) - k^2 E, b = -I_k (E - k^2 G).
LCoefficients coeff_aL_bL(double Ik, int k, const SigmaProfile& sigma, double t, int refine = 1);

struct ModeAmplitudes {
  double alpha = 0.0;  // (Y(t), Phi*_1)
  double beta = 0.0;   // (Y(t), Phi*_2)
};

// Mode amplitudes of the 2x2 variable-coupling system with unit diffusion.
ModeAmplitudes mode_ode_2x2(double Ik, int k, const SigmaProfile& sigma, double f1_phi, double f1_psi, double f2_phi,
                            double t, int refine = 1);

void write_mode_report_header(std::ostream& os, std::size_t n_coeffs);
void write_mode_report_row(std::ostream& os, const ModeBasis& mode, const std::vector<double>& a, double b);

}  // namespace srcrec
