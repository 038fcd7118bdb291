#include "srcrec/spectral.hpp"

#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>

#include <unsupported/Eigen/MatrixFunctions>

#include "srcrec/error.hpp"

namespace srcrec {
namespace {

constexpr double kPi = std::numbers::pi;

void require_uniform_1d(const Mesh& mesh) {
  if (mesh.dim() != 1) throw InvalidArgument("operation needs a 1D mesh");
}

void require_zero_pi(const Mesh& mesh) {
  require_uniform_1d(mesh);
  const Box& b = mesh.bounds();
  if (std::abs(b.x0) > 1e-9 || std::abs(b.x1 - kPi) > 1e-9)
    throw InvalidArgument("variable-coupling spectral basis is defined on (0, pi) only");
}

std::size_t grid_index(const SigmaProfile& sigma, double t) {
  const TimeGrid& g = sigma.grid();
  const double u = t / g.dt();
  const double r = std::round(u);
  if (std::abs(u - r) > 1e-8 || r < 0.0 || r > static_cast<double>(g.n_steps()))
    throw InvalidArgument("time is not a point of the sigma grid");
  return static_cast<std::size_t>(r);
}

// One step of x' = A x + g(s) for g linear on [0, h], integrated exactly:
//   x(h) = F x(0) + W0 g(0) + W1 (g(h) - g(0)),
// F = e^{Ah}, W0 = int_0^h e^{Au} du, W1 = int_0^h e^{A(h-s)} s ds / h.
struct LinearStep {
  Eigen::MatrixXd F, W0, W1;
};

LinearStep linear_step(const Eigen::MatrixXd& a, double h) {
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(3 * n, 3 * n);
  c.topLeftCorner(n, n) = a * h;
  c.block(0, n, n, n).setIdentity();
  c.block(n, 2 * n, n, n).setIdentity();
  c.block(0, n, n, n) *= h;
  c.block(n, 2 * n, n, n) *= h;
  const Eigen::MatrixXd e = c.exp();
  return {e.topLeftCorner(n, n), e.block(0, n, n, n), e.block(0, 2 * n, n, n) / h};
}

}  // namespace

Eigenpair laplace_eigenpair(const Mesh& mesh, int k, double nu) {
  require_uniform_1d(mesh);
  if (k < 1) throw InvalidArgument("mode index must be >= 1");
  if (!(nu > 0.0)) throw InvalidArgument("diffusion coefficient must be positive");
  const Box& b = mesh.bounds();
  const double L = b.x1 - b.x0;
  const double w = k * kPi / L;
  Eigenpair e;
  e.lambda = nu * w * w;
  const double s = std::sqrt(2.0 / L);
  e.phi = interpolate(mesh, [&](double x, double) { return s * std::sin(w * (x - b.x0)); });
  return e;
}

Eigenpair laplace_eigenpair(const Mesh& mesh, int k1, int k2, double nu) {
  if (mesh.dim() != 2) throw InvalidArgument("tensor eigenpair needs a 2D mesh");
  if (k1 < 1 || k2 < 1) throw InvalidArgument("mode indices must be >= 1");
  if (!(nu > 0.0)) throw InvalidArgument("diffusion coefficient must be positive");
  const Box& b = mesh.bounds();
  const double lx = b.x1 - b.x0, ly = b.y1 - b.y0;
  const double wx = k1 * kPi / lx, wy = k2 * kPi / ly;
  Eigenpair e;
  e.lambda = nu * (wx * wx + wy * wy);
  const double s = 2.0 / std::sqrt(lx * ly);
  e.phi = interpolate(mesh, [&](double x, double y) { return s * std::sin(wx * (x - b.x0)) * std::sin(wy * (y - b.y0)); });
  return e;
}

double trapezoid_inner(const Mesh& mesh, const NodalField& a, const NodalField& b) {
  require_uniform_1d(mesh);
  const std::size_t n = mesh.node_count();
  if (a.size() != n || b.size() != n) throw InvalidArgument("field does not match mesh");
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) s += 0.5 * mesh.element_measure(i) * (a[i] * b[i] + a[i + 1] * b[i + 1]);
  return s;
}

double compute_Ik(const Mesh& mesh, const NodalField& q, int k, IkDefinition def) {
  require_zero_pi(mesh);
  const Eigenpair e = laplace_eigenpair(mesh, k, 1.0);
  if (def == IkDefinition::first_moment) return trapezoid_inner(mesh, q, e.phi);
  NodalField qphi(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) qphi[i] = q[i] * e.phi[i];
  return trapezoid_inner(mesh, qphi, e.phi);
}

PsiAlpha compute_psi_alpha(const Mesh& mesh, const NodalField& q, int k, IkDefinition def) {
  require_zero_pi(mesh);
  const std::size_t n = mesh.node_count();
  if (q.size() != n) throw InvalidArgument("coupling field does not match mesh");
  const Eigenpair e = laplace_eigenpair(mesh, k, 1.0);
  const double ik = compute_Ik(mesh, q, k, def);
  // sin(k(x-z)) = sin(kx)cos(kz) - cos(kx)sin(kz): two cumulative integrals.
  std::vector<double> gc(n), gs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = mesh.node(i).x;
    const double g = (ik - q[i]) * e.phi[i];
    gc[i] = std::cos(k * x) * g;
    gs[i] = std::sin(k * x) * g;
  }
  PsiAlpha out;
  out.psi.assign(n, 0.0);
  double cc = 0.0, cs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) {
      const double h = mesh.element_measure(i - 1);
      cc += 0.5 * h * (gc[i - 1] + gc[i]);
      cs += 0.5 * h * (gs[i - 1] + gs[i]);
    }
    const double x = mesh.node(i).x;
    out.psi[i] = -(std::sin(k * x) * cc - std::cos(k * x) * cs) / k;
  }
  out.alpha = -trapezoid_inner(mesh, out.psi, e.phi) / trapezoid_inner(mesh, e.phi, e.phi);
  for (std::size_t i = 0; i < n; ++i) out.psi[i] += out.alpha * e.phi[i];
  return out;
}

ModeBasis build_mode_basis(const Mesh& mesh, int k, double nu) {
  const Eigenpair e = laplace_eigenpair(mesh, k, nu);
  ModeBasis b;
  b.k = k;
  b.lambda = e.lambda;
  b.phi = e.phi;
  return b;
}

ModeBasis build_mode_basis(const Mesh& mesh, const NodalField& q, int k, IkDefinition def) {
  ModeBasis b = build_mode_basis(mesh, k, 1.0);
  require_zero_pi(mesh);
  PsiAlpha pa = compute_psi_alpha(mesh, q, k, def);
  b.psi = std::move(pa.psi);
  b.alpha = pa.alpha;
  b.Ik = compute_Ik(mesh, q, k, def);
  return b;
}

Eigen::MatrixXd fundamental_matrix(const Eigen::MatrixXd& q, double lambda, double t) {
  const Eigen::Index n = q.rows();
  if (q.cols() != n) throw InvalidArgument("coupling matrix must be square");
  const Eigen::MatrixXd a = -t * q;
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
  const double scale = std::exp(-lambda * t);

  // Strictly triangular coupling is nilpotent: the series terminates.
  const bool strict_lower = q.triangularView<Eigen::Upper>().toDenseMatrix().isZero(0.0);
  const bool strict_upper = q.triangularView<Eigen::Lower>().toDenseMatrix().isZero(0.0);
  if (strict_lower || strict_upper) {
    Eigen::MatrixXd sum = id, term = id;
    for (Eigen::Index j = 1; j < n; ++j) {
      term = term * a / static_cast<double>(j);
      sum += term;
    }
    return scale * sum;
  }

  return scale * Eigen::MatrixXd(a.exp());
}

Eigen::MatrixXd compute_M(const Eigen::MatrixXd& q, double lambda, const SigmaProfile& sigma, double t, int refine) {
  if (refine < 1) throw InvalidArgument("refinement factor must be >= 1");
  const std::size_t m = grid_index(sigma, t);
  const Eigen::Index n = q.rows();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n);
  if (m == 0) return acc;
  const std::size_t steps = m * static_cast<std::size_t>(refine);
  const double h = t / static_cast<double>(steps);
  const LinearStep st = linear_step(-q - lambda * Eigen::MatrixXd::Identity(n, n), h);
  auto sig = [&](std::size_t i) {
    return refine == 1 ? sigma.value(i) : sigma.at(h * static_cast<double>(i));
  };
  // sigma is taken piecewise linear between the (refined) samples.
  for (std::size_t i = 0; i < steps; ++i) acc = st.F * acc + sig(i) * st.W0 + (sig(i + 1) - sig(i)) * st.W1;
  return acc;
}

bool HypothesisFlags::any_violated() const {
  for (char v : violated)
    if (v) return true;
  return false;
}

AQCoefficients coeff_aQ(const Eigen::MatrixXd& q, double lambda, const SigmaProfile& sigma, double t, int refine) {
  const std::size_t m = grid_index(sigma, t);
  const double st = sigma.value(m);
  if (st == 0.0) throw InvalidArgument("sigma vanishes at the final time");
  const Eigen::MatrixXd M = compute_M(q, lambda, sigma, t, refine);
  AQCoefficients out;
  out.a = Eigen::VectorXd::Ones(q.rows()) - (lambda / st) * M.colwise().sum().transpose();
  for (Eigen::Index j = 0; j < out.a.size(); ++j) {
    out.flags.violated.push_back(std::abs(out.a(j)) < 1e-10);
    out.flags.weak.push_back(std::abs(out.a(j)) < 1e-6);
  }
  return out;
}

LCoefficients coeff_aL_bL(double Ik, int k, const SigmaProfile& sigma, double t, int refine) {
  if (refine < 1) throw InvalidArgument("refinement factor must be >= 1");
  const std::size_t m = grid_index(sigma, t);
  const double st = sigma.value(m);
  if (st == 0.0) throw InvalidArgument("sigma vanishes at the final time");
  const double c = static_cast<double>(k) * k;
  LCoefficients out;
  if (m > 0) {
    const std::size_t steps = m * static_cast<std::size_t>(refine);
    const double h = t / static_cast<double>(steps);
    auto sig = [&](std::size_t i) { return refine == 1 ? sigma.value(i) : sigma.at(h * static_cast<double>(i)); };
    // (E, G)' = [[-c, 0], [1, -c]] (E, G) + (sigma, 0).
    Eigen::Matrix2d a;
    a << -c, 0.0, 1.0, -c;
    const LinearStep st = linear_step(a, h);
    Eigen::Vector2d x = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < steps; ++i) x = st.F * x + sig(i) * st.W0.col(0) + (sig(i + 1) - sig(i)) * st.W1.col(0);
    out.E = x(0);
    out.G = x(1);
    // Direct form int_0^t (t - s) e^{-c(t-s)} sigma(s) ds, with u = t - s and
    // closed-form moments of u e^{-cu} on each interval.
    auto m1 = [&](double u) { return -std::exp(-c * u) * (u / c + 1.0 / (c * c)); };
    auto m2 = [&](double u) { return -std::exp(-c * u) * (u * u / c + 2.0 * u / (c * c) + 2.0 / (c * c * c)); };
    double kern = 0.0;
    for (std::size_t i = 0; i < steps; ++i) {
      const double u1 = t - h * static_cast<double>(i), u0 = u1 - h;
      // sigma = sig(i + 1) + (sig(i) - sig(i + 1)) (u - u0) / h on [u0, u1]
      const double slope = (sig(i) - sig(i + 1)) / h;
      const double i1 = m1(u1) - m1(u0), i2 = m2(u1) - m2(u0);
      kern += (sig(i + 1) - slope * u0) * i1 + slope * i2;
    }
    out.b_kernel = -Ik * (out.E - c * kern);
  }
  out.a = st - c * out.E;
  out.b = -Ik * (out.E - c * out.G);
  if (m == 0) out.b_kernel = out.b;
  out.flags.violated.push_back(std::abs(out.a) < 1e-10);
  out.flags.weak.push_back(std::abs(out.a) < 1e-6);
  return out;
}

ModeAmplitudes mode_ode_2x2(double Ik, int k, const SigmaProfile& sigma, double f1_phi, double f1_psi, double f2_phi,
                            double t, int refine) {
  const LCoefficients l = coeff_aL_bL(1.0, k, sigma, t, refine);
  ModeAmplitudes out;
  out.beta = f1_phi * l.E;
  out.alpha = (f1_psi + f2_phi) * l.E - Ik * f1_phi * l.G;
  return out;
}

void write_mode_report_header(std::ostream& os, std::size_t n_coeffs) {
  os << "k,lambda,I_k,alpha_k";
  for (std::size_t j = 0; j < n_coeffs; ++j) os << ",a" << j + 1;
  os << ",b\n";
}

void write_mode_report_row(std::ostream& os, const ModeBasis& mode, const std::vector<double>& a, double b) {
  os << std::setprecision(12) << mode.k << ',' << mode.lambda << ',' << mode.Ik << ',' << mode.alpha;
  for (double v : a) os << ',' << v;
  os << ',' << b << '\n';
}

}  // namespace srcrec
