#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "srcrec/error.hpp"
#include "srcrec/forward.hpp"
#include "srcrec/spectral.hpp"

using namespace srcrec;
using std::numbers::pi;

namespace {

NodalField bump(const Mesh& m) {
  return interpolate(m, [](double x, double) { return 1.0 + 0.5 * x * (pi - x); });
}

}  // namespace

TEST(Eigenpair, ZeroPiFirstMode) {
  const Mesh m = Mesh::interval(0.0, pi, 100);
  const auto e = laplace_eigenpair(m, 1, 1.0);
  EXPECT_NEAR(e.lambda, 1.0, 1e-14);
  EXPECT_NEAR(e.phi[50], std::sqrt(2.0 / pi), 1e-14);
  EXPECT_NEAR(trapezoid_inner(m, e.phi, e.phi), 1.0, 1e-8);
  EXPECT_THROW(laplace_eigenpair(m, 0, 1.0), InvalidArgument);
}

TEST(Eigenpair, UnitIntervalRescaled) {
  const Mesh m = Mesh::interval(0.0, 1.0, 100);
  const auto e = laplace_eigenpair(m, 1, 1.0);
  EXPECT_NEAR(e.lambda, pi * pi, 1e-12);
  EXPECT_NEAR(e.phi[25], std::sqrt(2.0) * std::sin(pi * 0.25), 1e-14);
}

TEST(Eigenpair, UnitSquareTensor) {
  const Mesh m = Mesh::rectangle(10, 10, 1.0, 1.0);
  const auto e = laplace_eigenpair(m, 1, 1, 0.1);
  EXPECT_NEAR(e.lambda, 0.2 * pi * pi, 1e-12);
  for (std::size_t i = 0; i < m.node_count(); ++i) {
    const Point p = m.node(i);
    EXPECT_NEAR(e.phi[i], 2 * std::sin(pi * p.x) * std::sin(pi * p.y), 1e-14);
  }
}

TEST(Ik, ExamplesOnZeroPi) {
  const Mesh m = Mesh::interval(0.0, pi, 400);
  const NodalField one(m.node_count(), 1.0), zero(m.node_count(), 0.0);
  EXPECT_EQ(compute_Ik(m, zero, 3), 0.0);
  EXPECT_NEAR(compute_Ik(m, one, 1, IkDefinition::first_moment), 2 * std::sqrt(2.0 / pi), 1e-5);
  EXPECT_NEAR(compute_Ik(m, one, 2, IkDefinition::first_moment), 0.0, 1e-12);
  EXPECT_NEAR(compute_Ik(m, one, 2, IkDefinition::weighted_square), 1.0, 1e-12);
  EXPECT_THROW(compute_Ik(Mesh::interval(0.0, 1.0, 10), NodalField(11, 1.0), 1), InvalidArgument);
}

TEST(Psi, ZeroCouplingGivesZero) {
  const Mesh m = Mesh::interval(0.0, pi, 100);
  const auto pa = compute_psi_alpha(m, NodalField(m.node_count(), 0.0), 2);
  EXPECT_EQ(pa.alpha, 0.0);
  for (double v : pa.psi) EXPECT_EQ(v, 0.0);
}

TEST(Psi, OrthogonalToPhiAndVanishesAtEnds) {
  const Mesh m = Mesh::interval(0.0, pi, 200);
  const NodalField q = bump(m);
  for (int k = 1; k <= 6; ++k) {
    const auto b = build_mode_basis(m, q, k);
    ASSERT_TRUE(b.psi.has_value());
    EXPECT_NEAR(trapezoid_inner(m, *b.psi, b.phi), 0.0, 1e-6) << k;
    EXPECT_NEAR(b.psi->front(), 0.0, 1e-12);
    EXPECT_NEAR(b.psi->back(), 0.0, 1e-3) << k;
  }
}

TEST(Psi, WeakResidualSecondOrder) {
  // (L - k^2) Phi_2 = I_k Phi_1 reduces to -psi'' - k^2 psi = (I_k - q) phi.
  auto residual = [](std::size_t n, int k) {
    const Mesh m = Mesh::interval(0.0, pi, n);
    const NodalField q = bump(m);
    const auto b = build_mode_basis(m, q, k);
    NodalField g(q.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = (b.Ik - q[i]) * b.phi[i];
    const auto M = assemble_mass(m);
    const auto s = assemble_stiffness(m, 1.0) * *b.psi;
    const auto mp = M * *b.psi;
    const auto mg = M * g;
    double r2 = 0.0, g2 = 0.0;
    for (std::size_t i = 1; i + 1 < g.size(); ++i) {
      const double r = s[i] - k * k * mp[i] - mg[i];
      r2 += r * r;
      g2 += mg[i] * mg[i];
    }
    return std::sqrt(r2 / g2);
  };
  for (int k : {1, 4}) {
    const double a = residual(200, k), b = residual(400, k);
    EXPECT_GE(std::log2(a / b), 1.9) << k;
    EXPECT_LT(b, 1e-2);
  }
}

TEST(Riesz, BiorthogonalOnFineGrid) {
  const Mesh m = Mesh::interval(0.0, pi, 2000);
  const NodalField q = bump(m);
  std::vector<ModeBasis> b;
  for (int k = 1; k <= 12; ++k) b.push_back(build_mode_basis(m, q, k));
  double worst = 0.0;
  for (int k = 0; k < 12; ++k)
    for (int l = 0; l < 12; ++l) {
      // (Phi_1k, Phi*_1l) = (phi_k, phi_l); (Phi_2k, Phi*_1l) = (phi_k, psi_l) + (psi_k, phi_l);
      // (Phi_2k, Phi*_2l) = (phi_k, phi_l); (Phi_1k, Phi*_2l) = 0.
      const double d = k == l ? 1.0 : 0.0;
      worst = std::max(worst, std::abs(trapezoid_inner(m, b[k].phi, b[l].phi) - d));
      worst = std::max(worst, std::abs(trapezoid_inner(m, b[k].phi, *b[l].psi) + trapezoid_inner(m, *b[k].psi, b[l].phi)));
    }
  EXPECT_LE(worst, 1e-6);
}

TEST(Fundamental, ZeroCouplingAndNilpotent) {
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(3, 3);
  const Eigen::MatrixXd f0 = fundamental_matrix(zero, 2.0, 0.3);
  EXPECT_LE((f0 - std::exp(-0.6) * Eigen::MatrixXd::Identity(3, 3)).norm(), 1e-15);
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(2, 2);
  q(1, 0) = 5.0;
  const Eigen::MatrixXd f = fundamental_matrix(q, 1.5, 0.4);
  EXPECT_NEAR(f(1, 0), -5.0 * 0.4 * std::exp(-0.6), 1e-14);
  EXPECT_NEAR(f(0, 0), std::exp(-0.6), 1e-15);
  EXPECT_EQ(f(0, 1), 0.0);
}

TEST(Fundamental, Semigroup) {
  Eigen::MatrixXd q(3, 3);
  q << 1, 4, -2, 0.5, 0, 3, -1, 2, 1;
  const Eigen::MatrixXd a = fundamental_matrix(q, 2.0, 0.7);
  const Eigen::MatrixXd b = fundamental_matrix(q, 2.0, 0.3) * fundamental_matrix(q, 2.0, 0.4);
  EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(MMatrix, ScalarClosedFormAndZeroSigma) {
  const TimeGrid g(0.5, 50);
  const double lam = 3.0;
  const Eigen::MatrixXd m = compute_M(Eigen::MatrixXd::Zero(2, 2), lam, SigmaProfile::constant(g, 1.0), 0.5, 8);
  EXPECT_NEAR(m(0, 0), (1 - std::exp(-lam * 0.5)) / lam, 1e-6);
  EXPECT_NEAR(m(1, 1), m(0, 0), 1e-15);
  EXPECT_EQ(m(0, 1), 0.0);
  const Eigen::MatrixXd z = compute_M(Eigen::MatrixXd::Zero(2, 2), lam, SigmaProfile::constant(g, 0.0), 0.5);
  EXPECT_EQ(z.norm(), 0.0);
}

TEST(AQ, ZeroCouplingIsExponential) {
  const TimeGrid g(0.5, 100);
  const auto a = coeff_aQ(Eigen::MatrixXd::Zero(1, 1), 4.0, SigmaProfile::constant(g, 1.0), 0.5, 8);
  EXPECT_NEAR(a.a(0), std::exp(-2.0), 1e-6);
  EXPECT_FALSE(a.flags.any_violated());
}

TEST(AQ, LargeEigenvalueStaysFinite) {
  const TimeGrid g(0.5, 50);
  const auto s = SigmaProfile::cosine_plateau(g, 0.05);
  for (double lam : {1e2, 1e3, 1e4}) {
    const auto a = coeff_aQ(Eigen::MatrixXd::Zero(1, 1), lam, s, 0.5, 16);
    EXPECT_TRUE(std::isfinite(a.a(0)));
    EXPECT_LT(std::abs(a.a(0)), 1.0);
  }
}

TEST(AQ, VanishingSigmaAtHorizonRejected) {
  const TimeGrid g(1.0, 10);
  const auto s = SigmaProfile::from_functions(g, [](double t) { return 1.0 - t; }, [](double) { return -1.0; });
  EXPECT_THROW(coeff_aQ(Eigen::MatrixXd::Zero(1, 1), 1.0, s, 1.0), InvalidArgument);
  EXPECT_THROW(coeff_aL_bL(1.0, 1, s, 1.0), InvalidArgument);
}

TEST(LCoefficients, UnitSigmaAndKernelForms) {
  const TimeGrid g(1.0, 200);
  const auto one = SigmaProfile::constant(g, 1.0);
  const auto c = coeff_aL_bL(0.7, 2, one, 1.0, 8);
  EXPECT_NEAR(c.a, std::exp(-4.0), 1e-6);
  EXPECT_NEAR(c.b, c.b_kernel, 1e-10);
  EXPECT_EQ(coeff_aL_bL(0.0, 3, one, 1.0).b, 0.0);
  const auto s = SigmaProfile::cosine_plateau(g, 0.1);
  const auto d = coeff_aL_bL(1.3, 1, s, 0.5, 8);
  EXPECT_NEAR(d.b, d.b_kernel, 1e-10);
}

TEST(ModeOde, TrivialCases) {
  const TimeGrid g(1.0, 100);
  const auto s = SigmaProfile::cosine_plateau(g, 0.1);
  const auto z = mode_ode_2x2(0.8, 2, s, 0.0, 0.0, 0.0, 1.0);
  EXPECT_EQ(z.alpha, 0.0);
  EXPECT_EQ(z.beta, 0.0);
  const auto a = mode_ode_2x2(0.0, 2, s, 5.0, 0.3, 0.2, 1.0);
  const auto b = mode_ode_2x2(0.0, 2, s, -7.0, 0.4, 0.1, 1.0);
  EXPECT_NEAR(a.alpha, b.alpha, 1e-14);
}

TEST(ModeOde, MatchesForwardSolveProjection) {
  const Mesh m = Mesh::interval(0.0, pi, 400);
  const TimeGrid g(1.0, 400);
  const auto s = SigmaProfile::cosine_plateau(g, 0.1);
  const NodalField q = bump(m);
  CouplingMatrix cq(2);
  cq.set(1, 0, q);
  const std::vector<NodalField> f{interpolate(m, [](double x, double) { return std::sin(x) + 0.3 * std::sin(2 * x); }),
                                  interpolate(m, [](double x, double) { return x * (pi - x); })};
  const auto y = solve_forward(m, cq, 1.0, s, f, g);
  const auto M = assemble_mass(m);
  for (int k = 1; k <= 2; ++k) {
    const auto b = build_mode_basis(m, q, k);
    const auto Mphi = M * b.phi, Mpsi = M * *b.psi;
    const auto r = mode_ode_2x2(b.Ik, k, s, dot(f[0], Mphi), dot(f[0], Mpsi), dot(f[1], Mphi), 1.0, 8);
    const double alpha = dot(y.component(400, 0), Mpsi) + dot(y.component(400, 1), Mphi);
    const double beta = dot(y.component(400, 0), Mphi);
    const double tol = 2.0 * (g.dt() + m.h() * m.h());
    EXPECT_NEAR(alpha, r.alpha, tol) << k;
    EXPECT_NEAR(beta, r.beta, tol) << k;
  }
}

TEST(ModeReport, Columns) {
  std::ostringstream os;
  write_mode_report_header(os, 2);
  EXPECT_EQ(os.str(), "k,lambda,I_k,alpha_k,a1,a2,b\n");
}
