#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "srcrec/error.hpp"
#include "srcrec/forward.hpp"
#include "srcrec/spectral.hpp"

using namespace srcrec;
using std::numbers::pi;

namespace {

NodalField sine(const Mesh& m, double freq) {
  return interpolate(m, [freq](double x, double) { return std::sin(freq * x); });
}

double l2(const SparseMatrix& M, std::span<const double> v) { return std::sqrt(M.bilinear(v, v)); }

double diff_norm(const SparseMatrix& M, std::span<const double> a, std::span<const double> b) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = a[i] - b[i];
  return l2(M, d);
}

}  // namespace

TEST(TimeGrid, StepTimesCount) {
  const TimeGrid g(0.5, 50);
  EXPECT_NEAR(g.dt() * 50, 0.5, 1e-14 * 0.5);
  EXPECT_EQ(g.n_times(), 51u);
  EXPECT_EQ(g.time(50), 0.5);
  EXPECT_THROW(TimeGrid(0.0, 3), InvalidArgument);
  EXPECT_THROW(TimeGrid(1.0, 0), InvalidArgument);
}

TEST(Sigma, CosinePlateauShape) {
  const TimeGrid g(0.5, 50);
  const auto s = SigmaProfile::cosine_plateau(g, 0.05);
  EXPECT_DOUBLE_EQ(s.sigma0(), 1.5);
  EXPECT_DOUBLE_EQ(s.sigmaT(), 1.5);
  EXPECT_EQ(s.sigma0(), s.samples().front());
  EXPECT_EQ(s.sigmaT(), s.samples().back());
  // Quarter period of 4 pi t / 0.45.
  EXPECT_NEAR(s.at(0.45 / 8), 1.0, 1e-12);
  EXPECT_NEAR(s.at(0.45 / 4), 0.5, 1e-12);
  EXPECT_NEAR(s.derivative_at(0.47), 0.0, 1e-15);
  EXPECT_THROW(SigmaProfile::cosine_plateau(g, 0.0), InvalidArgument);
}

TEST(Sigma, ResampleKeepsClosedForm) {
  const auto s = SigmaProfile::cosine_plateau(TimeGrid(0.5, 10), 0.05);
  const auto r = s.resampled(TimeGrid(0.5, 1000));
  EXPECT_NEAR(r.value(123), 1.0 + 0.5 * std::cos(4 * pi * 0.0615 / 0.45), 1e-12);
}

TEST(Coupling, ConstantAndVariableEntries) {
  Eigen::MatrixXd q(2, 2);
  q << 0, 4, 2, 0;
  const auto c = CouplingMatrix::constant(q);
  EXPECT_TRUE(c.is_constant());
  EXPECT_FALSE(c.is_lower_triangular());
  EXPECT_EQ(c.transpose().constant_matrix()(0, 1), 2.0);
  CouplingMatrix v(2);
  v.set(1, 0, NodalField{1.0, 2.0, 3.0});
  EXPECT_FALSE(v.is_constant());
  EXPECT_TRUE(v.is_lower_triangular());
  EXPECT_TRUE(v.is_zero(0, 1));
  EXPECT_THROW(v.constant_matrix(), InvalidArgument);
  EXPECT_EQ(v.transpose().nodal(0, 1, 3)[2], 3.0);
}

TEST(Forward, ZeroSourceGivesZeroTrajectory) {
  const Mesh m = Mesh::interval(0.0, 1.0, 30);
  const TimeGrid g(0.5, 20);
  CouplingMatrix q(2);
  q.set(0, 1, 4.0);
  q.set(1, 0, interpolate(m, [](double x, double) { return -4 * x + 2; }));
  const auto y = solve_forward(m, q, 0.1, SigmaProfile::cosine_plateau(g, 0.05),
                               std::vector<NodalField>(2, NodalField(m.node_count(), 0.0)), g);
  for (double v : y.raw()) EXPECT_EQ(v, 0.0);
}

TEST(Forward, SingleModeMatchesOde) {
  // n = 1, (0, pi), F = phi_1, sigma = 1, nu = 1: y(t) = (1 - e^{-t}) phi_1.
  const Mesh m = Mesh::interval(0.0, pi, 200);
  const TimeGrid g(1.0, 400);
  const auto e = laplace_eigenpair(m, 1, 1.0);
  const std::vector<NodalField> f{e.phi};
  const auto y = solve_forward(m, CouplingMatrix(1), 1.0, SigmaProfile::constant(g, 1.0), f, g);
  const auto M = assemble_mass(m);
  const double tol = 2.0 * (g.dt() + m.h() * m.h());
  for (std::size_t k : {100u, 250u, 400u}) {
    NodalField exact = e.phi;
    for (double& v : exact) v *= 1.0 - std::exp(-g.time(k));
    EXPECT_LE(diff_norm(M, y.component(k, 0), exact), tol) << k;
  }
}

TEST(Forward, DirichletNodesStayZeroAndInitialStateIsZero) {
  const Mesh m = Mesh::rectangle(6, 5, 1.0, 1.0);
  const TimeGrid g(0.2, 10);
  const std::vector<NodalField> f{interpolate(m, [](double x, double y) { return 1.0 + x * y; })};
  const auto y = solve_forward(m, CouplingMatrix(1), 0.5, SigmaProfile::constant(g, 1.0), f, g);
  for (std::size_t i = 0; i < m.node_count(); ++i) EXPECT_EQ(y(0, 0, i), 0.0);
  for (std::size_t k = 0; k < g.n_times(); ++k)
    for (std::size_t b : m.boundary_nodes()) EXPECT_EQ(y(k, 0, b), 0.0);
}

TEST(Forward, TwoByTwoMatchesModeOde) {
  // q21 = 1, F = (phi_1, 0), sigma = 1 on (0, pi): Y_1(T) = M(T) F_1.
  const Mesh m = Mesh::interval(0.0, pi, 200);
  const TimeGrid g(1.0, 400);
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(2, 2);
  q(1, 0) = 1.0;
  const auto e = laplace_eigenpair(m, 1, 1.0);
  const std::vector<NodalField> f{e.phi, NodalField(m.node_count(), 0.0)};
  const auto sigma = SigmaProfile::constant(g, 1.0);
  const auto y = solve_forward(m, CouplingMatrix::constant(q), 1.0, sigma, f, g);
  const auto M = assemble_mass(m);
  const Eigen::MatrixXd Mt = compute_M(q, e.lambda, sigma, 1.0, 4);
  const Eigen::Vector2d yk = Mt * Eigen::Vector2d(1.0, 0.0);
  const auto Mphi = M * e.phi;
  const double tol = 2.0 * (g.dt() + m.h() * m.h());
  EXPECT_NEAR(dot(y.component(400, 0), Mphi), yk(0), tol);
  EXPECT_NEAR(dot(y.component(400, 1), Mphi), yk(1), tol);
  EXPECT_LT(yk(1), 0.0);
}

TEST(Forward, BoundedForAllStepSizes) {
  const Mesh m = Mesh::interval(0.0, 1.0, 50);
  const auto M = assemble_mass(m);
  Eigen::MatrixXd q(2, 2);
  q << 0, 40, -40, 0;
  const std::vector<NodalField> f{sine(m, pi), sine(m, 2 * pi)};
  for (std::size_t n : {1u, 5u, 50u, 500u}) {
    const TimeGrid g(1.0, n);
    const auto y = solve_forward(m, CouplingMatrix::constant(q), 0.1, SigmaProfile::constant(g, 1.0), f, g);
    for (std::size_t k = 0; k < g.n_times(); ++k) EXPECT_LE(l2(M, y.state(k).subspan(0, m.node_count())), 2.0);
  }
}

TEST(Duhamel, ZeroSigmaZeroKernel) {
  const Mesh m = Mesh::interval(0.0, 1.0, 20);
  const TimeGrid g(0.5, 10);
  const auto w = solve_duhamel_kernel(m, CouplingMatrix(1), 0.1, std::vector<NodalField>{sine(m, pi)}, 0.0, g);
  for (double v : w.raw()) EXPECT_EQ(v, 0.0);
}

TEST(Duhamel, KernelDecaysLikeHeatMode) {
  const Mesh m = Mesh::interval(0.0, 1.0, 200);
  const TimeGrid g(0.5, 500);
  const double nu = 0.1;
  const auto e = laplace_eigenpair(m, 1, nu);
  const auto w = solve_duhamel_kernel(m, CouplingMatrix(1), nu, std::vector<NodalField>{e.phi}, 1.0, g);
  const auto M = assemble_mass(m);
  double prev = l2(M, w.component(0, 0));
  for (std::size_t k = 1; k < g.n_times(); ++k) {
    const double n = l2(M, w.component(k, 0));
    EXPECT_LE(n, prev + 1e-15);
    prev = n;
  }
  NodalField exact = e.phi;
  for (double& v : exact) v *= std::exp(-nu * pi * pi * 0.5);
  EXPECT_LE(diff_norm(M, w.component(500, 0), exact), 2.0 * (g.dt() + m.h() * m.h()));
}

TEST(Duhamel, ComposeTrivialCases) {
  const Mesh m = Mesh::interval(0.0, 1.0, 4);
  const TimeGrid g(1.0, 10);
  FieldSeries w(g, 1, m.node_count());
  const auto zero = duhamel_compose(w, SigmaProfile::constant(g, 1.0));
  for (double v : zero.raw()) EXPECT_EQ(v, 0.0);
  for (std::size_t k = 0; k < g.n_times(); ++k)
    for (std::size_t i = 0; i < m.node_count(); ++i) w(k, 0, i) = 2.0 + i;
  const auto y = duhamel_compose(w, SigmaProfile::constant(g, 1.0));
  for (std::size_t k = 0; k < g.n_times(); ++k) EXPECT_NEAR(y(k, 0, 3), g.time(k) * 5.0, 1e-13);
}

TEST(Duhamel, ComposedKernelMatchesDirectSolve) {
  const Mesh m = Mesh::interval(0.0, 1.0, 100);
  const TimeGrid g(0.5, 50);
  CouplingMatrix q(2);
  q.set(0, 1, interpolate(m, [](double x, double) { return 4 * x - 2; }));
  q.set(1, 0, interpolate(m, [](double x, double) { return -4 * x + 2; }));
  const auto sigma = SigmaProfile::cosine_plateau(g, 0.05);
  const std::vector<NodalField> f{sine(m, 2 * pi), sine(m, -2 * pi)};
  const auto y = solve_forward(m, q, 0.1, sigma, f, g);
  const auto w = solve_duhamel_kernel(m, q, 0.1, f, 1.0, g);
  const auto yc = duhamel_compose(w, sigma);
  FieldSeries d(g, 2, m.node_count());
  for (std::size_t i = 0; i < d.raw().size(); ++i) d.raw()[i] = y.raw()[i] - yc.raw()[i];
  const auto M = assemble_mass(m);
  EXPECT_LE(space_time_norm(d, M), 5.0 * (g.dt() + m.h() * m.h()) * space_time_norm(y, M));
}

TEST(Backward, ZeroDataZeroSolution) {
  const Mesh m = Mesh::interval(0.0, 1.0, 10);
  const TimeGrid g(0.3, 6);
  const auto p = solve_backward(m, CouplingMatrix(2), 1.0, nullptr,
                                std::vector<NodalField>(2, NodalField(m.node_count(), 0.0)), g);
  for (double v : p.raw()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, TimeReversedHeatMode) {
  const Mesh m = Mesh::interval(0.0, 1.0, 200);
  const TimeGrid g(0.25, 500);
  const auto e = laplace_eigenpair(m, 1, 1.0);
  const auto p = solve_backward(m, CouplingMatrix(1), 1.0, nullptr, std::vector<NodalField>{e.phi}, g);
  NodalField exact = e.phi;
  for (double& v : exact) v *= std::exp(-pi * pi * 0.25);
  EXPECT_LE(diff_norm(assemble_mass(m), p.component(0, 0), exact), 2.0 * (g.dt() + m.h() * m.h()));
  EXPECT_EQ(p.component(500, 0)[100], e.phi[100]);
}

TEST(Backward, DiscreteTransposeOfForward) {
  // sum_m (G^m, M Y^m) with Y forward from a load equals the backward pairing.
  const Mesh m = Mesh::interval(0.0, 1.0, 40);
  const TimeGrid g(0.4, 16);
  Eigen::MatrixXd q(2, 2);
  q << 0.5, 3, -1, 0;
  const auto cq = CouplingMatrix::constant(q);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n;
  FieldSeries load(g, 2, m.node_count()), rhs(g, 2, m.node_count());
  for (double& v : load.raw()) v = n(rng);
  for (double& v : rhs.raw()) v = n(rng);
  for (std::size_t b : m.boundary_nodes())
    for (std::size_t k = 0; k < g.n_times(); ++k)
      for (std::size_t c = 0; c < 2; ++c) load(k, c, b) = rhs(k, c, b) = 0.0;
  const ParabolicSystem sys(m, cq, 0.3, g.dt());
  const std::vector<double> y0(2 * m.node_count(), 0.0);
  const auto y = sys.march_forward(g, y0, [&](std::size_t k, std::span<double> r) {
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += load.state(k)[i];
  });
  const auto p = sys.march_backward(g, y0, [&](std::size_t k, std::span<double> r) {
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += rhs.state(k)[i];
  }, true);
  // y^k = A^{-1}(M y^{k-1} + L^k), p^{k-1} = A^{-T}(M p^k + R^{k-1}).
  double lhs = 0.0, rhs_sum = 0.0;
  for (std::size_t k = 1; k < g.n_times(); ++k) {
    lhs += dot(rhs.state(k - 1), y.state(k));
    rhs_sum += dot(load.state(k), p.state(k - 1));
  }
  EXPECT_NEAR(lhs, rhs_sum, 1e-10 * std::abs(lhs));
}

TEST(TrajectoryCsv, Layout) {
  const Mesh m = Mesh::interval(0.0, 1.0, 2);
  const TimeGrid g(1.0, 1);
  FieldSeries y(g, 1, m.node_count());
  y(1, 0, 1) = 0.25;
  std::ostringstream os;
  write_trajectory_csv(os, y);
  EXPECT_EQ(os.str(), "t,node_id,comp,value\n0,0,1,0\n0,1,1,0\n0,2,1,0\n1,0,1,0\n1,1,1,0.25\n1,2,1,0\n");
}
