#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "srcrec/error.hpp"
#include "srcrec/fem.hpp"

using namespace srcrec;

namespace {

double asymmetry(const SparseMatrix& a) {
  double d = 0.0;
  for (const auto& t : a.triplets()) d = std::max(d, std::abs(t.value - a.at(t.col, t.row)));
  return d;
}

double total(const SparseMatrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return s;
}

}  // namespace

TEST(Sparse, TripletsSumDuplicatesAndSortColumns) {
  const auto a = SparseMatrix::from_triplets(2, 3, {{0, 2, 1.0}, {0, 0, 2.0}, {0, 2, 3.0}, {1, 1, -1.0}});
  EXPECT_EQ(a.nnz(), 3u);
  EXPECT_EQ(a.at(0, 2), 4.0);
  EXPECT_EQ(a.at(0, 1), 0.0);
  const auto cols = a.col_index();
  EXPECT_LT(cols[0], cols[1]);
  const auto y = a * std::vector<double>{1.0, 2.0, 3.0};
  EXPECT_EQ(y[0], 14.0);
  EXPECT_EQ(y[1], -2.0);
  EXPECT_EQ(a.transpose().at(2, 0), 4.0);
}

TEST(Sparse, AdditionIsStructuralUnion) {
  const auto a = SparseMatrix::from_triplets(2, 2, {{0, 0, 1.0}});
  const auto b = SparseMatrix::from_triplets(2, 2, {{1, 0, 2.0}, {0, 0, 1.0}});
  const auto c = a + b;
  EXPECT_EQ(c.at(0, 0), 2.0);
  EXPECT_EQ(c.at(1, 0), 2.0);
  EXPECT_THROW(a + SparseMatrix::identity(3), InvalidArgument);
}

TEST(Mass, InteriorRowOneDimension) {
  const Mesh m = Mesh::interval(0.0, 1.0, 10);
  const auto M = assemble_mass(m);
  const double h = 0.1;
  EXPECT_NEAR(M.at(5, 4), h / 6, 1e-15);
  EXPECT_NEAR(M.at(5, 5), 4 * h / 6, 1e-15);
  EXPECT_NEAR(M.at(5, 6), h / 6, 1e-15);
  EXPECT_NEAR(total(M), 1.0, 1e-14);
}

TEST(Mass, RowSumsAreLumpedMeasures) {
  const Mesh m = Mesh::rectangle(4, 3, 2.0, 1.0);
  const auto M = assemble_mass(m);
  std::vector<double> lumped(m.node_count(), 0.0);
  for (std::size_t e = 0; e < m.element_count(); ++e)
    for (std::size_t v : m.element(e)) lumped[v] += m.element_measure(e) / 3.0;
  const auto rows = M * std::vector<double>(m.node_count(), 1.0);
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_NEAR(rows[i], lumped[i], 1e-14);
  EXPECT_NEAR(total(M), 2.0, 1e-13);
}

TEST(Mass, SingleRightTriangleDiagonal) {
  // The lower-right triangle of one unit cell has legs of length 1.
  const Mesh m = Mesh::rectangle(1, 1, 1.0, 1.0);
  const auto M = assemble_mass(m);
  // Corner (1,0) belongs to exactly one triangle.
  std::size_t corner = 0;
  for (std::size_t i = 0; i < m.node_count(); ++i)
    if (m.node(i).x == 1.0 && m.node(i).y == 0.0) corner = i;
  EXPECT_NEAR(M.at(corner, corner), 1.0 / 12.0, 1e-15);
}

TEST(Stiffness, InteriorRowOneDimension) {
  const Mesh m = Mesh::interval(0.0, 1.0, 8);
  const auto S = assemble_stiffness(m, 1.0);
  EXPECT_NEAR(S.at(3, 2), -8.0, 1e-12);
  EXPECT_NEAR(S.at(3, 3), 16.0, 1e-12);
  EXPECT_NEAR(S.at(3, 4), -8.0, 1e-12);
}

TEST(Stiffness, ConstantsInKernelAndLinearInNu) {
  const Mesh m = Mesh::rectangle(5, 6, 1.0, 2.0);
  const auto S1 = assemble_stiffness(m, 1.0);
  const auto S01 = assemble_stiffness(m, 0.1);
  const auto r = S1 * std::vector<double>(m.node_count(), 3.0);
  for (double v : r) EXPECT_NEAR(v, 0.0, 1e-12);
  for (const auto& t : S1.triplets()) EXPECT_NEAR(S01.at(t.row, t.col), 0.1 * t.value, 1e-14);
  EXPECT_THROW(assemble_stiffness(m, 0.0), InvalidArgument);
}

TEST(Stiffness, PositiveSemidefiniteAndSymmetric) {
  const Mesh m = Mesh::rectangle(6, 6, 1.0, 1.0);
  const auto S = assemble_stiffness(m, 0.7);
  const auto M = assemble_mass(m);
  EXPECT_LE(asymmetry(S), 1e-14 * S.max_abs());
  EXPECT_LE(asymmetry(M), 1e-14 * M.max_abs());
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  for (int k = 0; k < 20; ++k) {
    std::vector<double> x(m.node_count());
    for (double& v : x) v = n(rng);
    EXPECT_GE(S.bilinear(x, x), -1e-12);
  }
}

TEST(WeightedMass, UnitZeroAndLinearWeights) {
  const Mesh m = Mesh::interval(0.0, 1.0, 20);
  const auto M = assemble_mass(m);
  const auto W1 = assemble_weighted_mass(m, NodalField(m.node_count(), 1.0));
  for (const auto& t : M.triplets()) EXPECT_NEAR(W1.at(t.row, t.col), t.value, 1e-15);
  const auto W0 = assemble_weighted_mass(m, NodalField(m.node_count(), 0.0));
  EXPECT_EQ(W0.max_abs(), 0.0);
  const auto Wx = assemble_weighted_mass(m, interpolate(m, [](double x, double) { return x; }));
  EXPECT_NEAR(total(Wx), 0.5, 1e-14);
  EXPECT_THROW(assemble_weighted_mass(m, NodalField(3, 1.0)), InvalidArgument);
}

TEST(WeightedMass, ExactForCubicIntegrandTwoDimensions) {
  // sum_ij of int q phi_i phi_j = int q, exact for the P1 interpolant of q = x + 2y.
  const Mesh m = Mesh::rectangle(3, 5, 1.0, 1.0);
  const auto W = assemble_weighted_mass(m, interpolate(m, [](double x, double y) { return x + 2 * y; }));
  EXPECT_NEAR(total(W), 1.5, 1e-14);
}

TEST(Solve, IdentityAndZero) {
  const auto I = SparseMatrix::identity(5);
  const std::vector<double> b{1, 2, 3, 4, 5};
  EXPECT_EQ(solve_spd(I, b).x, b);
  const auto z = solve_spd(I, std::vector<double>(5, 0.0));
  for (double v : z.x) EXPECT_EQ(v, 0.0);
}

TEST(Solve, PoissonMidpoint) {
  const Mesh m = Mesh::interval(0.0, 1.0, 100);
  const auto A = apply_dirichlet(assemble_stiffness(m, 1.0), m.boundary_nodes());
  auto b = assemble_mass(m) * std::vector<double>(m.node_count(), 1.0);
  zero_dofs(b, m.boundary_nodes());
  const auto r = solve_spd(A, b);
  EXPECT_LE(r.relative_residual, 1e-10);
  EXPECT_NEAR(r.x[50], 0.125, 1e-10);
}

TEST(Solve, NonConvergenceReportsResidual) {
  const Mesh m = Mesh::interval(0.0, 1.0, 200);
  const auto A = apply_dirichlet(assemble_stiffness(m, 1.0), m.boundary_nodes());
  auto b = assemble_mass(m) * std::vector<double>(m.node_count(), 1.0);
  zero_dofs(b, m.boundary_nodes());
  try {
    solve_spd(A, b, 1e-14, 3);
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_GT(e.residual(), 1e-14);
  }
}

TEST(Solve, PoissonSecondOrderConvergence) {
  // -u'' = pi^2 sin(pi x), u = sin(pi x).
  std::vector<double> errs;
  for (std::size_t n : {25u, 50u, 100u}) {
    const Mesh m = Mesh::interval(0.0, 1.0, n);
    const auto A = apply_dirichlet(assemble_stiffness(m, 1.0), m.boundary_nodes());
    const auto M = assemble_mass(m);
    const auto f = interpolate(m, [](double x, double) { return std::numbers::pi * std::numbers::pi * std::sin(std::numbers::pi * x); });
    auto b = M * f;
    zero_dofs(b, m.boundary_nodes());
    const auto u = solve_spd(A, b, 1e-13).x;
    const auto exact = interpolate(m, [](double x, double) { return std::sin(std::numbers::pi * x); });
    std::vector<double> d(u.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = u[i] - exact[i];
    errs.push_back(std::sqrt(M.bilinear(d, d)));
  }
  EXPECT_GE(std::log2(errs[0] / errs[1]), 1.9);
  EXPECT_GE(std::log2(errs[1] / errs[2]), 1.9);
}

TEST(Dirichlet, EliminationKeepsSymmetryAndUnitDiagonal) {
  const Mesh m = Mesh::rectangle(4, 4, 1.0, 1.0);
  const auto A = apply_dirichlet(assemble_stiffness(m, 1.0), m.boundary_nodes());
  EXPECT_LE(asymmetry(A), 1e-14 * A.max_abs());
  for (std::size_t b : m.boundary_nodes()) {
    EXPECT_EQ(A.at(b, b), 1.0);
    for (std::size_t j = 0; j < m.node_count(); ++j)
      if (j != b) EXPECT_EQ(A.at(b, j), 0.0);
  }
}

TEST(Assembly, BitwiseReproducible) {
  const Mesh m = Mesh::rectangle(9, 7, 1.0, 1.0);
  const auto a = assemble_stiffness(m, 0.3);
  const auto b = assemble_stiffness(m, 0.3);
  ASSERT_EQ(a.nnz(), b.nnz());
  for (std::size_t i = 0; i < a.nnz(); ++i) EXPECT_EQ(a.values()[i], b.values()[i]);
}
