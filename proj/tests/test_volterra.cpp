#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "srcrec/error.hpp"
#include "srcrec/volterra.hpp"

using namespace srcrec;

namespace {

const SparseMatrix& unit() {
  static const SparseMatrix id = SparseMatrix::identity(1);
  return id;
}

TimeSeriesField scalar(const TimeGrid& g, auto f, auto df) {
  TimeSeriesField v(g, 1);
  for (std::size_t m = 0; m < g.n_times(); ++m) {
    v.value(m, 0) = f(g.time(m));
    v.deriv(m, 0) = df(g.time(m));
  }
  return v;
}

double max_sinh_error(std::size_t n, VolterraScheme scheme) {
  const TimeGrid g(1.0, n);
  const auto s = SigmaProfile::constant(g, 1.0);
  TimeSeriesField eta(g, 1);
  for (std::size_t m = 0; m < g.n_times(); ++m) eta.value(m, 0) = 2.0;
  const auto th = solve_volterra(eta, s, unit(), scheme).theta;
  double e = 0.0;
  for (std::size_t m = 0; m < g.n_times(); ++m) e = std::max(e, std::abs(th.value(m, 0) - 2.0 * std::sinh(g.time(m) - 1.0)));
  return e;
}

}  // namespace

TEST(K, UnitKernel) {
  const TimeGrid g(1.0, 100);
  const auto s = SigmaProfile::constant(g, 1.0);
  const auto z = apply_K(TimeSeriesField(g, 1), s);
  for (std::size_t m = 0; m < g.n_times(); ++m) EXPECT_EQ(z.value(m, 0), 0.0);
  const auto one = apply_K(scalar(g, [](double) { return 1.0; }, [](double) { return 0.0; }), s);
  const auto lin = apply_K(scalar(g, [](double t) { return t; }, [](double) { return 1.0; }), s);
  for (std::size_t m = 0; m < g.n_times(); ++m) {
    EXPECT_NEAR(one.value(m, 0), g.time(m), 1e-14);
    EXPECT_NEAR(lin.value(m, 0), g.time(m) * g.time(m) / 2, 1e-12);
  }
  EXPECT_EQ(one.value(0, 0), 0.0);
}

TEST(KStar, ZeroAndSinhClosedForm) {
  const TimeGrid g(1.0, 1000);
  const auto s = SigmaProfile::constant(g, 1.0);
  const auto z = apply_Kstar(TimeSeriesField(g, 1), s);
  for (std::size_t m = 0; m < g.n_times(); ++m) EXPECT_EQ(z.value(m, 0), 0.0);
  // sigma(0) cosh(t - tau) + int_t^tau sinh(s - tau) ds = 1.
  const auto th = scalar(g, [](double t) { return std::sinh(t - 1.0); }, [](double t) { return std::cosh(t - 1.0); });
  const auto k = apply_Kstar(th, s);
  for (std::size_t m = 0; m < g.n_times(); m += 50) EXPECT_NEAR(k.value(m, 0), 1.0, 1e-6);
}

TEST(KStar, DiscreteDuality) {
  const TimeGrid g(0.5, 200);
  const auto s = SigmaProfile::cosine_plateau(g, 0.05);
  const auto v = scalar(g, [](double t) { return std::cos(3 * t) + t; }, [](double t) { return -3 * std::sin(3 * t) + 1; });
  const auto th = scalar(g, [](double t) { return std::sin(2 * (t - 0.5)) * std::exp(t); },
                         [](double t) { return (2 * std::cos(2 * (t - 0.5)) + std::sin(2 * (t - 0.5))) * std::exp(t); });
  const double lhs = h1_time_pairing(apply_K(v, s), th, unit());
  const double rhs = l2_time_pairing(v, apply_Kstar(th, s), unit());
  EXPECT_LE(std::abs(lhs - rhs), 10.0 * g.dt() * std::abs(lhs));

  // The right-point scheme is an exact adjoint pair.
  TimeSeriesField te(g, 1);
  for (std::size_t m = 0; m < g.n_times(); ++m) te.value(m, 0) = th.value(m, 0);
  for (std::size_t m = 1; m < g.n_times(); ++m) te.deriv(m, 0) = (te.value(m, 0) - te.value(m - 1, 0)) / g.dt();
  const auto kv = apply_K(v, s, VolterraScheme::euler_adjoint);
  const auto ks = apply_Kstar(te, s, VolterraScheme::euler_adjoint);
  const double le = h1_time_pairing(kv, te, unit(), VolterraScheme::euler_adjoint);
  const double re = l2_time_pairing(v, ks, unit(), VolterraScheme::euler_adjoint);
  EXPECT_NEAR(le, re, 1e-12 * std::abs(le));
}

TEST(Volterra, ZeroDataZeroSolution) {
  const TimeGrid g(0.5, 40);
  const auto th = solve_volterra(TimeSeriesField(g, 3), SigmaProfile::cosine_plateau(g, 0.05), SparseMatrix::identity(3)).theta;
  for (std::size_t m = 0; m < g.n_times(); ++m)
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(th.value(m, i), 0.0);
}

TEST(Volterra, SinhOracleAndFirstOrder) {
  for (auto scheme : {VolterraScheme::trapezoid, VolterraScheme::euler_adjoint}) {
    const double e1 = max_sinh_error(500, scheme), e2 = max_sinh_error(1000, scheme);
    EXPECT_LE(e2, 2e-3);
    EXPECT_GE(e1 / e2, 1.8);
  }
  EXPECT_LE(max_sinh_error(1000, VolterraScheme::trapezoid), 1e-3);
}

TEST(Volterra, TerminalConditionExact) {
  const TimeGrid g(0.5, 30);
  const auto s = SigmaProfile::cosine_plateau(g, 0.05);
  const auto eta = scalar(g, [](double t) { return std::exp(t); }, [](double t) { return std::exp(t); });
  for (auto scheme : {VolterraScheme::trapezoid, VolterraScheme::euler_adjoint})
    EXPECT_EQ(solve_volterra(eta, s, unit(), scheme).theta.value(30, 0), 0.0);
}

TEST(Volterra, RoundTripThroughKStar) {
  const TimeGrid g(0.5, 400);
  const auto s = SigmaProfile::cosine_plateau(g, 0.05);
  const auto eta = scalar(g, [](double t) { return 1.0 + std::sin(7 * t); }, [](double t) { return 7 * std::cos(7 * t); });
  const auto sol = solve_volterra(eta, s, unit());
  const auto back = apply_Kstar(sol.theta, s);
  TimeSeriesField d(g, 1);
  for (std::size_t m = 0; m < g.n_times(); ++m) d.value(m, 0) = back.value(m, 0) - eta.value(m, 0);
  EXPECT_LE(std::sqrt(l2_time_pairing(d, d, unit())), 20.0 * g.dt() * std::sqrt(l2_time_pairing(eta, eta, unit())));
  EXPECT_GT(sol.stability, 0.0);
  EXPECT_TRUE(std::isfinite(sol.stability));
  // Right-point scheme: the round trip is exact.
  const auto se = solve_volterra(eta, s, unit(), VolterraScheme::euler_adjoint);
  const auto be = apply_Kstar(se.theta, s, VolterraScheme::euler_adjoint);
  for (std::size_t m = 1; m < g.n_times(); ++m) EXPECT_NEAR(be.value(m, 0), eta.value(m, 0), 1e-10);
}

TEST(Volterra, Linear) {
  const TimeGrid g(0.5, 50);
  const auto s = SigmaProfile::cosine_plateau(g, 0.05);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  TimeSeriesField a(g, 4), b(g, 4), c(g, 4);
  for (std::size_t m = 0; m < g.n_times(); ++m)
    for (std::size_t i = 0; i < 4; ++i) {
      a.value(m, i) = n(rng);
      b.value(m, i) = n(rng);
      c.value(m, i) = a.value(m, i) + b.value(m, i);
    }
  const auto id = SparseMatrix::identity(4);
  const auto ta = solve_volterra(a, s, id).theta, tb = solve_volterra(b, s, id).theta, tc = solve_volterra(c, s, id).theta;
  for (std::size_t m = 0; m < g.n_times(); ++m)
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(tc.value(m, i), ta.value(m, i) + tb.value(m, i), 1e-10);
}

TEST(Volterra, FirstKindRejected) {
  const TimeGrid g(1.0, 10);
  const auto s = SigmaProfile::from_functions(g, [](double t) { return t; }, [](double) { return 1.0; });
  EXPECT_THROW(solve_volterra(TimeSeriesField(g, 1), s, unit()), InvalidArgument);
}

TEST(K, NormEquivalenceRatioBounded) {
  const TimeGrid g(0.5, 200);
  const auto s = SigmaProfile::cosine_plateau(g, 0.05);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double lo = 1e300, hi = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    double c[4];
    for (double& x : c) x = u(rng);
    const auto v = scalar(
        g, [&](double t) { return c[0] + c[1] * std::sin(2 * t) + c[2] * std::cos(5 * t) + c[3] * t * t; },
        [&](double t) { return 2 * c[1] * std::cos(2 * t) - 5 * c[2] * std::sin(5 * t) + 2 * c[3] * t; });
    const auto kv = apply_K(v, s);
    const double r = std::sqrt(l2_time_pairing(v, v, unit()) / h1_time_pairing(kv, kv, unit()));
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  EXPECT_GT(lo, 0.1);
  EXPECT_LT(hi, 10.0);
}
