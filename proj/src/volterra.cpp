#include "srcrec/volterra.hpp"

#include <cmath>

#include "srcrec/error.hpp"

namespace srcrec {
namespace {

void require_sigma_covers(const SigmaProfile& sigma, const TimeGrid& g) {
  if (!sigma.grid().same_step(g) || sigma.grid().n_steps() < g.n_steps())
    throw InvalidArgument("sigma profile must share the step and cover the horizon");
}

double trap_weight(std::size_t j, std::size_t first, std::size_t last) {
  return (j == first || j == last) ? 0.5 : 1.0;
}

}  // namespace

TimeSeriesField::TimeSeriesField(const TimeGrid& grid, std::size_t n_nodes)
    : grid_(grid), nn_(n_nodes), v_(grid.n_times() * n_nodes, 0.0), d_(grid.n_times() * n_nodes, 0.0) {}

TimeSeriesField TimeSeriesField::from_component(const FieldSeries& y, std::size_t c) {
  if (c >= y.n_components()) throw InvalidArgument("component out of range");
  TimeSeriesField f(y.grid(), y.node_count());
  const double dt = y.grid().dt();
  for (std::size_t m = 0; m < y.time_count(); ++m) {
    auto src = y.component(m, c);
    std::copy(src.begin(), src.end(), f.values(m).begin());
    if (m > 0)
      for (std::size_t i = 0; i < f.nn_; ++i) f.deriv(m, i) = (src[i] - y(m - 1, c, i)) / dt;
  }
  if (y.time_count() > 1)
    for (std::size_t i = 0; i < f.nn_; ++i) f.deriv(0, i) = f.deriv(1, i);
  return f;
}

namespace {

// sigma'_l of the euler_adjoint scheme: forward difference of the samples.
double sigma_diff(const SigmaProfile& sigma, std::size_t l, double dt) {
  return (sigma.value(l + 1) - sigma.value(l)) / dt;
}

TimeSeriesField apply_K_euler(const TimeSeriesField& v, const SigmaProfile& sigma) {
  const TimeGrid& g = v.grid();
  const std::size_t nn = v.node_count();
  const double dt = g.dt();
  TimeSeriesField out(g, nn);
  for (std::size_t m = 1; m < g.n_times(); ++m) {
    for (std::size_t j = 1; j <= m; ++j) {
      const double s = dt * sigma.value(j);
      auto src = v.values(m + 1 - j);
      for (std::size_t i = 0; i < nn; ++i) out.value(m, i) += s * src[i];
    }
    for (std::size_t i = 0; i < nn; ++i) out.deriv(m, i) = (out.value(m, i) - out.value(m - 1, i)) / dt;
  }
  return out;
}

// Memory part of the euler_adjoint K* at level i (without the sigma_1 term).
void euler_memory(const TimeSeriesField& th, const SigmaProfile& sigma, std::size_t i, std::span<double> acc) {
  const std::size_t K = th.grid().n_steps();
  const std::size_t nn = th.node_count();
  const double dt = th.grid().dt();
  for (std::size_t m = i; m <= K; ++m) {
    const double s = dt * sigma.value(m + 1 - i);
    const double ds = m > i ? dt * sigma_diff(sigma, m - i, dt) : 0.0;
    for (std::size_t x = 0; x < nn; ++x) acc[x] += s * th.value(m, x) + ds * th.deriv(m, x);
  }
}

}  // namespace

TimeSeriesField apply_K(const TimeSeriesField& v, const SigmaProfile& sigma, VolterraScheme scheme) {
  const TimeGrid& g = v.grid();
  require_sigma_covers(sigma, g);
  if (scheme == VolterraScheme::euler_adjoint) return apply_K_euler(v, sigma);
  TimeSeriesField out(g, v.node_count());
  const double dt = g.dt();
  const std::size_t nn = v.node_count();
  for (std::size_t m = 0; m < g.n_times(); ++m) {
    for (std::size_t i = 0; i < nn; ++i) out.deriv(m, i) = sigma.sigma0() * v.value(m, i);
    if (m == 0) continue;
    for (std::size_t j = 0; j <= m; ++j) {
      const double w = dt * trap_weight(j, 0, m);
      const double s = w * sigma.value(j), ds = w * sigma.derivative(j);
      auto src = v.values(m - j);
      for (std::size_t i = 0; i < nn; ++i) {
        out.value(m, i) += s * src[i];
        out.deriv(m, i) += ds * src[i];
      }
    }
  }
  return out;
}

TimeSeriesField apply_Kstar(const TimeSeriesField& theta, const SigmaProfile& sigma, VolterraScheme scheme) {
  const TimeGrid& g = theta.grid();
  require_sigma_covers(sigma, g);
  const std::size_t K = g.n_steps();
  const std::size_t nn = theta.node_count();
  const double dt = g.dt();
  TimeSeriesField out(g, nn);
  if (scheme == VolterraScheme::euler_adjoint) {
    const double s1 = sigma.value(1);
    for (std::size_t m = 1; m <= K; ++m) {
      auto acc = out.values(m);
      for (std::size_t i = 0; i < nn; ++i) acc[i] = s1 * theta.deriv(m, i);
      euler_memory(theta, sigma, m, acc);
    }
    return out;
  }
  for (std::size_t m = 0; m <= K; ++m) {
    for (std::size_t i = 0; i < nn; ++i) out.value(m, i) = sigma.sigma0() * theta.deriv(m, i);
    if (m == K) continue;
    for (std::size_t j = m; j <= K; ++j) {
      const double w = dt * trap_weight(j, m, K);
      const double s = w * sigma.value(j - m), ds = w * sigma.derivative(j - m);
      for (std::size_t i = 0; i < nn; ++i) out.value(m, i) += s * theta.value(j, i) + ds * theta.deriv(j, i);
    }
  }
  return out;
}

VolterraSolution solve_volterra(const TimeSeriesField& eta, const SigmaProfile& sigma, const SparseMatrix& mass,
                                VolterraScheme scheme) {
  const TimeGrid& g = eta.grid();
  require_sigma_covers(sigma, g);
  const double s0 = sigma.sigma0();
  if (std::abs(s0) < 1e-12) throw InvalidArgument("first-kind Volterra regime (sigma(0) = 0) is unsupported");
  const std::size_t K = g.n_steps();
  const std::size_t nn = eta.node_count();
  const double dt = g.dt();
  VolterraSolution sol{TimeSeriesField(g, nn), 0.0};
  TimeSeriesField& th = sol.theta;
  std::vector<double> rhs(nn);

  if (scheme == VolterraScheme::euler_adjoint) {
    const double s1 = sigma.value(1);
    if (std::abs(s1) < 1e-12) throw SolverError("Volterra marching coefficient vanishes", 0.0);
    for (std::size_t m = K; m >= 1; --m) {
      std::fill(rhs.begin(), rhs.end(), 0.0);
      euler_memory(th, sigma, m, rhs);
      for (std::size_t i = 0; i < nn; ++i) {
        th.deriv(m, i) = (eta.value(m, i) - rhs[i]) / s1;
        th.value(m - 1, i) = th.value(m, i) - dt * th.deriv(m, i);
      }
    }
    for (std::size_t i = 0; i < nn; ++i) th.deriv(0, i) = K > 0 ? th.deriv(1, i) : 0.0;
  } else {
    const double ds0 = sigma.derivative(0);
    const double diag = s0 + 0.5 * dt * ds0 - 0.5 * dt * dt * s0;
    if (std::abs(diag) < 1e-14) throw SolverError("Volterra marching coefficient vanishes", 0.0);
    for (std::size_t i = 0; i < nn; ++i) th.deriv(K, i) = eta.value(K, i) / s0;
    for (std::size_t m = K; m-- > 0;) {
      for (std::size_t i = 0; i < nn; ++i) rhs[i] = eta.value(m, i) - 0.5 * dt * s0 * th.value(m + 1, i);
      for (std::size_t j = m + 1; j <= K; ++j) {
        const double w = dt * trap_weight(j, m, K);
        const double s = w * sigma.value(j - m), ds = w * sigma.derivative(j - m);
        for (std::size_t i = 0; i < nn; ++i) rhs[i] -= s * th.value(j, i) + ds * th.deriv(j, i);
      }
      for (std::size_t i = 0; i < nn; ++i) {
        th.deriv(m, i) = rhs[i] / diag;
        th.value(m, i) = th.value(m + 1, i) - dt * th.deriv(m, i);
      }
    }
  }
  const double en = l2_time_pairing(eta, eta, mass, scheme);
  if (en > 0.0) sol.stability = std::sqrt(h1_time_pairing(th, th, mass, scheme) / en);
  return sol;
}

double l2_time_pairing(const TimeSeriesField& a, const TimeSeriesField& b, const SparseMatrix& mass,
                       VolterraScheme scheme) {
  if (a.time_count() != b.time_count() || a.node_count() != b.node_count())
    throw InvalidArgument("time series do not match");
  const std::size_t K = a.grid().n_steps();
  const double dt = a.grid().dt();
  double s = 0.0;
  if (scheme == VolterraScheme::euler_adjoint) {
    for (std::size_t m = 1; m <= K; ++m) s += dt * mass.bilinear(a.values(m), b.values(m));
    return s;
  }
  for (std::size_t m = 0; m <= K; ++m) s += dt * trap_weight(m, 0, K) * mass.bilinear(a.values(m), b.values(m));
  return s;
}

double h1_time_pairing(const TimeSeriesField& a, const TimeSeriesField& b, const SparseMatrix& mass,
                       VolterraScheme scheme) {
  const std::size_t K = a.grid().n_steps();
  const double dt = a.grid().dt();
  double s = l2_time_pairing(a, b, mass, scheme);
  if (scheme == VolterraScheme::euler_adjoint) {
    for (std::size_t m = 1; m <= K; ++m) s += dt * mass.bilinear(a.derivs(m), b.derivs(m));
    return s;
  }
  for (std::size_t m = 0; m <= K; ++m) s += dt * trap_weight(m, 0, K) * mass.bilinear(a.derivs(m), b.derivs(m));
  return s;
}

}  // namespace srcrec
