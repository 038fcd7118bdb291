#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "srcrec/fem.hpp"
#include "srcrec/forward.hpp"

namespace srcrec {

// Scalar nodal field on a time grid together with its time derivative.
class TimeSeriesField {
 public:
  TimeSeriesField(const TimeGrid& grid, std::size_t n_nodes);

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t node_count() const noexcept { return nn_; }
  std::size_t time_count() const noexcept { return grid_.n_times(); }

  std::span<double> values(std::size_t m) { return {v_.data() + m * nn_, nn_}; }
  std::span<const double> values(std::size_t m) const { return {v_.data() + m * nn_, nn_}; }
  std::span<double> derivs(std::size_t m) { return {d_.data() + m * nn_, nn_}; }
  std::span<const double> derivs(std::size_t m) const { return {d_.data() + m * nn_, nn_}; }
  double& value(std::size_t m, std::size_t i) { return v_[m * nn_ + i]; }
  double value(std::size_t m, std::size_t i) const { return v_[m * nn_ + i]; }
  double& deriv(std::size_t m, std::size_t i) { return d_[m * nn_ + i]; }
  double deriv(std::size_t m, std::size_t i) const { return d_[m * nn_ + i]; }

  // One component of a series; derivatives by backward differences, the first
  // level copying the second.
  static TimeSeriesField from_component(const FieldSeries& y, std::size_t c);

 private:
  TimeGrid grid_;
  std::size_t nn_;
  std::vector<double> v_;
  std::vector<double> d_;
};

// Quadrature of the memory integrals.
//  trapezoid: composite trapezoid; derivative slots hold forward differences.
//  euler_adjoint: right-point sums (Kv)^m = dt sum_{j=1}^m sigma_j v^{m+1-j}, the
//    convolution produced by implicit Euler with sigma at the new level; K* is
//    its exact adjoint for the right-point pairings below and derivative slots
//    hold backward differences.
enum class VolterraScheme { trapezoid, euler_adjoint };

// (Kv)(t) = int_0^t sigma(s) v(t - s) ds; the derivative slot holds
// sigma(0) v(t) + int_0^t sigma'(s) v(t - s) ds.
TimeSeriesField apply_K(const TimeSeriesField& v, const SigmaProfile& sigma,
                        VolterraScheme scheme = VolterraScheme::trapezoid);

// (K* theta)(t) = sigma(0) theta'(t) + int_t^tau (sigma(s-t) theta(s) + sigma'(s-t) theta'(s)) ds,
// with tau the end of theta's grid and the same quadrature as the solver.
TimeSeriesField apply_Kstar(const TimeSeriesField& theta, const SigmaProfile& sigma,
                            VolterraScheme scheme = VolterraScheme::trapezoid);

struct VolterraSolution {
  TimeSeriesField theta;
  double stability = 0.0;  // ||theta||_{H1(0,tau)} / ||eta||_{L2(0,tau)} in the supplied space inner product
};

// Solves K* theta = eta with theta(tau) = 0 by backward marching with the
// derivative as unknown. Rejects |sigma(0)| < 1e-12. The space inner product
// for the reported stability ratio is the given mass matrix.
VolterraSolution solve_volterra(const TimeSeriesField& eta, const SigmaProfile& sigma, const SparseMatrix& mass,
                                VolterraScheme scheme = VolterraScheme::trapezoid);

// Time pairings with a spatial mass matrix: trapezoid over all levels, or
// right-point sums over levels 1..K for the euler_adjoint scheme.
double l2_time_pairing(const TimeSeriesField& a, const TimeSeriesField& b, const SparseMatrix& mass,
                       VolterraScheme scheme = VolterraScheme::trapezoid);
double h1_time_pairing(const TimeSeriesField& a, const TimeSeriesField& b, const SparseMatrix& mass,
                       VolterraScheme scheme = VolterraScheme::trapezoid);

}  // namespace srcrec
