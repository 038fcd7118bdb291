#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "srcrec/fem.hpp"
#include "srcrec/mesh.hpp"

namespace srcrec {

// Uniform grid t_m = m*T/n_steps, m = 0..n_steps.
class TimeGrid {
 public:
  TimeGrid(double T, std::size_t n_steps);
  double T() const noexcept { return T_; }
  std::size_t n_steps() const noexcept { return n_; }
  std::size_t n_times() const noexcept { return n_ + 1; }
  double dt() const noexcept { return T_ / static_cast<double>(n_); }
  double time(std::size_t m) const noexcept { return T_ * static_cast<double>(m) / static_cast<double>(n_); }
  // First m steps of this grid.
  TimeGrid prefix(std::size_t m) const { return TimeGrid(time(m), m); }
  bool same_step(const TimeGrid& other) const noexcept;

 private:
  double T_;
  std::size_t n_;
};

// Time profile sigma sampled on a grid, with its derivative. When built from
// closed-form callables those are used for off-grid evaluation; otherwise the
// samples are linearly interpolated.
class SigmaProfile {
 public:
  using Fn = std::function<double(double)>;

  static SigmaProfile constant(const TimeGrid& grid, double c);
  // 1 + cos(4 pi t / (T - t0)) / 2 before T - t0, then 3/2.
  static SigmaProfile cosine_plateau(const TimeGrid& grid, double t0);
  static SigmaProfile from_functions(const TimeGrid& grid, Fn f, Fn df);
  static SigmaProfile from_samples(const TimeGrid& grid, std::vector<double> values, std::vector<double> derivs);

  const TimeGrid& grid() const noexcept { return grid_; }
  std::span<const double> samples() const noexcept { return values_; }
  std::span<const double> derivative_samples() const noexcept { return derivs_; }
  double value(std::size_t m) const { return values_.at(m); }
  double derivative(std::size_t m) const { return derivs_.at(m); }
  double sigma0() const noexcept { return values_.front(); }
  double sigmaT() const noexcept { return values_.back(); }
  double at(double t) const;
  double derivative_at(double t) const;
  // Same profile resampled on another grid.
  SigmaProfile resampled(const TimeGrid& grid) const;
  double sup_norm() const noexcept;

 private:
  SigmaProfile(const TimeGrid& grid) : grid_(grid) {}
  double interp(std::span<const double> v, double t) const;

  TimeGrid grid_;
  std::vector<double> values_;
  std::vector<double> derivs_;
  Fn f_;
  Fn df_;
};

// n x n coupling; each entry a constant or a nodal field.
class CouplingMatrix {
 public:
  using Entry = std::variant<double, NodalField>;

  explicit CouplingMatrix(std::size_t n = 1);
  static CouplingMatrix constant(const Eigen::MatrixXd& q);

  std::size_t n() const noexcept { return n_; }
  void set(std::size_t i, std::size_t j, double c);
  void set(std::size_t i, std::size_t j, NodalField f);
  const Entry& entry(std::size_t i, std::size_t j) const { return entries_.at(i * n_ + j); }

  bool is_constant() const noexcept;
  bool is_zero(std::size_t i, std::size_t j) const;
  bool is_lower_triangular() const;
  Eigen::MatrixXd constant_matrix() const;  // throws for variable entries
  NodalField nodal(std::size_t i, std::size_t j, std::size_t node_count) const;
  CouplingMatrix transpose() const;

 private:
  std::size_t n_;
  std::vector<Entry> entries_;
};

// Nodal values of an n-component field at every grid time. The state at time
// m is stored contiguously as [component][node].
class FieldSeries {
 public:
  FieldSeries(const TimeGrid& grid, std::size_t n_components, std::size_t n_nodes);

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t n_components() const noexcept { return nc_; }
  std::size_t node_count() const noexcept { return nn_; }
  std::size_t time_count() const noexcept { return grid_.n_times(); }

  std::span<double> state(std::size_t m) { return {data_.data() + m * nc_ * nn_, nc_ * nn_}; }
  std::span<const double> state(std::size_t m) const { return {data_.data() + m * nc_ * nn_, nc_ * nn_}; }
  std::span<double> component(std::size_t m, std::size_t c) { return {data_.data() + (m * nc_ + c) * nn_, nn_}; }
  std::span<const double> component(std::size_t m, std::size_t c) const {
    return {data_.data() + (m * nc_ + c) * nn_, nn_};
  }
  double& operator()(std::size_t m, std::size_t c, std::size_t i) { return data_[(m * nc_ + c) * nn_ + i]; }
  double operator()(std::size_t m, std::size_t c, std::size_t i) const { return data_[(m * nc_ + c) * nn_ + i]; }

  std::span<const double> raw() const noexcept { return data_; }
  std::span<double> raw() noexcept { return data_; }

 private:
  TimeGrid grid_;
  std::size_t nc_;
  std::size_t nn_;
  std::vector<double> data_;
};

// Implicit Euler operator A = blockdiag(M + dt S) + dt [M_{q_ij}] with
// homogeneous Dirichlet rows and columns eliminated, factored once.
// solve() applies A^{-1}; solve_transposed() applies A^{-T}, which is the step
// operator of the system with transposed coupling.
class ParabolicSystem {
 public:
  ParabolicSystem(const Mesh& mesh, const CouplingMatrix& q, double nu, double dt);
  ~ParabolicSystem();
  ParabolicSystem(ParabolicSystem&&) noexcept;
  ParabolicSystem& operator=(ParabolicSystem&&) noexcept;

  const Mesh& mesh() const noexcept { return *mesh_; }
  std::size_t n_components() const noexcept { return nc_; }
  std::size_t node_count() const noexcept { return nn_; }
  std::size_t size() const noexcept { return nc_ * nn_; }
  double dt() const noexcept { return dt_; }
  double nu() const noexcept { return nu_; }
  const SparseMatrix& mass() const noexcept { return mass_; }
  const SparseMatrix& stiffness() const noexcept { return stiff_; }
  const SparseMatrix& block_matrix() const noexcept { return a_; }
  std::span<const std::size_t> fixed_dofs() const noexcept { return fixed_; }

  // In place; boundary entries of the right-hand side are zeroed first.
  void solve(std::span<double> x) const;
  void solve_transposed(std::span<double> x) const;
  // Block mass y = diag(M) x.
  void apply_mass(std::span<const double> x, std::span<double> y) const;

  // Load callback: (m, rhs) adds the source contribution of the step that
  // produces level m. The mass term of the previous level is added internally.
  using Load = std::function<void(std::size_t, std::span<double>)>;

  FieldSeries march_forward(const TimeGrid& grid, std::span<const double> initial, const Load& load,
                           bool transposed = false) const;
  // Marches from level n_steps down to 0 with A^{-T} (transposed = true) or
  // A^{-1}. The load callback receives the level being produced.
  FieldSeries march_backward(const TimeGrid& grid, std::span<const double> terminal, const Load& load,
                             bool transposed) const;

 private:
  struct Factor;
  const Mesh* mesh_;
  std::size_t nc_;
  std::size_t nn_;
  double dt_;
  double nu_;
  SparseMatrix mass_;
  SparseMatrix stiff_;
  SparseMatrix a_;
  std::vector<std::size_t> fixed_;
  std::unique_ptr<Factor> lu_;
};

// Stacks n nodal fields into one block vector.
std::vector<double> stack(std::span<const NodalField> fields);

FieldSeries solve_forward(const Mesh& mesh, const CouplingMatrix& q, double nu, const SigmaProfile& sigma,
                          std::span<const NodalField> f, const TimeGrid& grid);
FieldSeries solve_forward(const ParabolicSystem& sys, const SigmaProfile& sigma, std::span<const NodalField> f,
                          const TimeGrid& grid);

// Homogeneous system with initial datum sigma0 * F.
FieldSeries solve_duhamel_kernel(const Mesh& mesh, const CouplingMatrix& q, double nu, std::span<const NodalField> f,
                                 double sigma0, const TimeGrid& grid);

// Backward system with coupling qt, marched from the terminal datum at t = T of
// the grid down to t = 0. The right-hand side at level m+1 drives the step to
// level m, which makes the scheme the exact discrete transpose of the forward
// stepper. With a support mask the load uses the mass matrix restricted to it.
FieldSeries solve_backward(const Mesh& mesh, const CouplingMatrix& qt, double nu, const FieldSeries* rhs,
                           std::span<const NodalField> terminal, const TimeGrid& grid,
                           const SubdomainMask* rhs_support = nullptr);

// Trapezoidal convolution Y(t_m) = int_0^{t_m} sigma(s) W(t_m - s) ds.
FieldSeries duhamel_compose(const FieldSeries& w, const SigmaProfile& sigma);

// L2(0,T; L2) norm with right-point rule in time and the mass matrix in space.
double space_time_norm(const FieldSeries& y, const SparseMatrix& mass);

void write_trajectory_csv(std::ostream& os, const FieldSeries& y);
void write_snapshot_csv(std::ostream& os, const Mesh& mesh, const FieldSeries& y, std::size_t m);

}  // namespace srcrec
