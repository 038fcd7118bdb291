#include "srcrec/forward.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <string>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "srcrec/error.hpp"

namespace srcrec {

TimeGrid::TimeGrid(double T, std::size_t n_steps) : T_(T), n_(n_steps) {
  if (!(T > 0.0)) throw InvalidArgument("final time must be positive");
  if (n_steps == 0) throw InvalidArgument("time grid needs at least one step");
}

bool TimeGrid::same_step(const TimeGrid& other) const noexcept {
  return std::abs(dt() - other.dt()) <= 1e-12 * dt();
}

// ---------------------------------------------------------------- sigma

SigmaProfile SigmaProfile::constant(const TimeGrid& grid, double c) {
  return from_functions(grid, [c](double) { return c; }, [](double) { return 0.0; });
}

SigmaProfile SigmaProfile::cosine_plateau(const TimeGrid& grid, double t0) {
  const double T = grid.T();
  if (!(t0 > 0.0) || !(t0 < T)) throw InvalidArgument("plateau offset must lie in (0, T)");
  const double w = 4.0 * std::numbers::pi / (T - t0);
  auto f = [T, t0, w](double t) { return t < T - t0 ? 1.0 + 0.5 * std::cos(w * t) : 1.5; };
  auto df = [T, t0, w](double t) { return t < T - t0 ? -0.5 * w * std::sin(w * t) : 0.0; };
  return from_functions(grid, f, df);
}

SigmaProfile SigmaProfile::from_functions(const TimeGrid& grid, Fn f, Fn df) {
  SigmaProfile s(grid);
  s.values_.resize(grid.n_times());
  s.derivs_.resize(grid.n_times());
  for (std::size_t m = 0; m < grid.n_times(); ++m) {
    s.values_[m] = f(grid.time(m));
    s.derivs_[m] = df(grid.time(m));
  }
  s.f_ = std::move(f);
  s.df_ = std::move(df);
  return s;
}

SigmaProfile SigmaProfile::from_samples(const TimeGrid& grid, std::vector<double> values, std::vector<double> derivs) {
  if (values.size() != grid.n_times() || derivs.size() != grid.n_times())
    throw InvalidArgument("sigma samples do not match the time grid");
  SigmaProfile s(grid);
  s.values_ = std::move(values);
  s.derivs_ = std::move(derivs);
  return s;
}

double SigmaProfile::interp(std::span<const double> v, double t) const {
  const double dt = grid_.dt();
  const double u = std::clamp(t / dt, 0.0, static_cast<double>(grid_.n_steps()));
  const std::size_t m = std::min(static_cast<std::size_t>(u), grid_.n_steps() - 1);
  const double w = u - static_cast<double>(m);
  return (1.0 - w) * v[m] + w * v[m + 1];
}

double SigmaProfile::at(double t) const { return f_ ? f_(t) : interp(values_, t); }
double SigmaProfile::derivative_at(double t) const { return df_ ? df_(t) : interp(derivs_, t); }

SigmaProfile SigmaProfile::resampled(const TimeGrid& grid) const {
  if (f_) return from_functions(grid, f_, df_);
  std::vector<double> v(grid.n_times()), d(grid.n_times());
  for (std::size_t m = 0; m < grid.n_times(); ++m) {
    v[m] = at(grid.time(m));
    d[m] = derivative_at(grid.time(m));
  }
  return from_samples(grid, std::move(v), std::move(d));
}

double SigmaProfile::sup_norm() const noexcept {
  double s = 0.0;
  for (double v : values_) s = std::max(s, std::abs(v));
  return s;
}

// ---------------------------------------------------------------- coupling

CouplingMatrix::CouplingMatrix(std::size_t n) : n_(n), entries_(n * n, 0.0) {
  if (n == 0) throw InvalidArgument("coupling needs at least one component");
}

CouplingMatrix CouplingMatrix::constant(const Eigen::MatrixXd& q) {
  if (q.rows() != q.cols()) throw InvalidArgument("coupling matrix must be square");
  CouplingMatrix c(static_cast<std::size_t>(q.rows()));
  for (Eigen::Index i = 0; i < q.rows(); ++i)
    for (Eigen::Index j = 0; j < q.cols(); ++j) c.set(static_cast<std::size_t>(i), static_cast<std::size_t>(j), q(i, j));
  return c;
}

void CouplingMatrix::set(std::size_t i, std::size_t j, double c) { entries_.at(i * n_ + j) = c; }
void CouplingMatrix::set(std::size_t i, std::size_t j, NodalField f) { entries_.at(i * n_ + j) = std::move(f); }

bool CouplingMatrix::is_constant() const noexcept {
  return std::all_of(entries_.begin(), entries_.end(), [](const Entry& e) { return std::holds_alternative<double>(e); });
}

bool CouplingMatrix::is_zero(std::size_t i, std::size_t j) const {
  const Entry& e = entry(i, j);
  if (const double* c = std::get_if<double>(&e)) return *c == 0.0;
  const auto& f = std::get<NodalField>(e);
  return std::all_of(f.begin(), f.end(), [](double v) { return v == 0.0; });
}

bool CouplingMatrix::is_lower_triangular() const {
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = i + 1; j < n_; ++j)
      if (!is_zero(i, j)) return false;
  return true;
}

Eigen::MatrixXd CouplingMatrix::constant_matrix() const {
  Eigen::MatrixXd q(n_, n_);
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < n_; ++j) {
      const double* c = std::get_if<double>(&entry(i, j));
      if (!c) throw InvalidArgument("coupling entry is not constant");
      q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = *c;
    }
  return q;
}

NodalField CouplingMatrix::nodal(std::size_t i, std::size_t j, std::size_t node_count) const {
  const Entry& e = entry(i, j);
  if (const double* c = std::get_if<double>(&e)) return NodalField(node_count, *c);
  const auto& f = std::get<NodalField>(e);
  if (f.size() != node_count) throw InvalidArgument("coupling field does not match mesh");
  return f;
}

CouplingMatrix CouplingMatrix::transpose() const {
  CouplingMatrix t(n_);
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < n_; ++j) t.entries_[j * n_ + i] = entries_[i * n_ + j];
  return t;
}

// ---------------------------------------------------------------- series

FieldSeries::FieldSeries(const TimeGrid& grid, std::size_t n_components, std::size_t n_nodes)
    : grid_(grid), nc_(n_components), nn_(n_nodes), data_(grid.n_times() * n_components * n_nodes, 0.0) {}

std::vector<double> stack(std::span<const NodalField> fields) {
  std::vector<double> v;
  for (const auto& f : fields) v.insert(v.end(), f.begin(), f.end());
  return v;
}

// ---------------------------------------------------------------- system

struct ParabolicSystem::Factor {
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
};

ParabolicSystem::~ParabolicSystem() = default;
ParabolicSystem::ParabolicSystem(ParabolicSystem&&) noexcept = default;
ParabolicSystem& ParabolicSystem::operator=(ParabolicSystem&&) noexcept = default;

ParabolicSystem::ParabolicSystem(const Mesh& mesh, const CouplingMatrix& q, double nu, double dt)
    : mesh_(&mesh), nc_(q.n()), nn_(mesh.node_count()), dt_(dt), nu_(nu) {
  if (!(dt > 0.0)) throw InvalidArgument("time step must be positive");
  mass_ = assemble_mass(mesh);
  stiff_ = assemble_stiffness(mesh, nu);
  const SparseMatrix diag = mass_ + stiff_.scaled(dt);

  std::vector<Triplet> t;
  auto add_block = [&](const SparseMatrix& b, std::size_t bi, std::size_t bj, double s) {
    for (const Triplet& e : b.triplets()) t.push_back({bi * nn_ + e.row, bj * nn_ + e.col, s * e.value});
  };
  for (std::size_t i = 0; i < nc_; ++i) {
    add_block(diag, i, i, 1.0);
    for (std::size_t j = 0; j < nc_; ++j) {
      if (q.is_zero(i, j)) continue;
      const auto& e = q.entry(i, j);
      if (const double* c = std::get_if<double>(&e))
        add_block(mass_, i, j, dt * *c);
      else
        add_block(assemble_weighted_mass(mesh, std::get<NodalField>(e)), i, j, dt);
    }
  }
  for (std::size_t c = 0; c < nc_; ++c)
    for (std::size_t b : mesh.boundary_nodes()) fixed_.push_back(c * nn_ + b);
  a_ = apply_dirichlet(SparseMatrix::from_triplets(size(), size(), std::move(t)), fixed_);

  std::vector<Eigen::Triplet<double>> et;
  et.reserve(a_.nnz());
  for (const Triplet& e : a_.triplets())
    et.emplace_back(static_cast<int>(e.row), static_cast<int>(e.col), e.value);
  Eigen::SparseMatrix<double> ea(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(size()));
  ea.setFromTriplets(et.begin(), et.end());
  ea.makeCompressed();
  lu_ = std::make_unique<Factor>();
  lu_->lu.compute(ea);
  if (lu_->lu.info() != Eigen::Success) throw SolverError("factorization of the step matrix failed", 0.0);
}

void ParabolicSystem::solve(std::span<double> x) const {
  if (x.size() != size()) throw InvalidArgument("step solve size mismatch");
  zero_dofs(x, fixed_);
  Eigen::Map<Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
  v = lu_->lu.solve(v);
}

void ParabolicSystem::solve_transposed(std::span<double> x) const {
  if (x.size() != size()) throw InvalidArgument("step solve size mismatch");
  zero_dofs(x, fixed_);
  Eigen::Map<Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
  v = lu_->lu.transpose().solve(v);
}

void ParabolicSystem::apply_mass(std::span<const double> x, std::span<double> y) const {
  for (std::size_t c = 0; c < nc_; ++c) mass_.multiply(x.subspan(c * nn_, nn_), y.subspan(c * nn_, nn_));
}

namespace {

void check_finite(std::span<const double> x, std::size_t m) {
  for (double v : x)
    if (!std::isfinite(v)) throw SolverError("non-finite state at time step " + std::to_string(m), 0.0);
}

}  // namespace

FieldSeries ParabolicSystem::march_forward(const TimeGrid& grid, std::span<const double> initial, const Load& load,
                                           bool transposed) const {
  if (std::abs(grid.dt() - dt_) > 1e-12 * dt_) throw InvalidArgument("time grid step differs from system step");
  if (initial.size() != size()) throw InvalidArgument("initial state size mismatch");
  FieldSeries y(grid, nc_, nn_);
  std::copy(initial.begin(), initial.end(), y.state(0).begin());
  zero_dofs(y.state(0), fixed_);
  for (std::size_t m = 1; m <= grid.n_steps(); ++m) {
    auto x = y.state(m);
    apply_mass(y.state(m - 1), x);
    if (load) load(m, x);
    transposed ? solve_transposed(x) : solve(x);
    check_finite(x, m);
  }
  return y;
}

FieldSeries ParabolicSystem::march_backward(const TimeGrid& grid, std::span<const double> terminal, const Load& load,
                                            bool transposed) const {
  if (std::abs(grid.dt() - dt_) > 1e-12 * dt_) throw InvalidArgument("time grid step differs from system step");
  if (terminal.size() != size()) throw InvalidArgument("terminal state size mismatch");
  FieldSeries y(grid, nc_, nn_);
  const std::size_t K = grid.n_steps();
  std::copy(terminal.begin(), terminal.end(), y.state(K).begin());
  zero_dofs(y.state(K), fixed_);
  for (std::size_t m = K; m-- > 0;) {
    auto x = y.state(m);
    apply_mass(y.state(m + 1), x);
    if (load) load(m, x);
    transposed ? solve_transposed(x) : solve(x);
    check_finite(x, m);
  }
  return y;
}

// ---------------------------------------------------------------- solvers

FieldSeries solve_forward(const ParabolicSystem& sys, const SigmaProfile& sigma, std::span<const NodalField> f,
                          const TimeGrid& grid) {
  if (f.size() != sys.n_components()) throw InvalidArgument("source has wrong component count");
  if (sigma.grid().n_steps() != grid.n_steps() || !sigma.grid().same_step(grid))
    throw InvalidArgument("sigma profile grid differs from time grid");
  const std::vector<double> fs = stack(f);
  std::vector<double> mf(fs.size());
  sys.apply_mass(fs, mf);
  const std::vector<double> zero(sys.size(), 0.0);
  const double dt = grid.dt();
  return sys.march_forward(grid, zero, [&](std::size_t m, std::span<double> rhs) {
    const double s = dt * sigma.value(m);
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] += s * mf[i];
  });
}

FieldSeries solve_forward(const Mesh& mesh, const CouplingMatrix& q, double nu, const SigmaProfile& sigma,
                          std::span<const NodalField> f, const TimeGrid& grid) {
  return solve_forward(ParabolicSystem(mesh, q, nu, grid.dt()), sigma, f, grid);
}

FieldSeries solve_duhamel_kernel(const Mesh& mesh, const CouplingMatrix& q, double nu, std::span<const NodalField> f,
                                 double sigma0, const TimeGrid& grid) {
  if (f.size() != q.n()) throw InvalidArgument("source has wrong component count");
  ParabolicSystem sys(mesh, q, nu, grid.dt());
  std::vector<double> w0 = stack(f);
  for (double& v : w0) v *= sigma0;
  return sys.march_forward(grid, w0, {});
}

FieldSeries solve_backward(const Mesh& mesh, const CouplingMatrix& qt, double nu, const FieldSeries* rhs,
                           std::span<const NodalField> terminal, const TimeGrid& grid,
                           const SubdomainMask* rhs_support) {
  if (terminal.size() != qt.n()) throw InvalidArgument("terminal datum has wrong component count");
  ParabolicSystem sys(mesh, qt, nu, grid.dt());
  if (!rhs) return sys.march_backward(grid, stack(terminal), {}, false);
  if (rhs->n_components() != qt.n() || rhs->node_count() != mesh.node_count() ||
      rhs->grid().n_steps() != grid.n_steps())
    throw InvalidArgument("backward right-hand side does not match the system");
  const SparseMatrix m_rhs = rhs_support ? assemble_mass(mesh, *rhs_support) : sys.mass();
  const std::size_t nn = mesh.node_count();
  std::vector<double> tmp(nn);
  const double dt = grid.dt();
  return sys.march_backward(
      grid, stack(terminal),
      [&](std::size_t m, std::span<double> x) {
        for (std::size_t c = 0; c < qt.n(); ++c) {
          m_rhs.multiply(rhs->component(m + 1, c), tmp);
          for (std::size_t i = 0; i < nn; ++i) x[c * nn + i] += dt * tmp[i];
        }
      },
      false);
}

FieldSeries duhamel_compose(const FieldSeries& w, const SigmaProfile& sigma) {
  const TimeGrid& g = w.grid();
  if (sigma.grid().n_steps() != g.n_steps() || !sigma.grid().same_step(g))
    throw InvalidArgument("sigma profile grid differs from kernel grid");
  FieldSeries y(g, w.n_components(), w.node_count());
  const double dt = g.dt();
  const std::size_t len = w.n_components() * w.node_count();
  for (std::size_t m = 1; m < g.n_times(); ++m) {
    auto out = y.state(m);
    for (std::size_t j = 0; j <= m; ++j) {
      const double wt = (j == 0 || j == m) ? 0.5 : 1.0;
      const double s = dt * wt * sigma.value(j);
      auto src = w.state(m - j);
      for (std::size_t i = 0; i < len; ++i) out[i] += s * src[i];
    }
  }
  return y;
}

double space_time_norm(const FieldSeries& y, const SparseMatrix& mass) {
  double s = 0.0;
  const double dt = y.grid().dt();
  for (std::size_t m = 1; m < y.time_count(); ++m)
    for (std::size_t c = 0; c < y.n_components(); ++c) {
      auto v = y.component(m, c);
      s += dt * mass.bilinear(v, v);
    }
  return std::sqrt(s);
}

void write_trajectory_csv(std::ostream& os, const FieldSeries& y) {
  os << std::setprecision(12) << "t,node_id,comp,value\n";
  for (std::size_t m = 0; m < y.time_count(); ++m)
    for (std::size_t c = 0; c < y.n_components(); ++c)
      for (std::size_t i = 0; i < y.node_count(); ++i)
        os << y.grid().time(m) << ',' << i << ',' << c + 1 << ',' << y(m, c, i) << '\n';
}

void write_snapshot_csv(std::ostream& os, const Mesh& mesh, const FieldSeries& y, std::size_t m) {
  os << std::setprecision(12) << (mesh.dim() == 1 ? "x" : "x,y");
  for (std::size_t c = 0; c < y.n_components(); ++c) os << ",y" << c + 1;
  os << '\n';
  for (std::size_t i = 0; i < mesh.node_count(); ++i) {
    os << mesh.node(i).x;
    if (mesh.dim() == 2) os << ',' << mesh.node(i).y;
    for (std::size_t c = 0; c < y.n_components(); ++c) os << ',' << y(m, c, i);
    os << '\n';
  }
}

}  // namespace srcrec
