#include "srcrec/control.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

#include "srcrec/error.hpp"

namespace srcrec {

NullControlSolver::NullControlSolver(const Mesh& mesh, const CouplingMatrix& qt, double nu, double dt,
                                     const SubdomainMask& mask, ControlSettings settings)
    : system_(mesh, qt, nu, dt), mask_(mask), settings_(settings), mass_o_(assemble_mass(mesh, mask)) {
  if (!(settings_.epsilon > 0.0)) throw InvalidArgument("penalty epsilon must be positive");
  if (mask_.empty()) throw InvalidArgument("control domain contains no element");
  // The control reaches component i through Qt(i, i+1) = q_{i+1, i}.
  const std::size_t n = qt.n();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const NodalField c = qt.nodal(i, i + 1, mesh.node_count());
    bool positive = false;
    for (std::size_t v = 0; v < c.size(); ++v)
      if (mask_.dof_flag(v) && c[v] > 0.0) positive = true;
    if (!positive) hypothesis_ok_ = false;
  }
}

FieldSeries NullControlSolver::backward(std::span<const double> psi0, const TimeGrid& horizon,
                                        const ControlFunction* u, const FieldSeries* source) const {
  if (!u && !source) return system_.march_backward(horizon, psi0, {}, false);
  const std::size_t nn = system_.node_count();
  const std::size_t nc = system_.n_components();
  if (source && (source->n_components() != nc || source->node_count() != nn ||
                 source->time_count() != horizon.n_times()))
    throw InvalidArgument("backward source does not match the system and horizon");
  std::vector<double> tmp(nn);
  const double dt = horizon.dt();
  return system_.march_backward(
      horizon, psi0,
      [&](std::size_t m, std::span<double> x) {
        if (u) {
          mass_o_.multiply(u->u.values(m + 1), tmp);
          for (std::size_t i = 0; i < nn; ++i) x[(nc - 1) * nn + i] += dt * tmp[i];
        }
        if (source)
          for (std::size_t c = 0; c < nc; ++c) {
            system_.mass().multiply(source->component(m + 1, c), tmp);
            for (std::size_t i = 0; i < nn; ++i) x[c * nn + i] += dt * tmp[i];
          }
      },
      false);
}

ControlFunction NullControlSolver::companion(std::span<const double> phi, const TimeGrid& horizon) const {
  const std::size_t nn = system_.node_count();
  const std::size_t nc = system_.n_components();
  const FieldSeries w = system_.march_forward(horizon, phi, {}, true);
  ControlFunction u(horizon, nc, nn);
  for (std::size_t m = 0; m < horizon.n_times(); ++m) {
    auto src = w.component(m, nc - 1);
    for (std::size_t i = 0; i < nn; ++i)
      if (mask_.dof_flag(i)) u.u.value(m, i) = src[i];
  }
  return u;
}

namespace {

double block_inner(const ParabolicSystem& s, std::span<const double> a, std::span<const double> b) {
  const std::size_t nn = s.node_count();
  double r = 0.0;
  for (std::size_t c = 0; c < s.n_components(); ++c)
    r += s.mass().bilinear(a.subspan(c * nn, nn), b.subspan(c * nn, nn));
  return r;
}

}  // namespace

ControlResult NullControlSolver::solve(std::span<const NodalField> psi0_fields, const TimeGrid& horizon,
                                       const FieldSeries* source) const {
  if (psi0_fields.size() != system_.n_components()) throw InvalidArgument("terminal datum has wrong component count");
  if (!horizon.same_step(TimeGrid(system_.dt(), 1))) throw InvalidArgument("horizon grid step differs from solver step");
  std::vector<double> psi0 = stack(psi0_fields);
  zero_dofs(psi0, system_.fixed_dofs());
  const std::size_t len = psi0.size();
  const double dt = horizon.dt();

  ControlResult res{ControlFunction(horizon, system_.n_components(), system_.node_count()), {}};
  res.report.epsilon = settings_.epsilon;
  res.report.hypothesis_ok = hypothesis_ok_;
  if (!hypothesis_ok_) res.report.note = "coupling into the controlled component is not positive on O";
  double norm0 = std::sqrt(block_inner(system_, psi0, psi0));

  auto apply = [&](std::span<const double> phi, std::span<double> out) {
    const ControlFunction u = companion(phi, horizon);
    std::vector<double> zero(len, 0.0);
    const FieldSeries psi = backward(zero, horizon, &u);
    auto p0 = psi.state(0);
    for (std::size_t i = 0; i < len; ++i) out[i] = p0[i] + settings_.epsilon * phi[i];
  };

  std::vector<double> b(len);
  {
    const FieldSeries free = backward(psi0, horizon, nullptr, source);
    auto p0 = free.state(0);
    for (std::size_t i = 0; i < len; ++i) b[i] = -p0[i];
  }
  if (norm0 == 0.0) norm0 = std::sqrt(block_inner(system_, b, b));
  if (norm0 == 0.0) return res;
  std::vector<double> x(len, 0.0), r = b, p = b, ap(len);
  const double bnorm = std::sqrt(block_inner(system_, b, b));
  double rr = bnorm * bnorm;
  res.report.converged = bnorm == 0.0;
  for (std::size_t it = 0; it < settings_.max_iters && !res.report.converged; ++it) {
    apply(p, ap);
    const double pap = block_inner(system_, p, ap);
    if (!(pap > 0.0)) break;
    const double alpha = rr / pap;
    for (std::size_t i = 0; i < len; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    const double rn = block_inner(system_, r, r);
    res.report.cg_iterations = it + 1;
    if (std::sqrt(rn) <= settings_.rel_tol * bnorm) res.report.converged = true;
    const double beta = rn / rr;
    rr = rn;
    for (std::size_t i = 0; i < len; ++i) p[i] = r[i] + beta * p[i];
  }
  if (!res.report.converged) {
    if (!res.report.note.empty()) res.report.note += "; ";
    res.report.note += "CG stopped before reaching tolerance";
  }

  res.control = companion(x, horizon);
  const FieldSeries psi = backward(psi0, horizon, &res.control, source);
  auto p0 = psi.state(0);
  res.report.terminal_norm = std::sqrt(block_inner(system_, p0, p0));
  res.report.terminal_residual = res.report.terminal_norm / norm0;
  double cost = 0.0;
  for (std::size_t m = 1; m < horizon.n_times(); ++m)
    cost += dt * mass_o_.bilinear(res.control.u.values(m), res.control.u.values(m));
  res.report.control_cost = std::sqrt(cost);
  return res;
}

ControlResult solve_null_control(const Mesh& mesh, const CouplingMatrix& qt, double nu,
                                 std::span<const NodalField> psi0, const TimeGrid& horizon,
                                 const SubdomainMask& mask, double epsilon) {
  ControlSettings s;
  s.epsilon = epsilon;
  return NullControlSolver(mesh, qt, nu, horizon.dt(), mask, s).solve(psi0, horizon);
}

ControlResult solve_null_control_2x2_variable(const Mesh& mesh, const NodalField& q,
                                              std::span<const NodalField> psi0, const TimeGrid& horizon,
                                              const SubdomainMask& mask, double epsilon) {
  CouplingMatrix qt(2);
  qt.set(0, 1, q);
  return solve_null_control(mesh, qt, 1.0, psi0, horizon, mask, epsilon);
}

FieldSeries transport_control(const ControlFunction& u, const Eigen::MatrixXd& qt) {
  const std::size_t n = u.n_components;
  if (static_cast<std::size_t>(qt.rows()) != n || static_cast<std::size_t>(qt.cols()) != n)
    throw InvalidArgument("coupling size differs from control component count");
  FieldSeries out(u.grid, n, u.u.node_count());
  for (std::size_t m = 0; m < u.grid.n_times(); ++m)
    for (std::size_t c = 0; c < n; ++c) {
      const double s = qt(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(n - 1));
      auto src = u.u.values(m);
      auto dst = out.component(m, c);
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = s * src[i];
    }
  return out;
}

void write_control_csv(std::ostream& os, const ControlFunction& u) {
  os << std::setprecision(12) << "t,node_id,u_n\n";
  for (std::size_t m = 0; m < u.grid.n_times(); ++m)
    for (std::size_t i = 0; i < u.u.node_count(); ++i)
      if (u.u.value(m, i) != 0.0) os << u.grid.time(m) << ',' << i << ',' << u.u.value(m, i) << '\n';
}

void write_control_report_csv(std::ostream& os, const ControlReport& r, bool header) {
  if (header) os << "epsilon,terminal_residual,control_cost,cg_iterations,converged,hypothesis_ok\n";
  os << std::setprecision(12) << r.epsilon << ',' << r.terminal_residual << ',' << r.control_cost << ','
     << r.cg_iterations << ',' << (r.converged ? 1 : 0) << ',' << (r.hypothesis_ok ? 1 : 0) << '\n';
}

}  // namespace srcrec
