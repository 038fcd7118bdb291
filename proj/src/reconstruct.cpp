#include "srcrec/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "srcrec/error.hpp"

namespace srcrec {
namespace {

constexpr int kCoeffRefine = 4;

void require_sigma_grid(const SigmaProfile& sigma, const TimeGrid& g) {
  if (!sigma.grid().same_step(g) || sigma.grid().n_steps() < g.n_steps())
    throw InvalidArgument("sigma profile must share the step and cover the horizon");
}

double sigma_at_horizon(const SigmaProfile& sigma, std::size_t steps) {
  const double s = sigma.value(steps);
  if (s == 0.0) throw InvalidArgument("sigma vanishes at the horizon");
  return s;
}

bool has_derivative(const SigmaProfile& sigma, std::size_t steps) {
  for (std::size_t j = 0; j <= steps; ++j)
    if (sigma.derivative(j) != 0.0) return true;
  return false;
}

// Source series s(t_m) = g(tau - t_m) * fields on the horizon grid.
FieldSeries reversed_source(const TimeGrid& horizon, std::span<const NodalField> fields,
                            std::span<const double> profile) {
  const std::size_t K = horizon.n_steps();
  FieldSeries s(horizon, fields.size(), fields.front().size());
  for (std::size_t m = 0; m <= K; ++m)
    for (std::size_t c = 0; c < fields.size(); ++c) {
      auto dst = s.component(m, c);
      const double g = profile[K - m];
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = g * fields[c][i];
    }
  return s;
}

std::vector<NodalField> qt_apply(const Eigen::MatrixXd& q, const NodalField& phi) {
  const auto n = static_cast<std::size_t>(q.rows());
  std::vector<NodalField> out(n, NodalField(phi.size(), 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += q(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
    for (std::size_t v = 0; v < phi.size(); ++v) out[i][v] = s * phi[v];
  }
  return out;
}

bool all_zero(std::span<const NodalField> f) {
  for (const auto& c : f)
    for (double v : c)
      if (v != 0.0) return false;
  return true;
}

TimeSeriesField control_theta(const NullControlSolver& ctl, std::span<const NodalField> psi0, const TimeGrid& horizon,
                              const FieldSeries* source, const SigmaProfile& sigma, double weight,
                              std::vector<ControlReport>* reports, double& tol) {
  const ControlResult r = ctl.solve(psi0, horizon, source);
  tol += std::abs(weight) * r.report.terminal_norm;
  if (reports) reports->push_back(r.report);
  return solve_volterra(r.control.u, sigma, ctl.control_mass(), VolterraScheme::euler_adjoint).theta;
}

}  // namespace

MeasurementSet MeasurementSet::from_state(const FieldSeries& state, const SubdomainMask& mask, bool keep_full) {
  if (state.node_count() != mask.node_count()) throw InvalidArgument("state and mask meshes differ");
  MeasurementSet m{TimeSeriesField::from_component(state, state.n_components() - 1), std::nullopt};
  for (std::size_t t = 0; t < m.y.time_count(); ++t)
    for (std::size_t i = 0; i < m.y.node_count(); ++i)
      if (!mask.node_flag(i)) {
        m.y.value(t, i) = 0.0;
        m.y.deriv(t, i) = 0.0;
      }
  if (keep_full) m.full = state;
  return m;
}

MeasurementSet MeasurementSet::prefix(std::size_t steps) const {
  MeasurementSet m{srcrec::prefix(y, steps), std::nullopt};
  if (full) m.full = srcrec::prefix(*full, steps);
  return m;
}

TimeSeriesField prefix(const TimeSeriesField& f, std::size_t steps) {
  if (steps == 0 || steps > f.grid().n_steps()) throw InvalidArgument("prefix length out of range");
  TimeSeriesField out(f.grid().prefix(steps), f.node_count());
  for (std::size_t m = 0; m <= steps; ++m) {
    std::copy_n(f.values(m).begin(), f.node_count(), out.values(m).begin());
    std::copy_n(f.derivs(m).begin(), f.node_count(), out.derivs(m).begin());
  }
  return out;
}

FieldSeries prefix(const FieldSeries& f, std::size_t steps) {
  if (steps == 0 || steps > f.grid().n_steps()) throw InvalidArgument("prefix length out of range");
  FieldSeries out(f.grid().prefix(steps), f.n_components(), f.node_count());
  const std::size_t len = f.n_components() * f.node_count() * (steps + 1);
  std::copy_n(f.raw().begin(), len, out.raw().begin());
  return out;
}

double measurement_pairing(const TimeSeriesField& y, const TimeSeriesField& theta, const SparseMatrix& mass_o) {
  if (y.time_count() != theta.time_count() || y.node_count() != theta.node_count() ||
      !y.grid().same_step(theta.grid()))
    throw InvalidArgument("measurement and Volterra grids differ");
  return h1_time_pairing(y, theta, mass_o, VolterraScheme::euler_adjoint);
}

GlobalTerms global_terms(const FieldSeries& w, std::span<const NodalField> psi0, std::span<const NodalField> qt_psi0,
                         const SigmaProfile& sigma, const SparseMatrix& mass) {
  const TimeGrid& g = w.grid();
  require_sigma_grid(sigma, g);
  if (psi0.size() != w.n_components() || (!qt_psi0.empty() && qt_psi0.size() != w.n_components()))
    throw InvalidArgument("terminal datum has wrong component count");
  const std::size_t K = g.n_steps();
  const std::size_t nn = w.node_count();
  const double dt = g.dt();

  auto weighted = [&](std::span<const NodalField> f) {
    std::vector<NodalField> out;
    for (const auto& c : f) {
      NodalField mc(nn);
      mass.multiply(c, mc);
      out.push_back(std::move(mc));
    }
    return out;
  };
  auto pair = [&](std::size_t m, const std::vector<NodalField>& mf) {
    double s = 0.0;
    for (std::size_t c = 0; c < mf.size(); ++c) s += dot(w.component(m, c), mf[c]);
    return s;
  };
  const auto mpsi = weighted(psi0);
  const auto mqt = weighted(qt_psi0);
  GlobalTerms t;
  t.c1 = sigma.sigma0() * pair(K, mpsi);
  for (std::size_t m = 1; m <= K; ++m) {
    t.c2 += dt * sigma.derivative(K - m) * pair(m, mpsi);
    if (!mqt.empty()) t.c3 += dt * sigma.value(K - m) * pair(m, mqt);
  }
  return t;
}

double reconstruct_global_constQ(const FieldSeries& w, const Eigen::MatrixXd& q, const SigmaProfile& sigma,
                                 const ModeBasis& mode, const SparseMatrix& mass) {
  if (static_cast<std::size_t>(q.rows()) != w.n_components()) throw InvalidArgument("coupling size mismatch");
  const double st = sigma_at_horizon(sigma, w.grid().n_steps());
  const std::vector<NodalField> psi0(w.n_components(), mode.phi);
  const auto qt = qt_apply(q, mode.phi);
  return global_terms(w, psi0, qt, sigma, mass).sum() / st;
}

double reconstruct_global_2x2(const FieldSeries& w, const SigmaProfile& sigma, const ModeBasis& mode,
                              const SparseMatrix& mass) {
  if (w.n_components() != 2) throw InvalidArgument("two-component flow expected");
  sigma_at_horizon(sigma, w.grid().n_steps());
  const auto psi0 = riesz_terminal(mode);
  return global_terms(w, psi0, {}, sigma, mass).sum();
}

CoefficientEstimate reconstruct_local_constQ(const MeasurementSet& meas, const TimeSeriesField& theta_n,
                                             const TimeSeriesField& theta_sigma, const TimeSeriesField& theta_hat,
                                             const SigmaProfile& sigma, const SparseMatrix& mass_o,
                                             std::span<const double> aQ, int k) {
  const TimeGrid& g = meas.y.grid();
  require_sigma_grid(sigma, g);
  const double st = sigma_at_horizon(sigma, g.n_steps());
  CoefficientEstimate e;
  e.k = k;
  e.tau = g.T();
  e.terms = {-sigma.sigma0() / st * measurement_pairing(meas.y, theta_n, mass_o),
             -measurement_pairing(meas.y, theta_sigma, mass_o) / st,
             -measurement_pairing(meas.y, theta_hat, mass_o) / st};
  e.combined = e.terms[0] + e.terms[1] + e.terms[2];
  e.row.assign(aQ.begin(), aQ.end());
  return e;
}

CoefficientEstimate reconstruct_local_2x2_variable(const MeasurementSet& meas, const TimeSeriesField& theta,
                                                   const TimeSeriesField& theta_sigma, const SigmaProfile& sigma,
                                                   const SparseMatrix& mass_o, double aL, double bL, int k) {
  const TimeGrid& g = meas.y.grid();
  require_sigma_grid(sigma, g);
  sigma_at_horizon(sigma, g.n_steps());
  CoefficientEstimate e;
  e.k = k;
  e.tau = g.T();
  e.terms = {-sigma.sigma0() * measurement_pairing(meas.y, theta, mass_o),
             -measurement_pairing(meas.y, theta_sigma, mass_o)};
  e.combined = e.terms[0] + e.terms[1];
  e.row = {aL, aL + bL};
  return e;
}

SeparatedCoefficients separate_coefficients(std::span<const CoefficientEstimate> estimates) {
  if (estimates.empty()) throw InvalidArgument("no estimates to separate");
  const std::size_t n = estimates.front().row.size();
  const std::size_t r = estimates.size();
  Eigen::MatrixXd a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(n));
  Eigen::VectorXd b(static_cast<Eigen::Index>(r));
  for (std::size_t i = 0; i < r; ++i) {
    if (estimates[i].row.size() != n) throw InvalidArgument("estimates have different unknown counts");
    for (std::size_t j = 0; j < n; ++j)
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = estimates[i].row[j];
    b(static_cast<Eigen::Index>(i)) = estimates[i].combined;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  SeparatedCoefficients out;
  out.k = estimates.front().k;
  const double smax = sv(0);
  const double smin = r >= n ? sv(sv.size() - 1) : 0.0;
  out.cond = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
  out.ok = r >= n && smax > 0.0 && out.cond <= 1e8;
  const Eigen::VectorXd f = svd.solve(b);
  out.f.assign(f.data(), f.data() + f.size());
  const double bn = b.norm();
  out.residual = (a * f - b).norm() / (bn > 0.0 ? bn : 1.0);
  return out;
}

SynthesizedSource synthesize_source(std::span<const ModeBasis> modes, std::span<const SeparatedCoefficients> coeffs,
                                    std::size_t n_components, std::size_t node_count, SourceExpansion expansion) {
  if (modes.size() != coeffs.size()) throw InvalidArgument("one coefficient set per mode expected");
  if (expansion == SourceExpansion::riesz && n_components != 2)
    throw InvalidArgument("Riesz expansion is defined for two components");
  SynthesizedSource s{std::vector<NodalField>(n_components, NodalField(node_count, 0.0)), 0};
  for (std::size_t k = 0; k < modes.size(); ++k) {
    const auto& c = coeffs[k];
    if (!c.ok) continue;
    const NodalField& phi = modes[k].phi;
    if (phi.size() != node_count) throw InvalidArgument("mode sampled on a different mesh");
    if (expansion == SourceExpansion::laplace) {
      if (c.f.size() != n_components) throw InvalidArgument("coefficient count differs from component count");
      for (std::size_t j = 0; j < n_components; ++j)
        for (std::size_t i = 0; i < node_count; ++i) s.f[j][i] += c.f[j] * phi[i];
    } else {
      if (c.f.size() != 2 || !modes[k].psi) throw InvalidArgument("Riesz synthesis needs (alpha, beta) and psi");
      const NodalField& psi = *modes[k].psi;
      for (std::size_t i = 0; i < node_count; ++i) {
        s.f[0][i] += c.f[1] * phi[i];
        s.f[1][i] += c.f[0] * phi[i] + c.f[1] * psi[i];
      }
    }
    ++s.covered;
  }
  return s;
}

std::vector<ModeBasis> laplace_modes(const Mesh& mesh, double nu, int k_max) {
  if (k_max < 1) throw InvalidArgument("mode count must be positive");
  std::vector<ModeBasis> out;
  if (mesh.dim() == 1) {
    for (int k = 1; k <= k_max; ++k) out.push_back(build_mode_basis(mesh, k, nu));
    return out;
  }
  int idx = 0;
  for (int k1 = 1; k1 <= k_max; ++k1)
    for (int k2 = 1; k2 <= k_max; ++k2) {
      Eigenpair e = laplace_eigenpair(mesh, k1, k2, nu);
      ModeBasis b;
      b.k = ++idx;
      b.lambda = e.lambda;
      b.phi = std::move(e.phi);
      out.push_back(std::move(b));
    }
  return out;
}

std::vector<NodalField> riesz_terminal(const ModeBasis& mode) {
  if (!mode.psi) throw InvalidArgument("mode has no second Riesz function");
  NodalField a(mode.phi.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = (*mode.psi)[i] + mode.phi[i];
  return {a, mode.phi};
}

ConstQReconstructor::ConstQReconstructor(const Mesh& mesh, const Eigen::MatrixXd& q, double nu,
                                         const SigmaProfile& sigma, const SubdomainMask& mask,
                                         ControlSettings settings)
    : mesh_(&mesh),
      q_(q),
      sigma_(sigma),
      control_(mesh, CouplingMatrix::constant(q.transpose()), nu, sigma.grid().dt(), mask, settings) {}

Eigen::VectorXd ConstQReconstructor::a_coefficients(const ModeBasis& mode, std::size_t steps) const {
  return coeff_aQ(q_, mode.lambda, sigma_, sigma_.grid().time(steps), kCoeffRefine).a;
}

CoefficientEstimate ConstQReconstructor::local(const MeasurementSet& meas, const ModeBasis& mode, std::size_t steps,
                                               std::vector<ControlReport>* reports) const {
  if (!meas.y.grid().same_step(sigma_.grid())) throw InvalidArgument("measurement grid differs from sigma grid");
  const MeasurementSet m = steps == meas.y.grid().n_steps() ? meas : meas.prefix(steps);
  const TimeGrid horizon = sigma_.grid().prefix(steps);
  const std::size_t nn = mesh_->node_count();
  const std::vector<NodalField> psi0(n_components(), mode.phi);
  const std::vector<NodalField> zero(n_components(), NodalField(nn, 0.0));
  double tol = 0.0;

  const double st = sigma_at_horizon(sigma_, steps);
  const TimeSeriesField theta_n =
      control_theta(control_, psi0, horizon, nullptr, sigma_, sigma_.sigma0() / st, reports, tol);
  TimeSeriesField theta_s(horizon, nn), theta_h(horizon, nn);
  if (has_derivative(sigma_, steps)) {
    const FieldSeries src = reversed_source(horizon, psi0, sigma_.derivative_samples());
    theta_s = control_theta(control_, zero, horizon, &src, sigma_, 1.0 / st, reports, tol);
  }
  const auto qt = qt_apply(q_, mode.phi);
  if (!all_zero(qt)) {
    const FieldSeries src = reversed_source(horizon, qt, sigma_.samples());
    theta_h = control_theta(control_, zero, horizon, &src, sigma_, 1.0 / st, reports, tol);
  }
  const Eigen::VectorXd a = a_coefficients(mode, steps);
  CoefficientEstimate e = reconstruct_local_constQ(m, theta_n, theta_s, theta_h, sigma_, control_.control_mass(),
                                                   std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
                                                   mode.k);
  e.tol_ctrl = tol;
  return e;
}

double ConstQReconstructor::global(const FieldSeries& w, const ModeBasis& mode, std::size_t steps) const {
  const FieldSeries ws = steps == w.grid().n_steps() ? w : prefix(w, steps);
  return reconstruct_global_constQ(ws, q_, sigma_, mode, control_.system().mass());
}

namespace {

template <class Rec>
ReconstructionResult run_modes(const Rec& rec, const MeasurementSet& meas, std::span<const ModeBasis> modes,
                               std::span<const std::size_t> horizon_steps) {
  if (horizon_steps.empty()) throw InvalidArgument("at least one horizon is required");
  ReconstructionResult r;
  for (const auto& mode : modes) {
    ModeResult mr;
    for (std::size_t s : horizon_steps) mr.estimates.push_back(rec.local(meas, mode, s, &mr.controls));
    mr.separated = separate_coefficients(mr.estimates);
    r.modes.push_back(std::move(mr));
  }
  return r;
}

}  // namespace

ReconstructionResult ConstQReconstructor::run(const MeasurementSet& meas, std::span<const ModeBasis> modes,
                                              std::span<const std::size_t> horizon_steps) const {
  ReconstructionResult r = run_modes(*this, meas, modes, horizon_steps);
  std::vector<SeparatedCoefficients> coeffs;
  for (const auto& m : r.modes) coeffs.push_back(m.separated);
  r.source = synthesize_source(modes, coeffs, n_components(), mesh_->node_count(), SourceExpansion::laplace);
  return r;
}

VariableQReconstructor::VariableQReconstructor(const Mesh& mesh, const NodalField& q, const SigmaProfile& sigma,
                                               const SubdomainMask& mask, ControlSettings settings)
    : mesh_(&mesh), q_(q), sigma_(sigma), control_(mesh, [&] {
        CouplingMatrix qt(2);
        qt.set(0, 1, q);
        return qt;
      }(), 1.0, sigma.grid().dt(), mask, settings) {}

CoefficientEstimate VariableQReconstructor::local(const MeasurementSet& meas, const ModeBasis& mode,
                                                  std::size_t steps, std::vector<ControlReport>* reports) const {
  if (!meas.y.grid().same_step(sigma_.grid())) throw InvalidArgument("measurement grid differs from sigma grid");
  const MeasurementSet m = steps == meas.y.grid().n_steps() ? meas : meas.prefix(steps);
  const TimeGrid horizon = sigma_.grid().prefix(steps);
  const std::size_t nn = mesh_->node_count();
  const auto psi0 = riesz_terminal(mode);
  const std::vector<NodalField> zero(2, NodalField(nn, 0.0));
  double tol = 0.0;

  const TimeSeriesField theta =
      control_theta(control_, psi0, horizon, nullptr, sigma_, sigma_.sigma0(), reports, tol);
  TimeSeriesField theta_s(horizon, nn);
  if (has_derivative(sigma_, steps)) {
    const FieldSeries src = reversed_source(horizon, psi0, sigma_.derivative_samples());
    theta_s = control_theta(control_, zero, horizon, &src, sigma_, 1.0, reports, tol);
  }
  const LCoefficients c = coeff_aL_bL(mode.Ik, mode.k, sigma_, horizon.T(), kCoeffRefine);
  CoefficientEstimate e =
      reconstruct_local_2x2_variable(m, theta, theta_s, sigma_, control_.control_mass(), c.a, c.b, mode.k);
  e.tol_ctrl = tol;
  return e;
}

double VariableQReconstructor::global(const FieldSeries& w, const ModeBasis& mode, std::size_t steps) const {
  const FieldSeries ws = steps == w.grid().n_steps() ? w : prefix(w, steps);
  return reconstruct_global_2x2(ws, sigma_, mode, control_.system().mass());
}

ReconstructionResult VariableQReconstructor::run(const MeasurementSet& meas, std::span<const ModeBasis> modes,
                                                 std::span<const std::size_t> horizon_steps) const {
  ReconstructionResult r = run_modes(*this, meas, modes, horizon_steps);
  std::vector<SeparatedCoefficients> coeffs;
  for (const auto& m : r.modes) coeffs.push_back(m.separated);
  r.source = synthesize_source(modes, coeffs, 2, mesh_->node_count(), SourceExpansion::riesz);
  return r;
}

void write_reconstruction_report(std::ostream& os, const ReconstructionResult& r, std::size_t n_unknowns) {
  os << "k,tau,combined,C1,C2,C3,cond";
  for (std::size_t j = 1; j <= n_unknowns; ++j) os << ",f" << j << "_k";
  os << '\n' << std::setprecision(12);
  for (const auto& m : r.modes)
    for (const auto& e : m.estimates) {
      os << e.k << ',' << e.tau << ',' << e.combined;
      for (std::size_t t = 0; t < 3; ++t) os << ',' << (t < e.terms.size() ? e.terms[t] : 0.0);
      os << ',' << m.separated.cond;
      for (std::size_t j = 0; j < n_unknowns; ++j)
        os << ',' << (m.separated.ok && j < m.separated.f.size() ? m.separated.f[j] : 0.0);
      os << '\n';
    }
}

void write_source_csv(std::ostream& os, const Mesh& mesh, std::span<const NodalField> truth,
                      std::span<const NodalField> rec) {
  if (truth.size() != rec.size()) throw InvalidArgument("truth and reconstruction component counts differ");
  os << (mesh.dim() == 1 ? "x" : "x,y");
  for (std::size_t j = 1; j <= truth.size(); ++j) os << ",f" << j << "_true,f" << j << "_rec";
  os << '\n' << std::setprecision(12);
  for (std::size_t i = 0; i < mesh.node_count(); ++i) {
    const Point p = mesh.node(i);
    os << p.x;
    if (mesh.dim() == 2) os << ',' << p.y;
    for (std::size_t j = 0; j < truth.size(); ++j) os << ',' << truth[j][i] << ',' << rec[j][i];
    os << '\n';
  }
}

}  // namespace srcrec
