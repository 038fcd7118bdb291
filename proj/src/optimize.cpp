#include "srcrec/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>

#include <Eigen/Dense>

#include "srcrec/error.hpp"

namespace srcrec {

InverseProblem::InverseProblem(const Mesh& mesh, const CouplingMatrix& q, double nu, const SigmaProfile& sigma,
                               const SubdomainMask& obs, std::vector<std::size_t> observed_components,
                               DescentSettings settings)
    : system_(mesh, q, nu, sigma.grid().dt()),
      sigma_(sigma),
      obs_(obs),
      observed_(std::move(observed_components)),
      settings_(settings),
      mass_obs_(assemble_mass(mesh, obs)) {
  if (observed_.empty()) throw InvalidArgument("at least one component must be observed");
  for (std::size_t c : observed_)
    if (c >= q.n()) throw InvalidArgument("observed component out of range");
  if (!(settings_.penalty_k > 0.0)) throw InvalidArgument("penalty must be positive");
  if (!(settings_.step_size > 0.0)) throw InvalidArgument("step size must be positive");
  if (obs_.empty()) throw InvalidArgument("observation domain contains no element");
  const TimeGrid& g = sigma_.grid();
  w_sigma2_.resize(g.n_times());
  for (std::size_t m = 0; m < g.n_times(); ++m) {
    const double w = (m == 0 || m == g.n_steps()) ? 0.5 : 1.0;
    w_sigma2_[m] = g.dt() * w * sigma_.value(m) * sigma_.value(m);
  }
}

void InverseProblem::set_observations(FieldSeries y_obs) {
  if (y_obs.n_components() != system_.n_components() || y_obs.node_count() != system_.node_count() ||
      y_obs.grid().n_steps() != grid().n_steps())
    throw InvalidArgument("observations do not match the problem");
  y_obs_ = std::move(y_obs);
}

const FieldSeries& InverseProblem::observations() const {
  if (!y_obs_) throw InvalidArgument("observations have not been set");
  return *y_obs_;
}

FieldSeries InverseProblem::simulate(std::span<const NodalField> f) const {
  return solve_forward(system_, sigma_, f, grid());
}

double InverseProblem::objective(std::span<const NodalField> f) const { return objective(f, simulate(f)); }

namespace {

// Misfit part of J for data yo (zero data when null).
double misfit(const FieldSeries& y, const FieldSeries* yo, std::span<const std::size_t> observed,
              const SparseMatrix& mass_obs, const TimeGrid& g) {
  const std::size_t nn = y.node_count();
  const double dt = g.dt();
  std::vector<double> e(nn), ep(nn), d(nn);
  double mis = 0.0;
  for (std::size_t c : observed) {
    std::fill(ep.begin(), ep.end(), 0.0);
    for (std::size_t k = 0; k < g.n_times(); ++k) {
      for (std::size_t i = 0; i < nn; ++i) e[i] = y(k, c, i) - (yo ? (*yo)(k, c, i) : 0.0);
      const double w = (k == 0 || k == g.n_steps()) ? 0.5 : 1.0;
      mis += dt * w * mass_obs.bilinear(e, e);
      if (k > 0) {
        for (std::size_t i = 0; i < nn; ++i) d[i] = (e[i] - ep[i]) / dt;
        mis += dt * mass_obs.bilinear(d, d);
      }
      std::swap(e, ep);
    }
  }
  return mis;
}

}  // namespace

double InverseProblem::objective(std::span<const NodalField> f, const FieldSeries& y) const {
  const FieldSeries& yo = observations();
  double reg = 0.0;
  for (const auto& fc : f) reg += system_.mass().bilinear(fc, fc);
  double sw = 0.0;
  for (double w : w_sigma2_) sw += w;
  return 0.5 * sw * reg + 0.5 * settings_.penalty_k * misfit(y, &yo, observed_, mass_obs_, grid());
}

double InverseProblem::evaluate(std::span<const NodalField> f, const FieldSeries* yo, std::vector<NodalField>* grad,
                                GradientRepresentation rep) const {
  if (f.size() != system_.n_components()) throw InvalidArgument("source has wrong component count");
  const FieldSeries y = simulate(f);
  double sw = 0.0;
  for (double w : w_sigma2_) sw += w;
  double reg = 0.0;
  for (const auto& fc : f) reg += system_.mass().bilinear(fc, fc);
  const double J = 0.5 * sw * reg + 0.5 * settings_.penalty_k * misfit(y, yo, observed_, mass_obs_, grid());
  if (!grad) return J;

  const std::size_t nn = system_.node_count();
  const std::size_t nc = system_.n_components();
  const std::size_t K = grid().n_steps();
  const double dt = grid().dt();
  const double k = settings_.penalty_k;

  // Misfit derivative with respect to each level:
  // r^m = k [dt w_m M_O e^m + M_O d^m - M_O d^{m+1}].
  auto residual = [&](std::size_t m, std::size_t c, std::size_t i) {
    return y(m, c, i) - (yo ? (*yo)(m, c, i) : 0.0);
  };
  std::vector<double> lam(nc * nn), nu_next(nc * nn, 0.0), acc(nc * nn, 0.0), tmp(nn), buf(nn);
  for (std::size_t m = K; m >= 1; --m) {
    system_.apply_mass(nu_next, lam);
    for (std::size_t c : observed_) {
      const double w = (m == K) ? 0.5 : 1.0;
      for (std::size_t i = 0; i < nn; ++i) {
        const double em = residual(m, c, i);
        const double dm = (em - residual(m - 1, c, i)) / dt;
        const double dn = (m < K) ? (residual(m + 1, c, i) - em) / dt : 0.0;
        buf[i] = dt * w * em + dm - dn;
      }
      mass_obs_.multiply(buf, tmp);
      for (std::size_t i = 0; i < nn; ++i) lam[c * nn + i] += k * tmp[i];
    }
    system_.solve_transposed(lam);
    const double s = dt * sigma_.value(m);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += s * lam[i];
    nu_next = lam;
  }

  grad->assign(nc, NodalField(nn, 0.0));
  for (std::size_t c = 0; c < nc; ++c) {
    for (std::size_t i = 0; i < nn; ++i) buf[i] = sw * f[c][i] + acc[c * nn + i];
    if (rep == GradientRepresentation::nodal)
      system_.mass().multiply(buf, (*grad)[c]);
    else
      (*grad)[c] = buf;
  }
  return J;
}

double InverseProblem::objective_and_gradient(std::span<const NodalField> f, std::vector<NodalField>& grad,
                                              std::optional<GradientRepresentation> rep) const {
  return evaluate(f, &observations(), &grad, rep.value_or(settings_.gradient));
}

std::vector<NodalField> InverseProblem::gradient(std::span<const NodalField> f,
                                                 std::optional<GradientRepresentation> rep) const {
  std::vector<NodalField> g;
  objective_and_gradient(f, g, rep);
  return g;
}

std::vector<NodalField> InverseProblem::hessian_apply(std::span<const NodalField> v) const {
  std::vector<NodalField> g;
  evaluate(v, nullptr, &g, settings_.gradient);
  return g;
}

DescentResult InverseProblem::descend(std::vector<NodalField> f, const std::vector<NodalField>* truth) const {
  if (f.size() != system_.n_components()) throw InvalidArgument("initial guess has wrong component count");
  return settings_.engine == DescentEngine::krylov ? descend_krylov(std::move(f), truth)
                                                   : descend_iterative(std::move(f), truth);
}

DescentResult InverseProblem::descend_iterative(std::vector<NodalField> f,
                                                const std::vector<NodalField>* truth) const {
  DescentResult res;
  res.best_J = std::numeric_limits<double>::infinity();
  std::vector<NodalField> g;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t it = 0;; ++it) {
    const double J = objective_and_gradient(f, g);
    double gn = 0.0;
    for (const auto& gc : g) gn += dot(gc, gc);
    gn = std::sqrt(gn);
    res.trace.iter.push_back(it);
    res.trace.J.push_back(J);
    res.trace.grad_norm.push_back(gn);
    if (truth) res.trace.rel_err.push_back(relative_error(mesh(), f, *truth));
    if (J > prev) ++res.trace.increases;
    prev = J;
    if (J < res.best_J) {
      res.best_J = J;
      res.best_iter = it;
      res.f = f;
    }
    if (!std::isfinite(J) || J > settings_.divergence_factor * res.best_J) {
      res.diverged = true;
      break;
    }
    if (gn < settings_.grad_tol) {
      res.converged = true;
      break;
    }
    if (it == settings_.max_iters) break;
    for (std::size_t c = 0; c < f.size(); ++c)
      for (std::size_t i = 0; i < f[c].size(); ++i) f[c][i] -= settings_.step_size * g[c][i];
  }
  return res;
}

DescentResult InverseProblem::descend_krylov(std::vector<NodalField> f, const std::vector<NodalField>* truth) const {
  using Eigen::Index;
  const std::size_t nc = system_.n_components();
  const std::size_t nn = system_.node_count();
  const auto dim = static_cast<Index>(nc * nn);
  const bool riesz = settings_.gradient == GradientRepresentation::l2_riesz;
  const SparseMatrix& mass = system_.mass();

  auto to_vec = [&](std::span<const NodalField> v) {
    Eigen::VectorXd x(dim);
    for (std::size_t c = 0; c < nc; ++c)
      for (std::size_t i = 0; i < nn; ++i) x(static_cast<Index>(c * nn + i)) = v[c][i];
    return x;
  };
  auto to_fields = [&](const Eigen::VectorXd& x) {
    std::vector<NodalField> v(nc, NodalField(nn));
    for (std::size_t c = 0; c < nc; ++c)
      for (std::size_t i = 0; i < nn; ++i) v[c][i] = x(static_cast<Index>(c * nn + i));
    return v;
  };
  // Block mass product, used for the M-inner product and error norms.
  auto mass_apply = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd y(dim);
    for (std::size_t c = 0; c < nc; ++c)
      mass.multiply(std::span<const double>(x.data() + c * nn, nn), std::span<double>(y.data() + c * nn, nn));
    return y;
  };
  // Inner product in which the Hessian representation is self-adjoint.
  auto gram = [&](const Eigen::VectorXd& x) { return riesz ? mass_apply(x) : x; };

  std::vector<NodalField> g0f;
  const double J0 = objective_and_gradient(f, g0f);
  const Eigen::VectorXd f0 = to_vec(f);
  const Eigen::VectorXd g0 = to_vec(g0f);
  const double gamma = std::sqrt(std::max(0.0, g0.dot(gram(g0))));

  DescentResult res;
  res.best_J = J0;
  res.f = f;
  auto push = [&](std::size_t it, double J, double gn, double err) {
    res.trace.iter.push_back(it);
    res.trace.J.push_back(J);
    res.trace.grad_norm.push_back(gn);
    if (truth) res.trace.rel_err.push_back(err);
  };
  const double err0 = truth ? relative_error(mesh(), f, *truth) : 0.0;
  if (gamma < settings_.grad_tol || settings_.max_iters == 0) {
    push(0, J0, std::sqrt(g0.squaredNorm()), err0);
    res.converged = gamma < settings_.grad_tol;
    return res;
  }

  // Lanczos on the Hessian started from g0, full reorthogonalization.
  const std::size_t m_max = std::min<std::size_t>(settings_.krylov_dim, static_cast<std::size_t>(dim));
  Eigen::MatrixXd V(dim, static_cast<Index>(m_max));
  Eigen::MatrixXd GV(dim, static_cast<Index>(m_max));
  std::vector<double> alpha, beta;
  V.col(0) = g0 / gamma;
  GV.col(0) = gram(V.col(0));
  std::size_t m = 0;
  for (std::size_t j = 0; j < m_max; ++j) {
    m = j + 1;
    Eigen::VectorXd w = to_vec(hessian_apply(to_fields(V.col(static_cast<Index>(j)))));
    alpha.push_back(w.dot(GV.col(static_cast<Index>(j))));
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t i = 0; i <= j; ++i) w -= w.dot(GV.col(static_cast<Index>(i))) * V.col(static_cast<Index>(i));
    if (j + 1 == m_max) break;
    const Eigen::VectorXd gw = gram(w);
    const double b = std::sqrt(std::max(0.0, w.dot(gw)));
    if (b <= 1e-12 * std::abs(alpha.front())) break;
    beta.push_back(b);
    V.col(static_cast<Index>(j + 1)) = w / b;
    GV.col(static_cast<Index>(j + 1)) = gw / b;
  }
  res.trace.krylov_steps = m;
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(static_cast<Index>(m), static_cast<Index>(m));
  for (std::size_t j = 0; j < m; ++j) {
    T(static_cast<Index>(j), static_cast<Index>(j)) = alpha[j];
    if (j + 1 < m) T(static_cast<Index>(j), static_cast<Index>(j + 1)) = T(static_cast<Index>(j + 1), static_cast<Index>(j)) = beta[j];
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
  const Eigen::VectorXd theta = es.eigenvalues();
  const Eigen::MatrixXd P = V.leftCols(static_cast<Index>(m)) * es.eigenvectors();  // Ritz vectors
  const Eigen::VectorXd w = es.eigenvectors().row(0).transpose();

  // Quantities for the traced norms in Ritz coordinates.
  const Eigen::MatrixXd PtP = P.transpose() * P;
  Eigen::MatrixXd MP(dim, static_cast<Index>(m));
  for (Index j = 0; j < static_cast<Index>(m); ++j) MP.col(j) = mass_apply(P.col(j));
  const Eigen::MatrixXd PtMP = P.transpose() * MP;
  Eigen::VectorXd d0;
  Eigen::VectorXd Pmd0;
  double d0n = 0.0, tn = 0.0;
  if (truth) {
    const Eigen::VectorXd ft = to_vec(*truth);
    d0 = f0 - ft;
    Pmd0 = MP.transpose() * d0;
    d0n = d0.dot(mass_apply(d0));
    tn = ft.dot(mass_apply(ft));
    if (!(tn > 0.0)) throw InvalidArgument("relative error undefined for a zero reference");
  }

  const double s = settings_.step_size;
  const std::size_t N = settings_.max_iters;
  const std::size_t every = settings_.trace_every ? settings_.trace_every : std::max<std::size_t>(1, N / 1000);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Index>(m));  // p_i(theta)
  Eigen::VectorXd r = Eigen::VectorXd::Ones(static_cast<Index>(m));  // (1 - s theta)^i
  const Eigen::VectorXd contraction = Eigen::VectorXd::Ones(static_cast<Index>(m)) - s * theta;
  double prev = J0;
  Eigen::VectorXd z_best = Eigen::VectorXd::Zero(static_cast<Index>(m));
  push(0, J0, std::sqrt(g0.squaredNorm()), err0);
  for (std::size_t it = 1; it <= N; ++it) {
    p = Eigen::VectorXd::Constant(static_cast<Index>(m), s) + contraction.cwiseProduct(p);
    r = contraction.cwiseProduct(r);
    const Eigen::VectorXd z = gamma * p.cwiseProduct(w);
    const double J = J0 - gamma * w.dot(z) + 0.5 * z.dot(theta.cwiseProduct(z));
    if (J > prev) ++res.trace.increases;
    prev = J;
    if (J < res.best_J) {
      res.best_J = J;
      res.best_iter = it;
      z_best = z;
    }
    const bool diverged = !std::isfinite(J) || J > settings_.divergence_factor * res.best_J;
    const bool last = diverged || it == N;
    if (it % every == 0 || last) {
      const Eigen::VectorXd gr = gamma * r.cwiseProduct(w);
      const double gn = std::sqrt(std::max(0.0, gr.dot(PtP * gr)));
      const double err = truth ? std::sqrt(std::max(0.0, d0n - 2.0 * Pmd0.dot(z) + z.dot(PtMP * z)) / tn) : 0.0;
      push(it, J, gn, err);
      if (gn < settings_.grad_tol) {
        res.converged = true;
        break;
      }
    }
    if (diverged) {
      res.diverged = true;
      break;
    }
  }
  if (res.best_iter > 0) res.f = to_fields(f0 - P * z_best);
  return res;
}

double InverseProblem::stability_ratio(std::span<const NodalField> f, std::span<const NodalField> g) const {
  const std::size_t nc = system_.n_components();
  if (f.size() != nc || g.size() != nc) throw InvalidArgument("sources have wrong component count");
  std::vector<NodalField> diff(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    diff[c].resize(f[c].size());
    for (std::size_t i = 0; i < f[c].size(); ++i) diff[c][i] = f[c][i] - g[c][i];
  }
  double num = 0.0;
  for (const auto& d : diff) num += system_.mass().bilinear(d, d);
  num = std::sqrt(num);
  const FieldSeries y = simulate(diff);
  const std::size_t nn = system_.node_count();
  const double dt = grid().dt();
  std::vector<double> d(nn);
  double den = 0.0;
  for (std::size_t m = 1; m < grid().n_times(); ++m) {
    for (std::size_t i = 0; i < nn; ++i) d[i] = (y(m, nc - 1, i) - y(m - 1, nc - 1, i)) / dt;
    den += dt * mass_obs_.bilinear(d, d);
  }
  den = std::sqrt(den);
  if (den < 1e-14) throw InvalidArgument("stability ratio denominator vanishes");
  return num / den;
}

std::vector<double> component_relative_errors(const Mesh& mesh, std::span<const NodalField> f_rec,
                                              std::span<const NodalField> f_true) {
  if (f_rec.size() != f_true.size()) throw InvalidArgument("component count mismatch");
  const SparseMatrix m = assemble_mass(mesh);
  std::vector<double> out;
  for (std::size_t c = 0; c < f_rec.size(); ++c) {
    NodalField d(f_rec[c].size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = f_rec[c][i] - f_true[c][i];
    const double den = m.bilinear(f_true[c], f_true[c]);
    out.push_back(den > 0.0 ? std::sqrt(m.bilinear(d, d) / den) : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

double relative_error(const Mesh& mesh, std::span<const NodalField> f_rec, std::span<const NodalField> f_true) {
  if (f_rec.size() != f_true.size()) throw InvalidArgument("component count mismatch");
  const SparseMatrix m = assemble_mass(mesh);
  double num = 0.0, den = 0.0;
  for (std::size_t c = 0; c < f_rec.size(); ++c) {
    if (f_rec[c].size() != mesh.node_count() || f_true[c].size() != mesh.node_count())
      throw InvalidArgument("field does not match mesh");
    NodalField d(f_rec[c].size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = f_rec[c][i] - f_true[c][i];
    num += m.bilinear(d, d);
    den += m.bilinear(f_true[c], f_true[c]);
  }
  if (!(den > 0.0)) throw InvalidArgument("relative error undefined for a zero reference");
  return std::sqrt(num / den);
}

void add_observation_noise(FieldSeries& y, const SubdomainMask& obs, std::span<const std::size_t> components,
                           double snr_db, std::uint64_t seed) {
  double ss = 0.0;
  std::size_t count = 0;
  for (std::size_t m = 0; m < y.time_count(); ++m)
    for (std::size_t c : components)
      for (std::size_t i = 0; i < y.node_count(); ++i)
        if (obs.node_flag(i)) {
          ss += y(m, c, i) * y(m, c, i);
          ++count;
        }
  if (count == 0) return;
  const double level = std::sqrt(ss / static_cast<double>(count)) * std::pow(10.0, -snr_db / 20.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t m = 0; m < y.time_count(); ++m)
    for (std::size_t c : components)
      for (std::size_t i = 0; i < y.node_count(); ++i)
        if (obs.node_flag(i)) y(m, c, i) += level * n(rng);
}

void write_trace_csv(std::ostream& os, const DescentTrace& trace) {
  os << std::setprecision(12) << "iter,J,gradnorm,rel_err\n";
  for (std::size_t i = 0; i < trace.J.size(); ++i) {
    os << (i < trace.iter.size() ? trace.iter[i] : i) << ',' << trace.J[i] << ',' << trace.grad_norm[i] << ',';
    if (i < trace.rel_err.size()) os << trace.rel_err[i];
    os << '\n';
  }
}

}  // namespace srcrec
