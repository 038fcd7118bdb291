#include "srcrec/cli_io.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "srcrec/control.hpp"
#include "srcrec/error.hpp"
#include "srcrec/reconstruct.hpp"
#include "srcrec/spectral.hpp"
#include "srcrec/volterra.hpp"

namespace srcrec {
namespace {

Mesh make_mesh(const RunConfig& c) {
  const Box& b = c.domain.bounds;
  if (c.domain.dim == 1) return Mesh::interval(b.x0, b.x1, c.domain.nx);
  if (b.x0 != 0.0 || b.y0 != 0.0) throw ConfigError("two-dimensional domains must start at the origin");
  return Mesh::rectangle(c.domain.nx, c.domain.ny, b.x1, b.y1);
}

SigmaProfile make_sigma(const RunConfig& c, const TimeGrid& g) {
  return c.time.sigma == SigmaKind::constant ? SigmaProfile::constant(g, c.time.sigma_value)
                                             : SigmaProfile::cosine_plateau(g, c.time.t0);
}

CouplingMatrix make_coupling(const RunConfig& c, const Mesh& mesh) {
  CouplingMatrix q(c.coupling.n);
  for (std::size_t i = 0; i < c.coupling.n; ++i)
    for (std::size_t j = 0; j < c.coupling.n; ++j) {
      const Expression& e = c.q(i, j);
      if (e.is_constant()) {
        if (const double v = e(0.0); v != 0.0) q.set(i, j, v);
      } else {
        q.set(i, j, interpolate(mesh, [&](double x, double y) { return e(x, y); }));
      }
    }
  return q;
}

std::ofstream open_out(const CommandOptions& opt, const std::string& name) {
  std::filesystem::create_directories(opt.out);
  std::ofstream os(opt.out / name);
  if (!os) throw Error("cannot write " + (opt.out / name).string());
  return os;
}

bool all_zero(std::span<const NodalField> f) {
  return std::all_of(f.begin(), f.end(), [](const NodalField& c) {
    return std::all_of(c.begin(), c.end(), [](double v) { return v == 0.0; });
  });
}

void write_fields_csv(std::ostream& os, const Mesh& mesh, std::span<const NodalField> f) {
  os << std::setprecision(12) << (mesh.dim() == 1 ? "x" : "x,y");
  for (std::size_t c = 0; c < f.size(); ++c) os << ",f" << c + 1;
  os << '\n';
  for (std::size_t i = 0; i < mesh.node_count(); ++i) {
    os << mesh.node(i).x;
    if (mesh.dim() == 2) os << ',' << mesh.node(i).y;
    for (const auto& c : f) os << ',' << c[i];
    os << '\n';
  }
}

std::size_t horizon_steps(const TimeGrid& g, double h) {
  const auto s = static_cast<std::size_t>(std::llround(h / g.dt()));
  if (s == 0 || s > g.n_steps() || std::abs(static_cast<double>(s) * g.dt() - h) > 1e-9 * std::max(1.0, h))
    throw ConfigError("horizon " + std::to_string(h) + " is not a positive multiple of the time step within T");
  return s;
}

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

}  // namespace

Problem::Problem(const RunConfig& cfg)
    : config(cfg),
      mesh(make_mesh(cfg)),
      grid(cfg.time.T, cfg.time.steps),
      sigma(make_sigma(cfg, grid)),
      q(make_coupling(cfg, mesh)),
      obs(mesh, cfg.observation.boxes) {
  for (const auto& e : cfg.source) f_true.push_back(interpolate(mesh, [&](double x, double y) { return e(x, y); }));
  if (obs.empty()) throw ConfigError("observation boxes contain no mesh element");
}

FieldSeries synthesize_observations(const Problem& p) {
  FieldSeries y = solve_forward(p.mesh, p.q, p.config.domain.nu, p.sigma, p.f_true, p.grid);
  if (p.config.noise_snr_db)
    add_observation_noise(y, p.obs, p.config.observation.observed, *p.config.noise_snr_db, p.config.seed);
  return y;
}

FieldSeries read_trajectory_csv(std::istream& is, const TimeGrid& grid, std::size_t n_components,
                                std::size_t node_count) {
  FieldSeries y(grid, n_components, node_count);
  std::string line;
  if (!std::getline(is, line) || line.rfind("t,node_id,comp,value", 0) != 0)
    throw InvalidArgument("trajectory file lacks the t,node_id,comp,value header");
  std::size_t row = 1, count = 0;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    double v[4];
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (int k = 0; k < 4; ++k) {
      const auto [ptr, ec] = std::from_chars(p, end, v[k]);
      if (ec != std::errc() || (k < 3 && (ptr == end || *ptr != ',')))
        throw InvalidArgument("malformed trajectory row " + std::to_string(row));
      p = ptr + 1;
    }
    const auto m = static_cast<std::size_t>(std::llround(v[0] / grid.dt()));
    const auto i = static_cast<std::size_t>(v[1]);
    const auto c = static_cast<std::size_t>(v[2]);
    if (m >= grid.n_times() || i >= node_count || c < 1 || c > n_components)
      throw InvalidArgument("trajectory row " + std::to_string(row) + " outside the configured grid");
    y(m, c - 1, i) = v[3];
    ++count;
  }
  if (count != grid.n_times() * n_components * node_count)
    throw InvalidArgument("trajectory file does not cover the configured grid");
  return y;
}

InversionResult run_inversion(const RunConfig& cfg, const FieldSeries* observations) {
  const Problem p(cfg);
  InverseProblem ip(p.mesh, p.q, cfg.domain.nu, p.sigma, p.obs, cfg.observation.observed, cfg.descent_settings());
  ip.set_observations(observations ? *observations : synthesize_observations(p));
  const bool known = !all_zero(p.f_true);
  DescentResult d =
      ip.descend(std::vector<NodalField>(p.q.n(), NodalField(p.mesh.node_count(), 0.0)), known ? &p.f_true : nullptr);
  InversionResult r;
  r.rel_err = known ? relative_error(p.mesh, d.f, p.f_true) : std::numeric_limits<double>::quiet_NaN();
  if (known) r.component_err = component_relative_errors(p.mesh, d.f, p.f_true);
  r.best_iter = d.best_iter;
  r.iterations = d.trace.iter.empty() ? 0 : d.trace.iter.back();
  r.increases = d.trace.increases;
  r.diverged = d.diverged;
  r.f = std::move(d.f);
  r.trace = std::move(d.trace);
  return r;
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(mu);
            if (!error) error = std::current_exception();
          }
        }
      });
  }
  if (error) std::rethrow_exception(error);
}

std::vector<RunConfig> sweep_configs(std::span<const double> ks, std::size_t iters) {
  std::vector<RunConfig> out;
  for (double k : ks) {
    RunConfig c = default_config();
    c.optimizer.k = k;
    c.optimizer.iters = iters;
    c.optimizer.engine = DescentEngine::krylov;
    out.push_back(std::move(c));
  }
  return out;
}

namespace {

struct Regime {
  const char* name;
  std::vector<std::size_t> observed;
};

const std::vector<Regime>& regimes() {
  static const std::vector<Regime> r = {{"both", {0, 1}}, {"first", {0}}, {"second", {1}}};
  return r;
}

}  // namespace

std::vector<BenchCell> figure_cells_1d(std::size_t iters) {
  const char* hat1 = "8*(x-0.1) on (0.1,0.35); 8*(0.6-x) on (0.35,0.6); 0 else";
  const char* hat2 = "8*(x-0.4) on (0.4,0.65); 8*(0.9-x) on (0.65,0.9); 0 else";
  struct Coupling {
    const char* name;
    const char* q12;
    const char* q21;
  };
  const Coupling couplings[] = {{"cubic", "0", "-x^3+4*x^2-3*x+1"}, {"linear", "4*x-2", "-4*x+2"}};
  const std::vector<Box> domains[] = {{Box{0.5, 0.9, 0, 0}}, {Box{0.2, 0.4, 0, 0}, Box{0.6, 0.8, 0, 0}}};
  // Published errors (both, first, second) per coupling, source and domain.
  const double refs[2][2][2][3] = {{{{11.7, 71.3, 42.3}, {2.5, 70.7, 28.3}}, {{2.5, 70.7, 28.3}, {3.8, 70.7, 35.8}}},
                                   {{{12.6, 57.3, 40.8}, {2.7, 21.4, 21.4}}, {{9.6, 34.6, 58.8}, {3.7, 34.4, 34.4}}}};
  std::vector<BenchCell> cells;
  for (int cq = 0; cq < 2; ++cq)
    for (int src = 0; src < 2; ++src)
      for (int dom = 0; dom < 2; ++dom)
        for (std::size_t r = 0; r < regimes().size(); ++r) {
          RunConfig c = default_config();
          c.coupling.q = {Expression::parse("0"), Expression::parse(couplings[cq].q12),
                          Expression::parse(couplings[cq].q21), Expression::parse("0")};
          if (src == 1) c.source = {Expression::parse(hat1), Expression::parse(hat2)};
          c.observation.boxes = domains[dom];
          c.observation.observed = regimes()[r].observed;
          c.optimizer.iters = iters;
          c.optimizer.engine = DescentEngine::krylov;
          BenchCell cell;
          cell.group = std::string("1d-") + couplings[cq].name + "-F" + std::to_string(src + 1) + "-O" +
                       std::to_string(dom + 1);
          cell.observed = regimes()[r].name;
          cell.config = std::move(c);
          cell.reference = refs[cq][src][dom][r] / 100.0;
          cells.push_back(std::move(cell));
        }
  return cells;
}

std::vector<BenchCell> figure_cells_2d(std::size_t iters) {
  struct Group {
    const char* name;
    const char* q;  // q11, q12, q21, q22
    std::vector<Box> boxes;
    std::vector<std::size_t> regimes;
  };
  const std::vector<Group> groups = {
      {"2d-upper-O3", "1,4,0,1", {Box{0.3, 0.5, 0.2, 0.8}}, {0, 2}},
      {"2d-upper-O4", "1,4,0,1", {Box{0.2, 0.4, 0.2, 0.8}, Box{0.6, 0.8, 0.2, 0.8}}, {0, 2}},
      {"2d-full-O5", "0,4,2,0", {Box{0.5, 0.9, 0.1, 0.9}}, {0, 1, 2}},
      {"2d-full-O6", "0,4,2,0", {Box{0.2, 0.4, 0.3, 0.7}, Box{0.6, 0.8, 0.3, 0.7}}, {0, 1, 2}},
  };
  std::vector<BenchCell> cells;
  for (const auto& g : groups)
    for (std::size_t r : g.regimes) {
      RunConfig c = parse_config(std::string("[domain]\ndim = 2\nbounds = 0, 1, 0, 1\nelements = 40, 40\n") +
                                 "[source]\nf1 = sin(2*pi*x)*sin(2*pi*y)\nf2 = -sin(2*pi*x)*sin(2*pi*y)\n");
      std::istringstream qs(g.q);
      c.coupling.q.clear();
      for (std::string t; std::getline(qs, t, ',');) c.coupling.q.push_back(Expression::parse(t));
      c.observation.boxes = g.boxes;
      c.observation.observed = regimes()[r].observed;
      c.optimizer.iters = iters;
      c.optimizer.engine = DescentEngine::krylov;
      c.optimizer.krylov_dim = 300;
      cells.push_back(BenchCell{g.name, regimes()[r].name, std::move(c), std::nullopt});
    }
  return cells;
}

TrendSummary summarize_trend(std::span<const BenchCell> cells, std::span<const InversionResult> results,
                             double both_bound, std::optional<double> reference_cap) {
  if (cells.size() != results.size()) throw InvalidArgument("one result per cell expected");
  TrendSummary s;
  std::vector<std::string> seen;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const std::string& g = cells[i].group;
    if (std::find(seen.begin(), seen.end(), g) != seen.end()) continue;
    seen.push_back(g);
    std::optional<std::size_t> both;
    double best_single = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (cells[j].group != g) continue;
      if (cells[j].observed == "both") both = j;
      else best_single = std::min(best_single, results[j].rel_err);
    }
    if (!both) continue;
    ++s.groups;
    if (results[*both].rel_err < best_single) ++s.both_wins;
    const auto& ref = cells[*both].reference;
    if (!reference_cap || (ref && *ref <= *reference_cap)) {
      ++s.accuracy_checked;
      if (results[*both].rel_err <= both_bound) ++s.accuracy_ok;
    }
  }
  return s;
}

int cmd_forward(const RunConfig& cfg, const CommandOptions& opt) {
  const Problem p(cfg);
  const FieldSeries y = solve_forward(p.mesh, p.q, cfg.domain.nu, p.sigma, p.f_true, p.grid);
  auto t = open_out(opt, "trajectory.csv");
  write_trajectory_csv(t, y);
  auto n = open_out(opt, "nodes.csv");
  write_nodes_csv(n, p.mesh, &p.obs);
  auto s = open_out(opt, "snapshot_T.csv");
  write_snapshot_csv(s, p.mesh, y, p.grid.n_steps());
  return 0;
}

int cmd_synth(const RunConfig& cfg, const CommandOptions& opt) {
  const Problem p(cfg);
  const FieldSeries y = synthesize_observations(p);
  auto o = open_out(opt, "observations.csv");
  write_trajectory_csv(o, y);
  auto n = open_out(opt, "nodes.csv");
  write_nodes_csv(n, p.mesh, &p.obs);
  auto f = open_out(opt, "source_true.csv");
  write_fields_csv(f, p.mesh, p.f_true);
  return 0;
}

int cmd_invert(const RunConfig& cfg, const CommandOptions& opt) {
  std::optional<FieldSeries> data;
  if (opt.observations) {
    const Problem p(cfg);
    std::ifstream in(*opt.observations);
    if (!in) throw ConfigError("cannot open observations '" + opt.observations->string() + "'");
    data = read_trajectory_csv(in, p.grid, cfg.coupling.n, p.mesh.node_count());
  }
  const InversionResult r = run_inversion(cfg, data ? &*data : nullptr);
  const Problem p(cfg);
  auto t = open_out(opt, "trace.csv");
  write_trace_csv(t, r.trace);
  auto s = open_out(opt, "source_rec.csv");
  write_source_csv(s, p.mesh, p.f_true, r.f);
  auto m = open_out(opt, "summary.csv");
  m << std::setprecision(12) << "k,rel_err";
  for (std::size_t c = 0; c < r.component_err.size(); ++c) m << ",rel_err_f" << c + 1;
  m << ",best_iter,iterations,increases,diverged\n" << cfg.optimizer.k << ',' << r.rel_err;
  for (double e : r.component_err) m << ',' << e;
  m << ',' << r.best_iter << ',' << r.iterations << ',' << r.increases << ',' << (r.diverged ? 1 : 0) << '\n';
  std::cout << "rel_err " << num(r.rel_err) << (r.diverged ? " (diverged)" : "") << '\n';
  return 0;
}

int cmd_spectral(const RunConfig& cfg, const CommandOptions& opt) {
  const Problem p(cfg);
  if (!p.q.is_constant() && (p.q.n() != 2 || !p.q.is_zero(0, 0) || !p.q.is_zero(0, 1) || !p.q.is_zero(1, 1)))
    throw ConfigError("spectral analysis needs constant coupling or a 2x2 cascade with only q21");
  auto os = open_out(opt, "modes.csv");
  os << std::setprecision(12);
  if (p.q.is_constant()) {
    const Eigen::MatrixXd q = p.q.constant_matrix();
    const auto modes = laplace_modes(p.mesh, cfg.domain.nu, cfg.spectral.k_max);
    os << "tau,k,lambda";
    for (std::size_t j = 0; j < p.q.n(); ++j) os << ",a" << j + 1;
    os << ",violated\n";
    for (double h : cfg.spectral.horizons) {
      const double tau = p.grid.time(horizon_steps(p.grid, h));
      for (const auto& m : modes) {
        const AQCoefficients a = coeff_aQ(q, m.lambda, p.sigma, tau, 4);
        os << tau << ',' << m.k << ',' << m.lambda;
        for (Eigen::Index j = 0; j < a.a.size(); ++j) os << ',' << a.a(j);
        os << ',' << (a.flags.any_violated() ? 1 : 0) << '\n';
      }
    }
    return 0;
  }
  const NodalField q21 = p.q.nodal(1, 0, p.mesh.node_count());
  os << "tau,";
  write_mode_report_header(os, 1);
  for (double h : cfg.spectral.horizons) {
    const double tau = p.grid.time(horizon_steps(p.grid, h));
    for (int k = 1; k <= cfg.spectral.k_max; ++k) {
      const ModeBasis m = build_mode_basis(p.mesh, q21, k);
      const LCoefficients c = coeff_aL_bL(m.Ik, k, p.sigma, tau, 4);
      os << tau << ',';
      write_mode_report_row(os, m, {c.a}, c.b);
    }
  }
  return 0;
}

int cmd_control(const RunConfig& cfg, const CommandOptions& opt) {
  const Problem p(cfg);
  const TimeGrid horizon = p.grid;
  const ModeBasis mode = p.mesh.dim() == 1 ? build_mode_basis(p.mesh, 1, cfg.domain.nu)
                                           : laplace_modes(p.mesh, cfg.domain.nu, 1).front();
  const std::vector<NodalField> psi0(p.q.n(), mode.phi);
  auto report = open_out(opt, "control_report.csv");
  bool header = true;
  std::vector<double> eps = {1e-2, 1e-4};
  if (std::find(eps.begin(), eps.end(), cfg.spectral.epsilon) == eps.end()) eps.push_back(cfg.spectral.epsilon);
  for (double e : eps) {
    ControlSettings s;
    s.epsilon = e;
    s.max_iters = cfg.spectral.control_iters;
    const NullControlSolver solver(p.mesh, p.q.transpose(), cfg.domain.nu, p.grid.dt(), p.obs, s);
    const ControlResult r = solver.solve(psi0, horizon);
    write_control_report_csv(report, r.report, header);
    header = false;
    if (e == cfg.spectral.epsilon) {
      auto u = open_out(opt, "control.csv");
      write_control_csv(u, r.control);
      std::cout << "terminal_residual " << num(r.report.terminal_residual) << '\n';
    }
  }
  return 0;
}

int cmd_volterra_test(const RunConfig& cfg, const CommandOptions& opt) {
  const TimeGrid g(cfg.time.T, cfg.time.steps);
  const SigmaProfile sigma = make_sigma(cfg, g);
  TimeSeriesField eta(g, 1);
  for (std::size_t m = 0; m < g.n_times(); ++m) eta.value(m, 0) = 1.0;
  const SparseMatrix id = SparseMatrix::identity(1);
  const VolterraSolution s = solve_volterra(eta, sigma, id);
  const bool unit = cfg.time.sigma == SigmaKind::constant && cfg.time.sigma_value == 1.0;
  auto os = open_out(opt, "volterra.csv");
  os << std::setprecision(12) << "t,theta" << (unit ? ",theta_exact" : "") << '\n';
  double err = 0.0;
  for (std::size_t m = 0; m < g.n_times(); ++m) {
    os << g.time(m) << ',' << s.theta.value(m, 0);
    if (unit) {
      const double exact = std::sinh(g.time(m) - g.T());
      err = std::max(err, std::abs(exact - s.theta.value(m, 0)));
      os << ',' << exact;
    }
    os << '\n';
  }
  if (unit) std::cout << "max_error " << num(err) << '\n';
  return 0;
}

int cmd_sweep_k(const RunConfig& cfg, const CommandOptions& opt) {
  std::vector<RunConfig> cells;
  for (double k : cfg.optimizer.k_sweep) {
    RunConfig c = cfg;
    c.optimizer.k = k;
    if (opt.iters) c.optimizer.iters = *opt.iters;
    cells.push_back(std::move(c));
  }
  std::vector<InversionResult> results(cells.size());
  parallel_for(cells.size(), opt.threads, [&](std::size_t i) { results[i] = run_inversion(cells[i]); });
  auto os = open_out(opt, "sweep_k.csv");
  os << std::setprecision(12) << "k,rel_err\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    os << cells[i].optimizer.k << ',' << results[i].rel_err << '\n';
    std::cout << "k " << num(cells[i].optimizer.k) << " rel_err " << num(results[i].rel_err) << '\n';
  }
  return 0;
}

int cmd_bench_figures(const RunConfig& /*cfg*/, const CommandOptions& opt) {
  std::vector<BenchCell> cells1, cells2;
  if (opt.bench_dim != 2) cells1 = opt.iters ? figure_cells_1d(*opt.iters) : figure_cells_1d();
  if (opt.bench_dim != 1) cells2 = opt.iters ? figure_cells_2d(*opt.iters) : figure_cells_2d();
  std::vector<BenchCell> cells = cells1;
  cells.insert(cells.end(), cells2.begin(), cells2.end());
  std::vector<InversionResult> results(cells.size());
  parallel_for(cells.size(), opt.threads, [&](std::size_t i) { results[i] = run_inversion(cells[i].config); });

  auto os = open_out(opt, "figures.csv");
  os << std::setprecision(12) << "group,observed,rel_err,rel_err_f1,rel_err_f2,reference_rel_err,best_iter,diverged\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& r = results[i];
    os << cells[i].group << ',' << cells[i].observed << ',' << r.rel_err << ',' << r.component_err.at(0) << ','
       << r.component_err.at(1) << ',';
    if (cells[i].reference) os << *cells[i].reference;
    os << ',' << r.best_iter << ',' << (r.diverged ? 1 : 0) << '\n';
  }

  bool ok = true;
  if (!cells1.empty()) {
    // Rows with the smooth source.
    std::vector<BenchCell> c;
    std::vector<InversionResult> r;
    for (std::size_t i = 0; i < cells1.size(); ++i)
      if (cells1[i].group.find("-F1-") != std::string::npos) {
        c.push_back(cells1[i]);
        r.push_back(results[i]);
      }
    const TrendSummary s = summarize_trend(c, r, 0.15, 0.126);
    std::cout << "1d: both components best in " << s.both_wins << " of " << s.groups << " groups, accuracy "
              << s.accuracy_ok << " of " << s.accuracy_checked << '\n';
    ok = ok && s.both_wins >= 3 && s.accuracy_ok == s.accuracy_checked;
  }
  if (!cells2.empty()) {
    std::vector<BenchCell> c;
    std::vector<InversionResult> r;
    for (std::size_t i = 0; i < cells2.size(); ++i)
      if (cells2[i].group != "2d-full-O6") {
        c.push_back(cells2[i]);
        r.push_back(results[cells1.size() + i]);
      }
    const TrendSummary s = summarize_trend(c, r, 0.25);
    std::cout << "2d: both components best in " << s.both_wins << " of " << s.groups << " groups, accuracy "
              << s.accuracy_ok << " of " << s.accuracy_checked << '\n';
    ok = ok && s.both_wins >= 2 && s.accuracy_ok == s.accuracy_checked;
  }
  return ok ? 0 : kExitCheck;
}

int cmd_reconstruct(const RunConfig& cfg, const CommandOptions& opt) {
  const Problem p(cfg);
  const FieldSeries state = synthesize_observations(p);
  const MeasurementSet meas = MeasurementSet::from_state(state, p.obs);
  ControlSettings s;
  s.epsilon = cfg.spectral.epsilon;
  s.max_iters = cfg.spectral.control_iters;
  std::vector<std::size_t> steps;
  for (double h : cfg.spectral.horizons) steps.push_back(horizon_steps(p.grid, h));

  ReconstructionResult r;
  std::size_t unknowns = 0;
  if (p.q.is_constant()) {
    const ConstQReconstructor rec(p.mesh, p.q.constant_matrix(), cfg.domain.nu, p.sigma, p.obs, s);
    const auto modes = laplace_modes(p.mesh, cfg.domain.nu, cfg.spectral.k_max);
    r = rec.run(meas, modes, steps);
    unknowns = p.q.n();
  } else {
    if (p.q.n() != 2 || !p.q.is_zero(0, 0) || !p.q.is_zero(0, 1) || !p.q.is_zero(1, 1))
      throw ConfigError("reconstruction needs constant coupling or a 2x2 cascade with only q21");
    if (cfg.domain.nu != 1.0) throw ConfigError("the 2x2 cascade reconstruction assumes nu = 1");
    const NodalField q21 = p.q.nodal(1, 0, p.mesh.node_count());
    const VariableQReconstructor rec(p.mesh, q21, p.sigma, p.obs, s);
    std::vector<ModeBasis> modes;
    for (int k = 1; k <= cfg.spectral.k_max; ++k) modes.push_back(build_mode_basis(p.mesh, q21, k));
    r = rec.run(meas, modes, steps);
    unknowns = 2;
  }
  auto os = open_out(opt, "reconstruction.csv");
  write_reconstruction_report(os, r, unknowns);
  auto src = open_out(opt, "source_rec.csv");
  write_source_csv(src, p.mesh, p.f_true, r.source.f);
  if (!all_zero(p.f_true)) {
    const double e = relative_error(p.mesh, r.source.f, p.f_true);
    auto m = open_out(opt, "summary.csv");
    m << std::setprecision(12) << "modes_used,rel_err\n" << r.source.covered << ',' << e << '\n';
    std::cout << "rel_err " << num(e) << " from " << r.source.covered << " modes\n";
  }
  return 0;
}

}  // namespace srcrec
