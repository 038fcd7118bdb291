#include "srcrec/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "srcrec/error.hpp"

namespace srcrec {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  return std::string(s.substr(b, s.find_last_not_of(" \t\r") - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto p = s.find(sep, start);
    out.push_back(trim(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start)));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return {buf, ptr};
}

struct Value {
  std::string text;
  std::size_t line;
};

using Section = std::map<std::string, Value>;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> k = {
      {"run", {"seed", "noise_snr_db"}},
      {"domain", {"dim", "bounds", "elements", "nu"}},
      {"time", {"T", "steps", "sigma", "t0", "sigma_value"}},
      {"coupling", {"n"}},  // plus q<i><j>
      {"source", {}},       // f<i>
      {"observation", {"boxes", "observed"}},
      {"optimizer", {"k", "step", "iters", "gradient", "engine", "krylov_dim", "k_sweep"}},
      {"spectral", {"k_max", "horizons", "epsilon", "control_iters"}},
  };
  return k;
}

// Index suffix of "q12" or "f2"; 0 when malformed.
std::pair<std::size_t, std::size_t> indices(const std::string& key, std::size_t count) {
  if (key.size() != count + 1) return {0, 0};
  std::size_t a = 0, b = 0;
  for (std::size_t i = 1; i <= count; ++i)
    if (key[i] < '1' || key[i] > '9') return {0, 0};
  a = static_cast<std::size_t>(key[1] - '0');
  if (count == 2) b = static_cast<std::size_t>(key[2] - '0');
  return {a, b};
}

double number(const Value& v) {
  try {
    const Expression e = Expression::parse(v.text);
    if (!e.is_constant()) throw ConfigError("expected a constant, got '" + v.text + "'", v.line);
    return e(0.0);
  } catch (const InvalidArgument& err) {
    throw ConfigError(err.what(), v.line);
  }
}

std::size_t integer(const Value& v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.text.data(), v.text.data() + v.text.size(), out);
  if (ec != std::errc() || ptr != v.text.data() + v.text.size())
    throw ConfigError("expected a non-negative integer, got '" + v.text + "'", v.line);
  return out;
}

std::vector<double> numbers(const Value& v) {
  std::vector<double> out;
  for (const auto& part : split(v.text, ',')) out.push_back(number(Value{part, v.line}));
  return out;
}

Expression expression(const Value& v) {
  try {
    return Expression::parse(v.text);
  } catch (const InvalidArgument& err) {
    throw ConfigError(err.what(), v.line);
  }
}

// "(a,b)" or "(a,b)x(c,d)"; returns the number of intervals read.
int parse_box(const std::string& s, std::size_t line, Box& box) {
  std::vector<std::pair<double, double>> iv;
  std::size_t p = 0;
  while (p < s.size()) {
    while (p < s.size() && (s[p] == ' ' || s[p] == '\t')) ++p;
    if (p >= s.size()) break;
    if (!iv.empty()) {
      if (s[p] != 'x') throw ConfigError("expected 'x' between intervals in '" + s + "'", line);
      ++p;
      while (p < s.size() && (s[p] == ' ' || s[p] == '\t')) ++p;
    }
    if (p >= s.size() || s[p] != '(') throw ConfigError("expected '(' in box '" + s + "'", line);
    const auto close = s.find(')', p);
    if (close == std::string::npos) throw ConfigError("unbalanced box '" + s + "'", line);
    const auto parts = split(std::string_view(s).substr(p + 1, close - p - 1), ',');
    if (parts.size() != 2) throw ConfigError("interval needs two bounds in '" + s + "'", line);
    const double a = number(Value{parts[0], line}), b = number(Value{parts[1], line});
    if (!(a < b)) throw ConfigError("empty interval in '" + s + "'", line);
    iv.emplace_back(a, b);
    p = close + 1;
  }
  if (iv.empty() || iv.size() > 2) throw ConfigError("malformed box '" + s + "'", line);
  box = Box{iv[0].first, iv[0].second, 0.0, 0.0};
  if (iv.size() == 2) {
    box.y0 = iv[1].first;
    box.y1 = iv[1].second;
  }
  return static_cast<int>(iv.size());
}

template <class E>
E choice(const Value& v, std::initializer_list<std::pair<std::string_view, E>> options) {
  for (const auto& [name, e] : options)
    if (v.text == name) return e;
  std::string list;
  for (const auto& [name, e] : options) list += (list.empty() ? "" : ", ") + std::string(name);
  throw ConfigError("unknown value '" + v.text + "' (expected one of " + list + ")", v.line);
}

}  // namespace

DescentSettings RunConfig::descent_settings() const {
  DescentSettings s;
  s.penalty_k = optimizer.k;
  s.step_size = optimizer.step;
  s.max_iters = optimizer.iters;
  s.gradient = optimizer.gradient;
  s.engine = optimizer.engine;
  s.krylov_dim = optimizer.krylov_dim;
  return s;
}

RunConfig parse_config(std::string_view text) {
  std::map<std::string, Section> doc;
  std::map<std::string, std::size_t> section_line;
  std::string current;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("malformed section header", line_no);
      current = trim(std::string_view(line).substr(1, line.size() - 2));
      if (!known_keys().count(current)) throw ConfigError("unknown section [" + current + "]", line_no);
      if (section_line.count(current)) throw ConfigError("duplicate section [" + current + "]", line_no);
      section_line[current] = line_no;
      doc[current];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value'", line_no);
    if (current.empty()) throw ConfigError("key outside of any section", line_no);
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const auto& allowed = known_keys().at(current);
    const bool indexed = (current == "coupling" && indices(key, 2).first) || (current == "source" && indices(key, 1).first);
    if (!allowed.count(key) && !indexed) throw ConfigError("unknown key '" + key + "' in [" + current + "]", line_no);
    if (value.empty()) throw ConfigError("empty value for '" + key + "'", line_no);
    if (!doc[current].emplace(key, Value{value, line_no}).second)
      throw ConfigError("duplicate key '" + key + "'", line_no);
  }

  RunConfig c;
  auto get = [&](const std::string& sec, const std::string& key) -> const Value* {
    const auto s = doc.find(sec);
    if (s == doc.end()) return nullptr;
    const auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
  };

  if (auto v = get("run", "seed")) c.seed = integer(*v);
  if (auto v = get("run", "noise_snr_db")) c.noise_snr_db = number(*v);

  if (auto v = get("domain", "dim")) {
    const auto d = integer(*v);
    if (d != 1 && d != 2) throw ConfigError("dim must be 1 or 2", v->line);
    c.domain.dim = static_cast<int>(d);
  }
  const int dim = c.domain.dim;
  if (dim == 2) c.domain.ny = c.domain.nx = 40;
  if (auto v = get("domain", "bounds")) {
    const auto b = numbers(*v);
    if (b.size() != static_cast<std::size_t>(2 * dim))
      throw ConfigError("bounds need " + std::to_string(2 * dim) + " values for dim " + std::to_string(dim), v->line);
    c.domain.bounds = Box{b[0], b[1], dim == 2 ? b[2] : 0.0, dim == 2 ? b[3] : 0.0};
    if (!(b[0] < b[1]) || (dim == 2 && !(b[2] < b[3]))) throw ConfigError("empty domain", v->line);
  }
  if (dim == 1) c.domain.bounds.y0 = c.domain.bounds.y1 = 0.0;
  if (auto v = get("domain", "elements")) {
    const auto parts = split(v->text, ',');
    if (parts.size() != static_cast<std::size_t>(dim))
      throw ConfigError("elements need " + std::to_string(dim) + " counts for dim " + std::to_string(dim), v->line);
    c.domain.nx = integer(Value{parts[0], v->line});
    c.domain.ny = dim == 2 ? integer(Value{parts[1], v->line}) : 0;
    if (c.domain.nx == 0 || (dim == 2 && c.domain.ny == 0)) throw ConfigError("element count must be positive", v->line);
  }
  if (auto v = get("domain", "nu")) {
    c.domain.nu = number(*v);
    if (!(c.domain.nu > 0.0)) throw ConfigError("nu must be positive", v->line);
  }

  if (auto v = get("time", "T")) c.time.T = number(*v);
  if (auto v = get("time", "steps")) c.time.steps = integer(*v);
  if (auto v = get("time", "sigma"))
    c.time.sigma = choice<SigmaKind>(*v, {{"cosine_plateau", SigmaKind::cosine_plateau}, {"constant", SigmaKind::constant}});
  if (auto v = get("time", "t0")) c.time.t0 = number(*v);
  if (auto v = get("time", "sigma_value")) c.time.sigma_value = number(*v);
  if (!(c.time.T > 0.0) || c.time.steps == 0)
    throw ConfigError("time horizon and step count must be positive", section_line.count("time") ? section_line["time"] : 0);
  if (c.time.sigma == SigmaKind::cosine_plateau && !(c.time.t0 > 0.0 && c.time.t0 < c.time.T))
    throw ConfigError("t0 must lie in (0, T)", get("time", "t0") ? get("time", "t0")->line : 0);

  if (auto v = get("coupling", "n")) {
    c.coupling.n = integer(*v);
    if (c.coupling.n < 1 || c.coupling.n > 9) throw ConfigError("n must be between 1 and 9", v->line);
  }
  const std::size_t n = c.coupling.n;
  c.coupling.q.assign(n * n, Expression::constant(0.0));
  c.source.assign(n, Expression::constant(0.0));
  auto check_dim = [&](const Expression& e, std::size_t line) {
    if (dim == 1 && e.uses('y')) throw ConfigError("expression uses y in a 1D domain", line);
  };
  if (doc.count("coupling"))
    for (const auto& [key, v] : doc["coupling"]) {
      if (key == "n") continue;
      const auto [i, j] = indices(key, 2);
      if (i > n || j > n) throw ConfigError("coupling entry " + key + " outside the " + std::to_string(n) + "x" +
                                                std::to_string(n) + " matrix", v.line);
      Expression e = expression(v);
      if (e.uses('t')) throw ConfigError("coupling must not depend on t", v.line);
      check_dim(e, v.line);
      c.coupling.q[(i - 1) * n + (j - 1)] = std::move(e);
    }
  if (doc.count("source"))
    for (const auto& [key, v] : doc["source"]) {
      const auto i = indices(key, 1).first;
      if (i > n) throw ConfigError("source component " + key + " exceeds n = " + std::to_string(n), v.line);
      Expression e = expression(v);
      if (e.uses('t')) throw ConfigError("source must not depend on t", v.line);
      check_dim(e, v.line);
      c.source[i - 1] = std::move(e);
    }

  if (auto v = get("observation", "boxes")) {
    c.observation.boxes.clear();
    for (const auto& part : split(v->text, ';')) {
      Box b;
      if (parse_box(part, v->line, b) != dim) throw ConfigError("box '" + part + "' does not match dim", v->line);
      c.observation.boxes.push_back(b);
    }
  } else if (dim == 2) {
    c.observation.boxes = {Box{0.5, 0.9, 0.1, 0.9}};
  }
  for (const auto& b : c.observation.boxes) {
    const auto& d = c.domain.bounds;
    if (b.x0 < d.x0 || b.x1 > d.x1 || (dim == 2 && (b.y0 < d.y0 || b.y1 > d.y1)))
      throw ConfigError("observation box outside the domain", get("observation", "boxes") ? get("observation", "boxes")->line : 0);
  }
  if (auto v = get("observation", "observed")) {
    c.observation.observed.clear();
    for (const auto& part : split(v->text, ',')) {
      const auto i = integer(Value{part, v->line});
      if (i < 1 || i > n) throw ConfigError("observed component " + part + " out of range", v->line);
      c.observation.observed.push_back(i - 1);
    }
  } else {
    c.observation.observed.clear();
    for (std::size_t i = 0; i < n; ++i) c.observation.observed.push_back(i);
  }

  if (auto v = get("optimizer", "k")) c.optimizer.k = number(*v);
  if (auto v = get("optimizer", "step")) c.optimizer.step = number(*v);
  if (auto v = get("optimizer", "iters")) c.optimizer.iters = integer(*v);
  if (auto v = get("optimizer", "gradient"))
    c.optimizer.gradient = choice<GradientRepresentation>(
        *v, {{"nodal", GradientRepresentation::nodal}, {"l2", GradientRepresentation::l2_riesz}});
  if (auto v = get("optimizer", "engine"))
    c.optimizer.engine =
        choice<DescentEngine>(*v, {{"iterative", DescentEngine::iterative}, {"krylov", DescentEngine::krylov}});
  if (auto v = get("optimizer", "krylov_dim")) c.optimizer.krylov_dim = integer(*v);
  if (auto v = get("optimizer", "k_sweep")) c.optimizer.k_sweep = numbers(*v);
  if (!(c.optimizer.k > 0.0) || !(c.optimizer.step > 0.0))
    throw ConfigError("penalty and step must be positive", section_line.count("optimizer") ? section_line["optimizer"] : 0);
  for (double k : c.optimizer.k_sweep)
    if (!(k > 0.0)) throw ConfigError("k_sweep values must be positive", get("optimizer", "k_sweep")->line);

  if (auto v = get("spectral", "k_max")) {
    c.spectral.k_max = static_cast<int>(integer(*v));
    if (c.spectral.k_max < 1) throw ConfigError("k_max must be at least 1", v->line);
  }
  if (auto v = get("spectral", "horizons")) {
    c.spectral.horizons = numbers(*v);
    for (double h : c.spectral.horizons)
      if (!(h > 0.0 && h <= c.time.T + 1e-12)) throw ConfigError("horizons must lie in (0, T]", v->line);
  }
  if (auto v = get("spectral", "epsilon")) {
    c.spectral.epsilon = number(*v);
    if (!(c.spectral.epsilon > 0.0)) throw ConfigError("epsilon must be positive", v->line);
  }
  if (auto v = get("spectral", "control_iters")) c.spectral.control_iters = integer(*v);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string emit_config(const RunConfig& c) {
  std::ostringstream os;
  auto list = [](const std::vector<double>& v) {
    std::string s;
    for (double x : v) s += (s.empty() ? "" : ", ") + fmt(x);
    return s;
  };
  const int dim = c.domain.dim;
  const auto& b = c.domain.bounds;
  os << "[run]\nseed = " << c.seed << '\n';
  if (c.noise_snr_db) os << "noise_snr_db = " << fmt(*c.noise_snr_db) << '\n';
  os << "\n[domain]\ndim = " << dim << "\nbounds = " << fmt(b.x0) << ", " << fmt(b.x1);
  if (dim == 2) os << ", " << fmt(b.y0) << ", " << fmt(b.y1);
  os << "\nelements = " << c.domain.nx;
  if (dim == 2) os << ", " << c.domain.ny;
  os << "\nnu = " << fmt(c.domain.nu) << '\n';
  os << "\n[time]\nT = " << fmt(c.time.T) << "\nsteps = " << c.time.steps
     << "\nsigma = " << (c.time.sigma == SigmaKind::constant ? "constant" : "cosine_plateau") << "\nt0 = " << fmt(c.time.t0)
     << "\nsigma_value = " << fmt(c.time.sigma_value) << '\n';
  os << "\n[coupling]\nn = " << c.coupling.n << '\n';
  for (std::size_t i = 0; i < c.coupling.n; ++i)
    for (std::size_t j = 0; j < c.coupling.n; ++j) os << 'q' << i + 1 << j + 1 << " = " << c.q(i, j).text() << '\n';
  os << "\n[source]\n";
  for (std::size_t i = 0; i < c.source.size(); ++i) os << 'f' << i + 1 << " = " << c.source[i].text() << '\n';
  os << "\n[observation]\nboxes = ";
  for (std::size_t i = 0; i < c.observation.boxes.size(); ++i) {
    const auto& o = c.observation.boxes[i];
    os << (i ? "; " : "") << '(' << fmt(o.x0) << ", " << fmt(o.x1) << ')';
    if (dim == 2) os << "x(" << fmt(o.y0) << ", " << fmt(o.y1) << ')';
  }
  os << "\nobserved = ";
  for (std::size_t i = 0; i < c.observation.observed.size(); ++i)
    os << (i ? ", " : "") << c.observation.observed[i] + 1;
  os << "\n\n[optimizer]\nk = " << fmt(c.optimizer.k) << "\nstep = " << fmt(c.optimizer.step)
     << "\niters = " << c.optimizer.iters
     << "\ngradient = " << (c.optimizer.gradient == GradientRepresentation::nodal ? "nodal" : "l2")
     << "\nengine = " << (c.optimizer.engine == DescentEngine::krylov ? "krylov" : "iterative")
     << "\nkrylov_dim = " << c.optimizer.krylov_dim << "\nk_sweep = " << list(c.optimizer.k_sweep) << '\n';
  os << "\n[spectral]\nk_max = " << c.spectral.k_max << "\nhorizons = " << list(c.spectral.horizons)
     << "\nepsilon = " << fmt(c.spectral.epsilon) << "\ncontrol_iters = " << c.spectral.control_iters << '\n';
  return os.str();
}

RunConfig default_config() {
  return parse_config(R"([coupling]
n = 2
q12 = 4*x-2
q21 = -4*x+2

[source]
f1 = sin(2*pi*x)
f2 = -sin(2*pi*x)

[observation]
boxes = (0.5, 0.9)
observed = 1, 2
)");
}

}  // namespace srcrec
