#include "srcrec/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "srcrec/error.hpp"

namespace srcrec {
namespace {

constexpr double kClosureTol = 1e-12;

bool inside(const Box& b, const Point& p, int dim) {
  const double sx = kClosureTol * std::max(1.0, std::abs(b.x1 - b.x0));
  if (p.x < b.x0 - sx || p.x > b.x1 + sx) return false;
  if (dim == 1) return true;
  const double sy = kClosureTol * std::max(1.0, std::abs(b.y1 - b.y0));
  return p.y >= b.y0 - sy && p.y <= b.y1 + sy;
}

}  // namespace

Mesh Mesh::interval(double a, double b, std::size_t n_elems) {
  if (n_elems < 1) throw InvalidArgument("interval mesh needs at least one element");
  if (!(b > a)) throw InvalidArgument("interval mesh needs a < b");
  Mesh m;
  m.dim_ = 1;
  m.vpe_ = 2;
  m.nodes_.resize(n_elems + 1);
  for (std::size_t i = 0; i <= n_elems; ++i)
    m.nodes_[i].x = a + (b - a) * static_cast<double>(i) / static_cast<double>(n_elems);
  m.elems_.reserve(2 * n_elems);
  for (std::size_t e = 0; e < n_elems; ++e) {
    m.elems_.push_back(e);
    m.elems_.push_back(e + 1);
  }
  m.bounds_ = {a, b, 0.0, 0.0};
  m.finalize();
  return m;
}

Mesh Mesh::rectangle(std::size_t nx, std::size_t ny, double lx, double ly) {
  if (nx < 1 || ny < 1) throw InvalidArgument("rectangle mesh needs nx, ny >= 1");
  if (!(lx > 0.0) || !(ly > 0.0)) throw InvalidArgument("rectangle mesh needs positive side lengths");
  Mesh m;
  m.dim_ = 2;
  m.vpe_ = 3;
  m.nodes_.resize((nx + 1) * (ny + 1));
  auto id = [nx](std::size_t i, std::size_t j) { return j * (nx + 1) + i; };
  for (std::size_t j = 0; j <= ny; ++j)
    for (std::size_t i = 0; i <= nx; ++i)
      m.nodes_[id(i, j)] = {lx * static_cast<double>(i) / static_cast<double>(nx),
                            ly * static_cast<double>(j) / static_cast<double>(ny)};
  m.elems_.reserve(6 * nx * ny);
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      const std::size_t a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
      m.elems_.insert(m.elems_.end(), {a, b, c});
      m.elems_.insert(m.elems_.end(), {a, c, d});
    }
  }
  m.bounds_ = {0.0, lx, 0.0, ly};
  m.finalize();
  return m;
}

void Mesh::finalize() {
  const std::size_t ne = element_count();
  measures_.resize(ne);
  h_ = 0.0;
  for (std::size_t e = 0; e < ne; ++e) {
    auto v = element(e);
    if (dim_ == 1) {
      measures_[e] = std::abs(nodes_[v[1]].x - nodes_[v[0]].x);
      h_ = std::max(h_, measures_[e]);
    } else {
      const Point &p0 = nodes_[v[0]], &p1 = nodes_[v[1]], &p2 = nodes_[v[2]];
      measures_[e] = 0.5 * std::abs((p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y));
      for (int a = 0; a < 3; ++a) {
        const Point& q = nodes_[v[a]];
        const Point& r = nodes_[v[(a + 1) % 3]];
        h_ = std::max(h_, std::hypot(q.x - r.x, q.y - r.y));
      }
    }
  }
  boundary_flag_.assign(nodes_.size(), 0);
  boundary_.clear();
  const double tol = kClosureTol * std::max(1.0, bounds_.x1 - bounds_.x0);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Point& p = nodes_[i];
    bool on = std::abs(p.x - bounds_.x0) < tol || std::abs(p.x - bounds_.x1) < tol;
    if (dim_ == 2) on = on || std::abs(p.y - bounds_.y0) < tol || std::abs(p.y - bounds_.y1) < tol;
    if (on) {
      boundary_flag_[i] = 1;
      boundary_.push_back(i);
    }
  }
}

double Mesh::measure() const noexcept {
  double s = 0.0;
  for (double m : measures_) s += m;
  return s;
}

SubdomainMask::SubdomainMask(const Mesh& mesh, std::vector<Box> boxes) : boxes_(std::move(boxes)) {
  if (boxes_.empty()) throw InvalidArgument("subdomain needs at least one box");
  const Box& dom = mesh.bounds();
  const double tol = kClosureTol * std::max(1.0, dom.x1 - dom.x0);
  for (const Box& b : boxes_) {
    bool ok = b.x0 < b.x1 && b.x0 >= dom.x0 - tol && b.x1 <= dom.x1 + tol;
    if (mesh.dim() == 2) ok = ok && b.y0 < b.y1 && b.y0 >= dom.y0 - tol && b.y1 <= dom.y1 + tol;
    if (!ok) throw InvalidArgument("subdomain box is empty or leaves the domain");
  }
  const std::size_t nn = mesh.node_count();
  node_flags_.assign(nn, 0);
  for (std::size_t i = 0; i < nn; ++i)
    for (const Box& b : boxes_)
      if (inside(b, mesh.node(i), mesh.dim())) {
        node_flags_[i] = 1;
        break;
      }
  const std::size_t ne = mesh.element_count();
  elem_flags_.assign(ne, 0);
  dof_flags_.assign(nn, 0);
  for (std::size_t e = 0; e < ne; ++e) {
    auto v = mesh.element(e);
    const bool all = std::all_of(v.begin(), v.end(), [&](std::size_t i) { return node_flags_[i] != 0; });
    if (!all) continue;
    elem_flags_[e] = 1;
    ++n_flagged_elems_;
    measure_ += mesh.element_measure(e);
    for (std::size_t i : v) dof_flags_[i] = 1;
  }
}

void write_nodes_csv(std::ostream& os, const Mesh& mesh, const SubdomainMask* obs) {
  os << (mesh.dim() == 1 ? "id,x,is_boundary,in_obs\n" : "id,x,y,is_boundary,in_obs\n");
  for (std::size_t i = 0; i < mesh.node_count(); ++i) {
    const Point& p = mesh.node(i);
    os << i << ',' << p.x;
    if (mesh.dim() == 2) os << ',' << p.y;
    os << ',' << (mesh.is_boundary(i) ? 1 : 0) << ',' << (obs && obs->node_flag(i) ? 1 : 0) << '\n';
  }
}

void write_elements_csv(std::ostream& os, const Mesh& mesh) {
  os << (mesh.dim() == 1 ? "id,n0,n1\n" : "id,n0,n1,n2\n");
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    os << e;
    for (std::size_t v : mesh.element(e)) os << ',' << v;
    os << '\n';
  }
}

}  // namespace srcrec
