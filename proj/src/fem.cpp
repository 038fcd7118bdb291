#include "srcrec/fem.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "srcrec/error.hpp"

namespace srcrec {

SparseMatrix SparseMatrix::from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> t) {
  for (const Triplet& e : t)
    if (e.row >= rows || e.col >= cols) throw InvalidArgument("triplet index out of range");
  std::sort(t.begin(), t.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  SparseMatrix m(rows, cols);
  m.cols_idx_.reserve(t.size());
  m.values_.reserve(t.size());
  std::size_t k = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    while (k < t.size() && t[k].row == r) {
      const std::size_t c = t[k].col;
      double v = 0.0;
      while (k < t.size() && t[k].row == r && t[k].col == c) v += t[k++].value;
      m.cols_idx_.push_back(c);
      m.values_.push_back(v);
    }
    m.row_ptr_[r + 1] = m.cols_idx_.size();
  }
  return m;
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
  std::vector<Triplet> t;
  t.reserve(n);
  for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, 1.0});
  return from_triplets(n, n, std::move(t));
}

double SparseMatrix::at(std::size_t r, std::size_t c) const {
  if (r >= rows_ || c >= cols_) throw InvalidArgument("matrix index out of range");
  auto first = cols_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r]);
  auto last = cols_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r + 1]);
  auto it = std::lower_bound(first, last, c);
  return (it != last && *it == c) ? values_[static_cast<std::size_t>(it - cols_idx_.begin())] : 0.0;
}

double SparseMatrix::max_abs() const noexcept {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

void SparseMatrix::multiply(std::span<const double> x, std::span<double> y) const {
  if (x.size() != cols_ || y.size() != rows_) throw InvalidArgument("matrix-vector size mismatch");
  for (std::size_t r = 0; r < rows_; ++r) {
    double s = 0.0;
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) s += values_[k] * x[cols_idx_[k]];
    y[r] = s;
  }
}

std::vector<double> SparseMatrix::operator*(std::span<const double> x) const {
  std::vector<double> y(rows_);
  multiply(x, y);
  return y;
}

double SparseMatrix::bilinear(std::span<const double> x, std::span<const double> y) const {
  if (x.size() != rows_ || y.size() != cols_) throw InvalidArgument("bilinear form size mismatch");
  double s = 0.0;
  for (std::size_t r = 0; r < rows_; ++r) {
    double row = 0.0;
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) row += values_[k] * y[cols_idx_[k]];
    s += x[r] * row;
  }
  return s;
}

std::vector<Triplet> SparseMatrix::triplets() const {
  std::vector<Triplet> t;
  t.reserve(nnz());
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) t.push_back({r, cols_idx_[k], values_[k]});
  return t;
}

SparseMatrix SparseMatrix::transpose() const {
  auto t = triplets();
  for (Triplet& e : t) std::swap(e.row, e.col);
  return from_triplets(cols_, rows_, std::move(t));
}

SparseMatrix SparseMatrix::scaled(double s) const {
  SparseMatrix m = *this;
  for (double& v : m.values_) v *= s;
  return m;
}

SparseMatrix operator+(const SparseMatrix& a, const SparseMatrix& b) {
  if (a.rows_ != b.rows_ || a.cols_ != b.cols_) throw InvalidArgument("matrix sum shape mismatch");
  auto t = a.triplets();
  auto tb = b.triplets();
  t.insert(t.end(), tb.begin(), tb.end());
  return SparseMatrix::from_triplets(a.rows_, a.cols_, std::move(t));
}

void SparseMatrix::write_coo(std::ostream& os) const {
  for (const Triplet& e : triplets()) os << e.row << ' ' << e.col << ' ' << e.value << '\n';
}

namespace {

// Reference-element integrals of products of barycentric coordinates.
SparseMatrix assemble_elementwise(const Mesh& mesh, const SubdomainMask* mask, const NodalField* q, double nu,
                                  bool stiffness) {
  const std::size_t nn = mesh.node_count();
  const std::size_t vpe = mesh.vertices_per_element();
  std::vector<Triplet> t;
  t.reserve(mesh.element_count() * vpe * vpe);
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    if (mask && !mask->element_flag(e)) continue;
    auto v = mesh.element(e);
    const double meas = mesh.element_measure(e);
    if (stiffness) {
      if (mesh.dim() == 1) {
        const double k = nu / meas;
        t.push_back({v[0], v[0], k});
        t.push_back({v[0], v[1], -k});
        t.push_back({v[1], v[0], -k});
        t.push_back({v[1], v[1], k});
      } else {
        const Point &p0 = mesh.node(v[0]), &p1 = mesh.node(v[1]), &p2 = mesh.node(v[2]);
        // Gradients of barycentric coordinates times 2*area.
        const double bx[3] = {p1.y - p2.y, p2.y - p0.y, p0.y - p1.y};
        const double by[3] = {p2.x - p1.x, p0.x - p2.x, p1.x - p0.x};
        const double c = nu / (4.0 * meas);
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) t.push_back({v[a], v[b], c * (bx[a] * bx[b] + by[a] * by[b])});
      }
      continue;
    }
    if (!q) {
      if (mesh.dim() == 1) {
        for (std::size_t a = 0; a < 2; ++a)
          for (std::size_t b = 0; b < 2; ++b) t.push_back({v[a], v[b], meas * (a == b ? 2.0 : 1.0) / 6.0});
      } else {
        for (std::size_t a = 0; a < 3; ++a)
          for (std::size_t b = 0; b < 3; ++b) t.push_back({v[a], v[b], meas * (a == b ? 2.0 : 1.0) / 12.0});
      }
      continue;
    }
    // Weighted: sum_c q_c * int phi_a phi_b phi_c.
    auto triple = [&](std::size_t a, std::size_t b, std::size_t c) {
      const bool ab = a == b, bc = b == c, ac = a == c;
      if (mesh.dim() == 1) return (ab && bc) ? meas / 4.0 : meas / 12.0;
      if (ab && bc) return meas / 10.0;
      if (ab || bc || ac) return meas / 30.0;
      return meas / 60.0;
    };
    for (std::size_t a = 0; a < vpe; ++a)
      for (std::size_t b = 0; b < vpe; ++b) {
        double s = 0.0;
        for (std::size_t c = 0; c < vpe; ++c) s += (*q)[v[c]] * triple(a, b, c);
        t.push_back({v[a], v[b], s});
      }
  }
  return SparseMatrix::from_triplets(nn, nn, std::move(t));
}

}  // namespace

SparseMatrix assemble_mass(const Mesh& mesh) { return assemble_elementwise(mesh, nullptr, nullptr, 0.0, false); }

SparseMatrix assemble_mass(const Mesh& mesh, const SubdomainMask& mask) {
  if (mask.node_count() != mesh.node_count()) throw InvalidArgument("mask does not belong to mesh");
  return assemble_elementwise(mesh, &mask, nullptr, 0.0, false);
}

SparseMatrix assemble_stiffness(const Mesh& mesh, double nu) {
  if (!(nu > 0.0)) throw InvalidArgument("diffusion coefficient must be positive");
  return assemble_elementwise(mesh, nullptr, nullptr, nu, true);
}

SparseMatrix assemble_weighted_mass(const Mesh& mesh, const NodalField& q) {
  if (q.size() != mesh.node_count()) throw InvalidArgument("weight field does not match mesh");
  return assemble_elementwise(mesh, nullptr, &q, 0.0, false);
}

SparseMatrix apply_dirichlet(const SparseMatrix& a, std::span<const std::size_t> dofs) {
  if (a.rows() != a.cols()) throw InvalidArgument("Dirichlet elimination needs a square matrix");
  std::vector<char> fixed(a.rows(), 0);
  for (std::size_t d : dofs) fixed.at(d) = 1;
  auto t = a.triplets();
  std::erase_if(t, [&](const Triplet& e) { return fixed[e.row] || fixed[e.col]; });
  for (std::size_t d : dofs) t.push_back({d, d, 1.0});
  return SparseMatrix::from_triplets(a.rows(), a.cols(), std::move(t));
}

void zero_dofs(std::span<double> b, std::span<const std::size_t> dofs) {
  for (std::size_t d : dofs) b[d] = 0.0;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("dot product size mismatch");
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

CgResult solve_spd(const SparseMatrix& a, std::span<const double> b, double tol, std::size_t max_iter) {
  const std::size_t n = a.rows();
  if (a.cols() != n || b.size() != n) throw InvalidArgument("CG system size mismatch");
  if (max_iter == 0) max_iter = std::max<std::size_t>(10 * n, 100);
  CgResult res;
  res.x.assign(n, 0.0);
  const double bnorm = std::sqrt(dot(b, b));
  if (bnorm == 0.0) return res;

  std::vector<double> dinv(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a.at(i, i);
    if (!(d > 0.0)) throw InvalidArgument("CG needs a positive diagonal");
    dinv[i] = 1.0 / d;
  }
  std::vector<double> r(b.begin(), b.end()), z(n), p(n), ap(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = dinv[i] * r[i];
  p = z;
  double rz = dot(r, z);
  double rnorm = bnorm;
  for (std::size_t it = 0; it < max_iter; ++it) {
    a.multiply(p, ap);
    const double pap = dot(p, ap);
    if (!(pap > 0.0)) throw SolverError("CG breakdown: matrix not positive definite", rnorm / bnorm);
    const double alpha = rz / pap;
    for (std::size_t i = 0; i < n; ++i) {
      res.x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    rnorm = std::sqrt(dot(r, r));
    res.iterations = it + 1;
    if (rnorm <= tol * bnorm) {
      res.relative_residual = rnorm / bnorm;
      return res;
    }
    for (std::size_t i = 0; i < n; ++i) z[i] = dinv[i] * r[i];
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  throw SolverError("CG did not converge", rnorm / bnorm);
}

}  // namespace srcrec
