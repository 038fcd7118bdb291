#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "srcrec/mesh.hpp"

namespace srcrec {

using NodalField = std::vector<double>;

struct Triplet {
  std::size_t row;
  std::size_t col;
  double value;
};

// Compressed sparse row matrix with sorted, unique column indices per row.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

  // Duplicates are summed.
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> t);
  static SparseMatrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return values_.size(); }

  std::span<const std::size_t> row_ptr() const noexcept { return row_ptr_; }
  std::span<const std::size_t> col_index() const noexcept { return cols_idx_; }
  std::span<const double> values() const noexcept { return values_; }

  double at(std::size_t r, std::size_t c) const;
  double max_abs() const noexcept;

  void multiply(std::span<const double> x, std::span<double> y) const;
  std::vector<double> operator*(std::span<const double> x) const;
  // x^T A y
  double bilinear(std::span<const double> x, std::span<const double> y) const;

  SparseMatrix transpose() const;
  SparseMatrix scaled(double s) const;
  // Structural union; both operands must share the shape.
  friend SparseMatrix operator+(const SparseMatrix& a, const SparseMatrix& b);

  std::vector<Triplet> triplets() const;
  // One "row col value" line per stored entry, 0-based.
  void write_coo(std::ostream& os) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> cols_idx_;
  std::vector<double> values_;
};

SparseMatrix assemble_mass(const Mesh& mesh);
// Mass matrix restricted to the flagged elements of the mask.
SparseMatrix assemble_mass(const Mesh& mesh, const SubdomainMask& mask);
SparseMatrix assemble_stiffness(const Mesh& mesh, double nu);
// Exact integral of q_h phi_i phi_j with q_h the P1 interpolant of q.
SparseMatrix assemble_weighted_mass(const Mesh& mesh, const NodalField& q);

// Symmetric elimination of homogeneous Dirichlet rows/columns: the listed rows
// and columns are zeroed and a unit diagonal is placed.
SparseMatrix apply_dirichlet(const SparseMatrix& a, std::span<const std::size_t> dofs);
// Zeros the listed entries of a right-hand side.
void zero_dofs(std::span<double> b, std::span<const std::size_t> dofs);

struct CgResult {
  std::vector<double> x;
  std::size_t iterations = 0;
  double relative_residual = 0.0;
};

// Jacobi-preconditioned conjugate gradient. Throws SolverError when the
// relative residual ||Ax-b||/||b|| stays above tol after max_iter iterations.
CgResult solve_spd(const SparseMatrix& a, std::span<const double> b, double tol = 1e-10,
                   std::size_t max_iter = 0);

template <class F>
NodalField interpolate(const Mesh& mesh, F&& f) {
  NodalField v(mesh.node_count());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(mesh.node(i).x, mesh.node(i).y);
  return v;
}

double dot(std::span<const double> a, std::span<const double> b);

}  // namespace srcrec
