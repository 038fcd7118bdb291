#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

namespace srcrec {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Axis-aligned box. In one dimension only [x0, x1] is used.
struct Box {
  double x0 = 0.0;
  double x1 = 0.0;
  double y0 = 0.0;
  double y1 = 0.0;

  friend bool operator==(const Box&, const Box&) = default;
};

// Conforming P1 mesh of an interval or a rectangle. Rectangles are split into
// two triangles per cell along the lower-left to upper-right diagonal.
class Mesh {
 public:
  static Mesh interval(double a, double b, std::size_t n_elems);
  static Mesh rectangle(std::size_t nx, std::size_t ny, double lx, double ly);

  int dim() const noexcept { return dim_; }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t element_count() const noexcept { return elems_.size() / vpe_; }
  std::size_t vertices_per_element() const noexcept { return vpe_; }

  const std::vector<Point>& nodes() const noexcept { return nodes_; }
  const Point& node(std::size_t i) const { return nodes_.at(i); }
  std::span<const std::size_t> element(std::size_t e) const {
    return {elems_.data() + e * vpe_, vpe_};
  }

  bool is_boundary(std::size_t i) const { return boundary_flag_.at(i) != 0; }
  const std::vector<std::size_t>& boundary_nodes() const noexcept { return boundary_; }

  double element_measure(std::size_t e) const { return measures_.at(e); }
  const Box& bounds() const noexcept { return bounds_; }
  double measure() const noexcept;
  // Largest element diameter.
  double h() const noexcept { return h_; }

 private:
  Mesh() = default;
  void finalize();

  int dim_ = 1;
  std::size_t vpe_ = 2;
  std::vector<Point> nodes_;
  std::vector<std::size_t> elems_;
  std::vector<double> measures_;
  std::vector<char> boundary_flag_;
  std::vector<std::size_t> boundary_;
  Box bounds_;
  double h_ = 0.0;
};

// Observation or control region: union of boxes resolved on a mesh.
// A node is flagged when it lies in a closed box (up to a small tolerance);
// an element is flagged when all of its vertices are flagged. Boxes must lie in
// the domain closure.
class SubdomainMask {
 public:
  SubdomainMask() = default;
  SubdomainMask(const Mesh& mesh, std::vector<Box> boxes);

  const std::vector<Box>& boxes() const noexcept { return boxes_; }
  bool node_flag(std::size_t i) const { return node_flags_.at(i) != 0; }
  bool element_flag(std::size_t e) const { return elem_flags_.at(e) != 0; }
  // Flagged nodes touching at least one flagged element.
  bool dof_flag(std::size_t i) const { return dof_flags_.at(i) != 0; }
  std::size_t node_count() const noexcept { return node_flags_.size(); }
  std::size_t flagged_element_count() const noexcept { return n_flagged_elems_; }
  double measure() const noexcept { return measure_; }
  // True when no element is fully inside; callers should warn.
  bool empty() const noexcept { return n_flagged_elems_ == 0; }

 private:
  std::vector<Box> boxes_;
  std::vector<char> node_flags_;
  std::vector<char> elem_flags_;
  std::vector<char> dof_flags_;
  std::size_t n_flagged_elems_ = 0;
  double measure_ = 0.0;
};

void write_nodes_csv(std::ostream& os, const Mesh& mesh, const SubdomainMask* obs = nullptr);
void write_elements_csv(std::ostream& os, const Mesh& mesh);

}  // namespace srcrec
