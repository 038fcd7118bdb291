#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace srcrec {

// Arithmetic expression in x, y, t with + - * / ^, unary minus, sin, cos, tan,
// exp, log, sqrt, abs, sinh, cosh, tanh and the constants pi and e. A piecewise
// form lists pieces separated by ';':
//   8*(x-0.1) on (0.1,0.35); 8*(0.6-x) on (0.35,0.6); 0 else
// Regions are open intervals in x, or products "(a,b)x(c,d)" in (x, y). The
// first matching piece wins; without an else piece the value elsewhere is 0.
// The Unicode minus sign U+2212 is accepted as '-'.
class Expression {
 public:
  Expression() : pieces_{Piece{{Op{Op::num, 0.0}}, std::nullopt}}, text_("0") {}
  static Expression parse(std::string_view text);
  static Expression constant(double c);

  double operator()(double x, double y = 0.0, double t = 0.0) const;

  // Normalized source text; parse(text()) reproduces the expression.
  const std::string& text() const noexcept { return text_; }
  bool uses(char var) const noexcept;
  bool is_constant() const noexcept { return !uses('x') && !uses('y') && !uses('t'); }

  friend bool operator==(const Expression& a, const Expression& b) { return a.text_ == b.text_; }

  struct Op {
    enum Kind : unsigned char { num, var, neg, add, sub, mul, div, pow, call } kind;
    double value = 0.0;  // num: literal; var: 0, 1, 2 for x, y, t; call: function id
  };
  struct Region {
    double x0, x1;
    std::optional<std::pair<double, double>> y;
    bool contains(double x, double yv) const noexcept;
  };
  struct Piece {
    std::vector<Op> code;
    std::optional<Region> region;  // empty for the else piece
  };

 private:
  std::vector<Piece> pieces_;
  std::string text_;
  unsigned vars_ = 0;
};

}  // namespace srcrec
