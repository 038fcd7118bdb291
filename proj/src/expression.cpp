#include "srcrec/expression.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>

#include "srcrec/error.hpp"

namespace srcrec {
namespace {

constexpr std::array<std::string_view, 10> kFunctions = {"sin", "cos",  "tan",  "exp",  "log",
                                                         "sqrt", "abs", "sinh", "cosh", "tanh"};

double call(int id, double v) {
  switch (id) {
    case 0: return std::sin(v);
    case 1: return std::cos(v);
    case 2: return std::tan(v);
    case 3: return std::exp(v);
    case 4: return std::log(v);
    case 5: return std::sqrt(v);
    case 6: return std::abs(v);
    case 7: return std::sinh(v);
    case 8: return std::cosh(v);
    default: return std::tanh(v);
  }
}

std::string normalize(std::string_view in) {
  std::string out;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const auto c = static_cast<unsigned char>(in[i]);
    if (c == 0xE2 && i + 2 < in.size() && static_cast<unsigned char>(in[i + 1]) == 0x88 &&
        static_cast<unsigned char>(in[i + 2]) == 0x92) {
      out += '-';  // U+2212
      i += 2;
    } else if (c == 0xC3 && i + 1 < in.size() && static_cast<unsigned char>(in[i + 1]) == 0x97) {
      out += 'x';  // U+00D7
      i += 1;
    } else {
      out += static_cast<char>(c);
    }
  }
  const auto b = out.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  return out.substr(b, out.find_last_not_of(" \t") - b + 1);
}

struct Token {
  enum Kind { num, ident, sym, end } kind;
  std::string_view text;
  double value = 0.0;
  std::size_t pos = 0;
};

class Parser {
 public:
  Parser(std::string_view src, std::size_t offset, std::string_view whole)
      : src_(src), offset_(offset), whole_(whole) {
    advance();
  }

  Expression::Piece piece() {
    Expression::Piece p;
    expr(p.code);
    if (is_ident("on")) {
      advance();
      p.region = region();
    } else if (is_ident("else")) {
      advance();
    } else if (tok_.kind == Token::end) {
      return p;
    } else {
      fail("unexpected '" + std::string(tok_.text) + "'");
    }
    if (tok_.kind != Token::end) fail("trailing input '" + std::string(tok_.text) + "'");
    if (!p.region) else_ = true;
    return p;
  }

  bool saw_else() const noexcept { return else_; }
  unsigned vars() const noexcept { return vars_; }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw InvalidArgument("expression '" + std::string(whole_) + "': " + msg + " at column " +
                          std::to_string(offset_ + tok_.pos + 1));
  }

  bool is_sym(char c) const { return tok_.kind == Token::sym && tok_.text[0] == c; }
  bool is_ident(std::string_view s) const { return tok_.kind == Token::ident && tok_.text == s; }

  void expect(char c) {
    if (!is_sym(c)) fail(std::string("expected '") + c + "'");
    advance();
  }

  void advance() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    tok_.pos = pos_;
    if (pos_ >= src_.size()) {
      tok_ = {Token::end, {}, 0.0, pos_};
      return;
    }
    const char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(src_.data() + pos_, src_.data() + src_.size(), v);
      if (ec != std::errc()) fail("malformed number");
      const auto len = static_cast<std::size_t>(ptr - (src_.data() + pos_));
      tok_ = {Token::num, src_.substr(pos_, len), v, pos_};
      pos_ += len;
    } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t e = pos_;
      while (e < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[e])) || src_[e] == '_')) ++e;
      tok_ = {Token::ident, src_.substr(pos_, e - pos_), 0.0, pos_};
      pos_ = e;
    } else if (std::string_view("+-*/^(),").find(c) != std::string_view::npos) {
      tok_ = {Token::sym, src_.substr(pos_, 1), 0.0, pos_};
      ++pos_;
    } else {
      fail(std::string("unexpected character '") + c + "'");
    }
  }

  void expr(std::vector<Expression::Op>& out) {
    term(out);
    while (is_sym('+') || is_sym('-')) {
      const auto k = is_sym('+') ? Expression::Op::add : Expression::Op::sub;
      advance();
      term(out);
      out.push_back({k});
    }
  }

  void term(std::vector<Expression::Op>& out) {
    unary(out);
    while (is_sym('*') || is_sym('/')) {
      const auto k = is_sym('*') ? Expression::Op::mul : Expression::Op::div;
      advance();
      unary(out);
      out.push_back({k});
    }
  }

  void unary(std::vector<Expression::Op>& out) {
    if (is_sym('-')) {
      advance();
      unary(out);
      out.push_back({Expression::Op::neg});
    } else if (is_sym('+')) {
      advance();
      unary(out);
    } else {
      power(out);
    }
  }

  void power(std::vector<Expression::Op>& out) {
    primary(out);
    if (is_sym('^')) {
      advance();
      unary(out);
      out.push_back({Expression::Op::pow});
    }
  }

  void primary(std::vector<Expression::Op>& out) {
    if (tok_.kind == Token::num) {
      out.push_back({Expression::Op::num, tok_.value});
      advance();
      return;
    }
    if (is_sym('(')) {
      advance();
      expr(out);
      expect(')');
      return;
    }
    if (tok_.kind != Token::ident) fail(tok_.kind == Token::end ? "unexpected end" : "expected a value");
    const std::string_view name = tok_.text;
    if (name == "x" || name == "y" || name == "t") {
      const int id = name == "x" ? 0 : (name == "y" ? 1 : 2);
      vars_ |= 1u << id;
      out.push_back({Expression::Op::var, static_cast<double>(id)});
      advance();
      return;
    }
    if (name == "pi" || name == "e") {
      out.push_back({Expression::Op::num, name == "pi" ? std::numbers::pi : std::numbers::e});
      advance();
      return;
    }
    for (std::size_t f = 0; f < kFunctions.size(); ++f)
      if (name == kFunctions[f]) {
        advance();
        expect('(');
        expr(out);
        expect(')');
        out.push_back({Expression::Op::call, static_cast<double>(f)});
        return;
      }
    fail("unknown name '" + std::string(name) + "'");
  }

  double bound() {
    std::vector<Expression::Op> code;
    const unsigned before = vars_;
    expr(code);
    if (vars_ != before) fail("region bounds must be constant");
    Expression::Piece p{std::move(code), std::nullopt};
    return evaluate_constant(p);
  }

  static double evaluate_constant(const Expression::Piece& p);

  Expression::Region region() {
    Expression::Region r{};
    expect('(');
    r.x0 = bound();
    expect(',');
    r.x1 = bound();
    expect(')');
    if (is_ident("x")) {
      advance();
      expect('(');
      const double y0 = bound();
      expect(',');
      const double y1 = bound();
      expect(')');
      r.y = std::make_pair(y0, y1);
    }
    return r;
  }

  std::string_view src_;
  std::size_t offset_;
  std::string_view whole_;
  std::size_t pos_ = 0;
  Token tok_{Token::end, {}, 0.0, 0};
  unsigned vars_ = 0;
  bool else_ = false;
};

double run(const std::vector<Expression::Op>& code, double x, double y, double t) {
  std::array<double, 64> st{};
  std::size_t sp = 0;
  for (const auto& op : code) {
    switch (op.kind) {
      case Expression::Op::num: st[sp++] = op.value; break;
      case Expression::Op::var: st[sp++] = op.value == 0.0 ? x : (op.value == 1.0 ? y : t); break;
      case Expression::Op::neg: st[sp - 1] = -st[sp - 1]; break;
      case Expression::Op::call: st[sp - 1] = call(static_cast<int>(op.value), st[sp - 1]); break;
      default: {
        const double b = st[--sp];
        double& a = st[sp - 1];
        if (op.kind == Expression::Op::add) a += b;
        else if (op.kind == Expression::Op::sub) a -= b;
        else if (op.kind == Expression::Op::mul) a *= b;
        else if (op.kind == Expression::Op::div) a /= b;
        else a = std::pow(a, b);
      }
    }
  }
  return st[0];
}

std::size_t stack_depth(const std::vector<Expression::Op>& code) {
  std::size_t sp = 0, mx = 0;
  for (const auto& op : code) {
    if (op.kind == Expression::Op::num || op.kind == Expression::Op::var) ++sp;
    else if (op.kind != Expression::Op::neg && op.kind != Expression::Op::call) --sp;
    mx = std::max(mx, sp);
  }
  return mx;
}

double Parser::evaluate_constant(const Expression::Piece& p) { return run(p.code, 0.0, 0.0, 0.0); }

}  // namespace

bool Expression::Region::contains(double x, double yv) const noexcept {
  if (!(x > x0 && x < x1)) return false;
  return !y || (yv > y->first && yv < y->second);
}

Expression Expression::parse(std::string_view text) {
  Expression e;
  e.pieces_.clear();
  e.text_ = normalize(text);
  if (e.text_.empty()) throw InvalidArgument("empty expression");
  const std::string_view src = e.text_;
  std::size_t start = 0;
  bool have_else = false;
  while (start <= src.size()) {
    const std::size_t semi = src.find(';', start);
    const std::size_t stop = semi == std::string_view::npos ? src.size() : semi;
    Parser p(src.substr(start, stop - start), start, src);
    Piece piece = p.piece();
    if (stack_depth(piece.code) > 64) throw InvalidArgument("expression '" + e.text_ + "' is nested too deeply");
    if (have_else) throw InvalidArgument("expression '" + e.text_ + "': pieces after the else piece");
    have_else = p.saw_else();
    const bool single = start == 0 && semi == std::string_view::npos;
    if (!single && !piece.region && !have_else)
      throw InvalidArgument("expression '" + e.text_ + "': piece without 'on' region or 'else'");
    e.vars_ |= p.vars();
    e.pieces_.push_back(std::move(piece));
    if (semi == std::string_view::npos) break;
    start = semi + 1;
  }
  for (const auto& pc : e.pieces_)
    if (pc.region) {
      e.vars_ |= 1u;
      if (pc.region->y) e.vars_ |= 2u;
    }
  return e;
}

Expression Expression::constant(double c) {
  Expression e;
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, c);
  (void)ec;
  e.text_.assign(buf, ptr);
  e.pieces_ = {Piece{{Op{Op::num, c}}, std::nullopt}};
  if (c < 0.0) e.pieces_.front() = Piece{{Op{Op::num, -c}, Op{Op::neg}}, std::nullopt};
  return e;
}

double Expression::operator()(double x, double y, double t) const {
  for (const auto& p : pieces_)
    if (!p.region || p.region->contains(x, y)) return run(p.code, x, y, t);
  return 0.0;
}

bool Expression::uses(char var) const noexcept {
  switch (var) {
    case 'x': return vars_ & 1u;
    case 'y': return vars_ & 2u;
    case 't': return vars_ & 4u;
    default: return false;
  }
}

}  // namespace srcrec
