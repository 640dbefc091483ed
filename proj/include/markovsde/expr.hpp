#pragma once

// Scalar-field expression language used for drift and coupling entries.
// Grammar (tightest first): function call, '^' (right-assoc), unary '-',
// '*' '/' (left), '+' '-' (left). Identifiers x1..xn are state variables,
// anything else is a named parameter.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace markovsde::expr {

using ParamMap = std::map<std::string, double>;

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, std::size_t offset)
      : std::runtime_error(msg + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class EvalError : public std::runtime_error {
 public:
  EvalError(const std::string& msg, std::string subexpression)
      : std::runtime_error(msg + " in '" + subexpression + "'"),
        subexpression_(std::move(subexpression)) {}
  const std::string& subexpression() const noexcept { return subexpression_; }

 private:
  std::string subexpression_;
};

enum class Fn : std::uint8_t { Sin, Cos, Exp, Log, Tanh, Sqrt, Abs };

inline constexpr std::string_view fn_name(Fn f) {
  switch (f) {
    case Fn::Sin: return "sin";
    case Fn::Cos: return "cos";
    case Fn::Exp: return "exp";
    case Fn::Log: return "log";
    case Fn::Tanh: return "tanh";
    case Fn::Sqrt: return "sqrt";
    case Fn::Abs: return "abs";
  }
  return "?";
}

inline bool fn_from_name(std::string_view name, Fn& out) {
  for (Fn f : {Fn::Sin, Fn::Cos, Fn::Exp, Fn::Log, Fn::Tanh, Fn::Sqrt, Fn::Abs}) {
    if (name == fn_name(f)) {
      out = f;
      return true;
    }
  }
  return false;
}

enum class Kind : std::uint8_t { Literal, Var, Param, Neg, Add, Sub, Mul, Div, Pow, Call };

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  Kind kind;
  double value = 0.0;  // Literal
  int index = 0;       // Var, 1-based
  std::string name;    // Param
  Fn fn = Fn::Sin;     // Call
  NodePtr a, b;        // operands; Neg/Call use a only
};

namespace detail {

inline NodePtr literal(double v) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Literal;
  n->value = v;
  return n;
}
inline NodePtr variable(int index) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Var;
  n->index = index;
  return n;
}
inline NodePtr param(std::string name) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Param;
  n->name = std::move(name);
  return n;
}
inline NodePtr unary(Kind k, NodePtr a) {
  auto n = std::make_shared<Node>();
  n->kind = k;
  n->a = std::move(a);
  return n;
}
inline NodePtr binary(Kind k, NodePtr a, NodePtr b) {
  auto n = std::make_shared<Node>();
  n->kind = k;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}
inline NodePtr call(Fn f, NodePtr a) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Call;
  n->fn = f;
  n->a = std::move(a);
  return n;
}

// Shortest decimal string that parses back to exactly the same double.
inline std::string format_double(double v) {
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

// Precedence levels: Add/Sub 1, Mul/Div 2, Neg 3, Pow 4, atoms 5.
// A negative literal prints with a leading '-', so it behaves like Neg.
inline int level(const Node& n) {
  switch (n.kind) {
    case Kind::Add:
    case Kind::Sub: return 1;
    case Kind::Mul:
    case Kind::Div: return 2;
    case Kind::Neg: return 3;
    case Kind::Pow: return 4;
    case Kind::Literal: return std::signbit(n.value) ? 3 : 5;
    default: return 5;
  }
}

inline void print_node(const Node& n, int min_level, std::string& out) {
  const bool parens = level(n) < min_level;
  if (parens) out += '(';
  switch (n.kind) {
    case Kind::Literal: out += format_double(n.value); break;
    case Kind::Var: out += 'x'; out += std::to_string(n.index); break;
    case Kind::Param: out += n.name; break;
    case Kind::Neg:
      out += '-';
      print_node(*n.a, 3, out);
      break;
    case Kind::Add:
      print_node(*n.a, 1, out);
      out += '+';
      print_node(*n.b, 2, out);
      break;
    case Kind::Sub:
      print_node(*n.a, 1, out);
      out += '-';
      print_node(*n.b, 2, out);
      break;
    case Kind::Mul:
      print_node(*n.a, 2, out);
      out += '*';
      print_node(*n.b, 3, out);
      break;
    case Kind::Div:
      print_node(*n.a, 2, out);
      out += '/';
      print_node(*n.b, 3, out);
      break;
    case Kind::Pow:
      print_node(*n.a, 5, out);
      out += '^';
      print_node(*n.b, 3, out);
      break;
    case Kind::Call:
      out += fn_name(n.fn);
      out += '(';
      print_node(*n.a, 0, out);
      out += ')';
      break;
  }
  if (parens) out += ')';
}

inline std::string print_node(const Node& n) {
  std::string s;
  print_node(n, 0, s);
  return s;
}

}  // namespace detail

class Expr {
 public:
  Expr() = default;
  explicit Expr(NodePtr root) : root_(std::move(root)) {}
  const NodePtr& root() const { return root_; }
  bool empty() const { return root_ == nullptr; }

 private:
  NodePtr root_;
};

inline std::string to_string(const Expr& e) {
  if (e.empty()) return "";
  return detail::print_node(*e.root());
}

inline bool structurally_equal(const NodePtr& a, const NodePtr& b) {
  if (!a || !b) return a == b;
  if (a->kind != b->kind) return false;
  switch (a->kind) {
    case Kind::Literal: return a->value == b->value;
    case Kind::Var: return a->index == b->index;
    case Kind::Param: return a->name == b->name;
    case Kind::Call:
      return a->fn == b->fn && structurally_equal(a->a, b->a);
    case Kind::Neg: return structurally_equal(a->a, b->a);
    default:
      return structurally_equal(a->a, b->a) && structurally_equal(a->b, b->b);
  }
}

inline bool structurally_equal(const Expr& a, const Expr& b) {
  return structurally_equal(a.root(), b.root());
}

namespace detail {

struct Parser {
  std::string_view text;
  std::size_t pos = 0;

  [[noreturn]] void fail(const std::string& msg, std::size_t at) const {
    throw ParseError(msg, at);
  }

  void skip_ws() {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
  }

  bool eof() {
    skip_ws();
    return pos >= text.size();
  }

  char peek() {
    skip_ws();
    return pos < text.size() ? text[pos] : '\0';
  }

  bool accept(char c) {
    if (peek() == c) {
      ++pos;
      return true;
    }
    return false;
  }

  NodePtr parse_expression() {
    NodePtr lhs = parse_term();
    for (;;) {
      if (accept('+')) {
        lhs = binary(Kind::Add, lhs, parse_term());
      } else if (accept('-')) {
        lhs = binary(Kind::Sub, lhs, parse_term());
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_term() {
    NodePtr lhs = parse_factor();
    for (;;) {
      if (accept('*')) {
        lhs = binary(Kind::Mul, lhs, parse_factor());
      } else if (accept('/')) {
        lhs = binary(Kind::Div, lhs, parse_factor());
      } else {
        return lhs;
      }
    }
  }

  // Unary minus binds tighter than '*' but looser than '^'.
  NodePtr parse_factor() {
    if (accept('-')) return unary(Kind::Neg, parse_factor());
    return parse_power();
  }

  NodePtr parse_power() {
    NodePtr base = parse_primary();
    if (accept('^')) return binary(Kind::Pow, base, parse_factor());
    return base;
  }

  NodePtr parse_primary() {
    skip_ws();
    if (pos >= text.size()) fail("unexpected end of expression", pos);
    const char c = text[pos];
    if (c == '(') {
      const std::size_t open = pos;
      ++pos;
      NodePtr inner = parse_expression();
      if (!accept(')')) fail("unbalanced parenthesis", open);
      return inner;
    }
    if ((c >= '0' && c <= '9') || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_ident();
    fail(std::string("unexpected character '") + c + "'", pos);
  }

  NodePtr parse_number() {
    const std::size_t start = pos;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
    if (pos < text.size() && text[pos] == '.') {
      ++pos;
      while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
    }
    if (pos == start || (pos == start + 1 && text[start] == '.'))
      fail("malformed number", start);
    if (pos < text.size() && (text[pos] == 'e' || text[pos] == 'E')) {
      std::size_t exp_start = pos;
      ++pos;
      if (pos < text.size() && (text[pos] == '+' || text[pos] == '-')) ++pos;
      if (pos >= text.size() || text[pos] < '0' || text[pos] > '9')
        fail("malformed exponent", exp_start);
      while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
    }
    const std::string token(text.substr(start, pos - start));
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end != token.c_str() + token.size()) fail("malformed number", start);
    return literal(v);
  }

  NodePtr parse_ident() {
    const std::size_t start = pos;
    while (pos < text.size() &&
           (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_'))
      ++pos;
    const std::string_view name = text.substr(start, pos - start);
    if (peek() == '(') {
      Fn f;
      if (!fn_from_name(name, f))
        fail("unknown function '" + std::string(name) + "'", start);
      const std::size_t open = pos;
      ++pos;
      NodePtr arg = parse_expression();
      if (!accept(')')) fail("unbalanced parenthesis", open);
      return call(f, arg);
    }
    if (name.size() >= 2 && name[0] == 'x') {
      bool digits = true;
      for (std::size_t i = 1; i < name.size(); ++i)
        if (name[i] < '0' || name[i] > '9') {
          digits = false;
          break;
        }
      if (digits) {
        const long idx = std::strtol(std::string(name.substr(1)).c_str(), nullptr, 10);
        if (idx < 1) fail("state variable index must be >= 1", start);
        return variable(static_cast<int>(idx));
      }
    }
    return param(std::string(name));
  }
};

}  // namespace detail

inline Expr parse(std::string_view text) {
  detail::Parser p{text};
  if (p.eof()) throw ParseError("empty expression", 0);
  NodePtr root = p.parse_expression();
  if (!p.eof())
    throw ParseError(std::string("unexpected trailing input '") +
                         std::string(p.text.substr(p.pos)) + "'",
                     p.pos);
  return Expr(std::move(root));
}

namespace detail {

inline bool is_integral(double v) {
  return std::nearbyint(v) == v && std::abs(v) < 9.007199254740992e15;
}

inline double apply_fn(Fn f, double x, const Node& node) {
  switch (f) {
    case Fn::Sin: return std::sin(x);
    case Fn::Cos: return std::cos(x);
    case Fn::Exp: return std::exp(x);
    case Fn::Tanh: return std::tanh(x);
    case Fn::Abs: return std::abs(x);
    case Fn::Log:
      if (x <= 0.0) throw EvalError("log of non-positive value", print_node(node));
      return std::log(x);
    case Fn::Sqrt:
      if (x < 0.0) throw EvalError("sqrt of negative value", print_node(node));
      return std::sqrt(x);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

inline double checked_pow(double base, double e, const Node& node) {
  if (base < 0.0 && !is_integral(e))
    throw EvalError("non-integer power of negative base", print_node(node));
  if (base == 0.0 && e < 0.0)
    throw EvalError("zero raised to negative power", print_node(node));
  return std::pow(base, e);
}

inline double eval_node(const Node& n, std::span<const double> state, const ParamMap& params) {
  switch (n.kind) {
    case Kind::Literal: return n.value;
    case Kind::Var:
      if (n.index > static_cast<int>(state.size()))
        throw EvalError("unbound state variable", print_node(n));
      return state[n.index - 1];
    case Kind::Param: {
      auto it = params.find(n.name);
      if (it == params.end()) throw EvalError("unbound parameter", print_node(n));
      return it->second;
    }
    case Kind::Neg: return -eval_node(*n.a, state, params);
    case Kind::Add: return eval_node(*n.a, state, params) + eval_node(*n.b, state, params);
    case Kind::Sub: return eval_node(*n.a, state, params) - eval_node(*n.b, state, params);
    case Kind::Mul: return eval_node(*n.a, state, params) * eval_node(*n.b, state, params);
    case Kind::Div: {
      const double num = eval_node(*n.a, state, params);
      const double den = eval_node(*n.b, state, params);
      if (den == 0.0) throw EvalError("division by zero", print_node(n));
      return num / den;
    }
    case Kind::Pow:
      return checked_pow(eval_node(*n.a, state, params), eval_node(*n.b, state, params), n);
    case Kind::Call: return apply_fn(n.fn, eval_node(*n.a, state, params), n);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

inline double eval(const Expr& e, std::span<const double> state, const ParamMap& params = {}) {
  if (e.empty()) throw EvalError("empty expression", "");
  return detail::eval_node(*e.root(), state, params);
}

inline void walk(const NodePtr& n, const auto& visit) {
  if (!n) return;
  visit(*n);
  walk(n->a, visit);
  walk(n->b, visit);
}

inline int max_var_index(const Expr& e) {
  int idx = 0;
  walk(e.root(), [&](const Node& n) {
    if (n.kind == Kind::Var && n.index > idx) idx = n.index;
  });
  return idx;
}

inline std::vector<std::string> param_names(const Expr& e) {
  std::vector<std::string> names;
  walk(e.root(), [&](const Node& n) {
    if (n.kind == Kind::Param &&
        std::find(names.begin(), names.end(), n.name) == names.end())
      names.push_back(n.name);
  });
  return names;
}

// Flat postfix program with parameters bound as constants. Evaluation is
// allocation-free: the caller provides scratch space of at least stack_size().
class CompiledExpr {
 public:
  CompiledExpr() = default;

  CompiledExpr(const Expr& e, const ParamMap& params) : root_(e.root()) {
    if (e.empty()) throw EvalError("empty expression", "");
    int depth = 0;
    compile(*root_, params, depth);
  }

  int stack_size() const { return stack_need_; }
  bool valid() const { return !code_.empty(); }

  double eval(const double* state, int n_state, double* stack) const {
    double* sp = stack;
    for (const Instr& ins : code_) {
      switch (ins.op) {
        case Op::PushConst: *sp++ = ins.value; break;
        case Op::PushVar:
          if (ins.slot > n_state)
            throw EvalError("unbound state variable", detail::print_node(*ins.node));
          *sp++ = state[ins.slot - 1];
          break;
        case Op::Add: sp[-2] += sp[-1]; --sp; break;
        case Op::Sub: sp[-2] -= sp[-1]; --sp; break;
        case Op::Mul: sp[-2] *= sp[-1]; --sp; break;
        case Op::Div:
          if (sp[-1] == 0.0)
            throw EvalError("division by zero", detail::print_node(*ins.node));
          sp[-2] /= sp[-1];
          --sp;
          break;
        case Op::Pow:
          sp[-2] = detail::checked_pow(sp[-2], sp[-1], *ins.node);
          --sp;
          break;
        case Op::Neg: sp[-1] = -sp[-1]; break;
        case Op::Fun: sp[-1] = detail::apply_fn(ins.fn, sp[-1], *ins.node); break;
      }
    }
    return sp[-1];
  }

 private:
  enum class Op : std::uint8_t { PushConst, PushVar, Add, Sub, Mul, Div, Pow, Neg, Fun };
  struct Instr {
    Op op;
    int slot = 0;
    double value = 0.0;
    Fn fn = Fn::Sin;
    const Node* node = nullptr;
  };

  void compile(const Node& n, const ParamMap& params, int& depth) {
    switch (n.kind) {
      case Kind::Literal:
        code_.push_back({Op::PushConst, 0, n.value, Fn::Sin, &n});
        bump(++depth);
        return;
      case Kind::Var:
        code_.push_back({Op::PushVar, n.index, 0.0, Fn::Sin, &n});
        bump(++depth);
        return;
      case Kind::Param: {
        auto it = params.find(n.name);
        if (it == params.end())
          throw EvalError("unbound parameter", detail::print_node(n));
        code_.push_back({Op::PushConst, 0, it->second, Fn::Sin, &n});
        bump(++depth);
        return;
      }
      case Kind::Neg:
        compile(*n.a, params, depth);
        code_.push_back({Op::Neg, 0, 0.0, Fn::Sin, &n});
        return;
      case Kind::Call:
        compile(*n.a, params, depth);
        code_.push_back({Op::Fun, 0, 0.0, n.fn, &n});
        return;
      default: {
        compile(*n.a, params, depth);
        compile(*n.b, params, depth);
        Op op = Op::Add;
        if (n.kind == Kind::Sub) op = Op::Sub;
        if (n.kind == Kind::Mul) op = Op::Mul;
        if (n.kind == Kind::Div) op = Op::Div;
        if (n.kind == Kind::Pow) op = Op::Pow;
        code_.push_back({op, 0, 0.0, Fn::Sin, &n});
        --depth;
        return;
      }
    }
  }

  void bump(int depth) {
    if (depth > stack_need_) stack_need_ = depth;
  }

  std::vector<Instr> code_;
  NodePtr root_;  // keeps Instr::node pointers alive
  int stack_need_ = 0;
};

}  // namespace markovsde::expr
