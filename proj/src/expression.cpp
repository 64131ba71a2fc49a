#include "cy/expression.hpp"

#include <cctype>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "cy/error.hpp"

namespace cy {

struct Expression::Node {
  enum class Op { Const, Var, Add, Sub, Mul, Div, Pow, Neg, Sin, Cos, Exp, Log, Sqrt };
  Op op = Op::Const;
  double value = 0.0;
  int var = 0;
  std::shared_ptr<const Node> lhs, rhs;
};

namespace {

using Node = Expression::Node;
using NodePtr = std::shared_ptr<const Node>;

NodePtr make(Node::Op op, NodePtr a = nullptr, NodePtr b = nullptr) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->lhs = std::move(a);
  n->rhs = std::move(b);
  return n;
}

class Parser {
 public:
  Parser(std::string_view src, int dim, const std::map<std::string, double>& params)
      : src_(src), dim_(dim), params_(params) {}

  NodePtr parse() {
    auto e = expr();
    skip();
    if (pos_ != src_.size()) fail("unexpected character '" + std::string(1, src_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    std::ostringstream os;
    os << "expression \"" << src_ << "\" at position " << pos_ + 1 << ": " << msg;
    throw Error(ErrorKind::ConfigError, os.str());
  }

  void skip() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr expr() {
    auto lhs = term();
    for (;;) {
      if (accept('+')) lhs = make(Node::Op::Add, lhs, term());
      else if (accept('-')) lhs = make(Node::Op::Sub, lhs, term());
      else return lhs;
    }
  }

  NodePtr term() {
    auto lhs = unary();
    for (;;) {
      if (accept('*')) lhs = make(Node::Op::Mul, lhs, unary());
      else if (accept('/')) lhs = make(Node::Op::Div, lhs, unary());
      else return lhs;
    }
  }

  NodePtr unary() {
    if (accept('-')) return make(Node::Op::Neg, unary());
    if (accept('+')) return unary();
    return power();
  }

  NodePtr power() {
    auto base = primary();
    if (accept('^')) return make(Node::Op::Pow, base, unary());
    return base;
  }

  NodePtr primary() {
    skip();
    if (pos_ >= src_.size()) fail("unexpected end of expression");
    const char c = src_[pos_];
    if (accept('(')) {
      auto e = expr();
      if (!accept(')')) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    fail("unexpected character '" + std::string(1, c) + "'");
  }

  NodePtr number() {
    const std::string tail(src_.substr(pos_));
    char* end = nullptr;
    const double v = std::strtod(tail.c_str(), &end);
    const auto consumed = static_cast<std::size_t>(end - tail.c_str());
    if (consumed == 0) fail("malformed number");
    pos_ += consumed;
    auto n = std::make_shared<Node>();
    n->value = v;
    return n;
  }

  NodePtr identifier() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
      ++pos_;
    const std::string name(src_.substr(start, pos_ - start));

    static const std::map<std::string, Node::Op> funcs = {
        {"sin", Node::Op::Sin}, {"cos", Node::Op::Cos},   {"exp", Node::Op::Exp},
        {"log", Node::Op::Log}, {"sqrt", Node::Op::Sqrt},
    };
    if (auto it = funcs.find(name); it != funcs.end()) {
      if (!accept('(')) fail("expected '(' after " + name);
      auto arg = expr();
      if (!accept(')')) fail("expected ')'");
      return make(it->second, arg);
    }
    auto n = std::make_shared<Node>();
    if (name == "pi") {
      n->value = std::numbers::pi;
      return n;
    }
    if (name.size() >= 2 && name[0] == 'x' &&
        name.find_first_not_of("0123456789", 1) == std::string::npos) {
      const int idx = std::stoi(name.substr(1));
      if (idx < 1 || idx > dim_) {
        pos_ = start;
        fail("coordinate " + name + " outside 1.." + std::to_string(dim_));
      }
      n->op = Node::Op::Var;
      n->var = idx - 1;
      return n;
    }
    if (auto it = params_.find(name); it != params_.end()) {
      n->value = it->second;
      return n;
    }
    pos_ = start;
    fail("unknown identifier '" + name + "'");
  }

  std::string_view src_;
  int dim_;
  const std::map<std::string, double>& params_;
  std::size_t pos_ = 0;
};

double eval(const Node& n, std::span<const double> x) {
  switch (n.op) {
    case Node::Op::Const: return n.value;
    case Node::Op::Var: return x[n.var];
    case Node::Op::Add: return eval(*n.lhs, x) + eval(*n.rhs, x);
    case Node::Op::Sub: return eval(*n.lhs, x) - eval(*n.rhs, x);
    case Node::Op::Mul: return eval(*n.lhs, x) * eval(*n.rhs, x);
    case Node::Op::Div: return eval(*n.lhs, x) / eval(*n.rhs, x);
    case Node::Op::Pow: return std::pow(eval(*n.lhs, x), eval(*n.rhs, x));
    case Node::Op::Neg: return -eval(*n.lhs, x);
    case Node::Op::Sin: return std::sin(eval(*n.lhs, x));
    case Node::Op::Cos: return std::cos(eval(*n.lhs, x));
    case Node::Op::Exp: return std::exp(eval(*n.lhs, x));
    case Node::Op::Log: return std::log(eval(*n.lhs, x));
    case Node::Op::Sqrt: return std::sqrt(eval(*n.lhs, x));
  }
  return 0.0;
}

}  // namespace

Expression Expression::parse(std::string_view source, int dim,
                             const std::map<std::string, double>& parameters) {
  Expression e;
  e.root_ = Parser(source, dim, parameters).parse();
  e.source_ = std::string(source);
  return e;
}

double Expression::evaluate(std::span<const double> x) const { return eval(*root_, x); }

ScalarField sample_expression(const Expression& expr, const PeriodicGrid& grid) {
  try {
    return ScalarField::sample(grid, [&](std::span<const double> x) { return expr.evaluate(x); });
  } catch (const Error& e) {
    throw Error(ErrorKind::ConfigError, "expression \"" + expr.source() + "\": " + e.what());
  }
}

}  // namespace cy
