#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>

#include "cy/grid.hpp"

namespace cy {

/// Closed-form scalar expressions used to describe curvature data and Lee
/// form components in problem files.
///
///   expr    := term (('+' | '-') term)*
///   term    := unary (('*' | '/') unary)*
///   unary   := ('-' | '+') unary | power
///   power   := primary ('^' unary)?
///   primary := number | 'pi' | coordinate | parameter | func '(' expr ')' | '(' expr ')'
///   func    := sin | cos | exp | log | sqrt
///
/// Coordinates are x1 .. x<dim>. Named parameters are bound at parse time.
/// Syntax errors raise ConfigError with the 1-based character position.
class Expression {
 public:
  static Expression parse(std::string_view source, int dim,
                          const std::map<std::string, double>& parameters = {});

  double evaluate(std::span<const double> x) const;
  const std::string& source() const { return source_; }

  struct Node;

 private:
  std::shared_ptr<const Node> root_;
  std::string source_;
};

ScalarField sample_expression(const Expression& expr, const PeriodicGrid& grid);

}  // namespace cy
