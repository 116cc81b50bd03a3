#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gnnforge/kernels.hpp"
#include "gnnforge/model.hpp"

namespace gnnforge::dsl {

struct SourceLoc {
  std::size_t line = 0;
  std::size_t col = 0;
};

enum class ErrorKind {
  Lexical,
  Syntax,
  UnknownMethod,
  WrongArity,
  UnboundIdentifier,
  BadArgument,
  MissingForward,
  MissingBackward,
  MissingOptimizer,
  ForwardOrder,
  BackwardOrder,
  StatementOrder,
  Structure,
};

std::string to_string(ErrorKind k);

/// Every frontend failure; the message starts with "line:col".
class DslError : public std::runtime_error {
 public:
  DslError(ErrorKind kind, SourceLoc loc, const std::string& what);
  ErrorKind kind() const noexcept { return kind_; }
  SourceLoc loc() const noexcept { return loc_; }
  /// The message without the location prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  SourceLoc loc_;
  std::string detail_;
};

enum class TokenKind { Identifier, Keyword, Int, Float, String, Punct };

struct Token {
  TokenKind kind = TokenKind::Punct;
  std::string text;  // string literals: contents without quotes
  SourceLoc loc;

  bool is(TokenKind k, std::string_view t) const { return kind == k && text == t; }
};

std::vector<Token> tokenize(std::string_view src);

// AST. Equality ignores source locations so a pretty-printed program
// reparses to an equal tree.

struct Expr {
  enum class Kind { Int, Float, String, Ident, Call, Binary, Negate };
  Kind kind = Kind::Int;
  std::string text;  // literal spelling, identifier, method name or operator
  std::string receiver;  // Call: object the method is invoked on (empty for free calls)
  std::vector<Expr> args;  // Call arguments, Binary {lhs, rhs}, Negate {operand}
  SourceLoc loc;

  bool operator==(const Expr& o) const {
    return kind == o.kind && text == o.text && receiver == o.receiver && args == o.args;
  }
};

struct Stmt;

struct ForLoop {
  std::string var;
  Expr init;
  std::string cond_var;
  std::string cond_op;  // <, <=, >, >=, !=
  Expr bound;
  std::string step_var;
  std::string step_op;  // ++, --, +=, -=
  std::optional<Expr> step_amount;
  std::vector<Stmt> body;

  bool operator==(const ForLoop&) const;
};

struct Stmt {
  enum class Kind { Call, For };
  Kind kind = Kind::Call;
  Expr call;
  std::shared_ptr<ForLoop> loop;
  SourceLoc loc;

  bool operator==(const Stmt& o) const {
    if (kind != o.kind) return false;
    if (kind == Kind::Call) return call == o.call;
    return *loop == *o.loop;
  }
};

enum class ParamType { Graph, Gnn, Container, String, Int };

struct Param {
  ParamType type = ParamType::Int;
  std::string element;  // container element type
  bool by_ref = false;
  std::string name;
  SourceLoc loc;

  bool operator==(const Param& o) const {
    return type == o.type && element == o.element && by_ref == o.by_ref && name == o.name;
  }
};

struct Function {
  std::string name;
  std::vector<Param> params;
  std::vector<Stmt> body;
  SourceLoc loc;

  bool operator==(const Function& o) const { return name == o.name && params == o.params && body == o.body; }
};

struct Ast {
  std::vector<Function> functions;
  bool operator==(const Ast&) const = default;
};

Ast parse(const std::vector<Token>& tokens);
Ast parse(std::string_view src);

/// Canonical source text; parse(pretty_print(a)) == a.
std::string pretty_print(const Ast& ast);

struct Bindings {
  std::optional<std::string> dataset;    // value of the String parameter
  std::vector<std::size_t> neurons;      // value of the container parameter
  std::map<std::string, std::int64_t> ints;  // int parameters and free identifiers, e.g. totalEpoch
};

struct OptimizerSpec {
  Optimizer kind = Optimizer::Adam;
  float lr = 0.01f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float weight_decay = 0.0f;

  bool operator==(const OptimizerSpec&) const = default;
};

struct TrainingPlan {
  std::string function;
  std::string dataset;
  std::string init_scheme = "xavier";
  std::vector<std::size_t> layer_dims;
  std::size_t num_layers = 0;
  std::string model_kind;  // "SAGE" or "GCN"
  Aggregator aggregator = Aggregator::Sum;
  std::vector<std::size_t> forward_order;
  std::vector<std::size_t> backward_order;
  OptimizerSpec optimizer;
  std::size_t epochs = 0;

  bool operator==(const TrainingPlan&) const = default;
};

/// The container parameter in integer context stands for its layer count,
/// len - 1, the same value as gnn.getLayers().
TrainingPlan lower(const Ast& ast, const Bindings& bindings);

std::string plan_to_json(const TrainingPlan& plan);
TrainingPlan plan_from_json(std::string_view json);

/// Seed and sparsity policy are not part of a plan and come from `base`.
TrainConfig to_train_config(const TrainingPlan& plan, TrainConfig base = {});

}  // namespace gnnforge::dsl
