#include <sstream>

#include "gnnforge/dsl.hpp"

namespace gnnforge::dsl {

bool ForLoop::operator==(const ForLoop& o) const {
  return var == o.var && init == o.init && cond_var == o.cond_var && cond_op == o.cond_op && bound == o.bound &&
         step_var == o.step_var && step_op == o.step_op && step_amount == o.step_amount && body == o.body;
}

namespace {

std::string describe(const Token& t) {
  switch (t.kind) {
    case TokenKind::Identifier: return "identifier '" + t.text + "'";
    case TokenKind::Keyword: return "keyword '" + t.text + "'";
    case TokenKind::Int: return "integer " + t.text;
    case TokenKind::Float: return "number " + t.text;
    case TokenKind::String: return "string \"" + t.text + "\"";
    case TokenKind::Punct: return "'" + t.text + "'";
  }
  return t.text;
}

class Parser {
 public:
  explicit Parser(const std::vector<Token>& toks) : toks_(toks) {}

  Ast program() {
    Ast ast;
    while (!at_end()) ast.functions.push_back(function());
    return ast;
  }

 private:
  const std::vector<Token>& toks_;
  std::size_t pos_ = 0;

  bool at_end() const { return pos_ >= toks_.size(); }

  SourceLoc here() const {
    if (!at_end()) return toks_[pos_].loc;
    if (toks_.empty()) return {1, 1};
    SourceLoc l = toks_.back().loc;
    l.col += toks_.back().text.size();
    return l;
  }

  [[noreturn]] void fail(const std::string& expected) const {
    const std::string found = at_end() ? "end of input" : describe(toks_[pos_]);
    throw DslError(ErrorKind::Syntax, here(), "expected " + expected + " but found " + found);
  }

  bool peek(TokenKind k, std::string_view text) const { return !at_end() && toks_[pos_].is(k, text); }
  bool peek_punct(std::string_view p) const { return peek(TokenKind::Punct, p); }

  const Token& take() { return toks_[pos_++]; }

  const Token& expect_punct(std::string_view p) {
    if (!peek_punct(p)) fail("'" + std::string(p) + "'");
    return take();
  }

  const Token& expect_keyword(std::string_view k) {
    if (!peek(TokenKind::Keyword, k)) fail("'" + std::string(k) + "'");
    return take();
  }

  const Token& expect_ident(const char* what = "identifier") {
    if (at_end() || toks_[pos_].kind != TokenKind::Identifier) fail(what);
    return take();
  }

  Function function() {
    Function f;
    f.loc = here();
    expect_keyword("function");
    f.name = expect_ident("function name").text;
    expect_punct("(");
    if (!peek_punct(")")) {
      f.params.push_back(param());
      while (peek_punct(",")) {
        take();
        f.params.push_back(param());
      }
    }
    expect_punct(")");
    f.body = block();
    return f;
  }

  Param param() {
    Param p;
    p.loc = here();
    if (at_end() || toks_[pos_].kind != TokenKind::Keyword)
      fail("parameter type (Graph, GNN, container<int>, String, int)");
    const std::string t = take().text;
    if (t == "Graph")
      p.type = ParamType::Graph;
    else if (t == "GNN")
      p.type = ParamType::Gnn;
    else if (t == "String")
      p.type = ParamType::String;
    else if (t == "int")
      p.type = ParamType::Int;
    else if (t == "container") {
      p.type = ParamType::Container;
      expect_punct("<");
      p.element = expect_keyword("int").text;
      expect_punct(">");
    } else {
      --pos_;
      fail("parameter type (Graph, GNN, container<int>, String, int)");
    }
    if (peek_punct("&")) {
      take();
      p.by_ref = true;
    }
    p.name = expect_ident("parameter name").text;
    return p;
  }

  std::vector<Stmt> block() {
    expect_punct("{");
    std::vector<Stmt> body;
    while (!peek_punct("}")) {
      if (at_end()) fail("'}'");
      body.push_back(statement());
    }
    take();
    return body;
  }

  Stmt statement() {
    Stmt s;
    s.loc = here();
    if (peek(TokenKind::Keyword, "for")) {
      s.kind = Stmt::Kind::For;
      s.loop = std::make_shared<ForLoop>(for_loop());
      return s;
    }
    s.kind = Stmt::Kind::Call;
    s.call = expression();
    if (s.call.kind != Expr::Kind::Call)
      throw DslError(ErrorKind::Syntax, s.loc, "expected a method call statement");
    expect_punct(";");
    return s;
  }

  ForLoop for_loop() {
    ForLoop f;
    expect_keyword("for");
    expect_punct("(");
    expect_keyword("int");
    f.var = expect_ident("loop variable").text;
    expect_punct("=");
    f.init = expression();
    expect_punct(";");
    f.cond_var = expect_ident("loop variable").text;
    static constexpr std::string_view rel[] = {"<", "<=", ">", ">=", "!="};
    bool found = false;
    for (auto r : rel) {
      if (peek_punct(r)) {
        f.cond_op = take().text;
        found = true;
        break;
      }
    }
    if (!found) fail("comparison ('<', '<=', '>', '>=', '!=')");
    f.bound = expression();
    expect_punct(";");
    f.step_var = expect_ident("loop variable").text;
    if (peek_punct("++") || peek_punct("--")) {
      f.step_op = take().text;
    } else if (peek_punct("+=") || peek_punct("-=")) {
      f.step_op = take().text;
      f.step_amount = expression();
    } else {
      fail("'++', '--', '+=' or '-='");
    }
    expect_punct(")");
    if (peek_punct("{"))
      f.body = block();
    else
      f.body.push_back(statement());
    return f;
  }

  Expr expression() {
    Expr lhs = unary();
    while (peek_punct("+") || peek_punct("-")) {
      const Token& op = take();
      Expr bin;
      bin.kind = Expr::Kind::Binary;
      bin.text = op.text;
      bin.loc = op.loc;
      bin.args.push_back(std::move(lhs));
      bin.args.push_back(unary());
      lhs = std::move(bin);
    }
    return lhs;
  }

  Expr unary() {
    if (peek_punct("-")) {
      Expr e;
      e.kind = Expr::Kind::Negate;
      e.loc = take().loc;
      e.args.push_back(unary());
      return e;
    }
    return primary();
  }

  std::vector<Expr> call_args() {
    expect_punct("(");
    std::vector<Expr> args;
    if (!peek_punct(")")) {
      args.push_back(expression());
      while (peek_punct(",")) {
        take();
        args.push_back(expression());
      }
    }
    expect_punct(")");
    return args;
  }

  Expr primary() {
    if (at_end()) fail("expression");
    const Token& t = toks_[pos_];
    Expr e;
    e.loc = t.loc;
    switch (t.kind) {
      case TokenKind::Int: e.kind = Expr::Kind::Int; break;
      case TokenKind::Float: e.kind = Expr::Kind::Float; break;
      case TokenKind::String: e.kind = Expr::Kind::String; break;
      case TokenKind::Identifier: {
        take();
        if (peek_punct(".")) {
          take();
          e.kind = Expr::Kind::Call;
          e.receiver = t.text;
          e.text = expect_ident("method name").text;
          e.args = call_args();
        } else if (peek_punct("(")) {
          e.kind = Expr::Kind::Call;
          e.text = t.text;
          e.args = call_args();
        } else {
          e.kind = Expr::Kind::Ident;
          e.text = t.text;
        }
        return e;
      }
      case TokenKind::Punct:
        if (t.text == "(") {
          take();
          Expr inner = expression();
          expect_punct(")");
          return inner;
        }
        fail("expression");
      case TokenKind::Keyword: fail("expression");
    }
    e.text = take().text;
    return e;
  }
};

void print_expr(std::ostream& os, const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::Int:
    case Expr::Kind::Float:
    case Expr::Kind::Ident: os << e.text; return;
    case Expr::Kind::String: os << '"' << e.text << '"'; return;
    case Expr::Kind::Negate: {
      const bool paren = e.args[0].kind == Expr::Kind::Binary;
      os << '-' << (paren ? "(" : "");
      print_expr(os, e.args[0]);
      os << (paren ? ")" : "");
      return;
    }
    case Expr::Kind::Binary: {
      print_expr(os, e.args[0]);
      os << ' ' << e.text << ' ';
      const bool paren = e.args[1].kind == Expr::Kind::Binary;
      if (paren) os << '(';
      print_expr(os, e.args[1]);
      if (paren) os << ')';
      return;
    }
    case Expr::Kind::Call: {
      if (!e.receiver.empty()) os << e.receiver << '.';
      os << e.text << '(';
      for (std::size_t i = 0; i < e.args.size(); ++i) {
        if (i) os << ", ";
        print_expr(os, e.args[i]);
      }
      os << ')';
      return;
    }
  }
}

void print_body(std::ostream& os, const std::vector<Stmt>& body, int depth);

void print_stmt(std::ostream& os, const Stmt& s, int depth) {
  const std::string pad(static_cast<std::size_t>(depth) * 4, ' ');
  if (s.kind == Stmt::Kind::Call) {
    os << pad;
    print_expr(os, s.call);
    os << ";\n";
    return;
  }
  const ForLoop& f = *s.loop;
  os << pad << "for (int " << f.var << " = ";
  print_expr(os, f.init);
  os << "; " << f.cond_var << ' ' << f.cond_op << ' ';
  print_expr(os, f.bound);
  os << "; " << f.step_var;
  if (f.step_amount) {
    os << ' ' << f.step_op << ' ';
    print_expr(os, *f.step_amount);
  } else {
    os << f.step_op;
  }
  os << ") {\n";
  print_body(os, f.body, depth + 1);
  os << pad << "}\n";
}

void print_body(std::ostream& os, const std::vector<Stmt>& body, int depth) {
  for (const Stmt& s : body) print_stmt(os, s, depth);
}

std::string type_name(const Param& p) {
  switch (p.type) {
    case ParamType::Graph: return "Graph";
    case ParamType::Gnn: return "GNN";
    case ParamType::String: return "String";
    case ParamType::Int: return "int";
    case ParamType::Container: return "container<" + p.element + ">";
  }
  return "?";
}

}  // namespace

Ast parse(const std::vector<Token>& tokens) { return Parser(tokens).program(); }

Ast parse(std::string_view src) { return parse(tokenize(src)); }

std::string pretty_print(const Ast& ast) {
  std::ostringstream os;
  for (std::size_t i = 0; i < ast.functions.size(); ++i) {
    const Function& f = ast.functions[i];
    if (i) os << '\n';
    os << "function " << f.name << '(';
    for (std::size_t k = 0; k < f.params.size(); ++k) {
      if (k) os << ", ";
      os << type_name(f.params[k]) << (f.params[k].by_ref ? "& " : " ") << f.params[k].name;
    }
    os << ") {\n";
    print_body(os, f.body, 1);
    os << "}\n";
  }
  return os.str();
}

}  // namespace gnnforge::dsl
