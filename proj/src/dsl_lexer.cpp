#include <array>
#include <cctype>

#include "gnnforge/dsl.hpp"

namespace gnnforge::dsl {

std::string to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::Lexical: return "lexical error";
    case ErrorKind::Syntax: return "syntax error";
    case ErrorKind::UnknownMethod: return "unknown method";
    case ErrorKind::WrongArity: return "wrong arity";
    case ErrorKind::UnboundIdentifier: return "unbound identifier";
    case ErrorKind::BadArgument: return "bad argument";
    case ErrorKind::MissingForward: return "missing forwardPass";
    case ErrorKind::MissingBackward: return "missing backPropagation";
    case ErrorKind::MissingOptimizer: return "missing optimizer";
    case ErrorKind::ForwardOrder: return "forward order";
    case ErrorKind::BackwardOrder: return "backward order";
    case ErrorKind::StatementOrder: return "statement order";
    case ErrorKind::Structure: return "program structure";
  }
  return "error";
}

DslError::DslError(ErrorKind kind, SourceLoc loc, const std::string& what)
    : std::runtime_error(std::to_string(loc.line) + ":" + std::to_string(loc.col) + ": " + to_string(kind) + ": " +
                         what),
      kind_(kind),
      loc_(loc),
      detail_(what) {}

namespace {

constexpr std::array<std::string_view, 7> kKeywords = {"function", "for", "int", "Graph", "GNN", "container", "String"};

// Longest match first.
constexpr std::array<std::string_view, 21> kPunct = {"++", "--", "+=", "-=", "<=", ">=", "==", "!=", "(", ")", "{",
                                                     "}",  ";",  ",",  ".",  "&",  "=",  "<",  ">",  "+", "-"};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> out;
  std::size_t i = 0, line = 1, col = 1;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
      ++i;
    }
  };

  while (i < src.size()) {
    const char c = src[i];
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      advance(1);
      continue;
    }
    if (src.substr(i, 2) == "//") {
      while (i < src.size() && src[i] != '\n') advance(1);
      continue;
    }
    const SourceLoc loc{line, col};
    if (ident_start(c)) {
      std::size_t j = i;
      while (j < src.size() && ident_char(src[j])) ++j;
      std::string word(src.substr(i, j - i));
      bool kw = false;
      for (auto k : kKeywords) kw = kw || word == k;
      out.push_back({kw ? TokenKind::Keyword : TokenKind::Identifier, std::move(word), loc});
      advance(j - i);
      continue;
    }
    if (digit(c) || (c == '.' && i + 1 < src.size() && digit(src[i + 1]))) {
      std::size_t j = i;
      bool is_float = false;
      while (j < src.size() && digit(src[j])) ++j;
      if (j < src.size() && src[j] == '.') {
        is_float = true;
        ++j;
        while (j < src.size() && digit(src[j])) ++j;
      }
      if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
        if (k < src.size() && digit(src[k])) {
          is_float = true;
          j = k;
          while (j < src.size() && digit(src[j])) ++j;
        }
      }
      if (j < src.size() && ident_char(src[j]))
        throw DslError(ErrorKind::Lexical, {line, col + (j - i)},
                       "malformed number '" + std::string(src.substr(i, j - i + 1)) + "'");
      out.push_back({is_float ? TokenKind::Float : TokenKind::Int, std::string(src.substr(i, j - i)), loc});
      advance(j - i);
      continue;
    }
    if (c == '"') {
      std::size_t j = i + 1;
      while (j < src.size() && src[j] != '"' && src[j] != '\n') ++j;
      if (j >= src.size() || src[j] != '"') throw DslError(ErrorKind::Lexical, loc, "unterminated string literal");
      out.push_back({TokenKind::String, std::string(src.substr(i + 1, j - i - 1)), loc});
      advance(j - i + 1);
      continue;
    }
    bool matched = false;
    for (auto p : kPunct) {
      if (src.substr(i, p.size()) == p) {
        out.push_back({TokenKind::Punct, std::string(p), loc});
        advance(p.size());
        matched = true;
        break;
      }
    }
    if (!matched) {
      std::string shown = std::isprint(static_cast<unsigned char>(c)) ? std::string(1, c)
                                                                     : "\\x" + std::to_string(static_cast<int>(
                                                                                   static_cast<unsigned char>(c)));
      throw DslError(ErrorKind::Lexical, loc, "illegal character '" + shown + "'");
    }
  }
  return out;
}

}  // namespace gnnforge::dsl
