#pragma once

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "mli/ast.hpp"
#include "mli/trace.hpp"

namespace mli::text {

struct ParseError : std::runtime_error {
  int line;
  int col;
  ParseError(int line_, int col_, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line_) + ", col " + std::to_string(col_) +
                           ": " + msg),
        line(line_),
        col(col_) {}
};

// Lexer shared by the parser and the tokenizer.
enum class Tok {
  Ident, Number, Mask,
  Tilde, Assign, Arrow,
  LParen, RParen, Comma, Colon, LBracket, RBracket,
  Plus, Star, Gt, EqEq,
  Newline, End,
};

struct Lexeme {
  Tok kind;
  std::string text;
  double value = 0.0;  // Number payload
  int line = 0;
  int col = 0;
};

std::vector<Lexeme> lex(const std::string& text);

// Canonical decimal with 6 significant digits, no scientific notation.
std::string format_number(double v);

struct ParseResult {
  ast::Program program;
  Trace trace;
};

// Annotated program text -> AST + annotation values/mask flags.
// Value types are inferred before returning.
ParseResult parse(const std::string& text);

// Canonical text: one statement per line, single spaces, 6-significant-digit
// numbers, masked lines ending "-> <mask>". Plates render their header plus
// only the trace's minibatch members. Throws std::invalid_argument when the
// trace misses an unmasked value.
std::string render(const ast::Program& program, const Trace& trace,
                   const std::set<std::string>& masks);
inline std::string render(const ast::Program& program, const Trace& trace) {
  return render(program, trace, trace.masked);
}

// Interchange form for program corpora: every assignment annotated <mask>.
std::string render_masked_all(const ast::Program& program, int minibatch_k = 0);

std::string render_expr(const ast::Expr& e, int plate_index = 0);

// Splits a corpus file into "---"-separated blocks, dropping empties.
std::vector<std::string> split_blocks(const std::string& text);

}  // namespace mli::text
