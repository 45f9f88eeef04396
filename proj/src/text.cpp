#include "mli/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <sstream>

namespace mli::text {

namespace {

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool digit(char c) { return c >= '0' && c <= '9'; }

}  // namespace

std::vector<Lexeme> lex(const std::string& text) {
  std::vector<Lexeme> out;
  int line = 1, col = 1;
  size_t i = 0;
  const size_t n = text.size();
  auto push = [&](Tok k, std::string t, double v = 0.0) {
    out.push_back({k, std::move(t), v, line, col});
  };
  while (i < n) {
    char c = text[i];
    if (c == ' ' || c == '\t' || c == '\r') {
      ++i;
      ++col;
      continue;
    }
    if (c == '\n') {
      push(Tok::Newline, "\n");
      ++i;
      ++line;
      col = 1;
      continue;
    }
    int start_col = col;
    if (ident_start(c)) {
      size_t j = i;
      while (j < n && ident_char(text[j])) ++j;
      out.push_back({Tok::Ident, text.substr(i, j - i), 0.0, line, start_col});
      col += static_cast<int>(j - i);
      i = j;
      continue;
    }
    if (digit(c) || (c == '-' && i + 1 < n && (digit(text[i + 1]) || text[i + 1] == '.'))) {
      size_t j = i;
      if (text[j] == '-') ++j;
      size_t digits_begin = j;
      while (j < n && digit(text[j])) ++j;
      if (j < n && text[j] == '.') {
        ++j;
        size_t frac_begin = j;
        while (j < n && digit(text[j])) ++j;
        if (j == frac_begin) throw ParseError(line, start_col, "malformed number");
      }
      if (j == digits_begin || (j < n && (ident_char(text[j]) || text[j] == '.')))
        throw ParseError(line, start_col, "malformed number");
      std::string lit = text.substr(i, j - i);
      out.push_back({Tok::Number, lit, std::strtod(lit.c_str(), nullptr), line, start_col});
      col += static_cast<int>(j - i);
      i = j;
      continue;
    }
    if (c == '<') {
      if (text.compare(i, 6, "<mask>") == 0) {
        push(Tok::Mask, "<mask>");
        i += 6;
        col += 6;
        continue;
      }
      throw ParseError(line, col, "unexpected '<'");
    }
    if (c == '-') {
      if (i + 1 < n && text[i + 1] == '>') {
        push(Tok::Arrow, "->");
        i += 2;
        col += 2;
        continue;
      }
      throw ParseError(line, col, "unexpected '-'");
    }
    if (c == '=') {
      if (i + 1 < n && text[i + 1] == '=') {
        push(Tok::EqEq, "==");
        i += 2;
        col += 2;
        continue;
      }
      push(Tok::Assign, "=");
      ++i;
      ++col;
      continue;
    }
    switch (c) {
      case '~': push(Tok::Tilde, "~"); break;
      case '(': push(Tok::LParen, "("); break;
      case ')': push(Tok::RParen, ")"); break;
      case ',': push(Tok::Comma, ","); break;
      case ':': push(Tok::Colon, ":"); break;
      case '[': push(Tok::LBracket, "["); break;
      case ']': push(Tok::RBracket, "]"); break;
      case '+': push(Tok::Plus, "+"); break;
      case '*': push(Tok::Star, "*"); break;
      case '>': push(Tok::Gt, ">"); break;
      default:
        throw ParseError(line, col, std::string("unexpected character '") + c + "'");
    }
    ++i;
    ++col;
  }
  out.push_back({Tok::End, "", 0.0, line, col});
  return out;
}

std::string format_number(double v) {
  if (!std::isfinite(v)) throw std::invalid_argument("format_number: non-finite value");
  if (v == 0.0) return "0";
  bool neg = v < 0;
  double a = std::fabs(v);
  int e = static_cast<int>(std::floor(std::log10(a)));
  char buf[64];
  std::string s;
  if (e >= 6) {
    double scale = std::pow(10.0, e - 5);
    double r = std::round(a / scale) * scale;
    std::snprintf(buf, sizeof buf, "%.0f", r);
    s = buf;
  } else {
    int decimals = 5 - e;
    if (decimals > 17) decimals = 17;
    std::snprintf(buf, sizeof buf, "%.*f", decimals, a);
    s = buf;
    if (s.find('.') != std::string::npos) {
      size_t last = s.find_last_not_of('0');
      if (s[last] == '.') --last;
      s.erase(last + 1);
    }
  }
  if (s == "0") return "0";
  return neg ? "-" + s : s;
}

namespace {

const char* kReserved[] = {"if", "else", "or", "plate", "gaussian", "uniform",
                           "bernoulli", "add", "mul", "sqrt", "sigmoid", "rosenbrock"};

bool reserved(const std::string& s) {
  for (const char* k : kReserved)
    if (s == k) return true;
  return false;
}

class Parser {
 public:
  explicit Parser(const std::string& text) : toks_(lex(text)) {}

  ParseResult run() {
    ParseResult res;
    skip_newlines();
    while (!at(Tok::End)) {
      if (at_ident("plate"))
        parse_plate(res);
      else
        parse_statement_line(res, /*inside_plate=*/false, /*plate_index=*/0, nullptr);
      skip_newlines();
    }
    res.program = ast::infer_value_types(res.program);
    return res;
  }

 private:
  std::vector<Lexeme> toks_;
  size_t pos_ = 0;

  const Lexeme& cur() const { return toks_[pos_]; }
  bool at(Tok k) const { return cur().kind == k; }
  bool at_ident(const char* s) const { return at(Tok::Ident) && cur().text == s; }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(cur().line, cur().col, msg);
  }

  Lexeme expect(Tok k, const char* what) {
    if (!at(k)) fail(std::string("expected ") + what);
    return toks_[pos_++];
  }

  bool accept(Tok k) {
    if (!at(k)) return false;
    ++pos_;
    return true;
  }

  void skip_newlines() {
    while (at(Tok::Newline)) ++pos_;
  }

  void end_line(const char* what) {
    if (!at(Tok::Newline) && !at(Tok::End)) fail(std::string("unexpected token after ") + what);
  }

  // plate(<n>): followed by indexed member lines.
  void parse_plate(ParseResult& res) {
    ++pos_;  // 'plate'
    expect(Tok::LParen, "'('");
    Lexeme num = expect(Tok::Number, "plate size");
    if (num.value < 1 || num.value != std::floor(num.value))
      throw ParseError(num.line, num.col, "plate size must be a positive integer");
    int total = static_cast<int>(num.value);
    expect(Tok::RParen, "')'");
    expect(Tok::Colon, "':'");
    end_line("plate header");
    skip_newlines();

    struct MemberLine {
      int index;
      ast::Statement stmt;
      int line;
    };
    std::vector<MemberLine> members;
    while (at(Tok::Ident) && !reserved(cur().text) && toks_[pos_ + 1].kind == Tok::LBracket) {
      int line_no = cur().line;
      int index = 0;
      ast::Statement st = parse_statement_line(res, true, 0, &index);
      members.push_back({index, std::move(st), line_no});
      skip_newlines();
    }
    if (members.empty()) fail("plate with no member lines");

    // Group iteration-major blocks and rebuild the body template.
    std::vector<int> indices;
    std::vector<std::vector<const MemberLine*>> blocks;
    for (const auto& m : members) {
      if (indices.empty() || indices.back() != m.index) {
        for (int seen : indices)
          if (seen == m.index)
            throw ParseError(m.line, 1, "plate iterations must be contiguous");
        indices.push_back(m.index);
        blocks.emplace_back();
      }
      blocks.back().push_back(&m);
    }
    const auto& first = blocks.front();
    for (size_t b = 1; b < blocks.size(); ++b) {
      if (blocks[b].size() != first.size())
        throw ParseError(blocks[b].front()->line, 1, "inconsistent plate body");
      for (size_t k = 0; k < first.size(); ++k)
        if (!same_template(first[k]->stmt, blocks[b][k]->stmt))
          throw ParseError(blocks[b][k]->line, 1, "inconsistent plate body");
    }

    std::vector<ast::Statement> body;
    for (const auto* m : first) body.push_back(m->stmt);
    ast::Statement plate = ast::Statement::plate(total, std::move(body));
    res.program.statements.push_back(std::move(plate));

    std::sort(indices.begin(), indices.end());
    for (int idx : indices)
      if (idx < 1 || idx > total)
        fail("plate index out of range");
    res.trace.minibatch = Trace::Minibatch{indices, total};
  }

  static bool same_expr(const ast::Expr& a, const ast::Expr& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
      case ast::Expr::Kind::Const: return a.constant == b.constant;
      case ast::Expr::Kind::VarRef: return a.var == b.var && a.indexed == b.indexed;
      case ast::Expr::Kind::Call:
        if (a.fn != b.fn || a.args.size() != b.args.size()) return false;
        break;
      case ast::Expr::Kind::IfElse:
        if (a.cond != b.cond || a.args.size() != b.args.size()) return false;
        break;
    }
    for (size_t i = 0; i < a.args.size(); ++i)
      if (!same_expr(a.args[i], b.args[i])) return false;
    return true;
  }

  static bool same_template(const ast::Statement& a, const ast::Statement& b) {
    if (a.kind != b.kind || a.target != b.target) return false;
    if (a.kind == ast::Statement::Kind::Sample) {
      if (a.dist != b.dist || a.args.size() != b.args.size()) return false;
      for (size_t i = 0; i < a.args.size(); ++i)
        if (!same_expr(a.args[i], b.args[i])) return false;
      return true;
    }
    return same_expr(a.expr, b.expr);
  }

  // Parses `target op rhs -> annotation`. Inside a plate the target carries
  // an index and the parsed statement keeps the template (base) names.
  ast::Statement parse_statement_line(ParseResult& res, bool inside_plate, int, int* index_out) {
    Lexeme name = expect(Tok::Ident, "variable name");
    if (reserved(name.text))
      throw ParseError(name.line, name.col, "reserved word '" + name.text + "' as variable name");

    int index = 0;
    std::string key = name.text;
    if (at(Tok::LBracket)) {
      if (!inside_plate) fail("indexed assignment outside a plate");
      ++pos_;
      Lexeme num = expect(Tok::Number, "plate index");
      if (num.value < 1 || num.value != std::floor(num.value))
        throw ParseError(num.line, num.col, "plate index must be a positive integer");
      index = static_cast<int>(num.value);
      expect(Tok::RBracket, "']'");
      key = member_name(name.text, index);
    } else if (inside_plate) {
      fail("plate member line without an index");
    }
    if (index_out) *index_out = index;

    ast::Statement st;
    if (accept(Tok::Tilde)) {
      Lexeme dist = expect(Tok::Ident, "distribution name");
      auto fam = ast::dist_from_name(dist.text);
      if (!fam) {
        if (ast::fn_from_name(dist.text))
          throw ParseError(dist.line, dist.col,
                           "function '" + dist.text + "' used as a distribution");
        throw ParseError(dist.line, dist.col, "unknown distribution '" + dist.text + "'");
      }
      expect(Tok::LParen, "'('");
      std::vector<ast::Expr> args;
      if (!at(Tok::RParen)) {
        args.push_back(parse_expr(inside_plate, index));
        while (accept(Tok::Comma)) args.push_back(parse_expr(inside_plate, index));
      }
      expect(Tok::RParen, "')'");
      st = ast::Statement::sample(name.text, *fam, std::move(args));
    } else if (accept(Tok::Assign)) {
      st = ast::Statement::deterministic(name.text, parse_expr(inside_plate, index));
    } else {
      fail("expected '~' or '=' after variable name");
    }

    expect(Tok::Arrow, "'->'");
    if (at(Tok::Number)) {
      res.trace.values[key] = cur().value;
      ++pos_;
    } else if (at(Tok::Mask)) {
      res.trace.masked.insert(key);
      ++pos_;
    } else {
      fail("expected a number or <mask> after '->'");
    }
    end_line("annotation");

    if (!inside_plate) res.program.statements.push_back(st);
    return st;
  }

  ast::Expr parse_expr(bool inside_plate, int index) {
    ast::Expr e = parse_term(inside_plate, index);
    while (accept(Tok::Plus))
      e = ast::Expr::make_call(ast::FnName::Add, {std::move(e), parse_term(inside_plate, index)});
    return e;
  }

  ast::Expr parse_term(bool inside_plate, int index) {
    ast::Expr e = parse_atom(inside_plate, index);
    while (accept(Tok::Star))
      e = ast::Expr::make_call(ast::FnName::Mul, {std::move(e), parse_atom(inside_plate, index)});
    return e;
  }

  ast::Expr parse_atom(bool inside_plate, int index) {
    if (at(Tok::Number)) {
      double v = cur().value;
      ++pos_;
      return ast::Expr::make_const(v);
    }
    if (accept(Tok::LParen)) {
      ast::Expr e = parse_expr(inside_plate, index);
      expect(Tok::RParen, "')'");
      return e;
    }
    if (at_ident("if")) return parse_if(inside_plate, index);
    if (at(Tok::Ident)) {
      Lexeme name = toks_[pos_++];
      if (at(Tok::LParen)) {
        auto fn = ast::fn_from_name(name.text);
        if (!fn) {
          if (ast::dist_from_name(name.text))
            throw ParseError(name.line, name.col,
                             "distribution '" + name.text + "' used as a function (use '~')");
          throw ParseError(name.line, name.col, "unknown function '" + name.text + "'");
        }
        ++pos_;  // '('
        std::vector<ast::Expr> args;
        if (!at(Tok::RParen)) {
          args.push_back(parse_expr(inside_plate, index));
          while (accept(Tok::Comma)) args.push_back(parse_expr(inside_plate, index));
        }
        expect(Tok::RParen, "')'");
        return ast::Expr::make_call(*fn, std::move(args));
      }
      if (at(Tok::LBracket)) {
        if (!inside_plate)
          throw ParseError(name.line, name.col, "indexed reference outside a plate");
        ++pos_;
        Lexeme num = expect(Tok::Number, "plate index");
        expect(Tok::RBracket, "']'");
        if (static_cast<int>(num.value) != index)
          throw ParseError(num.line, num.col, "reference to a different plate iteration");
        return ast::Expr::make_var(name.text, /*indexed=*/true);
      }
      if (reserved(name.text))
        throw ParseError(name.line, name.col, "unexpected keyword '" + name.text + "'");
      return ast::Expr::make_var(name.text);
    }
    fail("expected an expression");
  }

  ast::Expr parse_if(bool inside_plate, int index) {
    ++pos_;  // 'if'
    expect(Tok::LParen, "'('");
    ast::Expr lhs = parse_expr(inside_plate, index);
    ast::CondKind cond;
    ast::Expr rhs;
    if (accept(Tok::Gt)) {
      cond = ast::CondKind::Gt;
      rhs = parse_expr(inside_plate, index);
    } else if (accept(Tok::EqEq)) {
      cond = ast::CondKind::Eq;
      rhs = parse_expr(inside_plate, index);
    } else if (at_ident("or")) {
      ++pos_;
      cond = ast::CondKind::Or;
      rhs = parse_expr(inside_plate, index);
    } else {
      fail("expected '>', '==' or 'or' in if-condition");
    }
    expect(Tok::RParen, "')'");
    ast::Expr then_e = parse_expr(inside_plate, index);
    if (!at_ident("else")) fail("expected 'else'");
    ++pos_;
    ast::Expr else_e = parse_expr(inside_plate, index);
    return ast::Expr::make_if(cond, std::move(lhs), std::move(rhs), std::move(then_e),
                              std::move(else_e));
  }
};

bool needs_parens(const ast::Expr& e) {
  return (e.kind == ast::Expr::Kind::Call &&
          (e.fn == ast::FnName::Add || e.fn == ast::FnName::Mul)) ||
         e.kind == ast::Expr::Kind::IfElse;
}

std::string operand(const ast::Expr& e, int idx) {
  std::string s = render_expr(e, idx);
  return needs_parens(e) ? "(" + s + ")" : s;
}

}  // namespace

std::string render_expr(const ast::Expr& e, int plate_index) {
  switch (e.kind) {
    case ast::Expr::Kind::Const: return format_number(e.constant);
    case ast::Expr::Kind::VarRef:
      return e.indexed ? member_name(e.var, plate_index) : e.var;
    case ast::Expr::Kind::Call: {
      if (e.fn == ast::FnName::Add || e.fn == ast::FnName::Mul) {
        const char* op = e.fn == ast::FnName::Add ? " + " : " * ";
        return operand(e.args[0], plate_index) + op + operand(e.args[1], plate_index);
      }
      std::string s = std::string(ast::fn_name_str(e.fn)) + "(";
      for (size_t i = 0; i < e.args.size(); ++i) {
        if (i) s += ", ";
        s += render_expr(e.args[i], plate_index);
      }
      return s + ")";
    }
    case ast::Expr::Kind::IfElse: {
      const char* op = e.cond == ast::CondKind::Gt ? " > "
                       : e.cond == ast::CondKind::Eq ? " == "
                                                     : " or ";
      return "if (" + render_expr(e.args[0], plate_index) + op +
             render_expr(e.args[1], plate_index) + ") " + operand(e.args[2], plate_index) +
             " else " + operand(e.args[3], plate_index);
    }
  }
  return "";
}

namespace {

std::string render_rhs(const ast::Statement& s, int idx) {
  if (s.kind == ast::Statement::Kind::Sample) {
    std::string out = std::string(ast::dist_name(s.dist)) + "(";
    for (size_t i = 0; i < s.args.size(); ++i) {
      if (i) out += ", ";
      out += render_expr(s.args[i], idx);
    }
    return out + ")";
  }
  return render_expr(s.expr, idx);
}

std::string annotation(const std::string& key, const Trace& trace,
                       const std::set<std::string>& masks) {
  if (masks.count(key)) return "<mask>";
  auto it = trace.values.find(key);
  if (it == trace.values.end())
    throw std::invalid_argument("render: trace missing value for '" + key + "'");
  return format_number(it->second);
}

}  // namespace

std::string render(const ast::Program& program, const Trace& trace,
                   const std::set<std::string>& masks) {
  std::ostringstream out;
  for (const auto& s : program.statements) {
    if (s.kind == ast::Statement::Kind::Plate) {
      if (!trace.minibatch)
        throw std::invalid_argument("render: trace has no plate minibatch");
      out << "plate(" << s.plate_total << "):\n";
      for (int idx : trace.minibatch->indices) {
        for (const auto& b : s.body) {
          std::string key = member_name(b.target, idx);
          out << "  " << key << (b.kind == ast::Statement::Kind::Sample ? " ~ " : " = ")
              << render_rhs(b, idx) << " -> " << annotation(key, trace, masks) << "\n";
        }
      }
    } else {
      out << s.target << (s.kind == ast::Statement::Kind::Sample ? " ~ " : " = ")
          << render_rhs(s, 0) << " -> " << annotation(s.target, trace, masks) << "\n";
    }
  }
  return out.str();
}

std::string render_masked_all(const ast::Program& program, int minibatch_k) {
  Trace t;
  for (const auto& s : program.statements) {
    if (s.kind == ast::Statement::Kind::Plate) {
      int k = minibatch_k > 0 ? std::min(minibatch_k, s.plate_total) : s.plate_total;
      Trace::Minibatch mb;
      mb.total = s.plate_total;
      for (int i = 1; i <= k; ++i) mb.indices.push_back(i);
      t.minibatch = mb;
      for (int i = 1; i <= k; ++i)
        for (const auto& b : s.body) t.masked.insert(member_name(b.target, i));
    } else {
      t.masked.insert(s.target);
    }
  }
  return render(program, t, t.masked);
}

ParseResult parse(const std::string& text) { return Parser(text).run(); }

std::vector<std::string> split_blocks(const std::string& text) {
  std::vector<std::string> blocks;
  std::istringstream in(text);
  std::string line, cur;
  auto flush = [&] {
    if (cur.find_first_not_of(" \t\r\n") != std::string::npos) blocks.push_back(cur);
    cur.clear();
  };
  while (std::getline(in, line)) {
    std::string trimmed = line;
    trimmed.erase(0, trimmed.find_first_not_of(" \t\r"));
    trimmed.erase(trimmed.find_last_not_of(" \t\r") + 1);
    if (trimmed == "---") {
      flush();
    } else {
      cur += line;
      cur += "\n";
    }
  }
  flush();
  return blocks;
}

}  // namespace mli::text
