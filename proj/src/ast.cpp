#include "mli/ast.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace mli::ast {

int dist_arity(DistFamily f) {
  switch (f) {
    case DistFamily::Gaussian: return 2;
    case DistFamily::Uniform: return 2;
    case DistFamily::Bernoulli: return 1;
  }
  return 0;
}

int fn_arity(FnName f) {
  switch (f) {
    case FnName::Add:
    case FnName::Mul:
    case FnName::Rosenbrock: return 2;
    case FnName::Sqrt:
    case FnName::Sigmoid: return 1;
  }
  return 0;
}

const char* dist_name(DistFamily f) {
  switch (f) {
    case DistFamily::Gaussian: return "gaussian";
    case DistFamily::Uniform: return "uniform";
    case DistFamily::Bernoulli: return "bernoulli";
  }
  return "?";
}

const char* fn_name_str(FnName f) {
  switch (f) {
    case FnName::Add: return "add";
    case FnName::Mul: return "mul";
    case FnName::Sqrt: return "sqrt";
    case FnName::Sigmoid: return "sigmoid";
    case FnName::Rosenbrock: return "rosenbrock";
  }
  return "?";
}

std::optional<DistFamily> dist_from_name(const std::string& s) {
  if (s == "gaussian") return DistFamily::Gaussian;
  if (s == "uniform") return DistFamily::Uniform;
  if (s == "bernoulli") return DistFamily::Bernoulli;
  return std::nullopt;
}

std::optional<FnName> fn_from_name(const std::string& s) {
  if (s == "add") return FnName::Add;
  if (s == "mul") return FnName::Mul;
  if (s == "sqrt") return FnName::Sqrt;
  if (s == "sigmoid") return FnName::Sigmoid;
  if (s == "rosenbrock") return FnName::Rosenbrock;
  return std::nullopt;
}

Expr Expr::make_const(double v) {
  Expr e;
  e.kind = Kind::Const;
  e.constant = v;
  return e;
}

Expr Expr::make_var(std::string name, bool indexed) {
  Expr e;
  e.kind = Kind::VarRef;
  e.var = std::move(name);
  e.indexed = indexed;
  return e;
}

Expr Expr::make_call(FnName fn, std::vector<Expr> args) {
  Expr e;
  e.kind = Kind::Call;
  e.fn = fn;
  e.args = std::move(args);
  return e;
}

Expr Expr::make_if(CondKind cond, Expr lhs, Expr rhs, Expr then_e, Expr else_e) {
  Expr e;
  e.kind = Kind::IfElse;
  e.cond = cond;
  e.args = {std::move(lhs), std::move(rhs), std::move(then_e), std::move(else_e)};
  return e;
}

Statement Statement::sample(std::string target, DistFamily dist, std::vector<Expr> args) {
  Statement s;
  s.kind = Kind::Sample;
  s.target = std::move(target);
  s.dist = dist;
  s.args = std::move(args);
  return s;
}

Statement Statement::deterministic(std::string target, Expr expr) {
  Statement s;
  s.kind = Kind::Deterministic;
  s.target = std::move(target);
  s.expr = std::move(expr);
  return s;
}

Statement Statement::plate(int total, std::vector<Statement> body) {
  Statement s;
  s.kind = Kind::Plate;
  s.plate_total = total;
  s.body = std::move(body);
  return s;
}

bool Program::has_plate() const { return plate_position() >= 0; }

const Statement* Program::plate() const {
  int p = plate_position();
  return p < 0 ? nullptr : &statements[p];
}

int Program::plate_position() const {
  for (size_t i = 0; i < statements.size(); ++i)
    if (statements[i].kind == Statement::Kind::Plate) return static_cast<int>(i);
  return -1;
}

std::vector<std::string> Program::variable_order() const {
  std::vector<std::string> out;
  for (const auto& s : statements) {
    if (s.kind == Statement::Kind::Plate) {
      for (const auto& b : s.body) out.push_back(b.target);
    } else {
      out.push_back(s.target);
    }
  }
  return out;
}

void collect_refs(const Expr& e, std::vector<std::string>& out) {
  switch (e.kind) {
    case Expr::Kind::Const: return;
    case Expr::Kind::VarRef:
      out.push_back(e.var);
      return;
    case Expr::Kind::Call:
    case Expr::Kind::IfElse:
      for (const auto& a : e.args) collect_refs(a, out);
      return;
  }
}

std::vector<std::string> statement_refs(const Statement& s) {
  std::vector<std::string> out;
  if (s.kind == Statement::Kind::Sample) {
    for (const auto& a : s.args) collect_refs(a, out);
  } else if (s.kind == Statement::Kind::Deterministic) {
    collect_refs(s.expr, out);
  }
  return out;
}

namespace {

bool is_int_literal(const Expr& e) {
  return e.kind == Expr::Kind::Const && e.constant == std::floor(e.constant);
}

void validate_expr(const Expr& e, int stmt_index, const std::set<std::string>& in_scope,
                   const std::set<std::string>& plate_scope, bool inside_plate,
                   std::vector<Violation>& out) {
  switch (e.kind) {
    case Expr::Kind::Const:
      if (!std::isfinite(e.constant))
        out.push_back({stmt_index, "non-finite constant"});
      return;
    case Expr::Kind::VarRef:
      if (e.indexed) {
        if (!inside_plate)
          out.push_back({stmt_index, "indexed reference '" + e.var + "[i]' outside a plate"});
        else if (!plate_scope.count(e.var))
          out.push_back({stmt_index, "undefined reference '" + e.var + "[i]'"});
      } else if (!in_scope.count(e.var)) {
        out.push_back({stmt_index, "undefined reference '" + e.var + "'"});
      }
      return;
    case Expr::Kind::Call:
      if (static_cast<int>(e.args.size()) != fn_arity(e.fn))
        out.push_back({stmt_index, std::string("arity mismatch for ") + fn_name_str(e.fn)});
      for (const auto& a : e.args)
        validate_expr(a, stmt_index, in_scope, plate_scope, inside_plate, out);
      return;
    case Expr::Kind::IfElse: {
      if (e.args.size() != 4) {
        out.push_back({stmt_index, "malformed if-expression"});
        return;
      }
      if (e.cond == CondKind::Eq && !is_int_literal(e.args[1]))
        out.push_back({stmt_index, "== comparison requires an integer literal right-hand side"});
      for (const auto& a : e.args)
        validate_expr(a, stmt_index, in_scope, plate_scope, inside_plate, out);
      return;
    }
  }
}

void validate_assignment(const Statement& s, int stmt_index, std::set<std::string>& in_scope,
                         std::set<std::string>& plate_scope, bool inside_plate,
                         std::set<std::string>& all_names, std::vector<Violation>& out) {
  if (s.target.empty()) {
    out.push_back({stmt_index, "statement with empty target name"});
    return;
  }
  if (all_names.count(s.target))
    out.push_back({stmt_index, "redefinition of '" + s.target + "'"});
  if (s.kind == Statement::Kind::Sample) {
    if (static_cast<int>(s.args.size()) != dist_arity(s.dist))
      out.push_back({stmt_index, std::string("arity mismatch for ") + dist_name(s.dist)});
    for (const auto& a : s.args)
      validate_expr(a, stmt_index, in_scope, plate_scope, inside_plate, out);
  } else {
    validate_expr(s.expr, stmt_index, in_scope, plate_scope, inside_plate, out);
  }
  all_names.insert(s.target);
  if (inside_plate)
    plate_scope.insert(s.target);
  else
    in_scope.insert(s.target);
}

}  // namespace

std::vector<Violation> validate(const Program& program) {
  std::vector<Violation> out;
  std::set<std::string> in_scope;     // out-of-plate variables defined so far
  std::set<std::string> all_names;    // every target seen (SSA check)
  int plates_seen = 0;

  for (size_t i = 0; i < program.statements.size(); ++i) {
    const Statement& s = program.statements[i];
    int idx = static_cast<int>(i);
    if (s.kind == Statement::Kind::Plate) {
      ++plates_seen;
      if (plates_seen > 1) out.push_back({idx, "more than one plate"});
      if (s.plate_total < 1) out.push_back({idx, "plate total must be positive"});
      if (s.body.empty()) out.push_back({idx, "empty plate body"});
      std::set<std::string> plate_scope;
      for (const auto& b : s.body) {
        if (b.kind == Statement::Kind::Plate) {
          out.push_back({idx, "nested plate"});
          continue;
        }
        validate_assignment(b, idx, in_scope, plate_scope, true, all_names, out);
      }
    } else {
      std::set<std::string> no_plate;
      validate_assignment(s, idx, in_scope, no_plate, false, all_names, out);
    }
  }
  return out;
}

bool is_valid(const Program& program) { return validate(program).empty(); }

DepGraph dependency_graph(const Program& program) {
  auto violations = validate(program);
  if (!violations.empty())
    throw std::invalid_argument("dependency_graph: invalid program: " + violations.front().message);

  DepGraph g;
  g.nodes = program.variable_order();
  auto add_edges = [&g](const Statement& s) {
    for (const auto& parent : statement_refs(s)) g.edges.insert({parent, s.target});
  };
  for (const auto& s : program.statements) {
    if (s.kind == Statement::Kind::Plate) {
      for (const auto& b : s.body) add_edges(b);
    } else {
      add_edges(s);
    }
  }
  return g;
}

namespace {

bool literal_in_01(const Expr& e) {
  return e.kind == Expr::Kind::Const && (e.constant == 0.0 || e.constant == 1.0);
}

ValueType infer_type(const Statement& s) {
  if (s.kind == Statement::Kind::Sample)
    return s.dist == DistFamily::Bernoulli ? ValueType::Binary : ValueType::Continuous;
  if (s.kind == Statement::Kind::Deterministic && s.expr.kind == Expr::Kind::IfElse &&
      s.expr.args.size() == 4 && literal_in_01(s.expr.args[2]) && literal_in_01(s.expr.args[3]))
    return ValueType::Binary;
  return ValueType::Continuous;
}

}  // namespace

Program infer_value_types(const Program& program) {
  Program out = program;
  for (auto& s : out.statements) {
    if (s.kind == Statement::Kind::Plate) {
      for (auto& b : s.body) b.value_type = infer_type(b);
    } else {
      s.value_type = infer_type(s);
    }
  }
  return out;
}

}  // namespace mli::ast
