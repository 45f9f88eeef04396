#pragma once

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace mli::ast {

enum class ValueType { Continuous, Binary };

enum class DistFamily { Gaussian, Uniform, Bernoulli };
enum class FnName { Add, Mul, Sqrt, Sigmoid, Rosenbrock };
enum class CondKind { Gt, Eq, Or };

int dist_arity(DistFamily f);
int fn_arity(FnName f);
const char* dist_name(DistFamily f);
const char* fn_name_str(FnName f);
std::optional<DistFamily> dist_from_name(const std::string& s);
std::optional<FnName> fn_from_name(const std::string& s);

// Expression tree. IfElse packs its pieces into args as
// [cond_lhs, cond_rhs, then, else] with `cond` giving the comparison.
struct Expr {
  enum class Kind { Const, VarRef, Call, IfElse };

  Kind kind = Kind::Const;
  double constant = 0.0;
  std::string var;            // VarRef
  bool indexed = false;       // VarRef to a plate-body variable at the current index
  FnName fn = FnName::Add;    // Call
  CondKind cond = CondKind::Gt;  // IfElse
  std::vector<Expr> args;

  static Expr make_const(double v);
  static Expr make_var(std::string name, bool indexed = false);
  static Expr make_call(FnName fn, std::vector<Expr> args);
  static Expr make_if(CondKind cond, Expr lhs, Expr rhs, Expr then_e, Expr else_e);
};

// One program line. Plate statements hold a body of templates that get
// instantiated per sampled index.
struct Statement {
  enum class Kind { Sample, Deterministic, Plate };

  Kind kind = Kind::Sample;
  std::string target;                 // empty for Plate
  ValueType value_type = ValueType::Continuous;

  DistFamily dist = DistFamily::Gaussian;  // Sample
  std::vector<Expr> args;                  // Sample
  Expr expr;                               // Deterministic
  int plate_total = 0;                     // Plate
  std::vector<Statement> body;             // Plate

  static Statement sample(std::string target, DistFamily dist, std::vector<Expr> args);
  static Statement deterministic(std::string target, Expr expr);
  static Statement plate(int total, std::vector<Statement> body);
};

struct Program {
  std::string name;
  std::string notes;
  std::vector<Statement> statements;

  bool has_plate() const;
  const Statement* plate() const;  // nullptr when none
  int plate_position() const;      // -1 when none
  // Variables in declaration order; plate-body variables use template names.
  std::vector<std::string> variable_order() const;
};

struct Violation {
  int statement_index = -1;  // top-level index; -1 when program-wide
  std::string message;
};

struct DepGraph {
  std::vector<std::string> nodes;  // declaration order
  std::set<std::pair<std::string, std::string>> edges;  // parent -> child
};

// All invariant violations (SSA, undefined references, arity, plate rules).
// An empty result means the program is valid.
std::vector<Violation> validate(const Program& program);
bool is_valid(const Program& program);

// Throws std::invalid_argument when the program does not validate.
DepGraph dependency_graph(const Program& program);

// Bernoulli samples and 0/1 if-literal assignments become Binary, the rest
// Continuous. Idempotent.
Program infer_value_types(const Program& program);

// Variables referenced by an expression (plate-index refs keep the template name).
void collect_refs(const Expr& e, std::vector<std::string>& out);
std::vector<std::string> statement_refs(const Statement& s);

}  // namespace mli::ast
