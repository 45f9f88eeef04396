#include "mli/exec.hpp"

#include <cmath>

namespace mli::exec {

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * log(2*pi)

using ast::Expr;
using ast::Statement;

// ---------------------------------------------------------------------------
// Plain evaluation (run-time semantics: domain violations throw).

struct Env {
  const std::map<std::string, double>* values;
  int plate_index = 0;
  int stmt_index = 0;
  std::string target;

  double lookup(const Expr& e) const {
    std::string key = e.indexed ? member_name(e.var, plate_index) : e.var;
    auto it = values->find(key);
    if (it == values->end())
      throw std::invalid_argument("missing variable value '" + key + "'");
    return it->second;
  }
};

bool truthy(double v) { return v != 0.0; }

double eval_expr(const Expr& e, const Env& env) {
  switch (e.kind) {
    case Expr::Kind::Const: return e.constant;
    case Expr::Kind::VarRef: return env.lookup(e);
    case Expr::Kind::Call: {
      switch (e.fn) {
        case ast::FnName::Add: return eval_expr(e.args[0], env) + eval_expr(e.args[1], env);
        case ast::FnName::Mul: return eval_expr(e.args[0], env) * eval_expr(e.args[1], env);
        case ast::FnName::Sqrt: {
          double x = eval_expr(e.args[0], env);
          if (x < 0) throw ExecError(env.stmt_index, env.target, "sqrt of negative value");
          return std::sqrt(x);
        }
        case ast::FnName::Sigmoid: {
          double x = eval_expr(e.args[0], env);
          return 1.0 / (1.0 + std::exp(-x));
        }
        case ast::FnName::Rosenbrock: {
          double x = eval_expr(e.args[0], env);
          double y = eval_expr(e.args[1], env);
          double a = 1.0 - x;
          double b = y - x * x;
          return a * a + 100.0 * b * b;
        }
      }
      return 0.0;
    }
    case Expr::Kind::IfElse: {
      double l = eval_expr(e.args[0], env);
      bool take_then = false;
      switch (e.cond) {
        case ast::CondKind::Gt: take_then = l > eval_expr(e.args[1], env); break;
        case ast::CondKind::Eq: take_then = l == eval_expr(e.args[1], env); break;
        case ast::CondKind::Or: take_then = truthy(l) || truthy(eval_expr(e.args[1], env)); break;
      }
      return eval_expr(take_then ? e.args[2] : e.args[3], env);
    }
  }
  return 0.0;
}

double sample_dist(ast::DistFamily f, const std::vector<double>& a, Rng& rng, const Env& env) {
  switch (f) {
    case ast::DistFamily::Gaussian:
      if (!(a[1] > 0))
        throw ExecError(env.stmt_index, env.target, "gaussian std must be positive");
      return rng.normal(a[0], a[1]);
    case ast::DistFamily::Uniform:
      if (!(a[0] < a[1]))
        throw ExecError(env.stmt_index, env.target, "uniform requires low < high");
      return rng.uniform(a[0], a[1]);
    case ast::DistFamily::Bernoulli:
      if (!(a[0] >= 0.0 && a[0] <= 1.0))
        throw ExecError(env.stmt_index, env.target, "bernoulli p must be in [0,1]");
      return rng.bernoulli(a[0]) ? 1.0 : 0.0;
  }
  return 0.0;
}

}  // namespace

std::map<std::string, VarSite> variable_sites(const ast::Program& program, const Trace& trace) {
  std::map<std::string, VarSite> out;
  for (size_t i = 0; i < program.statements.size(); ++i) {
    const Statement& s = program.statements[i];
    if (s.kind == Statement::Kind::Plate) {
      if (!trace.minibatch)
        throw std::invalid_argument("variable_sites: plated program but trace has no minibatch");
      for (int idx : trace.minibatch->indices)
        for (const auto& b : s.body)
          out[member_name(b.target, idx)] = {&b, idx, static_cast<int>(i)};
    } else {
      out[s.target] = {&s, 0, static_cast<int>(i)};
    }
  }
  return out;
}

Trace run(const ast::Program& program, uint64_t seed, int minibatch_k) {
  auto violations = ast::validate(program);
  if (!violations.empty())
    throw std::invalid_argument("run: invalid program: " + violations.front().message);

  Rng rng(seed);
  Trace trace;
  Env env;
  env.values = &trace.values;

  auto exec_one = [&](const Statement& s, int stmt_index, int plate_index,
                      const std::string& key) {
    env.plate_index = plate_index;
    env.stmt_index = stmt_index;
    env.target = key;
    double v;
    if (s.kind == Statement::Kind::Sample) {
      std::vector<double> a;
      a.reserve(s.args.size());
      for (const auto& arg : s.args) a.push_back(eval_expr(arg, env));
      v = sample_dist(s.dist, a, rng, env);
    } else {
      v = eval_expr(s.expr, env);
    }
    if (!std::isfinite(v)) throw ExecError(stmt_index, key, "non-finite value");
    trace.values[key] = v;
  };

  for (size_t i = 0; i < program.statements.size(); ++i) {
    const Statement& s = program.statements[i];
    if (s.kind == Statement::Kind::Plate) {
      int n = s.plate_total;
      int k = minibatch_k == 0 ? n : minibatch_k;
      if (k > n) throw std::invalid_argument("run: minibatch_k exceeds plate total");
      Trace::Minibatch mb;
      mb.total = n;
      mb.indices = rng.sample_without_replacement(n, k);
      trace.minibatch = mb;
      for (int idx : trace.minibatch->indices)
        for (const auto& b : s.body)
          exec_one(b, static_cast<int>(i), idx, member_name(b.target, idx));
    } else {
      exec_one(s, static_cast<int>(i), 0, s.target);
    }
  }
  return trace;
}

double gaussian_logpdf(double v, double mean, double std) {
  if (!(std > 0) || !std::isfinite(std) || !std::isfinite(mean) || !std::isfinite(v))
    return kLogZero;
  double z = (v - mean) / std;
  return -std::log(std) - kHalfLog2Pi - 0.5 * z * z;
}

double uniform_logpdf(double v, double lo, double hi) {
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi) || !std::isfinite(v))
    return kLogZero;
  if (v < lo || v > hi) return kLogZero;
  return -std::log(hi - lo);
}

double bernoulli_logpmf(double v, double p) {
  if (!(p >= 0.0 && p <= 1.0)) return kLogZero;
  if (v == 1.0) return p > 0.0 ? std::log(p) : kLogZero;
  if (v == 0.0) return p < 1.0 ? std::log(1.0 - p) : kLogZero;
  return kLogZero;
}

namespace {

// Scoring-time semantics: domain violations yield kLogZero instead of
// throwing, so candidate assignments always score.
double score_statement(const Statement& s, const Env& env, const Trace& trace,
                       const std::string& key, double soft_delta_std) {
  auto it = trace.values.find(key);
  if (it == trace.values.end())
    throw std::invalid_argument("log_joint: missing variable value '" + key + "'");
  double v = it->second;
  try {
    if (s.kind == Statement::Kind::Sample) {
      std::vector<double> a;
      a.reserve(s.args.size());
      for (const auto& arg : s.args) a.push_back(eval_expr(arg, env));
      switch (s.dist) {
        case ast::DistFamily::Gaussian: return gaussian_logpdf(v, a[0], a[1]);
        case ast::DistFamily::Uniform: return uniform_logpdf(v, a[0], a[1]);
        case ast::DistFamily::Bernoulli: return bernoulli_logpmf(v, a[0]);
      }
      return kLogZero;
    }
    double recomputed = eval_expr(s.expr, env);
    return gaussian_logpdf(v - recomputed, 0.0, soft_delta_std);
  } catch (const ExecError&) {
    return kLogZero;  // e.g. sqrt of a negative candidate value
  }
}

struct JointTerms {
  double outside = 0.0;
  double inside = 0.0;
  int n = 0;
  int k = 0;
  bool zero_density = false;
};

JointTerms joint_terms(const ast::Program& program, const Trace& trace, double soft_delta_std) {
  JointTerms t;
  Env env;
  env.values = &trace.values;
  for (size_t i = 0; i < program.statements.size(); ++i) {
    const Statement& s = program.statements[i];
    env.stmt_index = static_cast<int>(i);
    if (s.kind == Statement::Kind::Plate) {
      if (!trace.minibatch)
        throw std::invalid_argument("log_joint: plated program but trace has no minibatch");
      t.n = s.plate_total;
      t.k = static_cast<int>(trace.minibatch->indices.size());
      for (int idx : trace.minibatch->indices) {
        env.plate_index = idx;
        for (const auto& b : s.body) {
          env.target = member_name(b.target, idx);
          double term = score_statement(b, env, trace, env.target, soft_delta_std);
          if (term == kLogZero) t.zero_density = true;
          t.inside += term;
        }
      }
    } else {
      env.plate_index = 0;
      env.target = s.target;
      double term = score_statement(s, env, trace, s.target, soft_delta_std);
      if (term == kLogZero) t.zero_density = true;
      t.outside += term;
    }
  }
  return t;
}

}  // namespace

double log_joint(const ast::Program& program, const Trace& trace, double soft_delta_std) {
  JointTerms t = joint_terms(program, trace, soft_delta_std);
  if (t.zero_density) return kLogZero;
  return t.outside + t.inside;
}

double log_joint_plated(const ast::Program& program, const Trace& trace, double soft_delta_std) {
  JointTerms t = joint_terms(program, trace, soft_delta_std);
  if (t.k == 0) throw std::invalid_argument("log_joint_plated: trace has no plate minibatch");
  if (t.zero_density) return kLogZero;
  return t.outside + (static_cast<double>(t.n) / t.k) * t.inside;
}

// ---------------------------------------------------------------------------
// Scalar reverse-mode tape for d log_joint / d value.

namespace {

class STape {
 public:
  int input(double v) { return node(v, Op::Input, -1, -1); }
  int constant(double v) { return node(v, Op::Const, -1, -1); }
  int add(int a, int b) { return node(val(a) + val(b), Op::Add, a, b); }
  int sub(int a, int b) { return node(val(a) - val(b), Op::Sub, a, b); }
  int mul(int a, int b) { return node(val(a) * val(b), Op::Mul, a, b); }
  int div(int a, int b) { return node(val(a) / val(b), Op::Div, a, b); }
  int neg(int a) { return node(-val(a), Op::Neg, a, -1); }
  int scale(int a, double c) { return node(val(a) * c, Op::Scale, a, -1, c); }
  int log_(int a) { return node(std::log(val(a)), Op::Log, a, -1); }
  int sqrt_(int a) { return node(std::sqrt(val(a)), Op::Sqrt, a, -1); }
  int sigmoid(int a) {
    double s = 1.0 / (1.0 + std::exp(-val(a)));
    return node(s, Op::Sigmoid, a, -1);
  }

  double val(int i) const { return nodes_[i].val; }

  std::vector<double> backward(int out) {
    for (auto& n : nodes_) n.grad = 0.0;
    nodes_[out].grad = 1.0;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      const Node& n = nodes_[i];
      double g = n.grad;
      if (g == 0.0) continue;
      switch (n.op) {
        case Op::Input:
        case Op::Const: break;
        case Op::Add:
          nodes_[n.a].grad += g;
          nodes_[n.b].grad += g;
          break;
        case Op::Sub:
          nodes_[n.a].grad += g;
          nodes_[n.b].grad -= g;
          break;
        case Op::Mul:
          nodes_[n.a].grad += g * nodes_[n.b].val;
          nodes_[n.b].grad += g * nodes_[n.a].val;
          break;
        case Op::Div:
          nodes_[n.a].grad += g / nodes_[n.b].val;
          nodes_[n.b].grad -= g * n.val / nodes_[n.b].val;
          break;
        case Op::Neg: nodes_[n.a].grad -= g; break;
        case Op::Scale: nodes_[n.a].grad += g * n.aux; break;
        case Op::Log: nodes_[n.a].grad += g / nodes_[n.a].val; break;
        case Op::Sqrt: nodes_[n.a].grad += g * 0.5 / n.val; break;
        case Op::Sigmoid: nodes_[n.a].grad += g * n.val * (1.0 - n.val); break;
      }
    }
    std::vector<double> grads(nodes_.size());
    for (size_t i = 0; i < nodes_.size(); ++i) grads[i] = nodes_[i].grad;
    return grads;
  }

 private:
  enum class Op { Input, Const, Add, Sub, Mul, Div, Neg, Scale, Log, Sqrt, Sigmoid };
  struct Node {
    double val, grad = 0.0, aux = 0.0;
    Op op;
    int a, b;
  };
  std::vector<Node> nodes_;

  int node(double v, Op op, int a, int b, double aux = 0.0) {
    nodes_.push_back({v, 0.0, aux, op, a, b});
    return static_cast<int>(nodes_.size()) - 1;
  }
};

struct TapeCtx {
  STape* tape;
  const std::map<std::string, int>* var_nodes;  // trace variable -> tape node
  int plate_index = 0;
  bool zero_density = false;
};

int tape_expr(const Expr& e, TapeCtx& ctx) {
  STape& t = *ctx.tape;
  switch (e.kind) {
    case Expr::Kind::Const: return t.constant(e.constant);
    case Expr::Kind::VarRef: {
      std::string key = e.indexed ? member_name(e.var, ctx.plate_index) : e.var;
      auto it = ctx.var_nodes->find(key);
      if (it == ctx.var_nodes->end())
        throw std::invalid_argument("log_joint_grad: missing variable value '" + key + "'");
      return it->second;
    }
    case Expr::Kind::Call: {
      switch (e.fn) {
        case ast::FnName::Add: return t.add(tape_expr(e.args[0], ctx), tape_expr(e.args[1], ctx));
        case ast::FnName::Mul: return t.mul(tape_expr(e.args[0], ctx), tape_expr(e.args[1], ctx));
        case ast::FnName::Sqrt: {
          int a = tape_expr(e.args[0], ctx);
          if (t.val(a) < 0) {
            ctx.zero_density = true;
            return t.constant(0.0);
          }
          return t.sqrt_(a);
        }
        case ast::FnName::Sigmoid: return t.sigmoid(tape_expr(e.args[0], ctx));
        case ast::FnName::Rosenbrock: {
          int x = tape_expr(e.args[0], ctx);
          int y = tape_expr(e.args[1], ctx);
          int one = t.constant(1.0);
          int a = t.sub(one, x);
          int b = t.sub(y, t.mul(x, x));
          return t.add(t.mul(a, a), t.scale(t.mul(b, b), 100.0));
        }
      }
      return t.constant(0.0);
    }
    case Expr::Kind::IfElse: {
      double l = t.val(tape_expr(e.args[0], ctx));
      double r = t.val(tape_expr(e.args[1], ctx));
      bool take_then = false;
      switch (e.cond) {
        case ast::CondKind::Gt: take_then = l > r; break;
        case ast::CondKind::Eq: take_then = l == r; break;
        case ast::CondKind::Or: take_then = truthy(l) || truthy(r); break;
      }
      // Gradient flows through the taken branch only.
      return tape_expr(take_then ? e.args[2] : e.args[3], ctx);
    }
  }
  return -1;
}

int tape_gaussian_logpdf(STape& t, int v, int mean, int std_node, TapeCtx& ctx) {
  if (!(t.val(std_node) > 0)) {
    ctx.zero_density = true;
    return t.constant(0.0);
  }
  int z = t.div(t.sub(v, mean), std_node);
  return t.sub(t.neg(t.log_(std_node)),
               t.add(t.constant(kHalfLog2Pi), t.scale(t.mul(z, z), 0.5)));
}

int tape_term(const Statement& s, const std::string& key, TapeCtx& ctx, double soft_delta_std) {
  STape& t = *ctx.tape;
  auto it = ctx.var_nodes->find(key);
  if (it == ctx.var_nodes->end())
    throw std::invalid_argument("log_joint_grad: missing variable value '" + key + "'");
  int v = it->second;
  if (s.kind == Statement::Kind::Sample) {
    switch (s.dist) {
      case ast::DistFamily::Gaussian: {
        int mean = tape_expr(s.args[0], ctx);
        int std_node = tape_expr(s.args[1], ctx);
        return tape_gaussian_logpdf(t, v, mean, std_node, ctx);
      }
      case ast::DistFamily::Uniform: {
        int lo = tape_expr(s.args[0], ctx);
        int hi = tape_expr(s.args[1], ctx);
        double lov = t.val(lo), hiv = t.val(hi), vv = t.val(v);
        if (!(lov < hiv) || vv < lov || vv > hiv) {
          ctx.zero_density = true;
          return t.constant(0.0);
        }
        return t.neg(t.log_(t.sub(hi, lo)));
      }
      case ast::DistFamily::Bernoulli: {
        int p = tape_expr(s.args[0], ctx);
        double pv = t.val(p), vv = t.val(v);
        if (!(pv >= 0 && pv <= 1) || (vv != 0.0 && vv != 1.0) || (vv == 1.0 && pv <= 0) ||
            (vv == 0.0 && pv >= 1)) {
          ctx.zero_density = true;
          return t.constant(0.0);
        }
        return vv == 1.0 ? t.log_(p) : t.log_(t.sub(t.constant(1.0), p));
      }
    }
    return t.constant(0.0);
  }
  int recomputed = tape_expr(s.expr, ctx);
  int sigma = t.constant(soft_delta_std);
  return tape_gaussian_logpdf(t, v, recomputed, sigma, ctx);
}

}  // namespace

JointGrad log_joint_grad(const ast::Program& program, const Trace& trace,
                         const std::vector<std::string>& wrt, bool plated,
                         double soft_delta_std) {
  STape tape;
  std::map<std::string, int> var_nodes;
  for (const auto& [name, value] : trace.values) var_nodes[name] = tape.constant(value);
  for (const auto& name : wrt) {
    auto it = trace.values.find(name);
    if (it == trace.values.end())
      throw std::invalid_argument("log_joint_grad: missing variable value '" + name + "'");
    var_nodes[name] = tape.input(it->second);
  }

  TapeCtx ctx{&tape, &var_nodes, 0, false};
  int outside = tape.constant(0.0);
  int inside = tape.constant(0.0);
  int n = 0, k = 0;
  for (const auto& s : program.statements) {
    if (s.kind == Statement::Kind::Plate) {
      if (!trace.minibatch)
        throw std::invalid_argument("log_joint_grad: trace has no plate minibatch");
      n = s.plate_total;
      k = static_cast<int>(trace.minibatch->indices.size());
      for (int idx : trace.minibatch->indices) {
        ctx.plate_index = idx;
        for (const auto& b : s.body)
          inside = tape.add(inside, tape_term(b, member_name(b.target, idx), ctx, soft_delta_std));
      }
      ctx.plate_index = 0;
    } else {
      outside = tape.add(outside, tape_term(s, s.target, ctx, soft_delta_std));
    }
  }

  JointGrad out;
  if (ctx.zero_density) {
    out.value = kLogZero;
    for (const auto& name : wrt) out.grad[name] = 0.0;
    return out;
  }
  int total = outside;
  if (k > 0) {
    if (plated)
      total = tape.add(outside, tape.scale(inside, static_cast<double>(n) / k));
    else
      total = tape.add(outside, inside);
  } else if (plated) {
    throw std::invalid_argument("log_joint_grad: plated requested but program has no plate");
  }
  out.value = tape.val(total);
  auto grads = tape.backward(total);
  for (const auto& name : wrt) out.grad[name] = grads[var_nodes.at(name)];
  return out;
}

double sample_conditional(const ast::Program& program, const Trace& trace,
                          const std::string& var, Rng& rng, double soft_delta_std) {
  auto sites = variable_sites(program, trace);
  auto it = sites.find(var);
  if (it == sites.end())
    throw std::invalid_argument("sample_conditional: unknown variable '" + var + "'");
  const VarSite& site = it->second;
  Env env;
  env.values = &trace.values;
  env.plate_index = site.plate_index;
  env.stmt_index = site.top_index;
  env.target = var;
  const Statement& s = *site.stmt;
  if (s.kind == Statement::Kind::Sample) {
    std::vector<double> a;
    for (const auto& arg : s.args) a.push_back(eval_expr(arg, env));
    return sample_dist(s.dist, a, rng, env);
  }
  return eval_expr(s.expr, env) + soft_delta_std * rng.normal();
}

double conditional_logpdf(const ast::Program& program, const Trace& trace,
                          const std::string& var, double soft_delta_std) {
  auto sites = variable_sites(program, trace);
  auto it = sites.find(var);
  if (it == sites.end())
    throw std::invalid_argument("conditional_logpdf: unknown variable '" + var + "'");
  const VarSite& site = it->second;
  Env env;
  env.values = &trace.values;
  env.plate_index = site.plate_index;
  env.stmt_index = site.top_index;
  env.target = var;
  return score_statement(*site.stmt, env, trace, var, soft_delta_std);
}

bool is_consistent(const ast::Program& program, const Trace& trace, double tol) {
  Env env;
  env.values = &trace.values;
  auto check = [&](const Statement& s, const std::string& key, int plate_index) {
    if (s.kind != Statement::Kind::Deterministic) return true;
    auto it = trace.values.find(key);
    if (it == trace.values.end()) return true;  // masked members are vacuously fine
    env.plate_index = plate_index;
    env.target = key;
    try {
      return std::fabs(it->second - eval_expr(s.expr, env)) <= tol;
    } catch (const std::exception&) {
      return false;
    }
  };
  for (size_t i = 0; i < program.statements.size(); ++i) {
    const Statement& s = program.statements[i];
    env.stmt_index = static_cast<int>(i);
    if (s.kind == Statement::Kind::Plate) {
      if (!trace.minibatch) continue;
      for (int idx : trace.minibatch->indices)
        for (const auto& b : s.body)
          if (!check(b, member_name(b.target, idx), idx)) return false;
    } else {
      if (!check(s, s.target, 0)) return false;
    }
  }
  return true;
}

}  // namespace mli::exec
