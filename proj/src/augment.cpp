#include "mli/augment.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mli/exec.hpp"
#include "mli/rng.hpp"

namespace mli::aug {

using ast::Expr;
using ast::Statement;

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::FuzzFunction: return "fuzz_function";
    case Kind::FuzzConstant: return "fuzz_constant";
    case Kind::LineSwap: return "line_swap";
    case Kind::CutAndGlue: return "cut_and_glue";
    case Kind::CreateAndUse: return "create_and_use";
  }
  return "?";
}

std::optional<Kind> kind_from_name(const std::string& s) {
  for (int i = 0; i < kKindCount; ++i)
    if (s == kind_name(static_cast<Kind>(i))) return static_cast<Kind>(i);
  return std::nullopt;
}

namespace {

// A location inside a statement's expression forest. For Sample statements
// the path starts with the argument index; for Deterministic it descends
// from the RHS expression. An empty path on a Deterministic statement means
// the whole RHS.
struct Site {
  int stmt = 0;
  std::vector<int> path;
};

Expr* descend(Statement& s, const std::vector<int>& path) {
  Expr* e = nullptr;
  size_t i = 0;
  if (s.kind == Statement::Kind::Sample) {
    e = &s.args[path[0]];
    i = 1;
  } else {
    e = &s.expr;
  }
  for (; i < path.size(); ++i) e = &e->args[path[i]];
  return e;
}

void collect_expr_sites(const Expr& e, int stmt, std::vector<int>& path,
                        std::vector<Site>& consts, std::vector<Site>& refs,
                        std::vector<Site>& calls) {
  switch (e.kind) {
    case Expr::Kind::Const: consts.push_back({stmt, path}); break;
    case Expr::Kind::VarRef:
      if (!e.indexed) refs.push_back({stmt, path});
      break;
    case Expr::Kind::Call: calls.push_back({stmt, path}); [[fallthrough]];
    case Expr::Kind::IfElse:
      for (size_t i = 0; i < e.args.size(); ++i) {
        path.push_back(static_cast<int>(i));
        collect_expr_sites(e.args[i], stmt, path, consts, refs, calls);
        path.pop_back();
      }
      break;
  }
}

struct Sites {
  std::vector<Site> consts;       // Const leaves
  std::vector<Site> refs;         // VarRef leaves
  std::vector<Site> inner_calls;  // Call nodes (any depth)
  std::vector<int> sample_stmts;  // Sample statement indices
  std::vector<int> rhs_call_stmts;  // Deterministic statements whose RHS is a Call
};

// Plate statements and plate bodies are never augmentation sites.
Sites collect_sites(const ast::Program& p) {
  Sites s;
  for (size_t i = 0; i < p.statements.size(); ++i) {
    const Statement& st = p.statements[i];
    int idx = static_cast<int>(i);
    if (st.kind == Statement::Kind::Plate) continue;
    std::vector<int> path;
    if (st.kind == Statement::Kind::Sample) {
      s.sample_stmts.push_back(idx);
      for (size_t a = 0; a < st.args.size(); ++a) {
        path.push_back(static_cast<int>(a));
        collect_expr_sites(st.args[a], idx, path, s.consts, s.refs, s.inner_calls);
        path.pop_back();
      }
    } else {
      if (st.expr.kind == Expr::Kind::Call) s.rhs_call_stmts.push_back(idx);
      collect_expr_sites(st.expr, idx, path, s.consts, s.refs, s.inner_calls);
    }
  }
  return s;
}

std::vector<std::string> defined_before(const ast::Program& p, int stmt) {
  std::vector<std::string> out;
  for (int i = 0; i < stmt; ++i)
    if (p.statements[i].kind != Statement::Kind::Plate) out.push_back(p.statements[i].target);
  return out;
}

template <class T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[rng.uniform_int(0, static_cast<int>(v.size()) - 1)];
}

// ---------------------------------------------------------------------------

std::optional<ast::Program> fuzz_function(const ast::Program& p, Rng& rng) {
  struct Option {
    bool top_level;  // whole statement RHS: functions and distributions allowed
    Site site;       // for inner calls
    int stmt;
  };
  Sites s = collect_sites(p);
  std::vector<Option> options;
  for (int i : s.sample_stmts) options.push_back({true, {}, i});
  for (int i : s.rhs_call_stmts) options.push_back({true, {}, i});
  for (const auto& site : s.inner_calls) {
    // Top-level RHS calls are already covered by rhs_call_stmts.
    if (site.path.empty() && p.statements[site.stmt].kind == Statement::Kind::Deterministic)
      continue;
    options.push_back({false, site, site.stmt});
  }
  if (options.empty()) return std::nullopt;

  ast::Program out = p;
  const Option& opt = pick(options, rng);
  Statement& st = out.statements[opt.stmt];

  if (opt.top_level) {
    // Same-arity pool mixing functions and distributions; the statement can
    // switch between Sample and Deterministic.
    int arity;
    std::vector<Expr> args;
    if (st.kind == Statement::Kind::Sample) {
      arity = ast::dist_arity(st.dist);
      args = st.args;
    } else {
      arity = ast::fn_arity(st.expr.fn);
      args = st.expr.args;
    }
    struct Cand {
      bool is_dist;
      ast::DistFamily dist;
      ast::FnName fn;
    };
    std::vector<Cand> pool;
    for (auto d : {ast::DistFamily::Gaussian, ast::DistFamily::Uniform, ast::DistFamily::Bernoulli})
      if (ast::dist_arity(d) == arity && !(st.kind == Statement::Kind::Sample && st.dist == d))
        pool.push_back({true, d, ast::FnName::Add});
    for (auto f : {ast::FnName::Add, ast::FnName::Mul, ast::FnName::Sqrt, ast::FnName::Sigmoid,
                   ast::FnName::Rosenbrock})
      if (ast::fn_arity(f) == arity &&
          !(st.kind == Statement::Kind::Deterministic && st.expr.kind == Expr::Kind::Call &&
            st.expr.fn == f))
        pool.push_back({false, ast::DistFamily::Gaussian, f});
    if (pool.empty()) return std::nullopt;
    const Cand& c = pick(pool, rng);
    std::string target = st.target;
    if (c.is_dist)
      st = Statement::sample(target, c.dist, std::move(args));
    else
      st = Statement::deterministic(target, Expr::make_call(c.fn, std::move(args)));
  } else {
    Expr* e = descend(st, opt.site.path);
    int arity = ast::fn_arity(e->fn);
    std::vector<ast::FnName> pool;
    for (auto f : {ast::FnName::Add, ast::FnName::Mul, ast::FnName::Sqrt, ast::FnName::Sigmoid,
                   ast::FnName::Rosenbrock})
      if (ast::fn_arity(f) == arity && f != e->fn) pool.push_back(f);
    if (pool.empty()) return std::nullopt;
    e->fn = pick(pool, rng);
  }
  return out;
}

// Slot-aware priors mirroring the toy listings' hyperpriors.
double resample_constant(const ast::Program& p, const Site& site, Rng& rng) {
  const Statement& st = p.statements[site.stmt];
  if (st.kind == Statement::Kind::Sample && site.path.size() == 1) {
    int arg = site.path[0];
    if (st.dist == ast::DistFamily::Gaussian && arg == 1) return rng.uniform(0.5, 10.0);
    if (st.dist == ast::DistFamily::Bernoulli) return rng.uniform(0.05, 0.95);
    if (st.dist == ast::DistFamily::Uniform && arg == 1) {
      const Expr& lo = st.args[0];
      if (lo.kind == Expr::Kind::Const) return lo.constant + rng.uniform(0.5, 10.5);
    }
  }
  // == right-hand sides must stay integer literals.
  if (st.kind == Statement::Kind::Deterministic && st.expr.kind == Expr::Kind::IfElse &&
      st.expr.cond == ast::CondKind::Eq && site.path.size() == 1 && site.path[0] == 1)
    return rng.uniform_int(0, 1);
  return rng.uniform(-10.0, 10.0);
}

std::optional<ast::Program> fuzz_constant(const ast::Program& p, Rng& rng) {
  Sites s = collect_sites(p);
  if (s.consts.empty()) return std::nullopt;
  ast::Program out = p;
  const Site& site = pick(s.consts, rng);
  double v = resample_constant(p, site, rng);
  descend(out.statements[site.stmt], site.path)->constant = v;
  return out;
}

std::optional<ast::Program> line_swap(const ast::Program& p, Rng& rng) {
  std::vector<std::pair<int, int>> legal;
  int n = static_cast<int>(p.statements.size());
  for (int i = 0; i < n; ++i) {
    if (p.statements[i].kind == Statement::Kind::Plate) continue;
    for (int j = i + 1; j < n; ++j) {
      if (p.statements[j].kind == Statement::Kind::Plate) continue;
      ast::Program cand = p;
      std::swap(cand.statements[i], cand.statements[j]);
      if (ast::validate(cand).empty()) legal.push_back({i, j});
    }
  }
  if (legal.empty()) return std::nullopt;
  auto [i, j] = pick(legal, rng);
  ast::Program out = p;
  std::swap(out.statements[i], out.statements[j]);
  return out;
}

std::optional<ast::Program> cut_and_glue(const ast::Program& p, Rng& rng) {
  Sites s = collect_sites(p);
  struct Option {
    Site site;
    std::vector<std::string> alternatives;
  };
  std::vector<Option> options;
  for (const auto& site : s.refs) {
    ast::Program probe = p;
    const Expr* e = descend(probe.statements[site.stmt], site.path);
    std::vector<std::string> alts;
    for (const auto& name : defined_before(p, site.stmt))
      if (name != e->var) alts.push_back(name);
    if (!alts.empty()) options.push_back({site, std::move(alts)});
  }
  if (options.empty()) return std::nullopt;
  const Option& opt = pick(options, rng);
  ast::Program out = p;
  descend(out.statements[opt.site.stmt], opt.site.path)->var = pick(opt.alternatives, rng);
  return out;
}

std::string fresh_name(const ast::Program& p) {
  std::set<std::string> taken;
  for (const auto& v : p.variable_order()) taken.insert(v);
  for (int i = 0;; ++i) {
    std::string name = "w" + std::to_string(i);
    if (!taken.count(name)) return name;
  }
}

Statement random_source_statement(const std::string& name, Rng& rng) {
  double u = rng.uniform01();
  if (u < 0.5) {
    double mean = rng.uniform(-10.0, 10.0);
    double std = rng.uniform(0.5, 10.0);
    return Statement::sample(name, ast::DistFamily::Gaussian,
                             {Expr::make_const(mean), Expr::make_const(std)});
  }
  if (u < 0.8) {
    double lo = rng.uniform(-10.0, 10.0);
    double span = rng.uniform(0.5, 10.0);
    return Statement::sample(name, ast::DistFamily::Uniform,
                             {Expr::make_const(lo), Expr::make_const(lo + span)});
  }
  return Statement::sample(name, ast::DistFamily::Bernoulli,
                           {Expr::make_const(rng.uniform(0.05, 0.95))});
}

std::optional<ast::Program> create_and_use(const ast::Program& p, Rng& rng) {
  Sites s = collect_sites(p);
  std::vector<Site> use_sites = s.refs;
  use_sites.insert(use_sites.end(), s.consts.begin(), s.consts.end());
  if (use_sites.empty()) return std::nullopt;
  const Site& site = pick(use_sites, rng);

  ast::Program out = p;
  std::string name = fresh_name(p);
  int insert_at = rng.uniform_int(0, site.stmt);
  out.statements.insert(out.statements.begin() + insert_at, random_source_statement(name, rng));
  descend(out.statements[site.stmt + 1], site.path)->kind = Expr::Kind::VarRef;
  Expr* e = descend(out.statements[site.stmt + 1], site.path);
  e->var = name;
  e->indexed = false;
  e->args.clear();
  return out;
}

}  // namespace

std::optional<ast::Program> apply(const ast::Program& program, Kind kind, uint64_t seed) {
  if (!ast::is_valid(program))
    throw std::invalid_argument("augment: input program is invalid");
  Rng rng = Rng(seed).derive(kind_name(kind));
  std::optional<ast::Program> out;
  switch (kind) {
    case Kind::FuzzFunction: out = fuzz_function(program, rng); break;
    case Kind::FuzzConstant: out = fuzz_constant(program, rng); break;
    case Kind::LineSwap: out = line_swap(program, rng); break;
    case Kind::CutAndGlue: out = cut_and_glue(program, rng); break;
    case Kind::CreateAndUse: out = create_and_use(program, rng); break;
  }
  if (out) *out = ast::infer_value_types(*out);
  return out;
}

ast::Program random_augment(const ast::Program& program, const Policy& policy, uint64_t seed) {
  if (!ast::is_valid(program))
    throw std::invalid_argument("random_augment: input program is invalid");
  Rng rng = Rng(seed).derive("random_augment");

  double weight_sum = 0;
  for (double w : policy.kind_weights) weight_sum += w;

  auto pick_kind = [&]() {
    double u = rng.uniform01() * weight_sum;
    for (int i = 0; i < kKindCount; ++i) {
      u -= policy.kind_weights[i];
      if (u <= 0) return static_cast<Kind>(i);
    }
    return static_cast<Kind>(kKindCount - 1);
  };

  auto survives_trials = [&](const ast::Program& cand) {
    for (int t = 0; t < policy.trial_executions; ++t) {
      try {
        exec::run(cand, rng.next_u64());
      } catch (const std::exception&) {
        return false;
      }
    }
    return true;
  };

  int depth = rng.uniform_int(1, std::max(1, policy.max_depth));
  ast::Program current = ast::infer_value_types(program);
  int rejects = 0;
  for (int d = 0; d < depth; ++d) {
    for (;;) {
      auto cand = apply(current, pick_kind(), rng.next_u64());
      if (cand && ast::is_valid(*cand) && survives_trials(*cand)) {
        current = std::move(*cand);
        break;
      }
      if (++rejects > policy.max_rejects) return ast::infer_value_types(program);
    }
  }
  return current;
}

}  // namespace mli::aug
