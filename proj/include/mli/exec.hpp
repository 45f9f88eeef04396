#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mli/ast.hpp"
#include "mli/rng.hpp"
#include "mli/trace.hpp"

namespace mli::exec {

// Sentinel standing in for log 0 so downstream variance/acceptance
// arithmetic stays total. Sums never accumulate it: any zero-density term
// makes the whole joint exactly kLogZero.
inline constexpr double kLogZero = -1e100;

inline constexpr double kDefaultSoftDeltaStd = 1e-2;

struct ExecError : std::runtime_error {
  int statement_index;
  std::string variable;
  ExecError(int idx, std::string var, const std::string& msg)
      : std::runtime_error("statement " + std::to_string(idx) + " ('" + var + "'): " + msg),
        statement_index(idx),
        variable(std::move(var)) {}
};

// Where a trace variable is defined: its statement and, for plate members,
// the iteration index.
struct VarSite {
  const ast::Statement* stmt = nullptr;
  int plate_index = 0;  // 0 for out-of-plate
  int top_index = 0;    // position in program.statements
};

std::map<std::string, VarSite> variable_sites(const ast::Program& program, const Trace& trace);

// Ancestral sampling. minibatch_k = 0 unrolls the full plate; otherwise k
// indices are drawn uniformly without replacement. Deterministic given seed.
Trace run(const ast::Program& program, uint64_t seed, int minibatch_k = 0);

// Sum of per-statement log densities at the traced values. Deterministic
// statements score as Gaussian soft deltas around their recomputed value.
// In-plate terms are summed over the trace's minibatch without scaling.
double log_joint(const ast::Program& program, const Trace& trace,
                 double soft_delta_std = kDefaultSoftDeltaStd);

// Eq-4 estimator: out-of-plate terms plus n/k times the minibatch sum.
double log_joint_plated(const ast::Program& program, const Trace& trace,
                        double soft_delta_std = kDefaultSoftDeltaStd);

struct JointGrad {
  double value = 0.0;
  std::map<std::string, double> grad;  // d log_joint / d value(var)
};

// Reverse-mode gradient of the (plated when requested) log joint with
// respect to the listed variables' traced values. Zero-density traces
// return kLogZero with zero gradients.
JointGrad log_joint_grad(const ast::Program& program, const Trace& trace,
                         const std::vector<std::string>& wrt, bool plated,
                         double soft_delta_std = kDefaultSoftDeltaStd);

// Draw `var` from its defining statement's conditional given the other
// traced values (deterministic nodes draw from the soft delta).
double sample_conditional(const ast::Program& program, const Trace& trace,
                          const std::string& var, Rng& rng,
                          double soft_delta_std = kDefaultSoftDeltaStd);

// Log density of var's traced value under that same conditional.
double conditional_logpdf(const ast::Program& program, const Trace& trace,
                          const std::string& var,
                          double soft_delta_std = kDefaultSoftDeltaStd);

// True iff every deterministic value equals recomputation within tol.
bool is_consistent(const ast::Program& program, const Trace& trace, double tol = 1e-9);

double gaussian_logpdf(double v, double mean, double std);
double uniform_logpdf(double v, double lo, double hi);
double bernoulli_logpmf(double v, double p);

}  // namespace mli::exec
