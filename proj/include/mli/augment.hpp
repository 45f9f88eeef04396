#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "mli/ast.hpp"

namespace mli::aug {

enum class Kind { FuzzFunction, FuzzConstant, LineSwap, CutAndGlue, CreateAndUse };

inline constexpr int kKindCount = 5;
const char* kind_name(Kind k);
std::optional<Kind> kind_from_name(const std::string& s);

struct Policy {
  int max_depth = 5;
  std::array<double, kKindCount> kind_weights{0.2, 0.2, 0.2, 0.2, 0.2};
  int trial_executions = 8;
  int max_rejects = 64;
};

// One augmentation step. Returns nullopt when the program offers no legal
// site for this kind. The result is not guaranteed to execute; callers
// filter with rejection sampling (see random_augment).
std::optional<ast::Program> apply(const ast::Program& program, Kind kind, uint64_t seed);

// 1..max_depth random augmentations, each accepted only if the candidate
// validates and survives trial_executions ancestral runs without a domain
// error. Falls back to the input program when max_rejects is exhausted.
ast::Program random_augment(const ast::Program& program, const Policy& policy, uint64_t seed);

}  // namespace mli::aug
