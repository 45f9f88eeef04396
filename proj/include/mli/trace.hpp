#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace mli {

// One execution's record: variable -> value, plus which variables are
// masked (value unknown). Plate-member variables are keyed by their
// rendered instance name, e.g. "d[3]".
struct Trace {
  struct Minibatch {
    std::vector<int> indices;  // 1-based, ascending
    int total = 0;
  };

  std::map<std::string, double> values;
  std::set<std::string> masked;
  std::optional<Minibatch> minibatch;

  bool has_value(const std::string& name) const { return values.count(name) > 0; }
  bool is_masked(const std::string& name) const { return masked.count(name) > 0; }
};

inline std::string member_name(const std::string& base, int index) {
  return base + "[" + std::to_string(index) + "]";
}

}  // namespace mli
