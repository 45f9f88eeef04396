#include "mli/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mli {

uint64_t Rng::mix(uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

static uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

Rng Rng::derive(std::string_view name) const {
  Rng child(0);
  child.state_ = mix(state_ ^ fnv1a(name));
  return child;
}

Rng Rng::derive(uint64_t index) const {
  Rng child(0);
  child.state_ = mix(state_ + 0x632be59bd9b4e019ull * (index + 1));
  return child;
}

uint64_t Rng::next_u64() {
  state_ += 0x9e3779b97f4a7c15ull;
  uint64_t x = state_;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

double Rng::uniform01() {
  return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(next_u64() >> 11) * 0x1.0p-53);
}

double Rng::normal() {
  double u1 = uniform01();
  double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

int Rng::uniform_int(int lo, int hi) {
  if (hi < lo) throw std::invalid_argument("uniform_int: hi < lo");
  uint64_t span = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo) + 1;
  return lo + static_cast<int>(next_u64() % span);
}

bool Rng::bernoulli(double p) { return uniform01() <= p; }

std::vector<int> Rng::sample_without_replacement(int n, int k) {
  if (k > n || k < 0) throw std::invalid_argument("sample_without_replacement: k out of range");
  // Floyd's algorithm, then sort.
  std::vector<int> out;
  out.reserve(k);
  for (int j = n - k + 1; j <= n; ++j) {
    int t = uniform_int(1, j);
    bool seen = false;
    for (int v : out) {
      if (v == t) {
        seen = true;
        break;
      }
    }
    out.push_back(seen ? j : t);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace mli
