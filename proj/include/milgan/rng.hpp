#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace milgan {

/// splitmix64 finalizer; also used to derive decorrelated sub-stream seeds.
std::uint64_t mix64(std::uint64_t x);

/// Hash a base seed with a list of tags (round, episode, rollout, ...) into a
/// new seed. Order-sensitive, so (seed, {a,b}) != (seed, {b,a}).
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

/// Deterministic xoshiro256** generator. All distributions are hand-rolled so
/// streams are identical across standard libraries and platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);

  /// Standard normal via Box-Muller. Always consumes exactly two uniforms.
  double gaussian();

  /// Uniform integer in [0, n). n must be positive.
  int uniform_int(int n);

  /// Index draw from an unnormalized nonnegative weight vector. Entries that
  /// are exactly zero are never selected.
  int categorical(const double* w, int n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      int j = uniform_int(i + 1);
      std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
    }
  }

 private:
  std::uint64_t s_[4];
};

}  // namespace milgan
