#include "milgan/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace milgan {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = mix64(base);
  std::uint64_t salt = 1;
  for (std::uint64_t t : tags) {
    h = mix64(h ^ mix64(t + salt));
    ++salt;
  }
  return h;
}

Rng::Rng(std::uint64_t seed) {
  // Seed state via splitmix64 so any seed (including 0) gives a healthy state.
  std::uint64_t x = seed;
  for (auto& s : s_) {
    x = mix64(x);
    s = x;
  }
}

static inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

double Rng::gaussian() {
  // Box-Muller without the cached spare: stream position is a pure function
  // of the number of calls, which keeps derived streams reproducible.
  double u1 = uniform();
  double u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

int Rng::uniform_int(int n) {
  if (n <= 0) throw std::invalid_argument("Rng::uniform_int: n must be positive");
  // Lemire multiply-shift; bias is < n / 2^64, irrelevant at these sizes.
  unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(n);
  return static_cast<int>(m >> 64);
}

int Rng::categorical(const double* w, int n) {
  double total = 0.0;
  int last_positive = -1;
  for (int i = 0; i < n; ++i) {
    total += w[i];
    if (w[i] > 0.0) last_positive = i;
  }
  if (last_positive < 0) throw std::invalid_argument("Rng::categorical: all weights zero");
  const double u = uniform() * total;
  double cum = 0.0;
  for (int i = 0; i < n; ++i) {
    if (w[i] <= 0.0) continue;
    cum += w[i];
    if (u < cum) return i;
  }
  return last_positive;  // floating-point tail
}

}  // namespace milgan
