#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace nomon {

/// Milliseconds on the simulated clock. Engines never read wall-clock time.
using Timestamp = std::int64_t;
using Duration = std::int64_t;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TargetKind { character, word_completion, undo, backspace, clear, picture };

inline bool is_corrective(TargetKind k) {
  return k == TargetKind::undo || k == TargetKind::backspace || k == TargetKind::clear;
}

inline std::string_view to_string(TargetKind k) {
  switch (k) {
    case TargetKind::character: return "character";
    case TargetKind::word_completion: return "word_completion";
    case TargetKind::undo: return "undo";
    case TargetKind::backspace: return "backspace";
    case TargetKind::clear: return "clear";
    case TargetKind::picture: return "picture";
  }
  return "?";
}

inline TargetKind target_kind_from_string(std::string_view s) {
  for (auto k : {TargetKind::character, TargetKind::word_completion, TargetKind::undo,
                 TargetKind::backspace, TargetKind::clear, TargetKind::picture}) {
    if (to_string(k) == s) return k;
  }
  throw Error("unknown target kind: " + std::string(s));
}

/// A selectable option. `label` is what a character or completion inserts
/// (a completion's label is the whole word); it is empty for an unfilled
/// completion slot.
struct Target {
  std::string id;
  TargetKind kind = TargetKind::character;
  std::string label;

  bool operator==(const Target&) const = default;
};

/// splitmix64 finalizer; used to derive independent per-run seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return mix64(mix64(mix64(seed) ^ a) ^ (b * 0x2545f4914f6cdd1dULL));
}

/// FNV-1a; a portable string hash for keying random streams.
constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seeded generator. Draws are built from raw mt19937_64 output so sequences
/// do not depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw Error("Rng::below(0)");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller (no cached second value, keeps state simple).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

}  // namespace nomon
