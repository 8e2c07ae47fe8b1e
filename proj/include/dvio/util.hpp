#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dvio {

enum class ErrorKind {
  InvalidArgument,
  DimensionMismatch,
  MalformedData,
  Io,
  NumericFault,
  NonConvergence,
  DegenerateInput,
};

/// Exception carrying a machine-readable kind alongside the message.
/// The C API maps kinds onto status codes at the library boundary.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

/// Seeded random source used everywhere randomness is needed.
/// One Rng per logical stream keeps draw order independent of unrelated code.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  double uniform(double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(gen_);
  }

  double gaussian(double mean, double sigma) {
    std::normal_distribution<double> d(mean, sigma);
    return d(gen_);
  }

  /// Uniform integer in [0, n).
  uint64_t below(uint64_t n) {
    std::uniform_int_distribution<uint64_t> d(0, n - 1);
    return d(gen_);
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

/// SplitMix64 integer mix; used for procedural textures so that rendered
/// pixels depend only on (coordinates, seed), never on draw order.
inline uint64_t hash_mix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) { return hash_mix(a ^ hash_mix(b)); }

/// hash value in [0,1)
inline double hash_unit(uint64_t a, uint64_t b, uint64_t seed) {
  uint64_t h = hash_combine(hash_combine(seed, a), b);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

std::string format_double(double v);

std::vector<std::string> split(const std::string& s, char sep);
std::string trim(const std::string& s);

bool file_exists(const std::string& path);
void ensure_dir(const std::string& path);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace dvio
