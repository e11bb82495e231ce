#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace kdseq {

struct error : std::runtime_error {
  explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// Kernel shape contract violations. Message names the kernel and both shapes.
struct shape_error : error { using error::error; };
// Misuse of an API outside shape rules (non-scalar loss, non-one-hot target, empty dataset).
struct contract_error : error { using error::error; };
// Math domain violations: log of non-positive values, sigma1 = 0.
struct numeric_domain_error : error { using error::error; };
// Bad configuration values (T <= 0, unknown strategy, missing teacher).
struct config_error : error { using error::error; };
// Tape misuse: backward twice on the same loss node.
struct state_error : error { using error::error; };
// Teacher/student or stream frame counts disagree.
struct alignment_error : error { using error::error; };
// Label sequence cannot be aligned within the given frame count.
struct infeasible_alignment_error : error { using error::error; };
// Brute-force oracle size guard.
struct size_guard_error : error { using error::error; };
// Malformed dataset or curve file; message cites the line number.
struct parse_error : error { using error::error; };
// Dataset/checkpoint produced under a different vocabulary.
struct incompatibility_error : error { using error::error; };
struct io_error : error { using error::error; };
// Loss went non-finite; message carries the last curve records.
struct training_diverged_error : error { using error::error; };
// Uncertainty weighting collapsed (sigma < 1e-4), degenerate task balance.
struct sigma_collapse_error : error { using error::error; };

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 1469598103934665603ull) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; i++) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Deterministic RNG. Distributions are hand-rolled so that the stream depends
// only on mt19937_64, not on libstdc++ distribution internals.
class Rng {
public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  // [0, 1)
  double uniform() { return (eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive on both ends
  int64_t uniform_int(int64_t lo, int64_t hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(eng_() % span);
  }

  // Box-Muller, one value per call; the spare is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double th = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(th);
    has_spare_ = true;
    return r * std::cos(th);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  uint64_t next_u64() { return eng_(); }

private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Plain row-major matrix for data storage outside the autodiff graph.
struct Mat {
  size_t rows = 0, cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}
  double& operator()(size_t r, size_t c) { return v[r * cols + c]; }
  double operator()(size_t r, size_t c) const { return v[r * cols + c]; }
  size_t size() const { return rows * cols; }
};

// Shortest round-trip decimal form of a double, locale-independent.
inline std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw parse_error("not a number: '" + s + "'");
  return v;
}

}  // namespace kdseq
