#pragma once

#include <cmath>
#include <cstdint>

namespace sve {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Deterministic random stream. All sampling in the project goes through this
// class (std::* distributions are implementation-defined and would break
// byte-for-byte reproducibility of outputs).
//
// In midpoint mode uniform() returns 0.5 and normal() returns 0, turning
// stratified sampling into exact midpoints. Used by evaluation renders and
// degenerate-case tests.
class RngStream {
 public:
  explicit RngStream(uint64_t seed) : state_(splitmix64(seed ^ 0x73766566ull)) {}

  // Independent stream for (seed, stream, substream), order-insensitive to
  // how many draws other streams made.
  static RngStream derive(uint64_t seed, uint64_t stream, uint64_t substream = 0) {
    RngStream r(0);
    r.state_ = splitmix64(splitmix64(seed) ^ splitmix64(stream * 0x9e3779b97f4a7c15ull + substream));
    return r;
  }

  uint64_t next_u64() {
    state_ = state_ * 6364136223846793005ull + 1442695040888963407ull;
    return splitmix64(state_);
  }

  // [0, 1)
  double uniform() {
    if (midpoint_mode) return 0.5;
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  uint32_t uniform_int(uint32_t n) {
    if (n <= 1) return 0;
    // widening-multiply trick; bias is < 2^-32 and irrelevant here
    return static_cast<uint32_t>((static_cast<uint64_t>(static_cast<uint32_t>(next_u64())) * n) >> 32);
  }

  double normal() {
    if (midpoint_mode) return 0.0;
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 1e-300) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  bool midpoint_mode = false;

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace sve
