#pragma once

#include <cstdint>
#include <random>

namespace thinfb {

// mt19937_64 is specified bit-for-bit; the std distributions are not, so
// uniforms are built from the raw 53 high bits.
class PortableRng {
 public:
  explicit PortableRng(std::uint64_t seed) : gen_(seed) {}
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }  // [0, 1)
  std::uint64_t next() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace thinfb
