#pragma once

#include <cstdint>

namespace qmann {

/// Arithmetic-operation tally, bucketed to the widths the energy table
/// prices. Fixed-point ops at up to 8 bits land in the 8-bit bucket,
/// wider ones in the 32-bit bucket. Float ops are tallied at the width
/// the caller states (the model runs its float arithmetic as a stand-in
/// for 32-bit hardware).
struct OpCounts {
  std::uint64_t fixed_add8 = 0;
  std::uint64_t fixed_add32 = 0;
  std::uint64_t fixed_mul8 = 0;
  std::uint64_t fixed_mul32 = 0;
  std::uint64_t float_add16 = 0;
  std::uint64_t float_add32 = 0;
  std::uint64_t float_mul16 = 0;
  std::uint64_t float_mul32 = 0;

  void count_fixed_add(int bits, std::uint64_t n = 1) {
    (bits <= 8 ? fixed_add8 : fixed_add32) += n;
  }
  void count_fixed_mul(int bits, std::uint64_t n = 1) {
    (bits <= 8 ? fixed_mul8 : fixed_mul32) += n;
  }
  void count_float_add(std::uint64_t n = 1) { float_add32 += n; }
  void count_float_mul(std::uint64_t n = 1) { float_mul32 += n; }

  OpCounts& operator+=(const OpCounts& o) {
    fixed_add8 += o.fixed_add8;
    fixed_add32 += o.fixed_add32;
    fixed_mul8 += o.fixed_mul8;
    fixed_mul32 += o.fixed_mul32;
    float_add16 += o.float_add16;
    float_add32 += o.float_add32;
    float_mul16 += o.float_mul16;
    float_mul32 += o.float_mul32;
    return *this;
  }

  std::uint64_t total() const {
    return fixed_add8 + fixed_add32 + fixed_mul8 + fixed_mul32 + float_add16 +
           float_add32 + float_mul16 + float_mul32;
  }

  bool operator==(const OpCounts&) const = default;
};

}  // namespace qmann
