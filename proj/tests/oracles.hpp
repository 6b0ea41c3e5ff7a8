#pragma once

// Test-only reference computations, kept independent of the library's
// arithmetic paths: long-double evaluation, explicit grid scans and
// per-formula expansions instead of the integer kernels under test.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <vector>

#include "qmann/fxp.hpp"

namespace oracle {

// Nearest representable value under round-to-nearest-even, found by
// scanning the neighboring grid points rather than by shifting.
inline double quantize_grid_scan(double x, const qmann::QFormat& fmt) {
  const long double res = powl(2.0L, -fmt.frac);
  const long double maxraw = powl(2.0L, fmt.iwl + fmt.frac) - 1.0L;
  const auto clamp = [maxraw](long double c) {
    return c > maxraw ? maxraw : (c < -maxraw ? -maxraw : c);
  };
  const long double base =
      floorl(static_cast<long double>(x) / res);
  long double best = clamp(base);
  long double best_err = fabsl(static_cast<long double>(x) - best * res);
  for (long double d = -1.0L; d <= 2.0L; d += 1.0L) {
    const long double c = clamp(base + d);
    const long double err = fabsl(static_cast<long double>(x) - c * res);
    if (err < best_err) {
      best = c;
      best_err = err;
    } else if (err == best_err && fmodl(fabsl(c), 2.0L) == 0.0L &&
               fmodl(fabsl(best), 2.0L) != 0.0L) {
      best = c;  // ties to the even raw value
    }
  }
  return static_cast<double>(best * res);
}

struct ExactResult {
  double value = 0.0;
  bool overflowed = false;
};

// Saturating grid arithmetic via long double and the platform's
// to-nearest rounding (ties to even).
inline ExactResult exact_to_grid(long double exact, const qmann::QFormat& fmt) {
  const long double res = powl(2.0L, -fmt.frac);
  const long double limit = powl(2.0L, fmt.iwl);
  const long double maxraw = powl(2.0L, fmt.iwl + fmt.frac) - 1.0L;
  ExactResult r;
  r.overflowed = fabsl(exact) >= limit;
  long double raw = nearbyintl(exact / res);
  if (raw > maxraw) raw = maxraw;
  if (raw < -maxraw) raw = -maxraw;
  r.value = static_cast<double>(raw * res);
  return r;
}

inline ExactResult add_exact(double a, double b, const qmann::QFormat& fmt) {
  return exact_to_grid(static_cast<long double>(a) + b, fmt);
}

inline ExactResult mul_exact(double a, double b, const qmann::QFormat& fmt) {
  return exact_to_grid(static_cast<long double>(a) * b, fmt);
}

inline int bit_of(std::int64_t raw, int k) {
  const std::uint64_t mag = static_cast<std::uint64_t>(std::llabs(raw));
  return static_cast<int>((mag >> k) & 1);
}

inline int sign_of(std::int64_t raw) { return raw < 0 ? -1 : +1; }

// Weighted-XNOR similarity of two scalars, written as the formula reads:
// per-bit pow() terms, no integer folding.
inline long double hamming_pair(std::int64_t araw, std::int64_t braw, int n,
                                int alpha) {
  long double acc = 0.0L;
  for (int k = 0; k <= n - 2; ++k) {
    const int xnr = bit_of(araw, k) == bit_of(braw, k) ? 1 : 0;
    acc += powl(2.0L, k + alpha - n) * xnr;
  }
  return sign_of(araw) * sign_of(braw) * acc;
}

inline double hamming_vector(const std::vector<std::int64_t>& a,
                             const std::vector<std::int64_t>& b, int n,
                             int alpha) {
  long double acc = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += hamming_pair(a[i], b[i], n, alpha);
  }
  return static_cast<double>(acc);
}

// Per-element approximate gradient, expanded term by term.
inline double hamming_grad_element(std::int64_t araw, std::int64_t braw, int n,
                                   int alpha) {
  const int su = sign_of(araw);
  const int sv = sign_of(braw);
  long double first = su * powl(2.0L, alpha) * (su - sv);
  long double second = 0.0L;
  for (int k = 0; k <= n - 2; ++k) {
    second += sv * powl(2.0L, alpha) * (bit_of(araw, k) - bit_of(braw, k));
  }
  return static_cast<double>(first - second);
}

}  // namespace oracle
