#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "qmann/opcounts.hpp"
#include "qmann/rng.hpp"

namespace qmann {

/// Signed fixed-point layout: 1 sign bit, `iwl` integer bits, `frac`
/// fraction bits. Values are multiples of 2^-frac in
/// [-(2^iwl - 2^-frac), 2^iwl - 2^-frac]. Textual form "Q<iwl>.<frac>".
struct QFormat {
  int iwl = 0;
  int frac = 0;

  int total_bits() const { return 1 + iwl + frac; }
  std::int64_t max_raw() const {
    return (std::int64_t{1} << (iwl + frac)) - 1;
  }
  double resolution() const { return std::ldexp(1.0, -frac); }
  double max_value() const {
    return std::ldexp(static_cast<double>(max_raw()), -frac);
  }
  /// 2^iwl, the magnitude at which saturation starts.
  double overflow_threshold() const { return std::ldexp(1.0, iwl); }

  bool valid() const {
    return iwl >= 0 && frac >= 0 && iwl + frac >= 1 && total_bits() <= 32;
  }

  bool operator==(const QFormat&) const = default;
};

/// Parses "Q<iwl>.<frac>" (case-insensitive). Throws std::invalid_argument
/// on malformed or out-of-range input.
QFormat parse_qformat(std::string_view text);
std::string to_string(const QFormat& fmt);

enum class Rounding { NearestEven, Stochastic };

/// Per-computation quantization context: rounding policy, saturation
/// tally and optional arithmetic instrumentation. One context per
/// component per run; contexts are not shared across threads.
struct FxContext {
  Rounding rounding = Rounding::NearestEven;
  Rng* rng = nullptr;       // required for stochastic rounding
  OpCounts* ops = nullptr;  // optional energy instrumentation
  std::uint64_t overflow_count = 0;
};

/// One fixed-point value. Stored as the exact scaled integer
/// raw = value * 2^frac so arithmetic is bit-reproducible; reals appear
/// only at the quantize/dequantize boundary.
struct FixedScalar {
  std::int64_t raw = 0;
  QFormat fmt;

  /// Sign of the value, with sign(0) = +1.
  int sign() const { return raw < 0 ? -1 : +1; }
  /// Magnitude bits, least-significant first: bit k weighs 2^(k-frac).
  std::uint64_t magnitude_bits() const {
    return static_cast<std::uint64_t>(raw < 0 ? -raw : raw);
  }
  double value() const {
    return std::ldexp(static_cast<double>(raw), -fmt.frac);
  }

  bool operator==(const FixedScalar&) const = default;
};

/// Rounds x onto the format grid, saturating at the range edges.
/// Saturation from |x| >= 2^iwl bumps ctx.overflow_count. NaN is a
/// domain error.
FixedScalar quantize(double x, const QFormat& fmt, FxContext& ctx);

/// Analytic worst-case quantization error: 2^-frac while |x| < 2^iwl,
/// otherwise the distance |2^iwl - |x|| to the representable range.
double error_bound(double x, const QFormat& fmt);

double dequantize(const FixedScalar& s);

/// Exact re-representation in another format, rounding (and possibly
/// saturating) as needed.
FixedScalar rescale(const FixedScalar& a, const QFormat& to, FxContext& ctx);

/// Saturating add/multiply of two values in the same format. Mismatched
/// formats are an error; use rescale first. Each call logs one op to the
/// attached counter.
FixedScalar fx_add(const FixedScalar& a, const FixedScalar& b, FxContext& ctx);
FixedScalar fx_mul(const FixedScalar& a, const FixedScalar& b, FxContext& ctx);

/// Rank-1/2 tensor of fixed-point values sharing one format, with its own
/// saturation tally.
struct FixedTensor {
  std::vector<std::int64_t> raw;  // row-major
  std::size_t rows = 0;
  std::size_t cols = 0;
  QFormat fmt;
  std::uint64_t overflow_count = 0;

  std::size_t size() const { return raw.size(); }
  std::int64_t& at(std::size_t r, std::size_t c) { return raw[r * cols + c]; }
  std::int64_t at(std::size_t r, std::size_t c) const {
    return raw[r * cols + c];
  }
  const std::int64_t* row(std::size_t r) const { return raw.data() + r * cols; }
  FixedScalar scalar(std::size_t i) const { return {raw[i], fmt}; }
  double value(std::size_t i) const {
    return std::ldexp(static_cast<double>(raw[i]), -fmt.frac);
  }
};

FixedTensor quantize_tensor(const std::vector<double>& data, std::size_t rows,
                            std::size_t cols, const QFormat& fmt,
                            FxContext& ctx);
std::vector<double> dequantize_tensor(const FixedTensor& t);

/// Elementwise rescale into another format.
FixedTensor rescale_tensor(const FixedTensor& t, const QFormat& to,
                           FxContext& ctx);

/// JSON wire form: exact scaled integers plus the format header.
std::string tensor_to_json(const FixedTensor& t);
FixedTensor tensor_from_json(const std::string& text);

}  // namespace qmann
