#include "qmann/fxp.hpp"

#include <cctype>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace qmann {

namespace {

void require_valid(const QFormat& fmt) {
  if (!fmt.valid()) {
    throw std::invalid_argument("invalid Q format: " + to_string(fmt));
  }
}

// Round-half-even division of p by 2^sh, exact in integers.
std::int64_t shift_round_even(std::int64_t p, int sh) {
  if (sh == 0) return p;
  const std::int64_t q = p >> sh;  // floor
  const std::int64_t r = p - (q << sh);
  const std::int64_t half = std::int64_t{1} << (sh - 1);
  if (r > half || (r == half && (q & 1))) return q + 1;
  return q;
}

std::int64_t shift_round_stochastic(std::int64_t p, int sh, Rng& rng) {
  if (sh == 0) return p;
  const std::int64_t q = p >> sh;
  const std::int64_t r = p - (q << sh);
  const double pr =
      static_cast<double>(r) / static_cast<double>(std::int64_t{1} << sh);
  return q + (rng.uniform() < pr ? 1 : 0);
}

// Clamps a rounded raw value into range. Overflow accounting follows the
// error analysis: an overflow is charged when the *exact* result reached
// |2^iwl|, which the caller decides; a rounding that lands one step past
// the last representable value is clamped silently.
std::int64_t clamp_raw(std::int64_t raw, const QFormat& fmt, bool overflowed,
                       FxContext& ctx) {
  const std::int64_t max = fmt.max_raw();
  if (overflowed) ctx.overflow_count += 1;
  if (raw > max) return max;
  if (raw < -max) return -max;
  return raw;
}

}  // namespace

QFormat parse_qformat(std::string_view text) {
  if (text.size() < 4 || (text[0] != 'Q' && text[0] != 'q')) {
    throw std::invalid_argument("Q format must look like \"Q5.2\": got \"" +
                                std::string(text) + "\"");
  }
  const auto dot = text.find('.');
  if (dot == std::string_view::npos || dot == 1 || dot + 1 >= text.size()) {
    throw std::invalid_argument("Q format must look like \"Q5.2\": got \"" +
                                std::string(text) + "\"");
  }
  QFormat fmt;
  try {
    std::size_t used = 0;
    const std::string iwl_s(text.substr(1, dot - 1));
    const std::string frac_s(text.substr(dot + 1));
    fmt.iwl = std::stoi(iwl_s, &used);
    if (used != iwl_s.size()) throw std::invalid_argument(iwl_s);
    fmt.frac = std::stoi(frac_s, &used);
    if (used != frac_s.size()) throw std::invalid_argument(frac_s);
  } catch (const std::exception&) {
    throw std::invalid_argument("Q format must look like \"Q5.2\": got \"" +
                                std::string(text) + "\"");
  }
  if (!fmt.valid()) {
    throw std::invalid_argument("Q format out of range: \"" +
                                std::string(text) + "\"");
  }
  return fmt;
}

std::string to_string(const QFormat& fmt) {
  return "Q" + std::to_string(fmt.iwl) + "." + std::to_string(fmt.frac);
}

FixedScalar quantize(double x, const QFormat& fmt, FxContext& ctx) {
  require_valid(fmt);
  if (std::isnan(x)) {
    throw std::domain_error("cannot quantize NaN");
  }
  const std::int64_t max = fmt.max_raw();
  if (std::abs(x) >= fmt.overflow_threshold()) {
    ctx.overflow_count += 1;
    return {x < 0 ? -max : max, fmt};
  }
  // |x| < 2^iwl, so the exact scaled value fits comfortably in int64.
  const double scaled = std::ldexp(x, fmt.frac);
  const double fl = std::floor(scaled);
  const double rem = scaled - fl;
  std::int64_t raw = static_cast<std::int64_t>(fl);
  switch (ctx.rounding) {
    case Rounding::NearestEven:
      if (rem > 0.5 || (rem == 0.5 && (raw & 1))) raw += 1;
      break;
    case Rounding::Stochastic:
      if (ctx.rng == nullptr) {
        throw std::invalid_argument("stochastic rounding needs a seeded Rng");
      }
      if (ctx.rng->uniform() < rem) raw += 1;
      break;
  }
  // Rounding may land on +/-2^iwl itself, one step past the last
  // representable value; clamp without charging an overflow.
  if (raw > max) raw = max;
  if (raw < -max) raw = -max;
  return {raw, fmt};
}

double error_bound(double x, const QFormat& fmt) {
  require_valid(fmt);
  const double limit = fmt.overflow_threshold();
  if (std::abs(x) < limit) return fmt.resolution();
  return std::abs(limit - std::abs(x));
}

double dequantize(const FixedScalar& s) { return s.value(); }

FixedScalar rescale(const FixedScalar& a, const QFormat& to, FxContext& ctx) {
  require_valid(to);
  if (a.fmt == to) return a;
  std::int64_t raw;
  bool overflowed;
  if (to.frac >= a.fmt.frac) {
    raw = a.raw << (to.frac - a.fmt.frac);
    overflowed = std::abs(raw) > to.max_raw();
  } else {
    const int sh = a.fmt.frac - to.frac;
    // Exact value hits 2^to.iwl when |a.raw| >= (max+1) << sh.
    overflowed = std::abs(a.raw) >= ((to.max_raw() + 1) << sh);
    raw = ctx.rounding == Rounding::Stochastic
              ? shift_round_stochastic(a.raw, sh, *ctx.rng)
              : shift_round_even(a.raw, sh);
  }
  return {clamp_raw(raw, to, overflowed, ctx), to};
}

FixedScalar fx_add(const FixedScalar& a, const FixedScalar& b, FxContext& ctx) {
  if (a.fmt != b.fmt) {
    throw std::invalid_argument("fx_add format mismatch: " +
                                to_string(a.fmt) + " vs " + to_string(b.fmt));
  }
  if (ctx.ops) ctx.ops->count_fixed_add(a.fmt.total_bits());
  const std::int64_t sum = a.raw + b.raw;
  const bool overflowed = std::abs(sum) > a.fmt.max_raw();
  return {clamp_raw(sum, a.fmt, overflowed, ctx), a.fmt};
}

FixedScalar fx_mul(const FixedScalar& a, const FixedScalar& b, FxContext& ctx) {
  if (a.fmt != b.fmt) {
    throw std::invalid_argument("fx_mul format mismatch: " +
                                to_string(a.fmt) + " vs " + to_string(b.fmt));
  }
  if (ctx.ops) ctx.ops->count_fixed_mul(a.fmt.total_bits());
  // The product of the scaled integers is exact and carries scale
  // 2^-2frac; fold one factor of 2^-frac back out with the configured
  // rounding.
  const std::int64_t prod = a.raw * b.raw;
  const bool overflowed =
      std::abs(prod) >= ((a.fmt.max_raw() + 1) << a.fmt.frac);
  const std::int64_t raw =
      ctx.rounding == Rounding::Stochastic
          ? shift_round_stochastic(prod, a.fmt.frac, *ctx.rng)
          : shift_round_even(prod, a.fmt.frac);
  return {clamp_raw(raw, a.fmt, overflowed, ctx), a.fmt};
}

FixedTensor quantize_tensor(const std::vector<double>& data, std::size_t rows,
                            std::size_t cols, const QFormat& fmt,
                            FxContext& ctx) {
  if (data.size() != rows * cols) {
    throw std::invalid_argument("tensor shape does not match data size");
  }
  FixedTensor t;
  t.rows = rows;
  t.cols = cols;
  t.fmt = fmt;
  t.raw.resize(data.size());
  const std::uint64_t before = ctx.overflow_count;
  for (std::size_t i = 0; i < data.size(); ++i) {
    t.raw[i] = quantize(data[i], fmt, ctx).raw;
  }
  t.overflow_count = ctx.overflow_count - before;
  return t;
}

std::vector<double> dequantize_tensor(const FixedTensor& t) {
  std::vector<double> out(t.raw.size());
  for (std::size_t i = 0; i < t.raw.size(); ++i) out[i] = t.value(i);
  return out;
}

FixedTensor rescale_tensor(const FixedTensor& t, const QFormat& to,
                           FxContext& ctx) {
  if (t.fmt == to) return t;
  FixedTensor out;
  out.rows = t.rows;
  out.cols = t.cols;
  out.fmt = to;
  out.raw.resize(t.raw.size());
  const std::uint64_t before = ctx.overflow_count;
  for (std::size_t i = 0; i < t.raw.size(); ++i) {
    out.raw[i] = rescale(t.scalar(i), to, ctx).raw;
  }
  out.overflow_count = ctx.overflow_count - before;
  return out;
}

std::string tensor_to_json(const FixedTensor& t) {
  nlohmann::json j;
  j["format"] = to_string(t.fmt);
  j["rows"] = t.rows;
  j["cols"] = t.cols;
  j["raw"] = t.raw;
  return j.dump();
}

FixedTensor tensor_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  FixedTensor t;
  t.fmt = parse_qformat(j.at("format").get<std::string>());
  t.rows = j.at("rows").get<std::size_t>();
  t.cols = j.at("cols").get<std::size_t>();
  t.raw = j.at("raw").get<std::vector<std::int64_t>>();
  if (t.raw.size() != t.rows * t.cols) {
    throw std::invalid_argument("tensor payload does not match its shape");
  }
  const std::int64_t max = t.fmt.max_raw();
  for (const auto r : t.raw) {
    if (r > max || r < -max) {
      throw std::invalid_argument("tensor payload exceeds format range");
    }
  }
  return t;
}

}  // namespace qmann
