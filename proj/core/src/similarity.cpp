#include "qmann/similarity.hpp"

#include <cmath>
#include <stdexcept>

namespace qmann {

namespace {

void require_same_length(std::size_t a, std::size_t b) {
  if (a != b) {
    throw std::invalid_argument("vector length mismatch: " +
                                std::to_string(a) + " vs " +
                                std::to_string(b));
  }
}

}  // namespace

double dot_similarity(std::span<const double> u, std::span<const double> v) {
  require_same_length(u.size(), v.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) acc += u[i] * v[i];
  return acc;
}

FixedScalar dot_similarity_fixed(const FixedTensor& u, std::size_t u_row,
                                 const FixedTensor& v, std::size_t v_row,
                                 FxContext& ctx, SimilarityRecord* record) {
  require_same_length(u.cols, v.cols);
  if (u.fmt != v.fmt) {
    throw std::invalid_argument("dot similarity needs a shared format: " +
                                to_string(u.fmt) + " vs " + to_string(v.fmt));
  }
  const std::uint64_t before = ctx.overflow_count;
  FixedScalar acc{0, u.fmt};
  for (std::size_t i = 0; i < u.cols; ++i) {
    const FixedScalar p = fx_mul(u.scalar(u_row * u.cols + i),
                                 v.scalar(v_row * v.cols + i), ctx);
    acc = fx_add(acc, p, ctx);
  }
  if (record != nullptr) {
    record->overflow_events += ctx.overflow_count - before;
    record->record(acc.value());
  }
  return acc;
}

FixedScalar dot_similarity_signed(const FixedTensor& u, std::size_t u_row,
                                  std::span<const double> signs,
                                  FxContext& ctx, SimilarityRecord* record) {
  require_same_length(u.cols, signs.size());
  const std::uint64_t before = ctx.overflow_count;
  FixedScalar acc{0, u.fmt};
  for (std::size_t i = 0; i < u.cols; ++i) {
    FixedScalar term = u.scalar(u_row * u.cols + i);
    if (signs[i] < 0.0) term.raw = -term.raw;
    acc = fx_add(acc, term, ctx);
  }
  if (record != nullptr) {
    record->overflow_events += ctx.overflow_count - before;
    record->record(acc.value());
  }
  return acc;
}

double cosine_similarity(std::span<const double> u,
                         std::span<const double> v) {
  require_same_length(u.size(), v.size());
  double uu = 0.0, vv = 0.0, uv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uu += u[i] * u[i];
    vv += v[i] * v[i];
    uv += u[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) return 0.0;
  return uv / std::sqrt(uu * vv);
}

DotErrorDecomposition dot_error_decomposition(std::span<const double> u,
                                              std::span<const double> v,
                                              const QFormat& fmt) {
  require_same_length(u.size(), v.size());
  FxContext ctx;
  DotErrorDecomposition out;
  double acc_hat = 0.0;
  const double limit = fmt.overflow_threshold();
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double uh = quantize(u[i], fmt, ctx).value();
    const double vh = quantize(v[i], fmt, ctx).value();
    const double eu = uh - u[i];
    const double ev = vh - v[i];
    out.z += u[i] * v[i];
    out.first_order += u[i] * ev + v[i] * eu;
    acc_hat += uh * vh;
    // Every product and partial sum must stay in range; a fixed
    // evaluation would otherwise clamp and the expansion would not
    // apply.
    if (std::abs(uh * vh) >= limit || std::abs(acc_hat) >= limit) {
      throw std::domain_error(
          "dot error decomposition is invalid under saturation");
    }
  }
  if (ctx.overflow_count != 0) {
    throw std::domain_error(
        "dot error decomposition is invalid under saturation");
  }
  out.z_hat = acc_hat;
  out.residual = out.z_hat - out.z - out.first_order;
  return out;
}

double hamming_similarity(const FixedTensor& u, std::size_t u_row,
                          const FixedTensor& v, std::size_t v_row,
                          const HammingWeights& w, SimilarityRecord* record,
                          OpCounts* ops) {
  require_same_length(u.cols, v.cols);
  if (u.fmt != v.fmt) {
    throw std::invalid_argument("hamming similarity needs a shared format: " +
                                to_string(u.fmt) + " vs " + to_string(v.fmt));
  }
  if (u.fmt.total_bits() != w.n) {
    throw std::invalid_argument("weight table is for " + std::to_string(w.n) +
                                "-bit operands, format is " +
                                to_string(u.fmt));
  }
  // Weighted bit agreement per element is an integer in
  // [0, 2^(n-1) - 1]; fold the shared 2^(alpha-n) scale out once at the
  // end, keeping the accumulation exact.
  const int nbits = w.n;
  const std::uint64_t mask = (std::uint64_t{1} << (nbits - 1)) - 1;
  std::int64_t acc = 0;
  for (std::size_t i = 0; i < u.cols; ++i) {
    const FixedScalar a = u.scalar(u_row * u.cols + i);
    const FixedScalar b = v.scalar(v_row * v.cols + i);
    const std::uint64_t agree =
        ~(a.magnitude_bits() ^ b.magnitude_bits()) & mask;
    acc += static_cast<std::int64_t>(a.sign() * b.sign()) *
           static_cast<std::int64_t>(agree);
  }
  if (ops != nullptr) {
    // Cost of what the kernel does per element pair: the weighted
    // agreement folds n-1 shifted bits with n-2 adds, plus one add into
    // the slot accumulator. XNOR and shifts are not priced.
    ops->count_fixed_add(nbits,
                         u.cols * static_cast<std::uint64_t>(nbits - 1));
  }
  const double result =
      std::ldexp(static_cast<double>(acc), w.alpha - w.n);
  if (record != nullptr) record->record(result);
  return result;
}

std::vector<double> hamming_backward(const FixedTensor& u, std::size_t u_row,
                                     const FixedTensor& v, std::size_t v_row,
                                     const HammingWeights& w) {
  require_same_length(u.cols, v.cols);
  if (u.fmt != v.fmt || u.fmt.total_bits() != w.n) {
    throw std::invalid_argument(
        "hamming backward needs one shared format matching the weights");
  }
  const int nbits = w.n;
  std::vector<double> grad(u.cols, 0.0);
  const double scale = std::ldexp(1.0, w.alpha);
  for (std::size_t i = 0; i < u.cols; ++i) {
    const FixedScalar a = u.scalar(u_row * u.cols + i);
    const FixedScalar b = v.scalar(v_row * v.cols + i);
    const int su = a.sign();
    const int sv = b.sign();
    const std::uint64_t ua = a.magnitude_bits();
    const std::uint64_t vb = b.magnitude_bits();
    int bit_diff = 0;  // sum_k (u_bit_k - v_bit_k)
    for (int k = 0; k < nbits - 1; ++k) {
      bit_diff += static_cast<int>((ua >> k) & 1) -
                  static_cast<int>((vb >> k) & 1);
    }
    grad[i] = scale * static_cast<double>(su * (su - sv)) -
              scale * static_cast<double>(sv * bit_diff);
  }
  return grad;
}

std::vector<double> softmax(std::span<const double> z, OpCounts* ops) {
  if (z.empty()) {
    throw std::invalid_argument("softmax of an empty vector");
  }
  double zmax = z[0];
  for (const double zi : z) zmax = std::max(zmax, zi);
  std::vector<double> out(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(z[i] - zmax);
    sum += out[i];
  }
  const double inv = 1.0 / sum;
  for (auto& yi : out) yi *= inv;
  if (ops != nullptr) {
    // Max subtraction and sum accumulation are adds; the normalization is
    // one multiply per element. exp itself is not in the price table.
    ops->count_float_add(2 * z.size());
    ops->count_float_mul(z.size());
  }
  return out;
}

SoftmaxErrorBound softmax_error_bound(std::span<const double> z,
                                      std::span<const double> eps) {
  require_same_length(z.size(), eps.size());
  SoftmaxErrorBound out;
  if (z.empty()) return out;
  std::vector<double> zp(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) zp[i] = z[i] + eps[i];
  const std::vector<double> y = softmax(z);
  const std::vector<double> yp = softmax(zp);
  out.ratios.resize(z.size());
  double emax = eps[0], emin = eps[0];
  for (const double e : eps) {
    emax = std::max(emax, e);
    emin = std::min(emin, e);
  }
  out.eps_max = emax;
  out.eps_spread = emax - emin;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out.ratios[i] = yp[i] / y[i];
    out.max_ratio = std::max(out.max_ratio, out.ratios[i]);
  }
  return out;
}

}  // namespace qmann
