#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "qmann/fxp.hpp"
#include "qmann/histogram.hpp"

namespace qmann {

/// Per-bit weights for the bounded Hamming similarity: bit k of an n-bit
/// operand weighs 2^(k+alpha-n), so agreement on high bits counts more
/// and the total per-element contribution is capped at
/// (2^(n-1) - 1) * 2^(alpha-n).
struct HammingWeights {
  int alpha = -3;
  int n = 8;

  double weight(int k) const { return std::ldexp(1.0, k + alpha - n); }
  double sum() const {
    return std::ldexp(static_cast<double>((std::int64_t{1} << (n - 1)) - 1),
                      alpha - n);
  }
  std::vector<double> table() const {
    std::vector<double> w(static_cast<std::size_t>(n - 1));
    for (int k = 0; k < n - 1; ++k) w[static_cast<std::size_t>(k)] = weight(k);
    return w;
  }
};

/// Rolling capture of similarity scores for one training run: a binned
/// snapshot of the score distribution plus the saturation events the
/// scoring incurred.
struct SimilarityRecord {
  Histogram histogram;
  std::uint64_t overflow_events = 0;

  SimilarityRecord() = default;
  explicit SimilarityRecord(double range) : histogram(range) {}

  void record(double value) { histogram.record(value); }
};

/// Exact float dot product.
double dot_similarity(std::span<const double> u, std::span<const double> v);

/// Fixed-point dot product: elementwise fx_mul, accumulated with
/// saturating fx_add in the shared format. Saturations are charged to
/// ctx and mirrored into the record when one is attached.
FixedScalar dot_similarity_fixed(const FixedTensor& u, std::size_t u_row,
                                 const FixedTensor& v, std::size_t v_row,
                                 FxContext& ctx,
                                 SimilarityRecord* record = nullptr);

/// Dot product against a {-1,+1} vector: multiplications collapse to
/// sign flips, so the kernel is saturating adds only.
FixedScalar dot_similarity_signed(const FixedTensor& u, std::size_t u_row,
                                  std::span<const double> signs,
                                  FxContext& ctx,
                                  SimilarityRecord* record = nullptr);

/// Float-only cosine similarity, kept as a reference measure.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

/// Splits the quantized dot product into the float score Z, the
/// first-order error term sum(u_i*e_v_i + v_i*e_u_i), and the residual
/// Z_hat - Z - first_order, which equals sum(e_u_i*e_v_i) up to float
/// accumulation error. Requires a saturation-free accumulation; a
/// saturating input pair is a domain error because clamping breaks the
/// decomposition.
struct DotErrorDecomposition {
  double z = 0.0;            // float dot product
  double z_hat = 0.0;        // dot product of the quantized vectors
  double first_order = 0.0;  // sum(u_i*e_v_i + v_i*e_u_i)
  double residual = 0.0;     // z_hat - z - first_order
};
DotErrorDecomposition dot_error_decomposition(std::span<const double> u,
                                              std::span<const double> v,
                                              const QFormat& fmt);

/// Bounded similarity between two fixed vectors sharing one format:
/// sign(u_i)*sign(v_i) times the weighted XNOR agreement of their
/// magnitude bits, summed over elements. Computed with sign products,
/// XNOR and shift-adds on an exact integer accumulator, so the result
/// never saturates: |result| <= dim * sum(weights).
double hamming_similarity(const FixedTensor& u, std::size_t u_row,
                          const FixedTensor& v, std::size_t v_row,
                          const HammingWeights& w,
                          SimilarityRecord* record = nullptr,
                          OpCounts* ops = nullptr);

/// Shift-and-add approximate gradient of hamming_similarity with respect
/// to each element of u; swap the operands for the gradient with respect
/// to v. Element i receives
///   sign(u_i)*2^alpha*(sign(u_i)-sign(v_i))
///   - sum_k sign(v_i)*2^alpha*(u_bit_ik - v_bit_ik).
std::vector<double> hamming_backward(const FixedTensor& u, std::size_t u_row,
                                     const FixedTensor& v, std::size_t v_row,
                                     const HammingWeights& w);

/// Softmax perturbation oracle: evaluates softmax at z and z+eps and
/// returns the per-element output ratios. Each ratio is bounded by
/// exp(max_spread) where max_spread = max_i(eps_i) - min_i(eps_i); the
/// bound against max_i(eps_i) alone does not hold in general, so both
/// exponents are reported.
struct SoftmaxErrorBound {
  std::vector<double> ratios;  // perturbed / exact, per element
  double max_ratio = 0.0;
  double eps_max = 0.0;     // max_i eps_i
  double eps_spread = 0.0;  // max_i eps_i - min_i eps_i
};
SoftmaxErrorBound softmax_error_bound(std::span<const double> z,
                                      std::span<const double> eps);

/// Numerically stable softmax (max subtraction), evaluated in float.
std::vector<double> softmax(std::span<const double> z,
                            OpCounts* ops = nullptr);

}  // namespace qmann
