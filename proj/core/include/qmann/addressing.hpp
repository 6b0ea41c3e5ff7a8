#pragma once

#include <span>
#include <vector>

#include "qmann/fxp.hpp"
#include "qmann/similarity.hpp"

namespace qmann {

/// Normalized read weights over the used memory slots: non-negative,
/// summing to 1 within float accuracy (or within slots * resolution once
/// re-quantized).
struct ReadWeights {
  std::vector<double> w;

  std::size_t size() const { return w.size(); }
  double operator[](std::size_t i) const { return w[i]; }
};

enum class SimilarityKind { Dot, Hamming };

/// Softmax of per-slot similarity scores. The scores may come from any
/// similarity; this is the float normalization step.
ReadWeights address_from_scores(std::span<const double> scores,
                                OpCounts* ops = nullptr);

/// Content addressing over float memory rows: scores each row of
/// `memory` (used rows x key dim) against the key with the dot product,
/// then normalizes. Throws on an empty memory or a dimension mismatch.
ReadWeights content_address(const std::vector<std::vector<double>>& memory,
                            std::span<const double> key);

/// Content addressing over fixed memory rows. Dot scores run through
/// saturating fixed arithmetic (saturations land in ctx and the record);
/// the bounded similarity accumulates exactly. The softmax itself is
/// evaluated in float either way, and the caller re-quantizes the
/// weights before the memory read.
ReadWeights content_address_fixed(const FixedTensor& memory,
                                  std::size_t used_rows, const FixedTensor& key,
                                  SimilarityKind kind,
                                  const HammingWeights& hamming_w,
                                  FxContext& ctx, SimilarityRecord* record,
                                  std::vector<double>* scores_out = nullptr);

/// Content addressing with a sign-binarized key: dot scores reduce to
/// saturating adds.
ReadWeights content_address_signed(const FixedTensor& memory,
                                   std::size_t used_rows,
                                   std::span<const double> key_signs,
                                   FxContext& ctx, SimilarityRecord* record,
                                   std::vector<double>* scores_out = nullptr);

}  // namespace qmann
