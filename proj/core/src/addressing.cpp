#include "qmann/addressing.hpp"

#include <stdexcept>

namespace qmann {

ReadWeights address_from_scores(std::span<const double> scores,
                                OpCounts* ops) {
  if (scores.empty()) {
    throw std::invalid_argument("cannot address an empty memory");
  }
  return ReadWeights{softmax(scores, ops)};
}

ReadWeights content_address(const std::vector<std::vector<double>>& memory,
                            std::span<const double> key) {
  if (memory.empty()) {
    throw std::invalid_argument("cannot address an empty memory");
  }
  std::vector<double> scores;
  scores.reserve(memory.size());
  for (const auto& row : memory) {
    scores.push_back(dot_similarity(row, key));
  }
  return address_from_scores(scores);
}

ReadWeights content_address_fixed(const FixedTensor& memory,
                                  std::size_t used_rows,
                                  const FixedTensor& key, SimilarityKind kind,
                                  const HammingWeights& hamming_w,
                                  FxContext& ctx, SimilarityRecord* record,
                                  std::vector<double>* scores_out) {
  if (used_rows == 0) {
    throw std::invalid_argument("cannot address an empty memory");
  }
  if (memory.cols != key.cols) {
    throw std::invalid_argument("key dimension does not match memory rows");
  }
  std::vector<double> scores(used_rows);
  for (std::size_t j = 0; j < used_rows; ++j) {
    if (kind == SimilarityKind::Dot) {
      scores[j] = dot_similarity_fixed(memory, j, key, 0, ctx, record).value();
    } else {
      scores[j] = hamming_similarity(memory, j, key, 0, hamming_w, record,
                                     ctx.ops);
    }
  }
  if (scores_out != nullptr) *scores_out = scores;
  return address_from_scores(scores, ctx.ops);
}

ReadWeights content_address_signed(const FixedTensor& memory,
                                   std::size_t used_rows,
                                   std::span<const double> key_signs,
                                   FxContext& ctx, SimilarityRecord* record,
                                   std::vector<double>* scores_out) {
  if (used_rows == 0) {
    throw std::invalid_argument("cannot address an empty memory");
  }
  if (memory.cols != key_signs.size()) {
    throw std::invalid_argument("key dimension does not match memory rows");
  }
  std::vector<double> scores(used_rows);
  for (std::size_t j = 0; j < used_rows; ++j) {
    scores[j] = dot_similarity_signed(memory, j, key_signs, ctx, record).value();
  }
  if (scores_out != nullptr) *scores_out = scores;
  return address_from_scores(scores, ctx.ops);
}

}  // namespace qmann
