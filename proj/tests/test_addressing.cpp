#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "qmann/addressing.hpp"

using namespace qmann;

namespace {

const QFormat kQ5_2{5, 2};
const QFormat kQ2_5{2, 5};

}  // namespace

TEST_CASE("equal scores address uniformly") {
  const std::vector<double> scores(8, 1.7);
  const ReadWeights w = address_from_scores(scores);
  for (std::size_t i = 0; i < w.size(); ++i) {
    CHECK(w[i] == doctest::Approx(0.125).epsilon(1e-12));
  }
}

TEST_CASE("two-slot closed form") {
  const std::vector<double> scores = {std::log(3.0), 0.0};
  const ReadWeights w = address_from_scores(scores);
  CHECK(w[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("a dominant score takes nearly all the weight") {
  std::vector<double> scores(10, 0.0);
  scores[3] = 32.0;  // a full integer range above the rest
  const ReadWeights w = address_from_scores(scores);
  CHECK(w[3] > 0.999999);
}

TEST_CASE("weights normalize and stay non-negative") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> dist(-30.0, 30.0);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> scores(1 + rng() % 50);
    for (auto& s : scores) s = dist(rng);
    const ReadWeights w = address_from_scores(scores);
    double sum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      CHECK(w[i] >= 0.0);
      sum += w[i];
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("shift invariance") {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> dist(-5.0, 5.0);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> scores(12), shifted(12);
    const double c = dist(rng);
    for (int i = 0; i < 12; ++i) {
      scores[i] = dist(rng);
      shifted[i] = scores[i] + c;
    }
    const ReadWeights a = address_from_scores(scores);
    const ReadWeights b = address_from_scores(shifted);
    for (int i = 0; i < 12; ++i) {
      CHECK(std::abs(a[i] - b[i]) <= 1e-9 * std::max(a[i], 1e-30));
    }
  }
}

TEST_CASE("raising one score strictly raises its weight") {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> dist(-3.0, 3.0);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> scores(6);
    for (auto& s : scores) s = dist(rng);
    const std::size_t k = rng() % 6;
    const ReadWeights before = address_from_scores(scores);
    scores[k] += 0.5;
    const ReadWeights after = address_from_scores(scores);
    CHECK(after[k] > before[k]);
  }
}

TEST_CASE("float content addressing over memory rows") {
  const std::vector<std::vector<double>> memory = {
      {1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}};
  const std::vector<double> key = {2.0, 0.0};
  const ReadWeights w = content_address(memory, key);
  CHECK(w.size() == 3);
  CHECK(w[0] > w[1]);
  CHECK(w[2] > w[1]);
  CHECK_THROWS_AS(content_address({}, key), std::invalid_argument);
  const std::vector<double> bad_key = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(content_address(memory, bad_key), std::invalid_argument);
}

TEST_CASE("fixed content addressing records saturations") {
  // four slots of large values against a large key drive the Q5.2 dot
  // into its clamp
  FxContext prep;
  const FixedTensor memory =
      quantize_tensor(std::vector<double>(4 * 16, 1.5), 4, 16, kQ5_2, prep);
  const FixedTensor key =
      quantize_tensor(std::vector<double>(16, 1.5), 1, 16, kQ5_2, prep);
  FxContext ctx;
  SimilarityRecord rec(64.0);
  std::vector<double> scores;
  const ReadWeights w =
      content_address_fixed(memory, 4, key, SimilarityKind::Dot,
                            HammingWeights{-3, 8}, ctx, &rec, &scores);
  CHECK(w.size() == 4);
  CHECK(scores.size() == 4);
  CHECK(ctx.overflow_count > 0);
  CHECK(rec.overflow_events > 0);
  for (const double s : scores) CHECK(s == 31.75);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(w[i] == doctest::Approx(0.25).epsilon(1e-12));
  }

  SUBCASE("the bounded similarity on the same inputs records none") {
    FxContext prep25;
    const FixedTensor mem25 =
        quantize_tensor(std::vector<double>(4 * 16, 1.5), 4, 16, kQ2_5,
                        prep25);
    const FixedTensor key25 =
        quantize_tensor(std::vector<double>(16, 1.5), 1, 16, kQ2_5, prep25);
    FxContext hctx;
    SimilarityRecord hrec(8.0);
    content_address_fixed(mem25, 4, key25, SimilarityKind::Hamming,
                          HammingWeights{-3, 8}, hctx, &hrec, nullptr);
    CHECK(hctx.overflow_count == 0);
    CHECK(hrec.overflow_events == 0);
  }
}

TEST_CASE("sign-key addressing matches the generic dot") {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  std::vector<double> mem_vals(6 * 10);
  for (auto& v : mem_vals) v = dist(rng);
  FxContext prep;
  const FixedTensor memory = quantize_tensor(mem_vals, 6, 10, kQ5_2, prep);
  std::vector<double> signs(10);
  for (auto& s : signs) s = (rng() & 1) ? 1.0 : -1.0;

  FxContext ctx_a;
  std::vector<double> scores_signed;
  content_address_signed(memory, 6, signs, ctx_a, nullptr, &scores_signed);

  const FixedTensor key = quantize_tensor(signs, 1, 10, kQ5_2, prep);
  FxContext ctx_b;
  std::vector<double> scores_dot;
  content_address_fixed(memory, 6, key, SimilarityKind::Dot,
                        HammingWeights{-3, 8}, ctx_b, nullptr, &scores_dot);
  CHECK(scores_signed == scores_dot);

  CHECK_THROWS_AS(content_address_signed(memory, 0, signs, ctx_a, nullptr),
                  std::invalid_argument);
}

TEST_CASE("empty fixed memory is rejected") {
  FxContext prep;
  const FixedTensor memory =
      quantize_tensor(std::vector<double>(8, 0.5), 2, 4, kQ5_2, prep);
  const FixedTensor key =
      quantize_tensor(std::vector<double>(4, 0.5), 1, 4, kQ5_2, prep);
  FxContext ctx;
  CHECK_THROWS_AS(
      content_address_fixed(memory, 0, key, SimilarityKind::Dot,
                            HammingWeights{-3, 8}, ctx, nullptr, nullptr),
      std::invalid_argument);
}
