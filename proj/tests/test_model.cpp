#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "qmann/model.hpp"

using namespace qmann;

namespace {

MannConfig tiny_config(std::size_t input_dim = 6, std::size_t embed = 4,
                       std::size_t slots = 5, std::size_t hops = 3) {
  return MannConfig{input_dim, embed, slots, hops};
}

MannParams zero_params(const MannConfig& cfg) {
  MannParams p;
  p.w_addr = Matrix(cfg.embed_dim, cfg.input_dim);
  p.w_read = Matrix(cfg.embed_dim, cfg.input_dim);
  p.w_question = Matrix(cfg.embed_dim, cfg.input_dim);
  p.w_key = Matrix(cfg.embed_dim, cfg.embed_dim);
  p.w_out = Matrix(cfg.input_dim, cfg.embed_dim);
  return p;
}

QuantSpec fixed_spec(const QFormat& fmt, SimilarityKind kind,
                     bool binary = false, bool mq = false) {
  QuantSpec spec;
  spec.arithmetic = Arithmetic::Fixed;
  spec.param_fmt = spec.act_fmt = spec.mem_fmt = fmt;
  spec.similarity = kind;
  spec.activation = binary ? Activation::Binary : Activation::Fixed;
  spec.mq = mq;
  return spec;
}

bool on_grid(double v, const QFormat& fmt) {
  const double scaled = std::ldexp(v, fmt.frac);
  return scaled == std::floor(scaled) && std::abs(v) <= fmt.max_value();
}

}  // namespace

TEST_CASE("zero input writes zero memories") {
  const MannConfig cfg = tiny_config();
  Rng rng(1);
  const MannParams params = init_params(cfg, rng);
  QuantScopes scopes;
  const std::vector<std::vector<double>> sentences(
      3, std::vector<double>(cfg.input_dim, 0.0));
  const QuantSpec spec;  // float
  const MemoryState mem = write_memory(params, nullptr, sentences, cfg, spec,
                                       scopes);
  CHECK(mem.used == 3);
  for (const double v : mem.addr.a) CHECK(v == 0.0);
  for (const double v : mem.read.a) CHECK(v == 0.0);
}

TEST_CASE("a one-hot sentence selects the matching weight column") {
  const MannConfig cfg = tiny_config();
  MannParams params = zero_params(cfg);
  for (std::size_t e = 0; e < cfg.embed_dim; ++e) {
    for (std::size_t i = 0; i < cfg.input_dim; ++i) {
      params.w_addr.at(e, i) = static_cast<double>(10 * e + i);
    }
  }
  std::vector<double> one_hot(cfg.input_dim, 0.0);
  one_hot[2] = 1.0;
  QuantScopes scopes;
  const MemoryState mem =
      write_memory(params, nullptr, {one_hot}, cfg, QuantSpec{}, scopes);
  for (std::size_t e = 0; e < cfg.embed_dim; ++e) {
    CHECK(mem.addr.at(0, e) == params.w_addr.at(e, 2));
  }
}

TEST_CASE("quantized memory stays within a resolution of the float memory") {
  const MannConfig cfg = tiny_config(8, 6, 4, 3);
  Rng rng(3);
  const MannParams params = init_params(cfg, rng);
  const QuantSpec fspec;
  const QuantSpec qspec = fixed_spec(QFormat{5, 4}, SimilarityKind::Dot);
  std::mt19937_64 mt(5);
  std::vector<std::vector<double>> sentences(
      4, std::vector<double>(cfg.input_dim));
  for (auto& s : sentences) {
    for (auto& v : s) v = (mt() & 1) ? 1.0 : 0.0;
  }
  QuantScopes fs, qs;
  const MemoryState fmem =
      write_memory(params, nullptr, sentences, cfg, fspec, fs);
  const QuantizedParams qp = quantize_params(params, qspec, cfg.hops,
                                             qs.params);
  const MemoryState qmem = write_memory(params, &qp, sentences, cfg, qspec,
                                        qs);
  REQUIRE(qs.memory.overflow_count == 0);
  // params are N(0, 0.1): each product is off by at most the param
  // resolution, each row sums at most input_dim of them, then one more
  // rounding into the memory format
  const double tol = static_cast<double>(cfg.input_dim + 1) *
                     QFormat{5, 4}.resolution();
  for (std::size_t i = 0; i < fmem.addr.a.size(); ++i) {
    CHECK(std::abs(fmem.addr.a[i] - qmem.addr.a[i]) <= tol);
  }
}

TEST_CASE("too many sentences for the slot budget") {
  const MannConfig cfg = tiny_config(6, 4, 2, 3);
  Rng rng(1);
  const MannParams params = init_params(cfg, rng);
  QuantScopes scopes;
  const std::vector<std::vector<double>> sentences(
      3, std::vector<double>(cfg.input_dim, 0.0));
  CHECK_THROWS_AS(
      write_memory(params, nullptr, sentences, cfg, QuantSpec{}, scopes),
      std::invalid_argument);
  CHECK_THROWS_AS(write_memory(params, nullptr, {}, cfg, QuantSpec{}, scopes),
                  std::invalid_argument);
}

TEST_CASE("a single aligned slot dominates the read weights") {
  const MannConfig cfg = tiny_config(4, 4, 5, 3);
  MannParams params = zero_params(cfg);
  for (std::size_t e = 0; e < cfg.embed_dim; ++e) {
    params.w_question.at(e, e) = 1.0;  // left identity
  }
  MemoryState mem;
  mem.used = 3;
  mem.addr = Matrix(3, cfg.embed_dim);
  mem.read = Matrix(3, cfg.embed_dim);
  mem.addr.at(1, 0) = 6.0;  // only slot 1 aligns with the key e_0
  std::vector<double> question = {1.0, 0.0, 0.0, 0.0};
  QuantScopes scopes;
  const HopTrace trace = read_hops(params, nullptr, mem, question, cfg,
                                   QuantSpec{}, scopes, nullptr);
  REQUIRE(trace.hops.size() == 3);
  const auto& w = trace.hops[0].weights;
  CHECK(w[1] >= 1.0 / 3.0);
  CHECK(w[1] > 0.98);  // e^6 against two zeros
  CHECK(w[0] == w[2]);
}

TEST_CASE("the first key depends on the question only through its embedding") {
  const MannConfig cfg = tiny_config(4, 3, 4, 1);
  Rng rng(7);
  MannParams params = init_params(cfg, rng);
  // null out the question weight's last column: questions differing only
  // there embed identically
  for (std::size_t e = 0; e < cfg.embed_dim; ++e) {
    params.w_question.at(e, 3) = 0.0;
  }
  EncodedStory a;
  a.sentences = {{1.0, 0.0, 1.0, 0.0}};
  a.question = {1.0, 0.0, 0.0, 0.0};
  a.answer = 0;
  EncodedStory b = a;
  b.question = {1.0, 0.0, 0.0, 1.0};
  QuantScopes scopes;
  const ForwardResult fa =
      forward_story(params, nullptr, a, cfg, QuantSpec{}, scopes, nullptr);
  const ForwardResult fb =
      forward_story(params, nullptr, b, cfg, QuantSpec{}, scopes, nullptr);
  CHECK(fa.trace.output == fb.trace.output);
  CHECK(fa.trace.hops.size() == 1);
}

TEST_CASE("zero output weights give a uniform answer distribution") {
  const MannConfig cfg = tiny_config();
  Rng rng(11);
  MannParams params = init_params(cfg, rng);
  params.w_out = Matrix(cfg.input_dim, cfg.embed_dim);
  EncodedStory story;
  story.sentences = {std::vector<double>(cfg.input_dim, 1.0)};
  story.question = std::vector<double>(cfg.input_dim, 0.0);
  story.question[0] = 1.0;
  story.answer = 0;
  QuantScopes scopes;
  const ForwardResult fwd =
      forward_story(params, nullptr, story, cfg, QuantSpec{}, scopes, nullptr);
  for (const double p : fwd.trace.output) {
    CHECK(p == doctest::Approx(1.0 / cfg.input_dim).epsilon(1e-12));
  }
}

TEST_CASE("answer distributions normalize") {
  const MannConfig cfg = tiny_config(10, 6, 8, 3);
  Rng rng(13);
  const MannParams params = init_params(cfg, rng);
  std::mt19937_64 mt(17);
  for (int trial = 0; trial < 200; ++trial) {
    EncodedStory story;
    const std::size_t t = 1 + mt() % 6;
    story.sentences.assign(t, std::vector<double>(cfg.input_dim, 0.0));
    for (auto& s : story.sentences) s[mt() % cfg.input_dim] = 1.0;
    story.question = std::vector<double>(cfg.input_dim, 0.0);
    story.question[mt() % cfg.input_dim] = 1.0;
    story.answer = 0;
    QuantScopes scopes;
    const ForwardResult fwd = forward_story(params, nullptr, story, cfg,
                                            QuantSpec{}, scopes, nullptr);
    double sum = 0.0;
    for (const double p : fwd.trace.output) sum += p;
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("float forward is deterministic") {
  const MannConfig cfg = tiny_config(8, 5, 6, 3);
  Rng rng(19);
  const MannParams params = init_params(cfg, rng);
  EncodedStory story;
  story.sentences = {std::vector<double>(8, 0.0),
                     std::vector<double>(8, 0.0)};
  story.sentences[0][1] = 1.0;
  story.sentences[1][3] = 1.0;
  story.question = std::vector<double>(8, 0.0);
  story.question[1] = 1.0;
  story.answer = 2;
  QuantScopes s1, s2;
  const ForwardResult a =
      forward_story(params, nullptr, story, cfg, QuantSpec{}, s1, nullptr);
  const ForwardResult b =
      forward_story(params, nullptr, story, cfg, QuantSpec{}, s2, nullptr);
  CHECK(a.trace.output == b.trace.output);
  for (std::size_t i = 0; i < a.trace.hops.size(); ++i) {
    CHECK(a.trace.hops[i].key == b.trace.hops[i].key);
    CHECK(a.trace.hops[i].weights == b.trace.hops[i].weights);
  }
}

TEST_CASE("fixed and float traces agree up to the first rounding boundary") {
  // Integer params and binary inputs leave nothing to round through the
  // memory write, the first key and the first hop's scores, so that
  // prefix of the trace is bit-identical across regimes. The first place
  // a value actually rounds is the softmax weights entering the read,
  // and the traces may diverge only from there on.
  const MannConfig cfg = tiny_config(5, 3, 4, 2);
  MannParams params = zero_params(cfg);
  std::mt19937_64 mt(23);
  auto fill_ints = [&mt](Matrix& m) {
    for (auto& v : m.a) {
      v = static_cast<double>(static_cast<int>(mt() % 3)) - 1.0;
    }
  };
  fill_ints(params.w_addr);
  fill_ints(params.w_read);
  fill_ints(params.w_question);
  fill_ints(params.w_key);
  fill_ints(params.w_out);

  EncodedStory story;
  story.sentences = {{1, 0, 0, 1, 0}, {0, 1, 0, 0, 1}};
  story.question = {0, 0, 1, 0, 0};
  story.answer = 1;

  QuantScopes fs, qs;
  const ForwardResult ffwd =
      forward_story(params, nullptr, story, cfg, QuantSpec{}, fs, nullptr);
  const QuantSpec qspec = fixed_spec(QFormat{5, 2}, SimilarityKind::Dot);
  QuantizedParams qp = quantize_params(params, qspec, cfg.hops, qs.params);
  const ForwardResult qfwd =
      forward_story(params, &qp, story, cfg, qspec, qs, nullptr);
  CHECK(qs.params.overflow_count == 0);
  CHECK(qs.memory.overflow_count == 0);
  CHECK(qs.similarity.overflow_count == 0);
  CHECK(ffwd.memory.addr.a == qfwd.memory.addr.a);
  CHECK(ffwd.memory.read.a == qfwd.memory.read.a);
  CHECK(ffwd.trace.hops[0].key == qfwd.trace.hops[0].key);
  CHECK(ffwd.trace.hops[0].sims == qfwd.trace.hops[0].sims);
  CHECK(ffwd.trace.hops[0].weights == qfwd.trace.hops[0].weights);
  // the quantized regime rounded the weights; the float one did not
  CHECK(ffwd.trace.hops[0].weights_q == ffwd.trace.hops[0].weights);
  CHECK(qfwd.trace.hops[0].weights_q != qfwd.trace.hops[0].weights);
}

TEST_CASE("quantized forward stays on the format grid") {
  const MannConfig cfg = tiny_config(9, 6, 6, 3);
  Rng rng(29);
  const MannParams params = init_params(cfg, rng);
  const QuantSpec spec = fixed_spec(QFormat{5, 2}, SimilarityKind::Dot);
  std::mt19937_64 mt(31);
  QuantScopes scopes;
  QuantizedParams qp = quantize_params(params, spec, cfg.hops, scopes.params);
  for (int trial = 0; trial < 50; ++trial) {
    EncodedStory story;
    story.sentences.assign(1 + mt() % 5,
                           std::vector<double>(cfg.input_dim, 0.0));
    for (auto& s : story.sentences) s[mt() % cfg.input_dim] = 1.0;
    story.question = std::vector<double>(cfg.input_dim, 0.0);
    story.question[mt() % cfg.input_dim] = 1.0;
    const ForwardResult fwd =
        forward_story(params, &qp, story, cfg, spec, scopes, nullptr);
    for (const auto& hop : fwd.trace.hops) {
      for (const double v : hop.key) CHECK(on_grid(v, spec.act_fmt));
      for (const double v : hop.read) CHECK(on_grid(v, spec.act_fmt));
      double wq_sum = 0.0;
      for (const double v : hop.weights_q) {
        CHECK(on_grid(v, spec.act_fmt));
        wq_sum += v;
      }
      // requantized read weights renormalize within slots * resolution
      CHECK(std::abs(wq_sum - 1.0) <=
            static_cast<double>(fwd.memory.used) * spec.act_fmt.resolution());
      for (const double v : hop.sims) CHECK(on_grid(v, spec.mem_fmt));
    }
    for (std::size_t i = 0; i < fwd.memory.addr.a.size(); ++i) {
      CHECK(on_grid(fwd.memory.addr.a[i], spec.mem_fmt));
      CHECK(on_grid(fwd.memory.read.a[i], spec.mem_fmt));
    }
  }
}

TEST_CASE("bounded-similarity forwards never overflow the similarity scope") {
  const MannConfig cfg = tiny_config(12, 8, 8, 3);
  const QuantSpec spec = fixed_spec(QFormat{2, 5}, SimilarityKind::Hamming);
  std::mt19937_64 mt(37);
  for (int trial = 0; trial < 60; ++trial) {
    Rng rng(trial);
    MannParams params = init_params(cfg, rng);
    // scale some params up so values hit the clamp and bits go wild
    for (auto& v : params.w_addr.a) v *= 40.0;
    QuantScopes scopes;
    QuantizedParams qp =
        quantize_params(params, spec, cfg.hops, scopes.params);
    EncodedStory story;
    story.sentences.assign(1 + mt() % 8,
                           std::vector<double>(cfg.input_dim, 0.0));
    for (auto& s : story.sentences) {
      for (auto& v : s) v = (mt() & 1) ? 1.0 : 0.0;
    }
    story.question = std::vector<double>(cfg.input_dim, 0.0);
    story.question[mt() % cfg.input_dim] = 1.0;
    SimilarityRecord rec(2.0 * spec.mem_fmt.overflow_threshold());
    forward_story(params, &qp, story, cfg, spec, scopes, &rec);
    CHECK(scopes.similarity.overflow_count == 0);
    CHECK(rec.overflow_events == 0);
  }
}

TEST_CASE("binary activations run on sign kernels") {
  const MannConfig cfg = tiny_config(8, 5, 5, 3);
  Rng rng(41);
  const MannParams params = init_params(cfg, rng);
  const QuantSpec spec =
      fixed_spec(QFormat{5, 2}, SimilarityKind::Dot, /*binary=*/true);
  QuantScopes scopes;
  OpCounts ops;
  scopes.attach_ops(&ops);
  QuantizedParams qp = quantize_params(params, spec, cfg.hops, scopes.params);
  EncodedStory story;
  story.sentences = {std::vector<double>(8, 0.0)};
  story.sentences[0][2] = 1.0;
  story.question = std::vector<double>(8, 0.0);
  story.question[2] = 1.0;
  const ForwardResult fwd =
      forward_story(params, &qp, story, cfg, spec, scopes, nullptr);
  for (const auto& hop : fwd.trace.hops) {
    for (const double k : hop.key) CHECK((k == 1.0 || k == -1.0));
    for (const double r : hop.read) CHECK((r == 1.0 || r == -1.0));
  }
  // the key-update and similarity kernels degrade to adds; the only
  // fixed multiplies left come from the embeddings and the weighted read
  const std::uint64_t embed_muls =
      (3 * story.sentences.size() + 1) * cfg.embed_dim * cfg.input_dim;
  CHECK(ops.fixed_mul8 <
        embed_muls + cfg.hops * cfg.embed_dim * story.sentences.size() + 1);
  CHECK(ops.fixed_add8 > 0);
}

TEST_CASE("per-hop format perturbation changes the key formats") {
  const MannConfig cfg = tiny_config(8, 5, 5, 3);
  Rng rng(43);
  const MannParams params = init_params(cfg, rng);
  const QuantSpec spec =
      fixed_spec(QFormat{5, 2}, SimilarityKind::Dot, false, /*mq=*/true);
  QuantScopes scopes;
  QuantizedParams qp = quantize_params(params, spec, cfg.hops, scopes.params);
  REQUIRE(qp.w_key.size() == 2);
  CHECK(qp.w_key[0].fmt == QFormat{4, 3});  // transition to hop 2
  CHECK(qp.w_key[1].fmt == QFormat{6, 1});  // transition to hop 3
  EncodedStory story;
  story.sentences = {std::vector<double>(8, 0.0)};
  story.sentences[0][1] = 1.0;
  story.question = std::vector<double>(8, 0.0);
  story.question[1] = 1.0;
  const ForwardResult fwd =
      forward_story(params, &qp, story, cfg, spec, scopes, nullptr);
  // hop keys live on their per-hop grids
  CHECK(fwd.trace.hops.size() == 3);
  for (const double v : fwd.trace.hops[1].key) {
    CHECK(on_grid(v, QFormat{4, 3}));
  }
}

TEST_CASE("checkpoints round trip exactly") {
  const MannConfig cfg = tiny_config(7, 4, 6, 2);
  Rng rng(47);
  const MannParams params = init_params(cfg, rng);
  QuantSpec spec = fixed_spec(QFormat{2, 5}, SimilarityKind::Hamming, true);
  spec.mq = true;
  const std::string text = checkpoint_to_json(cfg, spec, params);
  MannConfig cfg2;
  QuantSpec spec2;
  MannParams params2;
  checkpoint_from_json(text, cfg2, spec2, params2);
  CHECK(cfg2.input_dim == cfg.input_dim);
  CHECK(cfg2.hops == cfg.hops);
  CHECK(spec2.similarity == SimilarityKind::Hamming);
  CHECK(spec2.binary_act());
  CHECK(spec2.mq);
  CHECK(spec2.mem_fmt == QFormat{2, 5});
  CHECK(params2.w_addr.a == params.w_addr.a);
  CHECK(params2.w_out.a == params.w_out.a);
  // serialized form is canonical: a second save is byte-identical
  CHECK(checkpoint_to_json(cfg2, spec2, params2) == text);

  SUBCASE("missing version is rejected") {
    CHECK_THROWS_AS(
        checkpoint_from_json("{\"config\":{}}", cfg2, spec2, params2),
        std::invalid_argument);
  }
}

TEST_CASE("per-hop diagnostic outputs agree with the final distribution") {
  const MannConfig cfg = tiny_config(8, 5, 6, 3);
  Rng rng(53);
  const MannParams params = init_params(cfg, rng);
  EncodedStory story;
  story.sentences = {std::vector<double>(8, 0.0)};
  story.sentences[0][3] = 1.0;
  story.question = std::vector<double>(8, 0.0);
  story.question[3] = 1.0;
  story.answer = 0;
  QuantScopes scopes;
  const ForwardResult fwd =
      forward_story(params, nullptr, story, cfg, QuantSpec{}, scopes, nullptr);
  CHECK(hop_output(params, fwd.trace, cfg.hops - 1) == fwd.trace.output);
  const auto o1 = hop_output(params, fwd.trace, 0);
  double sum = 0.0;
  for (const double p : o1) sum += p;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("encode_story maps answers through the vocabulary") {
  Story s;
  s.sentences = {{"mary", "went", "kitchen"}};
  s.question = {"where", "mary"};
  s.answer = "kitchen";
  const Vocabulary vocab = build_vocabulary({s});
  const EncodedStory enc = encode_story(s, vocab);
  CHECK(enc.sentences.size() == 1);
  CHECK(enc.question[vocab.index("where")] == 1.0);
  CHECK(enc.question[vocab.index("kitchen")] == 0.0);
  CHECK(enc.answer == vocab.index("kitchen"));
}
