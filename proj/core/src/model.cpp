#include "qmann/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "qmann/quantizer.hpp"

namespace qmann {

MannParams init_params(const MannConfig& cfg, Rng& rng) {
  auto fill = [&rng](Matrix& m, std::size_t r, std::size_t c) {
    m = Matrix(r, c);
    for (auto& v : m.a) v = rng.normal(0.0, 0.1);
  };
  MannParams p;
  fill(p.w_addr, cfg.embed_dim, cfg.input_dim);
  fill(p.w_read, cfg.embed_dim, cfg.input_dim);
  fill(p.w_question, cfg.embed_dim, cfg.input_dim);
  fill(p.w_key, cfg.embed_dim, cfg.embed_dim);
  fill(p.w_out, cfg.input_dim, cfg.embed_dim);
  return p;
}

QuantizedParams quantize_params(const MannParams& params,
                                const QuantSpec& spec, std::size_t hops,
                                FxContext& ctx) {
  QuantizedParams qp;
  auto q = [&](const Matrix& m, const QFormat& fmt) {
    return quantize_tensor(m.a, m.rows, m.cols, fmt, ctx);
  };
  qp.w_addr = q(params.w_addr, spec.param_fmt);
  qp.w_read = q(params.w_read, spec.param_fmt);
  qp.w_question = q(params.w_question, spec.param_fmt);
  for (std::size_t t = 1; t < hops; ++t) {
    const QFormat fmt =
        spec.mq ? mq_formats(spec.param_fmt, t) : spec.param_fmt;
    qp.w_key.push_back(q(params.w_key, fmt));
  }
  return qp;
}

EncodedStory encode_story(const Story& story, const Vocabulary& vocab) {
  EncodedStory enc;
  enc.sentences.reserve(story.sentences.size());
  for (const auto& sent : story.sentences) {
    enc.sentences.push_back(encode_bow(sent, vocab));
  }
  enc.question = encode_bow(story.question, vocab);
  enc.answer = vocab.index(story.answer);
  return enc;
}

namespace {

// --- float kernels, instrumented at the arithmetic layer ---

std::vector<double> matvec_float(const Matrix& w, std::span<const double> x,
                                 OpCounts* ops) {
  if (w.cols != x.size()) {
    throw std::invalid_argument("matvec dimension mismatch");
  }
  std::vector<double> out(w.rows, 0.0);
  for (std::size_t r = 0; r < w.rows; ++r) {
    double acc = 0.0;
    const double* row = w.a.data() + r * w.cols;
    for (std::size_t c = 0; c < w.cols; ++c) acc += row[c] * x[c];
    out[r] = acc;
  }
  if (ops != nullptr) {
    ops->count_float_mul(w.rows * w.cols);
    ops->count_float_add(w.rows * w.cols);
  }
  return out;
}

// rows are slots: out[e] = sum_t w(t, e) * x[t]
std::vector<double> matvec_float_transposed(const Matrix& w,
                                            std::span<const double> x,
                                            OpCounts* ops) {
  if (w.rows != x.size()) {
    throw std::invalid_argument("matvec dimension mismatch");
  }
  std::vector<double> out(w.cols, 0.0);
  for (std::size_t t = 0; t < w.rows; ++t) {
    const double* row = w.a.data() + t * w.cols;
    for (std::size_t e = 0; e < w.cols; ++e) out[e] += row[e] * x[t];
  }
  if (ops != nullptr) {
    ops->count_float_mul(w.rows * w.cols);
    ops->count_float_add(w.rows * w.cols);
  }
  return out;
}

// multiply by a {-1,+1} vector: adds only
std::vector<double> matvec_float_signs(const Matrix& w,
                                       std::span<const double> signs,
                                       OpCounts* ops) {
  if (w.cols != signs.size()) {
    throw std::invalid_argument("matvec dimension mismatch");
  }
  std::vector<double> out(w.rows, 0.0);
  for (std::size_t r = 0; r < w.rows; ++r) {
    double acc = 0.0;
    const double* row = w.a.data() + r * w.cols;
    for (std::size_t c = 0; c < w.cols; ++c) {
      acc += signs[c] < 0.0 ? -row[c] : row[c];
    }
    out[r] = acc;
  }
  if (ops != nullptr) ops->count_float_add(w.rows * w.cols);
  return out;
}

// --- fixed kernels: products in the weight format, saturating
// accumulation in out_fmt ---

FixedTensor matvec_fixed(const FixedTensor& w, const FixedTensor& x,
                         const QFormat& out_fmt, FxContext& ctx) {
  if (w.cols != x.size()) {
    throw std::invalid_argument("matvec dimension mismatch");
  }
  FixedTensor out;
  out.rows = 1;
  out.cols = w.rows;
  out.fmt = out_fmt;
  out.raw.resize(w.rows);
  const std::uint64_t before = ctx.overflow_count;
  for (std::size_t r = 0; r < w.rows; ++r) {
    FixedScalar acc{0, out_fmt};
    for (std::size_t c = 0; c < w.cols; ++c) {
      const FixedScalar xv = rescale(x.scalar(c), w.fmt, ctx);
      const FixedScalar p = fx_mul(w.scalar(r * w.cols + c), xv, ctx);
      acc = fx_add(acc, rescale(p, out_fmt, ctx), ctx);
    }
    out.raw[r] = acc.raw;
  }
  out.overflow_count = ctx.overflow_count - before;
  return out;
}

FixedTensor matvec_fixed_transposed(const FixedTensor& w, const FixedTensor& x,
                                    const QFormat& out_fmt, FxContext& ctx) {
  if (w.rows != x.size()) {
    throw std::invalid_argument("matvec dimension mismatch");
  }
  FixedTensor out;
  out.rows = 1;
  out.cols = w.cols;
  out.fmt = out_fmt;
  out.raw.assign(w.cols, 0);
  const std::uint64_t before = ctx.overflow_count;
  std::vector<FixedScalar> acc(w.cols, FixedScalar{0, out_fmt});
  for (std::size_t t = 0; t < w.rows; ++t) {
    const FixedScalar xv = rescale(x.scalar(t), w.fmt, ctx);
    for (std::size_t e = 0; e < w.cols; ++e) {
      const FixedScalar p = fx_mul(w.scalar(t * w.cols + e), xv, ctx);
      acc[e] = fx_add(acc[e], rescale(p, out_fmt, ctx), ctx);
    }
  }
  for (std::size_t e = 0; e < w.cols; ++e) out.raw[e] = acc[e].raw;
  out.overflow_count = ctx.overflow_count - before;
  return out;
}

FixedTensor matvec_fixed_signs(const FixedTensor& w,
                               std::span<const double> signs,
                               const QFormat& out_fmt, FxContext& ctx) {
  if (w.cols != signs.size()) {
    throw std::invalid_argument("matvec dimension mismatch");
  }
  FixedTensor out;
  out.rows = 1;
  out.cols = w.rows;
  out.fmt = out_fmt;
  out.raw.resize(w.rows);
  const std::uint64_t before = ctx.overflow_count;
  for (std::size_t r = 0; r < w.rows; ++r) {
    FixedScalar acc{0, out_fmt};
    for (std::size_t c = 0; c < w.cols; ++c) {
      FixedScalar term = w.scalar(r * w.cols + c);
      if (signs[c] < 0.0) term.raw = -term.raw;
      acc = fx_add(acc, rescale(term, out_fmt, ctx), ctx);
    }
    out.raw[r] = acc.raw;
  }
  out.overflow_count = ctx.overflow_count - before;
  return out;
}

FixedTensor fixed_vector_add(const FixedTensor& a, const FixedTensor& b,
                             FxContext& ctx) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("vector add dimension mismatch");
  }
  FixedTensor out = a;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const FixedScalar bi = rescale(b.scalar(i), a.fmt, ctx);
    out.raw[i] = fx_add(a.scalar(i), bi, ctx).raw;
  }
  return out;
}

QFormat hop_act_fmt(const QuantSpec& spec, std::size_t hop) {
  return spec.mq ? mq_formats(spec.act_fmt, hop) : spec.act_fmt;
}

}  // namespace

MemoryState write_memory(const MannParams& params, const QuantizedParams* qp,
                         const std::vector<std::vector<double>>& sentences,
                         const MannConfig& cfg, const QuantSpec& spec,
                         QuantScopes& scopes) {
  const std::size_t used = sentences.size();
  if (used == 0) {
    throw std::invalid_argument("cannot write an empty story to memory");
  }
  if (used > cfg.slots) {
    throw std::invalid_argument("story has " + std::to_string(used) +
                                " sentences but memory has " +
                                std::to_string(cfg.slots) + " slots");
  }
  MemoryState mem;
  mem.used = used;
  mem.addr = Matrix(used, cfg.embed_dim);
  mem.read = Matrix(used, cfg.embed_dim);
  if (!spec.fixed()) {
    OpCounts* ops = scopes.memory.ops;
    for (std::size_t t = 0; t < used; ++t) {
      const auto a = matvec_float(params.w_addr, sentences[t], ops);
      const auto r = matvec_float(params.w_read, sentences[t], ops);
      for (std::size_t e = 0; e < cfg.embed_dim; ++e) {
        mem.addr.at(t, e) = a[e];
        mem.read.at(t, e) = r[e];
      }
    }
    return mem;
  }

  FixedTensor addr_fx, read_fx;
  addr_fx.rows = read_fx.rows = used;
  addr_fx.cols = read_fx.cols = cfg.embed_dim;
  addr_fx.fmt = read_fx.fmt = spec.mem_fmt;
  addr_fx.raw.resize(used * cfg.embed_dim);
  read_fx.raw.resize(used * cfg.embed_dim);
  for (std::size_t t = 0; t < used; ++t) {
    const FixedTensor v = quantize_tensor(sentences[t], 1, cfg.input_dim,
                                          spec.act_fmt, scopes.activation);
    const FixedTensor a =
        matvec_fixed(qp->w_addr, v, spec.mem_fmt, scopes.memory);
    const FixedTensor r =
        matvec_fixed(qp->w_read, v, spec.mem_fmt, scopes.memory);
    for (std::size_t e = 0; e < cfg.embed_dim; ++e) {
      addr_fx.raw[t * cfg.embed_dim + e] = a.raw[e];
      read_fx.raw[t * cfg.embed_dim + e] = r.raw[e];
      mem.addr.at(t, e) = a.value(e);
      mem.read.at(t, e) = r.value(e);
    }
  }
  mem.addr_fx = std::move(addr_fx);
  mem.read_fx = std::move(read_fx);
  return mem;
}

HopTrace read_hops(const MannParams& params, const QuantizedParams* qp,
                   const MemoryState& memory, std::span<const double> question,
                   const MannConfig& cfg, const QuantSpec& spec,
                   QuantScopes& scopes, SimilarityRecord* record) {
  if (question.size() != cfg.input_dim) {
    throw std::invalid_argument("question dimension mismatch");
  }
  HopTrace trace;
  trace.hops.resize(cfg.hops);
  const HammingWeights hw = spec.hamming_weights();
  OpCounts* ops = scopes.activation.ops;

  if (!spec.fixed()) {
    std::vector<double> key;
    for (std::size_t i = 0; i < cfg.hops; ++i) {
      HopState& hop = trace.hops[i];
      if (i == 0) {
        hop.key_pre = matvec_float(params.w_question, question, ops);
      } else {
        hop.key_pre = matvec_float(params.w_key, key, ops);
        const auto& prev_read = trace.hops[i - 1].read;
        for (std::size_t e = 0; e < cfg.embed_dim; ++e) {
          hop.key_pre[e] += prev_read[e];
        }
        if (ops != nullptr) ops->count_float_add(cfg.embed_dim);
      }
      hop.key = spec.binary_act() ? binarize_act(hop.key_pre) : hop.key_pre;
      key = hop.key;

      hop.sims.resize(memory.used);
      for (std::size_t t = 0; t < memory.used; ++t) {
        const double* row = memory.addr.a.data() + t * cfg.embed_dim;
        double acc = 0.0;
        if (spec.binary_act()) {
          for (std::size_t e = 0; e < cfg.embed_dim; ++e) {
            acc += key[e] < 0.0 ? -row[e] : row[e];
          }
          if (ops != nullptr) ops->count_float_add(cfg.embed_dim);
        } else {
          for (std::size_t e = 0; e < cfg.embed_dim; ++e) {
            acc += row[e] * key[e];
          }
          if (ops != nullptr) {
            ops->count_float_mul(cfg.embed_dim);
            ops->count_float_add(cfg.embed_dim);
          }
        }
        hop.sims[t] = acc;
        if (record != nullptr) record->record(acc);
      }
      hop.weights = softmax(hop.sims, ops);
      hop.weights_q = hop.weights;
      hop.read_pre = matvec_float_transposed(memory.read, hop.weights_q, ops);
      hop.read = spec.binary_act() ? binarize_act(hop.read_pre) : hop.read_pre;
    }
  } else {
    FixedTensor key_fx;
    std::vector<double> key_signs;
    FixedTensor read_fx;
    for (std::size_t i = 0; i < cfg.hops; ++i) {
      HopState& hop = trace.hops[i];
      const QFormat act_i = hop_act_fmt(spec, i);
      FixedTensor pre;
      if (i == 0) {
        const FixedTensor q = quantize_tensor(
            std::vector<double>(question.begin(), question.end()), 1,
            cfg.input_dim, spec.act_fmt, scopes.activation);
        pre = matvec_fixed(qp->w_question, q, act_i, scopes.activation);
      } else {
        if (spec.binary_act()) {
          pre = matvec_fixed_signs(qp->w_key[i - 1], key_signs, act_i,
                                   scopes.activation);
        } else {
          pre = matvec_fixed(qp->w_key[i - 1], key_fx, act_i,
                             scopes.activation);
        }
        pre = fixed_vector_add(pre, read_fx, scopes.activation);
      }
      hop.key_pre = dequantize_tensor(pre);

      if (spec.binary_act()) {
        key_signs = binarize_act(hop.key_pre);
        hop.key = key_signs;
      } else {
        key_fx = pre;
        hop.key = hop.key_pre;
      }

      ReadWeights weights;
      if (spec.binary_act() && spec.similarity == SimilarityKind::Dot) {
        weights =
            content_address_signed(*memory.addr_fx, memory.used, key_signs,
                                   scopes.similarity, record, &hop.sims);
      } else {
        // The similarity runs in the memory format; the hop key is
        // re-represented there first.
        FixedTensor sim_key;
        if (spec.binary_act()) {
          sim_key = quantize_tensor(key_signs, 1, cfg.embed_dim, spec.mem_fmt,
                                    scopes.activation);
        } else {
          sim_key = rescale_tensor(key_fx, spec.mem_fmt, scopes.activation);
        }
        weights = content_address_fixed(*memory.addr_fx, memory.used, sim_key,
                                        spec.similarity, hw, scopes.similarity,
                                        record, &hop.sims);
        hop.key_fx = std::move(sim_key);
      }
      hop.weights = weights.w;

      const FixedTensor wq = quantize_tensor(weights.w, 1, memory.used, act_i,
                                             scopes.activation);
      hop.weights_q = dequantize_tensor(wq);
      read_fx =
          matvec_fixed_transposed(*memory.read_fx, wq, act_i, scopes.memory);
      hop.read_pre = dequantize_tensor(read_fx);
      if (spec.binary_act()) {
        hop.read = binarize_act(hop.read_pre);
        read_fx = quantize_tensor(hop.read, 1, cfg.embed_dim, act_i,
                                  scopes.activation);
      } else {
        hop.read = hop.read_pre;
      }
    }
  }

  // Output layer, always float.
  const HopState& last = trace.hops.back();
  trace.logits = matvec_float(params.w_out, last.key, ops);
  trace.output = softmax(trace.logits, ops);
  return trace;
}

const std::vector<double>& output_distribution(const HopTrace& trace) {
  return trace.output;
}

std::vector<double> hop_output(const MannParams& params,
                               const HopTrace& trace, std::size_t hop) {
  const auto logits = matvec_float(params.w_out, trace.hops.at(hop).key,
                                   nullptr);
  return softmax(logits);
}

ForwardResult forward_story(const MannParams& params,
                            const QuantizedParams* qp,
                            const EncodedStory& story, const MannConfig& cfg,
                            const QuantSpec& spec, QuantScopes& scopes,
                            SimilarityRecord* record) {
  ForwardResult fwd;
  fwd.memory =
      write_memory(params, qp, story.sentences, cfg, spec, scopes);
  fwd.trace = read_hops(params, qp, fwd.memory, story.question, cfg, spec,
                        scopes, record);
  return fwd;
}

std::size_t predict(const ForwardResult& fwd) {
  const auto& out = fwd.trace.output;
  return static_cast<std::size_t>(
      std::max_element(out.begin(), out.end()) - out.begin());
}

namespace {

nlohmann::json matrix_json(const Matrix& m) {
  return nlohmann::json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.a}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  Matrix m;
  m.rows = j.at("rows").get<std::size_t>();
  m.cols = j.at("cols").get<std::size_t>();
  m.a = j.at("data").get<std::vector<double>>();
  if (m.a.size() != m.rows * m.cols) {
    throw std::invalid_argument("matrix payload does not match its shape");
  }
  return m;
}

}  // namespace

std::string to_string(SimilarityKind kind) {
  return kind == SimilarityKind::Dot ? "dot" : "hamming";
}

SimilarityKind parse_similarity(const std::string& name) {
  if (name == "dot") return SimilarityKind::Dot;
  if (name == "hamming") return SimilarityKind::Hamming;
  throw std::invalid_argument("unknown similarity \"" + name +
                              "\" (dot|hamming)");
}

std::string checkpoint_to_json(const MannConfig& cfg, const QuantSpec& spec,
                               const MannParams& params) {
  nlohmann::json j;
  j["version"] = 1;
  j["config"] = {{"input_dim", cfg.input_dim},
                 {"embed_dim", cfg.embed_dim},
                 {"slots", cfg.slots},
                 {"hops", cfg.hops}};
  j["quant"] = {
      {"arithmetic", spec.fixed() ? "fixed" : "float"},
      {"param_fmt", to_string(spec.param_fmt)},
      {"act_fmt", to_string(spec.act_fmt)},
      {"mem_fmt", to_string(spec.mem_fmt)},
      {"activation", spec.binary_act() ? "binary" : "fixed"},
      {"similarity", to_string(spec.similarity)},
      {"hamming_alpha", spec.hamming_alpha},
      {"mq", spec.mq}};
  j["params"] = {{"w_addr", matrix_json(params.w_addr)},
                 {"w_read", matrix_json(params.w_read)},
                 {"w_question", matrix_json(params.w_question)},
                 {"w_key", matrix_json(params.w_key)},
                 {"w_out", matrix_json(params.w_out)}};
  if (spec.fixed()) {
    // Deployment payload: the forward-pass weight images as exact scaled
    // integers under their format headers.
    FxContext ctx;
    const QuantizedParams qp = quantize_params(params, spec, cfg.hops, ctx);
    auto fx_json = [](const FixedTensor& t) {
      return nlohmann::json{{"format", to_string(t.fmt)},
                            {"rows", t.rows},
                            {"cols", t.cols},
                            {"raw", t.raw}};
    };
    nlohmann::json q;
    q["w_addr"] = fx_json(qp.w_addr);
    q["w_read"] = fx_json(qp.w_read);
    q["w_question"] = fx_json(qp.w_question);
    q["w_key"] = nlohmann::json::array();
    for (const auto& wk : qp.w_key) q["w_key"].push_back(fx_json(wk));
    j["quantized_params"] = std::move(q);
  }
  return j.dump();
}

void checkpoint_from_json(const std::string& text, MannConfig& cfg,
                          QuantSpec& spec, MannParams& params) {
  const auto j = nlohmann::json::parse(text);
  if (!j.contains("version")) {
    throw std::invalid_argument("checkpoint is missing its version field");
  }
  if (j.at("version").get<int>() != 1) {
    throw std::invalid_argument("unsupported checkpoint version");
  }
  const auto& c = j.at("config");
  cfg.input_dim = c.at("input_dim").get<std::size_t>();
  cfg.embed_dim = c.at("embed_dim").get<std::size_t>();
  cfg.slots = c.at("slots").get<std::size_t>();
  cfg.hops = c.at("hops").get<std::size_t>();
  const auto& q = j.at("quant");
  spec.arithmetic = q.at("arithmetic").get<std::string>() == "fixed"
                        ? Arithmetic::Fixed
                        : Arithmetic::Float;
  spec.param_fmt = parse_qformat(q.at("param_fmt").get<std::string>());
  spec.act_fmt = parse_qformat(q.at("act_fmt").get<std::string>());
  spec.mem_fmt = parse_qformat(q.at("mem_fmt").get<std::string>());
  spec.activation = q.at("activation").get<std::string>() == "binary"
                        ? Activation::Binary
                        : Activation::Fixed;
  spec.similarity = parse_similarity(q.at("similarity").get<std::string>());
  spec.hamming_alpha = q.at("hamming_alpha").get<int>();
  spec.mq = q.at("mq").get<bool>();
  const auto& p = j.at("params");
  params.w_addr = matrix_from_json(p.at("w_addr"));
  params.w_read = matrix_from_json(p.at("w_read"));
  params.w_question = matrix_from_json(p.at("w_question"));
  params.w_key = matrix_from_json(p.at("w_key"));
  params.w_out = matrix_from_json(p.at("w_out"));
}

}  // namespace qmann
