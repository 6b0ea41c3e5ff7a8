#include "qmann/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace qmann {

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) {
    throw std::invalid_argument("learning rate must be positive");
  }
  if (early_stop.enabled && early_stop.patience < 1) {
    throw std::invalid_argument("early-stopping patience must be >= 1");
  }
  if (epochs == 0) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  if (quant.fixed()) {
    for (const QFormat* f :
         {&quant.param_fmt, &quant.act_fmt, &quant.mem_fmt}) {
      if (!f->valid()) {
        throw std::invalid_argument("invalid Q format in config");
      }
    }
    if (quant.similarity == SimilarityKind::Hamming &&
        quant.act_fmt.total_bits() != quant.mem_fmt.total_bits()) {
      throw std::invalid_argument(
          "bounded similarity needs matching activation/memory bit widths");
    }
  }
}

EarlyStopDecision early_stop(std::span<const double> history,
                             std::size_t patience, double min_delta) {
  if (history.empty()) {
    throw std::invalid_argument("early stopping needs a non-empty history");
  }
  EarlyStopDecision d;
  double best = history[0];
  std::size_t since_best = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (best - history[i] > min_delta) {
      best = history[i];
      d.best_index = i;
      since_best = 0;
    } else {
      ++since_best;
    }
  }
  // best_index tracks the first epoch reaching the plateau value; make it
  // the first index attaining the minimum.
  for (std::size_t i = 0; i <= d.best_index; ++i) {
    if (history[i] <= history[d.best_index]) {
      d.best_index = i;
      break;
    }
  }
  d.stop = since_best >= patience;
  return d;
}

Gradients::Gradients(const MannConfig& cfg)
    : w_addr(cfg.embed_dim, cfg.input_dim),
      w_read(cfg.embed_dim, cfg.input_dim),
      w_question(cfg.embed_dim, cfg.input_dim),
      w_key(cfg.embed_dim, cfg.embed_dim),
      w_out(cfg.input_dim, cfg.embed_dim) {}

void Gradients::zero() {
  for (Matrix* m : {&w_addr, &w_read, &w_question, &w_key, &w_out}) {
    std::fill(m->a.begin(), m->a.end(), 0.0);
  }
}

double Gradients::squared_norm() const {
  double s = 0.0;
  for (const Matrix* m : {&w_addr, &w_read, &w_question, &w_key, &w_out}) {
    for (const double v : m->a) s += v * v;
  }
  return s;
}

void Gradients::scale(double factor) {
  for (Matrix* m : {&w_addr, &w_read, &w_question, &w_key, &w_out}) {
    for (double& v : m->a) v *= factor;
  }
}

namespace {

std::vector<double> mat_t_vec(const Matrix& w, std::span<const double> x) {
  // w^T x for w rows x cols, x length rows
  std::vector<double> out(w.cols, 0.0);
  for (std::size_t r = 0; r < w.rows; ++r) {
    const double* row = w.a.data() + r * w.cols;
    for (std::size_t c = 0; c < w.cols; ++c) out[c] += row[c] * x[r];
  }
  return out;
}

void add_outer(Matrix& m, std::span<const double> u,
               std::span<const double> v) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    double* row = m.a.data() + r * m.cols;
    const double ur = u[r];
    if (ur == 0.0) continue;
    for (std::size_t c = 0; c < m.cols; ++c) row[c] += ur * v[c];
  }
}

std::vector<double> act_backward(const QuantSpec& spec,
                                 std::span<const double> pre,
                                 std::span<const double> upstream) {
  if (spec.binary_act()) return binarize_act_backward(pre, upstream);
  return std::vector<double>(upstream.begin(), upstream.end());
}

}  // namespace

void backward_story(const MannParams& params, const EncodedStory& story,
                    const MannConfig& cfg, const QuantSpec& spec,
                    const ForwardResult& fwd, Gradients& grads) {
  const HopTrace& trace = fwd.trace;
  const MemoryState& mem = fwd.memory;
  const std::size_t hops = cfg.hops;
  const std::size_t used = mem.used;
  const std::size_t embed = cfg.embed_dim;
  const HammingWeights hw = spec.hamming_weights();

  // softmax + cross-entropy on the answer distribution
  std::vector<double> dlogits = trace.output;
  dlogits[story.answer] -= 1.0;
  add_outer(grads.w_out, dlogits, trace.hops.back().key);

  std::vector<std::vector<double>> dkey(hops,
                                        std::vector<double>(embed, 0.0));
  dkey[hops - 1] = mat_t_vec(params.w_out, dlogits);

  Matrix dmem_addr(used, embed);
  Matrix dmem_read(used, embed);

  for (std::size_t i = hops; i-- > 1;) {
    // key_i = act(W_key key_{i-1} + read_{i-1})
    const HopState& hop = trace.hops[i];
    const HopState& prev = trace.hops[i - 1];
    const std::vector<double> dpre =
        act_backward(spec, hop.key_pre, dkey[i]);
    // Per-use straight-through mask of the key-update weights (their
    // quantization format can differ per hop).
    const bool masked = spec.fixed();
    const QFormat mask_fmt =
        masked && spec.mq ? mq_formats(spec.param_fmt, i) : spec.param_fmt;
    for (std::size_t r = 0; r < embed; ++r) {
      if (dpre[r] == 0.0) continue;
      for (std::size_t c = 0; c < embed; ++c) {
        if (!masked || ste_mask(params.w_key.at(r, c), mask_fmt) != 0.0) {
          grads.w_key.at(r, c) += dpre[r] * prev.key[c];
        }
        dkey[i - 1][c] += params.w_key.at(r, c) * dpre[r];
      }
    }
    // read_{i-1} enters the sum directly
    const std::vector<double> dread =
        act_backward(spec, prev.read_pre, dpre);

    // read_pre = sum_t wq[t] * mem_read[t]
    std::vector<double> dwq(used, 0.0);
    for (std::size_t t = 0; t < used; ++t) {
      const double* mrow = mem.read.a.data() + t * embed;
      double acc = 0.0;
      const double wt = prev.weights_q[t];
      for (std::size_t e = 0; e < embed; ++e) {
        dmem_read.at(t, e) += wt * dread[e];
        acc += mrow[e] * dread[e];
      }
      dwq[t] = acc;
    }

    // requantized weights pass straight through; softmax jacobian next
    double wdot = 0.0;
    for (std::size_t t = 0; t < used; ++t) wdot += prev.weights[t] * dwq[t];
    std::vector<double> dsims(used);
    for (std::size_t t = 0; t < used; ++t) {
      dsims[t] = prev.weights[t] * (dwq[t] - wdot);
    }

    // similarity backward into the previous hop's key and the memory
    if (spec.fixed() && spec.similarity == SimilarityKind::Hamming) {
      const FixedTensor& key_fx = *prev.key_fx;
      const FixedTensor& addr_fx = *mem.addr_fx;
      for (std::size_t t = 0; t < used; ++t) {
        if (dsims[t] == 0.0) continue;
        const auto gk = hamming_backward(key_fx, 0, addr_fx, t, hw);
        const auto gm = hamming_backward(addr_fx, t, key_fx, 0, hw);
        for (std::size_t e = 0; e < embed; ++e) {
          dkey[i - 1][e] += dsims[t] * gk[e];
          dmem_addr.at(t, e) += dsims[t] * gm[e];
        }
      }
    } else {
      for (std::size_t t = 0; t < used; ++t) {
        const double* arow = mem.addr.a.data() + t * embed;
        const double ds = dsims[t];
        if (ds == 0.0) continue;
        for (std::size_t e = 0; e < embed; ++e) {
          dkey[i - 1][e] += ds * arow[e];
          dmem_addr.at(t, e) += ds * prev.key[e];
        }
      }
    }
  }

  // first key: key_1 = act(W_q q)
  const std::vector<double> dpre0 =
      act_backward(spec, trace.hops[0].key_pre, dkey[0]);
  add_outer(grads.w_question, dpre0, story.question);

  // memory rows back to the embedding weights
  for (std::size_t t = 0; t < used; ++t) {
    std::vector<double> da(embed), dr(embed);
    for (std::size_t e = 0; e < embed; ++e) {
      da[e] = dmem_addr.at(t, e);
      dr[e] = dmem_read.at(t, e);
    }
    add_outer(grads.w_addr, da, story.sentences[t]);
    add_outer(grads.w_read, dr, story.sentences[t]);
  }
}

namespace {

void apply_param_masks(const MannParams& params, const QuantSpec& spec,
                       Gradients& grads) {
  if (!spec.fixed()) return;
  auto mask = [&](const Matrix& w, Matrix& g) {
    for (std::size_t i = 0; i < w.a.size(); ++i) {
      if (ste_mask(w.a[i], spec.param_fmt) == 0.0) g.a[i] = 0.0;
    }
  };
  mask(params.w_addr, grads.w_addr);
  mask(params.w_read, grads.w_read);
  mask(params.w_question, grads.w_question);
  // w_key applies its per-use mask during accumulation; w_out is never
  // quantized.
}

void sgd_step(MannParams& params, const Gradients& grads, double lr) {
  auto step = [lr](Matrix& w, const Matrix& g) {
    for (std::size_t i = 0; i < w.a.size(); ++i) w.a[i] -= lr * g.a[i];
  };
  step(params.w_addr, grads.w_addr);
  step(params.w_read, grads.w_read);
  step(params.w_question, grads.w_question);
  step(params.w_key, grads.w_key);
  step(params.w_out, grads.w_out);
}

std::vector<EncodedStory> encode_all(const std::vector<Story>& stories,
                                     const Vocabulary& vocab) {
  std::vector<EncodedStory> out;
  out.reserve(stories.size());
  for (const auto& s : stories) out.push_back(encode_story(s, vocab));
  return out;
}

double percent_wrong(std::size_t wrong, std::size_t total) {
  if (total == 0) return 0.0;
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(total);
}

}  // namespace

EvalResult evaluate(const MannParams& params, const MannConfig& cfg,
                    const QuantSpec& spec,
                    std::span<const EncodedStory> stories) {
  EvalResult res;
  QuantScopes scopes;
  scopes.attach_ops(&res.ops);
  QuantizedParams qp;
  if (spec.fixed()) {
    qp = quantize_params(params, spec, cfg.hops, scopes.params);
  }
  SimilarityRecord record(2.0 * spec.mem_fmt.overflow_threshold());
  std::size_t wrong = 0;
  for (const auto& story : stories) {
    const ForwardResult fwd =
        forward_story(params, spec.fixed() ? &qp : nullptr, story, cfg, spec,
                      scopes, &record);
    if (predict(fwd) != story.answer) ++wrong;
  }
  res.questions = stories.size();
  res.error_percent = percent_wrong(wrong, stories.size());
  res.sim_overflows = record.overflow_events;
  return res;
}

EvalResult evaluate_stories(const MannParams& params, const MannConfig& cfg,
                            const QuantSpec& spec,
                            const std::vector<Story>& stories,
                            const Vocabulary& vocab) {
  const auto encoded = encode_all(stories, vocab);
  return evaluate(params, cfg, spec, encoded);
}

TrainResult train(const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.train.empty()) {
    throw std::invalid_argument("training set is empty");
  }

  MannConfig model_cfg;
  model_cfg.input_dim = data.vocab.size();
  model_cfg.embed_dim = cfg.embed_dim;
  model_cfg.slots = cfg.slots;
  model_cfg.hops = cfg.hops;

  Rng rng(cfg.seed);
  MannParams params = init_params(model_cfg, rng);
  Rng rounding_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  const auto train_set = encode_all(data.train, data.vocab);
  const auto val_set = encode_all(data.validation, data.vocab);
  const auto test_set = encode_all(data.test, data.vocab);

  TrainResult result;
  RunMetrics& metrics = result.metrics;

  const double sim_range = 2.0 * cfg.quant.mem_fmt.overflow_threshold();
  SimilarityRecord record(sim_range);

  QuantScopes scopes;
  scopes.set_rounding(cfg.rounding, &rounding_rng);
  std::uint64_t seen_overflow[4] = {0, 0, 0, 0};

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  Gradients grads(model_cfg);
  std::vector<double> monitor_history;
  MannParams best_params = params;
  double best_monitor = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  bool stopped = false;

  for (std::size_t epoch = 1; epoch <= cfg.epochs && !stopped; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
    std::size_t wrong = 0;
    double loss_sum = 0.0;
    std::size_t pos = 0;
    while (pos < order.size()) {
      const std::size_t batch_end =
          std::min(order.size(), pos + cfg.batch_size);
      grads.zero();
      QuantizedParams qp;
      if (cfg.quant.fixed()) {
        qp = quantize_params(params, cfg.quant, model_cfg.hops, scopes.params);
      }
      for (std::size_t b = pos; b < batch_end; ++b) {
        const EncodedStory& story = train_set[order[b]];
        const ForwardResult fwd =
            forward_story(params, cfg.quant.fixed() ? &qp : nullptr, story,
                          model_cfg, cfg.quant, scopes, &record);
        const double p = fwd.trace.output[story.answer];
        const double loss = -std::log(std::max(p, 1e-300));
        if (!std::isfinite(loss)) {
          throw TrainingDivergence(
              "loss became non-finite at epoch " + std::to_string(epoch) +
              "; the run diverged");
        }
        loss_sum += loss;
        if (predict(fwd) != story.answer) ++wrong;
        backward_story(params, story, model_cfg, cfg.quant, fwd, grads);
      }
      apply_param_masks(params, cfg.quant, grads);
      const double inv_batch =
          1.0 / static_cast<double>(batch_end - pos);
      grads.scale(inv_batch);
      if (cfg.grad_clip > 0.0) {
        const double norm = std::sqrt(grads.squared_norm());
        if (norm > cfg.grad_clip) grads.scale(cfg.grad_clip / norm);
      }
      sgd_step(params, grads, cfg.learning_rate);
      pos = batch_end;
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.train_error = percent_wrong(wrong, train_set.size());
    em.train_loss = loss_sum / static_cast<double>(train_set.size());
    if (!val_set.empty()) {
      em.validation_error =
          evaluate(params, model_cfg, cfg.quant, val_set).error_percent;
    }
    em.overflow_params = scopes.params.overflow_count - seen_overflow[0];
    em.overflow_memory = scopes.memory.overflow_count - seen_overflow[1];
    em.overflow_activation =
        scopes.activation.overflow_count - seen_overflow[2];
    em.overflow_similarity =
        scopes.similarity.overflow_count - seen_overflow[3];
    seen_overflow[0] = scopes.params.overflow_count;
    seen_overflow[1] = scopes.memory.overflow_count;
    seen_overflow[2] = scopes.activation.overflow_count;
    seen_overflow[3] = scopes.similarity.overflow_count;
    em.sim_interdecile = record.histogram.interdecile_width();
    em.sim_values = record.histogram.total();
    metrics.sim_histograms.push_back(record.histogram);
    record.histogram.clear();

    metrics.epochs.push_back(em);

    // Early stopping monitors validation error, or training error when
    // no validation split exists.
    const double monitored =
        em.validation_error >= 0.0 ? em.validation_error : em.train_error;
    monitor_history.push_back(monitored);
    if (monitored < best_monitor) {
      best_monitor = monitored;
      best_params = params;
      best_epoch = epoch;
    }
    if (cfg.early_stop.enabled) {
      const auto decision = early_stop(monitor_history,
                                       cfg.early_stop.patience,
                                       cfg.early_stop.min_delta);
      if (decision.stop) {
        stopped = true;
        metrics.early_stopped = true;
      }
    }
  }

  if (cfg.early_stop.enabled && best_epoch > 0) {
    params = best_params;
    metrics.best_epoch = best_epoch;
  } else {
    metrics.best_epoch = metrics.epochs.size();
  }

  metrics.final_train_error = metrics.epochs.back().train_error;
  if (!val_set.empty()) {
    metrics.final_validation_error =
        evaluate(params, model_cfg, cfg.quant, val_set).error_percent;
  }
  if (!test_set.empty()) {
    const EvalResult ev = evaluate(params, model_cfg, cfg.quant, test_set);
    metrics.final_test_error = ev.error_percent;
    metrics.inference_ops = ev.ops;
    metrics.test_questions = ev.questions;
  }

  result.model_cfg = model_cfg;
  result.params = std::move(params);
  return result;
}

namespace {

nlohmann::json epoch_json(const EpochMetrics& em) {
  nlohmann::json j;
  j["epoch"] = em.epoch;
  j["train_err"] = em.train_error;
  if (em.validation_error >= 0.0) j["val_err"] = em.validation_error;
  j["train_loss"] = em.train_loss;
  j["overflow"] = {{"params", em.overflow_params},
                   {"memory", em.overflow_memory},
                   {"activation", em.overflow_activation},
                   {"similarity", em.overflow_similarity}};
  j["sim_interdecile"] = em.sim_interdecile;
  j["sim_values"] = em.sim_values;
  return j;
}

nlohmann::json ops_json(const OpCounts& ops) {
  return nlohmann::json{{"fixed_add8", ops.fixed_add8},
                        {"fixed_add32", ops.fixed_add32},
                        {"fixed_mul8", ops.fixed_mul8},
                        {"fixed_mul32", ops.fixed_mul32},
                        {"float_add16", ops.float_add16},
                        {"float_add32", ops.float_add32},
                        {"float_mul16", ops.float_mul16},
                        {"float_mul32", ops.float_mul32}};
}

}  // namespace

std::string RunMetrics::to_jsonl(const std::string& histogram_file) const {
  std::string out;
  for (const auto& em : epochs) {
    nlohmann::json j = epoch_json(em);
    j["histogram_file"] = histogram_file;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string RunMetrics::to_json() const {
  nlohmann::json j;
  j["epochs"] = nlohmann::json::array();
  for (const auto& em : epochs) j["epochs"].push_back(epoch_json(em));
  j["final_train_error"] = final_train_error;
  if (final_validation_error >= 0.0) {
    j["final_validation_error"] = final_validation_error;
  }
  if (final_test_error >= 0.0) j["final_test_error"] = final_test_error;
  j["best_epoch"] = best_epoch;
  j["early_stopped"] = early_stopped;
  j["inference_ops"] = ops_json(inference_ops);
  j["test_questions"] = test_questions;
  return j.dump(2);
}

}  // namespace qmann
