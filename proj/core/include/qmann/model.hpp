#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qmann/addressing.hpp"
#include "qmann/data.hpp"
#include "qmann/fxp.hpp"
#include "qmann/rng.hpp"
#include "qmann/similarity.hpp"

namespace qmann {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}
  double& at(std::size_t r, std::size_t c) { return a[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return a[r * cols + c]; }
};

struct MannConfig {
  std::size_t input_dim = 0;  // vocabulary size
  std::size_t embed_dim = 60;
  std::size_t slots = 50;
  std::size_t hops = 3;
};

enum class Arithmetic { Float, Fixed };
enum class Activation { Fixed, Binary };

/// Numeric regime of a run: float throughout, or fixed-point with the
/// three element formats, the similarity in use, and the optional
/// sign-binarized activations and per-hop format perturbation.
struct QuantSpec {
  Arithmetic arithmetic = Arithmetic::Float;
  QFormat param_fmt{5, 2};
  QFormat act_fmt{5, 2};
  QFormat mem_fmt{5, 2};
  Activation activation = Activation::Fixed;
  SimilarityKind similarity = SimilarityKind::Dot;
  int hamming_alpha = -3;
  bool mq = false;

  bool fixed() const { return arithmetic == Arithmetic::Fixed; }
  bool binary_act() const { return activation == Activation::Binary; }
  HammingWeights hamming_weights() const {
    return HammingWeights{hamming_alpha, mem_fmt.total_bits()};
  }
};

/// Master parameters. All five matrices live in float; the first four
/// are re-quantized at each forward in fixed mode, the output weights
/// never are.
struct MannParams {
  Matrix w_addr;      // E x I, input -> address memory
  Matrix w_read;      // E x I, input -> read memory
  Matrix w_question;  // E x I, question -> first key
  Matrix w_key;       // E x E, key update across hops
  Matrix w_out;       // I x E, final key -> answer logits
};

MannParams init_params(const MannConfig& cfg, Rng& rng);

/// Forward-pass images of the quantizable parameters. Under the per-hop
/// format perturbation the key-update matrix is quantized once per hop
/// transition.
struct QuantizedParams {
  FixedTensor w_addr;
  FixedTensor w_read;
  FixedTensor w_question;
  std::vector<FixedTensor> w_key;  // per hop transition (hops-1 entries)
};

/// Per-component quantization contexts for one run; saturation tallies
/// accumulate per component.
struct QuantScopes {
  FxContext params;
  FxContext memory;
  FxContext activation;
  FxContext similarity;

  void attach_ops(OpCounts* ops) {
    params.ops = ops;
    memory.ops = ops;
    activation.ops = ops;
    similarity.ops = ops;
  }
  void set_rounding(Rounding r, Rng* rng) {
    for (FxContext* c : {&params, &memory, &activation, &similarity}) {
      c->rounding = r;
      c->rng = rng;
    }
  }
};

QuantizedParams quantize_params(const MannParams& params,
                                const QuantSpec& spec, std::size_t hops,
                                FxContext& ctx);

/// Address and read memories, slot-major (used x E). The float view is
/// always populated (dequantized in fixed mode); the fixed payloads are
/// the forward-pass truth when quantized.
struct MemoryState {
  Matrix addr;
  Matrix read;
  std::optional<FixedTensor> addr_fx;
  std::optional<FixedTensor> read_fx;
  std::size_t used = 0;
};

struct EncodedStory {
  std::vector<std::vector<double>> sentences;  // T x I binary bag-of-words
  std::vector<double> question;                // I
  std::size_t answer = 0;
};

EncodedStory encode_story(const Story& story, const Vocabulary& vocab);

/// Embeds the sentence matrix into both memories with mode-appropriate
/// arithmetic. Throws when the story exceeds the slot budget.
MemoryState write_memory(const MannParams& params, const QuantizedParams* qp,
                         const std::vector<std::vector<double>>& sentences,
                         const MannConfig& cfg, const QuantSpec& spec,
                         QuantScopes& scopes);

/// One hop of the trace, with the pre-activation values the backward
/// pass needs.
struct HopState {
  std::vector<double> key_pre;    // accumulation before the activation
  std::vector<double> key;        // addressing key (dequantized)
  std::vector<double> sims;       // per-slot similarity scores
  std::vector<double> weights;    // float softmax output
  std::vector<double> weights_q;  // weights the read actually used
  std::vector<double> read_pre;
  std::vector<double> read;
  std::optional<FixedTensor> key_fx;  // memory-format key (bounded-sim mode)
};

struct HopTrace {
  std::vector<HopState> hops;
  std::vector<double> logits;  // w_out applied to the final key (float)
  std::vector<double> output;  // answer distribution
};

/// Runs the R-hop read against a written memory and applies the float
/// output layer. The read recurrence is
///   key_1   = W_q q
///   key_i   = W_key key_{i-1} + read_{i-1}   (i > 1)
/// with each hop's read weights the softmax of the configured similarity
/// between the address memory and the hop key.
HopTrace read_hops(const MannParams& params, const QuantizedParams* qp,
                   const MemoryState& memory, std::span<const double> question,
                   const MannConfig& cfg, const QuantSpec& spec,
                   QuantScopes& scopes, SimilarityRecord* record);

/// Answer distribution of a completed trace.
const std::vector<double>& output_distribution(const HopTrace& trace);

/// Diagnostic per-hop output: softmax of the float output layer applied
/// to hop i's key. The answer comes from the final hop only; the
/// intermediate distributions are computed on demand and never feed the
/// loss or the op counters.
std::vector<double> hop_output(const MannParams& params,
                               const HopTrace& trace, std::size_t hop);

struct ForwardResult {
  MemoryState memory;
  HopTrace trace;
};

ForwardResult forward_story(const MannParams& params,
                            const QuantizedParams* qp,
                            const EncodedStory& story, const MannConfig& cfg,
                            const QuantSpec& spec, QuantScopes& scopes,
                            SimilarityRecord* record);

std::size_t predict(const ForwardResult& fwd);

/// Versioned JSON checkpoint: config, quantization regime and exact
/// parameter payloads.
std::string checkpoint_to_json(const MannConfig& cfg, const QuantSpec& spec,
                               const MannParams& params);
void checkpoint_from_json(const std::string& text, MannConfig& cfg,
                          QuantSpec& spec, MannParams& params);

std::string to_string(SimilarityKind kind);
SimilarityKind parse_similarity(const std::string& name);

}  // namespace qmann
