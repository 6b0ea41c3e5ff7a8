#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qmann/data.hpp"
#include "qmann/histogram.hpp"
#include "qmann/model.hpp"
#include "qmann/quantizer.hpp"

namespace qmann {

struct EarlyStopConfig {
  bool enabled = false;
  std::size_t patience = 10;
  double min_delta = 0.0;
};

struct TrainConfig {
  std::size_t embed_dim = 60;
  std::size_t slots = 50;
  std::size_t hops = 3;
  QuantSpec quant;
  double learning_rate = 0.3;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  EarlyStopConfig early_stop;
  Rounding rounding = Rounding::NearestEven;
  /// Global gradient-norm clip per batch; 0 disables. The training recipe
  /// follows the end-to-end memory network lineage, which clips norms.
  double grad_clip = 40.0;

  void validate() const;
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double train_error = 0.0;
  double validation_error = -1.0;  // -1 when there is no validation split
  double train_loss = 0.0;
  std::uint64_t overflow_params = 0;
  std::uint64_t overflow_memory = 0;
  std::uint64_t overflow_activation = 0;
  std::uint64_t overflow_similarity = 0;
  double sim_interdecile = 0.0;
  std::uint64_t sim_values = 0;
};

struct RunMetrics {
  std::vector<EpochMetrics> epochs;
  std::vector<Histogram> sim_histograms;  // one snapshot per epoch
  double final_train_error = 0.0;
  double final_validation_error = -1.0;
  double final_test_error = -1.0;
  std::size_t best_epoch = 0;  // 1-based; 0 = not tracked
  bool early_stopped = false;
  OpCounts inference_ops;  // ops of the final test evaluation
  std::size_t test_questions = 0;

  /// One JSON object per epoch (the run-log stream). Each record points
  /// at the histogram export holding its distribution snapshot.
  std::string to_jsonl(
      const std::string& histogram_file = "histograms.csv") const;
  /// Whole-run summary as one JSON document.
  std::string to_json() const;
};

struct TrainResult {
  MannConfig model_cfg;
  MannParams params;
  RunMetrics metrics;
};

/// Thrown when the loss stops being finite.
struct TrainingDivergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Early-stopping rule: stop once `patience` consecutive epochs pass
/// without an improvement greater than min_delta over the best value so
/// far. best_index is the (0-based) position of the first best value.
struct EarlyStopDecision {
  bool stop = false;
  std::size_t best_index = 0;
};
EarlyStopDecision early_stop(std::span<const double> history,
                             std::size_t patience, double min_delta);

/// SGD with quantization-aware forward and straight-through backward.
/// Deterministic for a fixed config and seed.
TrainResult train(const Dataset& data, const TrainConfig& cfg);

struct EvalResult {
  double error_percent = 0.0;
  std::size_t questions = 0;
  OpCounts ops;
  std::uint64_t sim_overflows = 0;
};

/// Error rate of the model over a story list (rounding is always
/// nearest-even at evaluation time, so a saved model scores
/// reproducibly).
EvalResult evaluate(const MannParams& params, const MannConfig& cfg,
                    const QuantSpec& spec,
                    std::span<const EncodedStory> stories);

EvalResult evaluate_stories(const MannParams& params, const MannConfig& cfg,
                            const QuantSpec& spec,
                            const std::vector<Story>& stories,
                            const Vocabulary& vocab);

/// Gradient buffers for one batch.
struct Gradients {
  Matrix w_addr, w_read, w_question, w_key, w_out;
  explicit Gradients(const MannConfig& cfg);
  void zero();
  double squared_norm() const;
  void scale(double factor);
};

/// Reverse pass for one story. Gradients are exact for the float paths;
/// quantizers backpropagate straight-through (the sign activation cuts
/// gradients where |x| > 1, parameter quantizers cut where the master
/// value is outside the format range), and the bounded similarity uses
/// its shift-and-add approximate gradient.
void backward_story(const MannParams& params, const EncodedStory& story,
                    const MannConfig& cfg, const QuantSpec& spec,
                    const ForwardResult& fwd, Gradients& grads);

}  // namespace qmann
