#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qmann/energy.hpp"
#include "qmann/histogram.hpp"
#include "qmann/similarity.hpp"
#include "qmann/train.hpp"

namespace qmann {

struct HistogramSnapshot {
  std::size_t step = 0;
  Histogram histogram;
};

/// Freezes the record's current distribution under a step label.
HistogramSnapshot record_histogram(const SimilarityRecord& record,
                                   std::size_t step);

/// CSV schema: step,bin_lo,bin_hi,count. Empty bins are skipped.
std::string histograms_to_csv(const std::vector<HistogramSnapshot>& snaps);
std::string run_histograms_to_csv(const RunMetrics& metrics);

/// CSV schema: epoch,split,error.
std::string curves_to_csv(const RunMetrics& metrics);

/// Per-epoch saturation counts by component.
/// CSV schema: epoch,component,count.
std::string overflow_trace_csv(const RunMetrics& metrics);

struct OverflowTracePoint {
  std::size_t epoch = 0;
  std::uint64_t similarity = 0;
  std::uint64_t memory = 0;
  std::uint64_t activation = 0;
  std::uint64_t params = 0;
};
std::vector<OverflowTracePoint> overflow_trace(const RunMetrics& metrics);

}  // namespace qmann
