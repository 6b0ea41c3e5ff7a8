#include "qmann/diag.hpp"

#include <sstream>

namespace qmann {

namespace {

void append_histogram_rows(std::ostringstream& out, std::size_t step,
                           const Histogram& h) {
  for (int b = 0; b < Histogram::kBins; ++b) {
    if (h.count(b) == 0) continue;
    out << step << ',' << h.bin_lo(b) << ',' << h.bin_hi(b) << ','
        << h.count(b) << '\n';
  }
}

}  // namespace

HistogramSnapshot record_histogram(const SimilarityRecord& record,
                                   std::size_t step) {
  return HistogramSnapshot{step, record.histogram};
}

std::string histograms_to_csv(const std::vector<HistogramSnapshot>& snaps) {
  std::ostringstream out;
  out << "step,bin_lo,bin_hi,count\n";
  for (const auto& snap : snaps) {
    append_histogram_rows(out, snap.step, snap.histogram);
  }
  return out.str();
}

std::string run_histograms_to_csv(const RunMetrics& metrics) {
  std::ostringstream out;
  out << "step,bin_lo,bin_hi,count\n";
  for (std::size_t e = 0; e < metrics.sim_histograms.size(); ++e) {
    append_histogram_rows(out, e + 1, metrics.sim_histograms[e]);
  }
  return out.str();
}

std::string curves_to_csv(const RunMetrics& metrics) {
  std::ostringstream out;
  out << "epoch,split,error\n";
  for (const auto& em : metrics.epochs) {
    out << em.epoch << ",train," << em.train_error << '\n';
    if (em.validation_error >= 0.0) {
      out << em.epoch << ",validation," << em.validation_error << '\n';
    }
  }
  if (metrics.final_test_error >= 0.0) {
    out << metrics.epochs.size() << ",test," << metrics.final_test_error
        << '\n';
  }
  return out.str();
}

std::vector<OverflowTracePoint> overflow_trace(const RunMetrics& metrics) {
  std::vector<OverflowTracePoint> out;
  out.reserve(metrics.epochs.size());
  for (const auto& em : metrics.epochs) {
    out.push_back(OverflowTracePoint{em.epoch, em.overflow_similarity,
                                     em.overflow_memory,
                                     em.overflow_activation,
                                     em.overflow_params});
  }
  return out;
}

std::string overflow_trace_csv(const RunMetrics& metrics) {
  std::ostringstream out;
  out << "epoch,component,count\n";
  for (const auto& p : overflow_trace(metrics)) {
    out << p.epoch << ",similarity," << p.similarity << '\n';
    out << p.epoch << ",memory," << p.memory << '\n';
    out << p.epoch << ",activation," << p.activation << '\n';
    out << p.epoch << ",params," << p.params << '\n';
  }
  return out.str();
}

}  // namespace qmann
