#pragma once

#include <cstdint>
#include <vector>

namespace qmann {

/// Fixed-binning histogram for similarity diagnostics: 101 uniform bins
/// spanning [-range, range] (twice the representable range when tracking
/// a fixed format, so pre-saturation mass stays visible). The outermost
/// bins absorb anything beyond the span.
class Histogram {
 public:
  static constexpr int kBins = 101;

  Histogram() : Histogram(64.0) {}
  explicit Histogram(double range) : range_(range), counts_(kBins, 0) {}

  void record(double value) {
    const double w = 2.0 * range_ / kBins;
    int bin = static_cast<int>((value + range_) / w);
    if (bin < 0) bin = 0;
    if (bin >= kBins) bin = kBins - 1;
    counts_[bin] += 1;
    total_ += 1;
  }

  void clear() {
    for (auto& c : counts_) c = 0;
    total_ = 0;
  }

  double bin_lo(int i) const { return -range_ + i * (2.0 * range_ / kBins); }
  double bin_hi(int i) const { return bin_lo(i + 1); }
  std::uint64_t count(int i) const { return counts_[i]; }
  std::uint64_t total() const { return total_; }
  double range() const { return range_; }

  /// Linear-interpolated quantile estimate from the binned counts.
  double quantile(double q) const;
  /// Width between the 10th and 90th percentiles; 0 for an empty
  /// histogram.
  double interdecile_width() const;

 private:
  double range_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

}  // namespace qmann
