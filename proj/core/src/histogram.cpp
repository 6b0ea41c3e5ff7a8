#include "qmann/histogram.hpp"

namespace qmann {

double Histogram::quantile(double q) const {
  if (total_ == 0) return 0.0;
  if (q < 0.0) q = 0.0;
  if (q > 1.0) q = 1.0;
  const double target = q * static_cast<double>(total_);
  double cum = 0.0;
  for (int i = 0; i < kBins; ++i) {
    const double next = cum + static_cast<double>(counts_[i]);
    if (next >= target) {
      if (counts_[i] == 0) return bin_lo(i);
      const double frac = (target - cum) / static_cast<double>(counts_[i]);
      return bin_lo(i) + frac * (bin_hi(i) - bin_lo(i));
    }
    cum = next;
  }
  return bin_hi(kBins - 1);
}

double Histogram::interdecile_width() const {
  if (total_ == 0) return 0.0;
  return quantile(0.9) - quantile(0.1);
}

}  // namespace qmann
