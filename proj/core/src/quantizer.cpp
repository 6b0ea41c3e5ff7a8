#include "qmann/quantizer.hpp"

#include <cmath>
#include <stdexcept>

namespace qmann {

QFormat mq_formats(const QFormat& base, std::size_t hop) {
  if (base.total_bits() < 3) {
    throw std::invalid_argument(
        "controller quantization control needs at least 3 bits");
  }
  static constexpr int kCycle[3] = {0, +1, -1};
  const int delta = kCycle[hop % 3];
  QFormat fmt{base.iwl - delta, base.frac + delta};
  if (fmt.iwl < 0 || fmt.frac < 1) return base;  // clamp to delta = 0
  return fmt;
}

std::vector<double> binarize_act(std::span<const double> x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = x[i] < 0.0 ? -1.0 : 1.0;
  }
  return out;
}

std::vector<double> binarize_act_backward(std::span<const double> x,
                                          std::span<const double> upstream) {
  if (x.size() != upstream.size()) {
    throw std::invalid_argument("gradient length mismatch");
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::abs(x[i]) <= 1.0 ? upstream[i] : 0.0;
  }
  return out;
}

double ste_mask(double x, const QFormat& fmt) {
  return std::abs(x) <= fmt.overflow_threshold() ? 1.0 : 0.0;
}

}  // namespace qmann
