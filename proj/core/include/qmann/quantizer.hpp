#pragma once

#include <span>
#include <vector>

#include "qmann/fxp.hpp"

namespace qmann {

/// Controller quantization control: perturbs (iwl, frac) per controller
/// step at constant total width, cycling delta through {0, +1, -1} so
/// the per-step quantization errors decorrelate. delta = +1 trades one
/// integer bit for one fraction bit. A perturbation that would leave
/// iwl < 0 or frac < 1 collapses to delta = 0.
QFormat mq_formats(const QFormat& base, std::size_t hop);

/// Sign activation into {-1, +1}, with sign(0) = +1.
std::vector<double> binarize_act(std::span<const double> x);

/// Straight-through backward of the sign activation: the upstream
/// gradient passes where |x| <= 1 and is cut elsewhere.
std::vector<double> binarize_act_backward(std::span<const double> x,
                                          std::span<const double> upstream);

/// Straight-through mask of a range-clipped quantizer: 1 inside the
/// representable range of fmt, 0 outside.
double ste_mask(double x, const QFormat& fmt);

}  // namespace qmann
