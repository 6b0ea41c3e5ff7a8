#pragma once

#include <string>

#include "qmann/opcounts.hpp"

namespace qmann {

/// Per-operation computation energy, in pJ. The reference table prices
/// eight operation classes (fixed/float add/mult at two widths each);
/// totals are counts times prices.
class EnergyModel {
 public:
  /// 45nm process figures: 8/32-bit fixed add 0.03/0.1, fixed mult
  /// 0.2/3.1, 16/32-bit float add 0.4/0.9, float mult 1.1/3.7.
  static EnergyModel reference();

  double fixed_add8 = 0.0;
  double fixed_add32 = 0.0;
  double fixed_mul8 = 0.0;
  double fixed_mul32 = 0.0;
  double float_add16 = 0.0;
  double float_add32 = 0.0;
  double float_mul16 = 0.0;
  double float_mul32 = 0.0;

  /// Total energy of an op profile, in pJ.
  double total_energy(const OpCounts& ops) const;

  /// Energy ratio total(a) / total(b); throws on a zero-energy
  /// denominator.
  double energy_gain(const OpCounts& a, const OpCounts& b) const;

  /// Single-op gain over the 32-bit float multiply, the table's
  /// reference column.
  double gain_vs_float_mul32(double op_pj) const;

  std::string report_json(const OpCounts& run,
                          const OpCounts* baseline = nullptr) const;
};

/// Rounds to one decimal, half away from zero; the precision the
/// reference gain column is printed at.
double round_to_tenth(double x);

}  // namespace qmann
