#include "qmann/energy.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace qmann {

EnergyModel EnergyModel::reference() {
  EnergyModel m;
  m.fixed_add8 = 0.03;
  m.fixed_add32 = 0.1;
  m.fixed_mul8 = 0.2;
  m.fixed_mul32 = 3.1;
  m.float_add16 = 0.4;
  m.float_add32 = 0.9;
  m.float_mul16 = 1.1;
  m.float_mul32 = 3.7;
  return m;
}

double EnergyModel::total_energy(const OpCounts& ops) const {
  return static_cast<double>(ops.fixed_add8) * fixed_add8 +
         static_cast<double>(ops.fixed_add32) * fixed_add32 +
         static_cast<double>(ops.fixed_mul8) * fixed_mul8 +
         static_cast<double>(ops.fixed_mul32) * fixed_mul32 +
         static_cast<double>(ops.float_add16) * float_add16 +
         static_cast<double>(ops.float_add32) * float_add32 +
         static_cast<double>(ops.float_mul16) * float_mul16 +
         static_cast<double>(ops.float_mul32) * float_mul32;
}

double EnergyModel::energy_gain(const OpCounts& a, const OpCounts& b) const {
  const double denom = total_energy(b);
  if (denom == 0.0) {
    throw std::invalid_argument("energy gain against an empty op profile");
  }
  return total_energy(a) / denom;
}

double EnergyModel::gain_vs_float_mul32(double op_pj) const {
  if (op_pj <= 0.0) {
    throw std::invalid_argument("per-op energy must be positive");
  }
  return float_mul32 / op_pj;
}

double round_to_tenth(double x) {
  return std::floor(x * 10.0 + 0.5) / 10.0;
}

namespace {

nlohmann::json counts_json(const OpCounts& ops) {
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

std::string EnergyModel::report_json(const OpCounts& run,
                                     const OpCounts* baseline) const {
  nlohmann::json j;
  j["counts"] = counts_json(run);
  j["total_pj"] = total_energy(run);
  if (baseline != nullptr) {
    j["baseline_counts"] = counts_json(*baseline);
    j["baseline_total_pj"] = total_energy(*baseline);
    j["gain_vs_baseline"] = energy_gain(*baseline, run);
  }
  return j.dump(2);
}

}  // namespace qmann
