#include "bcm/transmission.hpp"

namespace bcm {

std::vector<double> idd_weights(const IddCurve& curve) {
  std::vector<double> f(static_cast<std::size_t>(curve.support));
  for (int w = 1; w <= curve.support; ++w) f[static_cast<std::size_t>(w - 1)] = idd_weight(w, curve);
  return f;
}

double weighted_infectious(std::span<const Count> by_age, const IddCurve& curve) {
  if (by_age.size() > static_cast<std::size_t>(curve.support))
    throw std::domain_error("age ledger longer than the IDD support");
  double total = 0.0;
  for (std::size_t i = 0; i < by_age.size(); ++i) {
    if (by_age[i] != 0) total += idd_weight(static_cast<int>(i) + 1, curve) * static_cast<double>(by_age[i]);
  }
  return total;
}

}  // namespace bcm
