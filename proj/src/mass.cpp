#include "uotdc/mass.hpp"

#include <cmath>
#include <string>

#include "uotdc/error.hpp"

namespace uotdc {

MassTerm parse_mass_term(std::string_view s) {
  if (s == "psi") return MassTerm::Psi;
  if (s == "gamma-psi") return MassTerm::GammaPsi;
  throw Error(ErrorCode::InvalidArgument, "unknown mass term '" + std::string(s) + "'");
}

std::string_view to_string(MassTerm t) { return t == MassTerm::Psi ? "psi" : "gamma-psi"; }

MassParams MassParams::from_references(const GaussianMeasure& alpha, const GaussianMeasure& beta,
                                       double gamma) {
  MassParams p;
  p.c_alpha = alpha.mass();
  p.c_beta = beta.mass();
  p.gamma = gamma;
  p.log_det_offset = logdet_spd(alpha.cov()) + logdet_spd(beta.cov()) - 2.0 * static_cast<double>(alpha.dim());
  return p;
}

double phi_mass(double c, double c_ref) {
  if (c == 0.0) return c_ref;
  return c * std::log(c / c_ref) - c + c_ref;
}

double psi(double c, const MassParams& p) {
  if (!(c >= 0.0)) throw Error(ErrorCode::NonPositiveMass, "psi requires c >= 0");
  return 0.5 * c * p.gamma * p.log_det_offset + p.gamma * (phi_mass(c, p.c_alpha) + phi_mass(c, p.c_beta));
}

double psi_derivative(double c, const MassParams& p) {
  if (!(c > 0.0)) throw Error(ErrorCode::NonPositiveMass, "psi' requires c > 0");
  return 0.5 * p.gamma * p.log_det_offset + p.gamma * (std::log(c / p.c_alpha) + std::log(c / p.c_beta));
}

double mass_objective(double c, double value, const MassParams& p, MassTerm term) {
  const double weight = term == MassTerm::Psi ? 1.0 : p.gamma;
  return c * value + weight * psi(c, p);
}

double optimal_mass(double value, const MassParams& p, MassTerm term) {
  // Stationarity of c v + w psi(c): v + w gamma (L/2 + log(c^2 / (c_a c_b))) = 0.
  const double weight = term == MassTerm::Psi ? 1.0 : p.gamma;
  const double exponent = -value / (2.0 * weight * p.gamma) - 0.25 * p.log_det_offset;
  return std::sqrt(p.c_alpha * p.c_beta) * std::exp(exponent);
}

}  // namespace uotdc
