#pragma once

#include <string_view>

#include "uotdc/gaussian.hpp"

namespace uotdc {

/// How the mass penalty enters the control objective: `c q + psi(c)` or `c q + gamma psi(c)`.
enum class MassTerm { Psi, GammaPsi };

MassTerm parse_mass_term(std::string_view s);
std::string_view to_string(MassTerm t);

/// Reference data the mass penalty psi depends on.
struct MassParams {
  double c_alpha = 1.0;
  double c_beta = 1.0;
  double gamma = 1.0;
  double log_det_offset = 0.0;  // log det Sigma_alpha + log det Sigma_beta - 2 d

  static MassParams from_references(const GaussianMeasure& alpha, const GaussianMeasure& beta,
                                    double gamma);
};

/// c log(c / c_ref) - c + c_ref, continuous at c = 0.
double phi_mass(double c, double c_ref);

/// psi(c) = (c gamma / 2) L + gamma phi_alpha(c) + gamma phi_beta(c).
double psi(double c, const MassParams& p);

/// d psi / d c.
double psi_derivative(double c, const MassParams& p);

/// Objective of the scalar mass stage: c * value + psi(c), or + gamma psi(c).
double mass_objective(double c, double value, const MassParams& p, MassTerm term = MassTerm::Psi);

/// Unique minimizer over c > 0 of `mass_objective(., value)`.
double optimal_mass(double value, const MassParams& p, MassTerm term = MassTerm::Psi);

}  // namespace uotdc
