// Shared parameter sets for the tests.
#pragma once

#include <cmath>
#include <vector>

#include "bathlab/response.hpp"

namespace fx {

struct ParamSet {
  double a, b, omega_sq, coupling_rhs;

  bathlab::SpectralDensity sd() const { return bathlab::SpectralDensity(a, b); }
  bathlab::ModelParams mp(double kT = 1.0, double q0 = 1.0, double p0 = 0.0) const {
    return bathlab::ModelParams::from_coupling_rhs(sd(), std::sqrt(omega_sq), coupling_rhs, kT,
                                                   q0, p0);
  }
};

// ω² = 1/3, a/b = 9, ε²π/(2b) = 4
inline const ParamSet worked_example{9.0, 1.0, 1.0 / 3.0, 4.0};

// Three real roots −λ₁ < −λ₂ < 0 < λ₃ with λ₃ < min(λ₁, λ₂, √(a/b)).
inline const std::vector<ParamSet> large_coupling_sets{
    worked_example,
    {25.0, 1.0, 0.5, 8.0},
    {4.0, 0.5, 0.3, 3.5},
    {36.0, 2.0, 0.4, 6.0},
    {25.0, 2.0, 0.3, 5.0},
};

}  // namespace fx
