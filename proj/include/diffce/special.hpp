#pragma once

namespace diffce {

// Scaled complementary error function exp(x^2) erfc(x) for x >= 0.
// Decays like 1/(x sqrt(pi)) instead of underflowing, which is what makes
// the Laplace-Gaussian score ratios computable at large arguments.
double erfcx(double x);

// exp(-u^2) / erfc(u) for u >= 0, evaluated as 1 / erfcx(u).  erfc(u)
// underflows past u ~ 26.5 while the scaled form never does, so the ratio
// is accurate for every u — including the grows-like-sqrt(pi)*u tail that
// the Boltzmann slope cancels against.  Throws std::domain_error for u < 0.
double stable_erfc_ratio(double u);

}  // namespace diffce
