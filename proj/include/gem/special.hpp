#pragma once

namespace gem {

// Scalar special functions for positive arguments, accurate to ~1e-12
// relative. All three throw std::domain_error for x <= 0 (the Dirichlet code
// never needs the reflection branch and silently wrong poles are worse than
// a loud failure).

double lgamma_pos(double x);
double digamma_pos(double x);
double trigamma_pos(double x);

}  // namespace gem
