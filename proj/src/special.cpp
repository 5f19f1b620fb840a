#include "gem/special.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace gem {

namespace {

void require_positive(double x, const char* fn) {
    if (!(x > 0.0)) {
        throw std::domain_error(std::string(fn) + ": argument must be positive, got " +
                                std::to_string(x));
    }
}

// Lanczos approximation, g = 7, n = 9 coefficients.
constexpr double kLanczosG = 7.0;
constexpr double kLanczos[9] = {
    0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
    771.32342877765313,   -176.61502916214059,   12.507343278686905,
    -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7,
};

}  // namespace

double lgamma_pos(double x) {
    require_positive(x, "lgamma_pos");
    if (x < 0.5) {
        // reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x); x in (0, 0.5) so
        // every factor is positive and the log is safe
        return std::log(M_PI / std::sin(M_PI * x)) - lgamma_pos(1.0 - x);
    }
    double z = x - 1.0;
    double acc = kLanczos[0];
    for (int i = 1; i < 9; ++i) acc += kLanczos[i] / (z + i);
    double t = z + kLanczosG + 0.5;
    return 0.5 * std::log(2.0 * M_PI) + (z + 0.5) * std::log(t) - t + std::log(acc);
}

double digamma_pos(double x) {
    require_positive(x, "digamma_pos");
    double acc = 0.0;
    // shift into the asymptotic regime: psi(x) = psi(x+1) - 1/x
    while (x < 6.0) {
        acc -= 1.0 / x;
        x += 1.0;
    }
    // de Moivre expansion in 1/x^2
    double inv = 1.0 / x;
    double inv2 = inv * inv;
    double series = std::log(x) - 0.5 * inv -
                    inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 -
                            inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
    return acc + series;
}

double trigamma_pos(double x) {
    require_positive(x, "trigamma_pos");
    double acc = 0.0;
    // psi'(x) = psi'(x+1) + 1/x^2
    while (x < 6.0) {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    double inv = 1.0 / x;
    double inv2 = inv * inv;
    double series = inv * (1.0 + 0.5 * inv +
                           inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 -
                                   inv2 * (1.0 / 30.0)))));
    return acc + series;
}

}  // namespace gem
