#pragma once

#include <cmath>
#include <stdexcept>

namespace uqkit {

// Digamma and trigamma via upward recurrence into the asymptotic regime.
// The Bernoulli-number series truncated at B14 (resp. B16) keeps the relative
// error below 1e-15 once the argument has been shifted to >= 10, comfortably
// inside the 1e-12 accuracy the loss formulas require. lnGamma is delegated
// to std::lgamma, which meets the same bar.

inline double digamma(double x) {
    if (!(x > 0.0)) throw std::invalid_argument("digamma: requires x > 0");
    double result = 0.0;
    while (x < 10.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    // psi(x) ~ ln x - 1/(2x) - sum B_{2n} / (2n x^{2n})
    double inv = 1.0 / x, inv2 = inv * inv;
    double series = inv2 * (1.0 / 12.0 +
                    inv2 * (-1.0 / 120.0 +
                    inv2 * (1.0 / 252.0 +
                    inv2 * (-1.0 / 240.0 +
                    inv2 * (1.0 / 132.0 +
                    inv2 * (-691.0 / 32760.0 +
                    inv2 * (1.0 / 12.0)))))));
    return result + std::log(x) - 0.5 * inv - series;
}

inline double trigamma(double x) {
    if (!(x > 0.0)) throw std::invalid_argument("trigamma: requires x > 0");
    double result = 0.0;
    while (x < 10.0) {
        result += 1.0 / (x * x);
        x += 1.0;
    }
    // psi'(x) ~ 1/x + 1/(2x^2) + sum B_{2n} / x^{2n+1}
    double inv = 1.0 / x, inv2 = inv * inv;
    double series = inv * inv2 * (1.0 / 6.0 +
                    inv2 * (-1.0 / 30.0 +
                    inv2 * (1.0 / 42.0 +
                    inv2 * (-1.0 / 30.0 +
                    inv2 * (5.0 / 66.0 +
                    inv2 * (-691.0 / 2730.0 +
                    inv2 * (7.0 / 6.0)))))));
    return result + inv + 0.5 * inv2 + series;
}

inline double log_gamma(double x) {
    if (!(x > 0.0)) throw std::invalid_argument("log_gamma: requires x > 0");
    return std::lgamma(x);
}

struct LogGammaDigamma {
    double log_gamma;
    double digamma;
};

inline LogGammaDigamma log_gamma_digamma(double x) {
    return {log_gamma(x), digamma(x)};
}

}  // namespace uqkit
