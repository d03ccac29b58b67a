#pragma once

#include <span>

#include "gnplan/errors.hpp"

namespace gnplan {

inline double mean(std::span<const double> v) {
    if (v.empty()) throw DomainError("mean: empty input");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

/// Variance with divisor n (no Bessel correction), fixed left-to-right
/// summation. Group-norm statistics use this estimator throughout.
inline double var_biased(std::span<const double> v) {
    if (v.empty()) throw DomainError("var_biased: empty input");
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) {
        const double d = x - m;
        s += d * d;
    }
    return s / static_cast<double>(v.size());
}

} // namespace gnplan
