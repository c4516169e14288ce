#include "stancebench/special.hpp"

#include <cmath>
#include <limits>

namespace stancebench {

double digamma(double x) noexcept {
    if (!(x > 0.0)) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    double shift = 0.0;
    while (x < 10.0) {
        shift -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    // ln x - 1/(2x) - sum B_2n / (2n x^2n), through n = 6
    const double series =
        inv2 * (1.0 / 12 -
                inv2 * (1.0 / 120 -
                        inv2 * (1.0 / 252 -
                                inv2 * (1.0 / 240 - inv2 * (1.0 / 132 - inv2 * (691.0 / 32760))))));
    return shift + std::log(x) - 0.5 * inv - series;
}

} // namespace stancebench
