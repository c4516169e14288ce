#pragma once

namespace stancebench {

/// Digamma via upward recurrence to x >= 6 and the asymptotic series there.
/// Defined for x > 0.
double digamma(double x) noexcept;

} // namespace stancebench
