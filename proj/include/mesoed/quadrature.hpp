#pragma once

#include <functional>

namespace mesoed {

/// Adaptive Gauss-Kronrod (G7, K15) integration of f over [a, b] to the
/// given absolute tolerance. Throws std::runtime_error if the interval
/// budget is exhausted before the tolerance is met.
double integrate(const std::function<double(double)>& f, double a, double b,
                 double abs_tol = 1e-10, int max_depth = 40);

} // namespace mesoed
