#include "mesoed/quadrature.hpp"

#include <cmath>
#include <stdexcept>

namespace mesoed {

namespace {

// Kronrod 15-point nodes on [-1, 1] (odd entries are the embedded Gauss-7
// nodes) and the corresponding weights.
constexpr double kNodes[15] = {
    -0.991455371120813, -0.949107912342759, -0.864864423359769,
    -0.741531185599394, -0.586087235467691, -0.405845151377397,
    -0.207784955007898, 0.0,                0.207784955007898,
    0.405845151377397,  0.586087235467691,  0.741531185599394,
    0.864864423359769,  0.949107912342759,  0.991455371120813};
constexpr double kWeightsK[15] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728, 0.204432940075298,
    0.190350578064785, 0.169004726639267, 0.140653259715525,
    0.104790010322250, 0.063092092629979, 0.022935322010529};
constexpr double kWeightsG[7] = {
    0.129484966168870, 0.279705391489277, 0.381830050505119,
    0.417959183673469, 0.381830050505119, 0.279705391489277,
    0.129484966168870};

struct Panel {
    double kronrod;
    double err;
};

Panel eval_panel(const std::function<double(double)>& f, double a, double b) {
    const double h = 0.5 * (b - a);
    const double c = 0.5 * (a + b);
    double gk = 0.0, g = 0.0;
    for (int i = 0; i < 15; ++i) {
        const double v = f(c + h * kNodes[i]);
        gk += kWeightsK[i] * v;
        if (i % 2 == 1) g += kWeightsG[i / 2] * v;
    }
    gk *= h;
    g *= h;
    return {gk, std::abs(gk - g)};
}

double adapt(const std::function<double(double)>& f, double a, double b,
             double tol, int depth) {
    const Panel p = eval_panel(f, a, b);
    if (p.err <= tol || depth <= 0) {
        if (p.err > tol)
            throw std::runtime_error("integrate: tolerance not met");
        return p.kronrod;
    }
    const double c = 0.5 * (a + b);
    return adapt(f, a, c, 0.5 * tol, depth - 1) +
           adapt(f, c, b, 0.5 * tol, depth - 1);
}

} // namespace

double integrate(const std::function<double(double)>& f, double a, double b,
                 double abs_tol, int max_depth) {
    if (!(b > a)) {
        if (a == b) return 0.0;
        throw std::invalid_argument("integrate: requires b >= a");
    }
    return adapt(f, a, b, abs_tol, max_depth);
}

} // namespace mesoed
