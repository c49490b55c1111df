#include "mesoed/propagators.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <stdexcept>

namespace mesoed {

ModeSpec::ModeSpec(double omega_, double hbar_) : omega(omega_), hbar(hbar_) {
    if (!(omega >= 0.0)) throw std::invalid_argument("ModeSpec: omega must be >= 0");
    if (!(hbar > 0.0)) throw std::invalid_argument("ModeSpec: hbar must be > 0");
}

CausalKernel retarded_single_mode(const TimeGrid& grid, const ModeSpec& mode) {
    if (grid.n_modes != 1)
        throw std::invalid_argument("retarded_single_mode: requires a single-mode grid");
    const double w = mode.omega;
    return CausalKernel(grid, KernelStrictness::strict,
                        [&](int n, int, int m, int) {
                            const double tau = (n - m) * grid.dt;
                            return w == 0.0 ? tau : std::sin(w * tau) / w;
                        });
}

double kubo_check(const TimeGrid& grid, const ModeSpec& mode, int n_max) {
    if (grid.n_modes != 1)
        throw std::invalid_argument("kubo_check: requires a single-mode grid");
    if (n_max < 2) throw std::invalid_argument("kubo_check: n_max must be >= 2");

    using Mat = Eigen::MatrixXcd;
    const std::complex<double> I(0.0, 1.0);
    Mat a = Mat::Zero(n_max, n_max);
    for (int i = 0; i + 1 < n_max; ++i) a(i, i + 1) = std::sqrt(double(i + 1));
    const Mat ad = a.adjoint();

    // A(t) = sqrt(hbar/2w) (a e^{-iwt} + a+ e^{iwt}); static limit uses the
    // w -> 0 expansion a + a+ + i w t (a+ - a) of the quadrature pair.
    const double w = mode.omega;
    const double hbar = mode.hbar;
    auto field_at = [&](double t) -> Mat {
        if (w == 0.0) {
            const double c = std::sqrt(hbar / 2.0);
            return c * (a + ad) + c * I * (t * (ad - a));
        }
        const double c = std::sqrt(hbar / (2.0 * w));
        return c * (a * std::exp(-I * w * t) + ad * std::exp(I * w * t));
    };

    const CausalKernel ref = retarded_single_mode(grid, mode);
    double max_dev = 0.0;
    for (int n = 0; n < grid.n_steps; ++n) {
        const Mat An = field_at(grid.time(n));
        for (int m = 0; m < n; ++m) { // theta(0) = 0: diagonal stays zero
            const Mat Am = field_at(grid.time(m));
            const std::complex<double> comm =
                (An * Am)(0, 0) - (Am * An)(0, 0); // vacuum element
            const std::complex<double> g = I / hbar * comm;
            const double dev = std::abs(g - std::complex<double>(ref(n, 0, m, 0)));
            max_dev = std::max(max_dev, dev);
        }
    }
    return max_dev;
}

CausalKernel dyson_absorb(const CausalKernel& G, const CausalKernel& Pi) {
    require_same_grid(G.grid(), Pi.grid(), "dyson_absorb");
    if (!G.is_strict() || !Pi.is_strict())
        throw std::invalid_argument("dyson_absorb: both kernels must be strict");

    const TimeGrid& grid = G.grid();
    const int D = grid.size();
    const int nm = grid.n_modes;
    const double dt = grid.dt;

    // M = G*Pi (strictly lower in time; nonzero only two or more steps down).
    std::vector<double> M(static_cast<std::size_t>(D) * D, 0.0);
    for (int i = 0; i < D; ++i) {
        const double* gi = G.values().data() + static_cast<std::size_t>(i) * D;
        for (int k = 0; k < D; ++k) {
            if (gi[k] == 0.0) continue;
            const double gik = dt * gi[k];
            const double* pk = Pi.values().data() + static_cast<std::size_t>(k) * D;
            double* mi = M.data() + static_cast<std::size_t>(i) * D;
            for (int j = 0; j < D; ++j) mi[j] += gik * pk[j];
        }
    }

    // Forward substitution over time rows: G'[n] = G[n] + dt * M[n] G'[<n].
    std::vector<double> out(G.values());
    for (int n = 1; n < grid.n_steps; ++n) {
        for (int k = 0; k < nm; ++k) {
            const int i = grid.flat(n, k);
            const double* mi = M.data() + static_cast<std::size_t>(i) * D;
            double* oi = out.data() + static_cast<std::size_t>(i) * D;
            for (int l = 0; l < grid.flat(n, 0); ++l) {
                if (mi[l] == 0.0) continue;
                const double c = dt * mi[l];
                const double* ol = out.data() + static_cast<std::size_t>(l) * D;
                for (int j = 0; j < D; ++j) oi[j] += c * ol[j];
            }
        }
    }
    return CausalKernel::from_dense(grid, KernelStrictness::strict, std::move(out));
}

} // namespace mesoed
