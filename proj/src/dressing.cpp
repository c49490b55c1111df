#include "mesoed/dressing.hpp"

#include "mesoed/quadrature.hpp"

#include <cmath>
#include <stdexcept>

namespace mesoed {

namespace {

class DressedSampler final : public StepSampler {
public:
    DressedSampler(const DressedDevice& dev, std::uint64_t seed, std::uint64_t rep)
        : dev_(dev), inner_(dev.bare().start_replication(seed, rep)),
          a_loc_(dev.grid()), j_own_(dev.grid()) {}

    void sample_step(int step, const Trajectory& a_e, Trajectory& j_out) override {
        const TimeGrid& grid = dev_.grid();
        const int nm = grid.n_modes;
        // A_loc[n] = A_e[n] + (G * own J)[n]; own radiation enters last so a
        // bare-network loop can reproduce the same sums bit-exactly.
        apply_kernel_row(dev_.propagator(), j_own_, step, a_loc_.row(step));
        for (int k = 0; k < nm; ++k)
            a_loc_(step, k) = a_e(step, k) + a_loc_(step, k);
        inner_->sample_step(step, a_loc_, j_own_);
        for (int k = 0; k < nm; ++k) j_out(step, k) = j_own_(step, k);
    }

private:
    const DressedDevice& dev_;
    std::unique_ptr<StepSampler> inner_;
    Trajectory a_loc_;
    Trajectory j_own_;
};

double gauss(double x, double sigma) {
    return std::exp(-x * x / (2.0 * sigma * sigma)) /
           (std::sqrt(2.0 * 3.14159265358979323846) * sigma);
}

} // namespace

DressedDevice::DressedDevice(std::shared_ptr<const BareDevice> bare, CausalKernel G)
    : BareDevice(bare->grid(), bare->id()), bare_(std::move(bare)), G_(std::move(G)) {
    require_same_grid(G_.grid(), grid_, "DressedDevice");
    if (!G_.is_strict())
        throw std::invalid_argument(
            "dress: propagator must be strict; instantaneous self-action is ill-posed");
}

std::unique_ptr<StepSampler> DressedDevice::start_replication(std::uint64_t seed,
                                                              std::uint64_t rep) const {
    return std::make_unique<DressedSampler>(*this, seed, rep);
}

std::shared_ptr<DressedDevice> dress(std::shared_ptr<const BareDevice> bare,
                                     CausalKernel G) {
    return std::make_shared<DressedDevice>(std::move(bare), std::move(G));
}

double normalization_probe_instantaneous(double chi, double g, double J0,
                                         double A_e) {
    if (!(J0 > 0.0))
        throw std::invalid_argument("normalization_probe_instantaneous: J0 must be > 0");
    const double cg = chi * g;
    if (std::abs(cg) >= 1.0)
        throw std::domain_error(
            "normalization_probe_instantaneous: |chi*g| >= 1, defect integral diverges");
    // The Gaussian in (1-cg)*J - chi*A_e has scale J0; integrate J over the
    // window where that standardized argument stays within 10 J0.
    const double center = chi * A_e / (1.0 - cg);
    const double half_width = 10.0 * J0 / (1.0 - cg);
    auto density = [&](double J) {
        return gauss(J - cg * J - chi * A_e, J0);
    };
    return integrate(density, center - half_width, center + half_width, 1e-8);
}

TwoTimeCheck two_time_causal_check(double chi, double g, double J0, double A_e,
                                   double A_e_prime) {
    if (!(J0 > 0.0))
        throw std::invalid_argument("two_time_causal_check: J0 must be > 0");

    // Two-dimensional density written as such; the factorization residual
    // below compares it against the product of one-dimensional factors.
    auto joint = [&](double J, double Jp) {
        const double x = J - chi * g * Jp - chi * A_e;
        const double y = Jp - chi * A_e_prime;
        return std::exp(-(x * x + y * y) / (2.0 * J0 * J0)) /
               (2.0 * 3.14159265358979323846 * J0 * J0);
    };

    // Normalization: iterated adaptive quadrature, inner over the later
    // current J (conditional Gaussian centered on chi*g*J' + chi*A_e).
    const double mu_p = chi * A_e_prime;
    const double w_p = 10.0 * J0;
    auto inner_integral = [&](double Jp) {
        const double mu = chi * g * Jp + chi * A_e;
        return integrate([&](double J) { return joint(J, Jp); }, mu - w_p, mu + w_p,
                         1e-10);
    };
    const double norm =
        integrate(inner_integral, mu_p - w_p, mu_p + w_p, 1e-8);

    // Factorization: the joint density must equal conditional * marginal
    // pointwise. Scan a 50 x 50 grid of (J, J') around the mass.
    double residual = 0.0;
    for (int i = 0; i < 50; ++i) {
        const double Jp = mu_p - 5.0 * J0 + 10.0 * J0 * (i + 0.5) / 50.0;
        const double mu = chi * g * Jp + chi * A_e;
        for (int j = 0; j < 50; ++j) {
            const double J = mu - 5.0 * J0 + 10.0 * J0 * (j + 0.5) / 50.0;
            const double lhs = joint(J, Jp);
            const double rhs = gauss(J - chi * g * Jp - chi * A_e, J0) *
                               gauss(Jp - chi * A_e_prime, J0);
            residual = std::max(residual, std::abs(lhs - rhs));
        }
    }
    return {norm, residual};
}

} // namespace mesoed
