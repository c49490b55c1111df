#pragma once

#include "mesoed/devices.hpp"

namespace mesoed {

/// Bare device plus its own radiated field: samples from
/// p[J | A_e] = p_bare[J | A_e + G*J]. Strictness of G makes the fixed
/// point solvable step by step, so every draw terminates in exactly
/// n_steps steps; no iteration is ever needed. The sampler keeps its own
/// emitted-current history and uses the bare device's RNG streams, so a
/// dressed device is stream-aligned with its bare counterpart.
class DressedDevice : public BareDevice {
public:
    DressedDevice(std::shared_ptr<const BareDevice> bare, CausalKernel G);

    bool has_same_time_response() const override {
        return bare_->has_same_time_response();
    }
    bool is_field_insensitive() const override {
        return bare_->is_field_insensitive();
    }
    void collect_ids(std::vector<std::uint32_t>& out) const override {
        bare_->collect_ids(out);
    }
    std::unique_ptr<StepSampler> start_replication(std::uint64_t seed,
                                                   std::uint64_t rep) const override;

    const BareDevice& bare() const { return *bare_; }
    const CausalKernel& propagator() const { return G_; }

private:
    std::shared_ptr<const BareDevice> bare_;
    CausalKernel G_;
};

/// Rejects non-strict G: same-time self-action destroys normalization and
/// is unrepresentable here by construction.
std::shared_ptr<DressedDevice> dress(std::shared_ptr<const BareDevice> bare,
                                     CausalKernel G);

/// Numeric quadrature over J of the instantaneously self-coupled Gaussian
///   p(J) = exp(-(J - chi*g*J - chi*A_e)^2 / (2 J0^2)) / (sqrt(2 pi) J0).
/// The defect integral equals 1/(1 - chi*g); a unit value would mean a
/// valid distribution, so any chi*g != 0 breaks normalization. Requires
/// |chi*g| < 1 (throws std::domain_error otherwise) and J0 > 0.
double normalization_probe_instantaneous(double chi, double g, double J0,
                                         double A_e);

struct TwoTimeCheck {
    double normalization;          ///< 2D quadrature of the causal density
    double factorization_residual; ///< max |p(J,J') - p(J|A_e,J') p'(J'|A_e')|
};

/// The causal two-time counterpart: the earlier current J' feeds the later
/// one through a single delayed coupling g. The density integrates to one
/// and factorizes exactly into conditional times marginal.
TwoTimeCheck two_time_causal_check(double chi, double g, double J0, double A_e,
                                   double A_e_prime);

} // namespace mesoed
