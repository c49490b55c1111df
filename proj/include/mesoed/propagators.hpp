#pragma once

#include "mesoed/time_grid.hpp"

namespace mesoed {

/// Free field mode entering the wave-quantisation relation. The propagator
/// itself never depends on hbar; it is kept here only so the quantum
/// cross-checks can verify that it cancels.
struct ModeSpec {
    double omega = 1.0; ///< angular frequency, >= 0 (0 = static limit)
    double hbar = 1.0;  ///< action scale, > 0

    ModeSpec() = default;
    ModeSpec(double omega_, double hbar_ = 1.0);
};

/// Retarded propagator of a single free mode: sin(omega*(t_n - t_m))/omega
/// for m < n (the omega -> 0 limit is t_n - t_m), zero at and above the
/// diagonal. Requires a single-mode grid.
CausalKernel retarded_single_mode(const TimeGrid& grid, const ModeSpec& mode);

/// Builds A(t) from truncated creation/annihilation matrices, forms the
/// retarded commutator response (i/hbar) theta(t-t') <0|[A(t), A(t')]|0>,
/// and returns its maximum absolute deviation from retarded_single_mode.
/// The commutator is a c-number, so the result is cutoff-independent for
/// n_max >= 2.
double kubo_check(const TimeGrid& grid, const ModeSpec& mode, int n_max);

/// Solves G' = G + G*Pi*G' (kernel products carry dt weights) by forward
/// substitution in time order. Both inputs must be strict; the composite
/// G*Pi is then nilpotent and the solve is exact.
CausalKernel dyson_absorb(const CausalKernel& G, const CausalKernel& Pi);

} // namespace mesoed
