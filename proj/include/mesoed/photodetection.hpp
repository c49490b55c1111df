#pragma once

#include "mesoed/network.hpp"

namespace mesoed {

/// Pull one mode out of a multi-mode trajectory onto a single-mode grid.
Trajectory extract_mode(const Trajectory& t, int mode);

/// Source -> detector cascade on a two-mode grid (input carries the light,
/// output carries the photocurrent). Back-action is removed structurally:
/// the source must ignore the field entirely and emit only in the input
/// mode, and the per-mode propagators never mix modes, so the detector
/// cannot reach back. That makes the detected field identical whether or
/// not the detector is present, as an exact invariant rather than an
/// approximation.
struct CascadeSpec {
    TimeGrid grid; ///< two modes
    int input_mode = 0;
    int output_mode = 1;
    std::shared_ptr<const GaussianDevice> source;
    std::shared_ptr<const BareDevice> detector;
    CausalKernel G; ///< block-diagonal in mode, strict

    /// g_in / g_out are single-mode kernels on the mode-collapsed grid.
    CascadeSpec(std::shared_ptr<const GaussianDevice> source_,
                std::shared_ptr<const BareDevice> detector_,
                const CausalKernel& g_in, const CausalKernel& g_out,
                int input_mode_ = 0, int output_mode_ = 1);
};

struct CascadeResult {
    std::vector<Trajectory> photocurrent; ///< output mode, single-mode grid
    MomentReport stats;                   ///< photocurrent moments
    double mean_total_charge = 0.0;       ///< dt * sum of the photocurrent
    double se_total_charge = 0.0;
    double count_mean = 0.0; ///< total counts per replication
    double count_var = 0.0;
};

/// Time loop: the source radiates into the input mode, the detector reads
/// that field and emits photocurrent. Identical to simulate_network on the
/// pair (it is the same loop), marginalized to the output mode.
CascadeResult run_cascade(const CascadeSpec& spec, std::uint64_t n_reps,
                          std::uint64_t seed);

/// Statistics of the detected field A_in from the solitary source model
/// (detector absent).
MomentReport detected_field_report(const CascadeSpec& spec, std::uint64_t n_reps,
                                   std::uint64_t seed);

} // namespace mesoed
