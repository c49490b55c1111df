#pragma once

#include "mesoed/devices.hpp"
#include "mesoed/dressing.hpp"

#include <functional>

namespace mesoed {

/// N devices sharing one external field and one propagator. Device RNG
/// streams are keyed by stable device ids, so they are disjoint by
/// construction and insertion of a device never shifts another's draws.
struct NetworkSpec {
    std::vector<std::shared_ptr<const BareDevice>> devices;
    CausalKernel G;
    Trajectory a_e;
    std::uint64_t n_reps = 1;
    std::uint64_t seed = 0;

    NetworkSpec(std::vector<std::shared_ptr<const BareDevice>> devices_,
                CausalKernel G_, Trajectory a_e_, std::uint64_t n_reps_,
                std::uint64_t seed_);
};

struct NetworkSample {
    std::vector<Trajectory> device_current;
    Trajectory total_current;
    Trajectory total_field; ///< G applied to the total current
};

/// One pass of the causal time loop: at step n each device sees
/// A_e[n] + radiation of the others + its own radiation, accumulated in
/// that order so the dressed-pair construction reproduces the sums
/// bit-exactly.
NetworkSample run_replication(const NetworkSpec& net, std::uint64_t rep);

/// All replications, in replication order. Parallel over replications;
/// results are independent of the thread count.
std::vector<NetworkSample> simulate_network(const NetworkSpec& net,
                                            int n_threads = 0);

/// Streaming moments of the stacked per-device currents (device-major
/// blocks). Field statistics are exact linear images of the current ones:
/// the radiation law applied to estimates is the same map applied to every
/// sample.
struct NetworkMoments {
    TimeGrid grid;
    int n_devices = 0;
    std::size_t n_reps = 0;
    Eigen::VectorXd mean; ///< stacked, N*D
    Eigen::MatrixXd cov;  ///< N*D x N*D, unbiased

    Eigen::VectorXd device_mean(int k) const;
    Trajectory total_mean() const;
    Eigen::MatrixXd total_cov() const;
    Trajectory field_mean(const CausalKernel& G) const;
    double mean_standard_error(int i) const;       ///< stacked index
    double total_cov_standard_error(int i, int j) const;
};

/// Replications are accumulated in fixed-size blocks combined in block
/// order, so sums are bit-identical for any thread count. n_threads <= 0
/// uses the OpenMP default.
NetworkMoments simulate_network_moments(const NetworkSpec& net, int n_threads = 0);
/// Reference implementation: same accumulation, no parallelism.
NetworkMoments simulate_network_moments_serial(const NetworkSpec& net);

/// Independent component devices summed behind one sampler interface; the
/// children keep their own RNG streams. A single-element list returns the
/// device itself.
std::shared_ptr<const BareDevice>
compose_bare(std::vector<std::shared_ptr<const BareDevice>> devices);

struct CommutationReport {
    bool identical = false;
    double max_deviation = 0.0;
};

/// Runs the two-device network loop against two dressed devices each fed
/// A_e plus the radiation of the other, on identical RNG streams, and
/// compares all trajectories bitwise.
CommutationReport compose_dressed_commutation(const NetworkSpec& net);

struct AssociativityReport {
    double max_mean_deviation = 0.0;
    double max_z = 0.0; ///< deviation in units of the combined standard error
};

/// Compares simulate_network({A,B,C}) against simulate_network({AB, C})
/// with independently seeded streams; means must agree statistically.
AssociativityReport associativity_check(std::shared_ptr<const BareDevice> a,
                                        std::shared_ptr<const BareDevice> b,
                                        std::shared_ptr<const BareDevice> c,
                                        const CausalKernel& G, const Trajectory& a_e,
                                        std::uint64_t n_reps, std::uint64_t seed,
                                        int n_threads = 0);

struct SusceptibilityReport {
    Eigen::MatrixXd value; ///< [response index][probe index], per unit dt
    double richardson_disagreement = 0.0;
};

/// Central-difference functional derivative of a mean-current map around
/// the given A_e (not only A_e = 0). The probe step h is scaled by the
/// field magnitude; a large Richardson disagreement flags noise domination.
SusceptibilityReport susceptibility_first_order(
    const std::function<Trajectory(const Trajectory&)>& mean_of,
    const Trajectory& a_e, double h_scale = 1e-4, bool richardson = false);

/// Second functional derivative with respect to probes at flat indices
/// (j, k); returns the response vector over all (step, mode).
Eigen::VectorXd susceptibility_second_order(
    const std::function<Trajectory(const Trajectory&)>& mean_of,
    const Trajectory& a_e, int probe_j, int probe_k, double h_scale = 1e-3);

/// Central-difference functional derivative of an arbitrary scalar
/// observable of the field (e.g. a product moment <J(t'_1)...J(t'_m)>),
/// with one or two probe indices. This is the general (m|n) form; the
/// helpers above are its vectorized first-moment specializations.
double functional_derivative(const std::function<double(const Trajectory&)>& observable,
                             const Trajectory& a_e, std::span<const int> probes,
                             double h_scale = 1e-3);

/// Reruns a device on a common stream with the field perturbed only at step
/// m; passes when rows before m are bit-identical (and row m as well for
/// strictly delayed response).
bool causality_audit(const BareDevice& dev, const Trajectory& field, int step_m,
                     std::uint64_t seed = 1, std::uint64_t rep = 0,
                     double delta = 0.5);

/// Network variant: perturbs A_e at step m and checks every device current.
bool causality_audit(const NetworkSpec& net, int step_m, double delta = 0.5,
                     std::uint64_t rep = 0);

} // namespace mesoed
