#pragma once

#include "mesoed/propagators.hpp"
#include "mesoed/time_grid.hpp"

#include <Eigen/Dense>
#include <complex>
#include <functional>

namespace mesoed {

/// Complex time series over a grid, for frequency-positive/negative parts.
struct ComplexTrajectory {
    TimeGrid grid;
    std::vector<std::complex<double>> values; ///< [step][mode]

    explicit ComplexTrajectory(const TimeGrid& g)
        : grid(g), values(static_cast<std::size_t>(g.size())) {}
    std::complex<double>& operator()(int step, int mode = 0) {
        return values[static_cast<std::size_t>(grid.flat(step, mode))];
    }
    const std::complex<double>& operator()(int step, int mode = 0) const {
        return values[static_cast<std::size_t>(grid.flat(step, mode))];
    }
};

struct FreqParts {
    ComplexTrajectory plus;
    ComplexTrajectory minus;
};

/// Splits a real series into frequency-positive and frequency-negative
/// parts by discrete-Fourier masking, per mode. Positive frequencies are
/// the e^{-i w t} (w > 0) components; the zero-frequency and Nyquist bins
/// are shared equally so that plus + minus = f and minus = conj(plus)
/// hold exactly. n_steps must be a power of two.
FreqParts freq_split(const Trajectory& f);

enum class FieldState { vacuum, coherent, thermal };

/// Truncated single-mode boson algebra with a Gaussian field state, used as
/// the quantum side of every correspondence check. All moments are computed
/// from the truncated creation/annihilation matrices.
class FockOracle {
public:
    static FockOracle vacuum(const ModeSpec& mode, int n_max);
    static FockOracle coherent(const ModeSpec& mode, int n_max,
                               std::complex<double> alpha);
    static FockOracle thermal(const ModeSpec& mode, int n_max, double nbar);

    const ModeSpec& mode() const { return mode_; }
    int n_max() const { return n_max_; }
    FieldState state() const { return state_; }
    std::complex<double> alpha() const { return alpha_; }
    double nbar() const { return nbar_; }
    /// Population mass lost to the cutoff; > 1e-8 flags the cutoff as
    /// insufficient and the moment operations refuse to run.
    double truncation_error() const { return truncation_error_; }

    const Eigen::MatrixXcd& rho() const { return rho_; }
    const Eigen::MatrixXcd& lowering() const { return a_; }

    /// Frequency-positive part of the field operator, c * a * e^{-i w t}.
    Eigen::MatrixXcd field_plus(double t) const;
    Eigen::MatrixXcd field_minus(double t) const;
    std::complex<double> average(const Eigen::MatrixXcd& op) const;

private:
    FockOracle(const ModeSpec& mode, int n_max, FieldState state,
               std::complex<double> alpha, double nbar);

    ModeSpec mode_;
    int n_max_;
    FieldState state_;
    std::complex<double> alpha_{0.0, 0.0};
    double nbar_ = 0.0;
    double truncation_error_ = 0.0;
    Eigen::MatrixXcd a_;
    Eigen::MatrixXcd rho_;
};

/// First time-normal moment; no ordering enters at first order, so this is
/// the plain operator mean <A(t)>.
double time_normal_first_moment(const FockOracle& oracle, double t);

/// Beyond-RWA time-normal second moment <T: A(t) A(t') :>: the four ordered
/// two-point correlations with frequency filters on each time argument,
/// evaluated on the truncated-Fock matrices. For the free field the
/// frequency parts of the operator are exact, so no window artifacts enter.
/// Real up to a 1e-10 imaginary residue, which is verified.
double time_normal_second_moment(const FockOracle& oracle, double t, double t_prime);

/// Classical stochastic field with the same mesoscopic moments as the
/// oracle state: deterministic for coherent, Gaussian for vacuum/thermal.
/// Draw r of the field on the given single-mode grid.
Trajectory classical_doppelganger(const FockOracle& oracle, const TimeGrid& grid,
                                  std::uint64_t seed, std::uint64_t rep);

struct PFunctionalReport {
    double max_first_deviation = 0.0;
    double max_second_deviation = 0.0;
    double max_second_z = 0.0; ///< deviation over standard error (MC states)
};

/// Compares time-normal first/second moments against classical averages of
/// a doppelganger sampler over all grid time pairs.
PFunctionalReport pfunctional_match(
    const FockOracle& oracle, const TimeGrid& grid,
    const std::function<Trajectory(std::uint64_t rep)>& sampler,
    std::uint64_t n_samples, bool deterministic, int n_threads = 0);

/// Convenience overload using the built-in doppelganger for the oracle's
/// state.
PFunctionalReport pfunctional_match(const FockOracle& oracle, const TimeGrid& grid,
                                    std::uint64_t n_samples, std::uint64_t seed,
                                    int n_threads = 0);

} // namespace mesoed
