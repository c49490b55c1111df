#pragma once

#include "mesoed/time_grid.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace mesoed {

/// Per-replication causal sampler. sample_step writes row `step` of j_out
/// and may read the conditioning field only up to that row; all randomness
/// comes from counter-based draws keyed by (seed, device id, rep, step).
class StepSampler {
public:
    virtual ~StepSampler() = default;
    virtual void sample_step(int step, const Trajectory& field, Trajectory& j_out) = 0;
};

/// A device is a causal conditional sampler for its current: given the
/// history of the local field, it draws J step by step. Output at step n is
/// a deterministic function of (field rows 0..n, draws keyed up to n).
class BareDevice {
public:
    virtual ~BareDevice() = default;

    const TimeGrid& grid() const { return grid_; }
    std::uint32_t id() const { return id_; }

    /// True when the current at step n reads the field at the same step.
    virtual bool has_same_time_response() const = 0;
    /// True when the current ignores the field entirely (source devices).
    virtual bool is_field_insensitive() const { return false; }
    /// Leaf device ids, used to check stream disjointness in networks.
    virtual void collect_ids(std::vector<std::uint32_t>& out) const {
        out.push_back(id_);
    }

    virtual std::unique_ptr<StepSampler> start_replication(std::uint64_t seed,
                                                           std::uint64_t rep) const = 0;

protected:
    BareDevice(const TimeGrid& grid, std::uint32_t id) : grid_(grid), id_(id) {}
    TimeGrid grid_;
    std::uint32_t id_;
};

/// Gaussian device: J = mu0 + chi * A_loc + xi with xi ~ N(0, noise_cov).
/// chi may act at the same step on the field; the noise covariance is a
/// (steps x modes)^2 PSD matrix factored once at construction into a
/// lower-triangular root so sampling stays causal.
class GaussianDevice : public BareDevice {
public:
    GaussianDevice(std::uint32_t id, Trajectory mu0,
                   std::optional<CausalKernel> chi, Eigen::MatrixXd noise_cov);

    static std::shared_ptr<GaussianDevice> noiseless(std::uint32_t id, Trajectory mu0,
                                                     std::optional<CausalKernel> chi);
    /// iid N(0, std^2) noise at every (step, mode).
    static std::shared_ptr<GaussianDevice> white_noise(std::uint32_t id, Trajectory mu0,
                                                       std::optional<CausalKernel> chi,
                                                       double std_dev);

    bool has_same_time_response() const override { return same_time_; }
    bool is_field_insensitive() const override { return !chi_.has_value(); }
    std::unique_ptr<StepSampler> start_replication(std::uint64_t seed,
                                                   std::uint64_t rep) const override;

    const Trajectory& mu0() const { return mu0_; }
    const std::optional<CausalKernel>& chi() const { return chi_; }
    const Eigen::MatrixXd& noise_cov() const { return noise_cov_; }
    const Eigen::MatrixXd& noise_root() const { return noise_root_; }

private:
    Trajectory mu0_;
    std::optional<CausalKernel> chi_;
    Eigen::MatrixXd noise_cov_;
    Eigen::MatrixXd noise_root_; // lower triangular, root * root^T = noise_cov
    bool same_time_ = false;
};

/// Photon-counting detector: reads the field in one mode, emits charge in
/// another. Counts in a step are Poisson with rate dark_rate + efficiency *
/// A_loc(n, input)^2; the output current is q * counts / dt.
class PoissonDetector : public BareDevice {
public:
    PoissonDetector(std::uint32_t id, const TimeGrid& grid, int input_mode,
                    int output_mode, double efficiency, double dark_rate,
                    double charge);

    bool has_same_time_response() const override { return true; }
    std::unique_ptr<StepSampler> start_replication(std::uint64_t seed,
                                                   std::uint64_t rep) const override;

    int input_mode() const { return input_mode_; }
    int output_mode() const { return output_mode_; }
    double efficiency() const { return efficiency_; }
    double dark_rate() const { return dark_rate_; }
    double charge() const { return charge_; }

private:
    int input_mode_;
    int output_mode_;
    double efficiency_;
    double dark_rate_;
    double charge_;
};

/// Field radiated by a current: A = G * J. Strict causality is inherited
/// from the kernel.
Trajectory radiate(const CausalKernel& G, const Trajectory& J);

/// One draw of J from p[ . | field] with the field a given quantity.
/// Deterministic in (seed, device id, rep).
Trajectory sample_bare(const BareDevice& dev, const Trajectory& field,
                       std::uint64_t seed, std::uint64_t rep);

struct MomentReport {
    Trajectory mean;
    Eigen::MatrixXd cov;          ///< unbiased, over flattened (step, mode)
    std::vector<double> se_mean;  ///< standard error of each mean entry
    std::size_t n_samples = 0;

    /// Standard error of the covariance entry estimate (Gaussian formula).
    double cov_standard_error(int i, int j) const;
};

/// Unbiased sample mean / covariance with standard errors. Needs >= 2
/// samples on a common grid.
MomentReport estimate_moments(std::span<const Trajectory> samples);

/// Symmetric-PSD validation (eigenvalues >= -tol, negatives clipped to 0)
/// followed by a lower-triangular root. Throws on an indefinite matrix.
Eigen::MatrixXd psd_lower_root(const Eigen::MatrixXd& cov, double tol = 1e-10);

} // namespace mesoed
