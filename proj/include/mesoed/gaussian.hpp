#pragma once

#include "mesoed/devices.hpp"
#include "mesoed/time_grid.hpp"

#include <Eigen/Dense>
#include <span>

namespace mesoed {

/// Closed-form affine-Gaussian law for a current: mean mu0 + response * A_e,
/// Gaussian fluctuations with the given covariance. For a bare device the
/// response is the dt-weighted chi; dressing and composition turn into
/// unit-triangular linear algebra, exact up to roundoff. Note there is no
/// hbar anywhere in this module.
struct AffineGaussianSpec {
    TimeGrid grid;
    Eigen::VectorXd mu0;      ///< size D = steps * modes
    Eigen::MatrixXd response; ///< D x D map from A_e to mean current
    Eigen::MatrixXd cov;      ///< D x D symmetric PSD

    static AffineGaussianSpec bare(const Trajectory& mu0,
                                   const std::optional<CausalKernel>& chi,
                                   const Eigen::MatrixXd& noise_cov);
    static AffineGaussianSpec from_device(const GaussianDevice& dev);

    Trajectory mean_given(const Trajectory& a_e) const;
};

/// dt * kernel values as a dense operator matrix.
Eigen::MatrixXd kernel_op_matrix(const CausalKernel& K);

/// Exact dressing: with M = I - response * G (unit lower triangular in
/// time), returns {M^-1 mu0, M^-1 response, M^-1 cov M^-T}. All solves are
/// forward substitutions in time order; G must be strict.
AffineGaussianSpec gaussian_dress(const AffineGaussianSpec& bare,
                                  const CausalKernel& G);

/// Joint law of the stacked per-device currents of a composed network.
struct JointGaussianSpec {
    TimeGrid grid;
    int n_devices = 0;
    Eigen::VectorXd mu0;      ///< N*D, device-major blocks
    Eigen::MatrixXd response; ///< N*D x D
    Eigen::MatrixXd cov;      ///< N*D x N*D

    AffineGaussianSpec device_marginal(int k) const;
    Eigen::Block<const Eigen::MatrixXd> cov_block(int k, int l) const;
};

/// Solves the stacked unit-triangular system
///   J_k = mu0_k + S_k (A_e + G sum_l J_l) + xi_k
/// for the joint mean map and covariance. G must be strict.
JointGaussianSpec gaussian_compose(std::span<const AffineGaussianSpec> devices,
                                   const CausalKernel& G);

/// Law of the total current J = sum_k J_k: exact linear image of the joint.
AffineGaussianSpec marginal_total(const JointGaussianSpec& joint);

/// Bare law of the device formed by summing independent devices (before any
/// field coupling): means, responses and covariances add.
AffineGaussianSpec sum_bare(std::span<const AffineGaussianSpec> devices);

} // namespace mesoed
