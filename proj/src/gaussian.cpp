#include "mesoed/gaussian.hpp"

#include <stdexcept>

namespace mesoed {

namespace {

// Solves (I - L) X = Y by forward substitution over time rows. Row r of the
// system lives at time step r / rows_per_step; L must vanish unless the
// column's step is strictly below the row's step.
Eigen::MatrixXd solve_unit_causal(const Eigen::MatrixXd& L, const Eigen::MatrixXd& Y,
                                  int n_steps, int rows_per_step) {
    Eigen::MatrixXd X = Y;
    for (int t = 1; t < n_steps; ++t) {
        const int r0 = t * rows_per_step;
        const int cols_below = r0; // all rows of earlier steps
        X.middleRows(r0, rows_per_step) +=
            L.block(r0, 0, rows_per_step, cols_below) * X.topRows(cols_below);
    }
    return X;
}

void require_strict(const CausalKernel& G, const char* where) {
    if (!G.is_strict())
        throw std::invalid_argument(std::string(where) + ": G must be strict");
}

} // namespace

Eigen::MatrixXd kernel_op_matrix(const CausalKernel& K) {
    const int D = K.grid().size();
    return K.grid().dt *
           Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                          Eigen::RowMajor>>(K.values().data(), D, D);
}

AffineGaussianSpec AffineGaussianSpec::bare(const Trajectory& mu0,
                                            const std::optional<CausalKernel>& chi,
                                            const Eigen::MatrixXd& noise_cov) {
    const TimeGrid& grid = mu0.grid();
    const int D = grid.size();
    if (noise_cov.rows() != D || noise_cov.cols() != D)
        throw std::invalid_argument("AffineGaussianSpec: noise_cov size mismatch");
    AffineGaussianSpec spec{grid, Eigen::Map<const Eigen::VectorXd>(mu0.data(), D),
                            Eigen::MatrixXd::Zero(D, D), noise_cov};
    if (chi) {
        require_same_grid(chi->grid(), grid, "AffineGaussianSpec");
        spec.response = kernel_op_matrix(*chi);
    }
    return spec;
}

AffineGaussianSpec AffineGaussianSpec::from_device(const GaussianDevice& dev) {
    return bare(dev.mu0(), dev.chi(), dev.noise_cov());
}

Trajectory AffineGaussianSpec::mean_given(const Trajectory& a_e) const {
    require_same_grid(a_e.grid(), grid, "AffineGaussianSpec::mean_given");
    const int D = grid.size();
    Eigen::VectorXd m =
        mu0 + response * Eigen::Map<const Eigen::VectorXd>(a_e.data(), D);
    return Trajectory(grid, std::vector<double>(m.data(), m.data() + D));
}

AffineGaussianSpec gaussian_dress(const AffineGaussianSpec& bare,
                                  const CausalKernel& G) {
    require_same_grid(bare.grid, G.grid(), "gaussian_dress");
    require_strict(G, "gaussian_dress");
    const TimeGrid& grid = bare.grid;
    const int nm = grid.n_modes;

    const Eigen::MatrixXd L = bare.response * kernel_op_matrix(G);
    AffineGaussianSpec out{grid, {}, {}, {}};
    out.mu0 = solve_unit_causal(L, bare.mu0, grid.n_steps, nm);
    out.response = solve_unit_causal(L, bare.response, grid.n_steps, nm);
    const Eigen::MatrixXd half = solve_unit_causal(L, bare.cov, grid.n_steps, nm);
    out.cov = solve_unit_causal(L, half.transpose(), grid.n_steps, nm);
    return out;
}

AffineGaussianSpec JointGaussianSpec::device_marginal(int k) const {
    const int D = grid.size();
    return {grid, mu0.segment(k * D, D), response.middleRows(k * D, D),
            cov.block(k * D, k * D, D, D)};
}

Eigen::Block<const Eigen::MatrixXd> JointGaussianSpec::cov_block(int k, int l) const {
    const int D = grid.size();
    return cov.block(k * D, l * D, D, D);
}

JointGaussianSpec gaussian_compose(std::span<const AffineGaussianSpec> devices,
                                   const CausalKernel& G) {
    if (devices.empty())
        throw std::invalid_argument("gaussian_compose: need at least one device");
    const TimeGrid& grid = devices.front().grid;
    for (const auto& d : devices) require_same_grid(d.grid, grid, "gaussian_compose");
    require_strict(G, "gaussian_compose");

    const int N = static_cast<int>(devices.size());
    const int D = grid.size();
    const int nm = grid.n_modes;

    // Stacked system in time-major layout: row (t, device k, mode) couples
    // to every device's earlier current through S_k * G.
    std::vector<Eigen::MatrixXd> SG(static_cast<std::size_t>(N));
    const Eigen::MatrixXd Gop = kernel_op_matrix(G);
    for (int k = 0; k < N; ++k) SG[static_cast<std::size_t>(k)] = devices[k].response * Gop;

    auto tm_row = [&](int t, int k, int m) { return (t * N + k) * nm + m; };
    const int R = N * D;
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(R, R);
    for (int t = 0; t < grid.n_steps; ++t)
        for (int k = 0; k < N; ++k)
            for (int m = 0; m < nm; ++m) {
                const int r = tm_row(t, k, m);
                const int i = grid.flat(t, m);
                for (int t2 = 0; t2 < t; ++t2)
                    for (int l = 0; l < N; ++l)
                        for (int m2 = 0; m2 < nm; ++m2)
                            L(r, tm_row(t2, l, m2)) =
                                SG[static_cast<std::size_t>(k)](i, grid.flat(t2, m2));
            }

    Eigen::VectorXd mu0_tm(R);
    Eigen::MatrixXd resp_tm(R, D);
    Eigen::MatrixXd noise_tm = Eigen::MatrixXd::Zero(R, R);
    for (int t = 0; t < grid.n_steps; ++t)
        for (int k = 0; k < N; ++k)
            for (int m = 0; m < nm; ++m) {
                const int r = tm_row(t, k, m);
                const int i = grid.flat(t, m);
                mu0_tm(r) = devices[k].mu0(i);
                resp_tm.row(r) = devices[k].response.row(i);
                for (int t2 = 0; t2 < grid.n_steps; ++t2)
                    for (int m2 = 0; m2 < nm; ++m2)
                        noise_tm(r, tm_row(t2, k, m2)) =
                            devices[k].cov(i, grid.flat(t2, m2));
            }

    const int rows_per_step = N * nm;
    Eigen::VectorXd mu_sol = solve_unit_causal(L, mu0_tm, grid.n_steps, rows_per_step);
    Eigen::MatrixXd resp_sol = solve_unit_causal(L, resp_tm, grid.n_steps, rows_per_step);
    Eigen::MatrixXd half = solve_unit_causal(L, noise_tm, grid.n_steps, rows_per_step);
    Eigen::MatrixXd cov_sol =
        solve_unit_causal(L, half.transpose(), grid.n_steps, rows_per_step);

    // Back to device-major blocks.
    JointGaussianSpec joint{grid, N, Eigen::VectorXd(R), Eigen::MatrixXd(R, D),
                            Eigen::MatrixXd(R, R)};
    std::vector<int> perm(static_cast<std::size_t>(R)); // device-major row -> time-major row
    for (int k = 0; k < N; ++k)
        for (int t = 0; t < grid.n_steps; ++t)
            for (int m = 0; m < nm; ++m)
                perm[static_cast<std::size_t>(k * D + grid.flat(t, m))] = tm_row(t, k, m);
    for (int r = 0; r < R; ++r) {
        joint.mu0(r) = mu_sol(perm[static_cast<std::size_t>(r)]);
        joint.response.row(r) = resp_sol.row(perm[static_cast<std::size_t>(r)]);
        for (int c = 0; c < R; ++c)
            joint.cov(r, c) = cov_sol(perm[static_cast<std::size_t>(r)],
                                      perm[static_cast<std::size_t>(c)]);
    }
    return joint;
}

AffineGaussianSpec marginal_total(const JointGaussianSpec& joint) {
    const int D = joint.grid.size();
    AffineGaussianSpec out{joint.grid, Eigen::VectorXd::Zero(D),
                           Eigen::MatrixXd::Zero(D, D), Eigen::MatrixXd::Zero(D, D)};
    for (int k = 0; k < joint.n_devices; ++k) {
        out.mu0 += joint.mu0.segment(k * D, D);
        out.response += joint.response.middleRows(k * D, D);
        for (int l = 0; l < joint.n_devices; ++l) out.cov += joint.cov_block(k, l);
    }
    return out;
}

AffineGaussianSpec sum_bare(std::span<const AffineGaussianSpec> devices) {
    if (devices.empty()) throw std::invalid_argument("sum_bare: empty device list");
    AffineGaussianSpec out = devices.front();
    for (std::size_t k = 1; k < devices.size(); ++k) {
        require_same_grid(devices[k].grid, out.grid, "sum_bare");
        out.mu0 += devices[k].mu0;
        out.response += devices[k].response;
        out.cov += devices[k].cov;
    }
    return out;
}

} // namespace mesoed
