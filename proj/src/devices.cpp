#include "mesoed/devices.hpp"

#include "mesoed/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace mesoed {

namespace {

class GaussianSampler final : public StepSampler {
public:
    GaussianSampler(const GaussianDevice& dev, std::uint64_t seed, std::uint64_t rep)
        : dev_(dev), seed_(seed), rep_(rep),
          z_(static_cast<std::size_t>(dev.grid().size()), 0.0),
          resp_(dev.grid().n_modes, 0.0) {}

    void sample_step(int step, const Trajectory& field, Trajectory& j_out) override {
        const TimeGrid& grid = dev_.grid();
        const int nm = grid.n_modes;
        for (int k = 0; k < nm; ++k)
            z_[grid.flat(step, k)] = rng::normal(seed_, dev_.id(), rep_, step,
                                                 rng::Draw::gaussian, k);
        if (dev_.chi())
            apply_kernel_row(*dev_.chi(), field, step, resp_.data());
        const Eigen::MatrixXd& L = dev_.noise_root();
        for (int k = 0; k < nm; ++k) {
            const int i = grid.flat(step, k);
            double xi = 0.0;
            for (int j = 0; j <= i; ++j) xi += L(i, j) * z_[j];
            const double resp = dev_.chi() ? resp_[k] : 0.0;
            j_out(step, k) = dev_.mu0()(step, k) + resp + xi;
        }
    }

private:
    const GaussianDevice& dev_;
    std::uint64_t seed_, rep_;
    std::vector<double> z_;
    std::vector<double> resp_;
};

class PoissonSampler final : public StepSampler {
public:
    PoissonSampler(const PoissonDetector& dev, std::uint64_t seed, std::uint64_t rep)
        : dev_(dev), seed_(seed), rep_(rep) {}

    void sample_step(int step, const Trajectory& field, Trajectory& j_out) override {
        const TimeGrid& grid = dev_.grid();
        const double a = field(step, dev_.input_mode());
        const double rate = dev_.dark_rate() + dev_.efficiency() * a * a;
        const std::uint64_t counts =
            rng::poisson(rate * grid.dt, seed_, dev_.id(), rep_, step, 0);
        for (int k = 0; k < grid.n_modes; ++k) j_out(step, k) = 0.0;
        j_out(step, dev_.output_mode()) =
            dev_.charge() * static_cast<double>(counts) / grid.dt;
    }

private:
    const PoissonDetector& dev_;
    std::uint64_t seed_, rep_;
};

} // namespace

Eigen::MatrixXd psd_lower_root(const Eigen::MatrixXd& cov, double tol) {
    if (cov.rows() != cov.cols())
        throw std::invalid_argument("psd_lower_root: matrix must be square");
    const Eigen::Index D = cov.rows();
    const Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    if (es.eigenvalues().minCoeff() < -tol * scale)
        throw std::invalid_argument("psd_lower_root: matrix is not PSD within tolerance");

    // PSD Cholesky: zero pivots get zero columns (valid for PSD input).
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(D, D);
    const double pivot_tol = 1e-12 * scale;
    for (Eigen::Index j = 0; j < D; ++j) {
        double d = sym(j, j);
        for (Eigen::Index k = 0; k < j; ++k) d -= L(j, k) * L(j, k);
        if (d <= pivot_tol) continue; // clipped to zero
        L(j, j) = std::sqrt(d);
        for (Eigen::Index i = j + 1; i < D; ++i) {
            double s = sym(i, j);
            for (Eigen::Index k = 0; k < j; ++k) s -= L(i, k) * L(j, k);
            L(i, j) = s / L(j, j);
        }
    }
    return L;
}

GaussianDevice::GaussianDevice(std::uint32_t id, Trajectory mu0,
                               std::optional<CausalKernel> chi,
                               Eigen::MatrixXd noise_cov)
    : BareDevice(mu0.grid(), id), mu0_(std::move(mu0)), chi_(std::move(chi)),
      noise_cov_(std::move(noise_cov)) {
    if (chi_) {
        require_same_grid(chi_->grid(), grid_, "GaussianDevice chi");
        for (int n = 0; n < grid_.n_steps && !same_time_; ++n)
            for (int k = 0; k < grid_.n_modes && !same_time_; ++k)
                for (int k2 = 0; k2 < grid_.n_modes; ++k2)
                    if ((*chi_)(n, k, n, k2) != 0.0) { same_time_ = true; break; }
    }
    if (noise_cov_.rows() != grid_.size() || noise_cov_.cols() != grid_.size())
        throw std::invalid_argument("GaussianDevice: noise_cov must be size() x size()");
    noise_root_ = psd_lower_root(noise_cov_);
}

std::shared_ptr<GaussianDevice> GaussianDevice::noiseless(std::uint32_t id,
                                                          Trajectory mu0,
                                                          std::optional<CausalKernel> chi) {
    const int D = mu0.grid().size();
    return std::make_shared<GaussianDevice>(id, std::move(mu0), std::move(chi),
                                            Eigen::MatrixXd::Zero(D, D));
}

std::shared_ptr<GaussianDevice> GaussianDevice::white_noise(std::uint32_t id,
                                                            Trajectory mu0,
                                                            std::optional<CausalKernel> chi,
                                                            double std_dev) {
    const int D = mu0.grid().size();
    Eigen::MatrixXd cov = std_dev * std_dev * Eigen::MatrixXd::Identity(D, D);
    return std::make_shared<GaussianDevice>(id, std::move(mu0), std::move(chi),
                                            std::move(cov));
}

std::unique_ptr<StepSampler> GaussianDevice::start_replication(std::uint64_t seed,
                                                               std::uint64_t rep) const {
    return std::make_unique<GaussianSampler>(*this, seed, rep);
}

PoissonDetector::PoissonDetector(std::uint32_t id, const TimeGrid& grid,
                                 int input_mode, int output_mode,
                                 double efficiency, double dark_rate, double charge)
    : BareDevice(grid, id), input_mode_(input_mode), output_mode_(output_mode),
      efficiency_(efficiency), dark_rate_(dark_rate), charge_(charge) {
    if (input_mode < 0 || input_mode >= grid.n_modes || output_mode < 0 ||
        output_mode >= grid.n_modes)
        throw std::invalid_argument("PoissonDetector: mode index out of range");
    if (!(efficiency >= 0.0 && efficiency <= 1.0))
        throw std::invalid_argument("PoissonDetector: efficiency must be in [0, 1]");
    if (!(dark_rate >= 0.0))
        throw std::invalid_argument("PoissonDetector: dark_rate must be >= 0");
}

std::unique_ptr<StepSampler> PoissonDetector::start_replication(std::uint64_t seed,
                                                                std::uint64_t rep) const {
    return std::make_unique<PoissonSampler>(*this, seed, rep);
}

Trajectory radiate(const CausalKernel& G, const Trajectory& J) {
    require_same_grid(G.grid(), J.grid(), "radiate");
    return apply_kernel(G, J);
}

Trajectory sample_bare(const BareDevice& dev, const Trajectory& field,
                       std::uint64_t seed, std::uint64_t rep) {
    require_same_grid(dev.grid(), field.grid(), "sample_bare");
    auto sampler = dev.start_replication(seed, rep);
    Trajectory j(dev.grid());
    for (int n = 0; n < dev.grid().n_steps; ++n)
        sampler->sample_step(n, field, j);
    return j;
}

double MomentReport::cov_standard_error(int i, int j) const {
    if (n_samples < 2) return 0.0;
    const double v = cov(i, i) * cov(j, j) + cov(i, j) * cov(i, j);
    return std::sqrt(std::max(0.0, v) / static_cast<double>(n_samples - 1));
}

MomentReport estimate_moments(std::span<const Trajectory> samples) {
    if (samples.size() < 2)
        throw std::invalid_argument("estimate_moments: need at least 2 samples");
    const TimeGrid& grid = samples.front().grid();
    for (const auto& s : samples) require_same_grid(s.grid(), grid, "estimate_moments");

    const int D = grid.size();
    const auto R = static_cast<double>(samples.size());
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(D);
    Eigen::MatrixXd sum2 = Eigen::MatrixXd::Zero(D, D);
    for (const auto& s : samples) {
        Eigen::Map<const Eigen::VectorXd> x(s.data(), D);
        sum += x;
        sum2.selfadjointView<Eigen::Lower>().rankUpdate(x);
    }
    const Eigen::VectorXd mean = sum / R;
    Eigen::MatrixXd cov =
        (Eigen::MatrixXd(sum2.selfadjointView<Eigen::Lower>()) - R * mean * mean.transpose()) /
        (R - 1.0);

    MomentReport out{Trajectory(grid, std::vector<double>(mean.data(), mean.data() + D)),
                     std::move(cov),
                     std::vector<double>(static_cast<std::size_t>(D), 0.0),
                     samples.size()};
    for (int i = 0; i < D; ++i)
        out.se_mean[static_cast<std::size_t>(i)] =
            std::sqrt(std::max(0.0, out.cov(i, i)) / R);
    return out;
}

} // namespace mesoed
