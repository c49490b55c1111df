#include "mesoed/timenormal.hpp"

#include "mesoed/rng.hpp"

#include <omp.h>

#include <cmath>
#include <stdexcept>

namespace mesoed {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr std::uint32_t kDoppelgangerStream = 0x7F00u; // reserved device id

bool is_power_of_two(int n) { return n >= 1 && (n & (n - 1)) == 0; }

void require_cutoff(const FockOracle& o, const char* where) {
    if (o.truncation_error() > 1e-8)
        throw std::runtime_error(std::string(where) +
                                 ": Fock cutoff insufficient for this state");
}

} // namespace

FreqParts freq_split(const Trajectory& f) {
    const TimeGrid& grid = f.grid();
    const int N = grid.n_steps;
    if (!is_power_of_two(N))
        throw std::invalid_argument("freq_split: n_steps must be a power of two");

    FreqParts out{ComplexTrajectory(grid), ComplexTrajectory(grid)};
    const std::complex<double> I(0.0, 1.0);
    std::vector<std::complex<double>> F(static_cast<std::size_t>(N));
    for (int mode = 0; mode < grid.n_modes; ++mode) {
        for (int k = 0; k < N; ++k) {
            std::complex<double> acc(0.0, 0.0);
            for (int n = 0; n < N; ++n)
                acc += f(n, mode) * std::exp(-2.0 * kPi * I * double(k) * double(n) /
                                             double(N));
            F[static_cast<std::size_t>(k)] = acc;
        }
        // e^{+2 pi i k n / N} bins with k > N/2 alias to e^{-i w t}, w > 0:
        // those are the frequency-positive components. DC and Nyquist are
        // split half and half.
        for (int n = 0; n < N; ++n) {
            std::complex<double> plus(0.0, 0.0), minus(0.0, 0.0);
            for (int k = 0; k < N; ++k) {
                const std::complex<double> term =
                    F[static_cast<std::size_t>(k)] *
                    std::exp(2.0 * kPi * I * double(k) * double(n) / double(N)) /
                    double(N);
                const bool dc_or_nyquist = (k == 0) || (2 * k == N);
                if (dc_or_nyquist) {
                    plus += 0.5 * term;
                    minus += 0.5 * term;
                } else if (2 * k > N) {
                    plus += term;
                } else {
                    minus += term;
                }
            }
            out.plus(n, mode) = plus;
            out.minus(n, mode) = minus;
        }
    }
    return out;
}

FockOracle::FockOracle(const ModeSpec& mode, int n_max, FieldState state,
                       std::complex<double> alpha, double nbar)
    : mode_(mode), n_max_(n_max), state_(state), alpha_(alpha), nbar_(nbar) {
    if (n_max < 2) throw std::invalid_argument("FockOracle: n_max must be >= 2");
    if (!(mode.omega > 0.0))
        throw std::invalid_argument("FockOracle: omega must be > 0");

    a_ = Eigen::MatrixXcd::Zero(n_max, n_max);
    for (int i = 0; i + 1 < n_max; ++i) a_(i, i + 1) = std::sqrt(double(i + 1));

    rho_ = Eigen::MatrixXcd::Zero(n_max, n_max);
    switch (state) {
    case FieldState::vacuum:
        rho_(0, 0) = 1.0;
        truncation_error_ = 0.0;
        break;
    case FieldState::coherent: {
        Eigen::VectorXcd c(n_max);
        double log_fact = 0.0;
        for (int n = 0; n < n_max; ++n) {
            if (n > 0) log_fact += std::log(double(n));
            c(n) = std::pow(alpha, n) * std::exp(-0.5 * std::norm(alpha) - 0.5 * log_fact);
        }
        const double mass = c.squaredNorm();
        truncation_error_ = std::abs(1.0 - mass);
        c /= std::sqrt(mass);
        rho_ = c * c.adjoint();
        break;
    }
    case FieldState::thermal: {
        if (!(nbar >= 0.0))
            throw std::invalid_argument("FockOracle: nbar must be >= 0");
        const double q = nbar / (1.0 + nbar);
        double mass = 0.0;
        for (int n = 0; n < n_max; ++n) {
            const double p = std::pow(q, n) / (1.0 + nbar);
            rho_(n, n) = p;
            mass += p;
        }
        truncation_error_ = std::abs(1.0 - mass);
        rho_ /= mass;
        break;
    }
    }
}

FockOracle FockOracle::vacuum(const ModeSpec& mode, int n_max) {
    return FockOracle(mode, n_max, FieldState::vacuum, {0.0, 0.0}, 0.0);
}

FockOracle FockOracle::coherent(const ModeSpec& mode, int n_max,
                                std::complex<double> alpha) {
    return FockOracle(mode, n_max, FieldState::coherent, alpha, 0.0);
}

FockOracle FockOracle::thermal(const ModeSpec& mode, int n_max, double nbar) {
    return FockOracle(mode, n_max, FieldState::thermal, {0.0, 0.0}, nbar);
}

Eigen::MatrixXcd FockOracle::field_plus(double t) const {
    const std::complex<double> I(0.0, 1.0);
    const double c = std::sqrt(mode_.hbar / (2.0 * mode_.omega));
    return c * std::exp(-I * mode_.omega * t) * a_;
}

Eigen::MatrixXcd FockOracle::field_minus(double t) const {
    return field_plus(t).adjoint();
}

std::complex<double> FockOracle::average(const Eigen::MatrixXcd& op) const {
    return (rho_ * op).trace();
}

double time_normal_first_moment(const FockOracle& oracle, double t) {
    require_cutoff(oracle, "time_normal_first_moment");
    const std::complex<double> v =
        oracle.average(oracle.field_plus(t) + oracle.field_minus(t));
    if (std::abs(v.imag()) > 1e-10)
        throw std::runtime_error("time_normal_first_moment: non-real result");
    return v.real();
}

double time_normal_second_moment(const FockOracle& oracle, double t,
                                 double t_prime) {
    require_cutoff(oracle, "time_normal_second_moment");
    const Eigen::MatrixXcd ap_t = oracle.field_plus(t);
    const Eigen::MatrixXcd ap_p = oracle.field_plus(t_prime);
    const Eigen::MatrixXcd am_t = oracle.field_minus(t);
    const Eigen::MatrixXcd am_p = oracle.field_minus(t_prime);

    // Forward ordering for the ++ pair, reverse for the --, with the
    // frequency-negative part to the left of the frequency-positive one in
    // the cross terms.
    const Eigen::MatrixXcd fwd = (t >= t_prime) ? ap_t * ap_p : ap_p * ap_t;
    const Eigen::MatrixXcd rev = (t >= t_prime) ? am_p * am_t : am_t * am_p;
    const std::complex<double> v = oracle.average(fwd) + oracle.average(am_t * ap_p) +
                                   oracle.average(am_p * ap_t) + oracle.average(rev);
    if (std::abs(v.imag()) > 1e-10)
        throw std::runtime_error("time_normal_second_moment: non-real result");
    return v.real();
}

Trajectory classical_doppelganger(const FockOracle& oracle, const TimeGrid& grid,
                                  std::uint64_t seed, std::uint64_t rep) {
    if (grid.n_modes != 1)
        throw std::invalid_argument("classical_doppelganger: single-mode grid required");
    const double w = oracle.mode().omega;
    const double c = std::sqrt(oracle.mode().hbar / (2.0 * w));
    std::complex<double> amp(0.0, 0.0);
    switch (oracle.state()) {
    case FieldState::vacuum:
        break; // zero field is the classical counterpart
    case FieldState::coherent:
        amp = oracle.alpha();
        break;
    case FieldState::thermal: {
        const double x = rng::normal(seed, kDoppelgangerStream, rep, 0, rng::Draw::field, 0);
        const double y = rng::normal(seed, kDoppelgangerStream, rep, 0, rng::Draw::field, 1);
        amp = std::sqrt(oracle.nbar() / 2.0) * std::complex<double>(x, y);
        break;
    }
    }
    return Trajectory::from_fn(grid, [&](int n, int) {
        const std::complex<double> I(0.0, 1.0);
        const double t = grid.time(n);
        return 2.0 * c * (amp * std::exp(-I * w * t)).real();
    });
}

PFunctionalReport pfunctional_match(
    const FockOracle& oracle, const TimeGrid& grid,
    const std::function<Trajectory(std::uint64_t rep)>& sampler,
    std::uint64_t n_samples, bool deterministic, int n_threads) {
    if (grid.n_modes != 1)
        throw std::invalid_argument("pfunctional_match: single-mode grid required");
    const int N = grid.n_steps;

    Eigen::VectorXd q_mean(N);
    Eigen::MatrixXd q_second(N, N);
    for (int n = 0; n < N; ++n) {
        q_mean(n) = time_normal_first_moment(oracle, grid.time(n));
        for (int m = 0; m < N; ++m)
            q_second(n, m) = time_normal_second_moment(oracle, grid.time(n), grid.time(m));
    }

    const std::uint64_t reps = deterministic ? 1 : n_samples;
    constexpr std::uint64_t kBlock = 256;
    const std::uint64_t n_blocks = (reps + kBlock - 1) / kBlock;
    std::vector<Eigen::VectorXd> bsum(n_blocks);
    std::vector<Eigen::MatrixXd> bsum2(n_blocks), bsum2sq(n_blocks);
    const int threads = n_threads > 0 ? n_threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (std::int64_t b = 0; b < static_cast<std::int64_t>(n_blocks); ++b) {
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(N);
        Eigen::MatrixXd sum2 = Eigen::MatrixXd::Zero(N, N);
        Eigen::MatrixXd sum2sq = Eigen::MatrixXd::Zero(N, N);
        const std::uint64_t begin = static_cast<std::uint64_t>(b) * kBlock;
        const std::uint64_t end = std::min(begin + kBlock, reps);
        for (std::uint64_t r = begin; r < end; ++r) {
            const Trajectory a = sampler(r);
            Eigen::Map<const Eigen::VectorXd> x(a.data(), N);
            sum += x;
            const Eigen::MatrixXd outer = x * x.transpose();
            sum2 += outer;
            sum2sq += outer.cwiseProduct(outer);
        }
        bsum[static_cast<std::size_t>(b)] = std::move(sum);
        bsum2[static_cast<std::size_t>(b)] = std::move(sum2);
        bsum2sq[static_cast<std::size_t>(b)] = std::move(sum2sq);
    }
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(N);
    Eigen::MatrixXd sum2 = Eigen::MatrixXd::Zero(N, N), sum2sq = Eigen::MatrixXd::Zero(N, N);
    for (std::uint64_t b = 0; b < n_blocks; ++b) {
        sum += bsum[b];
        sum2 += bsum2[b];
        sum2sq += bsum2sq[b];
    }

    const double R = static_cast<double>(reps);
    PFunctionalReport rep;
    for (int n = 0; n < N; ++n) {
        rep.max_first_deviation =
            std::max(rep.max_first_deviation, std::abs(sum(n) / R - q_mean(n)));
        for (int m = 0; m < N; ++m) {
            const double c_mean = sum2(n, m) / R;
            const double dev = std::abs(c_mean - q_second(n, m));
            rep.max_second_deviation = std::max(rep.max_second_deviation, dev);
            if (!deterministic && reps > 1) {
                const double s2 =
                    std::max(0.0, sum2sq(n, m) - R * c_mean * c_mean) / (R - 1.0);
                const double se = std::sqrt(s2 / R);
                if (se > 0.0) rep.max_second_z = std::max(rep.max_second_z, dev / se);
            }
        }
    }
    return rep;
}

PFunctionalReport pfunctional_match(const FockOracle& oracle, const TimeGrid& grid,
                                    std::uint64_t n_samples, std::uint64_t seed,
                                    int n_threads) {
    const bool deterministic = oracle.state() != FieldState::thermal;
    return pfunctional_match(
        oracle, grid,
        [&](std::uint64_t r) { return classical_doppelganger(oracle, grid, seed, r); },
        n_samples, deterministic, n_threads);
}

} // namespace mesoed
