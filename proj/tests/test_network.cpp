#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mesoed/gaussian.hpp"
#include "mesoed/network.hpp"
#include "mesoed/propagators.hpp"

#include <cmath>

using namespace mesoed;

namespace {

CausalKernel same_time_gain(const TimeGrid& grid, double gain) {
    return CausalKernel(grid, KernelStrictness::same_time_allowed,
                        [&](int n, int k, int m, int k2) {
                            return (n == m && k == k2) ? gain / grid.dt : 0.0;
                        });
}

CausalKernel memory_chi(const TimeGrid& grid, double gain, double decay) {
    return CausalKernel(grid, KernelStrictness::same_time_allowed,
                        [&](int n, int k, int m, int k2) {
                            if (k != k2) return 0.0;
                            return gain * std::exp(-decay * (n - m) * grid.dt);
                        });
}

} // namespace

TEST_CASE("noiseless unresponsive devices sum their free-running means") {
    const TimeGrid g(0.0, 0.2, 12, 1);
    auto d1 = GaussianDevice::noiseless(
        1, Trajectory::from_fn(g, [](int n, int) { return 0.1 * n; }), std::nullopt);
    auto d2 = GaussianDevice::noiseless(2, Trajectory::constant(g, -0.4), std::nullopt);
    const NetworkSpec net({d1, d2}, retarded_single_mode(g, ModeSpec(1.0)),
                          Trajectory::zeros(g), 3, 9);
    const NetworkSample s = run_replication(net, 0);
    for (int n = 0; n < g.n_steps; ++n)
        CHECK(s.total_current(n, 0) == d1->mu0()(n, 0) + d2->mu0()(n, 0));
}

TEST_CASE("one-device network equals the dressed device bit for bit") {
    const TimeGrid g(0.0, 0.25, 16, 1);
    const CausalKernel G = retarded_single_mode(g, ModeSpec(1.3));
    auto dev = GaussianDevice::white_noise(5, Trajectory::constant(g, 0.3),
                                           same_time_gain(g, 0.6), 0.9);
    const Trajectory a_e = Trajectory::from_fn(
        g, [&](int n, int) { return 0.5 * std::cos(g.time(n)); });
    const NetworkSpec net({dev}, G, a_e, 4, 123);
    const auto dressed = dress(dev, G);
    for (std::uint64_t rep = 0; rep < net.n_reps; ++rep) {
        const NetworkSample s = run_replication(net, rep);
        const Trajectory jd = sample_bare(*dressed, a_e, net.seed, rep);
        CHECK(s.device_current[0].values() == jd.values());
    }
}

TEST_CASE("total current is the per-replication sum of device currents") {
    const TimeGrid g(0.0, 0.5, 10, 2);
    const CausalKernel G(g, KernelStrictness::strict, [](int n, int k, int m, int k2) {
        return k == k2 ? 0.4 * (n - m) : 0.0;
    });
    auto d1 = GaussianDevice::white_noise(1, Trajectory::zeros(g),
                                          memory_chi(g, 0.3, 0.2), 1.0);
    auto d2 = std::make_shared<PoissonDetector>(2, g, 0, 1, 0.5, 2.0, 0.7);
    const NetworkSpec net({d1, d2}, G, Trajectory::constant(g, 0.2), 5, 31);
    for (std::uint64_t rep = 0; rep < net.n_reps; ++rep) {
        const NetworkSample s = run_replication(net, rep);
        for (int i = 0; i < g.size(); ++i)
            CHECK(s.total_current.values()[static_cast<std::size_t>(i)] ==
                  s.device_current[0].values()[static_cast<std::size_t>(i)] +
                      s.device_current[1].values()[static_cast<std::size_t>(i)]);
    }
}

TEST_CASE("compose_bare: passthrough, independence, flattening") {
    const TimeGrid g(0.0, 1.0, 4, 1);
    auto d1 = GaussianDevice::white_noise(1, Trajectory::zeros(g), std::nullopt, 1.0);
    auto d2 = GaussianDevice::white_noise(2, Trajectory::zeros(g), std::nullopt, 0.5);
    auto d3 = GaussianDevice::white_noise(3, Trajectory::zeros(g), std::nullopt, 2.0);

    CHECK(compose_bare({d1}).get() == d1.get());

    // Summed covariance of independent zero-mean components.
    auto pair = compose_bare({d1, d2});
    const Trajectory zero = Trajectory::zeros(g);
    const int n = 60000;
    std::vector<Trajectory> samples;
    samples.reserve(n);
    for (int rep = 0; rep < n; ++rep)
        samples.push_back(sample_bare(*pair, zero, 7, static_cast<std::uint64_t>(rep)));
    const MomentReport rep = estimate_moments(samples);
    for (int i = 0; i < g.size(); ++i)
        CHECK(std::abs(rep.cov(i, i) - 1.25) < 5.0 * rep.cov_standard_error(i, i));

    // Mixed moments factorize at fixed field: cross-covariance vanishes.
    double cross = 0.0;
    for (int r = 0; r < n; ++r) {
        const auto ja = sample_bare(*d1, zero, 7, static_cast<std::uint64_t>(r));
        const auto jb = sample_bare(*d2, zero, 7, static_cast<std::uint64_t>(r));
        cross += ja(0, 0) * jb(0, 0);
    }
    CHECK(std::abs(cross / n) < 4.0 * std::sqrt(1.0 * 0.25 / n));

    // Flattening: nested and flat compositions are stream-aligned.
    auto nested = compose_bare({compose_bare({d1, d2}), d3});
    auto flat = compose_bare({d1, d2, d3});
    for (std::uint64_t r = 0; r < 5; ++r)
        CHECK(sample_bare(*nested, zero, 11, r).values() ==
              sample_bare(*flat, zero, 11, r).values());

    CHECK_THROWS_AS(compose_bare({d1, d1}), std::invalid_argument);
}

TEST_CASE("openmp moments equal the serial reference bit for bit") {
    const TimeGrid g(0.0, 0.1, 24, 1);
    const CausalKernel G = retarded_single_mode(g, ModeSpec(1.0));
    auto d1 = GaussianDevice::white_noise(1, Trajectory::constant(g, 0.5),
                                          same_time_gain(g, 0.4), 1.0);
    auto d2 = GaussianDevice::white_noise(2, Trajectory::zeros(g),
                                          memory_chi(g, 0.3, 0.5), 0.7);
    const NetworkSpec net({d1, d2}, G, Trajectory::constant(g, 0.2), 2000, 77);

    const NetworkMoments serial = simulate_network_moments_serial(net);
    for (int threads : {1, 2, 4}) {
        const NetworkMoments par = simulate_network_moments(net, threads);
        CHECK(par.mean == serial.mean);
        CHECK(par.cov == serial.cov);
    }
}

TEST_CASE("dress/compose commutation is bit-exact for both device mixes") {
    const TimeGrid g(0.0, 0.125, 64, 1);
    const CausalKernel G = retarded_single_mode(g, ModeSpec(1.0));
    auto ga = GaussianDevice::white_noise(1, Trajectory::constant(g, 0.4),
                                          same_time_gain(g, 0.5), 1.0);
    auto gb = GaussianDevice::white_noise(2, Trajectory::zeros(g),
                                          memory_chi(g, 0.35, 0.4), 0.8);
    const CommutationReport r1 =
        compose_dressed_commutation(NetworkSpec({ga, gb}, G, Trajectory::zeros(g), 50, 3));
    CHECK(r1.identical);
    CHECK(r1.max_deviation == 0.0);

    const TimeGrid g2(0.0, 0.125, 64, 2);
    const CausalKernel G2(g2, KernelStrictness::strict, [&](int n, int k, int m, int k2) {
        return k == k2 ? std::sin((n - m) * g2.dt) : 0.0;
    });
    auto src = GaussianDevice::white_noise(
        3,
        Trajectory::from_fn(g2, [&](int n, int k) {
            return k == 0 ? 2.0 * std::sin(g2.time(n)) : 0.0;
        }),
        std::nullopt, 0.5);
    auto det = std::make_shared<PoissonDetector>(4, g2, 0, 1, 0.8, 3.0, 1.0);
    const CommutationReport r2 =
        compose_dressed_commutation(NetworkSpec({src, det}, G2, Trajectory::zeros(g2), 50, 4));
    CHECK(r2.identical);

    // Zero propagator: both constructions reduce to independent bare draws.
    const CommutationReport r3 = compose_dressed_commutation(
        NetworkSpec({ga, gb}, CausalKernel(g, KernelStrictness::strict),
                    Trajectory::zeros(g), 10, 5));
    CHECK(r3.identical);
}

TEST_CASE("associativity: same-stream flattening is exact, moments agree") {
    const TimeGrid g(0.0, 0.2, 16, 1);
    const CausalKernel G = retarded_single_mode(g, ModeSpec(1.0));
    auto a = GaussianDevice::white_noise(1, Trajectory::constant(g, 0.2),
                                         same_time_gain(g, 0.3), 0.8);
    auto b = GaussianDevice::white_noise(2, Trajectory::zeros(g),
                                         memory_chi(g, 0.2, 0.3), 0.6);
    auto c = GaussianDevice::white_noise(3, Trajectory::constant(g, -0.1),
                                         std::nullopt, 1.0);
    const Trajectory a_e = Trajectory::constant(g, 0.1);

    // Same seed and stream alignment: flat and nested runs are bit-identical.
    const NetworkSpec flat({a, b, c}, G, a_e, 20, 9);
    const NetworkSpec nested({compose_bare({a, b}), c}, G, a_e, 20, 9);
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
        const NetworkSample s1 = run_replication(flat, rep);
        const NetworkSample s2 = run_replication(nested, rep);
        CHECK(s1.device_current[2].values() == s2.device_current[1].values());
        for (int i = 0; i < g.size(); ++i)
            CHECK(s1.total_current.values()[static_cast<std::size_t>(i)] ==
                  doctest::Approx(s2.total_current.values()[static_cast<std::size_t>(i)])
                      .epsilon(1e-12));
    }

    const AssociativityReport rep = associativity_check(a, b, c, G, a_e, 20000, 42);
    CHECK(rep.max_z < 4.0);
}

TEST_CASE("gaussian-engine susceptibility matches the dressed response") {
    const TimeGrid g(0.0, 0.25, 10, 1);
    const CausalKernel chi = memory_chi(g, 0.45, 0.3);
    const CausalKernel G = retarded_single_mode(g, ModeSpec(1.0));
    const AffineGaussianSpec bare = AffineGaussianSpec::bare(
        Trajectory::constant(g, 0.2), chi,
        0.5 * Eigen::MatrixXd::Identity(g.size(), g.size()));
    const AffineGaussianSpec dressed = gaussian_dress(bare, G);

    auto mean_of = [&](const Trajectory& a_e) { return dressed.mean_given(a_e); };
    const Trajectory base = Trajectory::constant(g, 0.3);
    const SusceptibilityReport rep = susceptibility_first_order(mean_of, base, 1e-4, true);

    // (I - chi G)^-1 chi in kernel units.
    const Eigen::MatrixXd expected = dressed.response / g.dt;
    CHECK((rep.value - expected).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(rep.richardson_disagreement < 1e-6);

    // Retardation: a probe after the response time has no effect, so
    // nothing sits strictly above the diagonal.
    for (int i = 0; i < g.size(); ++i)
        for (int j = i + 1; j < g.size(); ++j)
            CHECK(std::abs(rep.value(i, j)) < 1e-10);

    // Linear device: all second-order responses vanish.
    const Eigen::VectorXd second =
        susceptibility_second_order(mean_of, base, 2, 5, 1e-3);
    CHECK(second.cwiseAbs().maxCoeff() < 1e-6);

    // General (m|n) route on a product moment: d<J(t1)J(t2)>/dA_e(probe)
    // equals R(t1,p) m(t2) + m(t1) R(t2,p) for the affine-Gaussian law.
    const int t1 = 7, t2 = 4, probe = 2;
    auto second_moment = [&](const Trajectory& a_e) {
        const Trajectory m = dressed.mean_given(a_e);
        return dressed.cov(t1, t2) + m(t1, 0) * m(t2, 0);
    };
    const std::array<int, 1> probes{probe};
    const double d = functional_derivative(second_moment, base, probes, 1e-4);
    const Trajectory m0 = dressed.mean_given(base);
    const double expected_d =
        rep.value(t1, probe) * m0(t2, 0) + m0(t1, 0) * rep.value(t2, probe);
    CHECK(d == doctest::Approx(expected_d).epsilon(1e-5));
}

TEST_CASE("causality audits pass on valid networks and catch a corrupted kernel") {
    const TimeGrid g(0.0, 0.2, 12, 2);
    const CausalKernel G(g, KernelStrictness::strict, [](int, int k, int, int k2) {
        return k == k2 ? 0.3 : 0.0;
    });
    auto gauss = GaussianDevice::white_noise(1, Trajectory::zeros(g),
                                             memory_chi(g, 0.4, 0.1), 0.9);
    auto det = std::make_shared<PoissonDetector>(2, g, 0, 1, 0.7, 1.0, 1.0);
    const NetworkSpec net({gauss, det}, G, Trajectory::constant(g, 0.3), 2, 13);
    for (int m = 0; m < g.n_steps; ++m) CHECK(causality_audit(net, m));

    const Trajectory probe = Trajectory::constant(g, 0.4);
    for (int m = 0; m < g.n_steps; ++m) {
        CHECK(causality_audit(*gauss, probe, m));
        CHECK(causality_audit(*det, probe, m));
    }

    // Negative control: a response kernel with one acausal entry.
    const TimeGrid g1(0.0, 0.2, 6, 1);
    std::vector<double> vals(36, 0.0);
    vals[static_cast<std::size_t>(1 * 6 + 4)] = 2.0; // step 1 reads step 4
    const CausalKernel bad = CausalKernel::from_dense_unchecked(
        g1, KernelStrictness::same_time_allowed, vals);
    auto corrupted = GaussianDevice::white_noise(3, Trajectory::zeros(g1), bad, 0.1);
    CHECK_FALSE(causality_audit(*corrupted, Trajectory::constant(g1, 0.4), 4));
}

TEST_CASE("mixed current-field moments reduce through the kernel") {
    const TimeGrid g(0.0, 0.25, 12, 1);
    const CausalKernel G = retarded_single_mode(g, ModeSpec(1.0));
    auto dev = GaussianDevice::white_noise(1, Trajectory::constant(g, 0.3),
                                           same_time_gain(g, 0.4), 1.0);
    const NetworkSpec net({dev}, G, Trajectory::zeros(g), 400, 21);
    const std::vector<NetworkSample> samples = simulate_network(net);

    const int D = g.size();
    Eigen::MatrixXd jj = Eigen::MatrixXd::Zero(D, D), ja = Eigen::MatrixXd::Zero(D, D);
    for (const auto& s : samples) {
        const Eigen::Map<const Eigen::VectorXd> j(s.total_current.data(), D);
        const Eigen::Map<const Eigen::VectorXd> a(s.total_field.data(), D);
        jj += j * j.transpose();
        ja += j * a.transpose();
    }
    jj /= double(samples.size());
    ja /= double(samples.size());
    // <J(t) A(t')> = sum_m dt G(t',m) <J(t) J(m)>: same samples, same map.
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Eigen::MatrixXd g_op =
        g.dt * Eigen::Map<const RowMat>(G.values().data(), D, D);
    CHECK((ja - jj * g_op.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("network moments against the closed-form joint law") {
    const TimeGrid g(0.0, 0.25, 12, 1);
    const CausalKernel G = retarded_single_mode(g, ModeSpec(1.0));
    const CausalKernel chi_a = same_time_gain(g, 0.5);
    const CausalKernel chi_b = memory_chi(g, 0.3, 0.4);
    auto da = GaussianDevice::white_noise(1, Trajectory::constant(g, 0.4), chi_a, 1.0);
    auto db = GaussianDevice::white_noise(2, Trajectory::zeros(g), chi_b, 0.7);
    const Trajectory a_e = Trajectory::from_fn(
        g, [&](int n, int) { return 0.3 * std::sin(g.time(n)); });
    const NetworkSpec net({da, db}, G, a_e, 20000, 55);
    const NetworkMoments mc = simulate_network_moments(net);

    const std::vector<AffineGaussianSpec> specs{AffineGaussianSpec::from_device(*da),
                                                AffineGaussianSpec::from_device(*db)};
    const JointGaussianSpec joint = gaussian_compose(specs, G);
    const int D = g.size();
    const Eigen::Map<const Eigen::VectorXd> ae(a_e.data(), D);
    for (int k = 0; k < 2; ++k) {
        const Eigen::VectorXd oracle =
            joint.mu0.segment(k * D, D) + joint.response.middleRows(k * D, D) * ae;
        for (int i = 0; i < D; ++i) {
            const double se = mc.mean_standard_error(k * D + i);
            CHECK(std::abs(mc.mean(k * D + i) - oracle(i)) < 4.0 * se + 1e-12);
        }
    }
}
