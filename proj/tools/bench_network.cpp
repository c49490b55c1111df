// Timing comparison between the serial reference loop and the OpenMP
// replication engine. Both produce bit-identical moments; this only
// measures the speedup.

#include "mesoed/network.hpp"
#include "mesoed/propagators.hpp"

#include <omp.h>

#include <cstdio>
#include <cstring>

using namespace mesoed;

namespace {

NetworkSpec make_case(int n_steps, std::uint64_t n_reps) {
    const TimeGrid grid(0.0, 0.1, n_steps, 1);
    const CausalKernel G = retarded_single_mode(grid, ModeSpec(1.0));
    const CausalKernel chi_a(grid, KernelStrictness::same_time_allowed,
                             [&](int n, int, int m, int) {
                                 return n == m ? 0.4 / grid.dt : 0.0;
                             });
    const CausalKernel chi_b(grid, KernelStrictness::same_time_allowed,
                             [&](int n, int, int m, int) {
                                 return 0.3 * std::exp(-0.5 * (n - m) * grid.dt);
                             });
    auto dev_a = GaussianDevice::white_noise(
        1, Trajectory::constant(grid, 0.5), chi_a, 1.0);
    auto dev_b = GaussianDevice::white_noise(
        2, Trajectory::from_fn(grid, [&](int n, int) { return std::sin(grid.time(n)); }),
        chi_b, 0.7);
    return NetworkSpec({dev_a, dev_b}, G,
                       Trajectory::constant(grid, 0.2), n_reps, 12345);
}

} // namespace

int main() {
    std::printf("%8s %8s %10s %10s %8s %6s\n", "steps", "reps", "serial[s]",
                "openmp[s]", "speedup", "match");
    for (const auto& [steps, reps] :
         {std::pair<int, std::uint64_t>{32, 20000},
          std::pair<int, std::uint64_t>{64, 10000},
          std::pair<int, std::uint64_t>{128, 5000}}) {
        const NetworkSpec net = make_case(steps, reps);

        double t0 = omp_get_wtime();
        const NetworkMoments serial = simulate_network_moments_serial(net);
        const double t_serial = omp_get_wtime() - t0;

        t0 = omp_get_wtime();
        const NetworkMoments parallel = simulate_network_moments(net);
        const double t_parallel = omp_get_wtime() - t0;

        const bool match =
            std::memcmp(serial.mean.data(), parallel.mean.data(),
                        sizeof(double) * static_cast<std::size_t>(serial.mean.size())) == 0 &&
            std::memcmp(serial.cov.data(), parallel.cov.data(),
                        sizeof(double) * static_cast<std::size_t>(serial.cov.size())) == 0;

        std::printf("%8d %8llu %10.3f %10.3f %8.2f %6s\n", steps,
                    static_cast<unsigned long long>(reps), t_serial, t_parallel,
                    t_serial / t_parallel, match ? "yes" : "NO");
    }
    return 0;
}
