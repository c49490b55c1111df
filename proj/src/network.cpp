#include "mesoed/network.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>
#include <stdexcept>

namespace mesoed {

namespace {

constexpr std::uint64_t kRepBlock = 256; // accumulation block, fixes FP sum order

class CompositeDevice final : public BareDevice {
public:
    CompositeDevice(std::vector<std::shared_ptr<const BareDevice>> children)
        : BareDevice(children.front()->grid(), children.front()->id()),
          children_(std::move(children)) {
        for (const auto& c : children_)
            require_same_grid(c->grid(), grid_, "compose_bare");
    }

    bool has_same_time_response() const override {
        return std::any_of(children_.begin(), children_.end(),
                           [](const auto& c) { return c->has_same_time_response(); });
    }
    bool is_field_insensitive() const override {
        return std::all_of(children_.begin(), children_.end(),
                           [](const auto& c) { return c->is_field_insensitive(); });
    }
    void collect_ids(std::vector<std::uint32_t>& out) const override {
        for (const auto& c : children_) c->collect_ids(out);
    }
    std::unique_ptr<StepSampler> start_replication(std::uint64_t seed,
                                                   std::uint64_t rep) const override;

private:
    friend class CompositeSampler;
    std::vector<std::shared_ptr<const BareDevice>> children_;
};

class CompositeSampler final : public StepSampler {
public:
    CompositeSampler(const CompositeDevice& dev, std::uint64_t seed, std::uint64_t rep)
        : scratch_(dev.grid()) {
        for (const auto& c : dev.children_)
            samplers_.push_back(c->start_replication(seed, rep));
    }

    void sample_step(int step, const Trajectory& field, Trajectory& j_out) override {
        const TimeGrid& grid = scratch_.grid();
        for (int k = 0; k < grid.n_modes; ++k) j_out(step, k) = 0.0;
        for (auto& s : samplers_) {
            s->sample_step(step, field, scratch_);
            for (int k = 0; k < grid.n_modes; ++k) j_out(step, k) += scratch_(step, k);
        }
    }

private:
    std::vector<std::unique_ptr<StepSampler>> samplers_;
    Trajectory scratch_;
};

std::unique_ptr<StepSampler> CompositeDevice::start_replication(std::uint64_t seed,
                                                                std::uint64_t rep) const {
    return std::make_unique<CompositeSampler>(*this, seed, rep);
}

struct BlockAccum {
    Eigen::VectorXd sum;
    Eigen::MatrixXd sum2; // lower triangle
};

BlockAccum accumulate_block(const NetworkSpec& net, std::uint64_t rep_begin,
                            std::uint64_t rep_end) {
    const int D = net.a_e.grid().size();
    const int R = static_cast<int>(net.devices.size()) * D;
    BlockAccum acc{Eigen::VectorXd::Zero(R), Eigen::MatrixXd::Zero(R, R)};
    Eigen::VectorXd x(R);
    for (std::uint64_t rep = rep_begin; rep < rep_end; ++rep) {
        const NetworkSample s = run_replication(net, rep);
        for (std::size_t k = 0; k < net.devices.size(); ++k)
            x.segment(static_cast<int>(k) * D, D) =
                Eigen::Map<const Eigen::VectorXd>(s.device_current[k].data(), D);
        acc.sum += x;
        acc.sum2.selfadjointView<Eigen::Lower>().rankUpdate(x);
    }
    return acc;
}

NetworkMoments combine_blocks(const NetworkSpec& net,
                              const std::vector<BlockAccum>& blocks) {
    const int D = net.a_e.grid().size();
    const int R = static_cast<int>(net.devices.size()) * D;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(R);
    Eigen::MatrixXd sum2 = Eigen::MatrixXd::Zero(R, R);
    for (const auto& b : blocks) { // block order fixes the reduction order
        sum += b.sum;
        sum2 += b.sum2;
    }
    const double n = static_cast<double>(net.n_reps);
    NetworkMoments out{net.a_e.grid(), static_cast<int>(net.devices.size()),
                       net.n_reps, sum / n, Eigen::MatrixXd()};
    out.cov = (Eigen::MatrixXd(sum2.selfadjointView<Eigen::Lower>()) -
               n * out.mean * out.mean.transpose()) /
              (n - 1.0);
    return out;
}

} // namespace

NetworkSpec::NetworkSpec(std::vector<std::shared_ptr<const BareDevice>> devices_,
                         CausalKernel G_, Trajectory a_e_, std::uint64_t n_reps_,
                         std::uint64_t seed_)
    : devices(std::move(devices_)), G(std::move(G_)), a_e(std::move(a_e_)),
      n_reps(n_reps_), seed(seed_) {
    if (devices.empty())
        throw std::invalid_argument("NetworkSpec: need at least one device");
    if (n_reps < 1) throw std::invalid_argument("NetworkSpec: n_reps must be >= 1");
    if (!G.is_strict())
        throw std::invalid_argument("NetworkSpec: propagator must be strict");
    require_same_grid(G.grid(), a_e.grid(), "NetworkSpec");
    std::vector<std::uint32_t> ids;
    for (const auto& d : devices) {
        if (!d) throw std::invalid_argument("NetworkSpec: null device");
        require_same_grid(d->grid(), a_e.grid(), "NetworkSpec");
        d->collect_ids(ids);
    }
    if (std::set<std::uint32_t>(ids.begin(), ids.end()).size() != ids.size())
        throw std::invalid_argument("NetworkSpec: device ids must be unique");
}

NetworkSample run_replication(const NetworkSpec& net, std::uint64_t rep) {
    const TimeGrid& grid = net.a_e.grid();
    const int N = static_cast<int>(net.devices.size());
    const int nm = grid.n_modes;

    std::vector<std::unique_ptr<StepSampler>> samplers;
    samplers.reserve(static_cast<std::size_t>(N));
    for (const auto& d : net.devices)
        samplers.push_back(d->start_replication(net.seed, rep));

    std::vector<Trajectory> j(static_cast<std::size_t>(N), Trajectory(grid));
    std::vector<Trajectory> a_loc(static_cast<std::size_t>(N), Trajectory(grid));
    std::vector<std::vector<double>> r(static_cast<std::size_t>(N),
                                       std::vector<double>(static_cast<std::size_t>(nm)));

    for (int n = 0; n < grid.n_steps; ++n) {
        for (int k = 0; k < N; ++k)
            apply_kernel_row(net.G, j[static_cast<std::size_t>(k)], n,
                             r[static_cast<std::size_t>(k)].data());
        for (int k = 0; k < N; ++k) {
            // Radiation of the other devices in device order, own field last:
            // the same order a lone dressed device uses internally.
            for (int m = 0; m < nm; ++m) {
                double acc = net.a_e(n, m);
                for (int l = 0; l < N; ++l)
                    if (l != k) acc += r[static_cast<std::size_t>(l)][static_cast<std::size_t>(m)];
                acc += r[static_cast<std::size_t>(k)][static_cast<std::size_t>(m)];
                a_loc[static_cast<std::size_t>(k)](n, m) = acc;
            }
            samplers[static_cast<std::size_t>(k)]->sample_step(
                n, a_loc[static_cast<std::size_t>(k)], j[static_cast<std::size_t>(k)]);
        }
    }

    Trajectory total(grid);
    for (int i = 0; i < grid.size(); ++i) {
        double acc = 0.0;
        for (int k = 0; k < N; ++k) acc += j[static_cast<std::size_t>(k)].values()[static_cast<std::size_t>(i)];
        total.data()[i] = acc;
    }
    return {std::move(j), total, radiate(net.G, total)};
}

std::vector<NetworkSample> simulate_network(const NetworkSpec& net, int n_threads) {
    std::vector<NetworkSample> out(net.n_reps,
                                   NetworkSample{{}, Trajectory(net.a_e.grid()),
                                                 Trajectory(net.a_e.grid())});
    const int threads = n_threads > 0 ? n_threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 16) num_threads(threads)
    for (std::int64_t rep = 0; rep < static_cast<std::int64_t>(net.n_reps); ++rep)
        out[static_cast<std::size_t>(rep)] =
            run_replication(net, static_cast<std::uint64_t>(rep));
    return out;
}

NetworkMoments simulate_network_moments(const NetworkSpec& net, int n_threads) {
    if (net.n_reps < 2)
        throw std::invalid_argument("simulate_network_moments: need n_reps >= 2");
    const std::uint64_t n_blocks = (net.n_reps + kRepBlock - 1) / kRepBlock;
    std::vector<BlockAccum> blocks(n_blocks);
    const int threads = n_threads > 0 ? n_threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (std::int64_t b = 0; b < static_cast<std::int64_t>(n_blocks); ++b) {
        const std::uint64_t begin = static_cast<std::uint64_t>(b) * kRepBlock;
        blocks[static_cast<std::size_t>(b)] =
            accumulate_block(net, begin, std::min(begin + kRepBlock, net.n_reps));
    }
    return combine_blocks(net, blocks);
}

NetworkMoments simulate_network_moments_serial(const NetworkSpec& net) {
    if (net.n_reps < 2)
        throw std::invalid_argument("simulate_network_moments: need n_reps >= 2");
    const std::uint64_t n_blocks = (net.n_reps + kRepBlock - 1) / kRepBlock;
    std::vector<BlockAccum> blocks(n_blocks);
    for (std::uint64_t b = 0; b < n_blocks; ++b) {
        const std::uint64_t begin = b * kRepBlock;
        blocks[b] = accumulate_block(net, begin, std::min(begin + kRepBlock, net.n_reps));
    }
    return combine_blocks(net, blocks);
}

Eigen::VectorXd NetworkMoments::device_mean(int k) const {
    const int D = grid.size();
    return mean.segment(k * D, D);
}

Trajectory NetworkMoments::total_mean() const {
    const int D = grid.size();
    Eigen::VectorXd m = Eigen::VectorXd::Zero(D);
    for (int k = 0; k < n_devices; ++k) m += mean.segment(k * D, D);
    return Trajectory(grid, std::vector<double>(m.data(), m.data() + D));
}

Eigen::MatrixXd NetworkMoments::total_cov() const {
    const int D = grid.size();
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(D, D);
    for (int k = 0; k < n_devices; ++k)
        for (int l = 0; l < n_devices; ++l) c += cov.block(k * D, l * D, D, D);
    return c;
}

Trajectory NetworkMoments::field_mean(const CausalKernel& G) const {
    return radiate(G, total_mean());
}

double NetworkMoments::mean_standard_error(int i) const {
    return std::sqrt(std::max(0.0, cov(i, i)) / static_cast<double>(n_reps));
}

double NetworkMoments::total_cov_standard_error(int i, int j) const {
    const Eigen::MatrixXd c = total_cov();
    const double v = c(i, i) * c(j, j) + c(i, j) * c(i, j);
    return std::sqrt(std::max(0.0, v) / static_cast<double>(n_reps - 1));
}

std::shared_ptr<const BareDevice>
compose_bare(std::vector<std::shared_ptr<const BareDevice>> devices) {
    if (devices.empty()) throw std::invalid_argument("compose_bare: empty device list");
    for (const auto& d : devices)
        if (!d) throw std::invalid_argument("compose_bare: null device");
    if (devices.size() == 1) return devices.front();
    std::vector<std::uint32_t> ids;
    for (const auto& d : devices) d->collect_ids(ids);
    if (std::set<std::uint32_t>(ids.begin(), ids.end()).size() != ids.size())
        throw std::invalid_argument("compose_bare: device ids must be unique");
    return std::make_shared<CompositeDevice>(std::move(devices));
}

CommutationReport compose_dressed_commutation(const NetworkSpec& net) {
    if (net.devices.size() != 2)
        throw std::invalid_argument("compose_dressed_commutation: needs exactly 2 devices");
    const TimeGrid& grid = net.a_e.grid();
    const int nm = grid.n_modes;

    const auto dressed_a = dress(net.devices[0], net.G);
    const auto dressed_b = dress(net.devices[1], net.G);

    CommutationReport report{true, 0.0};
    for (std::uint64_t rep = 0; rep < net.n_reps; ++rep) {
        const NetworkSample bare = run_replication(net, rep);

        auto sa = dressed_a->start_replication(net.seed, rep);
        auto sb = dressed_b->start_replication(net.seed, rep);
        Trajectory ja(grid), jb(grid), ea(grid), eb(grid);
        std::vector<double> ra(static_cast<std::size_t>(nm)), rb(static_cast<std::size_t>(nm));
        for (int n = 0; n < grid.n_steps; ++n) {
            apply_kernel_row(net.G, ja, n, ra.data());
            apply_kernel_row(net.G, jb, n, rb.data());
            for (int m = 0; m < nm; ++m) {
                ea(n, m) = net.a_e(n, m) + rb[static_cast<std::size_t>(m)];
                eb(n, m) = net.a_e(n, m) + ra[static_cast<std::size_t>(m)];
            }
            sa->sample_step(n, ea, ja);
            sb->sample_step(n, eb, jb);
        }

        for (int i = 0; i < grid.size(); ++i) {
            const double da = std::abs(ja.values()[static_cast<std::size_t>(i)] -
                                       bare.device_current[0].values()[static_cast<std::size_t>(i)]);
            const double db = std::abs(jb.values()[static_cast<std::size_t>(i)] -
                                       bare.device_current[1].values()[static_cast<std::size_t>(i)]);
            report.max_deviation = std::max({report.max_deviation, da, db});
        }
        if (std::memcmp(ja.data(), bare.device_current[0].data(),
                        sizeof(double) * static_cast<std::size_t>(grid.size())) != 0 ||
            std::memcmp(jb.data(), bare.device_current[1].data(),
                        sizeof(double) * static_cast<std::size_t>(grid.size())) != 0)
            report.identical = false;
    }
    return report;
}

AssociativityReport associativity_check(std::shared_ptr<const BareDevice> a,
                                        std::shared_ptr<const BareDevice> b,
                                        std::shared_ptr<const BareDevice> c,
                                        const CausalKernel& G, const Trajectory& a_e,
                                        std::uint64_t n_reps, std::uint64_t seed,
                                        int n_threads) {
    const NetworkSpec flat({a, b, c}, G, a_e, n_reps, seed);
    const NetworkSpec nested({compose_bare({a, b}), c}, G, a_e, n_reps, seed + 1);
    const NetworkMoments m1 = simulate_network_moments(flat, n_threads);
    const NetworkMoments m2 = simulate_network_moments(nested, n_threads);

    const int D = a_e.grid().size();
    const Trajectory t1 = m1.total_mean();
    const Trajectory t2 = m2.total_mean();
    const Eigen::MatrixXd c1 = m1.total_cov();
    const Eigen::MatrixXd c2 = m2.total_cov();
    AssociativityReport rep;
    for (int i = 0; i < D; ++i) {
        const double dev = std::abs(t1.data()[i] - t2.data()[i]);
        const double se = std::sqrt((c1(i, i) + c2(i, i)) / static_cast<double>(n_reps));
        rep.max_mean_deviation = std::max(rep.max_mean_deviation, dev);
        if (se > 0.0) rep.max_z = std::max(rep.max_z, dev / se);
    }
    return rep;
}

SusceptibilityReport susceptibility_first_order(
    const std::function<Trajectory(const Trajectory&)>& mean_of,
    const Trajectory& a_e, double h_scale, bool richardson) {
    const TimeGrid& grid = a_e.grid();
    const int D = grid.size();
    double scale = 1.0;
    for (double v : a_e.values()) scale = std::max(scale, std::abs(v));
    const double h = h_scale * scale;

    auto derivative = [&](double step) {
        Eigen::MatrixXd r(D, D);
        for (int jdx = 0; jdx < D; ++jdx) {
            Trajectory up = a_e, dn = a_e;
            up.data()[jdx] += step;
            dn.data()[jdx] -= step;
            const Trajectory mu = mean_of(up);
            const Trajectory md = mean_of(dn);
            for (int i = 0; i < D; ++i)
                r(i, jdx) = (mu.data()[i] - md.data()[i]) / (2.0 * step * grid.dt);
        }
        return r;
    };

    SusceptibilityReport out;
    out.value = derivative(h);
    if (richardson) {
        const Eigen::MatrixXd refined = derivative(0.5 * h);
        out.richardson_disagreement = (out.value - refined).cwiseAbs().maxCoeff();
        out.value = refined;
    }
    return out;
}

Eigen::VectorXd susceptibility_second_order(
    const std::function<Trajectory(const Trajectory&)>& mean_of,
    const Trajectory& a_e, int probe_j, int probe_k, double h_scale) {
    const TimeGrid& grid = a_e.grid();
    const int D = grid.size();
    double scale = 1.0;
    for (double v : a_e.values()) scale = std::max(scale, std::abs(v));
    const double h = h_scale * scale;
    const double dt2 = grid.dt * grid.dt;

    auto shifted = [&](double dj, double dk) {
        Trajectory t = a_e;
        t.data()[probe_j] += dj;
        t.data()[probe_k] += dk;
        return mean_of(t);
    };

    Eigen::VectorXd out(D);
    if (probe_j == probe_k) {
        const Trajectory p = shifted(h, 0.0), z = mean_of(a_e), m = shifted(-h, 0.0);
        for (int i = 0; i < D; ++i)
            out(i) = (p.data()[i] - 2.0 * z.data()[i] + m.data()[i]) / (h * h * dt2);
    } else {
        const Trajectory pp = shifted(h, h), pm = shifted(h, -h), mp = shifted(-h, h),
                         mm = shifted(-h, -h);
        for (int i = 0; i < D; ++i)
            out(i) = (pp.data()[i] - pm.data()[i] - mp.data()[i] + mm.data()[i]) /
                     (4.0 * h * h * dt2);
    }
    return out;
}

double functional_derivative(const std::function<double(const Trajectory&)>& observable,
                             const Trajectory& a_e, std::span<const int> probes,
                             double h_scale) {
    if (probes.empty() || probes.size() > 2)
        throw std::invalid_argument("functional_derivative: one or two probes supported");
    const double dt = a_e.grid().dt;
    double scale = 1.0;
    for (double v : a_e.values()) scale = std::max(scale, std::abs(v));
    const double h = h_scale * scale;

    auto shifted = [&](double d0, double d1) {
        Trajectory t = a_e;
        t.data()[probes[0]] += d0;
        if (probes.size() == 2) t.data()[probes[1]] += d1;
        return observable(t);
    };
    if (probes.size() == 1)
        return (shifted(h, 0.0) - shifted(-h, 0.0)) / (2.0 * h * dt);
    if (probes[0] == probes[1])
        return (shifted(h, 0.0) - 2.0 * observable(a_e) + shifted(-h, 0.0)) /
               (h * h * dt * dt);
    return (shifted(h, h) - shifted(h, -h) - shifted(-h, h) + shifted(-h, -h)) /
           (4.0 * h * h * dt * dt);
}

bool causality_audit(const BareDevice& dev, const Trajectory& field, int step_m,
                     std::uint64_t seed, std::uint64_t rep, double delta) {
    const TimeGrid& grid = dev.grid();
    Trajectory perturbed = field;
    for (int k = 0; k < grid.n_modes; ++k) perturbed(step_m, k) += delta;

    const Trajectory j0 = sample_bare(dev, field, seed, rep);
    const Trajectory j1 = sample_bare(dev, perturbed, seed, rep);
    const int upto = dev.has_same_time_response() ? step_m : step_m + 1;
    for (int n = 0; n < upto && n < grid.n_steps; ++n)
        for (int k = 0; k < grid.n_modes; ++k)
            if (j0(n, k) != j1(n, k)) return false;
    return true;
}

bool causality_audit(const NetworkSpec& net, int step_m, double delta,
                     std::uint64_t rep) {
    const TimeGrid& grid = net.a_e.grid();
    NetworkSpec perturbed = net;
    for (int k = 0; k < grid.n_modes; ++k) perturbed.a_e(step_m, k) += delta;

    const NetworkSample s0 = run_replication(net, rep);
    const NetworkSample s1 = run_replication(perturbed, rep);
    for (std::size_t d = 0; d < net.devices.size(); ++d) {
        const int upto = net.devices[d]->has_same_time_response() ? step_m : step_m + 1;
        for (int n = 0; n < upto && n < grid.n_steps; ++n)
            for (int k = 0; k < grid.n_modes; ++k)
                if (s0.device_current[d](n, k) != s1.device_current[d](n, k))
                    return false;
    }
    return true;
}

} // namespace mesoed
