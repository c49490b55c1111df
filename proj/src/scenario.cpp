#include "mesoed/scenario.hpp"

#include "mesoed/dressing.hpp"
#include "mesoed/gaussian.hpp"
#include "mesoed/network.hpp"
#include "mesoed/photodetection.hpp"
#include "mesoed/propagators.hpp"
#include "mesoed/timenormal.hpp"

#include <json.hpp>
#include <omp.h>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

namespace mesoed {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct ScenarioError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

[[noreturn]] void fail(const std::string& field, const std::string& what) {
    throw ScenarioError("field '" + field + "': " + what);
}

const json& member(const json& obj, const std::string& field) {
    if (!obj.is_object() || !obj.contains(field)) fail(field, "missing");
    return obj.at(field);
}

double num(const json& obj, const std::string& field) {
    const json& v = member(obj, field);
    if (!v.is_number()) fail(field, "must be a number");
    return v.get<double>();
}

double num_or(const json& obj, const std::string& field, double fallback) {
    if (!obj.is_object() || !obj.contains(field)) return fallback;
    return num(obj, field);
}

std::int64_t integer(const json& obj, const std::string& field) {
    const json& v = member(obj, field);
    if (!v.is_number_integer()) fail(field, "must be an integer");
    return v.get<std::int64_t>();
}

std::string str(const json& obj, const std::string& field) {
    const json& v = member(obj, field);
    if (!v.is_string()) fail(field, "must be a string");
    return v.get<std::string>();
}

std::uint32_t fnv1a(const std::string& s) {
    std::uint32_t h = 2166136261u;
    for (unsigned char c : s) {
        h ^= c;
        h *= 16777619u;
    }
    return h;
}

// Shortest round-trip decimal representation.
std::string format_double(double v) {
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

struct Row {
    std::string quantity;
    std::optional<int> step, mode, step2, mode2;
    double value = 0.0;
    std::optional<double> std_err;
};

struct Verdict {
    std::string check;
    std::optional<int> step;
    bool pass = true;
};

struct ManifestEntry {
    std::string quantity;
    std::string reference;
};

struct Outputs {
    std::vector<Row> rows;
    std::vector<Verdict> verdicts;
    std::vector<ManifestEntry> manifest;
    bool is_audit = false;
    bool audit_failed = false;

    void row(Row r) { rows.push_back(std::move(r)); }
    void note(const std::string& quantity, const std::string& reference) {
        for (const auto& m : manifest)
            if (m.quantity == quantity) return;
        manifest.push_back({quantity, reference});
    }
};

struct ParsedScenario {
    std::string experiment;
    std::optional<TimeGrid> grid;
    json root;
    fs::path base_dir;
    std::uint64_t n_reps = 1;
    std::uint64_t seed = 0;
};

TimeGrid parse_grid(const json& root) {
    const json& g = member(root, "grid");
    const auto n_steps = integer(g, "n_steps");
    const auto n_modes = g.contains("n_modes") ? integer(g, "n_modes") : 1;
    if (n_steps < 1) fail("grid.n_steps", "must be >= 1");
    if (n_modes < 1) fail("grid.n_modes", "must be >= 1");
    const double dt = num(g, "dt");
    if (!(dt > 0.0)) fail("grid.dt", "must be > 0");
    return TimeGrid(num_or(g, "t0", 0.0), dt, static_cast<int>(n_steps),
                    static_cast<int>(n_modes));
}

json load_json_file(const fs::path& path, const std::string& field) {
    std::ifstream in(path);
    if (!in) fail(field, "cannot open file " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        fail(field, "invalid JSON in " + path.string() + ": " + e.what());
    }
    return j;
}

Trajectory parse_waveform(const json& w, const TimeGrid& grid,
                          const fs::path& base_dir, const std::string& field) {
    if (!w.is_object()) fail(field, "must be an object");
    const std::string kind = str(w, "kind");
    const int mode = static_cast<int>(w.contains("mode") ? integer(w, "mode") : 0);
    if (mode < 0 || mode >= grid.n_modes) fail(field + ".mode", "out of range");
    if (kind == "zero") return Trajectory::zeros(grid);
    if (kind == "constant") {
        const double v = num(w, "value");
        return Trajectory::from_fn(grid,
                                   [&](int, int k) { return k == mode ? v : 0.0; });
    }
    if (kind == "sinusoid") {
        const double amp = num(w, "amplitude");
        const double omega = num(w, "omega");
        const double phase = num_or(w, "phase", 0.0);
        return Trajectory::from_fn(grid, [&](int n, int k) {
            return k == mode ? amp * std::sin(omega * grid.time(n) + phase) : 0.0;
        });
    }
    if (kind == "samples") {
        const json data = load_json_file(base_dir / str(w, "path"), field + ".path");
        if (!data.is_array() || data.size() != static_cast<std::size_t>(grid.size()))
            fail(field + ".path",
                 "must hold a flat array of n_steps*n_modes numbers");
        std::vector<double> v;
        v.reserve(data.size());
        for (const auto& x : data) {
            if (!x.is_number()) fail(field + ".path", "array entries must be numbers");
            v.push_back(x.get<double>());
        }
        return Trajectory(grid, std::move(v));
    }
    fail(field + ".kind", "unknown waveform kind '" + kind + "'");
}

Trajectory parse_a_e(const ParsedScenario& sc, const TimeGrid& grid) {
    if (!sc.root.contains("a_e")) return Trajectory::zeros(grid);
    return parse_waveform(sc.root.at("a_e"), grid, sc.base_dir, "a_e");
}

CausalKernel parse_propagator(const ParsedScenario& sc, const TimeGrid& grid) {
    const json& p = member(sc.root, "propagator");
    const std::string kind = str(p, "kind");
    if (kind == "single_mode") {
        const json& omegas = member(p, "omega");
        if (!omegas.is_array() || omegas.size() != static_cast<std::size_t>(grid.n_modes))
            fail("propagator.omega", "must list one angular frequency per mode");
        std::vector<CausalKernel> per_mode;
        const TimeGrid single(grid.t0, grid.dt, grid.n_steps, 1);
        for (const auto& w : omegas) {
            if (!w.is_number() || w.get<double>() < 0.0)
                fail("propagator.omega", "entries must be numbers >= 0");
            per_mode.push_back(
                retarded_single_mode(single, ModeSpec(w.get<double>())));
        }
        return CausalKernel(grid, KernelStrictness::strict,
                            [&](int n, int k, int m, int k2) -> double {
                                if (k != k2) return 0.0;
                                return per_mode[static_cast<std::size_t>(k)](n, 0, m, 0);
                            });
    }
    if (kind == "file") {
        const json data =
            load_json_file(sc.base_dir / str(p, "path"), "propagator.path");
        const json& vals = member(data, "values");
        const std::size_t D = static_cast<std::size_t>(grid.size());
        if (!vals.is_array() || vals.size() != D)
            fail("propagator.path", "values must be a D x D matrix, D = steps*modes");
        std::vector<double> flat;
        flat.reserve(D * D);
        for (const auto& row : vals) {
            if (!row.is_array() || row.size() != D)
                fail("propagator.path", "values must be a D x D matrix");
            for (const auto& x : row) flat.push_back(x.get<double>());
        }
        try {
            return CausalKernel::from_dense(grid, KernelStrictness::strict,
                                            std::move(flat));
        } catch (const std::invalid_argument& e) {
            fail("propagator.path", e.what());
        }
    }
    fail("propagator.kind", "unknown propagator kind '" + kind + "'");
}

CausalKernel parse_response(const json& dev, const TimeGrid& grid,
                            const std::string& field, bool& any) {
    const json& r = member(dev, "response");
    const std::string kind = str(r, "kind");
    any = kind != "none";
    if (kind == "none")
        return CausalKernel(grid, KernelStrictness::same_time_allowed);
    if (kind == "instantaneous") {
        const double gain = num(r, "gain");
        const int mode = static_cast<int>(r.contains("mode") ? integer(r, "mode") : 0);
        if (mode < 0 || mode >= grid.n_modes) fail(field + ".mode", "out of range");
        // J(n, mode) responds to A_loc(n, mode) with the given gain; the
        // same-time kernel entry carries 1/dt so the dt-weighted product is
        // the plain gain.
        return CausalKernel(grid, KernelStrictness::same_time_allowed,
                            [&](int n, int k, int m, int k2) -> double {
                                return (n == m && k == mode && k2 == mode)
                                           ? gain / grid.dt
                                           : 0.0;
                            });
    }
    if (kind == "exp_memory") {
        const double gain = num(r, "gain");
        const double decay = num(r, "decay");
        const bool same_time = r.contains("same_time") && r.at("same_time").is_boolean()
                                   ? r.at("same_time").get<bool>()
                                   : false;
        if (!(decay >= 0.0)) fail(field + ".decay", "must be >= 0");
        return CausalKernel(grid, KernelStrictness::same_time_allowed,
                            [&](int n, int k, int m, int k2) -> double {
                                if (k != k2) return 0.0;
                                if (m > n || (m == n && !same_time)) return 0.0;
                                return gain * std::exp(-decay * (n - m) * grid.dt);
                            });
    }
    fail(field + ".kind", "unknown response kind '" + kind + "'");
}

struct NamedDevice {
    std::string name;
    std::shared_ptr<const BareDevice> device;
};

std::vector<NamedDevice> parse_devices(const ParsedScenario& sc, const TimeGrid& grid) {
    const json& list = member(sc.root, "devices");
    if (!list.is_array() || list.empty()) fail("devices", "must be a non-empty array");
    std::vector<NamedDevice> out;
    std::vector<std::string> names;
    std::vector<std::uint32_t> ids;
    int index = 0;
    for (const auto& dev : list) {
        const std::string field = "devices[" + std::to_string(index++) + "]";
        const std::string name = str(dev, "id");
        for (const auto& seen : names)
            if (seen == name) fail(field + ".id", "duplicate device id '" + name + "'");
        names.push_back(name);
        const std::uint32_t id = fnv1a(name);
        for (std::uint32_t seen : ids)
            if (seen == id)
                fail(field + ".id", "id hash collision with another device; rename it");
        ids.push_back(id);

        const std::string kind = str(dev, "kind");
        if (kind == "gaussian") {
            Trajectory mu0 = dev.contains("mu0")
                                 ? parse_waveform(dev.at("mu0"), grid, sc.base_dir,
                                                  field + ".mu0")
                                 : Trajectory::zeros(grid);
            std::optional<CausalKernel> chi;
            if (dev.contains("response")) {
                bool any = false;
                CausalKernel k = parse_response(dev, grid, field + ".response", any);
                if (any) chi = std::move(k);
            }
            double noise_std = 0.0;
            std::optional<int> noise_mode;
            if (dev.contains("noise")) {
                const json& nz = dev.at("noise");
                const std::string nkind = str(nz, "kind");
                if (nkind == "white") {
                    noise_std = num(nz, "std");
                    if (nz.contains("mode")) {
                        noise_mode = static_cast<int>(integer(nz, "mode"));
                        if (*noise_mode < 0 || *noise_mode >= grid.n_modes)
                            fail(field + ".noise.mode", "out of range");
                    }
                } else if (nkind != "none") {
                    fail(field + ".noise.kind", "unknown noise kind '" + nkind + "'");
                }
                if (noise_std < 0.0) fail(field + ".noise.std", "must be >= 0");
            }
            if (noise_std > 0.0 && noise_mode) {
                Eigen::MatrixXd cov =
                    Eigen::MatrixXd::Zero(grid.size(), grid.size());
                for (int n = 0; n < grid.n_steps; ++n) {
                    const int i = grid.flat(n, *noise_mode);
                    cov(i, i) = noise_std * noise_std;
                }
                out.push_back({name, std::make_shared<GaussianDevice>(
                                         id, std::move(mu0), std::move(chi),
                                         std::move(cov))});
            } else if (noise_std > 0.0) {
                out.push_back({name, GaussianDevice::white_noise(id, std::move(mu0),
                                                                 std::move(chi),
                                                                 noise_std)});
            } else {
                out.push_back({name, GaussianDevice::noiseless(id, std::move(mu0),
                                                               std::move(chi))});
            }
        } else if (kind == "poisson_detector") {
            try {
                out.push_back({name, std::make_shared<PoissonDetector>(
                                         id, grid,
                                         static_cast<int>(integer(dev, "input_mode")),
                                         static_cast<int>(integer(dev, "output_mode")),
                                         num(dev, "efficiency"), num(dev, "dark_rate"),
                                         num(dev, "charge"))});
            } catch (const std::invalid_argument& e) {
                fail(field, e.what());
            }
        } else {
            fail(field + ".kind", "unknown device kind '" + kind + "'");
        }
    }
    return out;
}

const json& params_of(const ParsedScenario& sc) {
    static const json empty = json::object();
    return sc.root.contains("params") ? sc.root.at("params") : empty;
}

// --- experiments ---------------------------------------------------------

void run_appendix_a(const ParsedScenario& sc, Outputs& out) {
    const json& p = params_of(sc);
    const double chi = num(p, "chi");
    const double g = num(p, "g");
    const double j0 = num_or(p, "j0", 1.0);
    const double a_e = num_or(p, "a_e", 0.0);
    const double a_e_prime = num_or(p, "a_e_prime", 0.0);
    if (!(j0 > 0.0)) fail("params.j0", "must be > 0");
    if (std::abs(chi * g) >= 1.0)
        fail("params.chi", "|chi*g| must be < 1 for the instantaneous probe");

    out.row({"normalization_instantaneous", {}, {}, {}, {},
             normalization_probe_instantaneous(chi, g, j0, a_e), {}});
    out.note("normalization_instantaneous",
             "defect integral of the instantaneously self-coupled Gaussian");
    const TwoTimeCheck check = two_time_causal_check(chi, g, j0, a_e, a_e_prime);
    out.row({"normalization_causal", {}, {}, {}, {}, check.normalization, {}});
    out.note("normalization_causal",
             "normalization of the delayed two-time self-coupled Gaussian");
    out.row({"factorization_residual", {}, {}, {}, {}, check.factorization_residual, {}});
    out.note("factorization_residual",
             "pointwise residual of conditional * marginal factorization");

    // Moments of the causal pair from the same closed-form density.
    const double later_mean = chi * a_e + chi * g * chi * a_e_prime;
    out.row({"later_mean", {}, {}, {}, {}, later_mean, {}});
    out.note("later_mean", "mean of the later current of the causal pair");
    out.row({"later_var", {}, {}, {}, {}, j0 * j0 * (1.0 + chi * chi * g * g), {}});
    out.note("later_var", "variance of the later current of the causal pair");
    out.row({"pair_cov", {}, {}, {}, {}, chi * g * j0 * j0, {}});
    out.note("pair_cov", "covariance of the causal current pair");
}

void emit_mean_rows(Outputs& out, const std::string& quantity, const TimeGrid& grid,
                    const Eigen::VectorXd& mean,
                    const std::function<double(int)>& se) {
    for (int n = 0; n < grid.n_steps; ++n)
        for (int k = 0; k < grid.n_modes; ++k) {
            const int i = grid.flat(n, k);
            Row r{quantity, n, k, {}, {}, mean(i), {}};
            if (se) r.std_err = se(i);
            out.row(std::move(r));
        }
}

void emit_cov_rows(Outputs& out, const std::string& quantity, const TimeGrid& grid,
                   const Eigen::MatrixXd& cov) {
    for (int n = 0; n < grid.n_steps; ++n)
        for (int k = 0; k < grid.n_modes; ++k)
            for (int n2 = 0; n2 < grid.n_steps; ++n2)
                for (int k2 = 0; k2 < grid.n_modes; ++k2)
                    out.row({quantity, n, k, n2, k2,
                             cov(grid.flat(n, k), grid.flat(n2, k2)), {}});
}

NetworkSpec build_network(const ParsedScenario& sc, const TimeGrid& grid,
                          const std::vector<NamedDevice>& devices) {
    std::vector<std::shared_ptr<const BareDevice>> devs;
    for (const auto& d : devices) devs.push_back(d.device);
    try {
        return NetworkSpec(std::move(devs), parse_propagator(sc, grid),
                           parse_a_e(sc, grid), sc.n_reps, sc.seed);
    } catch (const std::invalid_argument& e) {
        fail("devices", e.what());
    }
}

void run_mc_experiment(const ParsedScenario& sc, Outputs& out, int threads,
                       bool compose) {
    const TimeGrid grid = *sc.grid;
    if (sc.n_reps < 2) fail("n_reps", "Monte Carlo experiments need at least 2");
    const std::vector<NamedDevice> devices = parse_devices(sc, grid);
    if (!compose && devices.size() != 1)
        fail("devices", "dress experiment needs exactly one device");
    const NetworkSpec net = build_network(sc, grid, devices);
    const NetworkMoments m = simulate_network_moments(net, threads);

    const int D = grid.size();
    for (std::size_t k = 0; k < devices.size(); ++k) {
        emit_mean_rows(out, "mean." + devices[k].name, grid,
                       m.device_mean(static_cast<int>(k)), [&](int i) {
                           return m.mean_standard_error(static_cast<int>(k) * D + i);
                       });
        out.note("mean." + devices[k].name,
                 "Monte Carlo mean current of one device, dressed by the network");
    }
    const Trajectory total = m.total_mean();
    const Eigen::MatrixXd tcov = m.total_cov();
    emit_mean_rows(out, "mean.total", grid,
                   Eigen::Map<const Eigen::VectorXd>(total.data(), D), [&](int i) {
                       return std::sqrt(std::max(0.0, tcov(i, i)) /
                                        static_cast<double>(m.n_reps));
                   });
    out.note("mean.total", "Monte Carlo mean of the summed current");
    emit_cov_rows(out, "cov.total", grid, tcov);
    out.note("cov.total", "Monte Carlo covariance of the summed current");
    const Trajectory field = m.field_mean(net.G);
    emit_mean_rows(out, "field_mean", grid,
                   Eigen::Map<const Eigen::VectorXd>(field.data(), D), nullptr);
    out.note("field_mean",
             "radiated-field mean: the propagator applied to the current mean");
}

void run_detect(const ParsedScenario& sc, Outputs& out) {
    const TimeGrid grid = *sc.grid;
    if (grid.n_modes != 2) fail("grid.n_modes", "detect experiment needs 2 modes");
    if (sc.n_reps < 2) fail("n_reps", "detect needs at least 2 replications");
    const std::vector<NamedDevice> devices = parse_devices(sc, grid);
    if (devices.size() != 2)
        fail("devices", "detect experiment needs a source and a detector");
    auto source = std::dynamic_pointer_cast<const GaussianDevice>(devices[0].device);
    if (!source) fail("devices[0]", "source must be a gaussian device");

    const json& p = params_of(sc);
    const TimeGrid single(grid.t0, grid.dt, grid.n_steps, 1);
    const CausalKernel g_in =
        retarded_single_mode(single, ModeSpec(num_or(p, "omega_in", 1.0)));
    const CausalKernel g_out =
        retarded_single_mode(single, ModeSpec(num_or(p, "omega_out", 0.0)));

    std::optional<CascadeSpec> spec;
    try {
        spec.emplace(source, devices[1].device, g_in, g_out);
    } catch (const std::invalid_argument& e) {
        fail("devices", e.what());
    }
    const CascadeResult res = run_cascade(*spec, sc.n_reps, sc.seed);

    for (int n = 0; n < grid.n_steps; ++n)
        out.row({"photocurrent_mean", n, spec->output_mode, {}, {},
                 res.stats.mean(n, 0),
                 res.stats.se_mean[static_cast<std::size_t>(n)]});
    out.note("photocurrent_mean", "per-step mean photocurrent in the output mode");
    out.row({"total_charge_mean", {}, {}, {}, {}, res.mean_total_charge,
             res.se_total_charge});
    out.note("total_charge_mean", "mean charge collected over the window");
    out.row({"count_mean", {}, {}, {}, {}, res.count_mean, {}});
    out.note("count_mean", "mean photocount over the window");
    out.row({"count_var", {}, {}, {}, {}, res.count_var, {}});
    out.note("count_var", "photocount variance over the window");
    if (res.count_mean > 0.0) {
        out.row({"fano", {}, {}, {}, {}, res.count_var / res.count_mean, {}});
        out.note("fano", "photocount variance over mean");
    }

    const MomentReport detected = detected_field_report(*spec, sc.n_reps, sc.seed);
    for (int n = 0; n < grid.n_steps; ++n)
        out.row({"detected_field_mean", n, spec->input_mode, {}, {},
                 detected.mean(n, 0), detected.se_mean[static_cast<std::size_t>(n)]});
    out.note("detected_field_mean",
             "mean detected field from the solitary source model");
}

void run_audit(const ParsedScenario& sc, Outputs& out) {
    const TimeGrid grid = *sc.grid;
    const std::vector<NamedDevice> devices = parse_devices(sc, grid);
    const NetworkSpec net = build_network(sc, grid, devices);
    const double delta = num_or(params_of(sc), "delta", 0.5);

    out.is_audit = true;
    int failures = 0, checks = 0;
    for (int m = 0; m < grid.n_steps; ++m) {
        const bool pass = causality_audit(net, m, delta);
        out.verdicts.push_back({"network_causality", m, pass});
        ++checks;
        if (!pass) ++failures;
    }
    const Trajectory probe = Trajectory::constant(grid, 0.25);
    for (const auto& d : devices)
        for (int m = 0; m < grid.n_steps; ++m) {
            const bool pass = causality_audit(*d.device, probe, m, sc.seed, 0, delta);
            out.verdicts.push_back({"device_causality." + d.name, m, pass});
            ++checks;
            if (!pass) ++failures;
        }
    out.audit_failed = failures > 0;
    out.row({"audit_checks", {}, {}, {}, {}, static_cast<double>(checks), {}});
    out.note("audit_checks", "number of causality checks run");
    out.row({"audit_failures", {}, {}, {}, {}, static_cast<double>(failures), {}});
    out.note("audit_failures", "number of causality checks that failed");
}

std::vector<AffineGaussianSpec> gaussian_specs_of(const std::vector<NamedDevice>& devices,
                                                  const std::string& field) {
    std::vector<AffineGaussianSpec> specs;
    for (const auto& d : devices) {
        auto g = std::dynamic_pointer_cast<const GaussianDevice>(d.device);
        if (!g) fail(field, "all devices must be gaussian for this experiment");
        specs.push_back(AffineGaussianSpec::from_device(*g));
    }
    return specs;
}

void run_susceptibility(const ParsedScenario& sc, Outputs& out, int threads) {
    const TimeGrid grid = *sc.grid;
    const std::vector<NamedDevice> devices = parse_devices(sc, grid);
    const json& p = params_of(sc);
    const std::string engine =
        p.contains("engine") ? str(p, "engine") : std::string("gaussian");

    Eigen::MatrixXd value;
    if (engine == "gaussian") {
        const auto specs = gaussian_specs_of(devices, "devices");
        const CausalKernel G = parse_propagator(sc, grid);
        const auto joint = gaussian_compose(specs, G);
        value = marginal_total(joint).response / grid.dt;
    } else if (engine == "mc") {
        const NetworkSpec net = build_network(sc, grid, devices);
        auto mean_of = [&](const Trajectory& a_e) {
            NetworkSpec probe = net;
            probe.a_e = a_e;
            return simulate_network_moments(probe, threads).total_mean();
        };
        const SusceptibilityReport rep = susceptibility_first_order(
            mean_of, net.a_e, num_or(p, "h_scale", 1e-4), true);
        value = rep.value;
        out.row({"richardson_disagreement", {}, {}, {}, {},
                 rep.richardson_disagreement, {}});
        out.note("richardson_disagreement",
                 "difference between h and h/2 central differences");
    } else {
        fail("params.engine", "must be 'gaussian' or 'mc'");
    }
    emit_cov_rows(out, "susceptibility", grid, value);
    out.note("susceptibility",
             "first response of the mean current to the external field");
}

void run_oracle_compare(const ParsedScenario& sc, Outputs& out, int threads) {
    const TimeGrid grid = *sc.grid;
    if (sc.n_reps < 2) fail("n_reps", "oracle-compare needs at least 2 replications");
    const std::vector<NamedDevice> devices = parse_devices(sc, grid);
    const auto specs = gaussian_specs_of(devices, "devices");
    const NetworkSpec net = build_network(sc, grid, devices);
    const json& p = params_of(sc);
    const double mean_limit = num_or(p, "mean_se_limit", 4.0);
    const double cov_limit = num_or(p, "cov_se_limit", 5.0);

    const NetworkMoments mc = simulate_network_moments(net, threads);
    const JointGaussianSpec joint = gaussian_compose(specs, net.G);
    Eigen::VectorXd oracle_mean(joint.mu0.size());
    const Eigen::Map<const Eigen::VectorXd> a_e(net.a_e.data(), grid.size());
    for (int k = 0; k < joint.n_devices; ++k)
        oracle_mean.segment(k * grid.size(), grid.size()) =
            joint.mu0.segment(k * grid.size(), grid.size()) +
            joint.response.middleRows(k * grid.size(), grid.size()) * a_e;

    double max_mean_z = 0.0, max_cov_z = 0.0;
    const int R = static_cast<int>(joint.mu0.size());
    for (int i = 0; i < R; ++i) {
        const double se = mc.mean_standard_error(i);
        if (se > 0.0)
            max_mean_z = std::max(max_mean_z, std::abs(mc.mean(i) - oracle_mean(i)) / se);
    }
    for (int i = 0; i < R; ++i)
        for (int j = 0; j <= i; ++j) {
            const double v = mc.cov(i, i) * mc.cov(j, j) + mc.cov(i, j) * mc.cov(i, j);
            const double se = std::sqrt(std::max(0.0, v) /
                                        static_cast<double>(mc.n_reps - 1));
            if (se > 0.0)
                max_cov_z =
                    std::max(max_cov_z, std::abs(mc.cov(i, j) - joint.cov(i, j)) / se);
        }

    out.is_audit = true;
    out.row({"max_mean_z", {}, {}, {}, {}, max_mean_z, {}});
    out.note("max_mean_z", "largest mean deviation from the closed form, in SE units");
    out.row({"max_cov_z", {}, {}, {}, {}, max_cov_z, {}});
    out.note("max_cov_z",
             "largest covariance deviation from the closed form, in SE units");
    out.verdicts.push_back({"mean_within_limit", {}, max_mean_z < mean_limit});
    out.verdicts.push_back({"cov_within_limit", {}, max_cov_z < cov_limit});
    out.audit_failed = !(max_mean_z < mean_limit && max_cov_z < cov_limit);

    const int D = grid.size();
    for (std::size_t k = 0; k < devices.size(); ++k) {
        emit_mean_rows(out, "mean_mc." + devices[k].name, grid,
                       mc.device_mean(static_cast<int>(k)), nullptr);
        out.note("mean_mc." + devices[k].name, "Monte Carlo device mean");
        emit_mean_rows(out, "mean_oracle." + devices[k].name, grid,
                       oracle_mean.segment(static_cast<int>(k) * D, D), nullptr);
        out.note("mean_oracle." + devices[k].name, "closed-form device mean");
    }
}

void run_timenormal(const ParsedScenario& sc, Outputs& out, int threads) {
    const TimeGrid grid = *sc.grid;
    if (grid.n_modes != 1) fail("grid.n_modes", "timenormal experiment is single-mode");
    const json& p = params_of(sc);
    const ModeSpec mode(num_or(p, "omega", 1.0), num_or(p, "hbar", 1.0));
    const int n_max = static_cast<int>(p.contains("n_max") ? integer(p, "n_max") : 20);
    const std::string state = p.contains("state") ? str(p, "state") : "vacuum";

    std::optional<FockOracle> oracle;
    try {
        if (state == "vacuum")
            oracle.emplace(FockOracle::vacuum(mode, n_max));
        else if (state == "coherent")
            oracle.emplace(FockOracle::coherent(
                mode, n_max,
                std::complex<double>(num_or(p, "alpha_re", 1.0),
                                     num_or(p, "alpha_im", 0.0))));
        else if (state == "thermal")
            oracle.emplace(FockOracle::thermal(mode, n_max, num(p, "nbar")));
        else
            fail("params.state", "must be vacuum, coherent or thermal");
    } catch (const std::invalid_argument& e) {
        fail("params", e.what());
    }

    for (int n = 0; n < grid.n_steps; ++n)
        for (int m = 0; m < grid.n_steps; ++m)
            out.row({"tn_second_moment", n, 0, m, 0,
                     time_normal_second_moment(*oracle, grid.time(n), grid.time(m)),
                     {}});
    out.note("tn_second_moment",
             "time-normal second moment from the truncated boson algebra");

    const auto samples = static_cast<std::uint64_t>(
        p.contains("classical_samples") ? integer(p, "classical_samples") : 100000);
    const PFunctionalReport rep =
        pfunctional_match(*oracle, grid, samples, sc.seed, threads);
    out.row({"classical_max_first_deviation", {}, {}, {}, {}, rep.max_first_deviation, {}});
    out.note("classical_max_first_deviation",
             "largest first-moment gap to the classical counterpart field");
    out.row({"classical_max_second_deviation", {}, {}, {}, {},
             rep.max_second_deviation, {}});
    out.note("classical_max_second_deviation",
             "largest second-moment gap to the classical counterpart field");
    out.row({"classical_max_second_z", {}, {}, {}, {}, rep.max_second_z, {}});
    out.note("classical_max_second_z", "second-moment gap in standard-error units");
}

// --- output files --------------------------------------------------------

void write_results_csv(const fs::path& path, const std::string& experiment,
                       const std::vector<Row>& rows) {
    std::ofstream f(path, std::ios::binary); // LF line endings everywhere
    f << "experiment,quantity,step,mode,step2,mode2,value,std_err\n";
    auto cell = [](const std::optional<int>& v) {
        return v ? std::to_string(*v) : std::string();
    };
    for (const auto& r : rows) {
        f << experiment << ',' << r.quantity << ',' << cell(r.step) << ','
          << cell(r.mode) << ',' << cell(r.step2) << ',' << cell(r.mode2) << ','
          << format_double(r.value) << ','
          << (r.std_err ? format_double(*r.std_err) : std::string()) << '\n';
    }
}

void write_verdicts_csv(const fs::path& path, const std::string& experiment,
                        const std::vector<Verdict>& verdicts) {
    std::ofstream f(path, std::ios::binary);
    f << "experiment,check,step,pass\n";
    for (const auto& v : verdicts)
        f << experiment << ',' << v.check << ','
          << (v.step ? std::to_string(*v.step) : std::string()) << ','
          << (v.pass ? "true" : "false") << '\n';
}

void write_meta_json(const fs::path& path, const ParsedScenario& sc,
                     const Outputs& out, int threads, double wall_time_s) {
    json meta;
    meta["schema_version"] = kScenarioSchemaVersion;
    meta["library_version"] = kLibraryVersion;
    meta["experiment"] = sc.experiment;
    meta["seed"] = sc.seed;
    meta["n_reps"] = sc.n_reps;
    meta["threads"] = threads;
    if (sc.grid)
        meta["grid"] = {{"t0", sc.grid->t0},
                        {"dt", sc.grid->dt},
                        {"n_steps", sc.grid->n_steps},
                        {"n_modes", sc.grid->n_modes}};
    meta["wall_time_s"] = wall_time_s;
    json manifest = json::array();
    for (const auto& m : out.manifest)
        manifest.push_back({{"quantity", m.quantity}, {"reference", m.reference}});
    meta["experiment_manifest"] = manifest;
    std::ofstream f(path, std::ios::binary);
    f << meta.dump(2) << '\n';
}

ParsedScenario parse_scenario(const std::string& scenario_path) {
    const fs::path path(scenario_path);
    ParsedScenario sc;
    sc.base_dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
    sc.root = load_json_file(path, "scenario");
    if (!sc.root.is_object()) fail("scenario", "top level must be an object");

    if (sc.root.contains("schema_version") &&
        integer(sc.root, "schema_version") != kScenarioSchemaVersion)
        fail("schema_version", "unsupported schema version");

    sc.experiment = str(sc.root, "experiment");
    const auto known = list_experiments();
    if (std::find(known.begin(), known.end(), sc.experiment) == known.end())
        fail("experiment", "unknown experiment '" + sc.experiment + "'");

    const bool needs_grid = sc.experiment != "appendix-a";
    if (needs_grid || sc.root.contains("grid")) sc.grid = parse_grid(sc.root);

    if (sc.root.contains("n_reps")) {
        const auto reps = integer(sc.root, "n_reps");
        if (reps < 1) fail("n_reps", "must be >= 1");
        sc.n_reps = static_cast<std::uint64_t>(reps);
    }
    if (sc.root.contains("seed"))
        sc.seed = static_cast<std::uint64_t>(integer(sc.root, "seed"));
    return sc;
}

Outputs run_parsed(const ParsedScenario& sc, int threads) {
    Outputs out;
    if (sc.experiment == "appendix-a")
        run_appendix_a(sc, out);
    else if (sc.experiment == "dress")
        run_mc_experiment(sc, out, threads, false);
    else if (sc.experiment == "compose")
        run_mc_experiment(sc, out, threads, true);
    else if (sc.experiment == "detect")
        run_detect(sc, out);
    else if (sc.experiment == "audit-causality")
        run_audit(sc, out);
    else if (sc.experiment == "susceptibility")
        run_susceptibility(sc, out, threads);
    else if (sc.experiment == "oracle-compare")
        run_oracle_compare(sc, out, threads);
    else if (sc.experiment == "timenormal")
        run_timenormal(sc, out, threads);
    return out;
}

} // namespace

std::vector<std::string> list_experiments() {
    return {"dress",         "compose",        "detect",
            "audit-causality", "susceptibility", "oracle-compare",
            "appendix-a",    "timenormal"};
}

int validate_scenario(const std::string& scenario_path, std::ostream& log) {
    try {
        const ParsedScenario sc = parse_scenario(scenario_path);
        // Exercise the full construction path without running replications.
        if (sc.grid && sc.root.contains("devices"))
            parse_devices(sc, *sc.grid);
        if (sc.grid && sc.root.contains("propagator"))
            parse_propagator(sc, *sc.grid);
        if (sc.grid && sc.root.contains("a_e")) parse_a_e(sc, *sc.grid);
        log << "scenario ok: " << sc.experiment << "\n";
        return kExitOk;
    } catch (const ScenarioError& e) {
        log << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        log << "validation error: " << e.what() << "\n";
        return kExitValidation;
    }
}

int run_scenario(const std::string& scenario_path, const std::string& out_dir,
                 const RunOptions& options, std::ostream& log) {
    ParsedScenario sc;
    try {
        sc = parse_scenario(scenario_path);
        if (options.reps_override) sc.n_reps = *options.reps_override;
        if (options.seed_override) sc.seed = *options.seed_override;
        if (sc.n_reps < 1) fail("n_reps", "must be >= 1");
    } catch (const std::exception& e) {
        log << "validation error: " << e.what() << "\n";
        return kExitValidation;
    }

    const int threads = options.threads > 0 ? options.threads : omp_get_max_threads();
    Outputs out;
    const double t_begin = omp_get_wtime();
    try {
        out = run_parsed(sc, threads);
    } catch (const ScenarioError& e) {
        log << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    const double wall = omp_get_wtime() - t_begin;

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    const fs::path dir(out_dir);
    {
        std::ofstream probe(dir / "results.csv", std::ios::binary);
        if (!probe) {
            log << "validation error: output directory '" << out_dir
                << "' is not writable\n";
            return kExitValidation;
        }
    }
    write_results_csv(dir / "results.csv", sc.experiment, out.rows);
    write_meta_json(dir / "meta.json", sc, out, threads, wall);
    if (out.is_audit) write_verdicts_csv(dir / "verdicts.csv", sc.experiment, out.verdicts);

    log << "wrote " << (dir / "results.csv").string() << " (" << out.rows.size()
        << " rows)\n";
    if (out.is_audit) {
        log << "wrote " << (dir / "verdicts.csv").string() << "\n";
        if (out.audit_failed) {
            log << "audit failed\n";
            return kExitAuditFailure;
        }
    }
    return kExitOk;
}

} // namespace mesoed
