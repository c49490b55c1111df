#include "mesoed/time_grid.hpp"

#include <cmath>
#include <stdexcept>

namespace mesoed {

TimeGrid::TimeGrid(double t0_, double dt_, int n_steps_, int n_modes_)
    : t0(t0_), dt(dt_), n_steps(n_steps_), n_modes(n_modes_) {
    if (!(dt > 0.0)) throw std::invalid_argument("TimeGrid: dt must be > 0");
    if (n_steps < 1) throw std::invalid_argument("TimeGrid: n_steps must be >= 1");
    if (n_modes < 1) throw std::invalid_argument("TimeGrid: n_modes must be >= 1");
    if (!std::isfinite(t0) || !std::isfinite(dt))
        throw std::invalid_argument("TimeGrid: t0 and dt must be finite");
}

Trajectory::Trajectory(const TimeGrid& grid)
    : grid_(grid), v_(static_cast<std::size_t>(grid.size()), 0.0) {}

Trajectory::Trajectory(const TimeGrid& grid, std::vector<double> values)
    : grid_(grid), v_(std::move(values)) {
    if (v_.size() != static_cast<std::size_t>(grid_.size()))
        throw std::invalid_argument("Trajectory: values size does not match grid");
    if (!all_finite())
        throw std::invalid_argument("Trajectory: values must be finite");
}

Trajectory Trajectory::constant(const TimeGrid& grid, double value) {
    Trajectory t(grid);
    for (auto& x : t.v_) x = value;
    return t;
}

Trajectory Trajectory::from_fn(const TimeGrid& grid,
                               const std::function<double(int, int)>& fn) {
    Trajectory t(grid);
    for (int n = 0; n < grid.n_steps; ++n)
        for (int k = 0; k < grid.n_modes; ++k)
            t(n, k) = fn(n, k);
    if (!t.all_finite())
        throw std::invalid_argument("Trajectory: generator produced non-finite value");
    return t;
}

bool Trajectory::all_finite() const {
    for (double x : v_)
        if (!std::isfinite(x)) return false;
    return true;
}

CausalKernel::CausalKernel(const TimeGrid& grid, KernelStrictness strictness)
    : grid_(grid), strictness_(strictness),
      v_(static_cast<std::size_t>(grid.size()) * grid.size(), 0.0) {}

CausalKernel::CausalKernel(const TimeGrid& grid, KernelStrictness strictness,
                           const std::function<double(int, int, int, int)>& fn)
    : CausalKernel(grid, strictness) {
    const int D = grid_.size();
    for (int n = 0; n < grid_.n_steps; ++n) {
        const int m_end = is_strict() ? n : n + 1;
        for (int k = 0; k < grid_.n_modes; ++k) {
            double* r = v_.data() + static_cast<std::size_t>(grid_.flat(n, k)) * D;
            for (int m = 0; m < m_end; ++m)
                for (int k2 = 0; k2 < grid_.n_modes; ++k2)
                    r[grid_.flat(m, k2)] = fn(n, k, m, k2);
        }
    }
}

CausalKernel::CausalKernel(const TimeGrid& grid, KernelStrictness strictness,
                           std::vector<double> values, bool validate)
    : grid_(grid), strictness_(strictness), v_(std::move(values)) {
    const std::size_t D = static_cast<std::size_t>(grid_.size());
    if (v_.size() != D * D)
        throw std::invalid_argument("CausalKernel: values size does not match grid");
    if (!validate) return;
    for (int n = 0; n < grid_.n_steps; ++n) {
        const int m_begin = is_strict() ? n : n + 1;
        for (int k = 0; k < grid_.n_modes; ++k) {
            const double* r = v_.data() + static_cast<std::size_t>(grid_.flat(n, k)) * D;
            for (int m = m_begin; m < grid_.n_steps; ++m)
                for (int k2 = 0; k2 < grid_.n_modes; ++k2)
                    if (r[grid_.flat(m, k2)] != 0.0)
                        throw std::invalid_argument(
                            "CausalKernel: nonzero entry violates causality at rows " +
                            std::to_string(n) + " <- " + std::to_string(m));
        }
    }
}

CausalKernel CausalKernel::from_dense(const TimeGrid& grid, KernelStrictness s,
                                      std::vector<double> values) {
    return CausalKernel(grid, s, std::move(values), true);
}

CausalKernel CausalKernel::from_dense_unchecked(const TimeGrid& grid,
                                                KernelStrictness s,
                                                std::vector<double> values) {
    return CausalKernel(grid, s, std::move(values), false);
}

void require_same_grid(const TimeGrid& a, const TimeGrid& b, const char* where) {
    if (!(a == b))
        throw std::invalid_argument(std::string(where) + ": grid mismatch");
}

double inner(const Trajectory& f, const Trajectory& g) {
    require_same_grid(f.grid(), g.grid(), "inner");
    const auto& fv = f.values();
    const auto& gv = g.values();
    double acc = 0.0;
    for (std::size_t i = 0; i < fv.size(); ++i) acc += fv[i] * gv[i];
    return f.grid().dt * acc;
}

void apply_kernel_row(const CausalKernel& K, const Trajectory& g, int step,
                      double* out_row) {
    const TimeGrid& grid = K.grid();
    const int nm = grid.n_modes;
    const int cols = grid.size();
    const double* gv = g.values().data();
    for (int k = 0; k < nm; ++k) {
        const double* r = K.row(step, k);
        double acc = 0.0;
        for (int j = 0; j < cols; ++j) acc += r[j] * gv[j];
        out_row[k] = grid.dt * acc;
    }
}

Trajectory apply_kernel(const CausalKernel& K, const Trajectory& g) {
    require_same_grid(K.grid(), g.grid(), "apply_kernel");
    Trajectory out(K.grid());
    for (int n = 0; n < K.grid().n_steps; ++n)
        apply_kernel_row(K, g, n, out.row(n));
    return out;
}

double bilinear(const Trajectory& f, const CausalKernel& K, const Trajectory& g) {
    require_same_grid(f.grid(), K.grid(), "bilinear");
    return inner(f, apply_kernel(K, g));
}

} // namespace mesoed
