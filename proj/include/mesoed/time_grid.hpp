#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace mesoed {

/// Uniform time grid with a fixed number of field/current modes.
/// Step n maps to time t0 + n*dt; all integrals are left-point sums dt*sum.
struct TimeGrid {
    double t0 = 0.0;
    double dt = 1.0;
    int n_steps = 1;
    int n_modes = 1;

    TimeGrid() = default;
    TimeGrid(double t0_, double dt_, int n_steps_, int n_modes_ = 1);

    double time(int step) const { return t0 + step * dt; }
    int size() const { return n_steps * n_modes; }
    int flat(int step, int mode) const { return step * n_modes + mode; }

    bool operator==(const TimeGrid&) const = default;
};

/// Real time series over a grid, indexed [step][mode]. Immutable by
/// convention once filled; the simulation loops fill rows in time order.
class Trajectory {
public:
    Trajectory() : Trajectory(TimeGrid{}) {}
    explicit Trajectory(const TimeGrid& grid);
    Trajectory(const TimeGrid& grid, std::vector<double> values);

    static Trajectory zeros(const TimeGrid& grid) { return Trajectory(grid); }
    static Trajectory constant(const TimeGrid& grid, double value);
    /// Build from a per-(step,mode) generator.
    static Trajectory from_fn(const TimeGrid& grid,
                              const std::function<double(int, int)>& fn);

    const TimeGrid& grid() const { return grid_; }
    double operator()(int step, int mode = 0) const {
        return v_[grid_.flat(step, mode)];
    }
    double& operator()(int step, int mode = 0) {
        return v_[grid_.flat(step, mode)];
    }
    const std::vector<double>& values() const { return v_; }
    const double* data() const { return v_.data(); }
    double* data() { return v_.data(); }
    const double* row(int step) const { return v_.data() + step * grid_.n_modes; }
    double* row(int step) { return v_.data() + step * grid_.n_modes; }

    bool all_finite() const;
    bool operator==(const Trajectory&) const = default;

private:
    TimeGrid grid_;
    std::vector<double> v_;
};

/// Whether a kernel may couple equal times. Strict kernels vanish for
/// column step >= row step (radiated fields act with at least one step of
/// delay); same-time-allowed kernels vanish for column step > row step only
/// and are used for the current's response to the local field.
enum class KernelStrictness { strict, same_time_allowed };

/// Dense causal response kernel over flattened (step, mode) indices.
/// Entries outside the allowed triangle are structurally zero.
class CausalKernel {
public:
    CausalKernel(const TimeGrid& grid, KernelStrictness strictness);
    /// Evaluate a generator only on allowed (row_step, col_step) pairs.
    CausalKernel(const TimeGrid& grid, KernelStrictness strictness,
                 const std::function<double(int, int, int, int)>& fn);
    /// Validates the causal zero pattern of a dense matrix (row-major,
    /// size() x size()); throws std::invalid_argument on a violation.
    static CausalKernel from_dense(const TimeGrid& grid,
                                   KernelStrictness strictness,
                                   std::vector<double> values);
    /// Test-fixture constructor: skips the causality validation.
    static CausalKernel from_dense_unchecked(const TimeGrid& grid,
                                             KernelStrictness strictness,
                                             std::vector<double> values);

    const TimeGrid& grid() const { return grid_; }
    KernelStrictness strictness() const { return strictness_; }
    bool is_strict() const { return strictness_ == KernelStrictness::strict; }

    double operator()(int step, int mode, int step2, int mode2) const {
        return v_[static_cast<std::size_t>(grid_.flat(step, mode)) * grid_.size() +
                  grid_.flat(step2, mode2)];
    }
    const std::vector<double>& values() const { return v_; }
    const double* row(int step, int mode) const {
        return v_.data() + static_cast<std::size_t>(grid_.flat(step, mode)) * grid_.size();
    }

private:
    CausalKernel(const TimeGrid& grid, KernelStrictness strictness,
                 std::vector<double> values, bool validate);

    TimeGrid grid_;
    KernelStrictness strictness_;
    std::vector<double> v_;
};

void require_same_grid(const TimeGrid& a, const TimeGrid& b, const char* where);

/// dt * sum over steps and modes of f*g.
double inner(const Trajectory& f, const Trajectory& g);

/// out[n] = dt * sum_m K[n][m] g[m] over flattened (step, mode) indices.
Trajectory apply_kernel(const CausalKernel& K, const Trajectory& g);

/// inner(f, apply_kernel(K, g)).
double bilinear(const Trajectory& f, const CausalKernel& K, const Trajectory& g);

/// One output row of apply_kernel. Reads the full kernel row and relies on
/// the structural zeros for causality, so a deliberately corrupted kernel is
/// detectable by the causality audits. This is the single accumulation order
/// shared by every causal time loop so that structural identities hold
/// bit-exactly.
void apply_kernel_row(const CausalKernel& K, const Trajectory& g, int step,
                      double* out_row);

} // namespace mesoed
