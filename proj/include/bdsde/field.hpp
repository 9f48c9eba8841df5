#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "bdsde/grid.hpp"
#include "bdsde/kernels.hpp"

namespace bdsde {

struct FieldSamplingOptions {
    double eps_dedup = 1e-12;
    std::vector<double> jitter_ladder = {0.0, 1e-12, 1e-10, 1e-8};
    double eps_jitter_max = 1e-8;
};

/// One sampled path of the martingale field B(t,x): per-step Gaussian
/// increment vectors, jointly drawn at the declared evaluation points of
/// each step. Steps are independent; within step k the covariance is
/// q(t_k, x, y) * dt_k. Immutable once built and safe to share between
/// concurrent readers.
///
/// Spatially constant kernels use an exact rank-one representation: one
/// scalar per step, valid at every point, so no point sets are stored and
/// any query point is implicitly declared.
class FieldRealization {
public:
    FieldRealization() = default;

    const TimeGrid& grid() const { return grid_; }
    std::size_t steps() const { return grid_.steps(); }
    std::size_t dim() const { return dim_; }
    std::uint64_t seed() const { return seed_; }
    bool spatially_constant() const { return spatially_constant_; }
    /// Content hash (kernel, grid, seed, increments); survives the binary
    /// round-trip, distinguishes shifted/reversed views.
    std::uint64_t realization_id() const { return realization_id_; }
    const nlohmann::json& kernel_spec() const;

    std::size_t point_count(std::size_t step) const;
    /// The stored increment at a declared point; pure lookup. Throws
    /// MissingPointError when x was not declared for that step.
    double increment(std::size_t step, std::span<const double> x) const;
    double increment1(std::size_t step, double x) const {
        return increment(step, std::span<const double>(&x, 1));
    }
    /// B(t_upto, x) - B(t_0, x): telescoped sum of the first `upto` steps.
    double cumulative(std::size_t upto, std::span<const double> x) const;
    double cumulative1(std::size_t upto, double x) const {
        return cumulative(upto, std::span<const double>(&x, 1));
    }

    /// Noise shift by r = `drop` grid steps: s -> B(s+r,.) - B(r,.).
    /// Increments are re-indexed, never redrawn.
    FieldRealization shifted(std::size_t drop) const;
    /// Time reversal about grid index `anchor`: B(s,.) = B~(t_a - s,.) - B~(t_a,.).
    FieldRealization reversed(std::size_t anchor) const;
    /// First n_steps steps (a shorter horizon over the same draws).
    FieldRealization prefix(std::size_t n_steps) const;
    /// Steps before `split` from this realization, steps from `split` on
    /// from `other` (same grid). Used by measurability experiments that
    /// resample the future only.
    FieldRealization spliced(const FieldRealization& other, std::size_t split) const;
    /// Conditional bisection in time: each parent step splits into two
    /// halves that sum exactly to the parent increment, the refinement
    /// noise drawn from the conditional law N(parent/2, Q/4). Both halves
    /// inherit the parent's declared points. Coupled-refinement
    /// convergence tests rely on this.
    FieldRealization refine_bisect(const CovarianceKernel& kernel, std::uint64_t refine_seed,
                                   const FieldSamplingOptions& opts = {}) const;

    void serialize(std::ostream& os) const;
    static FieldRealization deserialize(std::istream& is);
    void write_file(const std::string& path) const;
    static FieldRealization read_file(const std::string& path);

    friend FieldRealization sample_increments(const CovarianceKernel&, const TimeGrid&, std::size_t,
                                              const std::vector<std::vector<double>>&,
                                              std::uint64_t, const FieldSamplingOptions&);

private:
    struct Step {
        std::vector<double> points;        // flattened, n * dim
        std::vector<double> values;        // n entries (1 when constant mode)
        std::vector<std::uint32_t> order;  // lexicographic point order for lookup
    };

    TimeGrid grid_;
    std::size_t dim_ = 1;
    std::uint64_t seed_ = 0;
    bool spatially_constant_ = false;
    std::vector<Step> steps_;
    std::shared_ptr<nlohmann::json> kernel_spec_;
    std::uint64_t realization_id_ = 0;

    void rebuild_orders();
    void compute_id();
};

/// Jointly draws N(0, Q_k) increments over each step's declared point set
/// via Cholesky with diagonal-jitter escalation; Q_k(x,y) = q(t_k,x,y)*dt_k
/// (left-endpoint rule). Identical (kernel, grid, points, seed) reproduce
/// bit-identical realizations. Point sets are flattened with stride `dim`
/// and are ignored for spatially constant kernels.
FieldRealization sample_increments(const CovarianceKernel& kernel, const TimeGrid& grid,
                                   std::size_t dim,
                                   const std::vector<std::vector<double>>& point_sets,
                                   std::uint64_t seed, const FieldSamplingOptions& opts = {});

} // namespace bdsde
