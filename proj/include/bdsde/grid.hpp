#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "bdsde/errors.hpp"

namespace bdsde {

/// Time instants t_0 < t_1 < ... < t_N. Steps are the N intervals.
class TimeGrid {
public:
    TimeGrid() = default;
    explicit TimeGrid(std::vector<double> instants) : t_(std::move(instants)) {
        if (t_.size() < 2) throw InvalidArgument("time grid needs at least two instants");
        for (std::size_t k = 0; k + 1 < t_.size(); ++k)
            if (!(t_[k + 1] >= t_[k]) || !std::isfinite(t_[k]))
                throw InvalidArgument("time grid must be non-decreasing and finite");
    }

    static TimeGrid uniform(double t0, double t1, std::size_t n_steps) {
        if (n_steps == 0 || !(t1 > t0)) throw InvalidArgument("bad uniform grid spec");
        std::vector<double> t(n_steps + 1);
        for (std::size_t k = 0; k <= n_steps; ++k)
            t[k] = t0 + (t1 - t0) * static_cast<double>(k) / static_cast<double>(n_steps);
        t.back() = t1;
        return TimeGrid(std::move(t));
    }

    std::size_t steps() const { return t_.size() - 1; }
    std::size_t size() const { return t_.size(); }
    double operator[](std::size_t k) const { return t_[k]; }
    double dt(std::size_t k) const { return t_[k + 1] - t_[k]; }
    double front() const { return t_.front(); }
    double back() const { return t_.back(); }
    const std::vector<double>& instants() const { return t_; }

    bool operator==(const TimeGrid& o) const { return t_ == o.t_; }

    /// Index of an instant equal to `time` up to `tol`, or throws.
    std::size_t index_of(double time, double tol = 1e-9) const {
        for (std::size_t k = 0; k < t_.size(); ++k)
            if (std::abs(t_[k] - time) <= tol) return k;
        throw InvalidArgument("instant not on grid");
    }

private:
    std::vector<double> t_;
};

/// Grid of s -> t_{drop+i} re-anchored at the original start instant.
inline TimeGrid grid_dropped_front(const TimeGrid& g, std::size_t drop) {
    if (drop >= g.size()) throw InvalidArgument("drop exceeds grid");
    const auto& t = g.instants();
    std::vector<double> nt(t.begin() + static_cast<std::ptrdiff_t>(drop), t.end());
    const double offset = nt.front() - t.front();
    for (double& x : nt) x -= offset;
    return TimeGrid(std::move(nt));
}

/// Grid of the time reversal about index `anchor`: s_i = t_a - t_{a-i}.
inline TimeGrid grid_reversed_about(const TimeGrid& g, std::size_t anchor) {
    if (anchor == 0 || anchor > g.steps()) throw InvalidArgument("bad reversal anchor");
    const auto& t = g.instants();
    std::vector<double> nt(anchor + 1);
    for (std::size_t i = 0; i <= anchor; ++i) nt[i] = t[anchor] - t[anchor - i];
    return TimeGrid(std::move(nt));
}

} // namespace bdsde
