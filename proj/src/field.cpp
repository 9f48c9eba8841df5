#include "bdsde/field.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "bdsde/binio.hpp"
#include "bdsde/rng.hpp"

namespace bdsde {

namespace {

inline bool point_less(const double* a, const double* b, std::size_t d) {
    for (std::size_t i = 0; i < d; ++i) {
        if (a[i] < b[i]) return true;
        if (a[i] > b[i]) return false;
    }
    return false;
}

inline bool point_eq(const double* a, const double* b, std::size_t d) {
    for (std::size_t i = 0; i < d; ++i)
        if (a[i] != b[i]) return false;
    return true;
}

inline double point_dist_inf(const double* a, const double* b, std::size_t d) {
    double m = 0.0;
    for (std::size_t i = 0; i < d; ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

constexpr char kMagic[9] = "BDFIELD1";

/// Joint zero-mean Gaussian draw with covariance `var_scale * q(s,xi,xj)`
/// over deduplicated points; shared by the sampler and the bisection.
void draw_joint(const CovarianceKernel& kernel, double s, double var_scale,
                std::span<const double> points, std::size_t d, Rng& rng,
                const FieldSamplingOptions& opts, std::size_t step_for_error,
                std::span<double> out) {
    const std::size_t n = points.size() / d;
    if (var_scale <= 0.0) {
        std::fill(out.begin(), out.end(), 0.0);
        return;
    }
    const double* base = points.data();
    std::vector<std::uint32_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
    std::sort(order.begin(), order.end(), [base, d](std::uint32_t a, std::uint32_t b) {
        return point_less(base + a * d, base + b * d, d);
    });
    std::vector<std::uint32_t> rep_of(n);
    std::vector<std::uint32_t> reps;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t idx = order[i];
        if (!reps.empty() && point_dist_inf(base + idx * d, base + reps.back() * d, d) <= opts.eps_dedup) {
            rep_of[idx] = reps.back();
        } else {
            reps.push_back(idx);
            rep_of[idx] = idx;
        }
    }

    const std::size_t m = reps.size();
    Eigen::MatrixXd gram(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        std::span<const double> xi(base + reps[i] * d, d);
        for (std::size_t j = 0; j <= i; ++j) {
            std::span<const double> xj(base + reps[j] * d, d);
            const double q = kernel.eval(s, xi, xj) * var_scale;
            gram(i, j) = q;
            gram(j, i) = q;
        }
    }

    const double scale = std::max(gram.diagonal().maxCoeff(), 1e-300);
    Eigen::LLT<Eigen::MatrixXd> llt;
    bool ok = false;
    for (double jitter : opts.jitter_ladder) {
        if (jitter > opts.eps_jitter_max) break;
        Eigen::MatrixXd g = gram;
        if (jitter > 0.0) g.diagonal().array() += jitter * scale;
        llt.compute(g);
        if (llt.info() == Eigen::Success) {
            ok = true;
            break;
        }
    }
    if (!ok) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
        std::ostringstream oss;
        oss << "field increment factorization failed at step " << step_for_error << " (n=" << m
            << ", min eig=" << es.eigenvalues().minCoeff()
            << ", max eig=" << es.eigenvalues().maxCoeff() << ") after max jitter "
            << opts.eps_jitter_max;
        throw NumericalError(oss.str());
    }

    Eigen::VectorXd z(m);
    for (std::size_t i = 0; i < m; ++i) z(i) = rng.normal();
    Eigen::VectorXd v = llt.matrixL() * z;
    std::vector<double> rep_value(n, 0.0);
    for (std::size_t i = 0; i < m; ++i) rep_value[reps[i]] = v(i);
    for (std::size_t i = 0; i < n; ++i) out[i] = rep_value[rep_of[i]];
}

} // namespace

const nlohmann::json& FieldRealization::kernel_spec() const { return *kernel_spec_; }

std::size_t FieldRealization::point_count(std::size_t step) const {
    if (spatially_constant_) return 0;
    return steps_.at(step).points.size() / dim_;
}

void FieldRealization::rebuild_orders() {
    if (spatially_constant_) return;
    for (auto& st : steps_) {
        const std::size_t n = st.points.size() / dim_;
        st.order.resize(n);
        for (std::size_t i = 0; i < n; ++i) st.order[i] = static_cast<std::uint32_t>(i);
        const double* base = st.points.data();
        const std::size_t d = dim_;
        std::sort(st.order.begin(), st.order.end(), [base, d](std::uint32_t a, std::uint32_t b) {
            return point_less(base + a * d, base + b * d, d);
        });
    }
}

void FieldRealization::compute_id() {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t v) {
        h ^= v;
        h *= 0x100000001b3ULL;
    };
    const std::string ks = kernel_spec_->dump();
    for (unsigned char c : ks) mix(c);
    for (double t : grid_.instants()) mix(std::bit_cast<std::uint64_t>(t));
    mix(seed_);
    mix(dim_);
    mix(spatially_constant_ ? 1 : 0);
    for (const auto& st : steps_)
        for (double v : st.values) mix(std::bit_cast<std::uint64_t>(v));
    realization_id_ = h;
}

double FieldRealization::increment(std::size_t step, std::span<const double> x) const {
    if (step >= steps_.size()) throw InvalidArgument("step out of range");
    const Step& st = steps_[step];
    if (spatially_constant_) return st.values[0];
    if (x.size() != dim_) throw InvalidArgument("point dimension mismatch");

    const double* base = st.points.data();
    const std::size_t d = dim_;
    auto it = std::lower_bound(st.order.begin(), st.order.end(), x.data(),
                               [base, d](std::uint32_t a, const double* key) {
                                   return point_less(base + a * d, key, d);
                               });
    if (it == st.order.end() || !point_eq(base + (*it) * d, x.data(), d)) {
        std::ostringstream oss;
        oss << "(";
        for (std::size_t i = 0; i < d; ++i) oss << (i ? "," : "") << x[i];
        oss << ") not declared";
        throw MissingPointError(step, oss.str());
    }
    return st.values[*it];
}

double FieldRealization::cumulative(std::size_t upto, std::span<const double> x) const {
    if (upto > steps_.size()) throw InvalidArgument("step out of range");
    double s = 0.0;
    for (std::size_t k = 0; k < upto; ++k) s += increment(k, x);
    return s;
}

FieldRealization sample_increments(const CovarianceKernel& kernel, const TimeGrid& grid,
                                   std::size_t dim,
                                   const std::vector<std::vector<double>>& point_sets,
                                   std::uint64_t seed, const FieldSamplingOptions& opts) {
    const bool constant = kernel.spatially_constant();
    if (dim == 0) throw InvalidArgument("dim must be positive");
    if (!constant && point_sets.size() != grid.steps())
        throw InvalidArgument("need one point set per step");

    FieldRealization real;
    real.grid_ = grid;
    real.dim_ = dim;
    real.seed_ = seed;
    real.spatially_constant_ = constant;
    real.kernel_spec_ = std::make_shared<nlohmann::json>(kernel.to_json());
    real.steps_.resize(grid.steps());

    const std::vector<double> origin(dim, 0.0);
    for (std::size_t k = 0; k < grid.steps(); ++k) {
        const double dt = grid.dt(k);
        auto& st = real.steps_[k];
        Rng rng(seed, "field-step", k);

        if (constant) {
            const double q = kernel.eval(grid[k], origin, origin);
            const double var = std::max(q, 0.0) * dt;
            st.values.assign(1, var <= 0.0 ? 0.0 : std::sqrt(var) * rng.normal());
            continue;
        }

        if (point_sets[k].empty()) throw InvalidArgument("empty point set at step " + std::to_string(k));
        if (point_sets[k].size() % dim != 0)
            throw InvalidArgument("point buffer not a multiple of dim at step " + std::to_string(k));
        st.points = point_sets[k];
        st.values.assign(st.points.size() / dim, 0.0);
        draw_joint(kernel, grid[k], dt, st.points, dim, rng, opts, k, st.values);
    }

    real.rebuild_orders();
    real.compute_id();
    return real;
}

FieldRealization FieldRealization::shifted(std::size_t drop) const {
    if (drop >= steps()) throw InvalidArgument("shift exceeds grid");
    FieldRealization out;
    out.grid_ = grid_dropped_front(grid_, drop);
    out.dim_ = dim_;
    out.seed_ = seed_;
    out.spatially_constant_ = spatially_constant_;
    out.kernel_spec_ = kernel_spec_;
    out.steps_.assign(steps_.begin() + static_cast<std::ptrdiff_t>(drop), steps_.end());
    out.compute_id();
    return out;
}

FieldRealization FieldRealization::reversed(std::size_t anchor) const {
    if (anchor == 0 || anchor > steps())
        throw InvalidArgument("reversal anchor must be a grid index >= 1");
    FieldRealization out;
    out.grid_ = grid_reversed_about(grid_, anchor);
    out.dim_ = dim_;
    out.seed_ = seed_;
    out.spatially_constant_ = spatially_constant_;
    out.kernel_spec_ = kernel_spec_;
    out.steps_.resize(anchor);
    for (std::size_t k = 0; k < anchor; ++k) {
        out.steps_[k] = steps_[anchor - 1 - k];
        for (double& v : out.steps_[k].values) v = -v;
    }
    out.rebuild_orders();
    out.compute_id();
    return out;
}

FieldRealization FieldRealization::prefix(std::size_t n_steps) const {
    if (n_steps == 0 || n_steps > steps()) throw InvalidArgument("prefix length out of range");
    FieldRealization out;
    const auto& t = grid_.instants();
    out.grid_ =
        TimeGrid(std::vector<double>(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(n_steps) + 1));
    out.dim_ = dim_;
    out.seed_ = seed_;
    out.spatially_constant_ = spatially_constant_;
    out.kernel_spec_ = kernel_spec_;
    out.steps_.assign(steps_.begin(), steps_.begin() + static_cast<std::ptrdiff_t>(n_steps));
    out.compute_id();
    return out;
}

FieldRealization FieldRealization::spliced(const FieldRealization& other, std::size_t split) const {
    if (!(grid_ == other.grid_) || dim_ != other.dim_ ||
        spatially_constant_ != other.spatially_constant_)
        throw ContractError("splice requires realizations on the same grid and kernel");
    if (split > steps()) throw InvalidArgument("split point out of range");
    FieldRealization out = *this;
    for (std::size_t k = split; k < steps(); ++k) out.steps_[k] = other.steps_[k];
    out.rebuild_orders();
    out.compute_id();
    return out;
}

FieldRealization FieldRealization::refine_bisect(const CovarianceKernel& kernel,
                                                 std::uint64_t refine_seed,
                                                 const FieldSamplingOptions& opts) const {
    FieldRealization out;
    const auto& t = grid_.instants();
    std::vector<double> nt;
    nt.reserve(2 * steps() + 1);
    for (std::size_t k = 0; k < steps(); ++k) {
        nt.push_back(t[k]);
        nt.push_back(0.5 * (t[k] + t[k + 1]));
    }
    nt.push_back(t.back());
    out.grid_ = TimeGrid(std::move(nt));
    out.dim_ = dim_;
    out.seed_ = refine_seed;
    out.spatially_constant_ = spatially_constant_;
    out.kernel_spec_ = kernel_spec_;
    out.steps_.resize(2 * steps());

    const std::vector<double> origin(dim_, 0.0);
    for (std::size_t k = 0; k < steps(); ++k) {
        const Step& parent = steps_[k];
        Step& h1 = out.steps_[2 * k];
        Step& h2 = out.steps_[2 * k + 1];
        const double dt = grid_.dt(k);
        Rng rng(refine_seed, "field-bisect", k);

        if (spatially_constant_) {
            const double q = kernel.eval(t[k], origin, origin);
            const double var = std::max(q, 0.0) * dt / 4.0;
            const double xi = var <= 0.0 ? 0.0 : std::sqrt(var) * rng.normal();
            h1.values.assign(1, parent.values[0] / 2.0 + xi);
            h2.values.assign(1, parent.values[0] / 2.0 - xi);
            continue;
        }

        const std::size_t n = parent.points.size() / dim_;
        h1.points = parent.points;
        h2.points = parent.points;
        h1.values.resize(n);
        h2.values.resize(n);
        std::vector<double> xi(n, 0.0);
        draw_joint(kernel, t[k], dt / 4.0, parent.points, dim_, rng, opts, k, xi);
        for (std::size_t i = 0; i < n; ++i) {
            h1.values[i] = parent.values[i] / 2.0 + xi[i];
            h2.values[i] = parent.values[i] / 2.0 - xi[i];
        }
    }
    out.rebuild_orders();
    out.compute_id();
    return out;
}

void FieldRealization::serialize(std::ostream& os) const {
    nlohmann::json header;
    header["version"] = 1;
    header["kernel"] = *kernel_spec_;
    header["grid"] = grid_.instants();
    header["seed"] = seed_;
    header["dim"] = dim_;
    header["spatially_constant"] = spatially_constant_;
    std::vector<std::size_t> counts;
    counts.reserve(steps_.size());
    for (const auto& st : steps_)
        counts.push_back(spatially_constant_ ? 0 : st.points.size() / dim_);
    header["point_counts"] = counts;
    const std::string hs = header.dump();

    binio::write_magic(os, kMagic);
    binio::write_u64(os, hs.size());
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& st : steps_) {
        if (!spatially_constant_) binio::write_doubles(os, st.points);
        binio::write_doubles(os, st.values);
    }
}

FieldRealization FieldRealization::deserialize(std::istream& is) {
    binio::expect_magic(is, kMagic, "field realization");
    const std::uint64_t hlen = binio::read_u64(is);
    std::string hs(hlen, '\0');
    is.read(hs.data(), static_cast<std::streamsize>(hlen));
    nlohmann::json header = nlohmann::json::parse(hs);

    FieldRealization out;
    out.grid_ = TimeGrid(header.at("grid").get<std::vector<double>>());
    out.seed_ = header.at("seed").get<std::uint64_t>();
    out.dim_ = header.at("dim").get<std::size_t>();
    out.spatially_constant_ = header.at("spatially_constant").get<bool>();
    out.kernel_spec_ = std::make_shared<nlohmann::json>(header.at("kernel"));
    const auto counts = header.at("point_counts").get<std::vector<std::size_t>>();
    if (counts.size() != out.grid_.steps())
        throw InvalidArgument("corrupt container: step count mismatch");
    out.steps_.resize(counts.size());
    for (std::size_t k = 0; k < counts.size(); ++k) {
        auto& st = out.steps_[k];
        if (out.spatially_constant_) {
            st.values.resize(1);
            binio::read_doubles(is, st.values);
        } else {
            st.points.resize(counts[k] * out.dim_);
            st.values.resize(counts[k]);
            binio::read_doubles(is, st.points);
            binio::read_doubles(is, st.values);
        }
    }
    if (!is) throw InvalidArgument("corrupt container: truncated payload");
    out.rebuild_orders();
    out.compute_id();
    return out;
}

void FieldRealization::write_file(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InvalidArgument("cannot open " + path);
    serialize(os);
}

FieldRealization FieldRealization::read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InvalidArgument("cannot open " + path);
    return deserialize(is);
}

} // namespace bdsde
