#include "bdsde/sde.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "bdsde/binio.hpp"
#include "bdsde/errors.hpp"
#include "bdsde/rng.hpp"
#include "bdsde/stats.hpp"

namespace bdsde {

SdeCoefficients SdeCoefficients::constant(Eigen::VectorXd b0, double s0, std::size_t dim) {
    SdeCoefficients c;
    c.family_ = CoefficientFamily::Constant;
    c.dim_ = dim;
    if (b0.size() == 0) b0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    if (static_cast<std::size_t>(b0.size()) != dim) throw InvalidArgument("b0 dimension mismatch");
    c.b0_ = std::move(b0);
    c.s0_ = s0;
    return c;
}

SdeCoefficients SdeCoefficients::linear(Eigen::MatrixXd a, Eigen::VectorXd b0, double s0) {
    SdeCoefficients c;
    c.family_ = CoefficientFamily::Linear;
    c.dim_ = static_cast<std::size_t>(a.rows());
    if (a.rows() != a.cols()) throw InvalidArgument("linear drift matrix must be square");
    if (b0.size() == 0) b0 = Eigen::VectorXd::Zero(a.rows());
    if (b0.size() != a.rows()) throw InvalidArgument("b0 dimension mismatch");
    c.a_ = std::move(a);
    c.b0_ = std::move(b0);
    c.s0_ = s0;
    return c;
}

SdeCoefficients SdeCoefficients::ou(double theta, double s0, std::size_t dim) {
    return linear(-theta * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(dim),
                                                     static_cast<Eigen::Index>(dim)),
                  {}, s0);
}

SdeCoefficients SdeCoefficients::tanh_family(Eigen::VectorXd b0, Eigen::VectorXd b1,
                                             Eigen::VectorXd s0, Eigen::VectorXd s1) {
    SdeCoefficients c;
    c.family_ = CoefficientFamily::Tanh;
    c.dim_ = static_cast<std::size_t>(b0.size());
    if (b1.size() != b0.size() || s0.size() != b0.size() || s1.size() != b0.size())
        throw InvalidArgument("tanh family parameter dimension mismatch");
    for (Eigen::Index i = 0; i < s0.size(); ++i)
        if (s0(i) - std::abs(s1(i)) < 0.0)
            throw InvalidArgument("tanh family diffusion must stay nonnegative");
    c.b0_ = std::move(b0);
    c.b1_ = std::move(b1);
    c.s0v_ = std::move(s0);
    c.s1v_ = std::move(s1);
    return c;
}

bool SdeCoefficients::bounded() const {
    switch (family_) {
        case CoefficientFamily::Constant: return true;
        case CoefficientFamily::Tanh: return true;
        case CoefficientFamily::Linear: return a_.isZero(0.0);
    }
    return false;
}

double SdeCoefficients::lipschitz_K() const {
    switch (family_) {
        case CoefficientFamily::Constant: return 0.0;
        case CoefficientFamily::Linear: return a_.norm();
        case CoefficientFamily::Tanh: {
            double k = 0.0;
            for (Eigen::Index i = 0; i < b1_.size(); ++i)
                k = std::max(k, std::abs(b1_(i)) + std::abs(s1v_(i)));
            return k;
        }
    }
    return 0.0;
}

void SdeCoefficients::drift(std::span<const double> x, std::span<double> out) const {
    switch (family_) {
        case CoefficientFamily::Constant:
            for (std::size_t i = 0; i < dim_; ++i) out[i] = b0_(static_cast<Eigen::Index>(i));
            return;
        case CoefficientFamily::Linear: {
            for (std::size_t i = 0; i < dim_; ++i) {
                double s = b0_(static_cast<Eigen::Index>(i));
                for (std::size_t j = 0; j < dim_; ++j)
                    s += a_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * x[j];
                out[i] = s;
            }
            return;
        }
        case CoefficientFamily::Tanh:
            for (std::size_t i = 0; i < dim_; ++i)
                out[i] = b0_(static_cast<Eigen::Index>(i)) +
                         b1_(static_cast<Eigen::Index>(i)) * std::tanh(x[i]);
            return;
    }
}

void SdeCoefficients::diffusion(std::span<const double> x, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    switch (family_) {
        case CoefficientFamily::Constant:
        case CoefficientFamily::Linear:
            for (std::size_t i = 0; i < dim_; ++i) out[i * dim_ + i] = s0_;
            return;
        case CoefficientFamily::Tanh:
            for (std::size_t i = 0; i < dim_; ++i)
                out[i * dim_ + i] = s0v_(static_cast<Eigen::Index>(i)) +
                                    s1v_(static_cast<Eigen::Index>(i)) * std::tanh(x[i]);
            return;
    }
}

void SdeCoefficients::drift_jacobian(std::span<const double> x, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    switch (family_) {
        case CoefficientFamily::Constant:
            return;
        case CoefficientFamily::Linear:
            for (std::size_t i = 0; i < dim_; ++i)
                for (std::size_t j = 0; j < dim_; ++j)
                    out[i * dim_ + j] = a_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            return;
        case CoefficientFamily::Tanh:
            for (std::size_t i = 0; i < dim_; ++i) {
                const double th = std::tanh(x[i]);
                out[i * dim_ + i] = b1_(static_cast<Eigen::Index>(i)) * (1.0 - th * th);
            }
            return;
    }
}

void SdeCoefficients::diffusion_col_jacobian(std::span<const double> x, std::size_t k,
                                             std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    if (family_ != CoefficientFamily::Tanh) return;
    // Column k of a diagonal sigma is sigma_kk e_k; its Jacobian has a
    // single nonzero entry (k,k).
    const double th = std::tanh(x[k]);
    out[k * dim_ + k] = s1v_(static_cast<Eigen::Index>(k)) * (1.0 - th * th);
}

std::string SdeCoefficients::name() const {
    switch (family_) {
        case CoefficientFamily::Constant: return "constant";
        case CoefficientFamily::Linear: return "linear";
        case CoefficientFamily::Tanh: return "tanh";
    }
    return "?";
}

nlohmann::json SdeCoefficients::to_json() const {
    nlohmann::json j;
    j["family"] = name();
    j["dim"] = dim_;
    auto vec = [](const Eigen::VectorXd& v) {
        return std::vector<double>(v.data(), v.data() + v.size());
    };
    switch (family_) {
        case CoefficientFamily::Constant:
            j["b0"] = vec(b0_);
            j["s0"] = s0_;
            break;
        case CoefficientFamily::Linear: {
            std::vector<double> a(a_.size());
            for (Eigen::Index i = 0; i < a_.rows(); ++i)
                for (Eigen::Index c = 0; c < a_.cols(); ++c)
                    a[static_cast<std::size_t>(i * a_.cols() + c)] = a_(i, c);
            j["a"] = a;
            j["b0"] = vec(b0_);
            j["s0"] = s0_;
            break;
        }
        case CoefficientFamily::Tanh:
            j["b0"] = vec(b0_);
            j["b1"] = vec(b1_);
            j["s0"] = vec(s0v_);
            j["s1"] = vec(s1v_);
            break;
    }
    return j;
}

SdeCoefficients SdeCoefficients::from_json(const nlohmann::json& j) {
    const std::string fam = j.at("family").get<std::string>();
    const std::size_t dim = j.at("dim").get<std::size_t>();
    auto vec = [](const nlohmann::json& a) {
        auto v = a.get<std::vector<double>>();
        return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())).eval();
    };
    if (fam == "constant") return constant(vec(j.at("b0")), j.at("s0").get<double>(), dim);
    if (fam == "linear") {
        auto a = j.at("a").get<std::vector<double>>();
        Eigen::MatrixXd m(dim, dim);
        for (std::size_t i = 0; i < dim; ++i)
            for (std::size_t c = 0; c < dim; ++c)
                m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = a[i * dim + c];
        return linear(m, vec(j.at("b0")), j.at("s0").get<double>());
    }
    if (fam == "tanh")
        return tanh_family(vec(j.at("b0")), vec(j.at("b1")), vec(j.at("s0")), vec(j.at("s1")));
    throw InvalidArgument("unknown coefficient family: " + fam);
}

StartSpec StartSpec::point(double t0, Eigen::VectorXd x0) {
    StartSpec s;
    s.kind = StartKind::Point;
    s.t0 = t0;
    s.x = std::move(x0);
    return s;
}

StartSpec StartSpec::point1(double t0, double x0) {
    Eigen::VectorXd v(1);
    v(0) = x0;
    return point(t0, std::move(v));
}

StartSpec StartSpec::spread(double t0, double lo, double hi) {
    if (!(hi > lo)) throw InvalidArgument("spread start needs hi > lo");
    StartSpec s;
    s.kind = StartKind::Spread;
    s.t0 = t0;
    s.x = Eigen::VectorXd::Zero(1);
    s.spread_lo = lo;
    s.spread_hi = hi;
    return s;
}

PathBundle simulate(const SdeCoefficients& coeffs, const StartSpec& start, const TimeGrid& grid,
                    std::size_t n_paths, std::uint64_t seed, bool with_flow) {
    if (n_paths == 0) throw InvalidArgument("need at least one path");
    const std::size_t d = coeffs.dim();
    if (start.kind == StartKind::Point && static_cast<std::size_t>(start.x.size()) != d)
        throw InvalidArgument("start dimension mismatch");
    if (start.kind == StartKind::Spread && d != 1)
        throw InvalidArgument("spread start is one-dimensional");

    PathBundle b;
    b.grid_ = grid;
    b.dim_ = d;
    b.paths_ = n_paths;
    b.seed_ = seed;
    b.start_ = start;
    const std::size_t n = grid.steps();
    b.states_.assign(n_paths * (n + 1) * d, 0.0);
    b.dw_.assign(n_paths * n * d, 0.0);
    if (with_flow) b.flow_.assign(n_paths * (n + 1) * d * d, 0.0);

    auto run_path = [&](std::size_t m) {
        Rng rng(seed, "path", m);
        double* xs = b.states_.data() + m * (n + 1) * d;
        double* dws = b.dw_.data() + m * n * d;
        double* gs = with_flow ? b.flow_.data() + m * (n + 1) * d * d : nullptr;

        if (start.kind == StartKind::Point) {
            for (std::size_t i = 0; i < d; ++i) xs[i] = start.x(static_cast<Eigen::Index>(i));
        } else {
            xs[0] = start.spread_lo + (start.spread_hi - start.spread_lo) *
                                          (static_cast<double>(m) + 0.5) /
                                          static_cast<double>(n_paths);
        }
        if (with_flow)
            for (std::size_t i = 0; i < d; ++i) gs[i * d + i] = 1.0;

        std::vector<double> drift(d), sigma(d * d), jac(d * d), g_next(d * d);
        for (std::size_t k = 0; k < n; ++k) {
            const double dt = grid.dt(k);
            const double sqdt = std::sqrt(dt);
            const double* x = xs + k * d;
            double* xn = xs + (k + 1) * d;
            double* dw = dws + k * d;
            for (std::size_t i = 0; i < d; ++i) dw[i] = sqdt * rng.normal();

            coeffs.drift({x, d}, drift);
            coeffs.diffusion({x, d}, sigma);
            for (std::size_t i = 0; i < d; ++i) {
                double s = x[i] + drift[i] * dt;
                for (std::size_t j = 0; j < d; ++j) s += sigma[i * d + j] * dw[j];
                xn[i] = s;
                if (!std::isfinite(xn[i]))
                    throw NumericalError("forward path diverged at step " + std::to_string(k) +
                                         ", path " + std::to_string(m));
            }

            if (with_flow) {
                const double* g = gs + k * d * d;
                double* gn = gs + (k + 1) * d * d;
                coeffs.drift_jacobian({x, d}, jac);
                // G_{k+1} = G_k + b'(X) G_k dt + sum_j sigma_j'(X) G_k dW^j
                for (std::size_t i = 0; i < d * d; ++i) g_next[i] = g[i];
                for (std::size_t i = 0; i < d; ++i)
                    for (std::size_t j = 0; j < d; ++j) {
                        double s = 0.0;
                        for (std::size_t l = 0; l < d; ++l) s += jac[i * d + l] * g[l * d + j];
                        g_next[i * d + j] += s * dt;
                    }
                std::vector<double> cjac(d * d);
                for (std::size_t col = 0; col < d; ++col) {
                    coeffs.diffusion_col_jacobian({x, d}, col, cjac);
                    bool zero = true;
                    for (double v : cjac)
                        if (v != 0.0) { zero = false; break; }
                    if (zero) continue;
                    for (std::size_t i = 0; i < d; ++i)
                        for (std::size_t j = 0; j < d; ++j) {
                            double s = 0.0;
                            for (std::size_t l = 0; l < d; ++l) s += cjac[i * d + l] * g[l * d + j];
                            g_next[i * d + j] += s * dw[col];
                        }
                }
                for (std::size_t i = 0; i < d * d; ++i) gn[i] = g_next[i];
            }
        }
    };

    parallel_for(n_paths, run_path);
    return b;
}

std::vector<std::vector<double>> PathBundle::right_endpoint_points() const {
    const std::size_t n = grid_.steps();
    std::vector<std::vector<double>> sets(n);
    for (std::size_t k = 0; k < n; ++k) {
        auto& s = sets[k];
        s.reserve(paths_ * dim_);
        for (std::size_t m = 0; m < paths_; ++m) {
            auto x = state(m, k + 1);
            s.insert(s.end(), x.begin(), x.end());
        }
    }
    return sets;
}

void PathBundle::dump_csv(const std::string& path, std::size_t max_paths) const {
    std::ofstream os(path);
    if (!os) throw InvalidArgument("cannot open " + path);
    const std::size_t mp = std::min(max_paths, paths_);
    os << "t";
    for (std::size_t m = 0; m < mp; ++m)
        for (std::size_t i = 0; i < dim_; ++i) os << ",x" << m << "_" << i;
    os << "\n";
    char buf[32];
    for (std::size_t k = 0; k <= grid_.steps(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", grid_[k]);
        os << buf;
        for (std::size_t m = 0; m < mp; ++m)
            for (std::size_t i = 0; i < dim_; ++i) {
                std::snprintf(buf, sizeof buf, "%.17g", state(m, k)[i]);
                os << "," << buf;
            }
        os << "\n";
    }
}

PathBundle subsample_bundle(const PathBundle& bundle, std::size_t stride) {
    const std::size_t n = bundle.grid().steps();
    if (stride == 0 || n % stride != 0) throw InvalidArgument("stride must divide the step count");
    const std::size_t nc = n / stride;
    const std::size_t d = bundle.dim();

    PathBundle out;
    std::vector<double> instants(nc + 1);
    for (std::size_t k = 0; k <= nc; ++k) instants[k] = bundle.grid()[k * stride];
    out.grid_ = TimeGrid(std::move(instants));
    out.dim_ = d;
    out.paths_ = bundle.paths();
    out.seed_ = bundle.seed();
    out.start_ = bundle.start();
    out.states_.assign(bundle.paths() * (nc + 1) * d, 0.0);
    out.dw_.assign(bundle.paths() * nc * d, 0.0);
    if (bundle.has_flow()) out.flow_.assign(bundle.paths() * (nc + 1) * d * d, 0.0);

    for (std::size_t m = 0; m < bundle.paths(); ++m) {
        for (std::size_t k = 0; k <= nc; ++k) {
            auto src = bundle.state(m, k * stride);
            std::copy(src.begin(), src.end(),
                      out.states_.begin() + static_cast<std::ptrdiff_t>((m * (nc + 1) + k) * d));
            if (bundle.has_flow()) {
                auto fsrc = bundle.flow(m, k * stride);
                std::copy(fsrc.begin(), fsrc.end(),
                          out.flow_.begin() +
                              static_cast<std::ptrdiff_t>((m * (nc + 1) + k) * d * d));
            }
        }
        for (std::size_t k = 0; k < nc; ++k)
            for (std::size_t j = 0; j < stride; ++j) {
                auto dw = bundle.dw(m, k * stride + j);
                for (std::size_t c = 0; c < d; ++c)
                    out.dw_[(m * nc + k) * d + c] += dw[c];
            }
    }
    return out;
}

namespace {
constexpr char kBundleMagic[9] = "BDBUNDL1";
}

void PathBundle::serialize(std::ostream& os) const {
    nlohmann::json header;
    header["version"] = 1;
    header["grid"] = grid_.instants();
    header["dim"] = dim_;
    header["paths"] = paths_;
    header["seed"] = seed_;
    header["has_flow"] = has_flow();
    header["start"] = {{"kind", start_.kind == StartKind::Point ? "point" : "spread"},
                       {"t0", start_.t0},
                       {"x", std::vector<double>(start_.x.data(), start_.x.data() + start_.x.size())},
                       {"lo", start_.spread_lo},
                       {"hi", start_.spread_hi}};
    const std::string hs = header.dump();
    binio::write_magic(os, kBundleMagic);
    binio::write_u64(os, hs.size());
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    binio::write_doubles(os, states_);
    binio::write_doubles(os, dw_);
    binio::write_doubles(os, flow_);
}

PathBundle PathBundle::deserialize(std::istream& is) {
    binio::expect_magic(is, kBundleMagic, "path bundle");
    const std::uint64_t hlen = binio::read_u64(is);
    std::string hs(hlen, '\0');
    is.read(hs.data(), static_cast<std::streamsize>(hlen));
    nlohmann::json header = nlohmann::json::parse(hs);

    PathBundle out;
    out.grid_ = TimeGrid(header.at("grid").get<std::vector<double>>());
    out.dim_ = header.at("dim").get<std::size_t>();
    out.paths_ = header.at("paths").get<std::size_t>();
    out.seed_ = header.at("seed").get<std::uint64_t>();
    const auto& st = header.at("start");
    auto xs = st.at("x").get<std::vector<double>>();
    Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
    out.start_ = st.at("kind").get<std::string>() == "point"
                     ? StartSpec::point(st.at("t0").get<double>(), std::move(x0))
                     : StartSpec::spread(st.at("t0").get<double>(), st.at("lo").get<double>(),
                                         st.at("hi").get<double>());
    const std::size_t n = out.grid_.steps();
    out.states_.resize(out.paths_ * (n + 1) * out.dim_);
    out.dw_.resize(out.paths_ * n * out.dim_);
    if (header.at("has_flow").get<bool>())
        out.flow_.resize(out.paths_ * (n + 1) * out.dim_ * out.dim_);
    binio::read_doubles(is, out.states_);
    binio::read_doubles(is, out.dw_);
    binio::read_doubles(is, out.flow_);
    if (!is) throw InvalidArgument("corrupt container: truncated payload");
    return out;
}

PathBundle permute_paths(const PathBundle& bundle, std::span<const std::size_t> perm) {
    if (perm.size() != bundle.paths()) throw InvalidArgument("permutation size mismatch");
    PathBundle out = bundle;
    const std::size_t n = bundle.grid().steps();
    const std::size_t d = bundle.dim();
    for (std::size_t m = 0; m < perm.size(); ++m) {
        const std::size_t src = perm[m];
        std::copy(bundle.states_.begin() + static_cast<std::ptrdiff_t>(src * (n + 1) * d),
                  bundle.states_.begin() + static_cast<std::ptrdiff_t>((src + 1) * (n + 1) * d),
                  out.states_.begin() + static_cast<std::ptrdiff_t>(m * (n + 1) * d));
        std::copy(bundle.dw_.begin() + static_cast<std::ptrdiff_t>(src * n * d),
                  bundle.dw_.begin() + static_cast<std::ptrdiff_t>((src + 1) * n * d),
                  out.dw_.begin() + static_cast<std::ptrdiff_t>(m * n * d));
        if (bundle.has_flow())
            std::copy(
                bundle.flow_.begin() + static_cast<std::ptrdiff_t>(src * (n + 1) * d * d),
                bundle.flow_.begin() + static_cast<std::ptrdiff_t>((src + 1) * (n + 1) * d * d),
                out.flow_.begin() + static_cast<std::ptrdiff_t>(m * (n + 1) * d * d));
    }
    return out;
}

double moment_probe(const PathBundle& bundle, double p, double discount) {
    if (bundle.paths() == 0) throw InvalidArgument("empty bundle");
    if (!(p >= 1.0) || !(discount > 0.0)) throw InvalidArgument("need p >= 1 and discount > 0");
    const std::size_t n = bundle.grid().steps();
    double acc = 0.0;
    for (std::size_t m = 0; m < bundle.paths(); ++m) {
        double integral = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            auto x = bundle.state(m, k);
            double nx2 = 0.0;
            for (double c : x) nx2 += c * c;
            integral += std::exp(-discount * bundle.grid()[k]) * std::pow(nx2, p) * bundle.grid().dt(k);
        }
        acc += integral;
    }
    return acc / static_cast<double>(bundle.paths());
}

} // namespace bdsde
