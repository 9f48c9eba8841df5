#include "bdsde/basis.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "bdsde/errors.hpp"

namespace bdsde {

nlohmann::json BasisSpec::to_json() const {
    return nlohmann::json{{"kind", kind == BasisKind::Polynomial ? "poly" : "pwlinear"},
                          {"degree", degree},
                          {"bins", bins}};
}

BasisSpec BasisSpec::from_json(const nlohmann::json& j) {
    BasisSpec s;
    const std::string k = j.at("kind").get<std::string>();
    if (k == "poly") s.kind = BasisKind::Polynomial;
    else if (k == "pwlinear") s.kind = BasisKind::PiecewiseLinear;
    else throw InvalidArgument("unknown basis kind: " + k);
    if (j.contains("degree")) s.degree = j.at("degree").get<std::size_t>();
    if (j.contains("bins")) s.bins = j.at("bins").get<std::size_t>();
    return s;
}

std::vector<std::vector<unsigned>> monomial_exponents(std::size_t dim, std::size_t degree) {
    std::vector<std::vector<unsigned>> out;
    std::vector<unsigned> cur(dim, 0);
    // graded lexicographic enumeration
    for (unsigned total = 0; total <= degree; ++total) {
        std::function<void(std::size_t, unsigned)> rec = [&](std::size_t pos, unsigned left) {
            if (pos + 1 == dim) {
                cur[pos] = left;
                out.push_back(cur);
                return;
            }
            for (unsigned e = 0; e <= left; ++e) {
                cur[pos] = e;
                rec(pos + 1, left - e);
            }
        };
        rec(0, total);
    }
    return out;
}

void RegressionTable::features(std::span<const double> x, std::vector<double>& phi) const {
    phi.resize(exponents_.size());
    for (std::size_t j = 0; j < exponents_.size(); ++j) {
        double v = 1.0;
        for (std::size_t c = 0; c < dim_; ++c) {
            const double z = (x[c] - shift_(static_cast<Eigen::Index>(c))) /
                             scale_(static_cast<Eigen::Index>(c));
            for (unsigned e = 0; e < exponents_[j][c]; ++e) v *= z;
        }
        phi[j] = v;
    }
}

double RegressionTable::evaluate(std::span<const double> x) const {
    if (x.size() != dim_) throw InvalidArgument("evaluation dimension mismatch");
    if (kind_ == BasisKind::Polynomial) {
        std::vector<double> phi;
        features(x, phi);
        double s = 0.0;
        for (std::size_t j = 0; j < phi.size(); ++j) s += coeffs_(static_cast<Eigen::Index>(j)) * phi[j];
        return s;
    }
    // piecewise linear, clamped to the outer bins
    const double v = x[0];
    const std::size_t nb = pw_a_.size();
    std::size_t bin = 0;
    if (v >= edges_.back()) bin = nb - 1;
    else if (v <= edges_.front()) bin = 0;
    else bin = static_cast<std::size_t>(std::upper_bound(edges_.begin(), edges_.end(), v) -
                                        edges_.begin()) - 1;
    bin = std::min(bin, nb - 1);
    return pw_a_[bin] + pw_b_[bin] * v;
}

void RegressionTable::gradient(std::span<const double> x, std::span<double> out) const {
    if (x.size() != dim_ || out.size() != dim_) throw InvalidArgument("gradient dimension mismatch");
    if (kind_ == BasisKind::Polynomial) {
        std::vector<double> z(dim_);
        for (std::size_t c = 0; c < dim_; ++c)
            z[c] = (x[c] - shift_(static_cast<Eigen::Index>(c))) / scale_(static_cast<Eigen::Index>(c));
        for (std::size_t c = 0; c < dim_; ++c) {
            double g = 0.0;
            for (std::size_t j = 0; j < exponents_.size(); ++j) {
                const auto& e = exponents_[j];
                if (e[c] == 0) continue;
                double v = static_cast<double>(e[c]);
                for (std::size_t cc = 0; cc < dim_; ++cc) {
                    const unsigned p = cc == c ? e[cc] - 1 : e[cc];
                    for (unsigned i = 0; i < p; ++i) v *= z[cc];
                }
                g += coeffs_(static_cast<Eigen::Index>(j)) * v;
            }
            out[c] = g / scale_(static_cast<Eigen::Index>(c));
        }
        return;
    }
    const double v = x[0];
    const std::size_t nb = pw_a_.size();
    std::size_t bin = 0;
    if (v >= edges_.back()) bin = nb - 1;
    else if (v <= edges_.front()) bin = 0;
    else bin = static_cast<std::size_t>(std::upper_bound(edges_.begin(), edges_.end(), v) -
                                        edges_.begin()) - 1;
    bin = std::min(bin, nb - 1);
    out[0] = pw_b_[bin];
}

double RegressionTable::prediction_stderr(std::span<const double> x) const {
    if (kind_ != BasisKind::Polynomial) {
        // per-bin affine fit: residual variance over the average bin size
        const double per_bin = static_cast<double>(n_samples_) / static_cast<double>(pw_a_.size());
        return std::sqrt(residual_variance_ / std::max(per_bin, 1.0));
    }
    std::vector<double> phiv;
    features(x, phiv);
    Eigen::VectorXd p(static_cast<Eigen::Index>(kept_.size()));
    for (std::size_t j = 0; j < kept_.size(); ++j) p(static_cast<Eigen::Index>(j)) = phiv[kept_[j]];
    const double quad = p.transpose() * normal_inv_ * p;
    return std::sqrt(std::max(quad, 0.0) * residual_variance_);
}

RegressionDesign::RegressionDesign(const BasisSpec& spec, const Eigen::MatrixXd& states)
    : spec_(spec), n_(static_cast<std::size_t>(states.rows())),
      d_(static_cast<std::size_t>(states.cols())) {
    if (n_ == 0) throw InvalidArgument("empty design");

    if (spec_.kind == BasisKind::PiecewiseLinear) {
        if (d_ != 1) throw InvalidArgument("piecewise-linear basis is one-dimensional");
        xs_.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) xs_[i] = states(static_cast<Eigen::Index>(i), 0);
        std::vector<std::uint32_t> order(n_);
        std::iota(order.begin(), order.end(), 0u);
        std::sort(order.begin(), order.end(),
                  [&](std::uint32_t a, std::uint32_t b) { return xs_[a] < xs_[b]; });
        const std::size_t nb = std::max<std::size_t>(1, std::min(spec_.bins, n_));
        edges_.resize(nb + 1);
        bin_members_.assign(nb, {});
        for (std::size_t b = 0; b <= nb; ++b) {
            const std::size_t idx = std::min(n_ - 1, b * n_ / nb);
            edges_[b] = xs_[order[b == nb ? n_ - 1 : idx]];
        }
        for (std::size_t pos = 0; pos < n_; ++pos) {
            const std::size_t b = std::min(nb - 1, pos * nb / n_);
            bin_members_[b].push_back(order[pos]);
        }
        return;
    }

    exponents_ = monomial_exponents(d_, spec_.degree);
    shift_ = states.colwise().mean();
    scale_.resize(static_cast<Eigen::Index>(d_));
    for (std::size_t c = 0; c < d_; ++c) {
        const auto col = states.col(static_cast<Eigen::Index>(c));
        const double sd = std::sqrt(
            (col.array() - shift_(static_cast<Eigen::Index>(c))).square().sum() /
            std::max<double>(1.0, static_cast<double>(n_ - 1)));
        scale_(static_cast<Eigen::Index>(c)) = sd > 1e-150 ? sd : 1.0;
    }
    Eigen::MatrixXd full(static_cast<Eigen::Index>(n_),
                         static_cast<Eigen::Index>(exponents_.size()));
    for (std::size_t i = 0; i < n_; ++i) {
        for (std::size_t j = 0; j < exponents_.size(); ++j) {
            double v = 1.0;
            for (std::size_t c = 0; c < d_; ++c) {
                const double z = (states(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) -
                                  shift_(static_cast<Eigen::Index>(c))) /
                                 scale_(static_cast<Eigen::Index>(c));
                for (unsigned e = 0; e < exponents_[j][c]; ++e) v *= z;
            }
            full(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        }
    }
    // Drop features with no sample variation (ties, sigma = 0): the fit
    // degrades gracefully toward intercept-only.
    kept_.clear();
    kept_.push_back(0);  // graded order puts the constant monomial first
    for (std::size_t j = 1; j < exponents_.size(); ++j) {
        const auto col = full.col(static_cast<Eigen::Index>(j));
        const double mean = col.mean();
        const double var = (col.array() - mean).square().sum();
        if (var > 1e-20 * static_cast<double>(n_)) kept_.push_back(j);
    }
    phi_.resize(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(kept_.size()));
    for (std::size_t j = 0; j < kept_.size(); ++j)
        phi_.col(static_cast<Eigen::Index>(j)) = full.col(static_cast<Eigen::Index>(kept_[j]));
    qr_.setThreshold(1e-12);
    qr_.compute(phi_);
}

RegressionTable RegressionDesign::fit(std::span<const double> y, std::vector<double>* fitted) const {
    if (y.size() != n_) throw InvalidArgument("regressand size mismatch");
    RegressionTable t;
    t.kind_ = spec_.kind;
    t.dim_ = d_;
    t.n_samples_ = n_;
    Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(n_));

    if (spec_.kind == BasisKind::PiecewiseLinear) {
        const std::size_t nb = bin_members_.size();
        t.edges_ = edges_;
        t.pw_a_.assign(nb, 0.0);
        t.pw_b_.assign(nb, 0.0);
        double ss = 0.0;
        for (std::size_t b = 0; b < nb; ++b) {
            const auto& mem = bin_members_[b];
            double sx = 0, sy = 0, sxx = 0, sxy = 0;
            for (auto i : mem) {
                sx += xs_[i];
                sy += y[i];
                sxx += xs_[i] * xs_[i];
                sxy += xs_[i] * y[i];
            }
            const double nbm = static_cast<double>(mem.size());
            if (mem.empty()) continue;
            const double det = nbm * sxx - sx * sx;
            if (std::abs(det) > 1e-12 * std::max(1.0, nbm * sxx)) {
                t.pw_b_[b] = (nbm * sxy - sx * sy) / det;
                t.pw_a_[b] = (sy - t.pw_b_[b] * sx) / nbm;
            } else {
                t.pw_b_[b] = 0.0;
                t.pw_a_[b] = sy / nbm;
            }
            for (auto i : mem) {
                const double r = y[i] - (t.pw_a_[b] + t.pw_b_[b] * xs_[i]);
                ss += r * r;
            }
        }
        t.rank_ = 2 * nb;
        t.residual_variance_ = ss / std::max<double>(1.0, static_cast<double>(n_) - 2.0 * nb);
        if (fitted) {
            fitted->resize(n_);
            for (std::size_t b = 0; b < nb; ++b)
                for (auto i : bin_members_[b]) (*fitted)[i] = t.pw_a_[b] + t.pw_b_[b] * xs_[i];
        }
        return t;
    }

    t.exponents_ = exponents_;
    t.shift_ = shift_;
    t.scale_ = scale_;
    for (double v : y)
        if (!std::isfinite(v)) throw NumericalError("non-finite regressand");
    Eigen::VectorXd reduced = qr_.solve(yv);
    t.coeffs_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(exponents_.size()));
    for (std::size_t j = 0; j < kept_.size(); ++j)
        t.coeffs_(static_cast<Eigen::Index>(kept_[j])) = reduced(static_cast<Eigen::Index>(j));
    t.rank_ = static_cast<std::size_t>(qr_.rank());
    if (t.rank_ == 0) throw NumericalError("regression design has rank zero");

    t.kept_ = kept_;
    Eigen::VectorXd fit_at_design = phi_ * reduced;
    Eigen::VectorXd resid = yv - fit_at_design;
    const double dof = std::max<double>(1.0, static_cast<double>(n_) - static_cast<double>(t.rank_));
    t.residual_variance_ = resid.squaredNorm() / dof;

    // Ridge-stabilized inverse of Phi^T Phi for the prediction stderr;
    // diagnostic only, never on the solution path.
    Eigen::MatrixXd ident = Eigen::MatrixXd::Identity(phi_.cols(), phi_.cols());
    Eigen::MatrixXd ntn = phi_.transpose() * phi_;
    ntn.diagonal().array() += 1e-10 * std::max(1.0, ntn.diagonal().maxCoeff());
    t.normal_inv_ = ntn.ldlt().solve(ident);

    if (fitted) {
        fitted->resize(n_);
        for (std::size_t i = 0; i < n_; ++i) (*fitted)[i] = fit_at_design(static_cast<Eigen::Index>(i));
    }
    return t;
}

} // namespace bdsde
