#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

namespace bdsde {

enum class BasisKind { Polynomial, PiecewiseLinear };

struct BasisSpec {
    BasisKind kind = BasisKind::Polynomial;
    std::size_t degree = 4;   // total degree for the polynomial basis
    std::size_t bins = 32;    // equal-mass bins for the piecewise-linear basis (d=1)
    nlohmann::json to_json() const;
    static BasisSpec from_json(const nlohmann::json& j);
};

/// A fitted conditional-expectation surface for one time level: evaluate
/// it (and its spatial gradient) at arbitrary points. Polynomial tables
/// standardize inputs and solve rank-revealing least squares, degrading to
/// the sample mean when the design is degenerate (all points coincident).
/// Piecewise-linear tables fit an independent affine law per equal-mass
/// bin (d=1 only).
class RegressionTable {
public:
    double evaluate(std::span<const double> x) const;
    double evaluate1(double x) const { return evaluate(std::span<const double>(&x, 1)); }
    /// d/dx of the surface; gradient written into `out` (size d).
    void gradient(std::span<const double> x, std::span<double> out) const;
    double gradient1(double x) const {
        double g;
        gradient(std::span<const double>(&x, 1), std::span<double>(&g, 1));
        return g;
    }
    /// Prediction standard error at x from the fit's residual variance and
    /// normal-equation geometry. Diagnostic only.
    double prediction_stderr(std::span<const double> x) const;
    double prediction_stderr1(double x) const {
        return prediction_stderr(std::span<const double>(&x, 1));
    }

    std::size_t dim() const { return dim_; }
    std::size_t rank() const { return rank_; }
    double residual_variance() const { return residual_variance_; }

    friend class RegressionDesign;

private:
    BasisKind kind_ = BasisKind::Polynomial;
    std::size_t dim_ = 1;
    std::size_t rank_ = 0;
    double residual_variance_ = 0.0;
    std::size_t n_samples_ = 0;

    // polynomial
    std::vector<std::vector<unsigned>> exponents_;
    std::vector<std::size_t> kept_;  // feature columns with sample variation
    Eigen::VectorXd shift_, scale_;
    Eigen::VectorXd coeffs_;
    Eigen::MatrixXd normal_inv_;  // inverse of the kept-column Phi^T Phi (stderr only)

    // piecewise-linear
    std::vector<double> edges_;             // bins+1 edges
    std::vector<double> pw_a_, pw_b_;       // per-bin value = a + b*x

    void features(std::span<const double> x, std::vector<double>& phi) const;
};

/// The per-step design: assembled once per time level on the conditioning
/// states, then reused to fit every regressand of that step (Y and each Z
/// component share the factorization).
class RegressionDesign {
public:
    RegressionDesign(const BasisSpec& spec, const Eigen::MatrixXd& states_rowmajor);

    std::size_t n_samples() const { return n_; }
    std::size_t dim() const { return d_; }

    /// Least-squares fit of `y` (size n) against the design; returns the
    /// queryable table and, optionally, the fitted values at the design
    /// points.
    RegressionTable fit(std::span<const double> y, std::vector<double>* fitted = nullptr) const;

private:
    BasisSpec spec_;
    std::size_t n_ = 0, d_ = 0;

    // polynomial
    std::vector<std::vector<unsigned>> exponents_;
    std::vector<std::size_t> kept_;
    Eigen::VectorXd shift_, scale_;
    Eigen::MatrixXd phi_;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;

    // piecewise-linear
    std::vector<double> edges_;
    std::vector<std::vector<std::uint32_t>> bin_members_;
    std::vector<double> xs_;
};

/// All monomial exponent tuples of total degree <= degree in d variables,
/// graded order.
std::vector<std::vector<unsigned>> monomial_exponents(std::size_t dim, std::size_t degree);

} // namespace bdsde
