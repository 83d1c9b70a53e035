#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "salsa2d/common.hpp"
#include "salsa2d/design.hpp"
#include "salsa2d/geometry.hpp"

namespace salsa2d {

enum class Criterion { BIC, AICc, LogPL };

inline std::string to_string(Criterion c) {
    switch (c) {
        case Criterion::BIC: return "bic";
        case Criterion::AICc: return "aicc";
        case Criterion::LogPL: return "loglik";
    }
    return "bic";
}

inline Criterion parse_criterion(const std::string& s) {
    if (s == "bic" || s == "BIC") return Criterion::BIC;
    if (s == "aicc" || s == "AICc") return Criterion::AICc;
    if (s == "loglik" || s == "logpl") return Criterion::LogPL;
    throw InputError("unknown criterion '" + s + "' (expected bic, aicc or loglik)");
}

struct FittedModel {
    Eigen::VectorXd coefficients;
    std::vector<std::string> labels;
    std::vector<RadialColumn> radial;
    Eigen::Index n_covariate_columns = 0;
    BasisKind basis = BasisKind::Exponential;

    double log_pl = -std::numeric_limits<double>::infinity();
    std::size_t n_obs = 0;
    std::size_t n_params = 0;
    double bic = std::numeric_limits<double>::infinity();
    double aicc = std::numeric_limits<double>::infinity();
    Eigen::MatrixXd covariance;
    bool converged = false;
    int iterations = 0;
    std::string diagnostics;

    // Provenance needed to rebuild design rows at new locations. Filled by the
    // search and averaging layers; a bare fit leaves these empty.
    Metric metric = Metric::Euclidean;
    std::vector<Point> knot_points;
    RSequence r_sequence;
    TermSet terms;
    /// Mean radial contribution to the linear predictor over the training rows.
    double spatial_reference = 0.0;
};

struct FitOptions {
    int max_iterations = 100;
    double tolerance = 1e-8;  ///< relative log-pseudolikelihood change
    int max_halvings = 10;
    double rank_tolerance = 1e-10;  ///< relative to the largest QR pivot
    const Eigen::VectorXd* start = nullptr;
    bool covariance = true;  ///< skip the inverse information when only the criterion is needed
};

/// Spatial-only models count knots; with covariates every column counts
/// (non-intercept parameters plus one).
inline std::size_t parameter_count(Eigen::Index n_columns, Eigen::Index n_covariate_columns, std::size_t n_radial) {
    if (n_covariate_columns > 0) return static_cast<std::size_t>(n_columns);
    return n_radial;
}

inline double bic_value(double log_pl, std::size_t p, std::size_t n) {
    return -2.0 * log_pl + static_cast<double>(p) * std::log(static_cast<double>(n));
}

inline double aicc_value(double log_pl, std::size_t p, std::size_t n) {
    if (n <= p + 1) throw NumericalError("AICc undefined: N <= p + 1");
    const double k = static_cast<double>(p);
    return -2.0 * log_pl + 2.0 * k + 2.0 * k * (k + 1.0) / (static_cast<double>(n) - k - 1.0);
}

inline double bic(const FittedModel& m) { return bic_value(m.log_pl, m.n_params, m.n_obs); }
inline double aicc(const FittedModel& m) { return aicc_value(m.log_pl, m.n_params, m.n_obs); }

/// Lower is better for every criterion; failed fits score +inf.
inline double criterion_value(const FittedModel& m, Criterion c) {
    if (!m.converged || !std::isfinite(m.log_pl)) return std::numeric_limits<double>::infinity();
    switch (c) {
        case Criterion::BIC: return m.bic;
        case Criterion::AICc: return m.aicc;
        case Criterion::LogPL: return -2.0 * m.log_pl;
    }
    return m.bic;
}

namespace detail {

inline constexpr double kMaxEta = 700.0;

inline Eigen::ArrayXd intensity(const Eigen::MatrixXd& X, const Eigen::VectorXd& beta) {
    return (X * beta).array().min(kMaxEta).exp();
}

/// sum_i w_i (y_i eta_i - lambda_i), written with wy = w*y so zero-response
/// rows contribute exactly -w lambda.
inline double log_pl(const Eigen::MatrixXd& X, const Eigen::VectorXd& beta, const Eigen::ArrayXd& wy,
                     const Eigen::ArrayXd& w) {
    Eigen::ArrayXd eta = (X * beta).array().min(kMaxEta);
    return (wy * eta - w * eta.exp()).sum();
}

}  // namespace detail

/// Weighted Poisson log-pseudolikelihood at coefficients beta.
inline double log_pseudolikelihood(const Eigen::VectorXd& beta, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                   const Eigen::VectorXd& w) {
    if (X.cols() != beta.size() || X.rows() != y.size() || y.size() != w.size())
        throw InputError("log_pseudolikelihood: dimension mismatch");
    return detail::log_pl(X, beta, (w.array() * y.array()), w.array());
}

inline double log_pseudolikelihood(const FittedModel& m, const DesignMatrix& X, const Eigen::VectorXd& y,
                                   const Eigen::VectorXd& w) {
    return log_pseudolikelihood(m.coefficients, X.X, y, w);
}

/// Same objective evaluated at arbitrary positive intensities (used for
/// averaged predictions that are not exp of one linear predictor).
inline double log_pseudolikelihood_at(const Eigen::VectorXd& lambda, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
    if (lambda.size() != y.size() || y.size() != w.size()) throw InputError("log_pseudolikelihood_at: size mismatch");
    double s = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        double wy = w[i] * y[i];
        s += (wy != 0.0 ? wy * std::log(lambda[i]) : 0.0) - w[i] * lambda[i];
    }
    return s;
}

/// Maximises the weighted Poisson log-pseudolikelihood (log link) by
/// Newton/IRLS with step halving. Throws RankDeficientError when the weighted
/// design is singular; a fit that fails to converge is returned flagged.
inline FittedModel fit_weighted_poisson(const DesignMatrix& design, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                                        const FitOptions& opt = {}) {
    const Eigen::MatrixXd& X = design.X;
    const Eigen::Index n = X.rows(), p = X.cols();
    if (y.size() != n || w.size() != n) throw InputError("fit_weighted_poisson: y/w length does not match design rows");
    if (p == 0) throw InputError("fit_weighted_poisson: design has no columns");
    if ((y.array() < 0).any()) throw InputError("fit_weighted_poisson: negative response");
    if (!(w.array() > 0).all()) throw InputError("fit_weighted_poisson: weights must be positive");

    const Eigen::ArrayXd wa = w.array();
    const Eigen::ArrayXd wy = wa * y.array();

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    if (opt.start && opt.start->size() == p) {
        beta = *opt.start;
    } else {
        double rate = wy.sum() / wa.sum();
        beta[0] = std::log(std::max(rate, 1e-300));
    }

    FittedModel m;
    m.labels = design.labels;
    m.radial = design.radial;
    m.n_covariate_columns = design.n_covariate_columns;
    m.basis = design.basis;
    m.n_obs = static_cast<std::size_t>(n);
    m.n_params = parameter_count(p, design.n_covariate_columns, design.radial.size());

    Eigen::ArrayXd lambda = detail::intensity(X, beta);
    {
        Eigen::MatrixXd Xs = X.array().colwise() * (wa * lambda).sqrt();
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xs);
        qr.setThreshold(opt.rank_tolerance);
        if (qr.rank() < p) {
            std::vector<std::size_t> cols;
            std::vector<std::string> labels;
            for (Eigen::Index k = qr.rank(); k < p; ++k) {
                auto c = static_cast<std::size_t>(qr.colsPermutation().indices()[k]);
                cols.push_back(c);
                labels.push_back(design.labels[c]);
            }
            std::string msg = "rank-deficient design; dependent columns:";
            for (const auto& l : labels) msg += " " + l;
            throw RankDeficientError(msg, cols, labels);
        }
    }

    double ll = detail::log_pl(X, beta, wy, wa);
    Eigen::MatrixXd H(p, p);
    auto information = [&](const Eigen::ArrayXd& lam) {
        Eigen::MatrixXd Xs = X.array().colwise() * (wa * lam).sqrt();
        H.setZero();
        H.selfadjointView<Eigen::Lower>().rankUpdate(Xs.transpose());
        H.triangularView<Eigen::StrictlyUpper>() = H.transpose();
    };

    for (int it = 1; it <= opt.max_iterations; ++it) {
        m.iterations = it;
        lambda = detail::intensity(X, beta);
        Eigen::VectorXd grad = X.transpose() * (wy - wa * lambda).matrix();
        information(lambda);
        Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
        Eigen::VectorXd step = ldlt.solve(grad);
        if (ldlt.info() != Eigen::Success || !step.allFinite()) {
            m.diagnostics = "Newton system could not be solved at iteration " + std::to_string(it);
            break;
        }
        double t = 1.0, ll_new = -std::numeric_limits<double>::infinity();
        Eigen::VectorXd beta_new;
        const double slack = 1e-12 * std::max(1.0, std::abs(ll));
        for (int h = 0; h <= opt.max_halvings; ++h) {
            beta_new = beta + t * step;
            ll_new = detail::log_pl(X, beta_new, wy, wa);
            if (std::isfinite(ll_new) && ll_new >= ll - slack) break;
            t *= 0.5;
        }
        if (!std::isfinite(ll_new) || ll_new < ll - slack) {
            // No ascent along the Newton direction: we are at the optimum to
            // working precision if the gradient is negligible, else stuck.
            double gnorm = grad.lpNorm<Eigen::Infinity>();
            if (gnorm < 1e-6 * std::max(1.0, wy.sum())) {
                m.converged = true;
            } else {
                m.diagnostics = "step halving failed to increase the log-pseudolikelihood at iteration " +
                                std::to_string(it);
            }
            break;
        }
        const double rel = std::abs(ll_new - ll) / std::max(std::abs(ll), 1e-10);
        const double step_size = (t * step).lpNorm<Eigen::Infinity>();
        beta = beta_new;
        ll = ll_new;
        if (rel < opt.tolerance && step_size < 1e-6 * (1.0 + beta.lpNorm<Eigen::Infinity>())) {
            m.converged = true;
            break;
        }
    }
    if (!m.converged && m.diagnostics.empty())
        m.diagnostics = "no convergence after " + std::to_string(opt.max_iterations) + " iterations";

    m.coefficients = beta;
    m.log_pl = ll;
    if (opt.covariance) {
        lambda = detail::intensity(X, beta);
        information(lambda);
        Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
        m.covariance = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
        m.covariance = 0.5 * (m.covariance + m.covariance.transpose()).eval();
        if (!m.covariance.allFinite()) {
            m.converged = false;
            m.diagnostics = "singular Fisher information at the optimum";
        }
    }
    m.bic = bic_value(m.log_pl, m.n_params, m.n_obs);
    m.aicc = m.n_obs > m.n_params + 1 ? aicc_value(m.log_pl, m.n_params, m.n_obs)
                                       : std::numeric_limits<double>::infinity();
    return m;
}

/// Fit that reports rank deficiency as a failed (non-converged) model instead
/// of throwing; search loops treat such candidates as infinitely bad.
inline FittedModel try_fit_weighted_poisson(const DesignMatrix& design, const Eigen::VectorXd& y,
                                            const Eigen::VectorXd& w, const FitOptions& opt = {}) {
    try {
        return fit_weighted_poisson(design, y, w, opt);
    } catch (const RankDeficientError& e) {
        FittedModel m;
        m.labels = design.labels;
        m.radial = design.radial;
        m.n_covariate_columns = design.n_covariate_columns;
        m.basis = design.basis;
        m.n_obs = static_cast<std::size_t>(design.rows());
        m.n_params = parameter_count(design.cols(), design.n_covariate_columns, design.radial.size());
        m.diagnostics = e.what();
        return m;
    }
}

/// exp(X beta) on rows built with the model's own column layout.
inline Eigen::VectorXd predict_intensity(const FittedModel& m, const DesignMatrix& rows) {
    if (rows.cols() != m.coefficients.size())
        throw InputError("predict_intensity: design has " + std::to_string(rows.cols()) + " columns, model has " +
                         std::to_string(m.coefficients.size()));
    if (!m.labels.empty() && rows.labels != m.labels)
        throw InputError("predict_intensity: design column labels do not match the model");
    return detail::intensity(rows.X, m.coefficients).matrix();
}

/// Mean over rows of the radial part of the linear predictor.
inline double mean_spatial_contribution(const FittedModel& m, const DesignMatrix& design) {
    const Eigen::Index off = design.radial_offset();
    const Eigen::Index k = static_cast<Eigen::Index>(design.radial.size());
    if (k == 0 || design.rows() == 0) return 0.0;
    return (design.X.middleCols(off, k) * m.coefficients.segment(off, k)).mean();
}

}  // namespace salsa2d
