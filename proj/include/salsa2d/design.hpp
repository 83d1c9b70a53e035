#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "salsa2d/common.hpp"
#include "salsa2d/geometry.hpp"

namespace salsa2d {

// ---------------------------------------------------------------------------
// Radial basis functions

enum class BasisKind { Exponential, Gaussian };

inline std::string to_string(BasisKind k) { return k == BasisKind::Exponential ? "exponential" : "gaussian"; }

inline BasisKind parse_basis(const std::string& s) {
    if (s == "exponential") return BasisKind::Exponential;
    if (s == "gaussian") return BasisKind::Gaussian;
    throw InputError("unknown basis '" + s + "' (expected exponential or gaussian)");
}

/// exp(-h / r^2) for the exponential kind, exp(-(h r)^2) for the gaussian kind.
/// Note the opposite orientation: a large r is global for the exponential
/// basis and local for the gaussian one. Unreachable (+inf) distances give 0.
inline double radial_basis(double h, double r, BasisKind kind) {
    if (h < 0 || std::isnan(h)) throw InputError("radial_basis: distance must be >= 0");
    if (!(r > 0)) throw InputError("radial_basis: r must be > 0");
    if (h == std::numeric_limits<double>::infinity()) return 0.0;
    if (kind == BasisKind::Exponential) return std::exp(-h / (r * r));
    const double hr = h * r;
    return std::exp(-hr * hr);
}

/// The R candidate values for the range parameter r. Index 0 is the most
/// local basis and index R-1 the most global, for both kinds, so the stored
/// values increase for the exponential kind and decrease for the gaussian one.
struct RSequence {
    std::vector<double> values;
    BasisKind kind = BasisKind::Exponential;

    std::size_t size() const noexcept { return values.size(); }
    double operator[](std::size_t i) const { return values.at(i); }
    /// 0-based position of the 1-based ceil(R/2) element, used to start searches.
    std::size_t middle() const noexcept { return values.empty() ? 0 : (values.size() + 1) / 2 - 1; }
};

inline double quantile(std::vector<double> v, double p) {
    if (v.empty()) throw InputError("quantile of an empty sample");
    std::sort(v.begin(), v.end());
    double pos = p * static_cast<double>(v.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    auto hi = std::min(lo + 1, v.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return v[lo] + frac * (v[hi] - v[lo]);
}

/// Basis level reached at the 5% quantile distance by the most local r.
inline constexpr double kLocalBasisLevel = 0.1;
/// Basis level still held at the 95% quantile distance by the most global r.
inline constexpr double kGlobalBasisLevel = 0.9;

/// Builds the r ladder from candidate-knot distances. With q_lo and q_hi the
/// 5% and 95% quantiles of the positive off-diagonal distances, the most
/// local r makes the basis fall to 0.1 at q_lo and the most global r keeps it
/// at 0.9 at q_hi. Intermediate values are geometrically spaced.
inline RSequence r_sequence(const DistanceMatrix& h, std::size_t R, BasisKind kind) {
    if (R < 2) throw InputError("r_sequence: need at least 2 values");
    std::vector<double> d;
    for (Eigen::Index j = 0; j < h.cols(); ++j)
        for (Eigen::Index i = 0; i < h.rows(); ++i) {
            if (h.rows() == h.cols() && i == j) continue;
            double v = h(i, j);
            if (v > 0 && std::isfinite(v)) d.push_back(v);
        }
    if (d.empty()) throw InputError("r_sequence: no positive finite distances among candidate knots");
    const double q_lo = quantile(d, 0.05);
    const double q_hi = quantile(d, 0.95);

    double local, global;
    if (kind == BasisKind::Exponential) {
        // exp(-q/r^2) = level  <=>  r = sqrt(q / -log(level))
        local = std::sqrt(q_lo / -std::log(kLocalBasisLevel));
        global = std::sqrt(q_hi / -std::log(kGlobalBasisLevel));
    } else {
        // exp(-(q r)^2) = level  <=>  r = sqrt(-log(level)) / q
        local = std::sqrt(-std::log(kLocalBasisLevel)) / q_lo;
        global = std::sqrt(-std::log(kGlobalBasisLevel)) / q_hi;
    }
    RSequence seq;
    seq.kind = kind;
    seq.values.resize(R);
    const double ratio = std::log(global / local);
    for (std::size_t i = 0; i < R; ++i)
        seq.values[i] = local * std::exp(ratio * static_cast<double>(i) / static_cast<double>(R - 1));
    return seq;
}

// ---------------------------------------------------------------------------
// One-dimensional B-splines

/// Cox-de Boor B-spline basis with boundary knots clamped at [lower, upper].
/// Returns an n x (interior + degree + 1) matrix whose rows sum to one.
inline Eigen::MatrixXd bspline_basis(const Eigen::VectorXd& x, const std::vector<double>& interior, int degree,
                                     double lower, double upper) {
    if (degree < 1) throw InputError("bspline_basis: degree must be >= 1");
    if (!(upper > lower)) throw InputError("bspline_basis: empty covariate range");
    for (std::size_t i = 0; i < interior.size(); ++i) {
        if (!(interior[i] > lower && interior[i] < upper))
            throw InputError("bspline_basis: interior knot " + std::to_string(interior[i]) + " outside the data range");
        if (i > 0 && !(interior[i] > interior[i - 1])) throw InputError("bspline_basis: knots must be increasing");
    }
    std::vector<double> t;
    t.insert(t.end(), static_cast<std::size_t>(degree + 1), lower);
    t.insert(t.end(), interior.begin(), interior.end());
    t.insert(t.end(), static_cast<std::size_t>(degree + 1), upper);
    const int n_basis = static_cast<int>(interior.size()) + degree + 1;
    const int n_knots = static_cast<int>(t.size());

    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(x.size(), n_basis);
    std::vector<double> N(static_cast<std::size_t>(n_knots - 1));
    for (Eigen::Index row = 0; row < x.size(); ++row) {
        double v = std::clamp(x[row], lower, upper);
        // Degree-0 indicators; the right end belongs to the last non-empty span.
        std::fill(N.begin(), N.end(), 0.0);
        for (int i = 0; i < n_knots - 1; ++i) {
            if (t[i] < t[i + 1] && ((v >= t[i] && v < t[i + 1]) || (v == upper && t[i + 1] == upper))) {
                N[static_cast<std::size_t>(i)] = 1.0;
                break;
            }
        }
        for (int p = 1; p <= degree; ++p) {
            for (int i = 0; i < n_knots - 1 - p; ++i) {
                double left = 0.0, right = 0.0;
                double d1 = t[i + p] - t[i];
                double d2 = t[i + p + 1] - t[i + 1];
                if (d1 > 0) left = (v - t[i]) / d1 * N[static_cast<std::size_t>(i)];
                if (d2 > 0) right = (t[i + p + 1] - v) / d2 * N[static_cast<std::size_t>(i + 1)];
                N[static_cast<std::size_t>(i)] = left + right;
            }
        }
        for (int i = 0; i < n_basis; ++i) B(row, i) = N[static_cast<std::size_t>(i)];
    }
    return B;
}

inline Eigen::MatrixXd bspline_basis(const Eigen::VectorXd& x, const std::vector<double>& interior, int degree = 2) {
    if (x.size() == 0) throw InputError("bspline_basis: no data");
    return bspline_basis(x, interior, degree, x.minCoeff(), x.maxCoeff());
}

// ---------------------------------------------------------------------------
// Covariate terms

/// Named covariate columns, one value per data row.
using CovariateTable = std::map<std::string, Eigen::VectorXd>;

enum class KnotSelection { Fixed, BicSearch };

/// Quadratic (by default) B-spline smooth of one covariate. The first basis
/// column is dropped in the design since the intercept already spans it.
struct SmoothTermSpec {
    std::string covariate;
    int degree = 2;
    std::vector<double> interior_knots;
    double lower = 0.0;
    double upper = 1.0;
    KnotSelection selection = KnotSelection::Fixed;

    std::size_t column_count() const { return interior_knots.size() + static_cast<std::size_t>(degree); }
};

/// Two-level factor: the column is 1 where covariate >= chosen threshold.
struct FactorThresholdSpec {
    std::string covariate;
    std::vector<double> candidates;
    double chosen = 0.0;
};

struct TermSet {
    std::vector<FactorThresholdSpec> factors;
    std::vector<SmoothTermSpec> smooths;

    bool empty() const noexcept { return factors.empty() && smooths.empty(); }
    std::size_t column_count() const {
        std::size_t n = factors.size();
        for (const auto& s : smooths) n += s.column_count();
        return n;
    }
};

/// Fixed non-spatial columns placed between the intercept and the radial block.
struct CovariateBlock {
    Eigen::MatrixXd columns;
    std::vector<std::string> labels;

    Eigen::Index cols() const { return columns.cols(); }
};

inline const Eigen::VectorXd& require_covariate(const CovariateTable& table, const std::string& name) {
    auto it = table.find(name);
    if (it == table.end()) throw InputError("missing covariate column '" + name + "'");
    return it->second;
}

inline std::string format_threshold(double t) {
    std::string s = std::to_string(t);
    while (!s.empty() && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
}

/// Evaluates every term on `n` rows of covariates. Smooth values outside the
/// training range are clamped onto the boundary.
inline CovariateBlock term_columns(const TermSet& terms, const CovariateTable& table, Eigen::Index n) {
    CovariateBlock block;
    block.columns.resize(n, static_cast<Eigen::Index>(terms.column_count()));
    Eigen::Index c = 0;
    for (const auto& f : terms.factors) {
        const auto& v = require_covariate(table, f.covariate);
        if (v.size() != n) throw InputError("covariate '" + f.covariate + "' has the wrong length");
        for (Eigen::Index i = 0; i < n; ++i) block.columns(i, c) = v[i] >= f.chosen ? 1.0 : 0.0;
        block.labels.push_back(f.covariate + ">=" + format_threshold(f.chosen));
        ++c;
    }
    for (const auto& s : terms.smooths) {
        const auto& v = require_covariate(table, s.covariate);
        if (v.size() != n) throw InputError("covariate '" + s.covariate + "' has the wrong length");
        Eigen::MatrixXd B = bspline_basis(v, s.interior_knots, s.degree, s.lower, s.upper);
        for (Eigen::Index j = 1; j < B.cols(); ++j) {
            block.columns.col(c) = B.col(j);
            block.labels.push_back(s.covariate + ":bs" + std::to_string(j));
            ++c;
        }
    }
    return block;
}

// ---------------------------------------------------------------------------
// Design matrix

/// Active knots as indices into the candidate set, each with an r index.
struct KnotSet {
    std::vector<std::size_t> knots;
    std::vector<std::size_t> r_index;

    std::size_t size() const noexcept { return knots.size(); }
    friend bool operator==(const KnotSet&, const KnotSet&) = default;
};

struct RadialColumn {
    std::size_t knot;     ///< candidate index
    std::size_t r_index;  ///< position in the RSequence
    double r;
};

/// Column layout: intercept, covariate block, one radial column per knot.
struct DesignMatrix {
    Eigen::MatrixXd X;
    std::vector<std::string> labels;
    std::vector<RadialColumn> radial;
    Eigen::Index n_covariate_columns = 0;
    BasisKind basis = BasisKind::Exponential;

    Eigen::Index rows() const { return X.rows(); }
    Eigen::Index cols() const { return X.cols(); }
    Eigen::Index radial_offset() const { return 1 + n_covariate_columns; }
};

inline std::string radial_label(std::size_t knot, std::size_t r_index) {
    return "knot" + std::to_string(knot) + ":r" + std::to_string(r_index + 1);
}

/// Lays out intercept | covariates | radial columns from distances between the
/// design rows and each knot (`knot_distances` is rows x knots).
inline DesignMatrix assemble_design(const Eigen::MatrixXd& knot_distances, const std::vector<RadialColumn>& radial,
                                    BasisKind kind, const CovariateBlock* covariates = nullptr) {
    const Eigen::Index n = knot_distances.rows();
    if (static_cast<std::size_t>(knot_distances.cols()) != radial.size())
        throw InputError("assemble_design: distance columns do not match knot count");
    const Eigen::Index nc = covariates ? covariates->cols() : 0;
    if (covariates && covariates->columns.rows() != n)
        throw InputError("assemble_design: covariate block has the wrong number of rows");

    DesignMatrix d;
    d.basis = kind;
    d.n_covariate_columns = nc;
    d.radial = radial;
    d.X.resize(n, 1 + nc + static_cast<Eigen::Index>(radial.size()));
    d.X.col(0).setOnes();
    d.labels.push_back("(Intercept)");
    if (nc > 0) {
        d.X.middleCols(1, nc) = covariates->columns;
        d.labels.insert(d.labels.end(), covariates->labels.begin(), covariates->labels.end());
    }
    for (std::size_t k = 0; k < radial.size(); ++k) {
        const auto col = 1 + nc + static_cast<Eigen::Index>(k);
        const double r = radial[k].r;
        for (Eigen::Index i = 0; i < n; ++i)
            d.X(i, col) = radial_basis(knot_distances(i, static_cast<Eigen::Index>(k)), r, kind);
        d.labels.push_back(radial_label(radial[k].knot, radial[k].r_index));
    }
    return d;
}

/// Design over all rows of `h` (data x candidate distances) for the given knots.
inline DesignMatrix build_design(const KnotSet& knots, const DistanceMatrix& h, const RSequence& rseq,
                                 const CovariateBlock* covariates = nullptr) {
    if (knots.knots.size() != knots.r_index.size()) throw InputError("build_design: knot and r-index counts differ");
    std::set<std::size_t> seen;
    std::vector<RadialColumn> radial;
    Eigen::MatrixXd kd(h.rows(), static_cast<Eigen::Index>(knots.size()));
    for (std::size_t k = 0; k < knots.size(); ++k) {
        const auto idx = knots.knots[k];
        if (!seen.insert(idx).second) throw InputError("build_design: duplicate knot index " + std::to_string(idx));
        if (idx >= static_cast<std::size_t>(h.cols())) throw InputError("build_design: knot index out of range");
        if (knots.r_index[k] >= rseq.size()) throw InputError("build_design: r index out of range");
        kd.col(static_cast<Eigen::Index>(k)) = h.values.col(static_cast<Eigen::Index>(idx));
        radial.push_back({idx, knots.r_index[k], rseq[knots.r_index[k]]});
    }
    return assemble_design(kd, radial, rseq.kind, covariates);
}

}  // namespace salsa2d
