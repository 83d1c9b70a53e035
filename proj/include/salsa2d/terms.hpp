#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "salsa2d/common.hpp"
#include "salsa2d/design.hpp"
#include "salsa2d/fit.hpp"
#include "salsa2d/ppm.hpp"

namespace salsa2d {

// One-dimensional covariate terms. Knot placement uses a greedy quantile
// search (forward addition then backward pruning), a simplified stand-in for
// a full 1-D adaptive spline search.

namespace detail {

inline double fit_terms(const PpmDataset& data, const TermSet& terms, const CovariateBlock* fixed, Criterion criterion) {
    CovariateBlock block = term_columns(terms, data.covariates, static_cast<Eigen::Index>(data.size()));
    if (fixed && fixed->cols() > 0) {
        CovariateBlock all;
        all.columns.resize(block.columns.rows(), fixed->cols() + block.cols());
        all.columns << fixed->columns, block.columns;
        all.labels = fixed->labels;
        all.labels.insert(all.labels.end(), block.labels.begin(), block.labels.end());
        block = std::move(all);
    }
    DesignMatrix d = assemble_design(Eigen::MatrixXd(static_cast<Eigen::Index>(data.size()), 0), {}, BasisKind::Exponential,
                                     block.cols() > 0 ? &block : nullptr);
    FitOptions opt;
    opt.covariance = false;
    return criterion_value(try_fit_weighted_poisson(d, data.y, data.w, opt), criterion);
}

inline bool better(double a, double b) {
    return std::isfinite(a) && (!std::isfinite(b) || a < b - 1e-10 * std::max(1.0, std::abs(b)));
}

}  // namespace detail

/// Candidate interior knots: the 5%, 10%, ..., 95% quantiles of the covariate,
/// deduplicated and kept strictly inside its range.
inline std::vector<double> quantile_knot_candidates(const Eigen::VectorXd& v, std::size_t n_quantiles = 19) {
    std::vector<double> vals(v.data(), v.data() + v.size());
    const double lo = *std::min_element(vals.begin(), vals.end());
    const double hi = *std::max_element(vals.begin(), vals.end());
    std::vector<double> out;
    for (std::size_t q = 1; q <= n_quantiles; ++q) {
        double x = quantile(vals, static_cast<double>(q) / static_cast<double>(n_quantiles + 1));
        if (x > lo && x < hi && (out.empty() || x > out.back())) out.push_back(x);
    }
    return out;
}

/// Chooses interior knots for a quadratic B-spline smooth of `covariate`.
/// Each added or removed knot must strictly improve the criterion of the
/// model intercept + `fixed` + smooth.
inline SmoothTermSpec select_knots_1d(const PpmDataset& data, const std::string& covariate, std::size_t max_knots,
                                      Criterion criterion = Criterion::BIC, const CovariateBlock* fixed = nullptr,
                                      int degree = 2) {
    const auto& v = require_covariate(data.covariates, covariate);
    SmoothTermSpec spec;
    spec.covariate = covariate;
    spec.degree = degree;
    spec.selection = max_knots > 0 ? KnotSelection::BicSearch : KnotSelection::Fixed;
    spec.lower = v.minCoeff();
    spec.upper = v.maxCoeff();
    if (spec.upper <= spec.lower) {
        warn("covariate '" + covariate + "' is constant; smooth has no knots");
        spec.upper = spec.lower + 1.0;
        return spec;
    }
    const auto candidates = quantile_knot_candidates(v);
    auto score = [&](const std::vector<double>& knots) {
        TermSet t;
        SmoothTermSpec s = spec;
        s.interior_knots = knots;
        std::sort(s.interior_knots.begin(), s.interior_knots.end());
        t.smooths.push_back(s);
        return detail::fit_terms(data, t, fixed, criterion);
    };

    std::vector<double> knots;
    double current = score(knots);
    while (knots.size() < max_knots) {
        double best = std::numeric_limits<double>::infinity();
        double best_knot = 0.0;
        for (double c : candidates) {
            if (std::find(knots.begin(), knots.end(), c) != knots.end()) continue;
            auto trial = knots;
            trial.push_back(c);
            double s = score(trial);
            if (detail::better(s, best)) {
                best = s;
                best_knot = c;
            }
        }
        if (!detail::better(best, current)) break;
        knots.push_back(best_knot);
        current = best;
    }
    while (!knots.empty()) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_pos = knots.size();
        for (std::size_t j = 0; j < knots.size(); ++j) {
            auto trial = knots;
            trial.erase(trial.begin() + static_cast<std::ptrdiff_t>(j));
            double s = score(trial);
            if (detail::better(s, best)) {
                best = s;
                best_pos = j;
            }
        }
        if (!detail::better(best, current)) break;
        knots.erase(knots.begin() + static_cast<std::ptrdiff_t>(best_pos));
        current = best;
    }
    std::sort(knots.begin(), knots.end());
    spec.interior_knots = knots;
    return spec;
}

/// Fits one two-level factor per candidate cutoff and keeps the best; ties go
/// to the smaller cutoff, so candidate order does not matter.
inline FactorThresholdSpec select_threshold(const PpmDataset& data, const std::string& covariate,
                                            std::vector<double> candidates, Criterion criterion = Criterion::BIC,
                                            const CovariateBlock* fixed = nullptr) {
    if (candidates.empty()) throw InputError("select_threshold: no candidate thresholds");
    require_covariate(data.covariates, covariate);
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    FactorThresholdSpec spec;
    spec.covariate = covariate;
    spec.candidates = candidates;
    double best = std::numeric_limits<double>::infinity();
    spec.chosen = candidates.front();
    for (double t : candidates) {
        TermSet ts;
        ts.factors.push_back({covariate, candidates, t});
        double s = detail::fit_terms(data, ts, fixed, criterion);
        if (detail::better(s, best)) {
            best = s;
            spec.chosen = t;
        }
    }
    return spec;
}

struct EffectPoint {
    double value;
    double intensity;
};

/// Predicted intensity along `grid` for one covariate, every other model term
/// fixed at `fixed_values` and the spatial term at the model's reference
/// contribution. Smooth-term values outside the training range are clamped.
inline std::vector<EffectPoint> partial_effect(const FittedModel& model, const std::string& covariate,
                                               const std::vector<double>& grid,
                                               const std::map<std::string, double>& fixed_values) {
    const Eigen::Index n = static_cast<Eigen::Index>(grid.size());
    CovariateTable table;
    auto column_for = [&](const std::string& name) {
        if (table.count(name)) return;
        Eigen::VectorXd col(n);
        if (name == covariate) {
            for (Eigen::Index i = 0; i < n; ++i) col[i] = grid[static_cast<std::size_t>(i)];
        } else {
            auto it = fixed_values.find(name);
            if (it == fixed_values.end()) throw InputError("partial_effect: no fixed value for covariate '" + name + "'");
            col.setConstant(it->second);
        }
        table.emplace(name, std::move(col));
    };
    for (const auto& f : model.terms.factors) column_for(f.covariate);
    for (const auto& s : model.terms.smooths) {
        column_for(s.covariate);
        if (s.covariate == covariate) {
            std::size_t outside = 0;
            for (double g : grid)
                if (g < s.lower || g > s.upper) ++outside;
            if (outside > 0)
                warn("partial_effect: " + std::to_string(outside) + " grid values outside the training range of '" +
                     covariate + "' were clamped");
        }
    }
    CovariateBlock block = term_columns(model.terms, table, n);
    if (block.cols() != model.n_covariate_columns)
        throw InputError("partial_effect: model terms do not match its covariate columns");
    Eigen::VectorXd eta = Eigen::VectorXd::Constant(n, model.coefficients[0] + model.spatial_reference);
    if (block.cols() > 0) eta += block.columns * model.coefficients.segment(1, block.cols());
    std::vector<EffectPoint> out;
    for (Eigen::Index i = 0; i < n; ++i)
        out.push_back({grid[static_cast<std::size_t>(i)], std::exp(std::min(eta[i], detail::kMaxEta))});
    return out;
}

}  // namespace salsa2d
