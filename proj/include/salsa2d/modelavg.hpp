#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "salsa2d/common.hpp"
#include "salsa2d/design.hpp"
#include "salsa2d/fit.hpp"
#include "salsa2d/salsa.hpp"

namespace salsa2d {

/// One fixed-knot surface: K space-filled knots sharing one r index.
struct EnsembleMember {
    FittedModel model;
    KnotSet knots;
    std::size_t k = 0;
    std::size_t r_index = 0;
    bool ok = false;  ///< converged and scored
};

struct AveragingEnsemble {
    std::vector<EnsembleMember> members;
    std::vector<double> weights;  ///< aligned with members; 0 for excluded ones
    std::vector<double> delta;    ///< AICc minus the filtered minimum (inf if failed)
    double delta_threshold = 10.0;

    std::size_t n_averaged() const {
        return static_cast<std::size_t>(std::count_if(weights.begin(), weights.end(), [](double w) { return w > 0; }));
    }
};

/// Fits |K_list| x R surfaces. Failed members are kept (flagged, with a
/// warning) so the grid stays rectangular, but never receive weight.
inline std::vector<EnsembleMember> fit_grid(const SalsaProblem& problem, const std::vector<std::size_t>& k_list,
                                            unsigned threads = 0) {
    if (k_list.empty()) throw InputError("fit_grid: K list is empty");
    const std::size_t R = problem.rseq.size();
    std::vector<EnsembleMember> members;
    for (auto k : k_list) {
        if (k > problem.candidates.size())
            throw InputError("fit_grid: K=" + std::to_string(k) + " exceeds the candidate count");
        auto knots = space_fill(problem.candidates, k, problem.candidate_distances);
        for (std::size_t r = 0; r < R; ++r) {
            EnsembleMember m;
            m.k = k;
            m.r_index = r;
            m.knots.knots = knots;
            m.knots.r_index.assign(k, r);
            members.push_back(std::move(m));
        }
    }
    SalsaConfig cfg;
    cfg.criterion = Criterion::AICc;
    cfg.threads = threads;
    std::size_t kmax = 2;
    for (auto k : k_list) kmax = std::max(kmax, k);
    SalsaSearch search(problem, cfg, 2, std::min(kmax, std::max<std::size_t>(2, problem.candidates.size())));
    parallel_for(
        members.size(),
        [&](std::size_t i) {
            auto& m = members[i];
            m.model = search.fit(m.knots, nullptr, true);
            m.ok = m.model.converged && std::isfinite(m.model.aicc);
        },
        threads);
    for (auto& m : members) {
        if (!m.ok) {
            warn("model-averaging member K=" + std::to_string(m.k) + " r" + std::to_string(m.r_index + 1) +
                 " failed: " + m.model.diagnostics);
            continue;
        }
        attach_provenance(m.model, problem, search.design(m.knots));
    }
    return members;
}

/// Akaike weights over the members within `threshold` of the best AICc
/// (inclusive unless `strict`); everything else gets weight exactly 0.
/// Non-finite AICc values never qualify.
inline std::vector<double> aicc_weights(const std::vector<double>& aicc, double threshold = 10.0, bool strict = false) {
    if (aicc.empty()) throw InputError("aicc_weights: no members");
    double best = std::numeric_limits<double>::infinity();
    for (double a : aicc)
        if (std::isfinite(a)) best = std::min(best, a);
    if (!std::isfinite(best)) throw NumericalError("aicc_weights: no member has a finite AICc");
    std::vector<double> w(aicc.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < aicc.size(); ++i) {
        if (!std::isfinite(aicc[i])) continue;
        const double d = aicc[i] - best;
        if (strict ? d < threshold : d <= threshold) {
            w[i] = std::exp(-0.5 * d);
            total += w[i];
        }
    }
    for (auto& x : w) x /= total;
    return w;
}

inline AveragingEnsemble make_ensemble(std::vector<EnsembleMember> members, double threshold = 10.0, bool strict = false) {
    AveragingEnsemble e;
    e.delta_threshold = threshold;
    std::vector<double> a;
    for (const auto& m : members) a.push_back(m.ok ? m.model.aicc : std::numeric_limits<double>::infinity());
    e.weights = aicc_weights(a, threshold, strict);
    const double best = *std::min_element(a.begin(), a.end());
    for (double x : a) e.delta.push_back(x - best);
    e.members = std::move(members);
    return e;
}

/// Pointwise weighted mean of member intensities.
inline Eigen::VectorXd average_intensities(const std::vector<double>& weights, const std::vector<Eigen::VectorXd>& lambdas) {
    if (weights.size() != lambdas.size()) throw InputError("average_intensities: weight and prediction counts differ");
    Eigen::VectorXd out;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] == 0.0) continue;
        if (out.size() == 0) out = Eigen::VectorXd::Zero(lambdas[i].size());
        if (lambdas[i].size() != out.size()) throw InputError("average_intensities: prediction lengths differ");
        out += weights[i] * lambdas[i];
    }
    if (out.size() == 0) throw InputError("average_intensities: no member carries weight");
    return out;
}

/// Averaged intensity at new locations given their distances to every
/// candidate knot (locations x candidates) and optional covariate columns.
inline Eigen::VectorXd averaged_prediction(const AveragingEnsemble& e, const DistanceMatrix& to_candidates,
                                           const RSequence& rseq, const CovariateBlock* covariates = nullptr) {
    std::vector<Eigen::VectorXd> lambdas(e.members.size());
    for (std::size_t i = 0; i < e.members.size(); ++i) {
        if (e.weights[i] == 0.0) continue;
        const auto& m = e.members[i];
        lambdas[i] = predict_intensity(m.model, build_design(m.knots, to_candidates, rseq, covariates));
    }
    return average_intensities(e.weights, lambdas);
}

/// Log-pseudolikelihood of the averaged intensity on the problem's data rows.
inline double ensemble_log_pl(const AveragingEnsemble& e, const SalsaProblem& problem) {
    Eigen::VectorXd lambda =
        averaged_prediction(e, problem.data_to_candidates, problem.rseq, problem.covariate_block());
    return log_pseudolikelihood_at(lambda, problem.data->y, problem.data->w);
}

}  // namespace salsa2d
