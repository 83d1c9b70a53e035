#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "salsa2d/common.hpp"
#include "salsa2d/design.hpp"
#include "salsa2d/geometry.hpp"
#include "salsa2d/ppm.hpp"
#include "salsa2d/salsa.hpp"

namespace salsa2d {

/// A fixed-knot search configuration: K_min = K_max = K_start = knots.
struct ConvergenceSpec {
    BasisKind basis = BasisKind::Exponential;
    std::size_t knots = 10;

    std::string label() const { return to_string(basis) + "_k" + std::to_string(knots); }
};

/// The standard specs: 10, 20, 30 and 40 knots for both basis kinds.
inline std::vector<ConvergenceSpec> default_convergence_specs() {
    std::vector<ConvergenceSpec> s;
    for (auto b : {BasisKind::Exponential, BasisKind::Gaussian})
        for (std::size_t k : {10, 20, 30, 40}) s.push_back({b, k});
    return s;
}

struct ConvergenceRow {
    double spacing;
    std::size_t n_pseudo;
    std::string spec;
    double log_pl;
    double rel_change;  ///< |logPL(next finer) - logPL| / |logPL|; NaN at the finest spacing
};

struct ConvergenceResult {
    double chosen_spacing = 0.0;
    bool converged = false;  ///< false when no spacing met the tolerance
    std::vector<ConvergenceRow> table;
};

struct ConvergenceOptions {
    double tolerance = 0.005;
    std::size_t r_count = 10;
    /// Knot candidates are the unique presence sites only by default, so the
    /// candidate set is the same at every spacing.
    double candidate_fraction = 0.0;
    SalsaConfig search;
};

/// Fits every spec at every spacing (coarse to fine) and picks the coarsest
/// spacing from which each further refinement changes every spec's logPL by
/// less than the tolerance, relative. Falls back to the finest spacing with a
/// warning.
inline ConvergenceResult grid_convergence(const Polygon& region, const Polygon& exclusion, const PointSet& presences,
                                          const std::vector<double>& spacings,
                                          const std::vector<ConvergenceSpec>& specs, const ConvergenceOptions& opt = {}) {
    if (spacings.empty()) throw InputError("grid_convergence: no spacings");
    if (specs.empty()) throw InputError("grid_convergence: no model specs");
    for (std::size_t i = 1; i < spacings.size(); ++i)
        if (!(spacings[i] < spacings[i - 1])) throw InputError("grid_convergence: spacings must decrease (coarse to fine)");

    const double area = effective_area(region, exclusion);
    std::vector<std::vector<double>> ll(spacings.size(), std::vector<double>(specs.size()));
    std::vector<std::size_t> n_pseudo(spacings.size());
    for (std::size_t s = 0; s < spacings.size(); ++s) {
        PointSet pseudo = generate_pseudo_absences(region, exclusion, spacings[s]);
        n_pseudo[s] = pseudo.size();
        PpmDataset data = assemble_dataset(presences, pseudo, area, {}, {}, spacings[s]);
        CandidateOptions co;
        co.pseudo_fraction = opt.candidate_fraction;
        CandidateSet cand = build_candidate_knots(presences, pseudo, co);
        for (std::size_t m = 0; m < specs.size(); ++m) {
            const auto& spec = specs[m];
            if (spec.knots > cand.size())
                throw InputError("grid_convergence: spec " + spec.label() + " needs more knots than candidates at spacing " +
                                 std::to_string(spacings[s]));
            SalsaProblem problem = make_problem(data, cand.points, opt.r_count, spec.basis);
            SalsaResult r = run_salsa2d(problem, opt.search, spec.knots, spec.knots, spec.knots);
            ll[s][m] = r.model.log_pl;
        }
    }

    ConvergenceResult res;
    res.chosen_spacing = spacings.back();
    std::vector<bool> within(spacings.size(), false);
    for (std::size_t s = 0; s < spacings.size(); ++s) {
        within[s] = s + 1 < spacings.size();
        for (std::size_t m = 0; m < specs.size(); ++m) {
            double rel = std::numeric_limits<double>::quiet_NaN();
            if (s + 1 < spacings.size()) {
                rel = std::abs(ll[s + 1][m] - ll[s][m]) / std::abs(ll[s][m]);
                if (!(rel < opt.tolerance)) within[s] = false;
            }
            res.table.push_back({spacings[s], n_pseudo[s], specs[m].label(), ll[s][m], rel});
        }
    }
    // Coarsest spacing from which every further refinement stays within tolerance.
    bool found = false;
    for (std::size_t s = spacings.size() - 1; s-- > 0;) {
        if (!within[s]) break;
        found = true;
        res.chosen_spacing = spacings[s];
    }
    res.converged = found;
    if (!found) warn("grid_convergence: no spacing met the tolerance; using the finest");
    return res;
}

}  // namespace salsa2d
