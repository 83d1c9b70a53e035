// Runs each acceptance criterion and prints one PASS/FAIL line per criterion.
// Exits non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "field_study.hpp"
#include "scenarios.hpp"
#include "salsa2d/salsa2d.hpp"

using namespace salsa2d;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::string fmt(const char* f, double a, double b) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

// 1. Field-study sweep rows satisfy BIC = -2 LL + K log N up to rounding.
Outcome bic_convention() {
    double worst = 0.0;
    for (const auto& r : fixtures::kSweep)
        worst = std::max(worst, std::abs(r.bic - bic_value(r.loglik, static_cast<std::size_t>(r.end_knots),
                                                           static_cast<std::size_t>(fixtures::kStudyTotalPoints))));
    return {worst <= 0.3, fmt("max |BIC - (-2LL + K log N)| = %.4f over 48 rows", worst)};
}

// 2. Intercept-only fit on the field-study configuration matches the closed form.
Outcome null_model() {
    PointSet pres, pseudo;
    for (int i = 0; i < fixtures::kStudyPresences; ++i) pres.points.push_back({double(i), 0.0});
    for (int i = 0; i < fixtures::kStudyPseudo; ++i) pseudo.points.push_back({double(i), 1.0});
    PpmDataset d = assemble_dataset(pres, pseudo, fixtures::kStudyArea);
    DesignMatrix x;
    x.X = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(d.size()), 1);
    x.labels = {"(Intercept)"};
    FittedModel m = fit_weighted_poisson(x, d.y, d.w);
    const double lambda = 320.0 / 37872.00032;
    const double ll = 320.0 * (std::log(lambda) - 1.0);
    const double e1 = std::abs(std::exp(m.coefficients[0]) - lambda) / lambda;
    const double e2 = std::abs(m.log_pl - ll) / std::abs(ll);
    return {e1 <= 1e-8 && e2 <= 1e-8, fmt("relative errors: lambda %.2e, logPL %.2e", e1, e2)};
}

// 3. IRLS agrees with a derivative-free maximiser of the weighted objective.
Outcome irls_oracle() {
    double worst = 0.0;
    bool ok = true;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto p = oracle::random_small_problem(seed);
        DesignMatrix d;
        d.X = p.X;
        for (Eigen::Index j = 0; j < p.X.cols(); ++j) d.labels.push_back("c" + std::to_string(j));
        FittedModel m = fit_weighted_poisson(d, p.y, p.w);
        ok &= m.converged;
        auto neg = [&](const Eigen::VectorXd& b) { return -oracle::log_pl(p.X, p.y, p.w, b); };
        Eigen::VectorXd ref = oracle::nelder_mead(neg, Eigen::VectorXd::Zero(p.X.cols()));
        worst = std::max(worst, (m.coefficients - ref).cwiseAbs().maxCoeff());
    }
    return {ok && worst <= 1e-6, fmt("20 problems, max coefficient difference %.2e", worst)};
}

// 4. Shortest-path algorithms agree; geodesic bounds hold.
Outcome distance_oracle() {
    std::mt19937_64 rng(44);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    double worst_rel = 0.0;
    bool below_euclid = false;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 100)(rng);
        GridGraph g;
        for (std::size_t i = 0; i < n; ++i) g.add_node({u(rng), u(rng)}, NodeKind::Grid);
        for (std::size_t i = 1; i < n; ++i) g.add_edge(i, std::uniform_int_distribution<std::size_t>(0, i - 1)(rng));
        for (std::size_t e = 0; e < n; ++e) {
            std::size_t i = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
            std::size_t j = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
            if (i != j) g.add_edge(i, j);
        }
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        GeodesicOptions fo, dop;
        fo.algorithm = ShortestPath::Floyd;
        dop.algorithm = ShortestPath::Dijkstra;
        auto f = geodesic_distances(g, all, all, fo);
        auto d = geodesic_distances(g, all, all, dop);
        for (Eigen::Index i = 0; i < f.rows(); ++i)
            for (Eigen::Index j = 0; j < f.cols(); ++j) {
                worst_rel = std::max(worst_rel, std::abs(f(i, j) - d(i, j)) / (1.0 + d(i, j)));
                const double e = distance(g.node(static_cast<std::size_t>(i)), g.node(static_cast<std::size_t>(j)));
                below_euclid |= d(i, j) < e - 1e-12 * (1.0 + e);
            }
    }
    const BoundingBox box{0, 0, 1, 1};
    PointSet nodes = lattice_points(box, 0.1);
    auto geo = geodesic_point_distances(box, 0.1, Polygon{}, nodes, nodes);
    auto euc = euclidean_distances(nodes, nodes);
    double ratio = 1.0;
    for (Eigen::Index i = 0; i < geo.rows(); ++i)
        for (Eigen::Index j = 0; j < geo.cols(); ++j) {
            if (i != j) ratio = std::max(ratio, geo(i, j) / euc(i, j));
            below_euclid |= geo(i, j) < euc(i, j) - 1e-12;
        }
    return {worst_rel <= 1e-12 && !below_euclid && ratio <= 1.083,
            fmt("50 graphs, Floyd vs Dijkstra max rel diff %.1e; octile max ratio %.5f", worst_rel, ratio) +
                (below_euclid ? "; geodesic below Euclidean" : "")};
}

// 5. Search invariants on the two-bump benchmark.
Outcome salsa_invariants() {
    auto t = scenario::two_bump_problem(1, 40);
    SalsaConfig one;
    one.threads = 1;
    SalsaConfig many = one;
    many.threads = 0;
    const std::size_t k_min = 2, k_max = 60;
    auto t0 = std::chrono::steady_clock::now();
    auto a = run_salsa2d(t->problem, one, 20, k_min, k_max);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    auto b = run_salsa2d(t->problem, many, 20, k_min, k_max);
    bool strict = true, bounded = true;
    for (const auto& e : a.trace) {
        if (e.accepted) strict &= e.after < e.before;
        bounded &= e.knots >= k_min && e.knots <= k_max;
    }
    bool same = a.knots == b.knots && a.model.log_pl == b.model.log_pl && a.trace.size() == b.trace.size();
    for (std::size_t i = 0; same && i < a.trace.size(); ++i) same = a.trace[i].action == b.trace[i].action;
    return {strict && bounded && same && secs < 300,
            std::to_string(t->bench.presences.size()) + " presences, " + std::to_string(a.trace.size()) +
                " trace entries, final K = " + std::to_string(a.knots.size()) + (strict ? "" : "; non-improving accept") +
                (bounded ? "" : "; K out of bounds") + (same ? "" : "; runs differ") + fmt("; %.0f s per run", secs)};
}

// 6. SALSA2D against the model-averaging baseline.
Outcome method_comparison() {
    int wins = 0;
    std::string detail;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto t = scenario::two_bump_problem(seed, 40);
        SalsaConfig cfg;
        auto r = run_salsa2d(t->problem, cfg, 40, 2, 100);
        const double avg = scenario::averaging_log_pl(t->problem);
        wins += r.model.log_pl >= avg;
        detail += fmt(" %.1f/%.1f", r.model.log_pl, avg);
    }
    return {wins >= 8, std::to_string(wins) + "/10 seeds (salsa/average logPL:" + detail + ")"};
}

// 7. Akaike weights fixture.
Outcome aicc_weights_fixture() {
    auto w = aicc_weights({100.0, 108.679});
    auto eq = aicc_weights({50.0, 50.0});
    const bool ok = std::abs(w[0] - fixtures::kGausGeoWeightHigh) <= 1e-4 &&
                    std::abs(w[1] - fixtures::kGausGeoWeightLow) <= 1e-4 && eq[0] == 0.5 && eq[1] == 0.5;
    return {ok, fmt("weights (%.5f, %.5f); equal pair exact", w[0], w[1])};
}

// 8. Grid convergence on a homogeneous process. A flat truth needs few knots;
// 30 or 40 knots on ~300 points overfit the coarse lattices and never settle.
Outcome grid_convergence_check() {
    const Polygon region = rectangle(0, 0, 1, 1);
    PointSet pres = simulate_homogeneous(300.0, region, 8);
    ConvergenceOptions opt;
    std::vector<ConvergenceSpec> specs;
    for (auto basis : {BasisKind::Exponential, BasisKind::Gaussian})
        for (std::size_t k : {5, 10}) specs.push_back({basis, k});
    auto t0 = std::chrono::steady_clock::now();
    auto res = grid_convergence(region, Polygon{}, pres, scenario::unit_spacing_ladder(), specs, opt);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double expected = scenario::coarsest_stable_spacing(res, opt.tolerance);
    bool stable = true;
    for (const auto& row : res.table)
        if (row.spacing <= res.chosen_spacing && std::isfinite(row.rel_change)) stable &= row.rel_change < opt.tolerance;
    return {res.converged && res.chosen_spacing == expected && stable && secs < 120,
            fmt("chose spacing %.4f (expected %.4f)", res.chosen_spacing, expected) +
                (res.converged ? "" : ", no spacing converged") + fmt(", %.0f s", secs)};
}

// 9. Recovery of r index, factor threshold and spline breakpoint.
Outcome recovery() {
    int r_hits = 0, t_hits = 0, b_hits = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        bool ok = true;
        for (auto v : scenario::select_r_recovery(seed, 2)) ok &= std::abs(static_cast<long>(v) - 2) <= 1;
        r_hits += ok;
        t_hits += scenario::threshold_recovery(seed) == 3.0;
        b_hits += scenario::breakpoint_recovery(seed, 0.6);
    }
    return {r_hits >= 8 && t_hits >= 8 && b_hits >= 8, "select_r " + std::to_string(r_hits) + "/10, threshold " +
                                                             std::to_string(t_hits) + "/10, breakpoint " +
                                                             std::to_string(b_hits) + "/10"};
}

}  // namespace

int main() {
    set_warning_sink([](const std::string&) {});
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"BIC convention identity", bic_convention},
        {"null-model closed form", null_model},
        {"IRLS oracle equivalence", irls_oracle},
        {"distance oracle", distance_oracle},
        {"SALSA2D invariants", salsa_invariants},
        {"method comparison", method_comparison},
        {"AICc weight fixture", aicc_weights_fixture},
        {"grid convergence", grid_convergence_check},
        {"recovery checks", recovery},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %zu. %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
