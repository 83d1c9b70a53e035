#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "salsa2d/common.hpp"
#include "salsa2d/design.hpp"
#include "salsa2d/fit.hpp"
#include "salsa2d/geometry.hpp"
#include "salsa2d/graph.hpp"
#include "salsa2d/ppm.hpp"

namespace salsa2d {

// ---------------------------------------------------------------------------
// Legal knot locations

struct CandidateSet {
    /// Deduplicated presence sites first, then the space-filled pseudo-absences.
    PointSet points;
    std::size_t n_presence_sites = 0;

    std::size_t size() const noexcept { return points.size(); }
};

struct CandidateOptions {
    double pseudo_fraction = 0.2;
    /// Exact number of pseudo-absence candidates; overrides the fraction rule.
    std::optional<std::size_t> pseudo_count;
    std::uint64_t seed = 0;
};

/// Pseudo-absence count that makes up `fraction` of the final candidate set.
inline std::size_t pseudo_candidate_count(std::size_t n_unique, double fraction) {
    if (fraction < 0 || fraction >= 1) throw InputError("pseudo_fraction must be in [0, 1)");
    if (fraction == 0) return 0;
    return static_cast<std::size_t>(std::ceil(fraction / (1.0 - fraction) * static_cast<double>(n_unique) - 1e-9));
}

/// Unique presence locations plus a greedy maximin selection of pseudo-absence
/// points. The selection fills gaps: each pick maximises its distance to the
/// presence sites and to earlier picks.
inline CandidateSet build_candidate_knots(const PointSet& presences, const PointSet& pseudo,
                                          const CandidateOptions& opt = {}) {
    if (presences.empty()) throw InputError("build_candidate_knots: no presences");
    CandidateSet out;
    std::set<std::pair<double, double>> seen;
    for (const auto& p : presences.points)
        if (seen.emplace(p.x, p.y).second) out.points.points.push_back(p);
    out.n_presence_sites = out.points.size();

    std::size_t want = opt.pseudo_count ? *opt.pseudo_count : pseudo_candidate_count(out.n_presence_sites, opt.pseudo_fraction);
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < pseudo.size(); ++i)
        if (!seen.count({pseudo[i].x, pseudo[i].y})) pool.push_back(i);
    want = std::min(want, pool.size());
    if (want == 0) return out;

    std::vector<double> mind(pool.size(), std::numeric_limits<double>::infinity());
    for (std::size_t a = 0; a < pool.size(); ++a)
        for (std::size_t s = 0; s < out.n_presence_sites; ++s)
            mind[a] = std::min(mind[a], distance(pseudo[pool[a]], out.points[s]));
    std::vector<bool> taken(pool.size(), false);
    for (std::size_t pick = 0; pick < want; ++pick) {
        std::size_t best = pool.size();
        for (std::size_t a = 0; a < pool.size(); ++a)
            if (!taken[a] && (best == pool.size() || mind[a] > mind[best])) best = a;
        taken[best] = true;
        const Point& chosen = pseudo[pool[best]];
        out.points.points.push_back(chosen);
        for (std::size_t a = 0; a < pool.size(); ++a) mind[a] = std::min(mind[a], distance(pseudo[pool[a]], chosen));
    }
    return out;
}

namespace detail {

/// Smallest pairwise distance among `chosen`, skipping position `skip`, and
/// how many pairs attain it.
inline std::pair<double, std::size_t> min_pair(const std::vector<std::size_t>& chosen, const DistanceMatrix& d,
                                               std::size_t skip) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t count = 0;
    for (std::size_t a = 0; a < chosen.size(); ++a) {
        if (a == skip) continue;
        for (std::size_t b = a + 1; b < chosen.size(); ++b) {
            if (b == skip) continue;
            const double v = d(static_cast<Eigen::Index>(chosen[a]), static_cast<Eigen::Index>(chosen[b]));
            if (v < best) {
                best = v;
                count = 1;
            } else if (v == best) {
                ++count;
            }
        }
    }
    return {best, count};
}

/// Swap refinement for a maximin design; each accepted swap strictly improves
/// (min distance, -pairs at the min) so the loop terminates.
inline void maximin_swap(std::vector<std::size_t>& chosen, std::vector<bool>& used, const DistanceMatrix& d) {
    if (chosen.size() < 2) return;
    auto better = [](std::pair<double, std::size_t> a, std::pair<double, std::size_t> b) {
        return a.first > b.first || (a.first == b.first && a.second < b.second);
    };
    auto current = min_pair(chosen, d, chosen.size());
    const std::size_t n = used.size();
    for (bool changed = true; changed;) {
        changed = false;
        for (std::size_t i = 0; i < chosen.size(); ++i) {
            const auto rest = min_pair(chosen, d, i);
            std::pair<double, std::size_t> best_value = current;
            std::size_t best_c = n;
            for (std::size_t c = 0; c < n; ++c) {
                if (used[c]) continue;
                auto value = rest;
                for (std::size_t j = 0; j < chosen.size(); ++j) {
                    if (j == i) continue;
                    const double v = d(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(chosen[j]));
                    if (v < value.first) value = {v, 1};
                    else if (v == value.first) ++value.second;
                }
                if (better(value, best_value)) {
                    best_value = value;
                    best_c = c;
                }
            }
            if (best_c == n) continue;
            used[chosen[i]] = false;
            used[best_c] = true;
            chosen[i] = best_c;
            current = best_value;
            changed = true;
        }
    }
}

}  // namespace detail

/// Maximin design of `count` candidates. A greedy pass starts at the
/// candidate nearest the centroid and repeatedly adds the one farthest (under
/// `distances`) from everything already chosen. A swap pass then replaces
/// chosen points while that raises the smallest pairwise distance, or keeps it
/// and reduces how many pairs attain it. Ties go to the lowest index, so the
/// result does not depend on `seed`; it is accepted for interface stability
/// with randomised variants.
inline std::vector<std::size_t> space_fill(const PointSet& candidates, std::size_t count, const DistanceMatrix& distances,
                                           std::uint64_t seed = 0) {
    (void)seed;
    const std::size_t n = candidates.size();
    if (count > n) throw InputError("space_fill: requested " + std::to_string(count) + " of " + std::to_string(n) + " candidates");
    if (static_cast<std::size_t>(distances.rows()) != n || static_cast<std::size_t>(distances.cols()) != n)
        throw InputError("space_fill: distance matrix does not match the candidate set");
    std::vector<std::size_t> chosen;
    if (count == 0) return chosen;
    double cx = 0, cy = 0;
    for (const auto& p : candidates.points) {
        cx += p.x;
        cy += p.y;
    }
    const Point centroid{cx / static_cast<double>(n), cy / static_cast<double>(n)};
    std::size_t first = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (distance(candidates[i], centroid) < distance(candidates[first], centroid)) first = i;
    chosen.push_back(first);
    std::vector<double> mind(n);
    std::vector<bool> used(n, false);
    used[first] = true;
    for (std::size_t i = 0; i < n; ++i) mind[i] = distances(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(first));
    while (chosen.size() < count) {
        std::size_t best = n;
        for (std::size_t i = 0; i < n; ++i)
            if (!used[i] && (best == n || mind[i] > mind[best])) best = i;
        used[best] = true;
        chosen.push_back(best);
        for (std::size_t i = 0; i < n; ++i)
            mind[i] = std::min(mind[i], distances(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(best)));
    }
    detail::maximin_swap(chosen, used, distances);
    return chosen;
}

// ---------------------------------------------------------------------------
// Search problem, state and configuration

/// Everything the search reads; immutable once built and shared by all fits.
struct SalsaProblem {
    const PpmDataset* data = nullptr;
    PointSet candidates;
    DistanceMatrix data_to_candidates;  ///< N data rows x L candidates
    DistanceMatrix candidate_distances; ///< L x L
    RSequence rseq;
    CovariateBlock covariates;  ///< fixed non-spatial columns, may be empty
    TermSet terms;              ///< how `covariates` was built, for prediction

    const CovariateBlock* covariate_block() const { return covariates.cols() > 0 ? &covariates : nullptr; }
};

/// Euclidean problem over a dataset; distances are computed here.
inline SalsaProblem make_problem(const PpmDataset& data, const PointSet& candidates, std::size_t R, BasisKind basis,
                                 CovariateBlock covariates = {}, TermSet terms = {}) {
    SalsaProblem p;
    p.data = &data;
    p.candidates = candidates;
    p.data_to_candidates = euclidean_distances(data.points, candidates);
    p.candidate_distances = euclidean_distances(candidates, candidates);
    p.rseq = r_sequence(p.candidate_distances, R, basis);
    p.covariates = std::move(covariates);
    p.terms = std::move(terms);
    return p;
}

/// Problem with precomputed (e.g. geodesic) distances.
inline SalsaProblem make_problem(const PpmDataset& data, const PointSet& candidates, DistanceMatrix data_to_candidates,
                                 DistanceMatrix candidate_distances, std::size_t R, BasisKind basis,
                                 CovariateBlock covariates = {}, TermSet terms = {}) {
    if (static_cast<std::size_t>(data_to_candidates.rows()) != data.size() ||
        static_cast<std::size_t>(data_to_candidates.cols()) != candidates.size())
        throw InputError("data-to-candidate distances have the wrong shape");
    if (static_cast<std::size_t>(candidate_distances.rows()) != candidates.size() ||
        candidate_distances.rows() != candidate_distances.cols())
        throw InputError("candidate distances have the wrong shape");
    SalsaProblem p;
    p.data = &data;
    p.candidates = candidates;
    p.data_to_candidates = std::move(data_to_candidates);
    p.candidate_distances = std::move(candidate_distances);
    p.rseq = r_sequence(p.candidate_distances, R, basis);
    p.covariates = std::move(covariates);
    p.terms = std::move(terms);
    return p;
}

struct KnotState {
    KnotSet active;
    std::size_t k_min = 2;
    std::size_t k_max = 100;
    std::size_t k_start = 10;
    std::size_t n_candidates = 0;

    std::size_t size() const noexcept { return active.size(); }

    void validate() const {
        if (k_min < 2) throw InputError("K_min must be at least 2");
        if (k_min > k_max) throw InputError("K_min exceeds K_max");
        if (k_max > n_candidates) throw InputError("K_max exceeds the number of legal knot positions");
        if (k_start < k_min || k_start > k_max) throw InputError("start knot count must lie in [K_min, K_max]");
        std::set<std::size_t> s(active.knots.begin(), active.knots.end());
        if (s.size() != active.knots.size()) throw InputError("active knots must be distinct");
        for (auto k : active.knots)
            if (k >= n_candidates) throw InputError("active knot outside the candidate set");
    }
};

enum class RSelectMode { AfterEachStep, DuringSteps };
enum class ResidualKind { KnotRegions, Pearson };

struct SalsaConfig {
    Criterion criterion = Criterion::BIC;
    std::size_t n_residual_candidates = 10;
    std::size_t n_improve_neighbours = 5;
    RSelectMode r_select_mode = RSelectMode::AfterEachStep;
    ResidualKind residuals = ResidualKind::KnotRegions;
    bool select_r = true;
    std::size_t max_outer_iterations = 20;
    std::uint64_t seed = 0;
    unsigned threads = 0;

    void validate() const {
        if (n_residual_candidates < 1 || n_improve_neighbours < 1 || max_outer_iterations < 1)
            throw InputError("SALSA2D counts must be >= 1");
    }
};

struct TraceEntry {
    std::string step;    ///< simplify, exchange, improve, select_r
    std::string action;  ///< e.g. "drop knot 12", "move knot 3 -> 40"
    double before = 0.0;
    double after = 0.0;
    bool accepted = false;
    std::size_t knots = 0;  ///< knot count after the action (or current, if rejected)
};

using SalsaTrace = std::vector<TraceEntry>;

/// Current knots with their fitted model and criterion value.
struct SearchState {
    KnotSet knots;
    FittedModel model;
    double score = std::numeric_limits<double>::infinity();
};

// ---------------------------------------------------------------------------
// Search context: shared fitting machinery with memoisation

class SalsaSearch {
public:
    SalsaSearch(const SalsaProblem& problem, SalsaConfig config, std::size_t k_min, std::size_t k_max)
        : problem_(problem), config_(config), k_min_(k_min), k_max_(k_max) {
        if (!problem.data) throw InputError("SALSA2D problem has no dataset");
        config_.validate();
        if (k_min_ < 2 || k_min_ > k_max_) throw InputError("need 2 <= K_min <= K_max");
        if (k_max_ > problem.candidates.size()) throw InputError("K_max exceeds the number of legal knot positions");
        lambda_w_ = problem.data->w;
    }

    const SalsaProblem& problem() const { return problem_; }
    const SalsaConfig& config() const { return config_; }
    std::size_t k_min() const { return k_min_; }
    std::size_t k_max() const { return k_max_; }
    const SalsaTrace& trace() const { return trace_; }
    SalsaTrace& trace() { return trace_; }
    std::size_t fits_performed() const { return fits_.load(); }

    DesignMatrix design(const KnotSet& ks) const {
        const Eigen::Index n = problem_.data_to_candidates.rows();
        const Eigen::Index nc = problem_.covariates.cols();
        DesignMatrix d;
        d.basis = problem_.rseq.kind;
        d.n_covariate_columns = nc;
        d.X.resize(n, 1 + nc + static_cast<Eigen::Index>(ks.size()));
        d.X.col(0).setOnes();
        d.labels.reserve(1 + static_cast<std::size_t>(nc) + ks.size());
        d.labels.push_back("(Intercept)");
        if (nc > 0) {
            d.X.middleCols(1, nc) = problem_.covariates.columns;
            d.labels.insert(d.labels.end(), problem_.covariates.labels.begin(), problem_.covariates.labels.end());
        }
        std::set<std::size_t> seen;
        for (std::size_t k = 0; k < ks.size(); ++k) {
            if (!seen.insert(ks.knots[k]).second) throw InputError("duplicate knot " + std::to_string(ks.knots[k]));
            d.X.col(1 + nc + static_cast<Eigen::Index>(k)) = column(ks.knots[k], ks.r_index[k]);
            d.radial.push_back({ks.knots[k], ks.r_index[k], problem_.rseq[ks.r_index[k]]});
            d.labels.push_back(radial_label(ks.knots[k], ks.r_index[k]));
        }
        return d;
    }

    /// Fits a knot set, warm-started from `warm` where columns coincide.
    FittedModel fit(const KnotSet& ks, const FittedModel* warm, bool with_covariance) const {
        DesignMatrix d = design(ks);
        FitOptions opt;
        opt.covariance = with_covariance;
        Eigen::VectorXd start;
        if (warm && warm->converged && warm->coefficients.size() > 0) {
            start = warm_start(ks, *warm);
            opt.start = &start;
        }
        ++fits_;
        return try_fit_weighted_poisson(d, problem_.data->y, problem_.data->w, opt);
    }

    double score(const FittedModel& m) const { return criterion_value(m, config_.criterion); }

    /// Scores a batch of knot sets (in parallel), consulting the memo first.
    std::vector<std::shared_ptr<const FittedModel>> evaluate(const std::vector<KnotSet>& batch, const FittedModel* warm) {
        std::vector<std::shared_ptr<const FittedModel>> out(batch.size());
        std::vector<std::string> keys(batch.size());
        std::vector<std::size_t> todo;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            keys[i] = key(batch[i]);
            auto it = memo_.find(keys[i]);
            if (it != memo_.end()) out[i] = it->second;
            else todo.push_back(i);
        }
        parallel_for(
            todo.size(),
            [&](std::size_t t) {
                const std::size_t i = todo[t];
                out[i] = std::make_shared<const FittedModel>(fit(batch[i], warm, false));
            },
            config_.threads);
        if (memo_.size() > kMemoCap) memo_.clear();
        for (auto i : todo) memo_.emplace(keys[i], out[i]);
        return out;
    }

    /// Full model (with covariance) for an adopted knot set.
    SearchState adopt(const KnotSet& ks, const FittedModel& warm) const {
        SearchState s;
        s.knots = ks;
        s.model = fit(ks, &warm, true);
        s.score = score(s.model);
        return s;
    }

    static bool improves(double candidate, double current) {
        if (!std::isfinite(candidate)) return false;
        if (!std::isfinite(current)) return true;
        return candidate < current - 1e-10 * std::max(1.0, std::abs(current));
    }

    void record(std::string step, std::string action, double before, double after, bool accepted, std::size_t knots) {
        trace_.push_back({std::move(step), std::move(action), before, after, accepted, knots});
    }

    /// Greedy +/-1 walk on one knot's r index, keeping the rest fixed.
    /// Returns the best knot set reached and its model.
    std::pair<KnotSet, std::shared_ptr<const FittedModel>> refine_r(KnotSet ks, std::size_t pos,
                                                                    std::shared_ptr<const FittedModel> model) {
        const std::size_t R = problem_.rseq.size();
        if (R < 2 || !model) return {ks, model};
        double best = score(*model);
        for (int dir : {+1, -1}) {
            bool moved = false;
            while (true) {
                long next = static_cast<long>(ks.r_index[pos]) + dir;
                if (next < 0 || next >= static_cast<long>(R)) break;
                KnotSet trial = ks;
                trial.r_index[pos] = static_cast<std::size_t>(next);
                auto res = evaluate({trial}, model.get());
                double s = score(*res[0]);
                if (!improves(s, best)) break;
                ks = trial;
                model = res[0];
                best = s;
                moved = true;
            }
            if (moved) break;
        }
        return {ks, model};
    }

private:
    static constexpr std::size_t kMemoCap = 20000;

    static std::string key(const KnotSet& ks) {
        std::vector<std::pair<std::size_t, std::size_t>> v;
        for (std::size_t i = 0; i < ks.size(); ++i) v.emplace_back(ks.knots[i], ks.r_index[i]);
        std::sort(v.begin(), v.end());
        std::string s;
        for (auto [k, r] : v) s += std::to_string(k) + ":" + std::to_string(r) + ",";
        return s;
    }

    Eigen::VectorXd warm_start(const KnotSet& ks, const FittedModel& warm) const {
        const Eigen::Index nc = problem_.covariates.cols();
        Eigen::VectorXd b = Eigen::VectorXd::Zero(1 + nc + static_cast<Eigen::Index>(ks.size()));
        b.head(1 + nc) = warm.coefficients.head(1 + nc);
        for (std::size_t k = 0; k < ks.size(); ++k)
            for (std::size_t j = 0; j < warm.radial.size(); ++j)
                if (warm.radial[j].knot == ks.knots[k] && warm.radial[j].r_index == ks.r_index[k])
                    b[1 + nc + static_cast<Eigen::Index>(k)] = warm.coefficients[1 + nc + static_cast<Eigen::Index>(j)];
        return b;
    }

    const Eigen::VectorXd& column(std::size_t knot, std::size_t r_index) const {
        const std::size_t key = knot * problem_.rseq.size() + r_index;
        std::lock_guard lock(column_mutex_);
        auto it = columns_.find(key);
        if (it != columns_.end()) return *it->second;
        const double r = problem_.rseq[r_index];
        const auto& h = problem_.data_to_candidates.values;
        auto col = std::make_unique<Eigen::VectorXd>(h.rows());
        for (Eigen::Index i = 0; i < h.rows(); ++i)
            (*col)[i] = radial_basis(h(i, static_cast<Eigen::Index>(knot)), r, problem_.rseq.kind);
        return *columns_.emplace(key, std::move(col)).first->second;
    }

    const SalsaProblem& problem_;
    SalsaConfig config_;
    std::size_t k_min_, k_max_;
    Eigen::VectorXd lambda_w_;
    SalsaTrace trace_;
    std::unordered_map<std::string, std::shared_ptr<const FittedModel>> memo_;
    mutable std::unordered_map<std::size_t, std::unique_ptr<Eigen::VectorXd>> columns_;
    mutable std::mutex column_mutex_;
    mutable std::atomic<std::size_t> fits_{0};
};

// ---------------------------------------------------------------------------
// Initialisation with drop-step

struct InitResult {
    SearchState state;
    FittedModel input_model;
    std::vector<std::size_t> dropped;  ///< candidate indices removed by the drop-step
};

/// Intercept plus fixed covariates, no radial columns.
inline FittedModel fit_input_model(SalsaSearch& search) {
    return search.fit(KnotSet{}, nullptr, true);
}

/// Fits the starting knots. If that model's fit is worse than the simpler
/// input model (or the fit fails), knots are removed one at a time, largest
/// coefficient variance first, until it is not. A singular design drops the
/// first dependent radial column instead.
inline InitResult initialise(SalsaSearch& search, KnotSet start) {
    InitResult res;
    res.input_model = fit_input_model(search);
    if (!res.input_model.converged) throw NumericalError("input model failed to converge: " + res.input_model.diagnostics);
    const double reference = res.input_model.log_pl;
    const Eigen::Index off = 1 + search.problem().covariates.cols();

    while (true) {
        FittedModel m = search.fit(start, &res.input_model, true);
        const bool ok = m.converged && m.log_pl >= reference - 1e-9 * std::max(1.0, std::abs(reference));
        if (ok) {
            res.state.knots = start;
            res.state.score = search.score(m);
            res.state.model = std::move(m);
            return res;
        }
        if (start.size() <= search.k_min())
            throw NumericalError("drop-step reached K_min without producing a converged model: " + m.diagnostics);

        std::size_t drop = start.size();
        if (m.covariance.size() > 0 && m.coefficients.size() > 0) {
            double worst = -1.0;
            for (std::size_t k = 0; k < start.size(); ++k) {
                double v = m.covariance(off + static_cast<Eigen::Index>(k), off + static_cast<Eigen::Index>(k));
                if (!std::isfinite(v)) v = std::numeric_limits<double>::infinity();
                if (v > worst) {
                    worst = v;
                    drop = k;
                }
            }
        } else {
            // Singular design: the diagnostics list dependent columns by label.
            for (std::size_t k = 0; k < start.size() && drop == start.size(); ++k)
                if (m.diagnostics.find(" " + radial_label(start.knots[k], start.r_index[k])) != std::string::npos) drop = k;
            if (drop == start.size()) drop = start.size() - 1;
        }
        res.dropped.push_back(start.knots[drop]);
        start.knots.erase(start.knots.begin() + static_cast<std::ptrdiff_t>(drop));
        start.r_index.erase(start.r_index.begin() + static_cast<std::ptrdiff_t>(drop));
    }
}

// ---------------------------------------------------------------------------
// Residual regions

struct RegionScore {
    std::size_t candidate;
    double observed;
    double expected;
    double score;
};

/// Assigns every data row to its nearest legal remaining candidate (under the
/// problem's metric), then scores each region by |observed presences -
/// expected count|, the expectation summing intensity x quadrature weight over
/// the region's pseudo-absence rows. Sorted by score, ties to lower index.
inline std::vector<RegionScore> knot_region_residuals(const SalsaProblem& problem, const Eigen::VectorXd& lambda,
                                                      const std::vector<std::size_t>& legal_remaining) {
    if (legal_remaining.empty()) throw InputError("knot_region_residuals: no legal remaining candidates");
    const PpmDataset& data = *problem.data;
    if (static_cast<std::size_t>(lambda.size()) != data.size()) throw InputError("intensity vector length mismatch");
    std::vector<RegionScore> regions;
    std::unordered_map<std::size_t, std::size_t> slot;
    for (auto c : legal_remaining) {
        slot.emplace(c, regions.size());
        regions.push_back({c, 0.0, 0.0, 0.0});
    }
    const auto& h = problem.data_to_candidates.values;
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::size_t best = legal_remaining.front();
        double bd = h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(best));
        for (auto c : legal_remaining) {
            double d = h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
            if (d < bd || (d == bd && c < best)) {
                bd = d;
                best = c;
            }
        }
        auto& reg = regions[slot[best]];
        if (data.is_presence[i]) reg.observed += 1.0;
        else reg.expected += lambda[static_cast<Eigen::Index>(i)] * data.w[static_cast<Eigen::Index>(i)];
    }
    for (auto& r : regions) r.score = std::abs(r.observed - r.expected);
    std::stable_sort(regions.begin(), regions.end(), [](const RegionScore& a, const RegionScore& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.candidate < b.candidate;
    });
    return regions;
}

/// Candidate locations nearest to the rows with the largest Pearson residuals
/// sqrt(w)(y - lambda)/sqrt(lambda), distinct, in decreasing residual order.
inline std::vector<std::size_t> pearson_candidates(const SalsaProblem& problem, const Eigen::VectorXd& lambda,
                                                   const std::vector<std::size_t>& legal_remaining, std::size_t count) {
    if (legal_remaining.empty()) throw InputError("pearson_candidates: no legal remaining candidates");
    const PpmDataset& data = *problem.data;
    std::vector<std::pair<double, std::size_t>> res;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        res.emplace_back(std::sqrt(data.w[r]) * (data.y[r] - lambda[r]) / std::sqrt(lambda[r]), i);
    }
    std::stable_sort(res.begin(), res.end(), [](auto& a, auto& b) { return a.first > b.first; });
    std::vector<std::size_t> out;
    const auto& h = problem.data_to_candidates.values;
    for (const auto& [value, i] : res) {
        std::size_t best = legal_remaining.front();
        for (auto c : legal_remaining)
            if (h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) <
                h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(best)))
                best = c;
        if (std::find(out.begin(), out.end(), best) == out.end()) out.push_back(best);
        if (out.size() == count) break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Search steps. Each evaluates a batch of single-change neighbours of the
// current state and adopts the best one only if it strictly improves the
// criterion. Ties prefer fewer knots, then the lower candidate index.

namespace detail {

struct Move {
    KnotSet knots;
    std::string action;
    std::size_t location;   ///< candidate index that breaks ties
    std::size_t changed;    ///< position of the changed knot, or npos
};

inline bool apply_best(SalsaSearch& search, SearchState& state, std::vector<Move> moves, const char* step) {
    if (moves.empty()) {
        search.record(step, "none available", state.score, state.score, false, state.knots.size());
        return false;
    }
    std::vector<KnotSet> batch;
    batch.reserve(moves.size());
    for (const auto& m : moves) batch.push_back(m.knots);
    auto models = search.evaluate(batch, &state.model);

    if (search.config().r_select_mode == RSelectMode::DuringSteps) {
        for (std::size_t i = 0; i < moves.size(); ++i) {
            if (moves[i].changed == static_cast<std::size_t>(-1)) continue;
            auto [ks, model] = search.refine_r(moves[i].knots, moves[i].changed, models[i]);
            if (ks.r_index != moves[i].knots.r_index) {
                moves[i].action += " (r" + std::to_string(ks.r_index[moves[i].changed] + 1) + ")";
                moves[i].knots = std::move(ks);
                models[i] = std::move(model);
            }
        }
    }

    std::size_t best = moves.size();
    auto better = [&](std::size_t a, std::size_t b) {
        double sa = search.score(*models[a]), sb = search.score(*models[b]);
        if (sa != sb) return sa < sb;
        if (moves[a].knots.size() != moves[b].knots.size()) return moves[a].knots.size() < moves[b].knots.size();
        return moves[a].location < moves[b].location;
    };
    for (std::size_t i = 0; i < moves.size(); ++i)
        if (best == moves.size() || better(i, best)) best = i;

    const double candidate = search.score(*models[best]);
    if (!SalsaSearch::improves(candidate, state.score)) {
        search.record(step, moves[best].action, state.score, candidate, false, state.knots.size());
        return false;
    }
    SearchState next = search.adopt(moves[best].knots, *models[best]);
    if (!SalsaSearch::improves(next.score, state.score)) {
        search.record(step, moves[best].action, state.score, next.score, false, state.knots.size());
        return false;
    }
    search.record(step, moves[best].action, state.score, next.score, true, next.knots.size());
    state = std::move(next);
    return true;
}

inline std::vector<std::size_t> legal_remaining(const SalsaSearch& search, const KnotSet& ks) {
    std::vector<bool> active(search.problem().candidates.size(), false);
    for (auto k : ks.knots) active[k] = true;
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < active.size(); ++c)
        if (!active[c]) out.push_back(c);
    return out;
}

inline Eigen::VectorXd fitted_intensity(const SalsaSearch& search, const SearchState& state) {
    return predict_intensity(state.model, search.design(state.knots));
}

}  // namespace detail

/// One simplification pass: best single-knot removal, if it improves.
inline bool simplify_step(SalsaSearch& search, SearchState& state) {
    if (state.knots.size() <= search.k_min()) return false;
    std::vector<detail::Move> moves;
    for (std::size_t j = 0; j < state.knots.size(); ++j) {
        KnotSet ks = state.knots;
        ks.knots.erase(ks.knots.begin() + static_cast<std::ptrdiff_t>(j));
        ks.r_index.erase(ks.r_index.begin() + static_cast<std::ptrdiff_t>(j));
        moves.push_back({std::move(ks), "drop knot " + std::to_string(state.knots.knots[j]), state.knots.knots[j],
                         static_cast<std::size_t>(-1)});
    }
    return detail::apply_best(search, state, std::move(moves), "simplify");
}

/// One exchange pass over the worst-fitting residual locations: move any
/// existing knot there, or add a knot there while below K_max.
inline bool exchange_step(SalsaSearch& search, SearchState& state) {
    auto legal = detail::legal_remaining(search, state.knots);
    if (legal.empty()) return false;
    Eigen::VectorXd lambda = detail::fitted_intensity(search, state);
    const std::size_t n = search.config().n_residual_candidates;
    std::vector<std::size_t> targets;
    if (search.config().residuals == ResidualKind::KnotRegions) {
        auto regions = knot_region_residuals(search.problem(), lambda, legal);
        for (std::size_t i = 0; i < regions.size() && targets.size() < n; ++i) targets.push_back(regions[i].candidate);
    } else {
        targets = pearson_candidates(search.problem(), lambda, legal, n);
    }

    const std::size_t middle = search.problem().rseq.middle();
    std::vector<detail::Move> moves;
    for (auto c : targets) {
        for (std::size_t j = 0; j < state.knots.size(); ++j) {
            KnotSet ks = state.knots;
            ks.knots[j] = c;
            moves.push_back({std::move(ks), "move knot " + std::to_string(state.knots.knots[j]) + " -> " + std::to_string(c),
                             c, j});
        }
        if (state.knots.size() < search.k_max()) {
            KnotSet ks = state.knots;
            ks.knots.push_back(c);
            ks.r_index.push_back(middle);
            moves.push_back({std::move(ks), "add knot " + std::to_string(c), c, state.knots.size()});
        }
    }
    return detail::apply_best(search, state, std::move(moves), "exchange");
}

/// Unused candidates nearest to a knot under the problem's metric.
inline std::vector<std::size_t> nearest_unused(const SalsaProblem& problem, std::size_t knot, const KnotSet& ks,
                                               std::size_t count) {
    std::vector<bool> active(problem.candidates.size(), false);
    for (auto k : ks.knots) active[k] = true;
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t c = 0; c < problem.candidates.size(); ++c)
        if (!active[c]) d.emplace_back(problem.candidate_distances(static_cast<Eigen::Index>(knot), static_cast<Eigen::Index>(c)), c);
    count = std::min(count, d.size());
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(count), d.end());
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(d[i].second);
    return out;
}

/// One improvement pass: best relocation of a knot to one of its nearest
/// unused candidates.
inline bool improve_step(SalsaSearch& search, SearchState& state) {
    std::vector<detail::Move> moves;
    for (std::size_t j = 0; j < state.knots.size(); ++j) {
        for (auto c : nearest_unused(search.problem(), state.knots.knots[j], state.knots, search.config().n_improve_neighbours)) {
            KnotSet ks = state.knots;
            ks.knots[j] = c;
            moves.push_back({std::move(ks), "move knot " + std::to_string(state.knots.knots[j]) + " -> " + std::to_string(c),
                             c, j});
        }
    }
    return detail::apply_best(search, state, std::move(moves), "improve");
}

/// Cycles through the knots stepping each r index by +/-1 while the criterion
/// improves, others held fixed; repeats until a full pass changes nothing.
/// Returns whether any change was adopted.
inline bool select_r(SalsaSearch& search, SearchState& state) {
    const std::size_t R = search.problem().rseq.size();
    if (R < 2 || state.knots.size() == 0) return false;
    bool any = false;
    while (true) {
        bool pass_changed = false;
        for (std::size_t pos = 0; pos < state.knots.size(); ++pos) {
            for (int dir : {+1, -1}) {
                bool moved = false;
                while (true) {
                    long next = static_cast<long>(state.knots.r_index[pos]) + dir;
                    if (next < 0 || next >= static_cast<long>(R)) break;
                    KnotSet ks = state.knots;
                    ks.r_index[pos] = static_cast<std::size_t>(next);
                    auto res = search.evaluate({ks}, &state.model);
                    double s = search.score(*res[0]);
                    std::string action = "knot " + std::to_string(ks.knots[pos]) + " r" +
                                         std::to_string(state.knots.r_index[pos] + 1) + " -> r" + std::to_string(next + 1);
                    if (!SalsaSearch::improves(s, state.score)) break;
                    SearchState adopted = search.adopt(ks, *res[0]);
                    if (!SalsaSearch::improves(adopted.score, state.score)) break;
                    search.record("select_r", action, state.score, adopted.score, true, ks.size());
                    state = std::move(adopted);
                    moved = pass_changed = any = true;
                }
                if (moved) break;
            }
        }
        if (!pass_changed) break;
    }
    return any;
}

// ---------------------------------------------------------------------------
// Driver

struct SalsaResult {
    FittedModel model;
    KnotSet knots;
    SalsaTrace trace;
    FittedModel initial_model;
    double initial_score = 0.0;
    std::vector<std::size_t> dropped_at_init;
    std::size_t outer_iterations = 0;
    bool hit_iteration_cap = false;
    std::size_t fits = 0;
};

/// Copies provenance (knot coordinates, r ladder, terms) into a fitted model
/// and records its mean spatial contribution.
inline void attach_provenance(FittedModel& m, const SalsaProblem& problem, const DesignMatrix& design) {
    m.metric = problem.data_to_candidates.metric;
    m.r_sequence = problem.rseq;
    m.terms = problem.terms;
    m.knot_points.clear();
    for (const auto& rc : m.radial) m.knot_points.push_back(problem.candidates[rc.knot]);
    m.spatial_reference = mean_spatial_contribution(m, design);
}

/// Fits a fixed knot set with full provenance (no search).
inline FittedModel fit_knots(const SalsaProblem& problem, const KnotSet& ks) {
    SalsaConfig cfg;
    SalsaSearch search(problem, cfg, 2, std::max<std::size_t>(2, std::min(problem.candidates.size(), std::max<std::size_t>(ks.size(), 2))));
    FittedModel m = search.fit(ks, nullptr, true);
    attach_provenance(m, problem, search.design(ks));
    return m;
}

/// Space-filled start, drop-step, then repeated simplify / exchange / improve
/// (each to a fixed point, with r re-selection per the configured mode) until
/// an outer pass makes no improvement or the iteration cap is reached.
inline SalsaResult run_salsa2d(const SalsaProblem& problem, const SalsaConfig& config, std::size_t k_start,
                               std::size_t k_min, std::size_t k_max) {
    KnotState bounds;
    bounds.k_min = k_min;
    bounds.k_max = k_max;
    bounds.k_start = k_start;
    bounds.n_candidates = problem.candidates.size();
    bounds.validate();

    SalsaSearch search(problem, config, k_min, k_max);
    KnotSet start;
    start.knots = space_fill(problem.candidates, k_start, problem.candidate_distances, config.seed);
    start.r_index.assign(start.knots.size(), problem.rseq.middle());

    InitResult init = initialise(search, start);
    SalsaResult result;
    result.initial_model = init.state.model;
    result.initial_score = init.state.score;
    result.dropped_at_init = init.dropped;
    SearchState state = std::move(init.state);

    const bool r_after = config.select_r && config.r_select_mode == RSelectMode::AfterEachStep;
    for (std::size_t outer = 1;; ++outer) {
        result.outer_iterations = outer;
        bool improved = false;
        while (state.knots.size() > search.k_min() && simplify_step(search, state)) improved = true;
        if (r_after && select_r(search, state)) improved = true;
        while (exchange_step(search, state)) improved = true;
        if (r_after && select_r(search, state)) improved = true;
        while (improve_step(search, state)) improved = true;
        if (r_after && select_r(search, state)) improved = true;
        if (!improved) break;
        if (outer >= config.max_outer_iterations) {
            result.hit_iteration_cap = true;
            warn("SALSA2D stopped at the outer iteration cap (" + std::to_string(config.max_outer_iterations) +
                 "); returning the best model so far");
            break;
        }
    }

    result.knots = state.knots;
    result.model = std::move(state.model);
    attach_provenance(result.model, problem, search.design(result.knots));
    result.trace = search.trace();
    result.fits = search.fits_performed();
    return result;
}

}  // namespace salsa2d
