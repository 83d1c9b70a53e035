#pragma once

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "salsa2d/common.hpp"
#include "salsa2d/design.hpp"
#include "salsa2d/geometry.hpp"
#include "salsa2d/graph.hpp"

namespace salsa2d {

/// Quadrature weight of every presence row; the response there is its reciprocal.
inline constexpr double kPresenceWeight = 1e-6;

/// Presence rows first, then pseudo-absence (quadrature) rows.
struct PpmDataset {
    PointSet points;
    Eigen::VectorXd y;
    Eigen::VectorXd w;
    std::vector<bool> is_presence;
    CovariateTable covariates;
    double region_area = 0.0;
    double grid_spacing = 0.0;
    std::size_t n_presence = 0;

    std::size_t size() const noexcept { return points.size(); }
    std::size_t n_pseudo() const noexcept { return points.size() - n_presence; }

    PointSet presences() const {
        return PointSet(std::vector<Point>(points.points.begin(), points.points.begin() + static_cast<std::ptrdiff_t>(n_presence)));
    }
    PointSet pseudo_absences() const {
        return PointSet(std::vector<Point>(points.points.begin() + static_cast<std::ptrdiff_t>(n_presence), points.points.end()));
    }
};

/// Square lattice at `spacing` anchored at the region's bounding-box
/// lower-left corner, keeping points inside the region (edges included) and
/// outside the exclusion zone.
inline PointSet generate_pseudo_absences(const Polygon& region, const Polygon& exclusion, double spacing) {
    if (!(spacing > 0)) throw InputError("pseudo-absence spacing must be positive");
    PointSet lattice = lattice_points(bounding_box(region), spacing);
    PointSet out;
    for (const auto& p : lattice.points)
        if (point_in_polygon(p, region) && !point_in_polygon(p, exclusion)) out.points.push_back(p);
    if (out.empty()) throw InputError("no pseudo-absence points survive inside the region at spacing " + std::to_string(spacing));
    return out;
}

/// Area of the region minus the parts of the exclusion zone that lie inside it
/// (approximated as the whole exclusion area when its first vertex is inside).
inline double effective_area(const Polygon& region, const Polygon& exclusion) {
    double a = polygon_area(region);
    if (!exclusion.empty() && point_in_polygon(exclusion.rings.front().front(), region)) a -= polygon_area(exclusion);
    return a;
}

namespace detail {

inline void check_covariates(const CovariateTable& t, std::size_t rows, const char* what) {
    for (const auto& [name, col] : t) {
        if (static_cast<std::size_t>(col.size()) != rows)
            throw InputError(std::string(what) + " covariate '" + name + "' has " + std::to_string(col.size()) +
                             " values for " + std::to_string(rows) + " points");
    }
}

}  // namespace detail

/// Downweighted Poisson encoding: presences get w = 1e-6 and y = 1/w, pseudo
/// rows get y = 0 and an equal share of the region area. A presence with
/// multiplicity m becomes m identical rows.
inline PpmDataset assemble_dataset(const PointSet& presences_in, const PointSet& pseudo, double region_area,
                                   const CovariateTable& presence_covariates_in = {},
                                   const CovariateTable& pseudo_covariates = {}, double grid_spacing = 0.0) {
    if (!(region_area > 0)) throw InputError("region area must be positive");
    if (pseudo.empty()) throw InputError("at least one pseudo-absence point is required");
    detail::check_covariates(presence_covariates_in, presences_in.size(), "presence");
    detail::check_covariates(pseudo_covariates, pseudo.size(), "pseudo-absence");

    PointSet presences;
    CovariateTable presence_covariates;
    if (presences_in.multiplicity.empty()) {
        presences.points = presences_in.points;
        presence_covariates = presence_covariates_in;
    } else {
        if (presences_in.multiplicity.size() != presences_in.size())
            throw InputError("presence multiplicity has the wrong length");
        std::vector<Eigen::Index> source;
        for (std::size_t i = 0; i < presences_in.size(); ++i) {
            const double m = presences_in.multiplicity[i];
            if (!(m >= 1) || m != std::floor(m))
                throw InputError("presence multiplicity must be a positive integer (row " + std::to_string(i) + ")");
            for (long k = 0; k < static_cast<long>(m); ++k) {
                presences.points.push_back(presences_in[i]);
                source.push_back(static_cast<Eigen::Index>(i));
            }
        }
        for (const auto& [name, col] : presence_covariates_in) {
            Eigen::VectorXd expanded(static_cast<Eigen::Index>(source.size()));
            for (std::size_t r = 0; r < source.size(); ++r) expanded[static_cast<Eigen::Index>(r)] = col[source[r]];
            presence_covariates.emplace(name, std::move(expanded));
        }
    }

    const std::size_t np = presences.size(), nq = pseudo.size(), n = np + nq;
    PpmDataset d;
    d.region_area = region_area;
    d.grid_spacing = grid_spacing;
    d.n_presence = np;
    d.points.points.reserve(n);
    d.points.points.insert(d.points.points.end(), presences.points.begin(), presences.points.end());
    d.points.points.insert(d.points.points.end(), pseudo.points.begin(), pseudo.points.end());
    d.y.resize(static_cast<Eigen::Index>(n));
    d.w.resize(static_cast<Eigen::Index>(n));
    d.is_presence.assign(n, false);
    const double pseudo_w = region_area / static_cast<double>(nq);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        if (i < np) {
            d.w[r] = kPresenceWeight;
            d.y[r] = 1.0 / kPresenceWeight;
            d.is_presence[i] = true;
        } else {
            d.w[r] = pseudo_w;
            d.y[r] = 0.0;
        }
    }

    std::set<std::string> names;
    for (const auto& [k, v] : presence_covariates) names.insert(k);
    for (const auto& [k, v] : pseudo_covariates) names.insert(k);
    for (const auto& name : names) {
        auto a = presence_covariates.find(name);
        auto b = pseudo_covariates.find(name);
        if ((a == presence_covariates.end() && np > 0) || b == pseudo_covariates.end())
            throw InputError("covariate '" + name + "' must be given for both presences and pseudo-absences");
        Eigen::VectorXd col(static_cast<Eigen::Index>(n));
        if (np > 0) col.head(static_cast<Eigen::Index>(np)) = a->second;
        col.tail(static_cast<Eigen::Index>(nq)) = b->second;
        std::string bad;
        for (Eigen::Index i = 0; i < col.size(); ++i)
            if (!std::isfinite(col[i])) bad += (bad.empty() ? "" : ",") + std::to_string(i);
        if (!bad.empty()) throw InputError("covariate '" + name + "' has non-finite values in rows " + bad);
        d.covariates.emplace(name, std::move(col));
    }
    return d;
}

}  // namespace salsa2d
