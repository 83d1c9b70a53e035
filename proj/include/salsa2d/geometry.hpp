#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "salsa2d/common.hpp"

namespace salsa2d {

/// Planar projected coordinates in km.
struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Points with an optional per-point multiplicity (empty means every point counts once).
struct PointSet {
    std::vector<Point> points;
    std::vector<double> multiplicity;

    PointSet() = default;
    PointSet(std::vector<Point> pts) : points(std::move(pts)) {}  // NOLINT(google-explicit-constructor)

    std::size_t size() const noexcept { return points.size(); }
    bool empty() const noexcept { return points.empty(); }
    const Point& operator[](std::size_t i) const { return points[i]; }
    double weight(std::size_t i) const { return multiplicity.empty() ? 1.0 : multiplicity[i]; }
};

using Ring = std::vector<Point>;

/// Closed rings classified with the even-odd rule, so holes and multi-part
/// polygons need no orientation bookkeeping. A polygon with no rings is empty
/// (contains nothing), which is how "no exclusion zone" is expressed.
struct Polygon {
    std::vector<Ring> rings;

    bool empty() const noexcept { return rings.empty(); }
};

namespace detail {

inline double ring_signed_area(const Ring& ring) {
    double a = 0.0;
    for (std::size_t i = 0, n = ring.size(); i < n; ++i) {
        const Point& p = ring[i];
        const Point& q = ring[(i + 1) % n];
        a += p.x * q.y - q.x * p.y;
    }
    return 0.5 * a;
}

inline double point_segment_distance(const Point& p, const Point& a, const Point& b) {
    double dx = b.x - a.x, dy = b.y - a.y;
    double len2 = dx * dx + dy * dy;
    if (len2 == 0.0) return distance(p, a);
    double t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2;
    t = std::clamp(t, 0.0, 1.0);
    return distance(p, Point{a.x + t * dx, a.y + t * dy});
}

inline double orient(const Point& a, const Point& b, const Point& c) {
    return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

inline bool on_segment(const Point& p, const Point& a, const Point& b, double eps) {
    return point_segment_distance(p, a, b) <= eps;
}

inline double bbox_scale(const Ring& ring) {
    double s = 0.0;
    for (const auto& p : ring) s = std::max({s, std::abs(p.x), std::abs(p.y)});
    return std::max(s, 1.0);
}

}  // namespace detail

/// Drops a repeated closing vertex and checks each ring has at least three
/// distinct vertices and non-zero area.
inline Polygon normalize_polygon(Polygon poly) {
    for (auto& ring : poly.rings) {
        if (ring.size() >= 2 && ring.front() == ring.back()) ring.pop_back();
        std::vector<Point> distinct;
        for (const auto& p : ring)
            if (std::find(distinct.begin(), distinct.end(), p) == distinct.end()) distinct.push_back(p);
        if (distinct.size() < 3) throw InputError("polygon ring has fewer than 3 distinct vertices");
        double scale = detail::bbox_scale(ring);
        if (std::abs(detail::ring_signed_area(ring)) <= 1e-14 * scale * scale)
            throw InputError("polygon ring is degenerate (collinear vertices)");
        for (const auto& p : ring)
            if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw InputError("polygon vertex is not finite");
    }
    return poly;
}

/// Even-odd containment; points on any ring edge count as inside.
inline bool point_in_polygon(const Point& p, const Polygon& poly) {
    bool inside = false;
    for (const auto& ring : poly.rings) {
        const std::size_t n = ring.size();
        if (n < 3) throw InputError("polygon ring has fewer than 3 vertices");
        const double eps = 1e-12 * detail::bbox_scale(ring);
        for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
            const Point& a = ring[i];
            const Point& b = ring[j];
            if (detail::on_segment(p, a, b, eps)) return true;
            if ((a.y > p.y) != (b.y > p.y)) {
                double xcross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if (p.x < xcross) inside = !inside;
            }
        }
    }
    return inside;
}

/// Area enclosed under the even-odd rule (holes subtract). Assumes rings do
/// not cross each other.
inline double polygon_area(const Polygon& poly) {
    double area = 0.0;
    for (std::size_t i = 0; i < poly.rings.size(); ++i) {
        int depth = 0;
        for (std::size_t j = 0; j < poly.rings.size(); ++j) {
            if (i == j) continue;
            if (point_in_polygon(poly.rings[i].front(), Polygon{{poly.rings[j]}})) ++depth;
        }
        double a = std::abs(detail::ring_signed_area(poly.rings[i]));
        area += (depth % 2 == 0) ? a : -a;
    }
    return area;
}

struct BoundingBox {
    double xmin, ymin, xmax, ymax;
};

inline BoundingBox bounding_box(const Polygon& poly) {
    if (poly.empty()) throw InputError("bounding box of an empty polygon");
    BoundingBox b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                  -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& ring : poly.rings)
        for (const auto& p : ring) {
            b.xmin = std::min(b.xmin, p.x);
            b.ymin = std::min(b.ymin, p.y);
            b.xmax = std::max(b.xmax, p.x);
            b.ymax = std::max(b.ymax, p.y);
        }
    return b;
}

/// Axis-aligned rectangle as a one-ring polygon.
inline Polygon rectangle(double xmin, double ymin, double xmax, double ymax) {
    return Polygon{{Ring{{xmin, ymin}, {xmax, ymin}, {xmax, ymax}, {xmin, ymax}}}};
}

/// True when segment ab touches the polygon interior or crosses its boundary.
inline bool segment_hits_polygon(const Point& a, const Point& b, const Polygon& poly) {
    if (poly.empty()) return false;
    if (point_in_polygon(a, poly) || point_in_polygon(b, poly)) return true;
    if (point_in_polygon(Point{0.5 * (a.x + b.x), 0.5 * (a.y + b.y)}, poly)) return true;
    for (const auto& ring : poly.rings) {
        for (std::size_t i = 0, n = ring.size(); i < n; ++i) {
            const Point& c = ring[i];
            const Point& d = ring[(i + 1) % n];
            double o1 = detail::orient(a, b, c), o2 = detail::orient(a, b, d);
            double o3 = detail::orient(c, d, a), o4 = detail::orient(c, d, b);
            if (((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0)) && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0)
                return true;
        }
    }
    return false;
}

enum class Metric { Euclidean, Geodesic };

inline std::string to_string(Metric m) { return m == Metric::Euclidean ? "euclidean" : "geodesic"; }

inline Metric parse_metric(const std::string& s) {
    if (s == "euclidean") return Metric::Euclidean;
    if (s == "geodesic") return Metric::Geodesic;
    throw InputError("unknown distance metric '" + s + "' (expected euclidean or geodesic)");
}

/// Dense rows x columns distances in km. Unreachable geodesic pairs hold +inf.
struct DistanceMatrix {
    Eigen::MatrixXd values;
    Metric metric = Metric::Euclidean;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }
    double operator()(Eigen::Index i, Eigen::Index j) const { return values(i, j); }
};

inline DistanceMatrix euclidean_distances(const PointSet& a, const PointSet& b) {
    if (a.empty() || b.empty()) throw InputError("euclidean_distances: empty point set");
    DistanceMatrix d;
    d.metric = Metric::Euclidean;
    d.values.resize(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
    for (std::size_t j = 0; j < b.size(); ++j)
        for (std::size_t i = 0; i < a.size(); ++i)
            d.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = distance(a[i], b[j]);
    return d;
}

/// Point and polyline features for distance-to-feature covariates.
struct FeatureSet {
    std::vector<Point> points;
    std::vector<std::vector<Point>> polylines;

    bool empty() const noexcept { return points.empty() && polylines.empty(); }
};

inline std::vector<double> distance_to_nearest_feature(const PointSet& pts, const FeatureSet& features) {
    if (features.empty()) throw InputError("distance_to_nearest_feature: no features");
    std::vector<double> out(pts.size(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Point& p = pts[i];
        double best = std::numeric_limits<double>::infinity();
        for (const auto& f : features.points) best = std::min(best, distance(p, f));
        for (const auto& line : features.polylines) {
            if (line.size() == 1) best = std::min(best, distance(p, line.front()));
            for (std::size_t k = 1; k < line.size(); ++k)
                best = std::min(best, detail::point_segment_distance(p, line[k - 1], line[k]));
        }
        out[i] = best;
    }
    return out;
}

}  // namespace salsa2d
