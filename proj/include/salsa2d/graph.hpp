#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <queue>
#include <unordered_map>
#include <utility>
#include <vector>

#include "salsa2d/common.hpp"
#include "salsa2d/geometry.hpp"

namespace salsa2d {

enum class NodeKind : std::uint8_t { Grid, Extra };

struct Edge {
    std::size_t to;
    double length;
};

/// Undirected graph over lattice nodes that survived exclusion plus attached
/// off-lattice points. Edge lengths are Euclidean.
class GridGraph {
public:
    std::size_t add_node(Point p, NodeKind kind) {
        nodes_.push_back(p);
        kinds_.push_back(kind);
        adjacency_.emplace_back();
        index_.emplace(std::make_pair(p.x, p.y), nodes_.size() - 1);
        return nodes_.size() - 1;
    }

    void add_edge(std::size_t a, std::size_t b) { add_edge(a, b, distance(nodes_.at(a), nodes_.at(b))); }

    void add_edge(std::size_t a, std::size_t b, double length) {
        if (a == b) return;
        if (length < 0 || !std::isfinite(length)) throw InputError("graph edge length must be finite and >= 0");
        adjacency_.at(a).push_back({b, length});
        adjacency_.at(b).push_back({a, length});
        ++n_edges_;
    }

    std::size_t node_count() const noexcept { return nodes_.size(); }
    std::size_t edge_count() const noexcept { return n_edges_; }
    const Point& node(std::size_t i) const { return nodes_.at(i); }
    NodeKind kind(std::size_t i) const { return kinds_.at(i); }
    const std::vector<Edge>& neighbours(std::size_t i) const { return adjacency_.at(i); }

    /// Node ids of attached extra points, in the order they were supplied.
    const std::vector<std::size_t>& extra_ids() const noexcept { return extra_ids_; }
    std::vector<std::size_t>& extra_ids() noexcept { return extra_ids_; }

    /// Node id at exactly this coordinate; extras shadow grid nodes at the same spot.
    std::size_t find_node(const Point& p) const {
        auto [lo, hi] = index_.equal_range(std::make_pair(p.x, p.y));
        if (lo == hi)
            throw InputError("point (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ") is not a graph node");
        std::size_t best = lo->second;
        for (auto it = lo; it != hi; ++it)
            if (kinds_[it->second] == NodeKind::Extra) best = it->second;
        return best;
    }

private:
    std::vector<Point> nodes_;
    std::vector<NodeKind> kinds_;
    std::vector<std::vector<Edge>> adjacency_;
    std::vector<std::size_t> extra_ids_;
    std::multimap<std::pair<double, double>, std::size_t> index_;
    std::size_t n_edges_ = 0;
};

struct GridGraphOptions {
    int connectivity = 8;       ///< 4 or 8
    std::size_t attach_k = 4;   ///< grid neighbours per extra point
    double spacing = 0.0;       ///< lattice spacing; 0 infers it from the coordinates
};

namespace detail {

inline double infer_spacing(const PointSet& grid) {
    std::vector<double> xs, ys;
    for (const auto& p : grid.points) {
        xs.push_back(p.x);
        ys.push_back(p.y);
    }
    double best = std::numeric_limits<double>::infinity();
    for (auto* v : {&xs, &ys}) {
        std::sort(v->begin(), v->end());
        for (std::size_t i = 1; i < v->size(); ++i) {
            double d = (*v)[i] - (*v)[i - 1];
            if (d > 1e-9 * std::max(1.0, std::abs((*v)[i]))) best = std::min(best, d);
        }
    }
    if (!std::isfinite(best)) throw InputError("cannot infer grid spacing from fewer than two distinct coordinates");
    return best;
}

}  // namespace detail

/// Builds the shortest-path graph: lattice nodes inside `exclusion` are
/// dropped, lattice edges (4- or 8-neighbour) are kept unless they cross the
/// exclusion, and each extra point is joined to those of its attach_k nearest
/// lattice nodes that survived and have a clear line of sight.
inline GridGraph build_grid_graph(const PointSet& grid, const Polygon& exclusion, const PointSet& extras,
                                  const GridGraphOptions& opt = {}) {
    if (opt.connectivity != 4 && opt.connectivity != 8) throw InputError("grid connectivity must be 4 or 8");
    if (grid.empty()) throw InputError("build_grid_graph: empty grid");
    const double spacing = opt.spacing > 0 ? opt.spacing : (grid.size() > 1 ? detail::infer_spacing(grid) : 1.0);

    double xmin = std::numeric_limits<double>::infinity(), ymin = xmin;
    for (const auto& p : grid.points) {
        xmin = std::min(xmin, p.x);
        ymin = std::min(ymin, p.y);
    }
    auto key = [](long long ix, long long iy) { return (ix << 32) ^ (iy & 0xffffffffLL); };

    GridGraph g;
    std::unordered_map<long long, std::size_t> lattice;
    std::vector<std::pair<long long, long long>> cell_of;
    // Node id of each input grid point, or npos when it was excluded.
    const std::size_t npos = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> node_of(grid.size(), npos);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const Point& p = grid[i];
        if (point_in_polygon(p, exclusion)) continue;
        long long ix = std::llround((p.x - xmin) / spacing);
        long long iy = std::llround((p.y - ymin) / spacing);
        if (auto it = lattice.find(key(ix, iy)); it != lattice.end()) {
            node_of[i] = it->second;
            continue;
        }
        std::size_t id = g.add_node(p, NodeKind::Grid);
        lattice.emplace(key(ix, iy), id);
        cell_of.emplace_back(ix, iy);
        node_of[i] = id;
    }
    const std::size_t n_grid = g.node_count();

    std::vector<std::pair<int, int>> offsets{{1, 0}, {0, 1}};
    if (opt.connectivity == 8) {
        offsets.emplace_back(1, 1);
        offsets.emplace_back(1, -1);
    }
    for (std::size_t id = 0; id < n_grid; ++id) {
        auto [ix, iy] = cell_of[id];
        for (auto [dx, dy] : offsets) {
            auto it = lattice.find(key(ix + dx, iy + dy));
            if (it == lattice.end()) continue;
            if (segment_hits_polygon(g.node(id), g.node(it->second), exclusion)) continue;
            g.add_edge(id, it->second);
        }
    }

    // Candidates are ranked over the whole lattice, so an exclusion can only
    // take attachment edges away and never adds a longer one in their place.
    // A point whose nearest nodes are all blocked falls back to the nearest
    // visible surviving nodes.
    auto visible = [&](const Point& p, std::size_t node) {
        return exclusion.empty() || !segment_hits_polygon(p, g.node(node), exclusion);
    };
    for (const auto& p : extras.points) {
        std::size_t id = g.add_node(p, NodeKind::Extra);
        g.extra_ids().push_back(id);
        std::vector<std::pair<double, std::size_t>> near;
        near.reserve(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) near.emplace_back(distance(p, grid[i]), i);
        const std::size_t k = std::min(near.size(), opt.attach_k);
        std::partial_sort(near.begin(), near.begin() + static_cast<std::ptrdiff_t>(k), near.end());
        std::size_t attached = 0;
        for (std::size_t r = 0; r < k; ++r) {
            std::size_t node = node_of[near[r].second];
            if (node == npos || !visible(p, node)) continue;
            g.add_edge(id, node, near[r].first);
            ++attached;
        }
        if (attached == 0) {
            std::sort(near.begin(), near.end());
            for (std::size_t r = k; r < near.size() && attached < opt.attach_k; ++r) {
                std::size_t node = node_of[near[r].second];
                if (node == npos || !visible(p, node)) continue;
                g.add_edge(id, node, near[r].first);
                ++attached;
            }
        }
        if (attached == 0)
            throw InputError("unreachable node: point (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                             ") has no grid neighbour outside the exclusion zone");
    }
    return g;
}

enum class ShortestPath { Floyd, Dijkstra };

struct GeodesicOptions {
    ShortestPath algorithm = ShortestPath::Dijkstra;
    std::size_t floyd_node_cap = 4000;
    unsigned threads = 0;
};

namespace detail {

inline std::vector<double> dijkstra(const GridGraph& g, std::size_t source) {
    std::vector<double> dist(g.node_count(), std::numeric_limits<double>::infinity());
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    dist[source] = 0.0;
    heap.emplace(0.0, source);
    while (!heap.empty()) {
        auto [d, u] = heap.top();
        heap.pop();
        if (d > dist[u]) continue;
        for (const auto& e : g.neighbours(u)) {
            double nd = d + e.length;
            if (nd < dist[e.to]) {
                dist[e.to] = nd;
                heap.emplace(nd, e.to);
            }
        }
    }
    return dist;
}

}  // namespace detail

/// Shortest-path distances between node ids. Unreachable pairs are +inf and
/// raise a warning.
inline DistanceMatrix geodesic_distances(const GridGraph& g, const std::vector<std::size_t>& sources,
                                         const std::vector<std::size_t>& targets, const GeodesicOptions& opt = {}) {
    for (auto id : sources)
        if (id >= g.node_count()) throw InputError("geodesic_distances: source id out of range");
    for (auto id : targets)
        if (id >= g.node_count()) throw InputError("geodesic_distances: target id out of range");

    DistanceMatrix out;
    out.metric = Metric::Geodesic;
    out.values.resize(static_cast<Eigen::Index>(sources.size()), static_cast<Eigen::Index>(targets.size()));

    if (opt.algorithm == ShortestPath::Floyd) {
        const std::size_t n = g.node_count();
        if (n > opt.floyd_node_cap)
            throw InputError("Floyd all-pairs on " + std::to_string(n) + " nodes exceeds the cap of " +
                             std::to_string(opt.floyd_node_cap) + "; use the dijkstra algorithm");
        const double inf = std::numeric_limits<double>::infinity();
        std::vector<double> d(n * n, inf);
        for (std::size_t i = 0; i < n; ++i) {
            d[i * n + i] = 0.0;
            for (const auto& e : g.neighbours(i)) d[i * n + e.to] = std::min(d[i * n + e.to], e.length);
        }
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t i = 0; i < n; ++i) {
                double dik = d[i * n + k];
                if (dik == inf) continue;
                for (std::size_t j = 0; j < n; ++j) {
                    double cand = dik + d[k * n + j];
                    if (cand < d[i * n + j]) d[i * n + j] = cand;
                }
            }
        for (std::size_t a = 0; a < sources.size(); ++a)
            for (std::size_t b = 0; b < targets.size(); ++b)
                out.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = d[sources[a] * n + targets[b]];
    } else {
        parallel_for(
            sources.size(),
            [&](std::size_t a) {
                auto dist = detail::dijkstra(g, sources[a]);
                for (std::size_t b = 0; b < targets.size(); ++b)
                    out.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = dist[targets[b]];
            },
            opt.threads);
    }

    auto unreachable = (out.values.array() == std::numeric_limits<double>::infinity()).count();
    if (unreachable > 0)
        warn(std::to_string(unreachable) + " geodesic pair(s) are unreachable; their basis values will be 0");
    return out;
}

/// Same as above with endpoints looked up by exact coordinate.
inline DistanceMatrix geodesic_distances(const GridGraph& g, const PointSet& sources, const PointSet& targets,
                                         const GeodesicOptions& opt = {}) {
    std::vector<std::size_t> s, t;
    for (const auto& p : sources.points) s.push_back(g.find_node(p));
    for (const auto& p : targets.points) t.push_back(g.find_node(p));
    return geodesic_distances(g, s, t, opt);
}

/// Regular lattice covering a bounding box, anchored at its lower-left corner.
inline PointSet lattice_points(const BoundingBox& box, double spacing) {
    if (!(spacing > 0)) throw InputError("grid spacing must be positive");
    auto count = [&](double extent) {
        return static_cast<std::size_t>(std::floor(extent / spacing + 1e-9)) + 1;
    };
    std::size_t nx = count(box.xmax - box.xmin), ny = count(box.ymax - box.ymin);
    PointSet out;
    out.points.reserve(nx * ny);
    for (std::size_t j = 0; j < ny; ++j)
        for (std::size_t i = 0; i < nx; ++i)
            out.points.push_back({box.xmin + static_cast<double>(i) * spacing, box.ymin + static_cast<double>(j) * spacing});
    return out;
}

/// Geodesic distances from `rows` to `cols` around `exclusion`, on a lattice of
/// the given spacing over the region's bounding box. Row and column points
/// that sit exactly on lattice nodes use them directly; the rest are attached.
inline DistanceMatrix geodesic_point_distances(const BoundingBox& box, double spacing, const Polygon& exclusion,
                                               const PointSet& rows, const PointSet& cols,
                                               const GridGraphOptions& gopt = {}, const GeodesicOptions& sopt = {}) {
    PointSet grid = lattice_points(box, spacing);
    auto on_lattice = [&](const Point& p) {
        double fx = (p.x - box.xmin) / spacing, fy = (p.y - box.ymin) / spacing;
        return std::abs(fx - std::round(fx)) < 1e-9 && std::abs(fy - std::round(fy)) < 1e-9 && fx > -0.5 &&
               fy > -0.5 && !point_in_polygon(p, exclusion);
    };
    PointSet extras;
    std::map<std::pair<double, double>, std::size_t> extra_index;
    auto collect = [&](const PointSet& ps) {
        for (const auto& p : ps.points) {
            if (on_lattice(p)) continue;
            if (extra_index.emplace(std::make_pair(p.x, p.y), extras.size()).second) extras.points.push_back(p);
        }
    };
    collect(rows);
    collect(cols);

    GridGraphOptions o = gopt;
    o.spacing = spacing;
    GridGraph g = build_grid_graph(grid, exclusion, extras, o);

    // Lattice nodes are snapped to the exact lattice coordinates of the input.
    std::unordered_map<long long, std::size_t> lattice_id;
    auto key = [](long long ix, long long iy) { return (ix << 32) ^ (iy & 0xffffffffLL); };
    for (std::size_t id = 0; id < g.node_count(); ++id) {
        if (g.kind(id) != NodeKind::Grid) continue;
        const Point& p = g.node(id);
        lattice_id.emplace(key(std::llround((p.x - box.xmin) / spacing), std::llround((p.y - box.ymin) / spacing)), id);
    }
    auto resolve = [&](const Point& p) -> std::size_t {
        auto it = extra_index.find({p.x, p.y});
        if (it != extra_index.end()) return g.extra_ids()[it->second];
        auto jt = lattice_id.find(key(std::llround((p.x - box.xmin) / spacing), std::llround((p.y - box.ymin) / spacing)));
        if (jt == lattice_id.end()) throw InputError("point is neither a lattice node nor attached");
        return jt->second;
    };
    std::vector<std::size_t> r, c;
    for (const auto& p : rows.points) r.push_back(resolve(p));
    for (const auto& p : cols.points) c.push_back(resolve(p));
    // Dijkstra from the (usually fewer) column points, then transpose.
    DistanceMatrix dm = geodesic_distances(g, c, r, sopt);
    DistanceMatrix out;
    out.metric = Metric::Geodesic;
    out.values = dm.values.transpose();
    return out;
}

}  // namespace salsa2d
