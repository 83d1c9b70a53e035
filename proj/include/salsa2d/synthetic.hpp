#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "salsa2d/common.hpp"
#include "salsa2d/geometry.hpp"
#include "salsa2d/graph.hpp"
#include "salsa2d/ppm.hpp"

namespace salsa2d {

// Simulated point patterns used by tests, demos and the `simulate` command.

using IntensityFn = std::function<double(const Point&)>;

/// Inhomogeneous Poisson process on a box by thinning a homogeneous process
/// at `lambda_max`, keeping only points inside `region`.
inline PointSet simulate_poisson(const IntensityFn& intensity, double lambda_max, const Polygon& region,
                                 std::uint64_t seed) {
    if (!(lambda_max > 0)) throw InputError("simulate_poisson: lambda_max must be positive");
    const BoundingBox box = bounding_box(region);
    const double area = (box.xmax - box.xmin) * (box.ymax - box.ymin);
    std::mt19937_64 rng(seed);
    std::poisson_distribution<long> count(lambda_max * area);
    std::uniform_real_distribution<double> ux(box.xmin, box.xmax), uy(box.ymin, box.ymax), u01(0.0, 1.0);
    const long n = count(rng);
    PointSet out;
    for (long i = 0; i < n; ++i) {
        Point p{ux(rng), uy(rng)};
        const double keep = u01(rng);
        if (!point_in_polygon(p, region)) continue;
        const double lam = intensity(p);
        if (lam > lambda_max * (1.0 + 1e-12)) throw InputError("simulate_poisson: intensity exceeds lambda_max");
        if (keep * lambda_max < lam) out.points.push_back(p);
    }
    return out;
}

inline PointSet simulate_homogeneous(double rate, const Polygon& region, std::uint64_t seed) {
    return simulate_poisson([rate](const Point&) { return rate; }, rate, region, seed);
}

/// Two Gaussian bumps on a flat background over the unit square: a narrow
/// peak near (0.3, 0.7) and a broad one near (0.7, 0.3). Expected count is
/// about 500.
struct TwoBump {
    double background = 100.0;
    Point narrow_centre{0.3, 0.7};
    double narrow_sigma = 0.06;
    double narrow_peak = 8000.0;
    Point broad_centre{0.7, 0.3};
    double broad_sigma = 0.15;
    double broad_peak = 1600.0;

    double operator()(const Point& p) const {
        auto bump = [&](const Point& c, double s, double a) {
            const double dx = p.x - c.x, dy = p.y - c.y;
            return a * std::exp(-(dx * dx + dy * dy) / (2.0 * s * s));
        };
        return background + bump(narrow_centre, narrow_sigma, narrow_peak) + bump(broad_centre, broad_sigma, broad_peak);
    }
    double maximum() const { return background + narrow_peak + broad_peak; }
};

struct Benchmark {
    Polygon region;
    PointSet presences;
    PointSet pseudo;
    PpmDataset data;
};

/// The two-bump benchmark: unit square, a 40 x 40 pseudo-absence lattice.
inline Benchmark two_bump_benchmark(std::uint64_t seed, std::size_t grid = 40) {
    Benchmark b;
    b.region = rectangle(0, 0, 1, 1);
    TwoBump f;
    b.presences = simulate_poisson(f, f.maximum(), b.region, seed);
    const double spacing = 1.0 / static_cast<double>(grid - 1);
    b.pseudo = generate_pseudo_absences(b.region, Polygon{}, spacing);
    b.data = assemble_dataset(b.presences, b.pseudo, 1.0, {}, {}, spacing);
    return b;
}

}  // namespace salsa2d
