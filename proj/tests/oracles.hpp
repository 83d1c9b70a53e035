#pragma once

// Independent reference implementations used to cross-check the library.
// None of these call into the code they check.

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "salsa2d/common.hpp"

namespace oracle {

/// Weighted Poisson log-pseudolikelihood written out term by term, summed in
/// extended precision so a derivative-free search can resolve the optimum.
inline double log_pl(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                     const Eigen::VectorXd& beta) {
    long double s = 0.0L;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        long double eta = 0.0L;
        for (Eigen::Index j = 0; j < X.cols(); ++j) eta += static_cast<long double>(X(i, j)) * beta[j];
        s += static_cast<long double>(w[i]) * (static_cast<long double>(y[i]) * eta - std::exp(eta));
    }
    return static_cast<double>(s);
}

/// A small weighted Poisson problem: intercept plus uniform columns, weights
/// in [0.5, 2] and responses y = count / w so that w * y is an integer.
struct SmallProblem {
    Eigen::MatrixXd X;
    Eigen::VectorXd y, w;
};

inline SmallProblem random_small_problem(std::uint64_t seed, Eigen::Index max_rows = 50, Eigen::Index max_cols = 5) {
    std::mt19937_64 rng(seed);
    const Eigen::Index n = std::uniform_int_distribution<Eigen::Index>(20, max_rows)(rng);
    const Eigen::Index p = std::uniform_int_distribution<Eigen::Index>(1, max_cols)(rng);
    std::uniform_real_distribution<double> u(-1.0, 1.0), uw(0.5, 2.0);
    std::normal_distribution<double> nb(0.0, 0.5);
    SmallProblem s;
    s.X.resize(n, p);
    s.y.resize(n);
    s.w.resize(n);
    Eigen::VectorXd beta(p);
    for (Eigen::Index j = 0; j < p; ++j) beta[j] = j == 0 ? 1.0 : nb(rng);
    for (Eigen::Index i = 0; i < n; ++i) {
        s.X(i, 0) = 1.0;
        for (Eigen::Index j = 1; j < p; ++j) s.X(i, j) = u(rng);
        s.w[i] = uw(rng);
        std::poisson_distribution<int> pois(s.w[i] * std::exp(s.X.row(i).dot(beta)));
        s.y[i] = pois(rng) / s.w[i];
    }
    return s;
}

/// Nelder-Mead minimiser with restarts; each restart rebuilds the simplex
/// around the incumbent with a smaller step until the point stops moving.
inline Eigen::VectorXd nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
                                   double step = 0.5, int restarts = 60, int iterations = 20000) {
    const Eigen::Index n = x.size();
    for (int r = 0; r < restarts; ++r) {
        std::vector<Eigen::VectorXd> s(static_cast<std::size_t>(n + 1), x);
        for (Eigen::Index i = 0; i < n; ++i) s[static_cast<std::size_t>(i + 1)][i] += step;
        std::vector<double> fv(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) fv[i] = f(s[i]);
        for (int it = 0; it < iterations; ++it) {
            std::vector<std::size_t> ord(s.size());
            for (std::size_t i = 0; i < ord.size(); ++i) ord[i] = i;
            std::sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
            auto s2 = s;
            auto f2 = fv;
            for (std::size_t i = 0; i < ord.size(); ++i) {
                s[i] = s2[ord[i]];
                fv[i] = f2[ord[i]];
            }
            double size = 0.0;
            for (std::size_t i = 1; i < s.size(); ++i) size = std::max(size, (s[i] - s[0]).cwiseAbs().maxCoeff());
            if (size < 1e-13) break;

            Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
            for (std::size_t i = 0; i + 1 < s.size(); ++i) c += s[i];
            c /= static_cast<double>(n);
            const std::size_t worst = s.size() - 1;
            Eigen::VectorXd xr = c + (c - s[worst]);
            double fr = f(xr);
            if (fr < fv[0]) {
                Eigen::VectorXd xe = c + 2.0 * (c - s[worst]);
                double fe = f(xe);
                if (fe < fr) {
                    s[worst] = xe;
                    fv[worst] = fe;
                } else {
                    s[worst] = xr;
                    fv[worst] = fr;
                }
            } else if (fr < fv[worst - 1]) {
                s[worst] = xr;
                fv[worst] = fr;
            } else {
                Eigen::VectorXd xc = fr < fv[worst] ? Eigen::VectorXd(c + 0.5 * (xr - c)) : Eigen::VectorXd(c + 0.5 * (s[worst] - c));
                double fc = f(xc);
                if (fc < std::min(fr, fv[worst])) {
                    s[worst] = xc;
                    fv[worst] = fc;
                } else {
                    for (std::size_t i = 1; i < s.size(); ++i) {
                        s[i] = s[0] + 0.5 * (s[i] - s[0]);
                        fv[i] = f(s[i]);
                    }
                }
            }
        }
        std::size_t best = static_cast<std::size_t>(std::min_element(fv.begin(), fv.end()) - fv.begin());
        const double moved = (s[best] - x).cwiseAbs().maxCoeff();
        x = s[best];
        step = std::max(moved * 2.0, 1e-6);
        if (moved < 1e-12 && r > 2) break;
    }
    return x;
}

/// All-pairs shortest paths on an edge list by Bellman-Ford relaxation.
inline std::vector<std::vector<double>> bellman_ford_all_pairs(std::size_t n,
                                                               const std::vector<std::tuple<std::size_t, std::size_t, double>>& edges) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> d(n, std::vector<double>(n, inf));
    for (std::size_t s = 0; s < n; ++s) {
        d[s][s] = 0.0;
        for (std::size_t round = 0; round + 1 < n; ++round) {
            bool changed = false;
            for (const auto& [a, b, len] : edges) {
                if (d[s][a] + len < d[s][b]) {
                    d[s][b] = d[s][a] + len;
                    changed = true;
                }
                if (d[s][b] + len < d[s][a]) {
                    d[s][a] = d[s][b] + len;
                    changed = true;
                }
            }
            if (!changed) break;
        }
    }
    return d;
}

/// Captures library warnings for the lifetime of the object.
class WarningCapture {
public:
    WarningCapture() {
        previous_ = salsa2d::set_warning_sink([this](const std::string& m) { messages.push_back(m); });
    }
    ~WarningCapture() { salsa2d::set_warning_sink(previous_); }
    WarningCapture(const WarningCapture&) = delete;
    WarningCapture& operator=(const WarningCapture&) = delete;

    bool contains(const std::string& needle) const {
        return std::any_of(messages.begin(), messages.end(),
                           [&](const std::string& m) { return m.find(needle) != std::string::npos; });
    }

    std::vector<std::string> messages;

private:
    std::function<void(const std::string&)> previous_;
};

}  // namespace oracle
