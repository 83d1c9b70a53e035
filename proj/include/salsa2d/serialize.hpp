#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "salsa2d/common.hpp"
#include "salsa2d/convergence.hpp"
#include "salsa2d/design.hpp"
#include "salsa2d/fit.hpp"
#include "salsa2d/io.hpp"
#include "salsa2d/modelavg.hpp"
#include "salsa2d/ppm.hpp"
#include "salsa2d/salsa.hpp"
#include "salsa2d/terms.hpp"

namespace salsa2d::io {

namespace detail {

/// JSON has no infinities or NaN; they are written as null and read back as NaN
/// unless a default is given.
inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline double get_num(const json& j, const char* key, double fallback = std::numeric_limits<double>::quiet_NaN()) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    return j.at(key).get<double>();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Fitted models

inline json terms_to_json(const TermSet& t) {
    json factors = json::array(), smooths = json::array();
    for (const auto& f : t.factors)
        factors.push_back({{"covariate", f.covariate}, {"candidates", f.candidates}, {"chosen", f.chosen}});
    for (const auto& s : t.smooths)
        smooths.push_back({{"covariate", s.covariate},
                           {"degree", s.degree},
                           {"interior_knots", s.interior_knots},
                           {"lower", s.lower},
                           {"upper", s.upper},
                           {"selection", s.selection == KnotSelection::Fixed ? "fixed" : "bic_search"}});
    return {{"factors", factors}, {"smooths", smooths}};
}

inline TermSet terms_from_json(const json& j) {
    TermSet t;
    for (const auto& f : j.value("factors", json::array()))
        t.factors.push_back({f.at("covariate").get<std::string>(), f.at("candidates").get<std::vector<double>>(),
                             f.at("chosen").get<double>()});
    for (const auto& s : j.value("smooths", json::array())) {
        SmoothTermSpec spec;
        spec.covariate = s.at("covariate").get<std::string>();
        spec.degree = s.at("degree").get<int>();
        spec.interior_knots = s.at("interior_knots").get<std::vector<double>>();
        spec.lower = s.at("lower").get<double>();
        spec.upper = s.at("upper").get<double>();
        spec.selection = s.value("selection", "fixed") == "fixed" ? KnotSelection::Fixed : KnotSelection::BicSearch;
        t.smooths.push_back(spec);
    }
    return t;
}

inline json model_to_json(const FittedModel& m) {
    json radial = json::array();
    for (std::size_t k = 0; k < m.radial.size(); ++k) {
        json r = {{"knot", m.radial[k].knot}, {"r_index", m.radial[k].r_index}, {"r", m.radial[k].r}};
        if (k < m.knot_points.size()) {
            r["x"] = m.knot_points[k].x;
            r["y"] = m.knot_points[k].y;
        }
        radial.push_back(r);
    }
    json cov = json::array();
    for (Eigen::Index i = 0; i < m.covariance.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.covariance.cols(); ++j) row.push_back(detail::num(m.covariance(i, j)));
        cov.push_back(row);
    }
    std::vector<double> beta(m.coefficients.data(), m.coefficients.data() + m.coefficients.size());
    return {{"format", "salsa2d-model"},
            {"version", kVersion},
            {"basis", to_string(m.basis)},
            {"metric", to_string(m.metric)},
            {"labels", m.labels},
            {"coefficients", beta},
            {"n_covariate_columns", m.n_covariate_columns},
            {"radial", radial},
            {"r_sequence", m.r_sequence.values},
            {"terms", terms_to_json(m.terms)},
            {"spatial_reference", m.spatial_reference},
            {"log_pl", detail::num(m.log_pl)},
            {"n_obs", m.n_obs},
            {"n_params", m.n_params},
            {"bic", detail::num(m.bic)},
            {"aicc", detail::num(m.aicc)},
            {"converged", m.converged},
            {"iterations", m.iterations},
            {"diagnostics", m.diagnostics},
            {"covariance", cov}};
}

inline FittedModel model_from_json(const json& j) {
    try {
        if (j.value("format", "") != "salsa2d-model") throw InputError("not a salsa2d model document");
        FittedModel m;
        m.basis = parse_basis(j.at("basis").get<std::string>());
        m.metric = parse_metric(j.at("metric").get<std::string>());
        m.labels = j.at("labels").get<std::vector<std::string>>();
        auto beta = j.at("coefficients").get<std::vector<double>>();
        m.coefficients = Eigen::Map<Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
        m.n_covariate_columns = j.at("n_covariate_columns").get<Eigen::Index>();
        for (const auto& r : j.at("radial")) {
            m.radial.push_back({r.at("knot").get<std::size_t>(), r.at("r_index").get<std::size_t>(), r.at("r").get<double>()});
            if (r.contains("x")) m.knot_points.push_back({r.at("x").get<double>(), r.at("y").get<double>()});
        }
        m.r_sequence.kind = m.basis;
        m.r_sequence.values = j.value("r_sequence", std::vector<double>{});
        m.terms = terms_from_json(j.value("terms", json::object()));
        m.spatial_reference = j.value("spatial_reference", 0.0);
        m.log_pl = detail::get_num(j, "log_pl");
        m.n_obs = j.at("n_obs").get<std::size_t>();
        m.n_params = j.at("n_params").get<std::size_t>();
        m.bic = detail::get_num(j, "bic", std::numeric_limits<double>::infinity());
        m.aicc = detail::get_num(j, "aicc", std::numeric_limits<double>::infinity());
        m.converged = j.at("converged").get<bool>();
        m.iterations = j.at("iterations").get<int>();
        m.diagnostics = j.value("diagnostics", "");
        const auto& cov = j.at("covariance");
        if (!cov.empty()) {
            m.covariance.resize(static_cast<Eigen::Index>(cov.size()), static_cast<Eigen::Index>(cov.size()));
            for (std::size_t a = 0; a < cov.size(); ++a)
                for (std::size_t b = 0; b < cov[a].size(); ++b)
                    m.covariance(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                        cov[a][b].is_null() ? std::numeric_limits<double>::quiet_NaN() : cov[a][b].get<double>();
        }
        if (static_cast<std::size_t>(m.coefficients.size()) != m.labels.size())
            throw InputError("model coefficients and labels differ in length");
        if (!m.radial.empty() && m.knot_points.size() != m.radial.size())
            throw InputError("model radial columns lack knot coordinates");
        return m;
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed model document: ") + e.what());
    }
}

inline FittedModel read_model(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw InputError(path.string() + ": invalid JSON: " + e.what());
    }
    return model_from_json(j);
}

/// Design rows for a stored model at new locations, given their distances to
/// the model's knots (locations x knots, in the model's radial order).
inline DesignMatrix model_design(const FittedModel& m, const Eigen::MatrixXd& knot_distances,
                                 const CovariateTable* covariates = nullptr) {
    CovariateBlock block;
    if (!m.terms.empty()) {
        if (!covariates) throw InputError("model has covariate terms; covariate values are required for prediction");
        block = term_columns(m.terms, *covariates, knot_distances.rows());
    }
    if (block.cols() != m.n_covariate_columns) throw InputError("model terms do not match its covariate column count");
    return assemble_design(knot_distances, m.radial, m.basis, block.cols() > 0 ? &block : nullptr);
}

inline DesignMatrix model_design_euclidean(const FittedModel& m, const PointSet& locations,
                                           const CovariateTable* covariates = nullptr) {
    if (m.metric != Metric::Euclidean)
        throw InputError("model uses geodesic distances; supply the region and exclusion to rebuild the graph");
    return model_design(m, euclidean_distances(locations, PointSet(m.knot_points)).values, covariates);
}

// ---------------------------------------------------------------------------
// Tables

inline std::string trace_jsonl(const SalsaTrace& trace) {
    std::string out;
    for (const auto& t : trace) {
        out += json{{"step", t.step},
                    {"action", t.action},
                    {"before", detail::num(t.before)},
                    {"after", detail::num(t.after)},
                    {"accepted", t.accepted},
                    {"knots", t.knots}}
                   .dump();
        out += '\n';
    }
    return out;
}

inline SalsaTrace trace_from_jsonl(const std::string& text) {
    SalsaTrace trace;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = json::parse(line);
        trace.push_back({j.at("step").get<std::string>(), j.at("action").get<std::string>(),
                         detail::get_num(j, "before"), detail::get_num(j, "after"), j.at("accepted").get<bool>(),
                         j.at("knots").get<std::size_t>()});
    }
    return trace;
}

struct SweepRow {
    Metric metric;
    BasisKind basis;
    std::size_t start_knots;
    std::size_t end_knots;
    double log_pl;
    double bic;
    double minutes;
};

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
    CsvWriter w({"distance_type", "basis", "start_knots", "end_knots", "loglik", "bic", "time_min"});
    for (const auto& r : rows)
        w.row({to_string(r.metric), to_string(r.basis), std::to_string(r.start_knots), std::to_string(r.end_knots),
               format_double(r.log_pl), format_double(r.bic), format_double(r.minutes)});
    return w.str();
}

inline std::string ensemble_csv(const AveragingEnsemble& e) {
    CsvWriter w({"k", "r_index", "loglik", "aicc", "delta", "weight"});
    for (std::size_t i = 0; i < e.members.size(); ++i) {
        const auto& m = e.members[i];
        w.row({std::to_string(m.k), std::to_string(m.r_index + 1), format_double(m.model.log_pl),
               format_double(m.ok ? m.model.aicc : std::numeric_limits<double>::infinity()), format_double(e.delta[i]),
               format_double(e.weights[i])});
    }
    return w.str();
}

inline std::string design_csv(const DesignMatrix& d) {
    CsvWriter w(d.labels);
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        std::vector<std::string> row;
        for (Eigen::Index j = 0; j < d.cols(); ++j) row.push_back(format_double(d.X(i, j)));
        w.row(row);
    }
    return w.str();
}

inline std::string convergence_csv(const ConvergenceResult& r) {
    CsvWriter w({"spacing", "n_pseudo", "spec", "loglik", "rel_change", "chosen"});
    for (const auto& row : r.table)
        w.row({format_double(row.spacing), std::to_string(row.n_pseudo), row.spec, format_double(row.log_pl),
               format_double(row.rel_change), row.spacing == r.chosen_spacing ? "1" : "0"});
    return w.str();
}

inline std::string effect_csv(const std::string& covariate, const std::vector<EffectPoint>& pts) {
    CsvWriter w({covariate, "intensity"});
    for (const auto& p : pts) w.row({format_double(p.value), format_double(p.intensity)});
    return w.str();
}

// ---------------------------------------------------------------------------
// Datasets: CSV rows plus a JSON sidecar with area, spacing and hashes.

inline std::string dataset_csv(const PpmDataset& d) {
    std::vector<std::string> header = {"x", "y", "response", "weight", "is_presence"};
    for (const auto& [name, col] : d.covariates) header.push_back(name);
    CsvWriter w(header);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        std::vector<std::string> row = {format_double(d.points[i].x), format_double(d.points[i].y),
                                        format_double(d.y[r]), format_double(d.w[r]), d.is_presence[i] ? "1" : "0"};
        for (const auto& [name, col] : d.covariates) row.push_back(format_double(col[r]));
        w.row(row);
    }
    return w.str();
}

inline json dataset_sidecar(const PpmDataset& d, const std::string& csv_text, const json& provenance = json::object()) {
    return {{"format", "salsa2d-dataset"}, {"region_area", d.region_area}, {"grid_spacing", d.grid_spacing},
            {"n_presence", d.n_presence},  {"n_pseudo", d.n_pseudo()},    {"csv_fnv1a", fnv1a_hex(csv_text)},
            {"provenance", provenance}};
}

inline PpmDataset dataset_from_csv(const std::string& csv_text, const json& sidecar, const std::string& source = "dataset") {
    if (sidecar.value("format", "") != "salsa2d-dataset") throw InputError(source + ": sidecar is not a salsa2d dataset");
    if (sidecar.contains("csv_fnv1a") && sidecar.at("csv_fnv1a").get<std::string>() != fnv1a_hex(csv_text))
        throw InputError(source + ": CSV content does not match the sidecar hash");
    CsvTable t = parse_csv(csv_text, source);
    PointSet pts = points_from_csv(t, source);
    auto flag = numeric_column(t, "is_presence", source);
    PointSet pres, pseudo;
    CovariateTable pc, qc;
    std::vector<std::string> covs;
    for (const auto& h : t.header)
        if (h != "x" && h != "y" && h != "response" && h != "weight" && h != "is_presence") covs.push_back(h);
    std::map<std::string, std::vector<double>> cols;
    for (const auto& c : covs) cols[c] = numeric_column(t, c, source);
    std::map<std::string, std::vector<double>> pcol, qcol;
    bool seen_pseudo = false;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const bool presence = flag[i] != 0.0;
        if (presence && seen_pseudo) throw InputError(source + ": presence rows must precede pseudo-absence rows");
        seen_pseudo = seen_pseudo || !presence;
        (presence ? pres : pseudo).points.push_back(pts[i]);
        for (const auto& c : covs) (presence ? pcol : qcol)[c].push_back(cols[c][i]);
    }
    auto to_table = [](const std::map<std::string, std::vector<double>>& m) {
        CovariateTable out;
        for (const auto& [k, v] : m)
            out.emplace(k, Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
        return out;
    };
    return assemble_dataset(pres, pseudo, sidecar.at("region_area").get<double>(), to_table(pcol), to_table(qcol),
                            sidecar.value("grid_spacing", 0.0));
}

}  // namespace salsa2d::io
