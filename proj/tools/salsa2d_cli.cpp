// Batch command-line front end: simulate, grid, fit, predict, partial.
//
// Exit codes: 0 success, 1 numerical failure, 2 input error.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "salsa2d/salsa2d.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace salsa2d;

namespace {

constexpr int kExitNumerical = 1;
constexpr int kExitInput = 2;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

/// Written when a command starts and rewritten when it ends, so an
/// interrupted run still leaves its configuration and inputs on disk.
class Manifest {
public:
    Manifest(fs::path out_dir, std::string command, json config_echo)
        : path_(std::move(out_dir) / "manifest.json"), start_(Clock::now()) {
        doc_ = {{"command", std::move(command)},
                {"version", kVersion},
                {"config", std::move(config_echo)},
                {"inputs", json::object()},
                {"status", "running"}};
    }

    void input(const std::string& role, const std::string& path) {
        if (path.empty()) return;
        doc_["inputs"][role] = {{"path", path}, {"fnv1a", io::fnv1a_hex(io::read_file(path))}};
    }
    void note(const std::string& key, json value) { doc_[key] = std::move(value); }
    void begin() { write(); }

    void finish(const std::string& status, json summary) {
        doc_["status"] = status;
        doc_["seconds"] = seconds_since(start_);
        doc_["summary"] = std::move(summary);
        write();
    }

private:
    void write() const { io::write_file(path_, doc_.dump(2) + "\n"); }

    fs::path path_;
    Clock::time_point start_;
    json doc_;
};

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(io::parse_double(item, "list '" + text + "'"));
    if (out.empty()) throw InputError("empty list '" + text + "'");
    return out;
}

std::vector<std::size_t> parse_count_list(const std::string& text) {
    std::vector<std::size_t> out;
    for (double v : parse_list(text)) {
        if (!(v >= 0) || v != std::floor(v)) throw InputError("expected whole numbers in '" + text + "'");
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

/// "from:to:n" evenly spaced values, or a comma list.
std::vector<double> parse_grid(const std::string& text) {
    if (std::count(text.begin(), text.end(), ':') == 2) {
        auto a = text.find(':'), b = text.rfind(':');
        double from = io::parse_double(text.substr(0, a), "grid start");
        double to = io::parse_double(text.substr(a + 1, b - a - 1), "grid end");
        double n = io::parse_double(text.substr(b + 1), "grid size");
        if (!(n >= 2) || n != std::floor(n)) throw InputError("grid size must be a whole number >= 2");
        std::vector<double> out;
        for (int i = 0; i < static_cast<int>(n); ++i) out.push_back(from + (to - from) * i / (n - 1));
        return out;
    }
    return parse_list(text);
}

/// Covariate columns from a CSV aligned row-by-row with a point file; every
/// column other than x and y is a covariate.
CovariateTable read_covariates(const std::string& path, std::size_t rows) {
    CovariateTable t;
    if (path.empty()) return t;
    auto csv = io::read_csv(path);
    if (csv.rows.size() != rows)
        throw InputError(path + ": has " + std::to_string(csv.rows.size()) + " rows, expected " + std::to_string(rows));
    for (const auto& h : csv.header) {
        if (h == "x" || h == "y") continue;
        auto v = io::numeric_column(csv, h, path);
        t.emplace(h, Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    return t;
}

/// Effective option values of a subcommand, defaults included.
json config_echo(const CLI::App& app, const CLI::App& sub) {
    json out = json::object();
    for (const CLI::App* a : {&app, &sub}) {
        for (const CLI::Option* opt : a->get_options()) {
            const std::string name = opt->get_single_name();
            if (name.empty() || name == "help" || name == "version") continue;
            if (opt->count() == 0) {
                out[name] = opt->get_default_str();
            } else if (opt->get_items_expected_max() > 1 || opt->results().size() > 1) {
                out[name] = opt->results();
            } else {
                out[name] = opt->results().empty() ? std::string("true") : opt->results().front();
            }
        }
    }
    return out;
}

void check_exists(const std::string& path, const char* what) {
    if (!path.empty() && !fs::exists(path)) throw InputError(std::string(what) + " file not found: " + path);
}

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) s = s.substr(1, s.size() - 2);
    return s;
}

bool given_on_command_line(const std::vector<std::string>& args, const std::string& key) {
    const std::string flag = "--" + key;
    for (const auto& a : args)
        if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    return false;
}

/// Expands `--config FILE` (flat key=value lines, '#' comments) into command
/// line tokens. Keys already given on the command line are skipped, so flags
/// win. `threads` goes before the subcommand, everything else after it.
std::vector<std::string> expand_config(std::vector<std::string> args, const CLI::App& app) {
    std::string path;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
            break;
        }
    }
    if (path.empty()) return args;
    check_exists(path, "config");

    std::size_t sub_pos = args.size();
    const CLI::App* sub = nullptr;
    for (std::size_t i = 1; i < args.size() && !sub; ++i)
        for (const CLI::App* s : app.get_subcommands([](const CLI::App*) { return true; }))
            if (s->get_name() == args[i]) {
                sub = s;
                sub_pos = i;
                break;
            }

    std::vector<std::string> before, after;
    std::stringstream in(io::read_file(path));
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
        line = trim(line.substr(0, line.find('#')));
        if (line.empty() || line.front() == '[') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw InputError(path + ":" + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (given_on_command_line(args, key)) continue;
        const CLI::Option* opt = app.get_option_no_throw("--" + key);
        auto& dest = opt ? before : after;
        if (!opt && sub) opt = sub->get_option_no_throw("--" + key);
        if (!opt) throw InputError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        if (opt->get_type_size() == 0) {
            if (value == "true" || value == "1") dest.push_back("--" + key);
        } else {
            dest.push_back("--" + key);
            dest.push_back(value);
        }
    }
    args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub_pos), before.begin(), before.end());
    args.insert(args.end(), after.begin(), after.end());
    return args;
}


// ---------------------------------------------------------------------------
// Shared data options

struct DataOptions {
    std::string region, exclusion, presences, pseudo, presence_covariates, pseudo_covariates, features;
    std::string feature_name = "dist_feature";
    double spacing = 0.0;
    double area = 0.0;

    void add(CLI::App* app, bool need_presences) {
        app->add_option("--region", region, "Study region polygon (GeoJSON)")->required();
        app->add_option("--exclusion", exclusion, "Exclusion zone polygon (GeoJSON)");
        auto* p = app->add_option("--presences", presences, "Presence points CSV with x,y columns");
        if (need_presences) p->required();
        app->add_option("--pseudo", pseudo, "Pseudo-absence points CSV (otherwise a lattice at --spacing)");
        app->add_option("--spacing", spacing, "Pseudo-absence lattice spacing (km)");
        app->add_option("--area", area, "Region area override (km^2)");
        app->add_option("--presence-covariates", presence_covariates, "Covariate CSV aligned with the presences");
        app->add_option("--pseudo-covariates", pseudo_covariates, "Covariate CSV aligned with the pseudo-absences");
        app->add_option("--features", features, "Point/line features (GeoJSON) for a distance covariate");
        app->add_option("--feature-name", feature_name, "Name of the distance-to-feature covariate");
    }

    void validate() const {
        check_exists(region, "region");
        check_exists(exclusion, "exclusion");
        check_exists(presences, "presence");
        check_exists(pseudo, "pseudo-absence");
        check_exists(presence_covariates, "presence covariate");
        check_exists(pseudo_covariates, "pseudo-absence covariate");
        check_exists(features, "features");
    }

    void record(Manifest& m) const {
        m.input("region", region);
        m.input("exclusion", exclusion);
        m.input("presences", presences);
        m.input("pseudo", pseudo);
        m.input("presence_covariates", presence_covariates);
        m.input("pseudo_covariates", pseudo_covariates);
        m.input("features", features);
    }
};

struct LoadedData {
    Polygon region, exclusion;
    PointSet presences, pseudo;
    PpmDataset data;
    double spacing = 0.0;
};

LoadedData load_data(const DataOptions& o) {
    LoadedData d;
    d.region = io::read_polygon_geojson(o.region);
    if (!o.exclusion.empty()) d.exclusion = io::read_polygon_geojson(o.exclusion);
    d.presences = io::read_points_csv(o.presences);
    if (d.presences.empty()) throw InputError(o.presences + ": no presence points");
    if (!o.pseudo.empty()) {
        d.pseudo = io::read_points_csv(o.pseudo);
        d.spacing = o.spacing;
    } else {
        if (!(o.spacing > 0)) throw InputError("either --pseudo or a positive --spacing is required");
        d.pseudo = generate_pseudo_absences(d.region, d.exclusion, o.spacing);
        d.spacing = o.spacing;
    }
    const double area = o.area > 0 ? o.area : effective_area(d.region, d.exclusion);
    CovariateTable pc = read_covariates(o.presence_covariates, d.presences.size());
    CovariateTable qc = read_covariates(o.pseudo_covariates, d.pseudo.size());
    if (!o.features.empty()) {
        FeatureSet fs = io::read_features_geojson(o.features);
        auto dp = distance_to_nearest_feature(d.presences, fs);
        auto dq = distance_to_nearest_feature(d.pseudo, fs);
        pc[o.feature_name] = Eigen::Map<Eigen::VectorXd>(dp.data(), static_cast<Eigen::Index>(dp.size()));
        qc[o.feature_name] = Eigen::Map<Eigen::VectorXd>(dq.data(), static_cast<Eigen::Index>(dq.size()));
    }
    d.data = assemble_dataset(d.presences, d.pseudo, area, pc, qc, d.spacing);
    return d;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateOptions {
    std::string scenario = "two-bump";
    double rate = 200.0;
    std::uint64_t seed = 1;
    std::string out_dir = ".";
};

json cmd_simulate(const SimulateOptions& o) {
    Polygon region = rectangle(0, 0, 1, 1);
    PointSet pts;
    if (o.scenario == "two-bump") {
        TwoBump f;
        pts = simulate_poisson(f, f.maximum(), region, o.seed);
    } else if (o.scenario == "homogeneous") {
        if (!(o.rate > 0)) throw InputError("--rate must be positive");
        pts = simulate_homogeneous(o.rate, region, o.seed);
    } else {
        throw InputError("unknown scenario '" + o.scenario + "' (two-bump, homogeneous)");
    }
    io::write_file(fs::path(o.out_dir) / "presences.csv", io::points_csv(pts));
    io::write_file(fs::path(o.out_dir) / "region.geojson", io::polygon_to_geojson(region) + "\n");
    return {{"presences", pts.size()}};
}

// ---------------------------------------------------------------------------
// grid

struct GridOptions {
    DataOptions data;
    std::string spacings;
    std::string knots = "10,20,30,40";
    double tolerance = 0.005;
    std::size_t r_count = 10;
    std::string out_dir = ".";
};

json cmd_grid(const GridOptions& o, unsigned threads) {
    Polygon region = io::read_polygon_geojson(o.data.region);
    Polygon exclusion;
    if (!o.data.exclusion.empty()) exclusion = io::read_polygon_geojson(o.data.exclusion);
    json summary;
    if (o.data.spacing > 0) {
        PointSet pseudo = generate_pseudo_absences(region, exclusion, o.data.spacing);
        io::write_file(fs::path(o.out_dir) / "pseudo.csv", io::points_csv(pseudo));
        summary["n_pseudo"] = pseudo.size();
    }
    if (!o.spacings.empty()) {
        if (o.data.presences.empty()) throw InputError("--spacings needs --presences for the model fits");
        PointSet presences = io::read_points_csv(o.data.presences);
        std::vector<ConvergenceSpec> specs;
        for (auto k : parse_count_list(o.knots))
            for (auto b : {BasisKind::Exponential, BasisKind::Gaussian}) specs.push_back({b, k});
        ConvergenceOptions co;
        co.tolerance = o.tolerance;
        co.r_count = o.r_count;
        co.search.threads = threads;
        auto res = grid_convergence(region, exclusion, presences, parse_list(o.spacings), specs, co);
        io::write_file(fs::path(o.out_dir) / "convergence.csv", io::convergence_csv(res));
        summary["chosen_spacing"] = res.chosen_spacing;
        summary["converged"] = res.converged;
    }
    if (summary.is_null()) throw InputError("grid needs --spacing and/or --spacings");
    return summary;
}

// ---------------------------------------------------------------------------
// fit

struct FitCommandOptions {
    DataOptions data;
    std::string method = "salsa2d";
    bool sweep = false;
    std::string sweep_starts = "5,10,15,20,25,30,35,40,45,50,55,60";
    std::string basis = "exponential";
    std::string distance = "euclidean";
    double graph_spacing = 0.0;
    int connectivity = 8;
    std::size_t start_knots = 10, min_knots = 2, max_knots = 100;
    std::size_t r_count = 10;
    std::string criterion = "bic";
    std::string residuals = "regions";
    std::string r_select = "after";
    std::size_t outer = 20;
    std::uint64_t seed = 1;
    double candidate_fraction = 0.2;
    std::size_t pseudo_candidates = 0;
    std::string k_list = "5,10,15,20,25,30,35,40,45,50,55,60";
    double delta = 10.0;
    bool strict_delta = false;
    std::vector<std::string> factors;
    std::vector<std::string> smooths;
    std::size_t smooth_max_knots = 5;
    std::string out_dir = ".";
};

struct Geometry {
    BoundingBox box;
    Polygon exclusion;
    double spacing = 0.0;
    int connectivity = 8;
};

SalsaProblem build_problem(const LoadedData& d, const CandidateSet& cand, Metric metric, BasisKind basis,
                           std::size_t R, const Geometry& g, unsigned threads, CovariateBlock block, TermSet terms) {
    if (metric == Metric::Euclidean) return make_problem(d.data, cand.points, R, basis, std::move(block), std::move(terms));
    GridGraphOptions gopt;
    gopt.connectivity = g.connectivity;
    GeodesicOptions sopt;
    sopt.threads = threads;
    auto h = geodesic_point_distances(g.box, g.spacing, g.exclusion, d.data.points, cand.points, gopt, sopt);
    auto c = geodesic_point_distances(g.box, g.spacing, g.exclusion, cand.points, cand.points, gopt, sopt);
    return make_problem(d.data, cand.points, std::move(h), std::move(c), R, basis, std::move(block), std::move(terms));
}

json model_document(const FittedModel& m, const Geometry& g) {
    json doc = io::model_to_json(m);
    if (m.metric == Metric::Geodesic) {
        doc["graph"] = {{"spacing", g.spacing},
                        {"connectivity", g.connectivity},
                        {"bbox", {g.box.xmin, g.box.ymin, g.box.xmax, g.box.ymax}},
                        {"exclusion", g.exclusion.empty() ? json(nullptr) : json::parse(io::polygon_to_geojson(g.exclusion))}};
    }
    return doc;
}

/// Chooses factor thresholds and smooth knots, each conditioned on the terms
/// chosen before it.
TermSet select_terms(const FitCommandOptions& o, const PpmDataset& data, Criterion crit) {
    TermSet terms;
    auto fixed = [&] { return term_columns(terms, data.covariates, static_cast<Eigen::Index>(data.size())); };
    for (const auto& spec : o.factors) {
        auto eq = spec.find('=');
        if (eq == std::string::npos) throw InputError("--factor expects NAME=t1,t2,...; got '" + spec + "'");
        CovariateBlock b = fixed();
        terms.factors.push_back(select_threshold(data, spec.substr(0, eq), parse_list(spec.substr(eq + 1)), crit,
                                                 b.cols() > 0 ? &b : nullptr));
    }
    for (const auto& name : o.smooths) {
        CovariateBlock b = fixed();
        terms.smooths.push_back(select_knots_1d(data, name, o.smooth_max_knots, crit, b.cols() > 0 ? &b : nullptr));
    }
    return terms;
}

json cmd_fit(const FitCommandOptions& o, unsigned threads) {
    LoadedData d = load_data(o.data);
    const Criterion crit = parse_criterion(o.criterion);
    Geometry g;
    g.box = bounding_box(d.region);
    g.exclusion = d.exclusion;
    g.spacing = o.graph_spacing > 0 ? o.graph_spacing : d.spacing;
    g.connectivity = o.connectivity;

    CandidateOptions co;
    co.pseudo_fraction = o.candidate_fraction;
    if (o.pseudo_candidates > 0) co.pseudo_count = o.pseudo_candidates;
    co.seed = o.seed;
    CandidateSet cand = build_candidate_knots(d.presences, d.pseudo, co);

    TermSet terms = select_terms(o, d.data, crit);
    CovariateBlock block = term_columns(terms, d.data.covariates, static_cast<Eigen::Index>(d.data.size()));

    SalsaConfig cfg;
    cfg.criterion = crit;
    cfg.seed = o.seed;
    cfg.threads = threads;
    cfg.max_outer_iterations = o.outer;
    if (o.residuals == "regions") cfg.residuals = ResidualKind::KnotRegions;
    else if (o.residuals == "pearson") {
        cfg.residuals = ResidualKind::Pearson;
        cfg.n_residual_candidates = 5;
    } else throw InputError("--residuals must be regions or pearson");
    if (o.r_select == "after") cfg.r_select_mode = RSelectMode::AfterEachStep;
    else if (o.r_select == "during") cfg.r_select_mode = RSelectMode::DuringSteps;
    else throw InputError("--r-select must be after or during");

    auto need_graph = [&](Metric m) {
        if (m == Metric::Geodesic && !(g.spacing > 0))
            throw InputError("geodesic distances need --graph-spacing (or a lattice --spacing)");
    };
    const fs::path out(o.out_dir);
    json summary = {{"n_presence", d.data.n_presence}, {"n_pseudo", d.data.n_pseudo()}, {"n_candidates", cand.size()}};

    if (o.sweep) {
        std::vector<io::SweepRow> rows;
        for (Metric metric : {Metric::Euclidean, Metric::Geodesic}) {
            need_graph(metric);
            for (BasisKind basis : {BasisKind::Exponential, BasisKind::Gaussian}) {
                SalsaProblem problem = build_problem(d, cand, metric, basis, o.r_count, g, threads, block, terms);
                for (auto ks : parse_count_list(o.sweep_starts)) {
                    auto t0 = Clock::now();
                    SalsaResult r = run_salsa2d(problem, cfg, ks, std::min(o.min_knots, ks), std::max(o.max_knots, ks));
                    rows.push_back({metric, basis, ks, r.knots.size(), r.model.log_pl, r.model.bic, seconds_since(t0) / 60.0});
                }
            }
        }
        io::write_file(out / "sweep.csv", io::sweep_csv(rows));
        summary["sweep_rows"] = rows.size();
        return summary;
    }

    const Metric metric = parse_metric(o.distance);
    need_graph(metric);
    SalsaProblem problem = build_problem(d, cand, metric, parse_basis(o.basis), o.r_count, g, threads, block, terms);

    if (o.method == "salsa2d") {
        SalsaResult r = run_salsa2d(problem, cfg, o.start_knots, o.min_knots, o.max_knots);
        io::write_file(out / "model.json", model_document(r.model, g).dump(2) + "\n");
        io::write_file(out / "trace.jsonl", io::trace_jsonl(r.trace));
        summary.update({{"knots", r.knots.size()},
                        {"log_pl", r.model.log_pl},
                        {"bic", r.model.bic},
                        {"aicc", r.model.aicc},
                        {"dropped_at_init", r.dropped_at_init.size()},
                        {"outer_iterations", r.outer_iterations},
                        {"hit_iteration_cap", r.hit_iteration_cap}});
    } else if (o.method == "average") {
        auto members = fit_grid(problem, parse_count_list(o.k_list), threads);
        AveragingEnsemble e = make_ensemble(std::move(members), o.delta, o.strict_delta);
        io::write_file(out / "ensemble.csv", io::ensemble_csv(e));
        std::size_t best = 0;
        for (std::size_t i = 1; i < e.weights.size(); ++i)
            if (e.weights[i] > e.weights[best]) best = i;
        io::write_file(out / "model.json", model_document(e.members[best].model, g).dump(2) + "\n");
        summary.update({{"members", e.members.size()}, {"averaged", e.n_averaged()}, {"log_pl", ensemble_log_pl(e, problem)}});
    } else {
        throw InputError("--method must be salsa2d or average");
    }
    return summary;
}

// ---------------------------------------------------------------------------
// predict and partial

struct PredictOptions {
    std::string model, grid, out_dir = ".";
    double top_percent = 0.0;
};

json cmd_predict(const PredictOptions& o) {
    json doc = json::parse(io::read_file(o.model));
    FittedModel m = io::model_from_json(doc);
    auto csv = io::read_csv(o.grid);
    PointSet pts = io::points_from_csv(csv, o.grid);
    CovariateTable cov;
    for (const auto& h : csv.header) {
        if (h == "x" || h == "y") continue;
        auto v = io::numeric_column(csv, h, o.grid);
        cov.emplace(h, Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    Eigen::MatrixXd h;
    if (m.metric == Metric::Euclidean) {
        h = euclidean_distances(pts, PointSet(m.knot_points)).values;
    } else {
        if (!doc.contains("graph")) throw InputError(o.model + ": geodesic model lacks its graph description");
        const auto& gj = doc.at("graph");
        auto bb = gj.at("bbox").get<std::vector<double>>();
        Polygon excl;
        if (!gj.at("exclusion").is_null()) excl = io::polygon_from_geojson(gj.at("exclusion").dump(), o.model);
        GridGraphOptions gopt;
        gopt.connectivity = gj.at("connectivity").get<int>();
        h = geodesic_point_distances({bb[0], bb[1], bb[2], bb[3]}, gj.at("spacing").get<double>(), excl, pts,
                                     PointSet(m.knot_points), gopt)
                .values;
    }
    Eigen::VectorXd lambda = predict_intensity(m, io::model_design(m, h, m.terms.empty() ? nullptr : &cov));

    std::vector<std::string> header = {"x", "y", "intensity"};
    double threshold = std::numeric_limits<double>::infinity();
    if (o.top_percent > 0) {
        if (o.top_percent >= 100) throw InputError("--top-percent must be in (0, 100)");
        header.push_back("top");
        threshold = quantile(std::vector<double>(lambda.data(), lambda.data() + lambda.size()), 1.0 - o.top_percent / 100.0);
    }
    io::CsvWriter w(header);
    std::size_t marked = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double v = lambda[static_cast<Eigen::Index>(i)];
        std::vector<std::string> row = {io::format_double(pts[i].x), io::format_double(pts[i].y), io::format_double(v)};
        if (o.top_percent > 0) {
            row.push_back(v > threshold ? "1" : "0");
            marked += v > threshold;
        }
        w.row(row);
    }
    io::write_file(fs::path(o.out_dir) / "intensity.csv", w.str());
    json s = {{"locations", pts.size()}};
    if (o.top_percent > 0) s.update({{"threshold", threshold}, {"marked", marked}});
    return s;
}

struct PartialOptions {
    std::string model, term, values, out_dir = ".";
    std::vector<std::string> fixes;
};

json cmd_partial(const PartialOptions& o) {
    FittedModel m = io::read_model(o.model);
    std::map<std::string, double> fixed;
    for (const auto& f : o.fixes) {
        auto eq = f.find('=');
        if (eq == std::string::npos) throw InputError("--fix expects NAME=VALUE; got '" + f + "'");
        fixed[f.substr(0, eq)] = io::parse_double(f.substr(eq + 1), "--fix " + f);
    }
    auto curve = partial_effect(m, o.term, parse_grid(o.values), fixed);
    io::write_file(fs::path(o.out_dir) / "partial.csv", io::effect_csv(o.term, curve));
    return {{"points", curve.size()}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SALSA2D adaptive knot selection for spatial point-process models"};
    app.set_version_flag("--version", kVersion);
    app.option_defaults()->always_capture_default();
    std::string config_path;
    app.add_option("--config", config_path, "Key=value configuration file; command-line flags win");
    app.require_subcommand(1);
    int threads_flag = 0;
    app.add_option("--threads", threads_flag, "Worker threads (overrides SALSA2D_THREADS)")->check(CLI::NonNegativeNumber);

    SimulateOptions sim;
    auto* simulate = app.add_subcommand("simulate", "Simulate a synthetic presence pattern on the unit square");
    simulate->add_option("--scenario", sim.scenario, "two-bump or homogeneous");
    simulate->add_option("--rate", sim.rate, "Intensity of the homogeneous scenario");
    simulate->add_option("--seed", sim.seed, "Random seed");
    simulate->add_option("--out-dir", sim.out_dir, "Output directory");

    GridOptions grid;
    auto* grid_cmd = app.add_subcommand("grid", "Pseudo-absence lattice and resolution convergence table");
    grid.data.add(grid_cmd, false);
    grid_cmd->add_option("--spacings", grid.spacings, "Comma list of spacings, coarse to fine");
    grid_cmd->add_option("--knots", grid.knots, "Knot counts of the fixed-knot specs");
    grid_cmd->add_option("--tolerance", grid.tolerance, "Relative logPL change regarded as converged");
    grid_cmd->add_option("--r-count", grid.r_count, "Length of the r sequence");
    grid_cmd->add_option("--out-dir", grid.out_dir, "Output directory");

    FitCommandOptions fit;
    auto* fit_cmd = app.add_subcommand("fit", "Fit SALSA2D, the model-averaging baseline, or a start-knot sweep");
    fit.data.add(fit_cmd, true);
    fit_cmd->add_option("--method", fit.method, "salsa2d or average");
    fit_cmd->add_flag("--sweep", fit.sweep, "Run SALSA2D over start knots x basis x distance");
    fit_cmd->add_option("--sweep-starts", fit.sweep_starts, "Start knot counts for --sweep");
    fit_cmd->add_option("--basis", fit.basis, "exponential or gaussian");
    fit_cmd->add_option("--distance", fit.distance, "euclidean or geodesic");
    fit_cmd->add_option("--graph-spacing", fit.graph_spacing, "Lattice spacing of the geodesic graph");
    fit_cmd->add_option("--connectivity", fit.connectivity, "Geodesic graph connectivity (4 or 8)");
    fit_cmd->add_option("--start-knots", fit.start_knots, "K_s");
    fit_cmd->add_option("--min-knots", fit.min_knots, "K_min");
    fit_cmd->add_option("--max-knots", fit.max_knots, "K_max");
    fit_cmd->add_option("--r-count", fit.r_count, "Length of the r sequence");
    fit_cmd->add_option("--criterion", fit.criterion, "bic, aicc or logpl");
    fit_cmd->add_option("--residuals", fit.residuals, "regions or pearson");
    fit_cmd->add_option("--r-select", fit.r_select, "after or during");
    fit_cmd->add_option("--max-outer", fit.outer, "Outer iteration cap");
    fit_cmd->add_option("--seed", fit.seed, "Random seed");
    fit_cmd->add_option("--candidate-fraction", fit.candidate_fraction, "Share of pseudo-absences among knot candidates");
    fit_cmd->add_option("--pseudo-candidates", fit.pseudo_candidates, "Exact pseudo-absence candidate count");
    fit_cmd->add_option("--k-list", fit.k_list, "Knot counts for --method average");
    fit_cmd->add_option("--delta", fit.delta, "AICc window for averaging");
    fit_cmd->add_flag("--strict-delta", fit.strict_delta, "Use delta < window instead of <=");
    fit_cmd->add_option("--factor", fit.factors, "NAME=t1,t2,...: two-level factor with the cutoff chosen by the criterion");
    fit_cmd->add_option("--smooth", fit.smooths, "Covariate with a quadratic B-spline smooth");
    fit_cmd->add_option("--smooth-max-knots", fit.smooth_max_knots, "Interior knot cap for smooths");
    fit_cmd->add_option("--out-dir", fit.out_dir, "Output directory");

    PredictOptions pred;
    auto* predict = app.add_subcommand("predict", "Predict intensity at grid locations");
    predict->add_option("--model", pred.model, "Model JSON")->required();
    predict->add_option("--grid", pred.grid, "Locations CSV (x,y plus covariates)")->required();
    predict->add_option("--top-percent", pred.top_percent, "Mark locations in the top percent of intensity");
    predict->add_option("--out-dir", pred.out_dir, "Output directory");

    PartialOptions part;
    auto* partial = app.add_subcommand("partial", "Partial effect of one covariate");
    partial->add_option("--model", part.model, "Model JSON")->required();
    partial->add_option("--term", part.term, "Covariate name")->required();
    partial->add_option("--values", part.values, "from:to:n or a comma list")->required();
    partial->add_option("--fix", part.fixes, "NAME=VALUE for every other covariate");
    partial->add_option("--out-dir", part.out_dir, "Output directory");

    try {
        auto args = expand_config(std::vector<std::string>(argv, argv + argc), app);
        std::vector<char*> cargs;
        for (auto& a : args) cargs.push_back(a.data());
        app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInput;
    }

    const unsigned threads = threads_flag > 0 ? static_cast<unsigned>(threads_flag) : default_thread_count();
    CLI::App* sub = app.get_subcommands().front();
    std::string out_dir = sub == simulate ? sim.out_dir
                        : sub == grid_cmd ? grid.out_dir
                        : sub == fit_cmd  ? fit.out_dir
                        : sub == predict  ? pred.out_dir
                                          : part.out_dir;
    std::optional<Manifest> manifest;
    try {
        fs::create_directories(out_dir);
        manifest.emplace(out_dir, sub->get_name(), config_echo(app, *sub));
        manifest->note("threads", threads);
        json summary;
        if (sub == simulate) {
            manifest->begin();
            summary = cmd_simulate(sim);
        } else if (sub == grid_cmd) {
            grid.data.validate();
            grid.data.record(*manifest);
            manifest->begin();
            summary = cmd_grid(grid, threads);
        } else if (sub == fit_cmd) {
            fit.data.validate();
            fit.data.record(*manifest);
            manifest->begin();
            summary = cmd_fit(fit, threads);
        } else if (sub == predict) {
            check_exists(pred.model, "model");
            check_exists(pred.grid, "grid");
            manifest->input("model", pred.model);
            manifest->input("grid", pred.grid);
            manifest->begin();
            summary = cmd_predict(pred);
        } else {
            check_exists(part.model, "model");
            manifest->input("model", part.model);
            manifest->begin();
            summary = cmd_partial(part);
        }
        manifest->finish("ok", summary);
        return 0;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        if (manifest) manifest->finish("input_error", {{"message", e.what()}});
        return kExitInput;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        if (manifest) manifest->finish("numerical_error", {{"message", e.what()}});
        return kExitNumerical;
    } catch (const json::exception& e) {
        std::cerr << "error: malformed JSON input: " << e.what() << "\n";
        if (manifest) manifest->finish("input_error", {{"message", e.what()}});
        return kExitInput;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
}
