#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "scenarios.hpp"
#include "salsa2d/salsa2d.hpp"

using namespace salsa2d;

TEST(Csv, PointsRoundTripExactly) {
    PointSet ps({{0.1, 0.2}, {1.0 / 3.0, 2e-17}, {-5.5, 1e300}});
    auto back = io::points_from_csv(io::parse_csv(io::points_csv(ps)), "t");
    ASSERT_EQ(back.size(), ps.size());
    for (std::size_t i = 0; i < ps.size(); ++i) {
        EXPECT_EQ(back[i].x, ps[i].x);
        EXPECT_EQ(back[i].y, ps[i].y);
    }
}

TEST(Csv, QuotedFieldsAndBom) {
    auto t = io::parse_csv("\xEF\xBB\xBFname, x\n\"a,b\",1\n\"say \"\"hi\"\"\",2\n");
    ASSERT_EQ(t.header.size(), 2u);
    EXPECT_EQ(t.header[0], "name");
    EXPECT_EQ(t.header[1], "x");
    EXPECT_EQ(t.rows[0][0], "a,b");
    EXPECT_EQ(t.rows[1][0], "say \"hi\"");
}

TEST(Csv, MalformedInputsNameTheProblem) {
    EXPECT_THROW(io::parse_csv(""), InputError);
    try {
        io::parse_csv("x,y\n1,2\n3\n", "pts.csv");
        FAIL();
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find("pts.csv:3"), std::string::npos);
    }
    auto t = io::parse_csv("x,y\n1,abc\n");
    EXPECT_THROW(io::numeric_column(t, "y", "t"), InputError);
    EXPECT_THROW(io::numeric_column(t, "z", "t"), InputError);
    EXPECT_THROW(io::points_from_csv(io::parse_csv("x,y\n1,inf\n"), "t"), InputError);
}

TEST(Csv, MultiplicityColumnIsRead) {
    auto ps = io::points_from_csv(io::parse_csv("x,y,multiplicity\n0,0,3\n1,1,1\n"), "t");
    ASSERT_EQ(ps.multiplicity.size(), 2u);
    EXPECT_EQ(ps.multiplicity[0], 3.0);
}

TEST(Csv, FormatDoubleSpecialValues) {
    EXPECT_EQ(io::format_double(std::nan("")), "nan");
    EXPECT_EQ(io::format_double(-std::numeric_limits<double>::infinity()), "-inf");
    EXPECT_TRUE(std::isinf(io::parse_double("inf", "t")));
    EXPECT_TRUE(std::isnan(io::parse_double("NA", "t")));
    EXPECT_EQ(io::parse_double(" +2.5 ", "t"), 2.5);
}

TEST(GeoJson, PolygonRoundTrip) {
    Polygon square = rectangle(0, 0, 2, 3);
    Polygon back = io::polygon_from_geojson(io::polygon_to_geojson(square));
    EXPECT_NEAR(polygon_area(back), 6.0, 1e-12);
    EXPECT_TRUE(point_in_polygon({1, 1}, back));
    EXPECT_FALSE(point_in_polygon({2.5, 1}, back));
}

TEST(GeoJson, PolygonInsideFeatureCollectionWithHole) {
    const std::string text = R"({"type":"FeatureCollection","features":[{"type":"Feature","properties":{},
        "geometry":{"type":"Polygon","coordinates":[[[0,0],[4,0],[4,4],[0,4],[0,0]],[[1,1],[3,1],[3,3],[1,3],[1,1]]]}}]})";
    Polygon p = io::polygon_from_geojson(text);
    EXPECT_EQ(p.rings.size(), 2u);
    EXPECT_FALSE(point_in_polygon({2, 2}, p));
    EXPECT_TRUE(point_in_polygon({0.5, 2}, p));
}

TEST(GeoJson, RejectsWrongOrBrokenDocuments) {
    EXPECT_THROW(io::polygon_from_geojson("{not json"), InputError);
    EXPECT_THROW(io::polygon_from_geojson(R"({"type":"Point","coordinates":[0,0]})"), InputError);
    EXPECT_THROW(io::polygon_from_geojson(R"({"type":"Polygon","coordinates":[[[0,0],[1]]]})"), InputError);
    EXPECT_THROW(io::read_polygon_geojson("/nonexistent/region.geojson"), InputError);
}

TEST(GeoJson, FeaturesCollectPointsAndLines) {
    const std::string text = R"({"type":"GeometryCollection","geometries":[
        {"type":"Point","coordinates":[1,2]},
        {"type":"MultiPoint","coordinates":[[3,4],[5,6]]},
        {"type":"LineString","coordinates":[[0,0],[1,0]]}]})";
    FeatureSet fs = io::features_from_geojson(text);
    EXPECT_EQ(fs.points.size(), 3u);
    EXPECT_EQ(fs.polylines.size(), 1u);
    EXPECT_THROW(io::features_from_geojson(R"({"type":"FeatureCollection","features":[]})"), InputError);
}

TEST(DistanceMatrix, BinaryRoundTripIsBitExact) {
    PointSet a({{0, 0}, {1, 2}, {3, 1}}), b({{0.5, 0.5}, {2, 2}});
    DistanceMatrix d = euclidean_distances(a, b);
    const std::string bytes = io::distance_matrix_binary(d);
    EXPECT_EQ(bytes.size(), 32u + 6u * 8u);
    DistanceMatrix back = io::distance_matrix_from_binary(bytes);
    EXPECT_EQ(back.metric, d.metric);
    EXPECT_EQ(back.values, d.values);
}

TEST(DistanceMatrix, BinaryRejectsCorruption) {
    DistanceMatrix d = euclidean_distances(PointSet({{0, 0}, {1, 1}}), PointSet({{0, 0}, {1, 1}}));
    std::string bytes = io::distance_matrix_binary(d);
    EXPECT_THROW(io::distance_matrix_from_binary(bytes.substr(0, bytes.size() - 1)), InputError);
    std::string bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(io::distance_matrix_from_binary(bad), InputError);
    bad = bytes;
    bad[24] = 7;
    EXPECT_THROW(io::distance_matrix_from_binary(bad), InputError);
}

TEST(DistanceMatrix, CsvHasOneRowPerPoint) {
    DistanceMatrix d = euclidean_distances(PointSet({{0, 0}, {3, 4}}), PointSet({{0, 0}}));
    auto t = io::parse_csv(io::distance_matrix_csv(d));
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(io::parse_double(t.rows[1][0], "t"), 5.0);
}

class ModelDocument : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        t_ = scenario::two_bump_problem(5, 20, 6).release();
        SalsaConfig cfg;
        cfg.threads = 1;
        result_ = new SalsaResult(run_salsa2d(t_->problem, cfg, 6, 2, 20));
        model_ = &result_->model;
    }
    static void TearDownTestSuite() {
        delete result_;
        delete t_;
    }
    static scenario::TwoBumpProblem* t_;
    static SalsaResult* result_;
    static FittedModel* model_;
};
SalsaResult* ModelDocument::result_ = nullptr;
scenario::TwoBumpProblem* ModelDocument::t_ = nullptr;
FittedModel* ModelDocument::model_ = nullptr;

TEST_F(ModelDocument, JsonRoundTripPreservesPredictions) {
    const FittedModel& m = *model_;
    ASSERT_EQ(m.knot_points.size(), m.radial.size());
    FittedModel back = io::model_from_json(nlohmann::json::parse(io::model_to_json(m).dump()));
    EXPECT_EQ(back.coefficients, m.coefficients);
    EXPECT_EQ(back.labels, m.labels);
    EXPECT_EQ(back.bic, m.bic);
    EXPECT_EQ(back.covariance.rows(), m.covariance.rows());
    PointSet grid = lattice_points(BoundingBox{0, 0, 1, 1}, 0.1);
    Eigen::VectorXd a = predict_intensity(m, io::model_design_euclidean(m, grid));
    Eigen::VectorXd b = predict_intensity(back, io::model_design_euclidean(back, grid));
    EXPECT_EQ(a, b);
}

TEST_F(ModelDocument, StoredDesignMatchesSearchDesign) {
    const FittedModel& m = *model_;
    PointSet pts = t_->bench.data.points;
    Eigen::VectorXd stored = predict_intensity(m, io::model_design_euclidean(m, pts));
    Eigen::VectorXd fitted = predict_intensity(m, build_design(result_->knots, t_->problem.data_to_candidates, t_->problem.rseq));
    EXPECT_TRUE(stored.isApprox(fitted, 1e-12));
}

TEST_F(ModelDocument, RejectsForeignDocuments) {
    EXPECT_THROW(io::model_from_json(nlohmann::json{{"format", "other"}}), InputError);
    auto j = io::model_to_json(*model_);
    j["labels"].push_back("extra");
    EXPECT_THROW(io::model_from_json(j), InputError);
    j = io::model_to_json(*model_);
    j.erase("coefficients");
    EXPECT_THROW(io::model_from_json(j), InputError);
}

TEST(Terms, JsonRoundTrip) {
    TermSet t;
    t.factors.push_back({"dist", {1, 2, 3}, 2.0});
    t.smooths.push_back({"rain", 2, {0.3, 0.7}, 0.0, 1.0, KnotSelection::BicSearch});
    TermSet back = io::terms_from_json(io::terms_to_json(t));
    ASSERT_EQ(back.factors.size(), 1u);
    EXPECT_EQ(back.factors[0].chosen, 2.0);
    EXPECT_EQ(back.factors[0].candidates, t.factors[0].candidates);
    ASSERT_EQ(back.smooths.size(), 1u);
    EXPECT_EQ(back.smooths[0].interior_knots, t.smooths[0].interior_knots);
    EXPECT_EQ(back.smooths[0].selection, KnotSelection::BicSearch);
}

TEST(Trace, JsonlRoundTripKeepsInfinities) {
    SalsaTrace trace = {{"simplify", "drop knot 3", 10.5, 9.25, true, 4},
                        {"exchange", "move knot 1 -> 7", 9.25, std::numeric_limits<double>::infinity(), false, 4}};
    SalsaTrace back = io::trace_from_jsonl(io::trace_jsonl(trace));
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].action, "drop knot 3");
    EXPECT_EQ(back[0].after, 9.25);
    EXPECT_TRUE(back[0].accepted);
    EXPECT_TRUE(std::isnan(back[1].after));
    EXPECT_EQ(back[1].knots, 4u);
}

TEST(Dataset, CsvAndSidecarRoundTrip) {
    CovariateTable pc, qc;
    pc["z"] = Eigen::Vector2d(0.25, 0.5);
    qc["z"] = Eigen::VectorXd::LinSpaced(9, 0.0, 1.0);
    auto d = assemble_dataset(PointSet({{0.1, 0.1}, {0.7, 0.3}}), lattice_points(BoundingBox{0, 0, 1, 1}, 0.5), 1.0, pc, qc,
                              0.5);
    const std::string csv = io::dataset_csv(d);
    auto side = io::dataset_sidecar(d, csv, {{"seed", 4}});
    EXPECT_EQ(side.at("csv_fnv1a").get<std::string>(), io::fnv1a_hex(csv));
    auto back = io::dataset_from_csv(csv, side);
    EXPECT_EQ(back.size(), d.size());
    EXPECT_EQ(back.n_presence, d.n_presence);
    EXPECT_EQ(back.y, d.y);
    EXPECT_EQ(back.w, d.w);
    EXPECT_EQ(back.covariates.at("z"), d.covariates.at("z"));
    EXPECT_THROW(io::dataset_from_csv(csv + "\n0,0,0,1,0,0\n", side), InputError);
}

TEST(Fnv1a, KnownVectors) {
    EXPECT_EQ(io::fnv1a_hex(""), "cbf29ce484222325");
    EXPECT_EQ(io::fnv1a_hex("a"), "af63dc4c8601ec8c");
    EXPECT_EQ(io::fnv1a_hex("foobar"), "85944171f73967e8");
}

TEST(Files, MissingFileNamesThePath) {
    try {
        io::read_file("/nonexistent/dir/points.csv");
        FAIL();
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/points.csv"), std::string::npos);
    }
    const auto tmp = std::filesystem::temp_directory_path() / "salsa2d_io_test.txt";
    io::write_file(tmp, "abc\n");
    EXPECT_EQ(io::read_file(tmp), "abc\n");
    std::filesystem::remove(tmp);
}
