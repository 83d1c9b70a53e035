#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "field_study.hpp"
#include "scenarios.hpp"
#include "salsa2d/salsa2d.hpp"

using namespace salsa2d;

TEST(AiccWeights, EqualPairSplitsExactly) {
    auto w = aicc_weights({123.4, 123.4});
    EXPECT_EQ(w[0], 0.5);
    EXPECT_EQ(w[1], 0.5);
}

TEST(AiccWeights, StudyDeltaReproducesListedWeights) {
    auto w = aicc_weights({100.0, 108.679});
    EXPECT_NEAR(w[0], fixtures::kGausGeoWeightHigh, 1e-4);
    EXPECT_NEAR(w[1], fixtures::kGausGeoWeightLow, 1e-4);
}

TEST(AiccWeights, ThresholdBoundary) {
    auto w = aicc_weights({0.0, 10.0001, 10.0});
    EXPECT_EQ(w[1], 0.0);
    EXPECT_GT(w[2], 0.0);
    auto strict = aicc_weights({0.0, 10.0}, 10.0, true);
    EXPECT_EQ(strict[1], 0.0);
    EXPECT_EQ(strict[0], 1.0);
}

TEST(AiccWeights, NonFiniteNeverQualify) {
    const double inf = std::numeric_limits<double>::infinity();
    auto w = aicc_weights({inf, 5.0, std::nan("")});
    EXPECT_EQ(w[0], 0.0);
    EXPECT_EQ(w[1], 1.0);
    EXPECT_EQ(w[2], 0.0);
    EXPECT_THROW(aicc_weights({inf}), NumericalError);
    EXPECT_THROW(aicc_weights({}), InputError);
}

TEST(AiccWeights, SumToOneAndMatchAkaikeFormula) {
    std::vector<double> a{3.0, 0.0, 7.5, 2.25, 12.0, 9.99};
    auto w = aicc_weights(a);
    EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
    double z = 0.0;
    for (double v : a)
        if (v <= 10.0) z += std::exp(-0.5 * v);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double expected = a[i] <= 10.0 ? std::exp(-0.5 * a[i]) / z : 0.0;
        EXPECT_NEAR(w[i], expected, 1e-15);
    }
}

TEST(AverageIntensities, SingleMemberIsIdentity) {
    Eigen::VectorXd l = Eigen::VectorXd::LinSpaced(5, 1.0, 3.0);
    EXPECT_EQ(average_intensities({1.0}, {l}), l);
}

TEST(AverageIntensities, IdenticalMembersFixedPoint) {
    Eigen::VectorXd l = Eigen::VectorXd::LinSpaced(5, 1.0, 3.0);
    auto w = aicc_weights({1.0, 2.0, 3.0});
    EXPECT_TRUE(average_intensities(w, {l, l, l}).isApprox(l, 1e-15));
}

TEST(AverageIntensities, MismatchedInputsThrow) {
    EXPECT_THROW(average_intensities({0.5, 0.5}, {Eigen::VectorXd::Ones(3)}), InputError);
    EXPECT_THROW(average_intensities({0.5, 0.5}, {Eigen::VectorXd::Ones(3), Eigen::VectorXd::Ones(4)}), InputError);
}

class EnsembleOnTwoBump : public ::testing::Test {
protected:
    static void SetUpTestSuite() { t_ = scenario::two_bump_problem(3, 20, 4).release(); }
    static void TearDownTestSuite() {
        delete t_;
        t_ = nullptr;
    }
    static scenario::TwoBumpProblem* t_;
};
scenario::TwoBumpProblem* EnsembleOnTwoBump::t_ = nullptr;

TEST_F(EnsembleOnTwoBump, GridShapeAndSharedR) {
    auto members = fit_grid(t_->problem, {5, 10, 15});
    ASSERT_EQ(members.size(), 3u * 4u);
    for (const auto& m : members) {
        EXPECT_EQ(m.knots.size(), m.k);
        for (auto r : m.knots.r_index) EXPECT_EQ(r, m.r_index);
        EXPECT_TRUE(m.ok);
    }
}

TEST_F(EnsembleOnTwoBump, SingleMemberEnsembleHasWeightOne) {
    auto problem = t_->problem;
    problem.rseq.values.resize(1);
    auto e = make_ensemble(fit_grid(problem, {2}));
    ASSERT_EQ(e.members.size(), 1u);
    EXPECT_EQ(e.weights[0], 1.0);
    Eigen::VectorXd member = predict_intensity(e.members[0].model, build_design(e.members[0].knots, problem.data_to_candidates, problem.rseq));
    EXPECT_TRUE(averaged_prediction(e, problem.data_to_candidates, problem.rseq).isApprox(member, 1e-14));
}

TEST_F(EnsembleOnTwoBump, IdenticalDesignsGiveIdenticalAicc) {
    auto a = fit_grid(t_->problem, {6});
    auto b = fit_grid(t_->problem, {6});
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].model.aicc, b[i].model.aicc);
}

TEST_F(EnsembleOnTwoBump, AveragedPredictionIsConvexCombination) {
    auto e = make_ensemble(fit_grid(t_->problem, {5, 10, 15, 20}));
    const auto& h = t_->problem.data_to_candidates;
    Eigen::VectorXd avg = averaged_prediction(e, h, t_->problem.rseq);
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(avg.size(), std::numeric_limits<double>::infinity());
    Eigen::VectorXd hi = -lo;
    std::size_t used = 0;
    for (std::size_t i = 0; i < e.members.size(); ++i) {
        if (e.weights[i] == 0.0) {
            EXPECT_GT(e.delta[i], 10.0);
            continue;
        }
        ++used;
        EXPECT_LE(e.delta[i], 10.0);
        Eigen::VectorXd l = predict_intensity(e.members[i].model, build_design(e.members[i].knots, h, t_->problem.rseq));
        lo = lo.cwiseMin(l);
        hi = hi.cwiseMax(l);
    }
    EXPECT_GE(used, 1u);
    for (Eigen::Index i = 0; i < avg.size(); ++i) {
        EXPECT_GE(avg[i], lo[i] * (1 - 1e-12));
        EXPECT_LE(avg[i], hi[i] * (1 + 1e-12));
    }
    EXPECT_NEAR(std::accumulate(e.weights.begin(), e.weights.end(), 0.0), 1.0, 1e-12);
}

TEST_F(EnsembleOnTwoBump, EnsembleLogPlUsesAveragedIntensity) {
    auto e = make_ensemble(fit_grid(t_->problem, {5, 10}));
    Eigen::VectorXd avg = averaged_prediction(e, t_->problem.data_to_candidates, t_->problem.rseq);
    const auto& d = *t_->problem.data;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < avg.size(); ++i) ll += d.w[i] * (d.y[i] * std::log(avg[i]) - avg[i]);
    EXPECT_NEAR(ensemble_log_pl(e, t_->problem), ll, 1e-9 * std::abs(ll));
}

TEST_F(EnsembleOnTwoBump, OversizedKThrows) {
    EXPECT_THROW(fit_grid(t_->problem, {t_->candidates.size() + 1}), InputError);
    EXPECT_THROW(fit_grid(t_->problem, {}), InputError);
}
