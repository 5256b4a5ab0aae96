#include <gtest/gtest.h>

#include <random>

#include <boost/math/distributions/fisher_f.hpp>

#include "groundkit/analysis.hpp"
#include "oracles.hpp"

using namespace groundkit;

namespace {

std::vector<std::string> names(int n) {
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) out.push_back("c" + std::to_string(i));
    return out;
}

}  // namespace

TEST(Ols, ExactFitRecoversCoefficients) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    Eigen::MatrixXd X(30, 3);
    for (int r = 0; r < 30; ++r) X.row(r) << 1.0, g(rng), g(rng);
    Eigen::VectorXd beta(3);
    beta << 0.5, -2.0, 3.0;
    Eigen::VectorXd y = X * beta;
    auto fit = ols_fit(X, y, names(3));
    EXPECT_LT((fit.coefficients - beta).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT(fit.rss, 1e-20);
}

TEST(Ols, InterceptOnlyGivesMean) {
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(4, 1);
    Eigen::VectorXd y(4);
    y << 1, 2, 3, 6;
    auto fit = ols_fit(X, y, {"intercept"});
    EXPECT_NEAR(fit.coefficients[0], 3.0, 1e-14);
    EXPECT_NEAR(fit.rss, 14.0, 1e-12);
    EXPECT_NEAR(fit.std_errors[0], std::sqrt(14.0 / 3.0 / 4.0), 1e-12);
}

TEST(Ols, ResidualsOrthogonalToColumns) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    Eigen::MatrixXd X = Eigen::MatrixXd::NullaryExpr(50, 5, [&] { return g(rng); });
    Eigen::VectorXd y = Eigen::VectorXd::NullaryExpr(50, [&] { return g(rng); });
    auto fit = ols_fit(X, y, names(5));
    EXPECT_LT((X.transpose() * fit.residuals).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Ols, RssNeverIncreasesWithColumns) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    Eigen::MatrixXd X = Eigen::MatrixXd::NullaryExpr(40, 8, [&] { return g(rng); });
    Eigen::VectorXd y = Eigen::VectorXd::NullaryExpr(40, [&] { return g(rng); });
    double prev = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 8; ++k) {
        auto names_k = names(k);
        double rss = ols_fit(X.leftCols(k), y, names_k).rss;
        EXPECT_LE(rss, prev + 1e-12);
        prev = rss;
    }
}

TEST(Ols, DuplicateColumnDropped) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g;
    Eigen::MatrixXd X(20, 3);
    for (int r = 0; r < 20; ++r) {
        double a = g(rng);
        X.row(r) << 1.0, a, 2 * a;
    }
    Eigen::VectorXd y = Eigen::VectorXd::NullaryExpr(20, [&] { return g(rng); });
    auto fit = ols_fit(X, y, {"intercept", "a", "a2"});
    EXPECT_EQ(fit.rank, 2);
    EXPECT_EQ(fit.columns.size(), 2u);
    EXPECT_EQ(fit.notices.size(), 1u);
}

TEST(Ols, EarlierColumnsWinOverDependentLaterOnes) {
    // Two indicators that partition the rows sum to the intercept column.
    Eigen::MatrixXd X(6, 3);
    X << 1, 1, 0,
         1, 0, 1,
         1, 1, 0,
         1, 0, 1,
         1, 1, 0,
         1, 0, 1;
    Eigen::VectorXd y(6);
    y << 1, 2, 1.5, 2.5, 0.5, 3;
    auto fit = ols_fit(X, y, {"intercept", "a", "b"});
    EXPECT_EQ(fit.columns, (std::vector<std::string>{"intercept", "a"}));
    auto restricted = ols_fit(X.leftCols(1), y, {"intercept"});
    EXPECT_NO_THROW(f_test_nested(restricted, fit));
}

TEST(Ols, MoreColumnsThanRows) {
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(2, 3);
    Eigen::VectorXd y = Eigen::VectorXd::Ones(2);
    try {
        ols_fit(X, y, names(3));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::degenerate_design);
    }
}

TEST(Ols, PlantedCoefficientsWithinThreeSe) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    const int n = 400;
    Eigen::MatrixXd X(n, 4);
    for (int r = 0; r < n; ++r) X.row(r) << 1.0, g(rng), g(rng), (rng() % 2) * 1.0;
    Eigen::VectorXd beta(4);
    beta << 0.3, 0.8, -0.5, 1.2;
    Eigen::VectorXd y = X * beta + 0.5 * Eigen::VectorXd::NullaryExpr(n, [&] { return g(rng); });
    auto fit = ols_fit(X, y, names(4));
    for (int i = 0; i < 4; ++i) EXPECT_LT(std::abs(fit.coefficients[i] - beta[i]), 3 * fit.std_errors[i]) << i;
}

TEST(FTest, ReferenceTail) {
    boost::math::fisher_f dist(2, 40);
    // scipy.stats.f.sf(3.2, 2, 40)
    EXPECT_NEAR(boost::math::cdf(boost::math::complement(dist, 3.2)), 0.05138545607162816, 1e-12);
}

TEST(FTest, EdgeCases) {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> g;
    Eigen::MatrixXd X = Eigen::MatrixXd::NullaryExpr(20, 3, [&] { return g(rng); });
    Eigen::VectorXd y = Eigen::VectorXd::NullaryExpr(20, [&] { return g(rng); });
    auto fit = ols_fit(X, y, names(3));
    auto same = f_test_nested(fit, fit);
    EXPECT_EQ(same.f, 0.0);
    EXPECT_EQ(same.p_value, 1.0);

    Eigen::VectorXd exact = X * Eigen::Vector3d(1, 2, 3);
    auto restricted = ols_fit(X.leftCols(1), exact, names(1));
    auto perfect = ols_fit(X, exact, names(3));
    perfect.rss = 0.0;
    auto inf = f_test_nested(restricted, perfect);
    EXPECT_TRUE(inf.infinite_f);
    EXPECT_EQ(inf.p_value, 0.0);
    EXPECT_NE(ftest_json(inf).find("\"inf\""), std::string::npos);
}

TEST(FTest, NullPValuesRoughlyUniform) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    int below = 0;
    const int sims = 400;
    for (int s = 0; s < sims; ++s) {
        Eigen::MatrixXd X(60, 5);
        for (int r = 0; r < 60; ++r) X.row(r) << 1.0, g(rng), g(rng), g(rng), g(rng);
        Eigen::VectorXd y = Eigen::VectorXd::NullaryExpr(60, [&] { return g(rng); });
        auto n5 = names(5);
        auto t = f_test_nested(ols_fit(X.leftCols(2), y, {n5[0], n5[1]}), ols_fit(X, y, n5));
        below += t.p_value < 0.1;
    }
    EXPECT_NEAR(below / static_cast<double>(sims), 0.1, 0.05);
}

TEST(Design, ColumnsAndNotices) {
    std::vector<SegmentObservation> obs;
    for (int i = 0; i < 30; ++i) {
        SegmentObservation o{0.5 + 0.01 * i, i / 30.0, 2, {"common", i % 2 ? "odd" : "even"}};
        if (i < 3) o.tokens.push_back("rare");
        obs.push_back(o);
    }
    auto d = build_design(obs, 10, 5);
    EXPECT_EQ(d.columns, (std::vector<std::string>{"intercept", "position", "position_sq", "token_count", "common",
                                                   "even", "odd"}));
    EXPECT_EQ(d.X(1, 6), 1.0);
    EXPECT_EQ(d.X(1, 5), 0.0);
    auto small = build_design(std::vector<SegmentObservation>(obs.begin(), obs.begin() + 6), 10, 1);
    EXPECT_LT(small.cols(), small.rows());
    EXPECT_FALSE(small.notices.empty());
}

TEST(Design, PlantedLexicalSignalDetected) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g;
    std::vector<SegmentObservation> obs;
    for (int i = 0; i < 500; ++i) {
        SegmentObservation o;
        o.relative_position = (i % 100) / 100.0;
        o.tokens = {"w" + std::to_string(rng() % 20), "w" + std::to_string(rng() % 20)};
        o.token_count = 2;
        bool good = std::find(o.tokens.begin(), o.tokens.end(), "w3") != o.tokens.end();
        o.segment_auc = 0.5 + (good ? 0.2 : 0.0) + 0.1 * g(rng);
        obs.push_back(o);
    }
    auto d = build_design(obs, 20, 10);
    auto full = ols_fit(d);
    auto restricted = ols_fit(d.leading(4));
    auto t = f_test_nested(restricted, full);
    EXPECT_LT(t.p_value, 0.01);
    auto top = report_coefficients(full, 3);
    ASSERT_FALSE(top.empty());
    EXPECT_EQ(top[0].term, "w3");
}

TEST(Coefficients, RankingTiesLexicographic) {
    OlsFit fit;
    fit.columns = {"intercept", "zeta", "alpha", "mid"};
    fit.coefficients = Eigen::Vector4d(9, 0.5, 0.5, -1);
    fit.std_errors = Eigen::Vector4d(1, 1, 1, 1);
    auto rows = report_coefficients(fit, 10);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0].term, "alpha");
    EXPECT_EQ(rows[1].term, "zeta");
    EXPECT_EQ(rows[2].term, "mid");
    auto csv = coefficients_csv(fit, 2);
    EXPECT_EQ(csv.substr(0, csv.find('\n', 30)), "term,coefficient,std_error\nintercept,9,1");
}
