#include <gtest/gtest.h>

#include <random>

#include "groundkit/metrics.hpp"
#include "oracles.hpp"

using namespace groundkit;

TEST(Auc, WorkedExample) {
    std::vector<double> pos = {0.8, 0.3}, neg = {0.5, 0.1};
    EXPECT_EQ(auc(pos, neg), 0.75);
}

TEST(Auc, AllTiedIsHalf) {
    std::vector<double> pos = {0.4, 0.4}, neg = {0.4, 0.4, 0.4};
    EXPECT_EQ(auc(pos, neg), 0.5);
}

TEST(Auc, EmptyClassIsUndefined) {
    std::vector<double> pos = {1.0}, none;
    try {
        auc(pos, none);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::undefined_metric);
    }
}

TEST(Auc, MatchesPairCountingWithTies) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 300; ++trial) {
        std::uniform_int_distribution<int> size(1, 30), level(0, 6);
        std::vector<double> pos(static_cast<std::size_t>(size(rng))), neg(static_cast<std::size_t>(size(rng)));
        for (auto& v : pos) v = level(rng) * 0.25;
        for (auto& v : neg) v = level(rng) * 0.25;
        EXPECT_EQ(auc(pos, neg), oracle::brute_auc(pos, neg));
    }
}

TEST(Auc, InvariantUnderMonotoneTransform) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> pos(10), neg(15);
        for (auto& v : pos) v = g(rng) + 0.5;
        for (auto& v : neg) v = g(rng);
        auto tpos = pos, tneg = neg;
        for (auto& v : tpos) v = std::exp(3 * v) + 7;
        for (auto& v : tneg) v = std::exp(3 * v) + 7;
        EXPECT_EQ(auc(pos, neg), auc(tpos, tneg));
    }
}

TEST(Ranks, AverageRanksMatchCounting) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> v(20);
        for (auto& x : v) x = static_cast<double>(rng() % 6);
        EXPECT_EQ(average_ranks(v), oracle::ranks_by_counting(v));
    }
}

TEST(IntraVideo, DiagonalDominantIsOne) {
    RowMat<double> m = RowMat<double>::Constant(4, 4, 0.1);
    m.diagonal().setConstant(0.9);
    EXPECT_EQ(*intra_video_auc(m), 1.0);
    EXPECT_FALSE(intra_video_auc(RowMat<double>::Ones(1, 1)).has_value());
}

TEST(IntraVideo, NullMeanNearHalf) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g;
    for (int n : {2, 8, 32}) {
        const int trials = n == 2 ? 4000 : 500;
        double sum = 0;
        for (int t = 0; t < trials; ++t) {
            RowMat<double> m = RowMat<double>::NullaryExpr(n, n, [&] { return g(rng); });
            sum += *intra_video_auc(m);
        }
        EXPECT_NEAR(sum / trials, 0.5, 0.02) << n;
    }
}

TEST(SegmentAuc, WorkedExample) {
    // Column 1 of the similarity matrix is (0.2, 0.5, 0.2): caption 1 is ranked
    // against clips 0 and 2 and wins both.
    RowMat<double> m(3, 3);
    m << 0.1, 0.2, 0.0,
         0.3, 0.5, 0.0,
         0.2, 0.2, 0.0;
    EXPECT_EQ(*segment_auc(m, 1), 1.0);
    // Column 0 is (0.1, 0.3, 0.2): the diagonal loses to both others.
    EXPECT_EQ(*segment_auc(m, 0), 0.0);
    RowMat<double> tie(3, 3);
    tie << 0.2, 0.0, 0.0,
           0.2, 0.0, 0.0,
           0.5, 0.0, 0.0;
    EXPECT_EQ(*segment_auc(tie, 0), 0.25);
}

TEST(SegmentAuc, MatchesEnumeration) {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 100; ++t) {
        RowMat<double> m = RowMat<double>::NullaryExpr(6, 6, [&] { return static_cast<double>(rng() % 4); });
        for (int j = 0; j < 6; ++j) {
            std::vector<double> pos = {m(j, j)}, col, row;
            for (int i = 0; i < 6; ++i)
                if (i != j) {
                    col.push_back(m(i, j));
                    row.push_back(m(j, i));
                }
            EXPECT_EQ(*segment_auc(m, j), oracle::brute_auc(pos, col));
            EXPECT_EQ(*segment_auc(m, j, SegmentOrientation::clip_fixed), oracle::brute_auc(pos, row));
        }
    }
}

TEST(Categories, MultiLabelCountsTowardEach) {
    std::vector<VideoGrounding> vids = {{"a", 3, 0.9}, {"b", 3, 0.5}, {"c", 1, std::nullopt}, {"d", 3, 0.7}};
    CategoryLabels labels = {{"a", {"x", "y"}}, {"b", {"x"}}, {"c", {"x"}}, {"d", {"z"}}};
    VerticalMap vert = {{"x", "food"}};
    auto cats = aggregate_by_category(vids, labels, vert, 1);
    ASSERT_EQ(cats.size(), 3u);
    EXPECT_EQ(cats[0].category_id, "x");
    EXPECT_DOUBLE_EQ(cats[0].mean_auc, 0.7);
    EXPECT_EQ(cats[0].n_videos, 2);
    EXPECT_EQ(cats[0].vertical_id, "food");
    EXPECT_EQ(cats[1].n_videos, 1);
    auto filtered = aggregate_by_category(vids, labels, vert, 2);
    ASSERT_EQ(filtered.size(), 1u);
}

TEST(Correlation, SpearmanReference) {
    std::vector<double> x = {1, 2, 2, 4, 5}, y = {2, 1, 4, 3, 5};
    auto c = correlations(x, y, CorrelationKind::spearman);
    // reference values from scipy.stats.spearmanr
    EXPECT_NEAR(c.coefficient, 0.6668859288553503, 1e-12);
    EXPECT_NEAR(c.p_value, 0.21889398131323154, 1e-9);
}

TEST(Correlation, PearsonReference) {
    std::vector<double> x = {1, 2, 3, 4, 5}, y = {2, 1, 4, 3, 7};
    auto c = correlations(x, y, CorrelationKind::pearson);
    EXPECT_NEAR(c.coefficient, 0.824163383692134, 1e-12);
    EXPECT_NEAR(c.p_value, 0.08613863131395952, 1e-9);
    EXPECT_NEAR(c.coefficient, oracle::plain_pearson(x, y), 1e-12);
}

TEST(Correlation, PerfectAndDegenerate) {
    std::vector<double> x = {1, 2, 3, 4}, y = {10, 20, 30, 40}, flat = {1, 1, 1, 1};
    auto c = correlations(x, y, CorrelationKind::spearman);
    EXPECT_EQ(c.coefficient, 1.0);
    EXPECT_EQ(c.p_value, 0.0);
    try {
        correlations(x, flat, CorrelationKind::pearson);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::undefined_correlation);
    }
    std::vector<double> two = {1, 2};
    EXPECT_THROW(correlations(two, two, CorrelationKind::pearson), Error);
}

TEST(Correlation, PermutationAgreesWithTApproximation) {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> g;
    std::vector<double> x(40), y(40);
    for (std::size_t i = 0; i < 40; ++i) {
        x[i] = g(rng);
        y[i] = 0.4 * x[i] + g(rng);
    }
    double t = correlations(x, y, CorrelationKind::pearson).p_value;
    double perm = permutation_p_value(x, y, CorrelationKind::pearson, 4000, 1);
    EXPECT_NEAR(perm, t, 0.02);
}

TEST(WinRate, SelfComparisonIsHalf) {
    std::vector<VideoGrounding> a = {{"a", 3, 0.9}, {"b", 3, 0.5}, {"c", 2, 0.6}};
    EXPECT_EQ(win_rate(a, a).rate, 0.5);
}

TEST(WinRate, CountsWinsAndFilters) {
    std::vector<VideoGrounding> a = {{"a", 3, 0.9}, {"b", 3, 0.5}, {"c", 2, 0.6}};
    std::vector<VideoGrounding> b = {{"a", 3, 0.8}, {"b", 3, 0.7}, {"c", 2, 0.6}};
    auto all = win_rate(a, b);
    EXPECT_DOUBLE_EQ(all.rate, 1.5 / 3);
    InstructionalVotes votes = {{"a", {1, 1, 0}}, {"b", {0, 0, 1}}, {"c", {1, 0, 1}}};
    auto inst = win_rate(a, b, InstructionalFilter{&votes, true});
    EXPECT_EQ(inst.n_videos, 2);
    EXPECT_DOUBLE_EQ(inst.rate, 0.75);
    auto non = win_rate(a, b, InstructionalFilter{&votes, false});
    EXPECT_EQ(non.n_videos, 1);
    EXPECT_EQ(non.rate, 0.0);
}

TEST(WinRate, DifferentVideoSets) {
    std::vector<VideoGrounding> a = {{"a", 3, 0.9}, {"b", 3, 0.5}};
    std::vector<VideoGrounding> b = {{"a", 3, 0.8}, {"q", 3, 0.7}};
    try {
        win_rate(a, b);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::set_mismatch);
        EXPECT_NE(std::string(e.what()).find("q"), std::string::npos);
    }
}

TEST(Reports, CsvRoundTrip) {
    GroundingReport r;
    r.videos = {{"a", 3, 0.125}, {"b", 1, std::nullopt}};
    r.segments = {{"a", 0, 1.5, 4, 0.1, 0.75}, {"a", 1, 7.25, 2, 0.4, 0.3333333333333333}};
    auto v = parse_grounding_csv(grounding_csv(r));
    ASSERT_EQ(v.size(), 2u);
    EXPECT_EQ(*v[0].intra_auc, 0.125);
    EXPECT_FALSE(v[1].intra_auc);
    auto s = parse_segments_csv(segments_csv(r));
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s[1].segment, 1);
    EXPECT_EQ(s[1].segment_auc, 0.3333333333333333);
    EXPECT_EQ(s[1].token_count, 2);
}

TEST(Reports, EvaluateGroundingShapes) {
    auto corpus = oracle::random_corpus(4, 5, 20, 3, 10, 1);
    corpus.videos[1].segments.resize(1);
    ModelConfig cfg;
    cfg.vocab_size = corpus.vocab.size();
    cfg.d_word = 4;
    cfg.feature_dim = 3;
    cfg.d_joint = 3;
    auto model = JointEmbeddingModel<float>::initialize(cfg, 2);
    auto one = evaluate_grounding(model, corpus, 1);
    auto four = evaluate_grounding(model, corpus, 4);
    EXPECT_EQ(one.skipped, 1);
    EXPECT_EQ(one.segments.size(), 15u);
    EXPECT_EQ(grounding_csv(one), grounding_csv(four));
    EXPECT_EQ(segments_csv(one), segments_csv(four));
    for (const auto& s : one.segments) {
        EXPECT_GT(s.relative_position, 0.0);
        EXPECT_LT(s.relative_position, 1.0);
    }
}
