#include <gtest/gtest.h>

#include <random>

#include "groundkit/localization.hpp"
#include "oracles.hpp"

using namespace groundkit;

namespace {

ScoreGrid grid_of(std::initializer_list<std::initializer_list<double>> rows) {
    ScoreGrid g;
    g.scores.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
    Eigen::Index r = 0;
    for (auto row : rows) {
        Eigen::Index c = 0;
        for (double v : row) g.scores(r, c++) = v;
        ++r;
    }
    return g;
}

std::vector<int> times_of(const std::vector<StepTime>& a) {
    std::vector<int> t;
    for (auto s : a) t.push_back(s.time);
    return t;
}

}  // namespace

TEST(Grid, ColumnCount) {
    EXPECT_EQ(grid_columns(10, 5.0), 6);
    EXPECT_EQ(grid_columns(5, 5.0), 1);
    EXPECT_EQ(grid_columns(3, 5.0), 1);
    EXPECT_THROW(grid_columns(0, 5.0), Error);
}

TEST(Grid, ScoresMatchDirectEmbedding) {
    auto corpus = oracle::random_corpus(1, 1, 10, 3, 8, 1);
    ModelConfig cfg;
    cfg.vocab_size = 8;
    cfg.d_word = 4;
    cfg.feature_dim = 3;
    cfg.d_joint = 3;
    auto model = JointEmbeddingModel<double>::initialize(cfg, 5);
    std::vector<std::vector<int>> steps = {{1, 2}, {3}};
    auto grid = score_grid(model, corpus.videos[0].track, steps, 5.0);
    ASSERT_EQ(grid.positions(), 6);
    auto clip = model.embed_visual(corpus.videos[0].track.features.middleRows(4, 5));
    EXPECT_EQ(grid.scores(1, 4), clip.dot(model.embed_text(steps[1])));
}

TEST(DpAlign, SimpleOptimum) {
    auto g = grid_of({{1, 0, 0}, {0, 0, 1}});
    EXPECT_EQ(times_of(dp_align(g)), (std::vector<int>{0, 2}));
}

TEST(DpAlign, MonotonicityForcesTradeoff) {
    // Both steps prefer t = 1; only one can have it.
    auto g = grid_of({{0, 5, 0}, {0, 6, 1}});
    EXPECT_EQ(times_of(dp_align(g)), (std::vector<int>{0, 1}));
}

TEST(DpAlign, TiesResolveToEarliest) {
    auto g = grid_of({{1, 1, 1, 1}, {1, 1, 1, 1}});
    EXPECT_EQ(times_of(dp_align(g)), (std::vector<int>{0, 1}));
}

TEST(DpAlign, SquareGridIsDiagonal) {
    auto g = grid_of({{0, 9, 9}, {9, 0, 9}, {9, 9, 0}});
    EXPECT_EQ(times_of(dp_align(g)), (std::vector<int>{0, 1, 2}));
}

TEST(DpAlign, MoreStepsThanColumns) {
    auto g = grid_of({{1, 2}, {3, 4}, {5, 6}});
    try {
        dp_align(g);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::infeasible_alignment);
    }
}

TEST(DpAlign, MatchesExhaustiveSearch) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 300; ++trial) {
        int K = 1 + static_cast<int>(rng() % 5);
        int T = K + static_cast<int>(rng() % 5);
        ScoreGrid g;
        g.scores.resize(K, T);
        for (int k = 0; k < K; ++k)
            for (int t = 0; t < T; ++t) g.scores(k, t) = static_cast<double>(rng() % 4);  // many ties
        auto got = dp_align(g);
        auto want = oracle::brute_align(g.scores);
        EXPECT_EQ(times_of(got), want.times);
    }
}

TEST(Recall, StrictCeilingRule) {
    EXPECT_TRUE(is_hit(3, 2.4, 4.2));
    EXPECT_FALSE(is_hit(5, 2.4, 4.2));
    for (const auto& c : oracle::recall_fixture()) EXPECT_EQ(is_hit(c.t, c.start_s, c.end_s), c.hit) << c.t;
}

TEST(Recall, MissingPredictionWarns) {
    std::vector<StepAnnotation> truth = {{"t", "v", 0, 2.4, 4.2}, {"t", "v", 1, 6, 8}};
    std::vector<StepTime> preds = {{0, 3}};
    std::vector<std::string> warnings;
    auto r = recall(preds, truth, &warnings);
    EXPECT_EQ(r.hits, 1);
    EXPECT_EQ(r.annotated, 2);
    EXPECT_EQ(r.recall(), 0.5);
    EXPECT_EQ(warnings.size(), 1u);
}

TEST(Recall, MacroAverage) {
    RecallReport r;
    r.tasks = {{"a", 1, 2, }, {"b", 3, 3}};
    EXPECT_DOUBLE_EQ(r.macro_average(), 0.75);
    EXPECT_NE(recall_csv(r).find("average,0.75"), std::string::npos);
}

TEST(Files, ParseTasksAndAnnotations) {
    auto tasks = parse_tasks("t1\t1\tWhisk eggs\nt1\t0\tCrack eggs\nt2\t0\tboil\n");
    ASSERT_EQ(tasks.size(), 2u);
    EXPECT_EQ(tasks[0].texts, (std::vector<std::string>{"Crack eggs", "Whisk eggs"}));
    EXPECT_THROW(parse_tasks("t1\t1\tonly one\n"), Error);
    auto ann = parse_annotations("t1\tv9\t0\t2.5\t4.0\n");
    ASSERT_EQ(ann.size(), 1u);
    EXPECT_EQ(ann[0].video_id, "v9");
    EXPECT_EQ(ann[0].end_s, 4.0);
    EXPECT_THROW(parse_annotations("t1\tv9\t0\t5\t4\n"), Error);
}

TEST(Crosstask, ShortVideoWarnsAndCountsMisses) {
    ModelConfig cfg;
    cfg.vocab_size = 4;
    cfg.d_word = 3;
    cfg.feature_dim = 2;
    cfg.d_joint = 2;
    auto model = JointEmbeddingModel<double>::initialize(cfg, 1);
    std::vector<TaskSteps> tasks = {{"t", {"a", "b", "c"}, {{1}, {2}, {3}}}};
    std::map<std::string, FeatureTrack> tracks;
    tracks["short"] = {"short", FeatureMatrix::Random(6, 2)};  // 2 positions, 3 steps
    std::vector<StepAnnotation> ann = {{"t", "short", 0, 0, 2}, {"t", "short", 1, 2, 4}};
    auto rep = evaluate_crosstask(model, tasks, ann, tracks, 5.0);
    ASSERT_EQ(rep.tasks.size(), 1u);
    EXPECT_EQ(rep.tasks[0].hits, 0);
    EXPECT_EQ(rep.tasks[0].annotated, 2);
    EXPECT_FALSE(rep.warnings.empty());
}
