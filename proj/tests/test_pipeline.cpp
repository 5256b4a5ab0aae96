#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

#include "groundkit/groundkit.hpp"
#include "oracles.hpp"

using namespace groundkit;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    std::string cmd = std::string(GROUNDKIT_CLI) + " " + args + " > /dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

SyntheticSpec small_spec() {
    SyntheticSpec s;
    s.n_videos = 12;
    s.duration_s = 40;
    s.vocab_size = 30;
    s.feature_dim = 16;
    s.n_categories = 3;
    s.seed = 5;
    return s;
}

}  // namespace

TEST(Config, ParsesFlatToml) {
    auto kv = parse_config("# comment\n[train]\ntotal_steps = 500  # inline\ncorpus = \"a # b\"\ntext_hidden = [4, 8]\n");
    EXPECT_EQ(kv.at("total_steps"), "500");
    EXPECT_EQ(kv.at("corpus"), "a # b");
    RunConfig rc;
    apply_config(rc, kv);
    EXPECT_EQ(rc.train.total_steps, 500);
    EXPECT_EQ(rc.train.text_hidden, (std::vector<int>{4, 8}));
    EXPECT_THROW(parse_config("novalue\n"), Error);
}

TEST(Config, UnknownKeyAndBadValue) {
    RunConfig rc;
    try {
        apply_setting(rc, "totl_steps", "5");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::config);
    }
    EXPECT_THROW(apply_setting(rc, "nonoverlapping", "maybe"), Error);
    rc.holdout_fraction = 1.0;
    EXPECT_THROW(rc.propagate(), Error);
}

TEST(Synthetic, DeterministicBytes) {
    auto a = oracle::scratch_dir("synth_a");
    auto b = oracle::scratch_dir("synth_b");
    write_synthetic_corpus(small_spec(), a, 1);
    write_synthetic_corpus(small_spec(), b, 4);
    for (const auto& e : fs::directory_iterator(a)) EXPECT_EQ(read_file(e.path()), read_file(b / e.path().filename()));
}

TEST(Synthetic, FullSignalFeaturesAreTokenCodes) {
    // With signal 1 the noise vanishes and each spoken second's feature row is
    // exactly its token's code, so a linear map recovers the token.
    auto spec = small_spec();
    spec.signal_strength = 1.0;
    auto codes = token_codes(spec);
    for (int v = 0; v < spec.n_videos; ++v) {
        auto video = synth_video(spec, codes, v);
        for (const auto& tok : video.asr) {
            int s = static_cast<int>(tok.start_ms / 1000);
            Eigen::VectorXf expect = Eigen::VectorXf::Zero(spec.feature_dim);
            for (int d : codes.active_dims[static_cast<std::size_t>(codes.index(tok.text))]) expect[d] = 1.0f;
            EXPECT_EQ((video.track.features.row(s).transpose() - expect).cwiseAbs().maxCoeff(), 0.0f);
        }
    }
}

TEST(Synthetic, MarkersAtBothEnds) {
    auto spec = small_spec();
    spec.markers = true;
    auto codes = token_codes(spec);
    auto video = synth_video(spec, codes, 0);
    EXPECT_EQ(video.asr.front().text.substr(0, 5), "intro");
    EXPECT_EQ(video.asr.back().text.substr(0, 5), "outro");
}

TEST(Split, HoldoutIsStableAndProportional) {
    int held = 0;
    for (int i = 0; i < 2000; ++i) held += is_heldout(synth_video_id(i), 3, 0.2);
    EXPECT_NEAR(held / 2000.0, 0.2, 0.03);
    EXPECT_EQ(is_heldout("vid00042", 3, 0.2), is_heldout("vid00042", 3, 0.2));
    EXPECT_FALSE(is_heldout("vid00042", 3, 0.0));
}

TEST(Cli, EndToEnd) {
    auto root = oracle::scratch_dir("cli");
    auto corpus = root / "corpus";
    ASSERT_EQ(run_cli("synth --out " + corpus.string() +
                      " --videos 24 --duration 40 --vocab 30 --feature-dim 16 --categories 3 --tasks 2 --seed 3"),
              0);
    ASSERT_TRUE(fs::exists(corpus / "tasks.tsv"));
    auto work = root / "work";
    ASSERT_EQ(run_cli("ingest --corpus " + corpus.string() + " --out " + work.string() +
                      " --min-count 1 --candidates 16 --holdout 0.25 --seed 3"),
              0);
    ASSERT_TRUE(fs::exists(work / "manifest.json"));
    ASSERT_TRUE(fs::exists(work / "vocab.tsv"));

    std::ofstream(root / "train.toml") << "[train]\nbatch_positives = 8\nnegatives_per_positive = 4\nd_word = 16\n"
                                          "d_joint = 8\ncheckpoint_every = 10\n";
    ASSERT_EQ(run_cli("train --manifest " + (work / "manifest.json").string() + " --config " +
                      (root / "train.toml").string() + " --steps 20 --out " + (work / "run").string()),
              0);
    auto ckpt = work / "run" / "ckpt_00000020.gck";
    ASSERT_TRUE(fs::exists(ckpt));
    ASSERT_TRUE(fs::exists(work / "run" / "ckpt_00000010.gck"));
    ASSERT_TRUE(fs::exists(work / "run" / "loss.csv"));

    auto eval = work / "eval";
    ASSERT_EQ(run_cli("eval-auc --manifest " + (work / "manifest.json").string() + " --checkpoint " + ckpt.string() +
                      " --out " + eval.string()),
              0);
    for (const char* f : {"grounding.csv", "segments.csv", "categories.csv", "summary.json"})
        EXPECT_TRUE(fs::exists(eval / f)) << f;

    ASSERT_EQ(run_cli("eval-crosstask --manifest " + (work / "manifest.json").string() + " --checkpoint " +
                      ckpt.string() + " --out " + eval.string()),
              0);
    auto recall_text = read_file(eval / "recall.csv");
    EXPECT_NE(recall_text.find("task0,"), std::string::npos);
    EXPECT_NE(recall_text.find("average,"), std::string::npos);

    ASSERT_EQ(run_cli("analyze --manifest " + (work / "manifest.json").string() + " --segments " +
                      (eval / "segments.csv").string() + " --min-df 2 --out " + eval.string()),
              0);
    bool any_ftest = false;
    for (const auto& e : fs::directory_iterator(eval)) any_ftest |= e.path().filename().string().starts_with("ftest_");
    EXPECT_TRUE(any_ftest);

    auto g = (eval / "grounding.csv").string();
    ASSERT_EQ(run_cli("compare --a " + g + " --b " + g + " --out " + eval.string()), 0);
    EXPECT_NE(read_file(eval / "compare.json").find("\"win_rate\": 0.5"), std::string::npos);
    ASSERT_EQ(run_cli("compare --a " + g + " --b " + g + " --filter instructional --i3 " + (corpus / "i3.tsv").string() +
                      " --out " + eval.string()),
              0);
}

TEST(Cli, ErrorsExitNonZero) {
    auto root = oracle::scratch_dir("cli_errors");
    EXPECT_EQ(run_cli("train --manifest " + (root / "missing.json").string()), 2);
    EXPECT_EQ(run_cli("ingest --corpus " + (root / "nowhere").string() + " --out " + root.string()), 2);
    std::ofstream(root / "bad.toml") << "no_such_key = 1\n";
    EXPECT_EQ(run_cli("synth --config " + (root / "bad.toml").string() + " --out " + root.string()), 2);
    EXPECT_NE(run_cli("bogus-command"), 0);
}

TEST(Cli, CheckpointFromOtherCorpusRejected) {
    auto root = oracle::scratch_dir("cli_mismatch");
    ASSERT_EQ(run_cli("synth --out " + (root / "a").string() + " --videos 6 --duration 30 --vocab 20 --seed 1"), 0);
    ASSERT_EQ(run_cli("synth --out " + (root / "b").string() + " --videos 6 --duration 30 --vocab 20 --seed 2"), 0);
    ASSERT_EQ(run_cli("ingest --corpus " + (root / "a").string() + " --out " + (root / "wa").string() +
                      " --min-count 1 --candidates 8"),
              0);
    ASSERT_EQ(run_cli("ingest --corpus " + (root / "b").string() + " --out " + (root / "wb").string() +
                      " --min-count 1 --candidates 8"),
              0);
    ASSERT_EQ(run_cli("train --manifest " + (root / "wa" / "manifest.json").string() +
                      " --steps 2 --batch 2 --negatives 2 --d-joint 4 --out " + (root / "ra").string()),
              0);
    EXPECT_EQ(run_cli("eval-auc --manifest " + (root / "wb" / "manifest.json").string() + " --checkpoint " +
                      (root / "ra" / "ckpt_00000002.gck").string() + " --out " + (root / "eb").string()),
              2);
}
