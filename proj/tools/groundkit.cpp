// Command-line driver: synth -> ingest -> train -> eval-auc / eval-crosstask -> analyze -> compare.

#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "groundkit/groundkit.hpp"

namespace gk = groundkit;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::optional<fs::path> config;
    std::map<std::string, std::string> overrides;  // flags win over the config file
};

void add_common(CLI::App* cmd, Common& common) {
    cmd->add_option_function<std::string>("--config", [&](const std::string& p) { common.config = p; },
                                          "TOML-style key = value config file");
    cmd->add_option_function<std::string>("--seed", [&](const std::string& v) { common.overrides["seed"] = v; },
                                          "random seed");
    cmd->add_option_function<std::string>("--out", [&](const std::string& v) { common.overrides["out"] = v; },
                                          "output directory");
    cmd->add_option_function<std::string>("--workers", [&](const std::string& v) { common.overrides["workers"] = v; },
                                          "worker threads (results do not depend on this)");
}

// Exposes a config key as a flag.
void add_key(CLI::App* cmd, Common& common, const std::string& flag, const std::string& key, const std::string& help) {
    cmd->add_option_function<std::string>(flag, [&common, key](const std::string& v) { common.overrides[key] = v; }, help);
}

gk::RunConfig resolve(const Common& common) {
    gk::RunConfig rc;
    if (common.config) gk::load_config_file(rc, *common.config);
    gk::apply_config(rc, common.overrides);
    rc.propagate();
    return rc;
}

void require_file(const fs::path& p, const std::string& what) {
    if (!fs::exists(p)) throw gk::Error(gk::ErrorCode::io, what + " not found at " + p.string());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"groundkit: joint video-text embeddings and groundedness diagnostics"};
    app.require_subcommand(1);

    // synth
    Common synth_common;
    gk::SyntheticSpec spec;
    std::string category_signal;
    auto* synth = app.add_subcommand("synth", "write a synthetic corpus");
    add_common(synth, synth_common);
    synth->add_option("--videos", spec.n_videos);
    synth->add_option("--duration", spec.duration_s, "seconds per video");
    synth->add_option("--vocab", spec.vocab_size);
    synth->add_option("--feature-dim", spec.feature_dim);
    synth->add_option("--signal", spec.signal_strength, "signal strength in [0, 1]");
    synth->add_option("--categories", spec.n_categories);
    synth->add_option("--category-signal", category_signal, "comma-separated per-category multipliers");
    synth->add_option("--verticals", spec.n_verticals);
    synth->add_option("--speech-rate", spec.speech_rate);
    synth->add_flag("--markers", spec.markers, "speak intro/outro marker tokens at both ends");
    synth->add_option("--marker-fraction", spec.marker_fraction);
    synth->add_option("--tasks", spec.n_tasks, "procedural tasks for eval-crosstask");
    synth->add_option("--steps-per-task", spec.steps_per_task);
    synth->add_option("--videos-per-task", spec.videos_per_task);

    // ingest
    Common ingest_common;
    auto* ingest = app.add_subcommand("ingest", "sample segments, build the vocabulary, write manifest.json");
    add_common(ingest, ingest_common);
    add_key(ingest, ingest_common, "--corpus", "corpus", "corpus directory");
    add_key(ingest, ingest_common, "--window", "window_len_s", "segment length in seconds");
    add_key(ingest, ingest_common, "--candidates", "n_candidates", "candidate windows per video");
    add_key(ingest, ingest_common, "--min-count", "min_count", "vocabulary frequency threshold");
    add_key(ingest, ingest_common, "--nonoverlap", "nonoverlapping", "true for disjoint windows");
    add_key(ingest, ingest_common, "--max-segments", "max_segments", "cap for non-overlapping sampling");
    add_key(ingest, ingest_common, "--holdout", "holdout_fraction", "fraction of videos held out for evaluation");

    // train
    Common train_common;
    fs::path train_manifest;
    auto* train = app.add_subcommand("train", "train the joint embedding");
    add_common(train, train_common);
    train->add_option("--manifest", train_manifest)->required();
    add_key(train, train_common, "--steps", "total_steps", "training steps");
    add_key(train, train_common, "--lr", "learning_rate", "Adam learning rate");
    add_key(train, train_common, "--margin", "margin", "hinge margin");
    add_key(train, train_common, "--batch", "batch_positives", "positives per batch");
    add_key(train, train_common, "--negatives", "negatives_per_positive", "negatives per positive (even)");
    add_key(train, train_common, "--checkpoint-every", "checkpoint_every", "steps between checkpoints");
    add_key(train, train_common, "--d-joint", "d_joint", "joint embedding width");
    add_key(train, train_common, "--word-vectors", "word_vectors", "text word vectors to start the word table from");

    // eval-auc
    Common auc_common;
    fs::path auc_manifest, auc_checkpoint;
    auto* eval_auc = app.add_subcommand("eval-auc", "intra-video, segment and category AUC");
    add_common(eval_auc, auc_common);
    eval_auc->add_option("--manifest", auc_manifest)->required();
    eval_auc->add_option("--checkpoint", auc_checkpoint)->required();
    add_key(eval_auc, auc_common, "--min-videos", "min_videos", "minimum videos per reported category");
    add_key(eval_auc, auc_common, "--nonoverlap", "eval_nonoverlapping", "true to resample disjoint test windows");
    add_key(eval_auc, auc_common, "--orientation", "segment_orientation", "caption (default) or clip");

    // eval-crosstask
    Common ct_common;
    fs::path ct_manifest, ct_checkpoint;
    auto* eval_ct = app.add_subcommand("eval-crosstask", "step localization recall");
    add_common(eval_ct, ct_common);
    eval_ct->add_option("--manifest", ct_manifest)->required();
    eval_ct->add_option("--checkpoint", ct_checkpoint)->required();

    // analyze
    Common an_common;
    fs::path an_manifest, an_segments;
    auto* analyze = app.add_subcommand("analyze", "OLS attribution of segment AUC with nested F-test");
    add_common(analyze, an_common);
    analyze->add_option("--manifest", an_manifest)->required();
    analyze->add_option("--segments", an_segments, "segments.csv from eval-auc")->required();
    add_key(analyze, an_common, "--top-k", "top_k_unigrams", "unigram indicator columns");
    add_key(analyze, an_common, "--min-df", "min_df", "minimum unigram document frequency");
    add_key(analyze, an_common, "--top-n", "top_n", "unigram rows in the coefficient table");

    // compare
    Common cmp_common;
    fs::path cmp_a, cmp_b;
    std::optional<fs::path> cmp_votes;
    std::string cmp_filter = "all";
    auto* compare = app.add_subcommand("compare", "win rate of model A over model B");
    add_common(compare, cmp_common);
    compare->add_option("--a", cmp_a, "grounding.csv of model A")->required();
    compare->add_option("--b", cmp_b, "grounding.csv of model B")->required();
    compare->add_option("--i3", cmp_votes, "instructional votes file");
    compare->add_option("--filter", cmp_filter, "all, instructional or non-instructional")
        ->check(CLI::IsMember({"all", "instructional", "non-instructional"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            auto rc = resolve(synth_common);
            spec.seed = rc.seed;
            if (!category_signal.empty()) {
                spec.category_signal.clear();
                for (auto& f : gk::split(category_signal, ',')) spec.category_signal.push_back(std::stod(f));
            }
            spec.validate();
            gk::cmd_synth(spec, rc.out_dir, rc.workers);
            std::cout << "wrote " << spec.n_videos << " videos to " << rc.out_dir << "\n";
        } else if (ingest->parsed()) {
            auto rc = resolve(ingest_common);
            if (rc.corpus_dir.empty()) throw gk::Error(gk::ErrorCode::config, "--corpus is required");
            auto corpus = gk::cmd_ingest(rc);
            std::cout << "ingested " << corpus.videos.size() << " videos, dropped " << corpus.dropped.size()
                      << ", vocabulary " << corpus.vocab.size() << " -> " << (rc.out_dir / "manifest.json") << "\n";
        } else if (train->parsed()) {
            auto rc = resolve(train_common);
            rc.train.validate();
            auto corpus = gk::load_manifest(train_manifest, rc);
            auto result = gk::cmd_train(corpus, rc);
            std::cout << "wrote " << result.checkpoints.size() << " checkpoint(s); last " << result.checkpoints.back()
                      << "\n";
        } else if (eval_auc->parsed()) {
            auto rc = resolve(auc_common);
            require_file(auc_checkpoint, "checkpoint");
            auto corpus = gk::load_manifest(auc_manifest, rc);
            auto run = gk::cmd_eval_auc(corpus, rc, auc_checkpoint);
            std::cout << "videos " << run.report.videos.size() << ", skipped (<2 segments) " << run.report.skipped;
            if (run.report.skipped < static_cast<int>(run.report.videos.size()))
                std::cout << ", mean intra-video AUC " << run.report.mean_intra_auc();
            std::cout << "\n";
        } else if (eval_ct->parsed()) {
            auto rc = resolve(ct_common);
            require_file(ct_checkpoint, "checkpoint");
            auto corpus = gk::load_manifest(ct_manifest, rc);
            auto report = gk::cmd_eval_crosstask(corpus, rc, ct_checkpoint);
            for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
            for (const auto& t : report.tasks) std::cout << t.task_id << " recall " << t.recall() << "\n";
            if (!report.tasks.empty()) std::cout << "average " << report.macro_average() << "\n";
        } else if (analyze->parsed()) {
            auto rc = resolve(an_common);
            require_file(an_segments, "segments.csv");
            auto corpus = gk::load_manifest(an_manifest, rc);
            for (const auto& a : gk::cmd_analyze(corpus, rc, an_segments)) {
                for (const auto& n : a.notices) std::cerr << a.category << ": " << n << "\n";
                std::cout << a.category << ": F=" << a.ftest.f << " df=(" << a.ftest.df1 << ", " << a.ftest.df2
                          << ") p=" << a.ftest.p_value << "\n";
            }
        } else if (compare->parsed()) {
            auto rc = resolve(cmp_common);
            std::optional<bool> instructional;
            if (cmp_filter != "all") instructional = cmp_filter == "instructional";
            auto wr = gk::cmd_compare(cmp_a, cmp_b, rc.out_dir, cmp_votes, instructional);
            std::cout << "A wins on " << wr.rate << " of " << wr.n_videos << " videos\n";
        }
    } catch (const gk::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
