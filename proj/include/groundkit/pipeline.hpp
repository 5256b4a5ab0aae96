#ifndef GROUNDKIT_PIPELINE_HPP
#define GROUNDKIT_PIPELINE_HPP

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "groundkit/analysis.hpp"
#include "groundkit/config.hpp"
#include "groundkit/corpus.hpp"
#include "groundkit/localization.hpp"
#include "groundkit/metrics.hpp"
#include "groundkit/model.hpp"
#include "groundkit/synth.hpp"
#include "groundkit/trainer.hpp"

namespace groundkit {

namespace fs = std::filesystem;

inline bool is_heldout(const std::string& video_id, std::uint64_t seed, double fraction) {
    if (fraction <= 0) return false;
    return static_cast<double>(splitmix64(fnv1a(video_id) ^ seed) % 1000000) < fraction * 1e6;
}

inline Corpus select_videos(const Corpus& corpus, const std::function<bool(const VideoRecord&)>& keep) {
    Corpus out;
    out.vocab = corpus.vocab;
    out.verticals = corpus.verticals;
    out.config = corpus.config;
    out.feature_dim = corpus.feature_dim;
    out.dropped = corpus.dropped;
    for (const auto& v : corpus.videos)
        if (keep(v)) out.videos.push_back(v);
    return out;
}

inline Corpus training_split(const Corpus& corpus, const RunConfig& rc) {
    return select_videos(corpus, [&](const VideoRecord& v) { return !is_heldout(v.video_id, rc.corpus.seed, rc.holdout_fraction); });
}

inline Corpus evaluation_split(const Corpus& corpus, const RunConfig& rc) {
    if (rc.holdout_fraction <= 0) return corpus;
    return select_videos(corpus, [&](const VideoRecord& v) { return is_heldout(v.video_id, rc.corpus.seed, rc.holdout_fraction); });
}

/*
 * Re-samples every video's segments under a different sampling config while
 * keeping the vocabulary fixed. Videos left without segments are dropped.
 */
inline Corpus resample_corpus(const Corpus& corpus, const CorpusConfig& cfg) {
    Corpus out = select_videos(corpus, [](const VideoRecord&) { return true; });
    out.config = cfg;
    std::vector<SampleResult> sampled(out.videos.size());
    parallel_for(out.videos.size(), cfg.workers, [&](std::size_t i) {
        sampled[i] = sample_for_config(out.videos[i].track, out.videos[i].asr, cfg);
        assign_token_ids(sampled[i].segments, out.vocab);
    });
    std::vector<VideoRecord> kept;
    for (std::size_t i = 0; i < out.videos.size(); ++i) {
        if (sampled[i].segments.empty()) {
            out.dropped.push_back({out.videos[i].video_id, to_string(sampled[i].status)});
            continue;
        }
        out.videos[i].segments = std::move(sampled[i].segments);
        kept.push_back(std::move(out.videos[i]));
    }
    out.videos = std::move(kept);
    return out;
}

inline CategoryLabels labels_of(const Corpus& corpus) {
    CategoryLabels labels;
    for (const auto& v : corpus.videos)
        if (!v.categories.empty()) labels[v.video_id] = v.categories;
    return labels;
}

// ---------------------------------------------------------------------------
// ingest

inline nlohmann::json manifest_json(const Corpus& corpus, const RunConfig& rc) {
    nlohmann::json videos = nlohmann::json::array();
    for (const auto& v : corpus.videos)
        videos.push_back({{"video_id", v.video_id},
                          {"duration_s", v.track.duration_s()},
                          {"n_segments", v.segments.size()},
                          {"categories", v.categories},
                          {"heldout", is_heldout(v.video_id, rc.corpus.seed, rc.holdout_fraction)}});
    nlohmann::json dropped = nlohmann::json::array();
    for (const auto& d : corpus.dropped) dropped.push_back({{"video_id", d.video_id}, {"reason", d.reason}});
    return {
        {"corpus", rc.corpus_dir.string()},
        {"window_len_s", rc.corpus.window_len_s},
        {"n_candidates", rc.corpus.n_candidates},
        {"min_count", rc.corpus.min_count},
        {"nonoverlapping", rc.corpus.nonoverlapping},
        {"max_segments", rc.corpus.max_segments},
        {"seed", rc.corpus.seed},
        {"holdout_fraction", rc.holdout_fraction},
        {"feature_dim", corpus.feature_dim},
        {"n_videos", corpus.videos.size()},
        {"n_dropped", corpus.dropped.size()},
        {"vocab", {{"size", corpus.vocab.size()}, {"hash", hex64(corpus.vocab.hash())}, {"oov_count", corpus.vocab.count(0)}}},
        {"videos", videos},
        {"dropped", dropped},
    };
}

inline Corpus cmd_ingest(const RunConfig& rc) {
    auto corpus = load_corpus(rc.corpus_dir, rc.corpus);
    atomic_write(rc.out_dir / "manifest.json", manifest_json(corpus, rc).dump(2) + "\n");
    atomic_write(rc.out_dir / "vocab.tsv", corpus.vocab.to_tsv());
    return corpus;
}

/*
 * Restores the corpus settings recorded by ingest into rc and reloads the
 * corpus, failing if the files changed since. The sampling seed comes from
 * the manifest; rc.seed keeps driving training.
 */
inline Corpus load_manifest(const fs::path& manifest_path, RunConfig& rc) {
    if (!fs::exists(manifest_path))
        throw Error(ErrorCode::io, "manifest not found: " + manifest_path.string() + " (run ingest first)");
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(read_file(manifest_path));
        rc.corpus_dir = m.at("corpus").get<std::string>();
        rc.corpus.window_len_s = m.at("window_len_s");
        rc.corpus.n_candidates = m.at("n_candidates");
        rc.corpus.min_count = m.at("min_count");
        rc.corpus.nonoverlapping = m.at("nonoverlapping");
        rc.corpus.max_segments = m.at("max_segments");
        rc.holdout_fraction = m.at("holdout_fraction");
        rc.propagate();
        rc.corpus.seed = m.at("seed");
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::format, "bad manifest " + manifest_path.string() + ": " + e.what());
    }
    auto corpus = load_corpus(rc.corpus_dir, rc.corpus);
    if (hex64(corpus.vocab.hash()) != m["vocab"]["hash"].get<std::string>() ||
        corpus.videos.size() != m["n_videos"].get<std::size_t>())
        throw Error(ErrorCode::data, "corpus " + rc.corpus_dir.string() + " changed since ingest; rerun ingest");
    return corpus;
}

// ---------------------------------------------------------------------------
// synth / train

inline void cmd_synth(const SyntheticSpec& spec, const fs::path& out_dir, unsigned workers) {
    write_synthetic_corpus(spec, out_dir, workers);
}

inline TrainResult cmd_train(const Corpus& corpus, const RunConfig& rc) {
    rc.train.validate();
    return train<float>(training_split(corpus, rc), rc.train, rc.out_dir);
}

// ---------------------------------------------------------------------------
// eval-auc

struct AucRun {
    GroundingReport report;
    std::vector<CategoryReport> categories;
    int sampling_failed = 0;
};

inline AucRun cmd_eval_auc(const Corpus& corpus, const RunConfig& rc, const fs::path& checkpoint) {
    auto model = load_checkpoint<float>(checkpoint, corpus.vocab.hash());
    Corpus eval = evaluation_split(corpus, rc);
    AucRun run;
    if (rc.eval_nonoverlapping) {
        auto cfg = rc.corpus;
        cfg.nonoverlapping = true;
        const auto before = eval.dropped.size();
        eval = resample_corpus(eval, cfg);
        run.sampling_failed = static_cast<int>(eval.dropped.size() - before);
    }
    run.report = evaluate_grounding(model, eval, rc.workers, rc.orientation);
    run.categories = aggregate_by_category(run.report.videos, labels_of(eval), eval.verticals, rc.min_videos);

    nlohmann::json summary = {{"n_videos", run.report.videos.size()},
                              {"skipped", run.report.skipped},
                              {"sampling_failed", run.sampling_failed},
                              {"checkpoint_step", model.config().step}};
    if (run.report.skipped < static_cast<int>(run.report.videos.size()))
        summary["mean_intra_auc"] = run.report.mean_intra_auc();
    atomic_write(rc.out_dir / "grounding.csv", grounding_csv(run.report));
    atomic_write(rc.out_dir / "segments.csv", segments_csv(run.report));
    atomic_write(rc.out_dir / "categories.csv", categories_csv(run.categories));
    atomic_write(rc.out_dir / "summary.json", summary.dump(2) + "\n");
    return run;
}

// ---------------------------------------------------------------------------
// eval-crosstask

inline RecallReport cmd_eval_crosstask(const Corpus& corpus, const RunConfig& rc, const fs::path& checkpoint) {
    auto model = load_checkpoint<float>(checkpoint, corpus.vocab.hash());
    for (const char* f : {"tasks.tsv", "annotations.tsv"})
        if (!fs::exists(rc.corpus_dir / f))
            throw Error(ErrorCode::io, "missing " + (rc.corpus_dir / f).string());
    auto tasks = parse_tasks(read_file(rc.corpus_dir / "tasks.tsv"));
    auto annotations = parse_annotations(read_file(rc.corpus_dir / "annotations.tsv"));
    assign_step_ids(tasks, corpus.vocab);
    std::map<std::string, FeatureTrack> tracks;
    for (const auto& a : annotations)
        if (!tracks.contains(a.video_id)) tracks[a.video_id] = load_feature_track(rc.corpus_dir / (a.video_id + ".gft"));
    auto report = evaluate_crosstask(model, tasks, annotations, tracks, rc.corpus.window_len_s, rc.workers);
    atomic_write(rc.out_dir / "recall.csv", recall_csv(report));
    return report;
}

// ---------------------------------------------------------------------------
// analyze

struct CategoryAnalysis {
    std::string category;
    OlsFit restricted;
    OlsFit full;
    FTest ftest;
    std::vector<std::string> notices;
};

inline std::string file_safe(std::string s) {
    for (auto& c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
    return s;
}

/*
 * Segment tokens are recovered from each video's ASR with the same window
 * rule used at sampling time.
 */
inline std::map<std::string, std::vector<SegmentObservation>> observations_by_category(
    const Corpus& corpus, const std::vector<SegmentGrounding>& segments) {
    std::map<std::string, const VideoRecord*> by_id;
    for (const auto& v : corpus.videos) by_id[v.video_id] = &v;
    std::map<std::string, std::vector<SegmentObservation>> out;
    for (const auto& s : segments) {
        auto it = by_id.find(s.video_id);
        if (it == by_id.end()) throw Error(ErrorCode::data, "segments.csv names unknown video " + s.video_id);
        SegmentObservation o{s.segment_auc, s.relative_position, s.token_count, {}};
        for (const auto& t : tokens_in_window(it->second->asr, s.start_s, corpus.config.window_len_s))
            o.tokens.push_back(t.text);
        for (const auto& c : it->second->categories) out[c].push_back(o);
    }
    return out;
}

inline std::vector<CategoryAnalysis> cmd_analyze(const Corpus& corpus, const RunConfig& rc,
                                                 const fs::path& segments_csv_path) {
    auto segments = parse_segments_csv(read_file(segments_csv_path));
    auto groups = observations_by_category(corpus, segments);
    std::vector<CategoryAnalysis> out;
    nlohmann::json skipped = nlohmann::json::array();
    for (auto& [cat, obs] : groups) {
        if (obs.size() < control_columns().size() + 2) {
            skipped.push_back({{"category", cat}, {"rows", obs.size()}});
            continue;
        }
        CategoryAnalysis a;
        a.category = cat;
        auto design = build_design(obs, rc.top_k_unigrams, rc.min_df);
        a.notices = design.notices;
        std::size_t n_controls = 0;
        for (const auto& c : design.columns)
            if (std::find(control_columns().begin(), control_columns().end(), c) != control_columns().end()) ++n_controls;
        a.restricted = ols_fit(design.leading(static_cast<Eigen::Index>(n_controls)));
        a.full = ols_fit(design);
        for (const auto& n : a.full.notices) a.notices.push_back(n);
        a.ftest = f_test_nested(a.restricted, a.full);
        atomic_write(rc.out_dir / ("analysis_" + file_safe(cat) + ".csv"),
                     coefficients_csv(a.full, static_cast<std::size_t>(rc.top_n)));
        atomic_write(rc.out_dir / ("ftest_" + file_safe(cat) + ".json"), ftest_json(a.ftest));
        out.push_back(std::move(a));
    }
    if (!skipped.empty()) atomic_write(rc.out_dir / "analysis_skipped.json", skipped.dump(2) + "\n");
    return out;
}

// ---------------------------------------------------------------------------
// compare

inline WinRate cmd_compare(const fs::path& a_csv, const fs::path& b_csv, const fs::path& out_dir,
                           const std::optional<fs::path>& votes_path, std::optional<bool> instructional) {
    auto a = parse_grounding_csv(read_file(a_csv));
    auto b = parse_grounding_csv(read_file(b_csv));
    InstructionalVotes votes;
    std::optional<InstructionalFilter> filter;
    if (instructional) {
        if (!votes_path) throw Error(ErrorCode::config, "instructional filter needs an i3.tsv path");
        votes = parse_votes(read_file(*votes_path));
        filter = InstructionalFilter{&votes, *instructional};
    }
    auto wr = win_rate(a, b, filter);
    nlohmann::json j = {{"a", a_csv.string()},
                        {"b", b_csv.string()},
                        {"filter", instructional ? (*instructional ? "instructional" : "non-instructional") : "none"},
                        {"n_videos", wr.n_videos},
                        {"win_rate", wr.rate}};
    atomic_write(out_dir / "compare.json", j.dump(2) + "\n");
    return wr;
}

} // namespace groundkit

#endif
