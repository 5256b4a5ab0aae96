#ifndef GROUNDKIT_CONFIG_HPP
#define GROUNDKIT_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "groundkit/corpus.hpp"
#include "groundkit/error.hpp"
#include "groundkit/metrics.hpp"
#include "groundkit/trainer.hpp"
#include "groundkit/util.hpp"

namespace groundkit {

/*
 * Flat TOML subset: `key = value` lines, `#` comments, quoted strings,
 * numbers, booleans and `[a, b]` integer lists. Section headers are accepted
 * and ignored, so keys must be unique across sections.
 */
inline std::map<std::string, std::string> parse_config(std::string_view text) {
    std::map<std::string, std::string> out;
    std::size_t line_no = 0;
    for (auto& raw : split(text, '\n')) {
        ++line_no;
        std::string line = raw;
        bool in_string = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') in_string = !in_string;
            if (line[i] == '#' && !in_string) {
                line.resize(i);
                break;
            }
        }
        auto t = trim(line);
        if (t.empty() || t.front() == '[') continue;
        auto eq = t.find('=');
        if (eq == std::string_view::npos)
            throw Error(ErrorCode::config, "config line " + std::to_string(line_no) + ": expected key = value");
        std::string key(trim(t.substr(0, eq)));
        std::string value(trim(t.substr(eq + 1)));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        out[key] = value;
    }
    return out;
}

struct RunConfig {
    std::filesystem::path corpus_dir;
    std::filesystem::path out_dir = "out";
    std::uint64_t seed = 0;
    unsigned workers = default_workers();
    double holdout_fraction = 0.0;

    CorpusConfig corpus;
    TrainConfig train;

    int min_videos = 1;
    SegmentOrientation orientation = SegmentOrientation::caption_fixed;
    bool eval_nonoverlapping = false;
    int top_k_unigrams = 500;
    int min_df = 10;
    int top_n = 50;

    // Pushes the run-wide seed and worker count into the module configs.
    void propagate() {
        corpus.seed = seed;
        corpus.workers = workers;
        train.seed = seed;
        train.workers = workers;
        if (!(corpus.window_len_s > 0)) throw Error(ErrorCode::config, "window_len_s must be positive");
        if (holdout_fraction < 0 || holdout_fraction >= 1)
            throw Error(ErrorCode::config, "holdout_fraction must be in [0, 1)");
    }
};

inline std::vector<int> parse_int_list(const std::string& value) {
    std::string v(trim(value));
    if (!v.empty() && v.front() == '[') v = v.substr(1);
    if (!v.empty() && v.back() == ']') v.pop_back();
    std::vector<int> out;
    for (auto& f : split(v, ','))
        if (!trim(f).empty()) out.push_back(static_cast<int>(parse_int(f, 0, "list entry")));
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw Error(ErrorCode::config, key + ": expected true or false, got " + value);
}

inline void apply_setting(RunConfig& rc, const std::string& key, const std::string& value) {
    auto num = [&] {
        try {
            return std::stod(value);
        } catch (const std::exception&) {
            throw Error(ErrorCode::config, key + ": expected a number, got '" + value + "'");
        }
    };
    auto integer = [&] { return parse_int(value, 0, key); };
    if (key == "corpus") rc.corpus_dir = value;
    else if (key == "out") rc.out_dir = value;
    else if (key == "seed") rc.seed = static_cast<std::uint64_t>(integer());
    else if (key == "workers") rc.workers = static_cast<unsigned>(integer());
    else if (key == "holdout_fraction") rc.holdout_fraction = num();
    else if (key == "window_len_s") rc.corpus.window_len_s = num();
    else if (key == "n_candidates") rc.corpus.n_candidates = static_cast<int>(integer());
    else if (key == "min_count") rc.corpus.min_count = integer();
    else if (key == "nonoverlapping") rc.corpus.nonoverlapping = parse_bool(key, value);
    else if (key == "max_segments") rc.corpus.max_segments = static_cast<int>(integer());
    else if (key == "margin") rc.train.margin = num();
    else if (key == "learning_rate") rc.train.learning_rate = num();
    else if (key == "total_steps") rc.train.total_steps = integer();
    else if (key == "negatives_per_positive") rc.train.negatives_per_positive = static_cast<int>(integer());
    else if (key == "batch_positives") rc.train.batch_positives = static_cast<int>(integer());
    else if (key == "checkpoint_every") rc.train.checkpoint_every = integer();
    else if (key == "beta1") rc.train.beta1 = num();
    else if (key == "beta2") rc.train.beta2 = num();
    else if (key == "adam_epsilon") rc.train.adam_epsilon = num();
    else if (key == "d_word") rc.train.d_word = static_cast<int>(integer());
    else if (key == "d_joint") rc.train.d_joint = static_cast<int>(integer());
    else if (key == "text_hidden") rc.train.text_hidden = parse_int_list(value);
    else if (key == "word_vectors") rc.train.word_vectors = value;
    else if (key == "visual_hidden") rc.train.visual_hidden = parse_int_list(value);
    else if (key == "min_videos") rc.min_videos = static_cast<int>(integer());
    else if (key == "segment_orientation") {
        if (value == "caption") rc.orientation = SegmentOrientation::caption_fixed;
        else if (value == "clip") rc.orientation = SegmentOrientation::clip_fixed;
        else throw Error(ErrorCode::config, "segment_orientation must be caption or clip");
    }
    else if (key == "eval_nonoverlapping") rc.eval_nonoverlapping = parse_bool(key, value);
    else if (key == "top_k_unigrams") rc.top_k_unigrams = static_cast<int>(integer());
    else if (key == "min_df") rc.min_df = static_cast<int>(integer());
    else if (key == "top_n") rc.top_n = static_cast<int>(integer());
    else throw Error(ErrorCode::config, "unknown config key '" + key + "'");
}

inline void apply_config(RunConfig& rc, const std::map<std::string, std::string>& settings) {
    for (const auto& [k, v] : settings) apply_setting(rc, k, v);
}

inline void load_config_file(RunConfig& rc, const std::filesystem::path& path) {
    apply_config(rc, parse_config(read_file(path)));
}

} // namespace groundkit

#endif
