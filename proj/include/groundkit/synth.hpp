#ifndef GROUNDKIT_SYNTH_HPP
#define GROUNDKIT_SYNTH_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "groundkit/corpus.hpp"
#include "groundkit/error.hpp"
#include "groundkit/util.hpp"

namespace groundkit {

/*
 * Synthetic corpus recipe. Each spoken second carries one token; its feature
 * row is s * code(token) + sqrt(1 - s) * noise_sigma * N(0, I), where code()
 * is a sparse 0/1 vector and s = signal_strength * category_signal[c].
 * Silent seconds get the noise term only.
 */
struct SyntheticSpec {
    int n_videos = 200;
    int duration_s = 120;
    int vocab_size = 200;
    int feature_dim = 64;
    double signal_strength = 1.0;
    int n_categories = 8;
    std::vector<double> category_signal;  // per-category multiplier on signal_strength; empty means all 1
    int n_verticals = 2;
    double speech_rate = 0.8;   // probability a second carries a token
    double topic_share = 0.5;   // probability a token comes from its category's slice of the vocabulary
    int code_density = 3;       // active feature dims per token
    double noise_sigma = 1.0;
    bool markers = false;       // intro/outro marker tokens at both ends of every video
    double marker_fraction = 0.1;
    double marker_signal = 1.0;
    int n_tasks = 0;            // procedural tasks for the step-localization fixture
    int steps_per_task = 3;
    int videos_per_task = 5;
    int step_len_s = 4;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_videos < 1 || duration_s < 1 || vocab_size < 1 || feature_dim < 1 || n_categories < 1 || n_verticals < 1)
            throw Error(ErrorCode::config, "synthetic corpus sizes must be positive");
        if (signal_strength < 0 || signal_strength > 1) throw Error(ErrorCode::config, "signal_strength must be in [0, 1]");
        if (!category_signal.empty() && static_cast<int>(category_signal.size()) != n_categories)
            throw Error(ErrorCode::config, "category_signal needs one entry per category");
        for (double c : category_signal)
            if (c < 0 || c > 1) throw Error(ErrorCode::config, "category_signal entries must be in [0, 1]");
        if (code_density < 1 || code_density > feature_dim)
            throw Error(ErrorCode::config, "code_density must be in [1, feature_dim]");
        if (n_tasks > 0 && steps_per_task * (step_len_s + 1) > duration_s)
            throw Error(ErrorCode::config, "task steps do not fit in the video duration");
    }

    double signal_for(int category) const {
        double m = category_signal.empty() ? 1.0 : category_signal[static_cast<std::size_t>(category)];
        return signal_strength * m;
    }
};

inline nlohmann::json to_json(const SyntheticSpec& s) {
    return {{"n_videos", s.n_videos},         {"duration_s", s.duration_s},
            {"vocab_size", s.vocab_size},     {"feature_dim", s.feature_dim},
            {"signal_strength", s.signal_strength}, {"n_categories", s.n_categories},
            {"category_signal", s.category_signal}, {"n_verticals", s.n_verticals},
            {"speech_rate", s.speech_rate},   {"topic_share", s.topic_share},
            {"code_density", s.code_density}, {"noise_sigma", s.noise_sigma},
            {"markers", s.markers},           {"marker_fraction", s.marker_fraction},
            {"marker_signal", s.marker_signal}, {"n_tasks", s.n_tasks},
            {"steps_per_task", s.steps_per_task}, {"videos_per_task", s.videos_per_task},
            {"step_len_s", s.step_len_s},     {"seed", s.seed}};
}

inline std::string synth_word(int i) {
    std::string digits = std::to_string(i);
    return "w" + std::string(digits.size() < 4 ? 4 - digits.size() : 0, '0') + digits;
}

inline std::string synth_video_id(int i) {
    std::string digits = std::to_string(i);
    return "vid" + std::string(digits.size() < 5 ? 5 - digits.size() : 0, '0') + digits;
}

inline std::string marker_word(bool intro, int i) { return (intro ? "intro" : "outro") + std::to_string(i); }
inline std::string step_word(int task, int step, int k) {
    return "task" + std::to_string(task) + "step" + std::to_string(step) + (k == 0 ? "a" : "b");
}

inline constexpr int kMarkerTypes = 4;

/*
 * Every token type the generator can speak, in a fixed order, with its sparse
 * code. The zero-noise feature of a second is exactly its token's code.
 */
struct TokenCodes {
    std::vector<std::string> words;
    std::vector<std::vector<int>> active_dims;

    int index(const std::string& w) const {
        auto it = std::find(words.begin(), words.end(), w);
        return it == words.end() ? -1 : static_cast<int>(it - words.begin());
    }
};

inline TokenCodes token_codes(const SyntheticSpec& spec) {
    TokenCodes codes;
    for (int i = 0; i < spec.vocab_size; ++i) codes.words.push_back(synth_word(i));
    if (spec.markers)
        for (int i = 0; i < kMarkerTypes; ++i) {
            codes.words.push_back(marker_word(true, i));
            codes.words.push_back(marker_word(false, i));
        }
    for (int t = 0; t < spec.n_tasks; ++t)
        for (int s = 0; s < spec.steps_per_task; ++s)
            for (int k = 0; k < 2; ++k) codes.words.push_back(step_word(t, s, k));
    std::mt19937_64 rng(derive_seed(spec.seed, "token-codes"));
    std::vector<int> dims(static_cast<std::size_t>(spec.feature_dim));
    for (std::size_t i = 0; i < codes.words.size(); ++i) {
        std::iota(dims.begin(), dims.end(), 0);
        std::shuffle(dims.begin(), dims.end(), rng);
        std::vector<int> active(dims.begin(), dims.begin() + spec.code_density);
        std::sort(active.begin(), active.end());
        codes.active_dims.push_back(std::move(active));
    }
    return codes;
}

struct SyntheticVideo {
    FeatureTrack track;
    std::vector<AsrToken> asr;
    int category = 0;
    std::array<int, 3> votes{};
    int task = -1;
    std::vector<std::pair<double, double>> step_windows;  // per step, when task >= 0
};

inline int task_of_video(const SyntheticSpec& spec, int v) {
    if (spec.n_tasks <= 0) return -1;
    int t = v / std::max(1, spec.videos_per_task);
    return t < spec.n_tasks ? t : -1;
}

inline SyntheticVideo synth_video(const SyntheticSpec& spec, const TokenCodes& codes, int v) {
    SyntheticVideo out;
    const auto id = synth_video_id(v);
    std::mt19937_64 rng(derive_seed(spec.seed, id));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    out.category = v % spec.n_categories;
    const int D = spec.duration_s;
    const int slice = std::max(1, spec.vocab_size / spec.n_categories);
    const int slice_begin = std::min(out.category * slice, spec.vocab_size - 1);
    const int slice_end = std::min(spec.vocab_size, slice_begin + slice);

    // Per-second token type (index into codes.words) or -1 for silence, and signal level.
    std::vector<int> spoken(static_cast<std::size_t>(D), -1);
    std::vector<double> signal(static_cast<std::size_t>(D), spec.signal_for(out.category));
    for (int s = 0; s < D; ++s) {
        if (unit(rng) >= spec.speech_rate) continue;
        int w = unit(rng) < spec.topic_share
                    ? slice_begin + std::uniform_int_distribution<int>(0, slice_end - slice_begin - 1)(rng)
                    : std::uniform_int_distribution<int>(0, spec.vocab_size - 1)(rng);
        spoken[static_cast<std::size_t>(s)] = w;
    }
    if (spec.markers) {
        const int edge = std::max(1, static_cast<int>(std::lround(spec.marker_fraction * D)));
        for (int s = 0; s < edge && s < D; ++s) {
            int k = std::uniform_int_distribution<int>(0, kMarkerTypes - 1)(rng);
            spoken[static_cast<std::size_t>(s)] = codes.index(marker_word(true, k));
            signal[static_cast<std::size_t>(s)] = spec.marker_signal;
            int e = D - 1 - s;
            k = std::uniform_int_distribution<int>(0, kMarkerTypes - 1)(rng);
            spoken[static_cast<std::size_t>(e)] = codes.index(marker_word(false, k));
            signal[static_cast<std::size_t>(e)] = spec.marker_signal;
        }
    }
    out.task = task_of_video(spec, v);
    if (out.task >= 0) {
        // Ordered, disjoint step windows placed at random inside the video.
        const int L = spec.step_len_s;
        const int K = spec.steps_per_task;
        int slack = D - K * L;
        std::vector<int> gaps(static_cast<std::size_t>(K + 1), 0);
        for (int i = 0; i < slack; ++i) gaps[static_cast<std::size_t>(std::uniform_int_distribution<int>(0, K)(rng))]++;
        int t = gaps[0];
        for (int k = 0; k < K; ++k) {
            for (int s = t; s < t + L; ++s) {
                spoken[static_cast<std::size_t>(s)] = codes.index(step_word(out.task, k, (s - t) % 2));
                signal[static_cast<std::size_t>(s)] = std::max(signal[static_cast<std::size_t>(s)], spec.signal_strength);
            }
            out.step_windows.emplace_back(t, t + L);
            t += L + gaps[static_cast<std::size_t>(k) + 1];
        }
    }

    out.track.video_id = id;
    out.track.features = FeatureMatrix::Zero(D, spec.feature_dim);
    for (int s = 0; s < D; ++s) {
        const double sig = signal[static_cast<std::size_t>(s)];
        const double noise_scale = std::sqrt(std::max(0.0, 1.0 - sig)) * spec.noise_sigma;
        for (int d = 0; d < spec.feature_dim; ++d) out.track.features(s, d) = static_cast<float>(noise_scale * gauss(rng));
        int w = spoken[static_cast<std::size_t>(s)];
        if (w < 0) continue;
        for (int d : codes.active_dims[static_cast<std::size_t>(w)]) out.track.features(s, d) += static_cast<float>(sig);
        out.asr.push_back({codes.words[static_cast<std::size_t>(w)], s * 1000LL + 100, s * 1000LL + 900});
    }

    const bool instructional = out.category % 2 == 0;
    for (auto& vote : out.votes) vote = unit(rng) < 0.95 ? instructional : !instructional;
    return out;
}

/*
 * Writes a complete corpus directory: GFT1 features, ASR, labels, verticals,
 * instructional votes and, when n_tasks > 0, step-localization files.
 */
inline void write_synthetic_corpus(const SyntheticSpec& spec, const std::filesystem::path& dir, unsigned workers = 1) {
    spec.validate();
    std::filesystem::create_directories(dir);
    const auto codes = token_codes(spec);
    std::vector<SyntheticVideo> videos(static_cast<std::size_t>(spec.n_videos));
    parallel_for(videos.size(), workers, [&](std::size_t v) {
        videos[v] = synth_video(spec, codes, static_cast<int>(v));
        write_feature_track(dir / (videos[v].track.video_id + ".gft"), videos[v].track);
        atomic_write(dir / (videos[v].track.video_id + ".asr.tsv"), encode_asr(videos[v].asr));
    });

    std::string labels, verticals, votes, tasks, annotations;
    for (const auto& v : videos) {
        labels += v.track.video_id + "\tcat" + std::to_string(v.category) + '\n';
        votes += v.track.video_id;
        for (int x : v.votes) votes += '\t' + std::to_string(x);
        votes += '\n';
        for (std::size_t k = 0; k < v.step_windows.size(); ++k)
            annotations += "task" + std::to_string(v.task) + '\t' + v.track.video_id + '\t' + std::to_string(k) + '\t' +
                           format_double(v.step_windows[k].first) + '\t' + format_double(v.step_windows[k].second) + '\n';
    }
    for (int c = 0; c < spec.n_categories; ++c)
        verticals += "cat" + std::to_string(c) + "\tvert" + std::to_string(c % spec.n_verticals) + '\n';
    for (int t = 0; t < spec.n_tasks; ++t)
        for (int s = 0; s < spec.steps_per_task; ++s)
            tasks += "task" + std::to_string(t) + '\t' + std::to_string(s) + '\t' + step_word(t, s, 0) + ' ' +
                     step_word(t, s, 1) + '\n';

    atomic_write(dir / "labels.tsv", labels);
    atomic_write(dir / "verticals.tsv", verticals);
    atomic_write(dir / "i3.tsv", votes);
    if (spec.n_tasks > 0) {
        atomic_write(dir / "tasks.tsv", tasks);
        atomic_write(dir / "annotations.tsv", annotations);
    }
    atomic_write(dir / "synth.json", to_json(spec).dump(2) + "\n");
}

} // namespace groundkit

#endif
