#ifndef GROUNDKIT_CORPUS_HPP
#define GROUNDKIT_CORPUS_HPP

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "groundkit/error.hpp"
#include "groundkit/util.hpp"

namespace groundkit {

using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/*
 * One feature vector per second of video.
 */
struct FeatureTrack {
    std::string video_id;
    FeatureMatrix features;

    int duration_s() const { return static_cast<int>(features.rows()); }
    int feature_dim() const { return static_cast<int>(features.cols()); }
};

struct AsrToken {
    std::string text;
    std::int64_t start_ms = 0;
    std::int64_t end_ms = 0;

    bool operator==(const AsrToken&) const = default;
};

struct Segment {
    std::string video_id;
    double start_s = 0.0;
    double window_len_s = 0.0;
    std::vector<AsrToken> tokens;
    std::vector<int> token_ids;

    double end_s() const { return start_s + window_len_s; }
};

enum class SamplingStatus { ok, too_short, no_asr, sampling_failed };

struct SampleResult {
    std::vector<Segment> segments;
    SamplingStatus status = SamplingStatus::ok;
};

struct SegmentConfig {
    double window_len_s = 5.0;
    int n_candidates = 256;
    std::uint64_t seed = 0;
};

struct NonOverlapConfig {
    double window_len_s = 5.0;
    int max_segments = 10;
    std::uint64_t seed = 0;
    int max_attempts = 0;  // 0 means 50 * max_segments

    int attempts() const { return max_attempts > 0 ? max_attempts : 50 * max_segments; }
};

// ---------------------------------------------------------------------------
// GFT1 feature files: "GFT1" | u32 rows | u32 dim | rows*dim f32, row-major.

inline constexpr char kFeatureMagic[4] = {'G', 'F', 'T', '1'};

inline std::string encode_feature_track(const FeatureTrack& track) {
    std::string buf(kFeatureMagic, 4);
    put_pod<std::uint32_t>(buf, static_cast<std::uint32_t>(track.features.rows()));
    put_pod<std::uint32_t>(buf, static_cast<std::uint32_t>(track.features.cols()));
    buf.append(reinterpret_cast<const char*>(track.features.data()),
               static_cast<std::size_t>(track.features.size()) * sizeof(float));
    return buf;
}

inline FeatureTrack decode_feature_track(std::string_view bytes, std::string video_id) {
    if (bytes.size() < 12 || !std::equal(kFeatureMagic, kFeatureMagic + 4, bytes.begin()))
        throw Error(ErrorCode::format, "missing GFT1 magic for " + video_id);
    std::size_t pos = 4;
    auto rows = get_pod<std::uint32_t>(bytes, pos);
    auto dim = get_pod<std::uint32_t>(bytes, pos);
    std::uint64_t expected = std::uint64_t{rows} * dim * sizeof(float);
    if (bytes.size() - pos != expected)
        throw Error(ErrorCode::length_mismatch,
                    video_id + ": header declares " + std::to_string(rows) + "x" + std::to_string(dim) +
                        " floats (" + std::to_string(expected) + " bytes), payload has " +
                        std::to_string(bytes.size() - pos));
    FeatureTrack track{std::move(video_id), FeatureMatrix(rows, dim)};
    std::memcpy(track.features.data(), bytes.data() + pos, expected);
    if (!track.features.allFinite())
        throw Error(ErrorCode::data, track.video_id + ": non-finite feature value");
    return track;
}

inline std::string video_id_from_path(const std::filesystem::path& path) {
    auto name = path.filename().string();
    auto dot = name.find('.');
    return dot == std::string::npos ? name : name.substr(0, dot);
}

inline FeatureTrack load_feature_track(const std::filesystem::path& path) {
    return decode_feature_track(read_file(path), video_id_from_path(path));
}

inline void write_feature_track(const std::filesystem::path& path, const FeatureTrack& track) {
    atomic_write(path, encode_feature_track(track));
}

// ---------------------------------------------------------------------------
// ASR: start_ms<TAB>end_ms<TAB>token

// Lowercase, split on whitespace, strip surrounding punctuation.
inline std::vector<std::string> normalize_tokens(std::string_view text) {
    std::vector<std::string> out;
    for (auto& w : split_whitespace(text)) {
        auto t = strip_punct(to_lower(w));
        if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
}

inline std::int64_t parse_int(std::string_view field, std::size_t line_no, std::string_view what) {
    auto f = trim(field);
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (f.empty() || ec != std::errc() || ptr != f.data() + f.size())
        throw Error(ErrorCode::parse, "line " + std::to_string(line_no) + ": bad " + std::string(what) +
                                          " '" + std::string(field) + "'");
    return v;
}

inline std::vector<AsrToken> parse_asr(std::string_view text) {
    std::vector<AsrToken> tokens;
    std::size_t line_no = 0;
    for (auto& raw : split(text, '\n')) {
        ++line_no;
        std::string_view line = raw;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (trim(line).empty()) continue;
        auto fields = split(line, '\t');
        if (fields.size() < 3)
            throw Error(ErrorCode::parse, "line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
        auto start = parse_int(fields[0], line_no, "start_ms");
        auto end = parse_int(fields[1], line_no, "end_ms");
        if (start > end)
            throw Error(ErrorCode::parse, "line " + std::to_string(line_no) + ": start_ms > end_ms");
        for (auto& word : normalize_tokens(fields[2])) tokens.push_back({std::move(word), start, end});
    }
    std::stable_sort(tokens.begin(), tokens.end(),
                     [](const AsrToken& a, const AsrToken& b) { return a.start_ms < b.start_ms; });
    return tokens;
}

inline std::vector<AsrToken> load_asr(const std::filesystem::path& path) {
    return parse_asr(read_file(path));
}

inline std::string encode_asr(const std::vector<AsrToken>& tokens) {
    std::string out;
    for (const auto& t : tokens)
        out += std::to_string(t.start_ms) + '\t' + std::to_string(t.end_ms) + '\t' + t.text + '\n';
    return out;
}

// ---------------------------------------------------------------------------
// Segment sampling

// Midpoint containment on the half-open window [start, start + len).
inline bool token_in_window(const AsrToken& tok, double start_s, double len_s) {
    double twice_mid_ms = static_cast<double>(tok.start_ms + tok.end_ms);
    return twice_mid_ms >= 2000.0 * start_s && twice_mid_ms < 2000.0 * (start_s + len_s);
}

inline std::vector<AsrToken> tokens_in_window(const std::vector<AsrToken>& asr, double start_s, double len_s) {
    std::vector<AsrToken> out;
    for (const auto& t : asr)
        if (token_in_window(t, start_s, len_s)) out.push_back(t);
    return out;
}

inline SampleResult sample_segments(const FeatureTrack& track, const std::vector<AsrToken>& asr,
                                    const SegmentConfig& cfg) {
    SampleResult result;
    const double w = cfg.window_len_s;
    const double duration = track.duration_s();
    if (duration < w) {
        result.status = SamplingStatus::too_short;
        return result;
    }
    std::mt19937_64 rng(derive_seed(cfg.seed, track.video_id));
    std::uniform_real_distribution<double> start_dist(0.0, duration - w);
    for (int i = 0; i < cfg.n_candidates; ++i) {
        double start = start_dist(rng);
        auto toks = tokens_in_window(asr, start, w);
        if (toks.empty()) continue;
        result.segments.push_back({track.video_id, start, w, std::move(toks), {}});
    }
    if (result.segments.empty()) result.status = SamplingStatus::no_asr;
    return result;
}

inline SampleResult sample_nonoverlapping(const FeatureTrack& track, const std::vector<AsrToken>& asr,
                                          const NonOverlapConfig& cfg) {
    SampleResult result;
    const double w = cfg.window_len_s;
    const double duration = track.duration_s();
    if (duration < w) {
        result.status = SamplingStatus::too_short;
        return result;
    }
    std::mt19937_64 rng(derive_seed(cfg.seed ^ 0x6e6f6e6f7665726cULL, track.video_id));
    std::uniform_real_distribution<double> start_dist(0.0, duration - w);
    for (int attempt = 0; attempt < cfg.attempts() && static_cast<int>(result.segments.size()) < cfg.max_segments;
         ++attempt) {
        double start = start_dist(rng);
        bool disjoint = std::all_of(result.segments.begin(), result.segments.end(),
                                    [&](const Segment& s) { return std::abs(s.start_s - start) >= w; });
        if (!disjoint) continue;
        auto toks = tokens_in_window(asr, start, w);
        if (toks.empty()) continue;
        result.segments.push_back({track.video_id, start, w, std::move(toks), {}});
    }
    if (result.segments.empty()) result.status = SamplingStatus::sampling_failed;
    return result;
}

// Feature rows covered by a segment: seconds [floor(start), floor(start) + ceil(len)).
inline auto segment_rows(const FeatureTrack& track, const Segment& seg) {
    int first = static_cast<int>(std::floor(seg.start_s));
    int count = static_cast<int>(std::ceil(seg.window_len_s - 1e-9));
    first = std::clamp(first, 0, std::max(0, track.duration_s() - 1));
    count = std::clamp(count, 1, track.duration_s() - first);
    return track.features.middleRows(first, count);
}

// ---------------------------------------------------------------------------
// Vocabulary

inline constexpr std::string_view kUnknownToken = "<unk>";

/*
 * Index 0 is the out-of-vocabulary slot. Remaining entries are ordered by
 * descending count, ties broken lexicographically.
 */
class Vocabulary {
public:
    Vocabulary() : tokens_{std::string(kUnknownToken)}, counts_{0} { index_.emplace(tokens_[0], 0); }

    static Vocabulary from_counts(const std::map<std::string, std::int64_t>& counts, std::int64_t min_count) {
        std::vector<std::pair<std::string, std::int64_t>> kept;
        std::int64_t oov = 0;
        for (const auto& [tok, n] : counts) {
            if (n >= min_count)
                kept.emplace_back(tok, n);
            else
                oov += n;
        }
        std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
            return a.second != b.second ? a.second > b.second : a.first < b.first;
        });
        Vocabulary v;
        v.counts_[0] = oov;
        for (auto& [tok, n] : kept) {
            v.index_.emplace(tok, static_cast<int>(v.tokens_.size()));
            v.tokens_.push_back(tok);
            v.counts_.push_back(n);
        }
        return v;
    }

    int id(std::string_view token) const {
        auto it = index_.find(std::string(token));
        return it == index_.end() ? 0 : it->second;
    }
    const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    std::int64_t count(int id) const { return counts_.at(static_cast<std::size_t>(id)); }
    int size() const { return static_cast<int>(tokens_.size()); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    std::uint64_t hash() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (const auto& t : tokens_) h = fnv1a(t + '\n', h);
        return h;
    }

    std::string to_tsv() const {
        std::string out;
        for (std::size_t i = 0; i < tokens_.size(); ++i)
            out += std::to_string(i) + '\t' + tokens_[i] + '\t' + std::to_string(counts_[i]) + '\n';
        return out;
    }

private:
    std::vector<std::string> tokens_;
    std::vector<std::int64_t> counts_;
    std::unordered_map<std::string, int> index_;
};

inline Vocabulary build_vocabulary(const std::vector<std::vector<AsrToken>>& streams, std::int64_t min_count) {
    if (streams.empty()) throw Error(ErrorCode::empty_input, "vocabulary over empty corpus");
    std::map<std::string, std::int64_t> counts;
    for (const auto& stream : streams)
        for (const auto& tok : stream) ++counts[tok.text];
    return Vocabulary::from_counts(counts, min_count);
}

inline void assign_token_ids(std::vector<Segment>& segments, const Vocabulary& vocab) {
    for (auto& seg : segments) {
        seg.token_ids.clear();
        for (const auto& t : seg.tokens) seg.token_ids.push_back(vocab.id(t.text));
    }
}

// ---------------------------------------------------------------------------
// Label files

using CategoryLabels = std::map<std::string, std::vector<std::string>>;  // video -> categories
using VerticalMap = std::map<std::string, std::string>;                  // category -> vertical
using InstructionalVotes = std::map<std::string, std::array<int, 3>>;    // video -> 3 votes

inline CategoryLabels parse_labels(std::string_view text) {
    CategoryLabels labels;
    std::size_t line_no = 0;
    for (auto& raw : split(text, '\n')) {
        ++line_no;
        auto line = trim(raw);
        if (line.empty()) continue;
        auto fields = split(line, '\t');
        if (fields.size() != 2)
            throw Error(ErrorCode::parse, "labels line " + std::to_string(line_no) + ": expected video_id<TAB>categories");
        auto& cats = labels[std::string(trim(fields[0]))];
        for (auto& c : split(fields[1], ',')) {
            auto t = trim(c);
            if (!t.empty()) cats.emplace_back(t);
        }
    }
    return labels;
}

inline VerticalMap parse_verticals(std::string_view text) {
    VerticalMap map;
    std::size_t line_no = 0;
    for (auto& raw : split(text, '\n')) {
        ++line_no;
        auto line = trim(raw);
        if (line.empty()) continue;
        auto fields = split(line, '\t');
        if (fields.size() != 2)
            throw Error(ErrorCode::parse, "verticals line " + std::to_string(line_no) + ": expected 2 fields");
        map[std::string(trim(fields[0]))] = std::string(trim(fields[1]));
    }
    return map;
}

inline InstructionalVotes parse_votes(std::string_view text) {
    InstructionalVotes votes;
    std::size_t line_no = 0;
    for (auto& raw : split(text, '\n')) {
        ++line_no;
        auto line = trim(raw);
        if (line.empty()) continue;
        auto fields = split(line, '\t');
        if (fields.size() != 4)
            throw Error(ErrorCode::parse, "i3 line " + std::to_string(line_no) + ": expected video_id and 3 votes");
        std::array<int, 3> v{};
        for (int i = 0; i < 3; ++i) {
            auto x = parse_int(fields[static_cast<std::size_t>(i) + 1], line_no, "vote");
            if (x != 0 && x != 1)
                throw Error(ErrorCode::parse, "i3 line " + std::to_string(line_no) + ": votes must be 0 or 1");
            v[static_cast<std::size_t>(i)] = static_cast<int>(x);
        }
        votes[std::string(trim(fields[0]))] = v;
    }
    return votes;
}

// ---------------------------------------------------------------------------
// Whole-corpus ingestion

struct VideoRecord {
    std::string video_id;
    FeatureTrack track;
    std::vector<AsrToken> asr;
    std::vector<Segment> segments;
    std::vector<std::string> categories;
    std::optional<std::string> meta_category;
    std::optional<std::array<int, 3>> instructional_votes;
};

struct CorpusConfig {
    double window_len_s = 5.0;
    int n_candidates = 256;
    std::int64_t min_count = 5;
    std::uint64_t seed = 0;
    bool nonoverlapping = false;
    int max_segments = 10;
    unsigned workers = 1;
};

struct DroppedVideo {
    std::string video_id;
    std::string reason;
};

struct Corpus {
    std::vector<VideoRecord> videos;
    std::vector<DroppedVideo> dropped;
    Vocabulary vocab;
    VerticalMap verticals;
    CorpusConfig config;
    int feature_dim = 0;

    const VideoRecord* find(std::string_view id) const {
        for (const auto& v : videos)
            if (v.video_id == id) return &v;
        return nullptr;
    }
};

inline const char* to_string(SamplingStatus s) {
    switch (s) {
        case SamplingStatus::ok: return "ok";
        case SamplingStatus::too_short: return "shorter than window";
        case SamplingStatus::no_asr: return "no temporally-accompanying ASR";
        case SamplingStatus::sampling_failed: return "non-overlapping sampling failed";
    }
    return "?";
}

inline SampleResult sample_for_config(const FeatureTrack& track, const std::vector<AsrToken>& asr,
                                      const CorpusConfig& cfg) {
    if (cfg.nonoverlapping)
        return sample_nonoverlapping(track, asr, {cfg.window_len_s, cfg.max_segments, cfg.seed, 0});
    return sample_segments(track, asr, {cfg.window_len_s, cfg.n_candidates, cfg.seed});
}

/*
 * Loads every <id>.gft in dir with its <id>.asr.tsv, samples segments, drops
 * videos left without ASR-bearing segments and builds the vocabulary.
 */
inline Corpus load_corpus(const std::filesystem::path& dir, const CorpusConfig& cfg) {
    namespace fs = std::filesystem;
    if (!(cfg.window_len_s > 0)) throw Error(ErrorCode::config, "window_len_s must be positive");
    if (!fs::is_directory(dir)) throw Error(ErrorCode::io, "corpus directory not found: " + dir.string());

    std::vector<fs::path> feature_files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".gft") feature_files.push_back(entry.path());
    std::sort(feature_files.begin(), feature_files.end());
    if (feature_files.empty()) throw Error(ErrorCode::empty_input, "no .gft files in " + dir.string());

    std::vector<VideoRecord> loaded(feature_files.size());
    std::vector<SamplingStatus> status(feature_files.size());
    parallel_for(feature_files.size(), cfg.workers, [&](std::size_t i) {
        auto& rec = loaded[i];
        rec.track = load_feature_track(feature_files[i]);
        rec.video_id = rec.track.video_id;
        auto asr_path = dir / (rec.video_id + ".asr.tsv");
        if (fs::exists(asr_path)) rec.asr = load_asr(asr_path);
        auto sampled = sample_for_config(rec.track, rec.asr, cfg);
        rec.segments = std::move(sampled.segments);
        status[i] = rec.asr.empty() ? SamplingStatus::no_asr : sampled.status;
    });

    Corpus corpus;
    corpus.config = cfg;
    CategoryLabels labels;
    InstructionalVotes votes;
    if (fs::exists(dir / "labels.tsv")) labels = parse_labels(read_file(dir / "labels.tsv"));
    if (fs::exists(dir / "verticals.tsv")) corpus.verticals = parse_verticals(read_file(dir / "verticals.tsv"));
    if (fs::exists(dir / "i3.tsv")) votes = parse_votes(read_file(dir / "i3.tsv"));

    for (std::size_t i = 0; i < loaded.size(); ++i) {
        auto& rec = loaded[i];
        if (corpus.feature_dim == 0) corpus.feature_dim = rec.track.feature_dim();
        if (rec.track.feature_dim() != corpus.feature_dim)
            throw Error(ErrorCode::data, rec.video_id + ": feature_dim " + std::to_string(rec.track.feature_dim()) +
                                             " differs from corpus value " + std::to_string(corpus.feature_dim));
        if (rec.segments.empty()) {
            corpus.dropped.push_back({rec.video_id, to_string(status[i])});
            continue;
        }
        if (auto it = labels.find(rec.video_id); it != labels.end()) rec.categories = it->second;
        if (!rec.categories.empty())
            if (auto v = corpus.verticals.find(rec.categories.front()); v != corpus.verticals.end())
                rec.meta_category = v->second;
        if (auto it = votes.find(rec.video_id); it != votes.end()) rec.instructional_votes = it->second;
        corpus.videos.push_back(std::move(rec));
    }
    if (corpus.videos.empty()) throw Error(ErrorCode::empty_input, "no video in " + dir.string() + " has usable ASR");

    std::vector<std::vector<AsrToken>> streams;
    streams.reserve(corpus.videos.size());
    for (const auto& v : corpus.videos) streams.push_back(v.asr);
    corpus.vocab = build_vocabulary(streams, cfg.min_count);
    for (auto& v : corpus.videos) assign_token_ids(v.segments, corpus.vocab);
    return corpus;
}

} // namespace groundkit

#endif
