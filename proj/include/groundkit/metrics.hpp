#ifndef GROUNDKIT_METRICS_HPP
#define GROUNDKIT_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "groundkit/corpus.hpp"
#include "groundkit/error.hpp"
#include "groundkit/model.hpp"
#include "groundkit/util.hpp"

namespace groundkit {

/*
 * Average ranks (1-based) with ties sharing the mean of their positions.
 */
inline std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

/*
 * Fraction of (positive, negative) pairs ranked correctly, ties worth 0.5.
 * Computed from the Mann-Whitney rank sum; the half-integer sums are exact in
 * double, so the value matches pairwise counting bit for bit.
 */
inline double auc(std::span<const double> pos, std::span<const double> neg) {
    if (pos.empty() || neg.empty()) throw Error(ErrorCode::undefined_metric, "AUC needs positives and negatives");
    std::vector<double> all(pos.begin(), pos.end());
    all.insert(all.end(), neg.begin(), neg.end());
    auto ranks = average_ranks(all);
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < pos.size(); ++i) rank_sum += ranks[i];
    const auto p = static_cast<double>(pos.size());
    const double u = rank_sum - p * (p + 1.0) / 2.0;
    return u / (p * static_cast<double>(neg.size()));
}

template <typename Derived>
std::optional<double> intra_video_auc(const Eigen::MatrixBase<Derived>& sims) {
    const auto n = sims.rows();
    if (n < 2 || sims.cols() != n) return std::nullopt;
    std::vector<double> pos, neg;
    pos.reserve(static_cast<std::size_t>(n));
    neg.reserve(static_cast<std::size_t>(n * (n - 1)));
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            (i == j ? pos : neg).push_back(static_cast<double>(sims(i, j)));
    return auc(pos, neg);
}

enum class SegmentOrientation {
    caption_fixed,  // caption j ranked against every clip of its video
    clip_fixed,     // clip j ranked against every caption of its video
};

template <typename Derived>
std::optional<double> segment_auc(const Eigen::MatrixBase<Derived>& sims, Eigen::Index j,
                                  SegmentOrientation orientation = SegmentOrientation::caption_fixed) {
    const auto n = sims.rows();
    if (n < 2 || sims.cols() != n) return std::nullopt;
    if (j < 0 || j >= n) throw Error(ErrorCode::dimension, "segment index out of range");
    std::vector<double> neg;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (i == j) continue;
        neg.push_back(static_cast<double>(orientation == SegmentOrientation::caption_fixed ? sims(i, j) : sims(j, i)));
    }
    const double pos = static_cast<double>(sims(j, j));
    return auc(std::span<const double>(&pos, 1), neg);
}

// ---------------------------------------------------------------------------
// Reports

struct VideoGrounding {
    std::string video_id;
    int n_segments = 0;
    std::optional<double> intra_auc;
};

struct SegmentGrounding {
    std::string video_id;
    int segment = 0;
    double start_s = 0.0;
    int token_count = 0;
    double relative_position = 0.0;  // segment midpoint / duration
    double segment_auc = 0.0;
};

struct GroundingReport {
    std::vector<VideoGrounding> videos;
    std::vector<SegmentGrounding> segments;
    int skipped = 0;  // videos with fewer than two segments

    double mean_intra_auc() const {
        double sum = 0.0;
        int n = 0;
        for (const auto& v : videos)
            if (v.intra_auc) {
                sum += *v.intra_auc;
                ++n;
            }
        if (n == 0) throw Error(ErrorCode::undefined_metric, "no video has an intra-video AUC");
        return sum / n;
    }
};

template <typename Scalar>
GroundingReport evaluate_grounding(const JointEmbeddingModel<Scalar>& model, const Corpus& corpus,
                                   unsigned workers = 1,
                                   SegmentOrientation orientation = SegmentOrientation::caption_fixed) {
    const std::size_t n = corpus.videos.size();
    std::vector<VideoGrounding> per_video(n);
    std::vector<std::vector<SegmentGrounding>> per_segment(n);
    parallel_for(n, workers, [&](std::size_t v) {
        const auto& video = corpus.videos[v];
        auto& vr = per_video[v];
        vr.video_id = video.video_id;
        vr.n_segments = static_cast<int>(video.segments.size());
        if (vr.n_segments < 2) return;
        auto sims = similarity_matrix(model, video.track, video.segments);
        vr.intra_auc = intra_video_auc(sims);
        const double duration = video.track.duration_s();
        for (int j = 0; j < vr.n_segments; ++j) {
            const auto& seg = video.segments[static_cast<std::size_t>(j)];
            per_segment[v].push_back({video.video_id, j, seg.start_s, static_cast<int>(seg.tokens.size()),
                                      (seg.start_s + 0.5 * seg.window_len_s) / duration,
                                      *segment_auc(sims, j, orientation)});
        }
    });
    GroundingReport report;
    for (std::size_t v = 0; v < n; ++v) {
        if (!per_video[v].intra_auc) ++report.skipped;
        report.videos.push_back(std::move(per_video[v]));
        for (auto& s : per_segment[v]) report.segments.push_back(std::move(s));
    }
    return report;
}

struct CategoryReport {
    std::string category_id;
    double mean_auc = 0.0;
    int n_videos = 0;
    std::string vertical_id;
};

/*
 * Unweighted mean of intra-video AUC per category. A video with several
 * categories counts toward each of them.
 */
inline std::vector<CategoryReport> aggregate_by_category(const std::vector<VideoGrounding>& videos,
                                                         const CategoryLabels& labels, const VerticalMap& verticals,
                                                         int min_videos = 1) {
    std::map<std::string, std::pair<double, int>> acc;
    for (const auto& v : videos) {
        if (!v.intra_auc) continue;
        auto it = labels.find(v.video_id);
        if (it == labels.end()) continue;
        std::set<std::string> seen;
        for (const auto& c : it->second) {
            if (!seen.insert(c).second) continue;
            acc[c].first += *v.intra_auc;
            acc[c].second += 1;
        }
    }
    std::vector<CategoryReport> out;
    for (const auto& [cat, sum_n] : acc) {
        if (sum_n.second < min_videos) continue;
        auto vert = verticals.find(cat);
        out.push_back({cat, sum_n.first / sum_n.second, sum_n.second, vert == verticals.end() ? "" : vert->second});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Correlation

enum class CorrelationKind { pearson, spearman };

struct Correlation {
    double coefficient = 0.0;
    double p_value = 1.0;
};

inline double pearson_coefficient(std::span<const double> x, std::span<const double> y) {
    const auto n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0 || syy <= 0) throw Error(ErrorCode::undefined_correlation, "zero variance input");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double correlation_coefficient(std::span<const double> x, std::span<const double> y, CorrelationKind kind) {
    if (kind == CorrelationKind::pearson) return pearson_coefficient(x, y);
    auto rx = average_ranks(x);
    auto ry = average_ranks(y);
    return pearson_coefficient(rx, ry);
}

// Two-sided p-value from t = r sqrt((n-2)/(1-r^2)) with n-2 degrees of freedom.
inline double correlation_p_value(double r, std::size_t n) {
    const double df = static_cast<double>(n) - 2.0;
    if (std::abs(r) >= 1.0) return 0.0;
    const double t = r * std::sqrt(df / (1.0 - r * r));
    boost::math::students_t dist(df);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

inline Correlation correlations(std::span<const double> x, std::span<const double> y, CorrelationKind kind) {
    if (x.size() != y.size()) throw Error(ErrorCode::dimension, "correlation inputs differ in length");
    if (x.size() < 3) throw Error(ErrorCode::undefined_correlation, "correlation needs at least 3 points");
    double r = correlation_coefficient(x, y, kind);
    return {r, correlation_p_value(r, x.size())};
}

// Two-sided permutation p-value, (1 + #{|r_perm| >= |r|}) / (1 + n_permutations).
inline double permutation_p_value(std::span<const double> x, std::span<const double> y, CorrelationKind kind,
                                  int n_permutations, std::uint64_t seed) {
    const double r = std::abs(correlation_coefficient(x, y, kind));
    std::vector<double> shuffled(y.begin(), y.end());
    std::mt19937_64 rng(splitmix64(seed));
    int extreme = 0;
    for (int k = 0; k < n_permutations; ++k) {
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        if (std::abs(correlation_coefficient(x, shuffled, kind)) >= r - 1e-15) ++extreme;
    }
    return (1.0 + extreme) / (1.0 + n_permutations);
}

// ---------------------------------------------------------------------------
// Model comparison

/*
 * Keeps videos whose annotator majority (at least 2 of 3 votes) equals
 * `instructional`.
 */
struct InstructionalFilter {
    const InstructionalVotes* votes = nullptr;
    bool instructional = true;

    bool keep(const std::string& video_id) const {
        auto it = votes->find(video_id);
        if (it == votes->end()) return false;
        int yes = it->second[0] + it->second[1] + it->second[2];
        return (yes >= 2) == instructional;
    }
};

struct WinRate {
    double rate = 0.0;
    int n_videos = 0;
};

inline WinRate win_rate(const std::vector<VideoGrounding>& a, const std::vector<VideoGrounding>& b,
                        std::optional<InstructionalFilter> filter = std::nullopt) {
    auto index = [](const std::vector<VideoGrounding>& r) {
        std::map<std::string, double> m;
        for (const auto& v : r)
            if (v.intra_auc) m[v.video_id] = *v.intra_auc;
        return m;
    };
    auto ma = index(a);
    auto mb = index(b);
    std::vector<std::string> offenders;
    for (const auto& [id, _] : ma)
        if (!mb.contains(id)) offenders.push_back(id + " (only in A)");
    for (const auto& [id, _] : mb)
        if (!ma.contains(id)) offenders.push_back(id + " (only in B)");
    if (!offenders.empty()) {
        std::string msg = "reports cover different videos:";
        for (const auto& o : offenders) msg += " " + o;
        throw Error(ErrorCode::set_mismatch, msg);
    }
    double wins = 0.0;
    int n = 0;
    for (const auto& [id, auc_a] : ma) {
        if (filter && !filter->keep(id)) continue;
        double auc_b = mb.at(id);
        wins += auc_a > auc_b ? 1.0 : (auc_a == auc_b ? 0.5 : 0.0);
        ++n;
    }
    if (n == 0) throw Error(ErrorCode::undefined_metric, "no videos left to compare");
    return {wins / n, n};
}

// ---------------------------------------------------------------------------
// CSV emission and parsing

inline std::string optional_cell(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

inline std::string grounding_csv(const GroundingReport& r) {
    std::string out = "video_id,n_segments,intra_auc\n";
    for (const auto& v : r.videos)
        out += v.video_id + ',' + std::to_string(v.n_segments) + ',' + optional_cell(v.intra_auc) + '\n';
    return out;
}

inline std::string segments_csv(const GroundingReport& r) {
    std::string out = "video_id,start_s,token_count,relative_position,segment_auc\n";
    for (const auto& s : r.segments)
        out += s.video_id + ',' + format_double(s.start_s) + ',' + std::to_string(s.token_count) + ',' +
               format_double(s.relative_position) + ',' + format_double(s.segment_auc) + '\n';
    return out;
}

inline std::string categories_csv(const std::vector<CategoryReport>& cats) {
    std::string out = "category_id,vertical_id,n_videos,mean_auc\n";
    for (const auto& c : cats)
        out += c.category_id + ',' + c.vertical_id + ',' + std::to_string(c.n_videos) + ',' + format_double(c.mean_auc) +
               '\n';
    return out;
}

inline double parse_double(std::string_view field, std::size_t line_no) {
    try {
        std::size_t used = 0;
        std::string f(trim(field));
        double v = std::stod(f, &used);
        if (used != f.size()) throw std::invalid_argument(f);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorCode::parse, "line " + std::to_string(line_no) + ": bad number '" + std::string(field) + "'");
    }
}

inline std::vector<std::vector<std::string>> csv_rows(std::string_view text, std::size_t expected_fields) {
    std::vector<std::vector<std::string>> rows;
    std::size_t line_no = 0;
    for (auto& raw : split(text, '\n')) {
        ++line_no;
        if (line_no == 1 || trim(raw).empty()) continue;
        auto fields = split(trim(raw), ',');
        if (fields.size() != expected_fields)
            throw Error(ErrorCode::parse, "line " + std::to_string(line_no) + ": expected " +
                                              std::to_string(expected_fields) + " fields");
        rows.push_back(std::move(fields));
    }
    return rows;
}

inline std::vector<VideoGrounding> parse_grounding_csv(std::string_view text) {
    std::vector<VideoGrounding> out;
    std::size_t line_no = 1;
    for (auto& f : csv_rows(text, 3)) {
        ++line_no;
        VideoGrounding v{f[0], static_cast<int>(parse_int(f[1], line_no, "n_segments")), std::nullopt};
        if (!trim(f[2]).empty()) v.intra_auc = parse_double(f[2], line_no);
        out.push_back(std::move(v));
    }
    return out;
}

inline std::vector<SegmentGrounding> parse_segments_csv(std::string_view text) {
    std::vector<SegmentGrounding> out;
    std::size_t line_no = 1;
    std::map<std::string, int> next_index;
    for (auto& f : csv_rows(text, 5)) {
        ++line_no;
        SegmentGrounding s;
        s.video_id = f[0];
        s.segment = next_index[s.video_id]++;
        s.start_s = parse_double(f[1], line_no);
        s.token_count = static_cast<int>(parse_int(f[2], line_no, "token_count"));
        s.relative_position = parse_double(f[3], line_no);
        s.segment_auc = parse_double(f[4], line_no);
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace groundkit

#endif
