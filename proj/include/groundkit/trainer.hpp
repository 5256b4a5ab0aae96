#ifndef GROUNDKIT_TRAINER_HPP
#define GROUNDKIT_TRAINER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "groundkit/corpus.hpp"
#include "groundkit/error.hpp"
#include "groundkit/model.hpp"
#include "groundkit/util.hpp"

namespace groundkit {

struct TrainConfig {
    double margin = 0.1;
    double learning_rate = 0.001;
    std::int64_t total_steps = 300000;
    int negatives_per_positive = 32;  // half intra-video, half inter-video
    int batch_positives = 128;
    std::int64_t checkpoint_every = 10000;
    std::uint64_t seed = 0;
    unsigned workers = 1;

    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;

    int d_word = 300;
    int d_joint = 256;
    std::vector<int> text_hidden;
    std::vector<int> visual_hidden;
    std::filesystem::path word_vectors;  // optional text vectors loaded over the random word table

    void validate() const {
        if (!(margin > 0)) throw Error(ErrorCode::config, "margin must be positive");
        if (!(learning_rate > 0)) throw Error(ErrorCode::config, "learning_rate must be positive");
        if (total_steps < 0) throw Error(ErrorCode::config, "total_steps must be non-negative");
        if (negatives_per_positive < 2 || negatives_per_positive % 2 != 0)
            throw Error(ErrorCode::config, "negatives_per_positive must be even and at least 2");
        if (batch_positives < 1) throw Error(ErrorCode::config, "batch_positives must be positive");
        if (checkpoint_every < 1) throw Error(ErrorCode::config, "checkpoint_every must be positive");
    }
};

struct SegmentRef {
    int video = 0;
    int segment = 0;

    auto operator<=>(const SegmentRef&) const = default;
};

struct Batch {
    std::vector<SegmentRef> positives;
    std::vector<std::vector<SegmentRef>> intra_negatives;
    std::vector<std::vector<SegmentRef>> inter_negatives;
};

inline ModelConfig model_config_for(const Corpus& corpus, const TrainConfig& cfg) {
    ModelConfig m;
    m.vocab_size = corpus.vocab.size();
    m.d_word = cfg.d_word;
    m.feature_dim = corpus.feature_dim;
    m.d_joint = cfg.d_joint;
    m.text_hidden = cfg.text_hidden;
    m.visual_hidden = cfg.visual_hidden;
    m.window_len_s = corpus.config.window_len_s;
    m.vocab_hash = corpus.vocab.hash();
    return m;
}

/*
 * Positives come from videos with at least two segments; each positive gets
 * negatives_per_positive / 2 other segments of its own video and the same
 * number from other videos.
 */
inline Batch sample_batch(const Corpus& corpus, const TrainConfig& cfg, std::mt19937_64& rng) {
    const auto n_videos = static_cast<int>(corpus.videos.size());
    if (n_videos < 2) throw Error(ErrorCode::sampling, "inter-video negatives need at least two videos");
    std::vector<int> eligible;
    for (int v = 0; v < n_videos; ++v)
        if (corpus.videos[static_cast<std::size_t>(v)].segments.size() >= 2) eligible.push_back(v);
    if (eligible.empty()) throw Error(ErrorCode::sampling, "no video has two or more segments");

    auto n_segments = [&](int v) { return static_cast<int>(corpus.videos[static_cast<std::size_t>(v)].segments.size()); };
    auto pick = [&](int hi) { return std::uniform_int_distribution<int>(0, hi - 1)(rng); };

    const int half = cfg.negatives_per_positive / 2;
    Batch batch;
    for (int p = 0; p < cfg.batch_positives; ++p) {
        int v = eligible[static_cast<std::size_t>(pick(static_cast<int>(eligible.size())))];
        int s = pick(n_segments(v));
        batch.positives.push_back({v, s});
        auto& intra = batch.intra_negatives.emplace_back();
        for (int k = 0; k < half; ++k) {
            int other = pick(n_segments(v) - 1);
            if (other >= s) ++other;
            intra.push_back({v, other});
        }
        auto& inter = batch.inter_negatives.emplace_back();
        for (int k = 0; k < half; ++k) {
            int u = pick(n_videos - 1);
            if (u >= v) ++u;
            inter.push_back({u, pick(n_segments(u))});
        }
    }
    return batch;
}

// Sum over negatives of max(0, margin + s_ij - s_ii) + max(0, margin + s_ji - s_ii).
inline double hinge_loss(double s_pos, std::span<const double> s_clip_to_neg_caption,
                         std::span<const double> s_neg_clip_to_caption, double margin) {
    double loss = 0.0;
    for (double s : s_clip_to_neg_caption) loss += std::max(0.0, margin + s - s_pos);
    for (double s : s_neg_clip_to_caption) loss += std::max(0.0, margin + s - s_pos);
    return loss;
}

template <typename Scalar>
struct LossGradients {
    double loss = 0.0;
    std::vector<Scalar> grads;
    // Discrete branch taken by the forward pass: hinge activity flags, then
    // pooling winners. The loss is smooth wherever this stays constant.
    std::vector<int> branch_signature;
};

inline constexpr std::size_t kReductionBlock = 16;

template <typename Scalar>
LossGradients<Scalar> loss_and_gradients(const JointEmbeddingModel<Scalar>& model, const Corpus& corpus,
                                         const Batch& batch, double margin, unsigned workers = 1) {
    using Vector = Vec<Scalar>;
    std::vector<SegmentRef> items;
    for (std::size_t p = 0; p < batch.positives.size(); ++p) {
        items.push_back(batch.positives[p]);
        items.insert(items.end(), batch.intra_negatives[p].begin(), batch.intra_negatives[p].end());
        items.insert(items.end(), batch.inter_negatives[p].begin(), batch.inter_negatives[p].end());
    }
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
    auto index_of = [&](const SegmentRef& r) {
        return static_cast<std::size_t>(std::lower_bound(items.begin(), items.end(), r) - items.begin());
    };

    const std::size_t n = items.size();
    const std::size_t n_blocks = (n + kReductionBlock - 1) / kReductionBlock;
    std::vector<EmbedCache<Scalar>> clip_cache(n), caption_cache(n);
    parallel_for(n_blocks, workers, [&](std::size_t b) {
        for (std::size_t i = b * kReductionBlock; i < std::min(n, (b + 1) * kReductionBlock); ++i) {
            const auto& video = corpus.videos[static_cast<std::size_t>(items[i].video)];
            const auto& seg = video.segments[static_cast<std::size_t>(items[i].segment)];
            model.embed_clip(video.track, seg, &clip_cache[i]);
            model.embed_caption(seg, &caption_cache[i]);
        }
    });

    LossGradients<Scalar> out;
    std::vector<Vector> d_clip(n, Vector::Zero(model.config().d_joint));
    std::vector<Vector> d_caption(n, Vector::Zero(model.config().d_joint));
    const auto delta = static_cast<Scalar>(margin);
    for (std::size_t p = 0; p < batch.positives.size(); ++p) {
        const std::size_t i = index_of(batch.positives[p]);
        const Vector& clip_i = clip_cache[i].embedding;
        const Vector& cap_i = caption_cache[i].embedding;
        const Scalar s_ii = clip_i.dot(cap_i);
        auto visit = [&](const SegmentRef& neg) {
            const std::size_t j = index_of(neg);
            const Vector& clip_j = clip_cache[j].embedding;
            const Vector& cap_j = caption_cache[j].embedding;
            const Scalar a = delta + clip_i.dot(cap_j) - s_ii;
            const Scalar b = delta + clip_j.dot(cap_i) - s_ii;
            out.branch_signature.push_back(a > 0);
            out.branch_signature.push_back(b > 0);
            if (a > 0) {
                out.loss += static_cast<double>(a);
                d_clip[i] += cap_j - cap_i;
                d_caption[j] += clip_i;
                d_caption[i] -= clip_i;
            }
            if (b > 0) {
                out.loss += static_cast<double>(b);
                d_clip[j] += cap_i;
                d_caption[i] += clip_j - clip_i;
                d_clip[i] -= cap_i;
            }
        };
        for (const auto& neg : batch.intra_negatives[p]) visit(neg);
        for (const auto& neg : batch.inter_negatives[p]) visit(neg);
        if (!std::isfinite(out.loss))
            throw Error(ErrorCode::numeric, "non-finite loss at positive " + std::to_string(p) + " (video " +
                                                corpus.videos[static_cast<std::size_t>(batch.positives[p].video)].video_id +
                                                ", segment " + std::to_string(batch.positives[p].segment) + ")");
    }
    for (std::size_t i = 0; i < n; ++i)
        out.branch_signature.insert(out.branch_signature.end(), caption_cache[i].argmax.begin(),
                                    caption_cache[i].argmax.end());

    std::vector<GradSink<Scalar>> sinks(n_blocks);
    parallel_for(n_blocks, workers, [&](std::size_t b) {
        auto& sink = sinks[b];
        sink.towers.assign(model.tower_parameter_count(), Scalar(0));
        for (std::size_t i = b * kReductionBlock; i < std::min(n, (b + 1) * kReductionBlock); ++i) {
            if (!d_clip[i].isZero(0)) model.backward(Tower::visual, clip_cache[i], d_clip[i], sink);
            if (!d_caption[i].isZero(0)) model.backward(Tower::text, caption_cache[i], d_caption[i], sink);
        }
    });
    out.grads.assign(model.parameter_count(), Scalar(0));
    for (const auto& sink : sinks) model.accumulate(sink, out.grads);
    return out;
}

// ---------------------------------------------------------------------------
// Adam

template <typename Scalar>
struct AdamState {
    std::vector<Scalar> m;
    std::vector<Scalar> v;
    std::int64_t step = 0;

    explicit AdamState(std::size_t n = 0) : m(n, Scalar(0)), v(n, Scalar(0)) {}
};

struct AdamHyper {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <typename Scalar>
void adam_step(std::span<Scalar> params, std::span<const Scalar> grads, AdamState<Scalar>& state,
               const AdamHyper& hp) {
    if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
        throw Error(ErrorCode::dimension, "adam state shape does not match parameters");
    ++state.step;
    const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
    const auto b1 = static_cast<Scalar>(hp.beta1);
    const auto b2 = static_cast<Scalar>(hp.beta2);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Scalar g = grads[i];
        state.m[i] = b1 * state.m[i] + (Scalar(1) - b1) * g;
        state.v[i] = b2 * state.v[i] + (Scalar(1) - b2) * g * g;
        const double m_hat = static_cast<double>(state.m[i]) / c1;
        const double v_hat = static_cast<double>(state.v[i]) / c2;
        params[i] -= static_cast<Scalar>(hp.learning_rate * m_hat / (std::sqrt(v_hat) + hp.epsilon));
    }
}

// ---------------------------------------------------------------------------
// Training loop

struct LossPoint {
    std::int64_t step = 0;
    double loss = 0.0;
};

struct TrainResult {
    std::vector<std::filesystem::path> checkpoints;
    std::vector<LossPoint> loss_curve;
};

inline std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::int64_t step) {
    std::ostringstream name;
    name << "ckpt_" << std::setw(8) << std::setfill('0') << step << ".gck";
    return dir / name.str();
}

inline std::string loss_curve_csv(const std::vector<LossPoint>& curve) {
    std::string out = "step,loss\n";
    for (const auto& p : curve) out += std::to_string(p.step) + ',' + format_double(p.loss) + '\n';
    return out;
}

/*
 * Trains from a seeded initialization. Step k samples batch k, records its
 * loss and applies one Adam update. Checkpoints land every checkpoint_every
 * steps and at termination; a non-finite loss aborts with earlier
 * checkpoints left in place.
 */
template <typename Scalar = float>
TrainResult train(const Corpus& corpus, const TrainConfig& cfg, const std::filesystem::path& out_dir,
                  JointEmbeddingModel<Scalar>* final_model = nullptr) {
    cfg.validate();
    auto model = JointEmbeddingModel<Scalar>::initialize(model_config_for(corpus, cfg), cfg.seed);
    if (!cfg.word_vectors.empty()) import_word_vectors(model, corpus.vocab, read_file(cfg.word_vectors));
    AdamState<Scalar> adam(model.parameter_count());
    const AdamHyper hp{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_epsilon};
    std::mt19937_64 rng(derive_seed(cfg.seed, "batches"));

    TrainResult result;
    auto write_checkpoint = [&](std::int64_t step) {
        model.config().step = step;
        auto path = checkpoint_path(out_dir, step);
        save_checkpoint(model, path);
        result.checkpoints.push_back(path);
    };
    auto write_curve = [&] { atomic_write(out_dir / "loss.csv", loss_curve_csv(result.loss_curve)); };

    if (cfg.total_steps == 0) write_checkpoint(0);
    for (std::int64_t step = 1; step <= cfg.total_steps; ++step) {
        auto batch = sample_batch(corpus, cfg, rng);
        LossGradients<Scalar> lg;
        try {
            lg = loss_and_gradients(model, corpus, batch, cfg.margin, cfg.workers);
        } catch (const Error& e) {
            write_curve();
            throw Error(ErrorCode::numeric, "training aborted at step " + std::to_string(step) + ": " + e.what());
        }
        result.loss_curve.push_back({step, lg.loss});
        adam_step<Scalar>(model.parameters(), lg.grads, adam, hp);
        if (step % cfg.checkpoint_every == 0 || step == cfg.total_steps) write_checkpoint(step);
    }
    write_curve();
    if (final_model) *final_model = std::move(model);
    return result;
}

} // namespace groundkit

#endif
