#ifndef GROUNDKIT_MODEL_HPP
#define GROUNDKIT_MODEL_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "groundkit/corpus.hpp"
#include "groundkit/error.hpp"
#include "groundkit/util.hpp"

namespace groundkit {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kNormEpsilon = 1e-12;

struct ModelConfig {
    int vocab_size = 1;
    int d_word = 300;
    int feature_dim = 1;
    int d_joint = 256;
    std::vector<int> text_hidden;    // intermediate widths; empty means one gated unit
    std::vector<int> visual_hidden;
    double window_len_s = 5.0;
    std::uint64_t vocab_hash = 0;
    std::int64_t step = 0;

    bool operator==(const ModelConfig&) const = default;
};

enum class Tower { text, visual };

struct ParamBlock {
    std::string name;
    int rows = 0;
    int cols = 0;
    std::size_t offset = 0;

    std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

/*
 * Gated unit: h = W1 x + b1, out = h * sigmoid(W2 h + b2).
 * W1 is stored d_out x d_in so that h = W1 x.
 */
template <typename Scalar>
struct GatedUnitRef {
    Eigen::Map<const RowMat<Scalar>> W1;
    Eigen::Map<const Vec<Scalar>> b1;
    Eigen::Map<const RowMat<Scalar>> W2;
    Eigen::Map<const Vec<Scalar>> b2;

    int d_in() const { return static_cast<int>(W1.cols()); }
    int d_out() const { return static_cast<int>(W1.rows()); }
};

template <typename Scalar>
struct GatedUnitParams {
    RowMat<Scalar> W1;
    Vec<Scalar> b1;
    RowMat<Scalar> W2;
    Vec<Scalar> b2;

    GatedUnitRef<Scalar> ref() const {
        return {{W1.data(), W1.rows(), W1.cols()},
                {b1.data(), b1.size()},
                {W2.data(), W2.rows(), W2.cols()},
                {b2.data(), b2.size()}};
    }
};

template <typename Scalar>
struct GatedUnitCache {
    Vec<Scalar> input;
    Vec<Scalar> h;
    Vec<Scalar> gate;
};

template <typename Scalar>
Scalar logistic(Scalar z) {
    return Scalar(1) / (Scalar(1) + std::exp(-z));
}

template <typename Scalar>
Vec<Scalar> gated_forward(const Eigen::Ref<const Vec<Scalar>>& x, const GatedUnitRef<Scalar>& p,
                          GatedUnitCache<Scalar>* cache = nullptr) {
    if (x.size() != p.d_in() || p.b1.size() != p.d_out() || p.W2.rows() != p.d_out() ||
        p.W2.cols() != p.d_out() || p.b2.size() != p.d_out())
        throw Error(ErrorCode::dimension, "gated unit expects input of size " + std::to_string(p.d_in()) +
                                              ", got " + std::to_string(x.size()));
    Vec<Scalar> h = p.W1 * x + p.b1;
    Vec<Scalar> gate = (p.W2 * h + p.b2).unaryExpr([](Scalar z) { return logistic(z); });
    Vec<Scalar> out = h.cwiseProduct(gate);
    if (cache) *cache = {x, std::move(h), std::move(gate)};
    return out;
}

template <typename Scalar>
Vec<Scalar> gated_forward(const Eigen::Ref<const Vec<Scalar>>& x, const GatedUnitParams<Scalar>& p) {
    return gated_forward<Scalar>(x, p.ref());
}

/*
 * Backpropagates dout through one gated unit. Parameter gradients are added
 * into the given spans (row-major, same shapes as the unit); returns d input.
 */
template <typename Scalar>
Vec<Scalar> gated_backward(const GatedUnitCache<Scalar>& c, const Vec<Scalar>& dout, const GatedUnitRef<Scalar>& p,
                           Scalar* dW1, Scalar* db1, Scalar* dW2, Scalar* db2) {
    const auto d_in = p.d_in();
    const auto d_out = p.d_out();
    Vec<Scalar> dz = dout.cwiseProduct(c.h).cwiseProduct(c.gate.cwiseProduct(Vec<Scalar>::Ones(d_out) - c.gate));
    Vec<Scalar> dh = dout.cwiseProduct(c.gate);
    dh.noalias() += p.W2.transpose() * dz;
    Eigen::Map<RowMat<Scalar>>(dW2, d_out, d_out).noalias() += dz * c.h.transpose();
    Eigen::Map<Vec<Scalar>>(db2, d_out) += dz;
    Eigen::Map<RowMat<Scalar>>(dW1, d_out, d_in).noalias() += dh * c.input.transpose();
    Eigen::Map<Vec<Scalar>>(db1, d_out) += dh;
    return p.W1.transpose() * dh;
}

template <typename Scalar>
struct EmbedCache {
    std::vector<int> argmax;  // per pooled dim: winning token id (text) or row (visual)
    std::vector<GatedUnitCache<Scalar>> units;
    Vec<Scalar> unit_out;  // pre-normalization tower output
    Scalar norm = 0;
    Vec<Scalar> embedding;
};

/*
 * Gradient sink for one reduction block: dense tower gradients plus sparse
 * word-table rows.
 */
template <typename Scalar>
struct GradSink {
    std::vector<Scalar> towers;
    std::map<int, Vec<Scalar>> word_rows;
};

template <typename Scalar>
Scalar similarity(const Eigen::Ref<const Vec<Scalar>>& clip, const Eigen::Ref<const Vec<Scalar>>& caption) {
    return clip.dot(caption);
}

template <typename Scalar>
class JointEmbeddingModel {
public:
    using Vector = Vec<Scalar>;

    explicit JointEmbeddingModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
        if (cfg_.vocab_size < 1 || cfg_.d_word < 1 || cfg_.feature_dim < 1 || cfg_.d_joint < 1)
            throw Error(ErrorCode::config, "model dimensions must be positive");
        add_tower("text", cfg_.d_word, cfg_.text_hidden, text_units_);
        add_tower("visual", cfg_.feature_dim, cfg_.visual_hidden, visual_units_);
        tower_param_count_ = next_offset_;
        word_block_ = add_block("word_table", cfg_.vocab_size, cfg_.d_word);
        params_.assign(next_offset_, Scalar(0));
    }

    // Tower matrices uniform in +-1/sqrt(d_in), biases zero, word table uniform in [-1, 1].
    static JointEmbeddingModel initialize(ModelConfig cfg, std::uint64_t seed) {
        JointEmbeddingModel m(std::move(cfg));
        std::mt19937_64 rng(splitmix64(seed));
        for (const auto& b : m.blocks_) {
            if (b.name.ends_with(".b1") || b.name.ends_with(".b2")) continue;
            double bound = b.name == "word_table" ? 1.0 : 1.0 / std::sqrt(static_cast<double>(b.cols));
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (std::size_t i = 0; i < b.size(); ++i) m.params_[b.offset + i] = static_cast<Scalar>(dist(rng));
        }
        return m;
    }

    const ModelConfig& config() const { return cfg_; }
    ModelConfig& config() { return cfg_; }
    const std::vector<ParamBlock>& blocks() const { return blocks_; }
    std::span<Scalar> parameters() { return params_; }
    std::span<const Scalar> parameters() const { return params_; }
    std::size_t parameter_count() const { return params_.size(); }
    std::size_t tower_parameter_count() const { return tower_param_count_; }
    const ParamBlock& word_block() const { return blocks_[word_block_]; }

    Eigen::Map<const RowMat<Scalar>> word_table() const {
        const auto& b = word_block();
        return {params_.data() + b.offset, b.rows, b.cols};
    }

    std::size_t depth(Tower t) const { return units(t).size(); }

    GatedUnitRef<Scalar> unit(Tower t, std::size_t i) const {
        const auto& u = units(t).at(i);
        const auto& w1 = blocks_[u.w1];
        const auto& b1 = blocks_[u.w1 + 1];
        const auto& w2 = blocks_[u.w1 + 2];
        const auto& b2 = blocks_[u.w1 + 3];
        return {{params_.data() + w1.offset, w1.rows, w1.cols},
                {params_.data() + b1.offset, b1.rows},
                {params_.data() + w2.offset, w2.rows, w2.cols},
                {params_.data() + b2.offset, b2.rows}};
    }

    Vector pool_text(std::span<const int> token_ids, std::vector<int>* argmax = nullptr) const {
        if (token_ids.empty()) throw Error(ErrorCode::empty_input, "embed_text needs at least one token");
        auto table = word_table();
        Vector pooled(cfg_.d_word);
        if (argmax) argmax->assign(static_cast<std::size_t>(cfg_.d_word), 0);
        for (std::size_t n = 0; n < token_ids.size(); ++n) {
            int id = token_ids[n];
            if (id < 0 || id >= cfg_.vocab_size)
                throw Error(ErrorCode::dimension, "token id " + std::to_string(id) + " outside vocabulary");
            for (int k = 0; k < cfg_.d_word; ++k) {
                Scalar v = table(id, k);
                if (n == 0 || v > pooled[k]) {
                    pooled[k] = v;
                    if (argmax) (*argmax)[static_cast<std::size_t>(k)] = id;
                }
            }
        }
        return pooled;
    }

    Vector pool_visual(const Eigen::Ref<const FeatureMatrix>& rows) const {
        if (rows.rows() == 0) throw Error(ErrorCode::empty_input, "embed_visual needs at least one row");
        if (rows.cols() != cfg_.feature_dim)
            throw Error(ErrorCode::dimension, "feature_dim " + std::to_string(rows.cols()) + " != model " +
                                                  std::to_string(cfg_.feature_dim));
        return rows.colwise().maxCoeff().transpose().template cast<Scalar>();
    }

    Vector embed_text(std::span<const int> token_ids, EmbedCache<Scalar>* cache = nullptr) const {
        Vector pooled = pool_text(token_ids, cache ? &cache->argmax : nullptr);
        return run_tower(Tower::text, pooled, cache);
    }

    Vector embed_visual(const Eigen::Ref<const FeatureMatrix>& rows, EmbedCache<Scalar>* cache = nullptr) const {
        return run_tower(Tower::visual, pool_visual(rows), cache);
    }

    Vector embed_clip(const FeatureTrack& track, const Segment& seg, EmbedCache<Scalar>* cache = nullptr) const {
        return embed_visual(segment_rows(track, seg), cache);
    }

    Vector embed_caption(const Segment& seg, EmbedCache<Scalar>* cache = nullptr) const {
        return embed_text(seg.token_ids, cache);
    }

    /*
     * Adds d(loss)/d(params) for one embedding into sink, given the upstream
     * gradient with respect to the unit-normalized embedding.
     */
    void backward(Tower t, const EmbedCache<Scalar>& cache, const Vector& d_embedding, GradSink<Scalar>& sink) const {
        if (sink.towers.size() != tower_param_count_) sink.towers.assign(tower_param_count_, Scalar(0));
        const Vector& u = cache.embedding;
        Vector grad = (d_embedding - u * u.dot(d_embedding)) / cache.norm;
        const auto& us = units(t);
        for (std::size_t i = us.size(); i-- > 0;) {
            auto p = unit(t, i);
            std::size_t base = us[i].w1;
            grad = gated_backward<Scalar>(cache.units[i], grad, p, sink.towers.data() + blocks_[base].offset,
                                          sink.towers.data() + blocks_[base + 1].offset,
                                          sink.towers.data() + blocks_[base + 2].offset,
                                          sink.towers.data() + blocks_[base + 3].offset);
        }
        if (t == Tower::text) {
            for (int k = 0; k < cfg_.d_word; ++k) {
                int id = cache.argmax[static_cast<std::size_t>(k)];
                auto [it, inserted] = sink.word_rows.try_emplace(id);
                if (inserted) it->second = Vector::Zero(cfg_.d_word);
                it->second[k] += grad[k];
            }
        }
    }

    void accumulate(const GradSink<Scalar>& sink, std::vector<Scalar>& dense) const {
        for (std::size_t i = 0; i < sink.towers.size(); ++i) dense[i] += sink.towers[i];
        const auto& wb = word_block();
        for (const auto& [id, row] : sink.word_rows) {
            Scalar* dst = dense.data() + wb.offset + static_cast<std::size_t>(id) * static_cast<std::size_t>(cfg_.d_word);
            for (int k = 0; k < cfg_.d_word; ++k) dst[k] += row[k];
        }
    }

    bool operator==(const JointEmbeddingModel& o) const { return cfg_ == o.cfg_ && params_ == o.params_; }

private:
    struct UnitIndex {
        std::size_t w1;  // index of W1 block; b1, W2, b2 follow
    };

    const std::vector<UnitIndex>& units(Tower t) const { return t == Tower::text ? text_units_ : visual_units_; }

    std::size_t add_block(std::string name, int rows, int cols) {
        blocks_.push_back({std::move(name), rows, cols, next_offset_});
        next_offset_ += blocks_.back().size();
        return blocks_.size() - 1;
    }

    void add_tower(const std::string& name, int d_in, const std::vector<int>& hidden, std::vector<UnitIndex>& out) {
        std::vector<int> widths = hidden;
        widths.push_back(cfg_.d_joint);
        for (std::size_t i = 0; i < widths.size(); ++i) {
            int d_out = widths[i];
            if (d_out < 1) throw Error(ErrorCode::config, name + " tower width must be positive");
            auto prefix = name + "." + std::to_string(i);
            out.push_back({add_block(prefix + ".W1", d_out, d_in)});
            add_block(prefix + ".b1", d_out, 1);
            add_block(prefix + ".W2", d_out, d_out);
            add_block(prefix + ".b2", d_out, 1);
            d_in = d_out;
        }
    }

    Vector run_tower(Tower t, Vector x, EmbedCache<Scalar>* cache) const {
        const auto& us = units(t);
        if (cache) cache->units.resize(us.size());
        for (std::size_t i = 0; i < us.size(); ++i)
            x = gated_forward<Scalar>(x, unit(t, i), cache ? &cache->units[i] : nullptr);
        Scalar norm = x.norm();
        if (norm < Scalar(kNormEpsilon)) norm += Scalar(kNormEpsilon);
        Vector out = x / norm;
        if (cache) {
            cache->unit_out = x;
            cache->norm = norm;
            cache->embedding = out;
        }
        return out;
    }

    ModelConfig cfg_;
    std::vector<ParamBlock> blocks_;
    std::vector<UnitIndex> text_units_;
    std::vector<UnitIndex> visual_units_;
    std::size_t next_offset_ = 0;
    std::size_t tower_param_count_ = 0;
    std::size_t word_block_ = 0;
    std::vector<Scalar> params_;
};

// Entry (i, j) scores clip i against caption j; the diagonal holds aligned pairs.
template <typename Scalar>
RowMat<Scalar> similarity_matrix(const JointEmbeddingModel<Scalar>& model, const FeatureTrack& track,
                                 const std::vector<Segment>& segments) {
    const auto n = static_cast<Eigen::Index>(segments.size());
    RowMat<Scalar> clips(n, model.config().d_joint);
    RowMat<Scalar> captions(n, model.config().d_joint);
    for (Eigen::Index i = 0; i < n; ++i) {
        clips.row(i) = model.embed_clip(track, segments[static_cast<std::size_t>(i)]).transpose();
        captions.row(i) = model.embed_caption(segments[static_cast<std::size_t>(i)]).transpose();
    }
    RowMat<Scalar> sims(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) sims(i, j) = clips.row(i).dot(captions.row(j));
    return sims;
}

/*
 * Overwrites word-table rows from text vectors, one "token v1 ... vd" per line
 * (GloVe / word2vec text layout; a word2vec "count dim" header line is skipped).
 * Tokens outside the vocabulary are ignored. Returns the number of rows replaced.
 */
template <typename Scalar>
int import_word_vectors(JointEmbeddingModel<Scalar>& model, const Vocabulary& vocab, std::string_view text) {
    const int d = model.config().d_word;
    if (vocab.size() != model.config().vocab_size)
        throw Error(ErrorCode::incompatible, "word vectors: vocabulary size differs from the model");
    const auto& b = model.word_block();
    auto params = model.parameters();
    std::vector<char> seen(static_cast<std::size_t>(vocab.size()), 0);
    int replaced = 0;
    std::size_t line_no = 0, pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::istringstream line{std::string(text.substr(pos, end - pos))};
        pos = end + 1;
        ++line_no;
        std::string token;
        if (!(line >> token)) continue;
        std::vector<double> values;
        for (double v; line >> v;) values.push_back(v);
        if (!line.eof())
            throw Error(ErrorCode::format, "word vectors line " + std::to_string(line_no) + ": bad number");
        if (line_no == 1 && values.size() == 1) continue;
        if (static_cast<int>(values.size()) != d)
            throw Error(ErrorCode::dimension, "word vectors line " + std::to_string(line_no) + ": expected " +
                                                  std::to_string(d) + " values, got " + std::to_string(values.size()));
        int id = vocab.id(token);
        if (id == 0 && token != kUnknownToken) continue;
        for (int k = 0; k < d; ++k) {
            if (!std::isfinite(values[static_cast<std::size_t>(k)]))
                throw Error(ErrorCode::format, "word vectors line " + std::to_string(line_no) + ": non-finite value");
            params[b.offset + static_cast<std::size_t>(id) * static_cast<std::size_t>(d) + static_cast<std::size_t>(k)] =
                static_cast<Scalar>(values[static_cast<std::size_t>(k)]);
        }
        replaced += !seen[static_cast<std::size_t>(id)];
        seen[static_cast<std::size_t>(id)] = 1;
    }
    return replaced;
}

// ---------------------------------------------------------------------------
// Checkpoints: "GCK1" | u32 json length | config JSON | raw little-endian parameter blocks.

inline constexpr char kCheckpointMagic[4] = {'G', 'C', 'K', '1'};

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return s;
}

template <typename Scalar>
constexpr const char* dtype_name() {
    if constexpr (std::is_same_v<Scalar, float>)
        return "f32";
    else
        return "f64";
}

template <typename Scalar>
std::string encode_checkpoint(const JointEmbeddingModel<Scalar>& model) {
    const auto& c = model.config();
    nlohmann::json header = {
        {"dtype", dtype_name<Scalar>()},
        {"vocab_size", c.vocab_size},
        {"d_word", c.d_word},
        {"feature_dim", c.feature_dim},
        {"d_joint", c.d_joint},
        {"text_hidden", c.text_hidden},
        {"visual_hidden", c.visual_hidden},
        {"window_len_s", c.window_len_s},
        {"vocab_hash", hex64(c.vocab_hash)},
        {"step", c.step},
    };
    auto& blocks = header["blocks"] = nlohmann::json::array();
    for (const auto& b : model.blocks()) blocks.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
    auto text = header.dump();
    std::string buf(kCheckpointMagic, 4);
    put_pod<std::uint32_t>(buf, static_cast<std::uint32_t>(text.size()));
    buf += text;
    auto params = model.parameters();
    buf.append(reinterpret_cast<const char*>(params.data()), params.size() * sizeof(Scalar));
    return buf;
}

inline ModelConfig read_checkpoint_config(std::string_view bytes, std::string* dtype = nullptr,
                                          std::size_t* payload_offset = nullptr) {
    if (bytes.size() < 8 || !std::equal(kCheckpointMagic, kCheckpointMagic + 4, bytes.begin()))
        throw Error(ErrorCode::format, "missing GCK1 magic");
    std::size_t pos = 4;
    auto len = get_pod<std::uint32_t>(bytes, pos);
    if (pos + len > bytes.size()) throw Error(ErrorCode::format, "truncated checkpoint header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(pos, len));
        ModelConfig c;
        c.vocab_size = header.at("vocab_size");
        c.d_word = header.at("d_word");
        c.feature_dim = header.at("feature_dim");
        c.d_joint = header.at("d_joint");
        c.text_hidden = header.at("text_hidden").get<std::vector<int>>();
        c.visual_hidden = header.at("visual_hidden").get<std::vector<int>>();
        c.window_len_s = header.at("window_len_s");
        c.vocab_hash = std::stoull(header.at("vocab_hash").get<std::string>(), nullptr, 16);
        c.step = header.at("step");
        if (dtype) *dtype = header.at("dtype").get<std::string>();
        if (payload_offset) *payload_offset = pos + len;
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::format, std::string("bad checkpoint header: ") + e.what());
    }
}

template <typename Scalar>
JointEmbeddingModel<Scalar> decode_checkpoint(std::string_view bytes, std::optional<std::uint64_t> expected_vocab_hash) {
    std::string dtype;
    std::size_t offset = 0;
    auto cfg = read_checkpoint_config(bytes, &dtype, &offset);
    if (dtype != dtype_name<Scalar>())
        throw Error(ErrorCode::incompatible, "checkpoint dtype " + dtype + " != " + dtype_name<Scalar>());
    if (expected_vocab_hash && *expected_vocab_hash != cfg.vocab_hash)
        throw Error(ErrorCode::incompatible, "checkpoint vocab hash " + hex64(cfg.vocab_hash) +
                                                 " does not match corpus vocabulary " + hex64(*expected_vocab_hash));
    JointEmbeddingModel<Scalar> model(cfg);
    auto params = model.parameters();
    if (bytes.size() - offset != params.size() * sizeof(Scalar))
        throw Error(ErrorCode::format, "checkpoint payload has " + std::to_string(bytes.size() - offset) +
                                           " bytes, expected " + std::to_string(params.size() * sizeof(Scalar)));
    std::memcpy(params.data(), bytes.data() + offset, params.size() * sizeof(Scalar));
    for (Scalar v : params)
        if (!std::isfinite(v)) throw Error(ErrorCode::format, "non-finite parameter in checkpoint");
    return model;
}

template <typename Scalar>
void save_checkpoint(const JointEmbeddingModel<Scalar>& model, const std::filesystem::path& path) {
    atomic_write(path, encode_checkpoint(model));
}

template <typename Scalar = float>
JointEmbeddingModel<Scalar> load_checkpoint(const std::filesystem::path& path,
                                            std::optional<std::uint64_t> expected_vocab_hash = std::nullopt) {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::io, "checkpoint not found: " + path.string());
    return decode_checkpoint<Scalar>(read_file(path), expected_vocab_hash);
}

} // namespace groundkit

#endif
