#pragma once

// Post-layer-norm bidirectional transformer encoder with a tied output
// projection, templated on the scalar type. Training runs in float; the
// gradient check instantiates the same code in double.

#include "clozeaudit/common.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstddef>
#include <new>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace clozeaudit {

struct ModelConfig {
    std::size_t layers = 4;
    std::size_t heads = 4;
    std::size_t model_dim = 128;
    std::size_t ffn_dim = 512;
    std::size_t max_sequence_length = 100;
    std::size_t vocab_size = 0;

    std::size_t head_dim() const { return model_dim / heads; }
    void validate() const;
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

inline void ModelConfig::validate() const
{
    if (layers == 0 || heads == 0 || model_dim == 0 || ffn_dim == 0 || max_sequence_length == 0) {
        throw Error("config", "model shape parameters must be positive");
    }
    if (model_dim % heads != 0) throw Error("config", "model_dim must be divisible by heads");
    if (vocab_size <= kFirstRegularId) throw Error("config", "vocab_size must exceed the specials");
}

inline nlohmann::json ModelConfig::to_json() const
{
    return {{"layers", layers},
            {"heads", heads},
            {"model_dim", model_dim},
            {"ffn_dim", ffn_dim},
            {"max_sequence_length", max_sequence_length},
            {"vocab_size", vocab_size}};
}

inline ModelConfig ModelConfig::from_json(const nlohmann::json& j)
{
    ModelConfig c;
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.model_dim = j.value("model_dim", c.model_dim);
    c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
    c.max_sequence_length = j.value("max_sequence_length", c.max_sequence_length);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    return c;
}

/// All network weights in one contiguous buffer, exposed as named Eigen maps.
/// The flat view makes the optimizer, serialization and finite differences
/// single loops; tensor order is the serialization order.
template <typename Scalar>
class TransformerParams {
public:
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using MatrixMap = Eigen::Map<Matrix>;
    using RowMap = Eigen::Map<RowVector>;

    struct Layer {
        MatrixMap wq{nullptr, 0, 0}, wk{nullptr, 0, 0}, wv{nullptr, 0, 0}, wo{nullptr, 0, 0};
        RowMap bq{nullptr, 0}, bk{nullptr, 0}, bv{nullptr, 0}, bo{nullptr, 0};
        RowMap ln1_gamma{nullptr, 0}, ln1_beta{nullptr, 0};
        MatrixMap w1{nullptr, 0, 0};
        RowMap b1{nullptr, 0};
        MatrixMap w2{nullptr, 0, 0};
        RowMap b2{nullptr, 0};
        RowMap ln2_gamma{nullptr, 0}, ln2_beta{nullptr, 0};
    };

    struct TensorInfo {
        std::string name;
        Eigen::Index rows;
        Eigen::Index cols;
        std::size_t offset;
        std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
    };

    /// Zero-filled parameters for `config`.
    explicit TransformerParams(const ModelConfig& config) : config_(config)
    {
        config_.validate();
        layout();
        data_.assign(total_, Scalar(0));
        bind();
    }

    TransformerParams(const TransformerParams& other)
        : config_(other.config_), tensors_(other.tensors_), total_(other.total_), data_(other.data_)
    {
        bind();
    }

    TransformerParams& operator=(const TransformerParams& other)
    {
        if (this != &other) {
            config_ = other.config_;
            tensors_ = other.tensors_;
            total_ = other.total_;
            data_ = other.data_;
            bind();
        }
        return *this;
    }

    TransformerParams(TransformerParams&& other) noexcept
        : config_(other.config_), tensors_(std::move(other.tensors_)), total_(other.total_),
          data_(std::move(other.data_))
    {
        bind();
    }

    TransformerParams& operator=(TransformerParams&& other) noexcept
    {
        if (this != &other) {
            config_ = other.config_;
            tensors_ = std::move(other.tensors_);
            total_ = other.total_;
            data_ = std::move(other.data_);
            bind();
        }
        return *this;
    }

    const ModelConfig& config() const noexcept { return config_; }
    std::span<const TensorInfo> tensors() const noexcept { return tensors_; }
    std::size_t size() const noexcept { return total_; }

    Eigen::Map<Vector> flat() { return {data_.data(), static_cast<Eigen::Index>(total_)}; }
    Eigen::Map<const Vector> flat() const { return {data_.data(), static_cast<Eigen::Index>(total_)}; }

    void set_zero() { std::fill(data_.begin(), data_.end(), Scalar(0)); }

    template <typename Other>
    TransformerParams<Other> cast() const
    {
        TransformerParams<Other> out(config_);
        out.flat() = flat().template cast<Other>();
        return out;
    }

    MatrixMap token_embedding{nullptr, 0, 0};     // V x d, tied with the output projection
    MatrixMap position_embedding{nullptr, 0, 0};  // max_len x d
    std::vector<Layer> layers;
    RowMap output_bias{nullptr, 0};               // 1 x V

private:
    void layout()
    {
        const auto d = static_cast<Eigen::Index>(config_.model_dim);
        const auto f = static_cast<Eigen::Index>(config_.ffn_dim);
        const auto v = static_cast<Eigen::Index>(config_.vocab_size);
        const auto len = static_cast<Eigen::Index>(config_.max_sequence_length);
        tensors_.clear();
        total_ = 0;
        auto add = [&](std::string name, Eigen::Index rows, Eigen::Index cols) {
            tensors_.push_back({std::move(name), rows, cols, total_});
            total_ += static_cast<std::size_t>(rows * cols);
        };
        add("token_embedding", v, d);
        add("position_embedding", len, d);
        for (std::size_t l = 0; l < config_.layers; ++l) {
            const std::string p = "layers." + std::to_string(l) + ".";
            add(p + "attention.query.weight", d, d);
            add(p + "attention.query.bias", 1, d);
            add(p + "attention.key.weight", d, d);
            add(p + "attention.key.bias", 1, d);
            add(p + "attention.value.weight", d, d);
            add(p + "attention.value.bias", 1, d);
            add(p + "attention.output.weight", d, d);
            add(p + "attention.output.bias", 1, d);
            add(p + "attention_norm.gamma", 1, d);
            add(p + "attention_norm.beta", 1, d);
            add(p + "ffn.in.weight", d, f);
            add(p + "ffn.in.bias", 1, f);
            add(p + "ffn.out.weight", f, d);
            add(p + "ffn.out.bias", 1, d);
            add(p + "ffn_norm.gamma", 1, d);
            add(p + "ffn_norm.beta", 1, d);
        }
        add("output_bias", 1, v);
    }

    void bind()
    {
        std::size_t t = 0;
        auto mat = [&](MatrixMap& m) {
            const auto& info = tensors_[t++];
            new (&m) MatrixMap(data_.data() + info.offset, info.rows, info.cols);
        };
        auto row = [&](RowMap& m) {
            const auto& info = tensors_[t++];
            new (&m) RowMap(data_.data() + info.offset, info.cols);
        };
        mat(token_embedding);
        mat(position_embedding);
        layers.clear();
        layers.resize(config_.layers);
        for (auto& L : layers) {
            mat(L.wq);
            row(L.bq);
            mat(L.wk);
            row(L.bk);
            mat(L.wv);
            row(L.bv);
            mat(L.wo);
            row(L.bo);
            row(L.ln1_gamma);
            row(L.ln1_beta);
            mat(L.w1);
            row(L.b1);
            mat(L.w2);
            row(L.b2);
            row(L.ln2_gamma);
            row(L.ln2_beta);
        }
        row(output_bias);
    }

    ModelConfig config_;
    std::vector<TensorInfo> tensors_;
    std::size_t total_ = 0;
    // Aligned so vectorized reductions over the maps take the same path in
    // every run; unaligned buffers change summation order and break bitwise
    // reproducibility.
    std::vector<Scalar, Eigen::aligned_allocator<Scalar>> data_;
};

namespace detail {

template <typename Scalar>
inline constexpr Scalar kLayerNormEps = Scalar(1e-12);

template <typename Scalar>
Scalar gelu(Scalar x)
{
    return Scalar(0.5) * x * (Scalar(1) + std::erf(x / std::numbers::sqrt2_v<Scalar>));
}

template <typename Scalar>
Scalar gelu_grad(Scalar x)
{
    const Scalar cdf = Scalar(0.5) * (Scalar(1) + std::erf(x / std::numbers::sqrt2_v<Scalar>));
    const Scalar pdf = std::exp(Scalar(-0.5) * x * x) * std::numbers::inv_sqrtpi_v<Scalar> /
                       std::numbers::sqrt2_v<Scalar>;
    return cdf + x * pdf;
}

/// Row-wise softmax in place.
template <typename Derived>
void softmax_rows(Eigen::MatrixBase<Derived>& m)
{
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        r.array() -= r.maxCoeff();
        r = r.array().exp().matrix();
        r /= r.sum();
    }
}

/// Row-wise layer norm; keeps normalized rows and reciprocal std for backward.
template <typename Scalar, typename In, typename G, typename B>
void layer_norm(const In& input, const G& gamma, const B& beta,
                Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& normalized,
                Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& rstd,
                Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& output)
{
    const auto n = input.rows();
    const auto d = input.cols();
    normalized.resize(n, d);
    rstd.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Scalar mean = input.row(i).mean();
        const auto centered = (input.row(i).array() - mean).matrix();
        const Scalar var = centered.squaredNorm() / static_cast<Scalar>(d);
        rstd[i] = Scalar(1) / std::sqrt(var + kLayerNormEps<Scalar>);
        normalized.row(i) = centered * rstd[i];
    }
    output = (normalized.array().rowwise() * gamma.array()).rowwise() + beta.array();
}

template <typename Scalar, typename G>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>
layer_norm_backward(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& grad_out,
                    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& normalized,
                    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& rstd, const G& gamma,
                    Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>> grad_gamma,
                    Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>> grad_beta)
{
    grad_gamma += (grad_out.array() * normalized.array()).colwise().sum().matrix();
    grad_beta += grad_out.colwise().sum();
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> g =
        grad_out.array().rowwise() * gamma.array();
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean_g = g.rowwise().mean();
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean_gx =
        (g.array() * normalized.array()).rowwise().mean();
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out =
        g - mean_g.replicate(1, g.cols()) -
        (normalized.array().colwise() * mean_gx.array()).matrix();
    return out.array().colwise() * rstd.array();
}

} // namespace detail

/// Activations of one encoder layer kept for the backward pass.
template <typename Scalar>
struct LayerActivations {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    Matrix input, q, k, v, context;
    std::vector<Matrix> attention;  // one L x L probability matrix per head
    Matrix attn_normalized, attn_out;
    Vector attn_rstd;
    Matrix ffn_pre, ffn_act;
    Matrix ffn_normalized, output;
    Vector ffn_rstd;
};

template <typename Scalar>
struct EncoderActivations {
    std::vector<TokenId> tokens;
    std::vector<LayerActivations<Scalar>> layers;
};

/// Runs the encoder over `tokens`; returns the final hidden states (L x d).
/// Pass `cache` to keep activations for `encoder_backward`.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>
encode(const TransformerParams<Scalar>& params, std::span<const TokenId> tokens,
       EncoderActivations<Scalar>* cache = nullptr)
{
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    const auto& cfg = params.config();
    const auto n = static_cast<Eigen::Index>(tokens.size());
    if (tokens.size() > cfg.max_sequence_length) {
        throw Error("sequence_length", "sequence of " + std::to_string(tokens.size()) +
                                           " tokens exceeds max_sequence_length " +
                                           std::to_string(cfg.max_sequence_length));
    }
    if (tokens.empty()) throw Error("sequence_length", "empty sequence");
    const auto dh = static_cast<Eigen::Index>(cfg.head_dim());
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));

    Matrix x(n, static_cast<Eigen::Index>(cfg.model_dim));
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto t = tokens[static_cast<std::size_t>(i)];
        if (t >= cfg.vocab_size) throw Error("query", "token id outside vocab");
        x.row(i) = params.token_embedding.row(t) + params.position_embedding.row(i);
    }
    if (cache) {
        cache->tokens.assign(tokens.begin(), tokens.end());
        cache->layers.assign(cfg.layers, LayerActivations<Scalar>{});
    }

    LayerActivations<Scalar> scratch;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const auto& P = params.layers[l];
        auto& a = cache ? cache->layers[l] : scratch;
        a.input = x;
        a.q = (x * P.wq).rowwise() + P.bq;
        a.k = (x * P.wk).rowwise() + P.bk;
        a.v = (x * P.wv).rowwise() + P.bv;
        a.context.resize(n, x.cols());
        a.attention.resize(cfg.heads);
        for (std::size_t h = 0; h < cfg.heads; ++h) {
            const auto c0 = static_cast<Eigen::Index>(h) * dh;
            Matrix scores = (a.q.middleCols(c0, dh) * a.k.middleCols(c0, dh).transpose()) * scale;
            detail::softmax_rows(scores);
            a.context.middleCols(c0, dh).noalias() = scores * a.v.middleCols(c0, dh);
            a.attention[h] = std::move(scores);
        }
        const Matrix attn_sum = x + ((a.context * P.wo).rowwise() + P.bo);
        detail::layer_norm<Scalar>(attn_sum, P.ln1_gamma, P.ln1_beta, a.attn_normalized, a.attn_rstd,
                                   a.attn_out);
        a.ffn_pre = (a.attn_out * P.w1).rowwise() + P.b1;
        a.ffn_act = a.ffn_pre.unaryExpr([](Scalar s) { return detail::gelu(s); });
        const Matrix ffn_sum = a.attn_out + ((a.ffn_act * P.w2).rowwise() + P.b2);
        detail::layer_norm<Scalar>(ffn_sum, P.ln2_gamma, P.ln2_beta, a.ffn_normalized, a.ffn_rstd,
                                   a.output);
        x = a.output;
    }
    return x;
}

/// Accumulates parameter gradients given dLoss/dHidden for the final layer.
template <typename Scalar>
void encoder_backward(const TransformerParams<Scalar>& params, const EncoderActivations<Scalar>& cache,
                      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> grad,
                      TransformerParams<Scalar>& grads)
{
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    const auto& cfg = params.config();
    const auto dh = static_cast<Eigen::Index>(cfg.head_dim());
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));

    for (std::size_t li = cfg.layers; li-- > 0;) {
        const auto& P = params.layers[li];
        auto& G = grads.layers[li];
        const auto& a = cache.layers[li];

        Matrix d_ffn_sum = detail::layer_norm_backward<Scalar>(grad, a.ffn_normalized, a.ffn_rstd,
                                                               P.ln2_gamma, G.ln2_gamma, G.ln2_beta);
        G.w2.noalias() += a.ffn_act.transpose() * d_ffn_sum;
        G.b2 += d_ffn_sum.colwise().sum();
        Matrix d_pre = d_ffn_sum * P.w2.transpose();
        d_pre.array() *= a.ffn_pre.unaryExpr([](Scalar s) { return detail::gelu_grad(s); }).array();
        G.w1.noalias() += a.attn_out.transpose() * d_pre;
        G.b1 += d_pre.colwise().sum();
        Matrix d_attn_out = d_ffn_sum;
        d_attn_out.noalias() += d_pre * P.w1.transpose();

        Matrix d_attn_sum = detail::layer_norm_backward<Scalar>(
            d_attn_out, a.attn_normalized, a.attn_rstd, P.ln1_gamma, G.ln1_gamma, G.ln1_beta);
        G.wo.noalias() += a.context.transpose() * d_attn_sum;
        G.bo += d_attn_sum.colwise().sum();
        const Matrix d_context = d_attn_sum * P.wo.transpose();

        Matrix dq(a.q.rows(), a.q.cols()), dk(a.k.rows(), a.k.cols()), dv(a.v.rows(), a.v.cols());
        for (std::size_t h = 0; h < cfg.heads; ++h) {
            const auto c0 = static_cast<Eigen::Index>(h) * dh;
            const Matrix& A = a.attention[h];
            const auto d_head = d_context.middleCols(c0, dh);
            Matrix dA = d_head * a.v.middleCols(c0, dh).transpose();
            dv.middleCols(c0, dh).noalias() = A.transpose() * d_head;
            const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> row_dot = (dA.array() * A.array()).rowwise().sum();
            Matrix dS = (A.array() * (dA.array().colwise() - row_dot.array())).matrix() * scale;
            dq.middleCols(c0, dh).noalias() = dS * a.k.middleCols(c0, dh);
            dk.middleCols(c0, dh).noalias() = dS.transpose() * a.q.middleCols(c0, dh);
        }
        G.wq.noalias() += a.input.transpose() * dq;
        G.bq += dq.colwise().sum();
        G.wk.noalias() += a.input.transpose() * dk;
        G.bk += dk.colwise().sum();
        G.wv.noalias() += a.input.transpose() * dv;
        G.bv += dv.colwise().sum();
        Matrix d_input = d_attn_sum;
        d_input.noalias() += dq * P.wq.transpose();
        d_input.noalias() += dk * P.wk.transpose();
        d_input.noalias() += dv * P.wv.transpose();
        grad = std::move(d_input);
    }
    for (Eigen::Index i = 0; i < grad.rows(); ++i) {
        grads.token_embedding.row(cache.tokens[static_cast<std::size_t>(i)]) += grad.row(i);
        grads.position_embedding.row(i) += grad.row(i);
    }
}

/// Per-position distributions over the vocabulary (L x V), softmax in Scalar.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>
forward(const TransformerParams<Scalar>& params, std::span<const TokenId> tokens)
{
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> logits =
        (encode(params, tokens) * params.token_embedding.transpose()).rowwise() + params.output_bias;
    detail::softmax_rows(logits);
    return logits;
}

/// One training sequence: corrupted input plus the positions scored and
/// their original tokens.
struct MaskedExample {
    std::vector<TokenId> input;
    std::vector<std::size_t> positions;
    std::vector<TokenId> targets;
};

/// Mean cross-entropy (nats) over every scored position in the batch. When
/// `grads` is given, the gradient of that mean is added to it.
template <typename Scalar>
double masked_lm_loss(const TransformerParams<Scalar>& params, std::span<const MaskedExample> batch,
                      TransformerParams<Scalar>* grads)
{
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    const auto d = static_cast<Eigen::Index>(params.config().model_dim);
    std::size_t total = 0;
    for (const auto& ex : batch) {
        if (ex.positions.size() != ex.targets.size()) throw Error("train", "positions/targets mismatch");
        total += ex.positions.size();
    }
    if (total == 0) throw Error("train", "batch has no scored positions");

    std::vector<EncoderActivations<Scalar>> caches(grads ? batch.size() : 0);
    Matrix selected(static_cast<Eigen::Index>(total), d);
    Eigen::Index row = 0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const Matrix hidden = encode(params, batch[b].input, grads ? &caches[b] : nullptr);
        for (auto pos : batch[b].positions) selected.row(row++) = hidden.row(static_cast<Eigen::Index>(pos));
    }

    Matrix probs = (selected * params.token_embedding.transpose()).rowwise() + params.output_bias;
    detail::softmax_rows(probs);
    CompensatedSum loss;
    row = 0;
    for (const auto& ex : batch) {
        for (auto t : ex.targets) loss.add(-std::log(static_cast<double>(probs(row++, t))));
    }
    if (!grads) return loss.mean();

    const Scalar inv_total = Scalar(1) / static_cast<Scalar>(total);
    row = 0;
    for (const auto& ex : batch) {
        for (auto t : ex.targets) probs(row++, t) -= Scalar(1);
    }
    probs *= inv_total;  // now dLoss/dlogits
    grads->output_bias += probs.colwise().sum();
    grads->token_embedding.noalias() += probs.transpose() * selected;
    const Matrix d_selected = probs * params.token_embedding;

    row = 0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        Matrix d_hidden = Matrix::Zero(static_cast<Eigen::Index>(batch[b].input.size()), d);
        for (auto pos : batch[b].positions) d_hidden.row(static_cast<Eigen::Index>(pos)) += d_selected.row(row++);
        encoder_backward(params, caches[b], std::move(d_hidden), *grads);
    }
    return loss.mean();
}

} // namespace clozeaudit
