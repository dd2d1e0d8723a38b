#pragma once

#include "clozeaudit/corpus.hpp"
#include "clozeaudit/lm_core.hpp"
#include "clozeaudit/transformer.hpp"

#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

namespace clozeaudit {

struct TrainConfig {
    std::size_t batch_size = 32;
    std::size_t steps = 6000;
    /// Training window length; 0 means the model's max_sequence_length.
    std::size_t sequence_length = 0;
    double learning_rate = 1e-3;
    std::size_t warmup_steps = 1000;
    double masking_rate = 0.15;
    double mask_prob = 0.8;
    double keep_prob = 0.1;
    double random_prob = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

using ParameterSet = TransformerParams<float>;

/// normal(0, 0.02) weights, zero biases, unit layer-norm gains.
template <typename Scalar>
TransformerParams<Scalar> init_params(const ModelConfig& config, std::uint64_t seed);

extern template TransformerParams<float> init_params<float>(const ModelConfig&, std::uint64_t);
extern template TransformerParams<double> init_params<double>(const ModelConfig&, std::uint64_t);

/// Selects round(masking_rate * L) positions (at least one) and corrupts them
/// with the mask/keep/random recipe.
MaskedExample make_masked_example(std::span<const TokenId> window, const TrainConfig& config,
                                  std::size_t vocab_size, std::mt19937_64& rng);

/// Adam with bias correction over the flat parameter buffer.
class AdamOptimizer {
public:
    AdamOptimizer(std::size_t size, double beta1, double beta2, double epsilon);
    void step(ParameterSet& params, const ParameterSet& grads, double learning_rate);
    std::size_t steps_taken() const noexcept { return t_; }

private:
    Eigen::VectorXf m_, v_;
    double beta1_, beta2_, epsilon_;
    std::size_t t_ = 0;
};

/// Linear warmup to the base rate, then constant.
double learning_rate_at(const TrainConfig& config, std::size_t step);

struct TrainLogEntry {
    std::size_t step;
    double masked_loss;
    double learning_rate;
};

struct TrainResult {
    ParameterSet params;
    std::vector<TrainLogEntry> log;
};

/// Called after every optimizer step; may be empty.
using TrainObserver = std::function<void(const TrainLogEntry&)>;

/// Adam on mean masked cross-entropy over windows drawn uniformly from the
/// documents. Deterministic given tconfig.seed. Throws Error("diverged") on a
/// non-finite loss.
TrainResult train(const ModelConfig& config, const TrainConfig& tconfig,
                  std::span<const EncodedDocument> documents, const TrainObserver& observer = {});

std::string train_log_csv(std::span<const TrainLogEntry> log);

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::string worst_tensor;
    std::vector<std::pair<std::string, double>> per_tensor;
};

/// Analytic gradients against central finite differences (double precision)
/// on a randomly initialized model and a fixed random masked batch.
/// Relative error per tensor is |g_analytic - g_numeric|_2 / max(|g_analytic|_2, |g_numeric|_2, floor).
inline constexpr double kGradCheckFloor = 1e-6;
GradCheckResult grad_check(const ModelConfig& config, std::uint64_t seed, double step = 1e-5);

/// The small shape used for gradient checks: 1 layer, 2 heads, dim 8, V=11, L=6.
ModelConfig tiny_model_config();

class NeuralModel final : public MaskedLM {
public:
    NeuralModel(ParameterSet params, std::uint64_t vocab_fingerprint);

    std::string kind() const override { return "neural"; }
    std::size_t vocab_size() const override { return params_.config().vocab_size; }
    std::uint64_t vocab_fingerprint() const override { return fingerprint_; }
    PredictionDistribution predict_unchecked(const MaskedQuery& query) const override;
    nlohmann::json payload_header() const override;
    /// Tensor table: u32 count, then per tensor u32 name length, name bytes,
    /// u32 rows, u32 cols, rows*cols f32 values in row-major order.
    void write_payload(std::ostream& out) const override;

    static NeuralModel read_payload(std::istream& in, const nlohmann::json& payload_header,
                                    std::uint64_t vocab_fingerprint);

    const ParameterSet& params() const noexcept { return params_; }

private:
    ParameterSet params_;
    std::uint64_t fingerprint_;
};

} // namespace clozeaudit
