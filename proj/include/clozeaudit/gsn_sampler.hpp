#pragma once

#include "clozeaudit/corpus.hpp"
#include "clozeaudit/lm_core.hpp"

#include <random>
#include <span>
#include <string>
#include <vector>

namespace clozeaudit {

struct SamplerConfig {
    std::size_t length = 20;
    /// 0 selects the default of 10 * length.
    std::size_t warmup_steps = 0;
    std::size_t samples = 50;
    double temperature = 1.0;
    std::uint64_t seed = 0;

    std::size_t effective_warmup() const { return warmup_steps ? warmup_steps : 10 * length; }
    void validate() const;
    nlohmann::json to_json() const;
    static SamplerConfig from_json(const nlohmann::json& j);
};

struct ChainState {
    std::vector<TokenId> token_ids;
    std::size_t step = 0;
    std::mt19937_64 rng;
};

/// Fresh chain: tokens i.i.d. uniform over the regular (non-special) ids.
ChainState init_chain(std::size_t vocab_size, std::size_t length, std::uint64_t seed);

/// One random-scan step: mask a uniformly chosen position, query the model,
/// optionally temper, and resample that position. MASK/BOS/EOS are never drawn.
void gsn_step(const MaskedLM& model, const Vocab& vocab, ChainState& state, double temperature = 1.0);

/// Draws a token id from the tempered distribution with MASK/BOS/EOS removed.
TokenId sample_token(const PredictionDistribution& dist, double temperature, std::mt19937_64& rng);

/// One independent chain per sample: initialize, run warmup steps, emit, discard.
/// Chain i is seeded with derive_seed(config.seed, i).
std::vector<std::vector<TokenId>> generate(const MaskedLM& model, const Vocab& vocab,
                                           const SamplerConfig& config);

/// Space-joined tokens with punctuation attached to the preceding token.
std::string detokenize(std::span<const std::string> tokens);

std::string samples_jsonl(std::span<const std::vector<TokenId>> samples, const Vocab& vocab,
                          const SamplerConfig& config, std::string_view role, std::string_view config_hash);
std::string samples_text(std::span<const std::vector<TokenId>> samples, const Vocab& vocab);

} // namespace clozeaudit
