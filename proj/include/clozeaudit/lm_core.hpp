#pragma once

#include "clozeaudit/common.hpp"
#include "clozeaudit/corpus.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace clozeaudit {

/// Probabilities over the whole vocabulary, indexed by token id.
using PredictionDistribution = Eigen::VectorXd;

/// A passage with exactly one position replaced by MASK.
struct MaskedQuery {
    std::vector<TokenId> token_ids;
    std::size_t mask_position = 0;
    std::optional<TokenId> gold_id;

    /// Copies `tokens`, masks `position` and records the original token as gold.
    static MaskedQuery at(std::span<const TokenId> tokens, std::size_t position);

    TokenId left_neighbor() const;
    TokenId right_neighbor() const;

    /// Throws unless exactly one MASK sits at mask_position and all ids < vocab_size.
    void validate(std::size_t vocab_size) const;
};

/// Anything that returns a normalized distribution over the vocabulary for the
/// masked position of a query. Implementations are immutable once built and
/// `predict_unchecked` must be safe for concurrent callers.
class MaskedLM {
public:
    virtual ~MaskedLM() = default;

    virtual std::string kind() const = 0;
    virtual std::size_t vocab_size() const = 0;
    virtual std::uint64_t vocab_fingerprint() const = 0;

    /// Assumes the query has been validated against this model's vocab.
    virtual PredictionDistribution predict_unchecked(const MaskedQuery& query) const = 0;

    /// Backend-specific checkpoint payload and the JSON describing it.
    virtual nlohmann::json payload_header() const = 0;
    virtual void write_payload(std::ostream& out) const = 0;
};

/// Checks vocab fingerprint and query validity, then delegates to the backend.
PredictionDistribution predict(const MaskedLM& model, const MaskedQuery& query, const Vocab& vocab);

void require_vocab(const MaskedLM& model, const Vocab& vocab);

/// Every token (specials included) equally likely.
class UniformLM final : public MaskedLM {
public:
    explicit UniformLM(const Vocab& vocab);
    UniformLM(std::size_t vocab_size, std::uint64_t fingerprint);

    std::string kind() const override { return "uniform"; }
    std::size_t vocab_size() const override { return size_; }
    std::uint64_t vocab_fingerprint() const override { return fingerprint_; }
    PredictionDistribution predict_unchecked(const MaskedQuery& query) const override;
    nlohmann::json payload_header() const override { return nlohmann::json::object(); }
    void write_payload(std::ostream&) const override {}

private:
    std::size_t size_;
    std::uint64_t fingerprint_;
};

/// Cross-entropy of the gold token in nats: -ln p[gold].
double token_loss(const PredictionDistribution& dist, TokenId gold_id);

/// gold_id == argmax(p); ties resolve to the lowest id.
bool is_correct(const PredictionDistribution& dist, TokenId gold_id);

TokenId argmax_lowest(const PredictionDistribution& dist);

// Checkpoint file layout (all integers little-endian):
//   "CCKP" | u32 version | u32 header length | JSON header | payload
// The header carries {"kind", "vocab_hash", "vocab_size", "config", "seed",
// "payload"}; payload layout depends on kind.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointHeader {
    std::uint32_t version = kCheckpointVersion;
    std::string kind;
    std::uint64_t vocab_hash = 0;
    std::size_t vocab_size = 0;
    nlohmann::json config = nlohmann::json::object();
    std::uint64_t seed = 0;
    nlohmann::json payload = nlohmann::json::object();
};

void save_checkpoint(const std::string& path, const MaskedLM& model, const nlohmann::json& config,
                     std::uint64_t seed);
std::string checkpoint_bytes(const MaskedLM& model, const nlohmann::json& config, std::uint64_t seed);

struct LoadedCheckpoint {
    CheckpointHeader header;
    std::unique_ptr<MaskedLM> model;
};

LoadedCheckpoint load_checkpoint(const std::string& path);
LoadedCheckpoint parse_checkpoint(std::istream& in);

} // namespace clozeaudit
