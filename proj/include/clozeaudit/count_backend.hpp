#pragma once

#include "clozeaudit/lm_core.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <unordered_map>
#include <vector>

namespace clozeaudit {

/// Unigram, neighbor-bigram and neighbor-trigram tallies for the cloze
/// setting. Each document is padded with BOS/EOS; boundary tokens act as
/// contexts only and never enter the unigram counts or N.
class CountTables {
public:
    struct Entry {
        TokenId w;
        std::uint64_t count;
    };

    CountTables() = default;
    CountTables(std::size_t vocab_size, double alpha);

    void add_document(std::span<const TokenId> ids);
    /// Adds `count` occurrences of the trigram (left, w, right).
    void add_trigram(TokenId left, TokenId w, TokenId right, std::uint64_t count = 1);

    std::size_t vocab_size() const noexcept { return unigram_.size(); }
    double alpha() const noexcept { return alpha_; }
    std::uint64_t total() const noexcept { return total_; }

    std::uint64_t unigram(TokenId w) const { return unigram_.at(w); }
    std::uint64_t left_bigram(TokenId left, TokenId w) const;
    std::uint64_t right_bigram(TokenId w, TokenId right) const;
    std::uint64_t trigram(TokenId left, TokenId w, TokenId right) const;
    /// c(l, ., r): occurrences of any token between left and right.
    std::uint64_t context_total(TokenId left, TokenId right) const;
    std::span<const Entry> context_entries(TokenId left, TokenId right) const;

    /// Token ids the model can predict: every regular id, plus UNK once UNK
    /// has been observed.
    std::vector<TokenId> support() const;
    /// Add-one unigram backoff (c(w) + 1) / (N + |support|), zero off support.
    const Eigen::VectorXd& backoff() const;

    std::vector<std::pair<std::array<TokenId, 2>, std::uint64_t>> sorted_left_bigrams() const;
    std::vector<std::pair<std::array<TokenId, 2>, std::uint64_t>> sorted_right_bigrams() const;
    std::vector<std::pair<std::array<TokenId, 3>, std::uint64_t>> sorted_trigrams() const;

private:
    static std::uint64_t pack(TokenId a, TokenId b) { return (std::uint64_t{a} << 32) | b; }
    void check_id(TokenId id) const;
    void refresh_backoff() const;

    double alpha_ = 1.0;
    std::uint64_t total_ = 0;
    std::vector<std::uint64_t> unigram_;
    std::unordered_map<std::uint64_t, std::uint64_t> left_bigram_;
    std::unordered_map<std::uint64_t, std::uint64_t> right_bigram_;
    // (left, right) -> middle tokens sorted by id, and their sum.
    std::unordered_map<std::uint64_t, std::vector<Entry>> contexts_;
    std::unordered_map<std::uint64_t, std::uint64_t> context_totals_;
    mutable Eigen::VectorXd backoff_;
    mutable bool backoff_dirty_ = true;
};

CountTables fit_counts(std::span<const std::vector<TokenId>> documents, std::size_t vocab_size,
                       double alpha);
CountTables fit_counts(std::span<const EncodedDocument> documents, std::size_t vocab_size,
                       double alpha);

/// P(w | l, r) = (c(l,w,r) + alpha * P_u(w)) / (c(l,.,r) + alpha).
PredictionDistribution predict_count(const CountTables& tables, const MaskedQuery& query);

class CountModel final : public MaskedLM {
public:
    CountModel(CountTables tables, std::uint64_t vocab_fingerprint);

    std::string kind() const override { return "count"; }
    std::size_t vocab_size() const override { return tables_.vocab_size(); }
    std::uint64_t vocab_fingerprint() const override { return fingerprint_; }
    PredictionDistribution predict_unchecked(const MaskedQuery& query) const override;
    nlohmann::json payload_header() const override;
    void write_payload(std::ostream& out) const override;

    const CountTables& tables() const noexcept { return tables_; }

    // Payload: f64 alpha, then four runs (unigram, left bigram, right bigram,
    // trigram), each a u64 entry count followed by entries of u32 ids and a
    // u64 count, sorted by id tuple.
    static CountModel read_payload(std::istream& in, std::size_t vocab_size,
                                   std::uint64_t vocab_fingerprint);

private:
    CountTables tables_;
    std::uint64_t fingerprint_;
};

} // namespace clozeaudit
