#pragma once

#include "clozeaudit/contrast_audit.hpp"
#include "clozeaudit/corpus.hpp"
#include "clozeaudit/lm_core.hpp"

#include <span>
#include <string>
#include <vector>

namespace clozeaudit {

/// Nats to bits. The only place the conversion happens.
double nats_to_bits(double nats);

struct PassageGain {
    std::size_t passage_index = 0;
    std::string passage_id;
    std::string author;
    std::size_t tokens = 0;
    double loss_wiki = 0.0;
    double loss_full = 0.0;
    double gain_nats = 0.0;
    double gain_bits = 0.0;
};

PassageGain make_passage_gain(const Passage& passage, double loss_wiki, double loss_full);

PassageGain passage_gain(const MaskedLM& model_wiki, const MaskedLM& model_full, const Passage& passage,
                         const Vocab& vocab);

/// Per-passage gains from records where A is the wiki model and B the full model.
std::vector<PassageGain> passage_gains(std::span<const TokenLossRecord> records,
                                       std::span<const Passage> passages);

struct CorpusGain {
    double loss_wiki = 0.0;  // token-mean
    double loss_full = 0.0;
    double gain_nats = 0.0;  // token-mean (primary)
    double gain_bits = 0.0;
    double passage_mean_gain_nats = 0.0;
    double passage_mean_gain_bits = 0.0;
    std::size_t tokens = 0;
    std::size_t passages = 0;
};

/// Gain implied by a pair of corpus-level losses.
CorpusGain gain_from_losses(double loss_wiki, double loss_full);

/// Token-mean and passage-mean gains; errors on empty input.
CorpusGain corpus_gain(std::span<const TokenLossRecord> records);
CorpusGain corpus_gain(const MaskedLM& model_wiki, const MaskedLM& model_full,
                       std::span<const Passage> passages, const Vocab& vocab);

struct GainReport {
    CorpusGain corpus;
    std::vector<PassageGain> ranked;   // gain_nats descending, ties by passage index
    std::vector<PassageGain> winners;  // first passage per author, up to max_authors authors
};

inline constexpr std::size_t kDefaultMaxAuthors = 50;

GainReport rank_passages(std::span<const PassageGain> gains, std::size_t max_authors = kDefaultMaxAuthors);

std::string passage_gains_csv(std::span<const PassageGain> gains, std::string_view provenance);
/// Winners with the first `opening_tokens` tokens of each passage.
std::string winners_markdown(const GainReport& report, std::span<const Passage> passages, const Vocab& vocab,
                             std::string_view provenance, std::size_t opening_tokens = 30);

} // namespace clozeaudit
