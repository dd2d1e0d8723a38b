#pragma once

#include "clozeaudit/common.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace clozeaudit {

enum class Source { Base, Fiction };

std::string_view to_string(Source source);
Source source_from_string(std::string_view name);

struct Document {
    std::string id;
    std::string author;
    Source source = Source::Base;
    std::string text;
};

struct Corpus {
    std::string name;
    std::vector<Document> documents;
};

/// Lowercase ASCII letters, split every punctuation character into its own
/// token, drop whitespace. Non-ASCII letters and symbols (e.g. "£") are kept
/// inside words; Unicode punctuation (dashes, curly quotes, ellipsis) splits.
std::vector<std::string> tokenize(std::string_view text);

/// True for the single-character punctuation tokens `tokenize` emits.
bool is_punctuation_token(std::string_view token);

using TokenCounts = std::map<std::string, std::uint64_t>;

TokenCounts count_tokens(std::span<const std::vector<std::string>> documents);

class Vocab {
public:
    static constexpr std::string_view kSpecialTokens[4] = {"[MASK]", "[UNK]", "[BOS]", "[EOS]"};

    Vocab() : Vocab(std::vector<std::string>{}) {}
    /// `regular` holds the non-special tokens in id order (first gets id 4).
    explicit Vocab(std::vector<std::string> regular);

    std::size_t size() const noexcept { return tokens_.size(); }
    const std::string& token_of(TokenId id) const;
    /// Unknown strings map to kUnkId.
    TokenId id_of(std::string_view token) const;
    bool contains(std::string_view token) const;
    std::span<const std::string> tokens() const noexcept { return tokens_; }
    std::uint64_t fingerprint() const noexcept { return fingerprint_; }

    std::vector<TokenId> encode(std::span<const std::string> tokens) const;
    std::vector<std::string> decode(std::span<const TokenId> ids) const;

    /// Newline-delimited token list after a one-line header comment.
    std::string serialize() const;
    static Vocab parse(std::string_view text);

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
    std::uint64_t fingerprint_ = 0;
};

/// Keep tokens with count >= min_count, most frequent first (ties
/// lexicographic), at most max_size - 4 of them, after the four specials.
Vocab build_vocab(const TokenCounts& counts, std::size_t max_size, std::uint64_t min_count);
Vocab build_vocab(std::span<const std::vector<std::string>> documents, std::size_t max_size,
                  std::uint64_t min_count);

struct EncodedDocument {
    std::string id;
    std::string author;
    std::vector<TokenId> ids;
};

std::vector<EncodedDocument> encode_corpus(const Corpus& corpus, const Vocab& vocab);

struct Passage {
    std::size_t index = 0;
    std::string doc_id;
    std::string author;
    std::size_t offset = 0;
    std::vector<TokenId> token_ids;

    std::string id() const;
};

/// Draws n passages of exactly `length` tokens, uniformly (with replacement)
/// over all valid (document, offset) pairs. Documents shorter than `length`
/// are never chosen.
std::vector<Passage> sample_passages(std::span<const EncodedDocument> documents, std::size_t n,
                                     std::size_t length, std::uint64_t seed);

struct CorpusManifest {
    std::string corpus_name;
    std::string split;  // "train" or "test"
    std::uint64_t seed = 0;
    double test_fraction = 0.0;
    std::vector<std::string> document_ids;
    std::size_t document_count = 0;
    std::size_t token_count = 0;
};

struct CorpusSplit {
    CorpusManifest train;
    CorpusManifest test;
};

/// Document-level split: round(test_fraction * n) documents (at least one, at
/// most n - 1) go to test, chosen by a seeded shuffle.
CorpusSplit split_corpus(const Corpus& corpus, double test_fraction, std::uint64_t seed);

/// Subset of `corpus` whose ids appear in `manifest`, in manifest order.
Corpus select_documents(const Corpus& corpus, const CorpusManifest& manifest);

nlohmann::json to_json(const CorpusManifest& manifest);
CorpusManifest manifest_from_json(const nlohmann::json& j);

// Input formats: a directory of "author__title.txt" files, or JSON lines with
// {"id","author","source","text"}.
Corpus load_text_directory(const std::string& path, Source source, std::string name);
Corpus load_jsonl(const std::string& path, std::string name);
Corpus load_corpus(const std::string& path, Source source);

std::string passages_to_jsonl(std::span<const Passage> passages);
std::vector<Passage> passages_from_jsonl(std::string_view text);

} // namespace clozeaudit
