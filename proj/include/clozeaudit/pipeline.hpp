#pragma once

// End-to-end driver: every command reads its inputs from the run directory
// and writes its outputs there, so commands can run as separate processes.

#include "clozeaudit/contrast_audit.hpp"
#include "clozeaudit/corpus.hpp"
#include "clozeaudit/gsn_sampler.hpp"
#include "clozeaudit/infogain.hpp"
#include "clozeaudit/neural_backend.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <string>
#include <vector>

namespace clozeaudit {

enum class Role { Wiki, Full };

std::string_view to_string(Role role);
Role role_from_string(std::string_view name);

/// Environment variable that, when set, prefixes a relative output_dir.
inline constexpr const char* kOutputRootEnv = "CLOZEAUDIT_OUTPUT_ROOT";

struct PipelineConfig {
    std::string base_corpus;
    std::string fiction_corpus;
    /// Base training tokens per fiction token in the Full-analog mixture.
    double mixture_ratio = 3.0;

    std::size_t vocab_max_size = 16384;
    std::uint64_t vocab_min_count = 2;

    double test_fraction = 0.1;
    std::size_t base_test_passages = 500;
    std::size_t fiction_test_passages = 500;
    std::size_t passage_length = 100;

    std::string wiki_backend = "neural";
    std::string full_backend = "neural";
    double count_alpha = 1.0;
    ModelConfig neural;   // vocab_size is taken from the built vocab
    TrainConfig train;    // seed is derived from the master seed
    SamplerConfig sampler;  // seed is derived from the master seed

    std::size_t min_instances = kDefaultMinInstances;
    std::size_t worst_limit = 5;
    std::size_t max_authors = kDefaultMaxAuthors;
    std::size_t opening_tokens = 30;

    std::string output_dir = "runs/default";
    std::uint64_t seed = 20240501;

    /// "key.path=value" strings applied on top of the file, kept for the echo.
    std::vector<std::string> overrides;

    const std::string& backend(Role role) const { return role == Role::Wiki ? wiki_backend : full_backend; }
    void validate() const;
    nlohmann::json to_json() const;
    static PipelineConfig from_json(const nlohmann::json& j);
    /// FNV-1a of the canonical (sorted-key, compact) JSON echo.
    std::string hash() const;
};

/// Applies one "a.b.c=value" override; value is parsed as JSON when it is
/// valid JSON and taken as a string otherwise.
void apply_override(nlohmann::json& j, std::string_view assignment);

/// Reads a config file, applies overrides, and resolves relative corpus paths
/// against the config file's directory.
PipelineConfig load_pipeline_config(const std::string& path, const std::vector<std::string>& overrides = {});

/// Named child seeds of the master seed.
struct RunSeeds {
    std::uint64_t split_base, split_fiction, passages_base, passages_fiction, train, sampler;
    static RunSeeds derive(std::uint64_t master);
    nlohmann::json to_json() const;
};

struct MixturePlan {
    std::uint64_t base_tokens = 0;
    std::uint64_t fiction_budget = 0;  // floor(base_tokens / ratio)
    std::uint64_t fiction_tokens = 0;  // min(budget, available)
    /// Per fiction document (in input order): tokens taken, possibly 0 or a prefix.
    std::vector<std::uint64_t> taken;
};

/// Takes fiction documents in order until the budget is met, truncating the
/// last one. Errors on a non-positive ratio.
MixturePlan plan_mixture(std::uint64_t base_tokens, std::span<const std::uint64_t> fiction_doc_tokens,
                         double ratio);

/// Artifact locations inside a run directory.
struct RunPaths {
    std::string root;
    std::string config() const { return root + "/config.json"; }
    std::string base_manifest() const { return root + "/prepare/base_manifest.json"; }
    std::string fiction_manifest() const { return root + "/prepare/fiction_manifest.json"; }
    std::string mixture_manifest() const { return root + "/prepare/mixture_manifest.json"; }
    std::string vocab() const { return root + "/prepare/vocab.txt"; }
    std::string base_passages() const { return root + "/prepare/base_test_passages.jsonl"; }
    std::string fiction_passages() const { return root + "/prepare/fiction_test_passages.jsonl"; }
    std::string checkpoint(Role r) const { return root + "/models/" + std::string(to_string(r)) + ".cckp"; }
    std::string train_log(Role r) const { return root + "/models/" + std::string(to_string(r)) + "_train_log.csv"; }
    std::string base_records() const { return root + "/audit/base_records.csv"; }
    std::string type_stats() const { return root + "/audit/type_stats.csv"; }
    std::string improved_types() const { return root + "/audit/improved_types.md"; }
    std::string audit_summary() const { return root + "/audit/summary.json"; }
    std::string samples_jsonl(Role r) const { return root + "/generate/" + std::string(to_string(r)) + "_samples.jsonl"; }
    std::string samples_text(Role r) const { return root + "/generate/" + std::string(to_string(r)) + "_samples.txt"; }
    std::string fiction_records() const { return root + "/rank/fiction_records.csv"; }
    std::string passage_gains() const { return root + "/rank/passage_gains.csv"; }
    std::string winners() const { return root + "/rank/winners.md"; }
    std::string rank_summary() const { return root + "/rank/summary.json"; }
    std::string run_summary() const { return root + "/run_summary.json"; }
};

/// Output directory after applying the output-root environment variable.
std::string resolve_output_dir(const PipelineConfig& config);

/// Progress lines (stderr in the CLI); may be empty.
using Logger = std::function<void(const std::string&)>;

class Pipeline {
public:
    explicit Pipeline(PipelineConfig config, Logger log = {});

    const PipelineConfig& config() const noexcept { return config_; }
    const RunPaths& paths() const noexcept { return paths_; }
    const RunSeeds& seeds() const noexcept { return seeds_; }
    /// "clozeaudit <version> config=<hash> seed=<seed>" plus the config echo.
    std::string provenance() const;

    void prepare();
    void train(Role role);
    void audit();
    void generate(Role role);
    void rank();
    void report();
    /// Every command in dependency order.
    void run_all();

private:
    Vocab load_vocab() const;
    LoadedCheckpoint load_model(Role role, const Vocab& vocab) const;
    std::vector<EncodedDocument> training_documents(Role role, const Vocab& vocab) const;
    void say(const std::string& line) const;

    PipelineConfig config_;
    RunPaths paths_;
    RunSeeds seeds_;
    Logger log_;
};

} // namespace clozeaudit
