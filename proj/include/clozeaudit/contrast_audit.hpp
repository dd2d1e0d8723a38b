#pragma once

#include "clozeaudit/corpus.hpp"
#include "clozeaudit/lm_core.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace clozeaudit {

/// One masked position scored by both models.
struct TokenLossRecord {
    std::size_t passage_index = 0;
    std::size_t position = 0;
    TokenId gold = 0;
    double loss_a = 0.0;
    double loss_b = 0.0;
    bool correct_a = false;
    bool correct_b = false;
};

enum class Which { A, B };

/// (passages finished, passages total); called serially.
using EvaluationProgress = std::function<void(std::size_t, std::size_t)>;

/// Masks every position of every passage in turn and queries both models.
/// Records come out in passage order, then position order. Passages are
/// scored in parallel across hardware threads.
std::vector<TokenLossRecord> evaluate_pair(const MaskedLM& model_a, const MaskedLM& model_b,
                                           std::span<const Passage> passages, const Vocab& vocab,
                                           const EvaluationProgress& progress = {});

double accuracy(std::span<const TokenLossRecord> records, Which which);
double mean_loss(std::span<const TokenLossRecord> records, Which which);
/// Mean of loss_a - loss_b over all records.
double global_mean_delta(std::span<const TokenLossRecord> records);

// Student-t machinery.
/// Regularized incomplete beta I_x(a, b) by continued fraction.
double regularized_incomplete_beta(double a, double b, double x);
/// P(|T| >= |t|) for T ~ Student-t with df degrees of freedom.
double student_t_two_sided_p(double t, double df);

struct PairedTTest {
    std::size_t n = 0;
    double mean = 0.0;
    double sd = 0.0;
    double t = 0.0;
    double p = 1.0;
    bool degenerate_variance = false;
};

/// Two-sided paired t-test on differences d (n >= 2). Zero variance gives
/// p = 1 for a zero mean and p = 0 (flagged degenerate) otherwise.
PairedTTest paired_t_test(std::span<const double> differences);

double bonferroni(double p, std::size_t tests);

struct TypeStats {
    TokenId type = 0;
    std::size_t n = 0;
    double mean_delta = 0.0;  // mean(loss_a - loss_b); positive means model B is better
    double t_statistic = 0.0;
    double p_value = 1.0;
    double p_adjusted = 1.0;
    bool significant = false;
    bool degenerate_variance = false;
};

inline constexpr double kSignificanceLevel = 0.05;
inline constexpr std::size_t kDefaultMinInstances = 30;

/// Paired t-test per gold type (UNK and specials excluded, types with fewer
/// than min_n instances dropped) with Bonferroni over the types tested.
/// Output ordered by type id.
std::vector<TypeStats> per_type_test(std::span<const TokenLossRecord> records,
                                     std::size_t min_n = kDefaultMinInstances);

struct ImprovedTypesReport {
    std::vector<TypeStats> improved;  // significant, mean_delta > 0, descending
    std::vector<TypeStats> worst;     // significant, mean_delta < 0, most negative first
    std::size_t types_tested = 0;
};

ImprovedTypesReport improved_types_report(std::span<const TypeStats> stats, std::size_t worst_limit = 5);

std::string records_csv(std::span<const TokenLossRecord> records, std::span<const Passage> passages,
                        const Vocab& vocab, std::string_view provenance);
std::string type_stats_csv(std::span<const TypeStats> stats, const Vocab& vocab,
                           std::string_view provenance);
std::string improved_types_markdown(const ImprovedTypesReport& report, const Vocab& vocab,
                                    std::string_view model_a, std::string_view model_b,
                                    std::string_view provenance);

/// Fixed reference figures from the full-scale experiment. Not desk-scale
/// targets; kept for side-by-side display in reports.
namespace reference {
inline constexpr double kWikiAccuracyOnWiki = 0.65;
inline constexpr double kFullAccuracyOnWiki = 0.63;
inline constexpr double kWikiAccuracyOnFiction = 0.54;
inline constexpr double kFullAccuracyOnFiction = 0.66;
inline constexpr double kWikiLossOnWiki = 1.72;
inline constexpr double kFullLossOnWiki = 1.88;
inline constexpr double kWikiLossOnFiction = 2.38;
inline constexpr double kFullLossOnFiction = 1.66;
inline constexpr double kReportedGainNats = 0.71;
inline constexpr double kReportedGainBits = 1.03;
} // namespace reference

} // namespace clozeaudit
