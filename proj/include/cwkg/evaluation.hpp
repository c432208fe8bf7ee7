#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace cwkg {

inline constexpr std::array<int, 5> kPrecisionCutoffs{1, 5, 10, 20, 50};

/// Mean over relevant positions i of (relevant in top i) / i; 0 without relevant items.
double average_precision(std::span<const int> ranked_labels);
/// 1 / rank of the first relevant item; 0 without one.
double reciprocal_rank(std::span<const int> ranked_labels);
/// Relevant in the top k, divided by k even when the list is shorter.
double precision_at(std::span<const int> ranked_labels, int k);

struct ScoredSentence {
  int line_no = 0;
  double score = 0.0;
  int label = 0;
};

/// Labels ordered by descending score, ties by ascending line number.
std::vector<int> rank_labels(std::span<const ScoredSentence> sentences);

struct RankingMetrics {
  double ap = 0.0;
  double rr = 0.0;
  std::array<double, kPrecisionCutoffs.size()> precision{};
};

struct DebateRanking {
  std::string debate_id;
  std::vector<int> ranked_labels;
};

struct RankingResult {
  std::vector<std::pair<std::string, RankingMetrics>> per_debate;
  RankingMetrics mean;  // arithmetic means over debates (MAP, MRR, mean P@k)
};

RankingResult ranking_metrics(std::span<const DebateRanking> debates);

struct Prf1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Positive-class precision / recall / F1; 0/0 yields 0.
Prf1 prf1(std::span<const int> gold, std::span<const int> predicted);

inline constexpr double kMcNemarCritical01 = 6.635;

struct McNemarResult {
  std::size_t a_only = 0;  // n10: A right, B wrong
  std::size_t b_only = 0;  // n01: A wrong, B right
  double statistic = 0.0;
  bool significant_at_p01 = false;
};

/// Continuity-corrected McNemar chi-square with 1 degree of freedom.
McNemarResult mcnemar(std::span<const bool> a_correct, std::span<const bool> b_correct);

/// Per-sentence facts the breakdown report needs.
struct BreakdownSentence {
  std::string debate_id;
  int gold = 0;
  int predicted = 0;
  std::size_t entities = 0;
};

struct BreakdownRow {
  std::string group;
  std::size_t transcripts = 0;
  std::size_t check_worthy = 0;
  double entities_per_check_worthy = 0.0;
  std::optional<double> recall;  // nullopt when the group has no check-worthy sentence
};

/// One row per group; `grouping` maps every debate id onto a group label.
/// Throws DomainError for a debate the grouping does not cover.
std::vector<BreakdownRow> breakdown_report(std::span<const BreakdownSentence> sentences,
                                           const std::map<std::string, std::string, std::less<>>& grouping);

/// Reads `debate_id<TAB>group` lines.
std::map<std::string, std::string, std::less<>> load_grouping(const std::filesystem::path& path);

/// Simple table with TSV and column-aligned text renderings.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void write_tsv(std::ostream& out) const;
  void write_aligned(std::ostream& out) const;
};

/// Fixed 4-decimal rendering used by every report.
std::string format_metric(double v);

Table ranking_table(const RankingResult& result);
Table breakdown_table(std::span<const BreakdownRow> rows);

}  // namespace cwkg
