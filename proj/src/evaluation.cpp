#include "cwkg/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "cwkg/common.hpp"
#include "line_reader.hpp"

namespace cwkg {

double average_precision(std::span<const int> ranked_labels) {
  double sum = 0.0;
  std::size_t relevant = 0;
  for (std::size_t i = 0; i < ranked_labels.size(); ++i) {
    if (ranked_labels[i] > 0) {
      ++relevant;
      sum += static_cast<double>(relevant) / static_cast<double>(i + 1);
    }
  }
  return relevant == 0 ? 0.0 : sum / static_cast<double>(relevant);
}

double reciprocal_rank(std::span<const int> ranked_labels) {
  for (std::size_t i = 0; i < ranked_labels.size(); ++i) {
    if (ranked_labels[i] > 0) return 1.0 / static_cast<double>(i + 1);
  }
  return 0.0;
}

double precision_at(std::span<const int> ranked_labels, int k) {
  const auto n = std::min(ranked_labels.size(), static_cast<std::size_t>(k));
  const auto hits = std::count_if(ranked_labels.begin(), ranked_labels.begin() + static_cast<std::ptrdiff_t>(n),
                                  [](int y) { return y > 0; });
  return static_cast<double>(hits) / static_cast<double>(k);
}

std::vector<int> rank_labels(std::span<const ScoredSentence> sentences) {
  std::vector<ScoredSentence> sorted(sentences.begin(), sentences.end());
  std::sort(sorted.begin(), sorted.end(), [](const ScoredSentence& a, const ScoredSentence& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.line_no < b.line_no;
  });
  std::vector<int> out;
  out.reserve(sorted.size());
  for (const auto& s : sorted) out.push_back(s.label);
  return out;
}

RankingResult ranking_metrics(std::span<const DebateRanking> debates) {
  if (debates.empty()) throw DomainError("ranking metrics need at least one debate");
  RankingResult result;
  for (const auto& d : debates) {
    RankingMetrics m;
    m.ap = average_precision(d.ranked_labels);
    m.rr = reciprocal_rank(d.ranked_labels);
    for (std::size_t k = 0; k < kPrecisionCutoffs.size(); ++k) {
      m.precision[k] = precision_at(d.ranked_labels, kPrecisionCutoffs[k]);
    }
    result.per_debate.emplace_back(d.debate_id, m);
    result.mean.ap += m.ap;
    result.mean.rr += m.rr;
    for (std::size_t k = 0; k < m.precision.size(); ++k) result.mean.precision[k] += m.precision[k];
  }
  const auto n = static_cast<double>(debates.size());
  result.mean.ap /= n;
  result.mean.rr /= n;
  for (auto& p : result.mean.precision) p /= n;
  return result;
}

Prf1 prf1(std::span<const int> gold, std::span<const int> predicted) {
  if (gold.size() != predicted.size()) throw DomainError("prf1: gold and predicted lengths differ");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool g = gold[i] > 0, p = predicted[i] > 0;
    if (g && p) ++tp;
    if (!g && p) ++fp;
    if (g && !p) ++fn;
  }
  Prf1 out;
  out.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  out.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  const double denom = out.precision + out.recall;
  out.f1 = denom > 0 ? 2.0 * out.precision * out.recall / denom : 0.0;
  return out;
}

McNemarResult mcnemar(std::span<const bool> a_correct, std::span<const bool> b_correct) {
  if (a_correct.size() != b_correct.size()) throw DomainError("mcnemar: systems scored different sentence counts");
  McNemarResult r;
  for (std::size_t i = 0; i < a_correct.size(); ++i) {
    if (a_correct[i] && !b_correct[i]) ++r.a_only;
    if (!a_correct[i] && b_correct[i]) ++r.b_only;
  }
  const double discordant = static_cast<double>(r.a_only + r.b_only);
  if (discordant == 0.0) return r;
  const double diff = std::abs(static_cast<double>(r.a_only) - static_cast<double>(r.b_only)) - 1.0;
  r.statistic = diff * diff / discordant;
  r.significant_at_p01 = r.statistic > kMcNemarCritical01;
  return r;
}

std::vector<BreakdownRow> breakdown_report(std::span<const BreakdownSentence> sentences,
                                           const std::map<std::string, std::string, std::less<>>& grouping) {
  struct Acc {
    std::set<std::string> debates;
    std::size_t positives = 0;
    std::size_t entities = 0;
    std::size_t hits = 0;
  };
  std::map<std::string, Acc> groups;
  for (const auto& s : sentences) {
    const auto it = grouping.find(s.debate_id);
    if (it == grouping.end()) throw DomainError("no group assigned to debate '" + s.debate_id + "'");
    auto& acc = groups[it->second];
    acc.debates.insert(s.debate_id);
    if (s.gold > 0) {
      ++acc.positives;
      acc.entities += s.entities;
      if (s.predicted > 0) ++acc.hits;
    }
  }
  std::vector<BreakdownRow> rows;
  for (const auto& [name, acc] : groups) {
    BreakdownRow row;
    row.group = name;
    row.transcripts = acc.debates.size();
    row.check_worthy = acc.positives;
    if (acc.positives > 0) {
      row.entities_per_check_worthy = static_cast<double>(acc.entities) / static_cast<double>(acc.positives);
      row.recall = static_cast<double>(acc.hits) / static_cast<double>(acc.positives);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::map<std::string, std::string, std::less<>> load_grouping(const std::filesystem::path& path) {
  detail::LineReader reader(path);
  std::map<std::string, std::string, std::less<>> out;
  std::string line;
  while (reader.next(line)) {
    if (line.empty() || line.front() == '#') continue;
    const auto f = detail::split(line, '\t');
    if (f.size() != 2) throw ParseError("expected 'debate_id<TAB>group' at " + reader.where());
    out.emplace(std::string(f[0]), std::string(f[1]));
  }
  return out;
}

void Table::write_tsv(std::ostream& out) const {
  auto row_out = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "\t" : "") << r[i];
    out << '\n';
  };
  row_out(header);
  for (const auto& r : rows) row_out(r);
}

void Table::write_aligned(std::ostream& out) const {
  std::vector<std::size_t> width(header.size(), 0);
  auto measure = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size() && i < width.size(); ++i) width[i] = std::max(width[i], r[i].size());
  };
  measure(header);
  for (const auto& r : rows) measure(r);
  auto row_out = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      out << (i ? "  " : "") << r[i];
      if (i + 1 < r.size()) out << std::string(width[i] - r[i].size(), ' ');
    }
    out << '\n';
  };
  row_out(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out << std::string(total + 2 * (width.empty() ? 0 : width.size() - 1), '-') << '\n';
  for (const auto& r : rows) row_out(r);
}

std::string format_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

Table ranking_table(const RankingResult& result) {
  Table t;
  t.header = {"debate", "AP", "RR"};
  for (int k : kPrecisionCutoffs) t.header.push_back("P@" + std::to_string(k));
  auto row = [&](const std::string& name, const RankingMetrics& m) {
    std::vector<std::string> r{name, format_metric(m.ap), format_metric(m.rr)};
    for (double p : m.precision) r.push_back(format_metric(p));
    t.rows.push_back(std::move(r));
  };
  for (const auto& [name, m] : result.per_debate) row(name, m);
  row("MEAN", result.mean);
  return t;
}

Table breakdown_table(std::span<const BreakdownRow> rows) {
  Table t;
  t.header = {"group", "transcripts", "check_worthy", "entities_per_check_worthy", "recall"};
  for (const auto& r : rows) {
    t.rows.push_back({r.group, std::to_string(r.transcripts), std::to_string(r.check_worthy),
                      r.check_worthy ? format_metric(r.entities_per_check_worthy) : "n/a",
                      r.recall ? format_metric(*r.recall) : "n/a"});
  }
  return t;
}

}  // namespace cwkg
