#include <doctest.h>

#include <memory>
#include <sstream>

#include "cwkg/evaluation.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace cwkg;
using L = std::vector<int>;

namespace {

McNemarResult run_mcnemar(std::size_t a_only, std::size_t b_only, std::size_t both) {
  const std::size_t n = a_only + b_only + both;
  auto a = std::make_unique<bool[]>(n);
  auto b = std::make_unique<bool[]>(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = i < a_only || i >= a_only + b_only;
    b[i] = i >= a_only;
  }
  return mcnemar({a.get(), n}, {b.get(), n});
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("average precision") {
  CHECK(average_precision(L{1, 0, 1}) == doctest::Approx(0.833333).epsilon(1e-6));
  CHECK(average_precision(L{1, 0, 1}) == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-15));
  CHECK(average_precision(L{1, 1, 1}) == 1.0);
  CHECK(average_precision(L{0, 0, 0}) == 0.0);
  CHECK(average_precision(L{}) == 0.0);
}

TEST_CASE("reciprocal rank and precision at k") {
  CHECK(reciprocal_rank(L{0, 1, 0, 1}) == 0.5);
  CHECK(reciprocal_rank(L{0, 0}) == 0.0);
  CHECK(precision_at(L{1, 0, 0, 1, 0, 1}, 5) == 0.4);
  // denominator stays k for short lists
  CHECK(precision_at(L{1, 1}, 5) == 0.4);
}

TEST_CASE("mean over debates") {
  // single relevant sentence at rank 5 (AP 0.2) and at rank 2 (AP 0.5)
  const std::vector<DebateRanking> d{{"a", {0, 0, 0, 0, 1}}, {"b", {0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0}}};
  const auto r = ranking_metrics(d);
  CHECK(r.per_debate[0].second.ap == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(r.per_debate[1].second.ap == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.mean.ap == doctest::Approx(0.35).epsilon(1e-15));
  CHECK(r.mean.rr == doctest::Approx(0.35).epsilon(1e-15));
  CHECK_THROWS_AS(ranking_metrics(std::span<const DebateRanking>{}), DomainError);
}

TEST_CASE("MAP is invariant under permuting debates") {
  Rng rng(4);
  std::vector<DebateRanking> d;
  for (int i = 0; i < 6; ++i) {
    DebateRanking x{"d" + std::to_string(i), {}};
    for (int j = 0; j < 30; ++j) x.ranked_labels.push_back(rng.unit() < 0.2 ? 1 : 0);
    d.push_back(x);
  }
  const auto base = ranking_metrics(d).mean;
  for (int trial = 0; trial < 10; ++trial) {
    rng.shuffle(d.begin(), d.end());
    const auto m = ranking_metrics(d).mean;
    CHECK(m.ap == doctest::Approx(base.ap).epsilon(1e-15));
    CHECK(m.rr == doctest::Approx(base.rr).epsilon(1e-15));
  }
}

TEST_CASE("metrics agree with the brute-force oracle") {
  Rng rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    L labels(rng.index(51));
    const double rate = rng.unit();
    for (auto& y : labels) y = rng.unit() < rate ? 1 : 0;
    CHECK(std::abs(average_precision(labels) - cwkg::testing::brute_average_precision(labels)) <= 1e-12);
    CHECK(std::abs(reciprocal_rank(labels) - cwkg::testing::brute_reciprocal_rank(labels)) <= 1e-12);
    for (int k : kPrecisionCutoffs) {
      CHECK(std::abs(precision_at(labels, k) - cwkg::testing::brute_precision_at(labels, k)) <= 1e-12);
    }
  }
}

TEST_CASE("ranking order: score descending, ties by line number") {
  const std::vector<ScoredSentence> s{{3, 0.5, 1}, {1, 0.9, 0}, {2, 0.5, 0}, {4, 0.1, 1}};
  CHECK(rank_labels(s) == L{0, 0, 1, 1});
  std::vector<ScoredSentence> shuffled{s[2], s[3], s[0], s[1]};
  CHECK(rank_labels(shuffled) == rank_labels(s));
}

TEST_CASE("precision, recall, F1") {
  CHECK(prf1(L{1, 0, 1}, L{1, 0, 1}).f1 == 1.0);
  const auto none = prf1(L{1, 0, 0}, L{0, 0, 0});
  CHECK(none.recall == 0.0);
  CHECK(none.f1 == 0.0);
  // TP 2, FP 2, FN 6
  const L gold{1, 1, 0, 0, 1, 1, 1, 1, 1, 1};
  const L pred{1, 1, 1, 1, 0, 0, 0, 0, 0, 0};
  const auto r = prf1(gold, pred);
  CHECK(r.precision == 0.5);
  CHECK(r.recall == 0.25);
  CHECK(r.f1 == doctest::Approx(0.333333).epsilon(1e-6));
  CHECK_THROWS_AS(prf1(L{1}, L{1, 0}), DomainError);
}

TEST_CASE("McNemar") {
  const auto a = run_mcnemar(10, 2, 5);
  CHECK(a.a_only == 10);
  CHECK(a.b_only == 2);
  CHECK(a.statistic == doctest::Approx(49.0 / 12.0).epsilon(1e-15));
  CHECK_FALSE(a.significant_at_p01);
  const auto b = run_mcnemar(20, 0, 0);
  CHECK(b.statistic == doctest::Approx(18.05).epsilon(1e-15));
  CHECK(b.significant_at_p01);
  CHECK(run_mcnemar(0, 0, 7).statistic == 0.0);
  // symmetric under swapping systems
  CHECK(run_mcnemar(2, 10, 5).statistic == a.statistic);
  bool one[1] = {true};
  bool two[2] = {true, false};
  CHECK_THROWS_AS(mcnemar(one, two), DomainError);
}

TEST_CASE("breakdown report") {
  const std::map<std::string, std::string, std::less<>> grouping{{"d1", "primary"}, {"d2", "primary"}, {"d3", "general"}};
  SUBCASE("hand tally") {
    // d1: two positives (3 and 1 entities), one found; d2: one negative; d3: no positives
    const std::vector<BreakdownSentence> s{
        {"d1", 1, 1, 3}, {"d1", 1, 0, 1}, {"d2", 0, 1, 4}, {"d3", 0, 0, 2}};
    const auto rows = breakdown_report(s, grouping);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].group == "general");
    CHECK(rows[0].transcripts == 1);
    CHECK(rows[0].check_worthy == 0);
    CHECK_FALSE(rows[0].recall.has_value());
    CHECK(rows[1].group == "primary");
    CHECK(rows[1].transcripts == 2);
    CHECK(rows[1].check_worthy == 2);
    CHECK(rows[1].entities_per_check_worthy == 2.0);
    CHECK(rows[1].recall == 0.5);

    std::ostringstream out;
    breakdown_table(rows).write_tsv(out);
    CHECK(out.str().find("general\t1\t0\tn/a\tn/a") != std::string::npos);
  }
  SUBCASE("single group matches corpus totals") {
    const std::map<std::string, std::string, std::less<>> one{{"d1", "all"}, {"d2", "all"}};
    const std::vector<BreakdownSentence> s{{"d1", 1, 1, 2}, {"d2", 1, 1, 2}, {"d2", 0, 0, 0}};
    const auto rows = breakdown_report(s, one);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].transcripts == 2);
    CHECK(rows[0].check_worthy == 2);
    CHECK(rows[0].recall == 1.0);
  }
  SUBCASE("unknown debate") {
    const std::vector<BreakdownSentence> s{{"d9", 1, 1, 2}};
    CHECK_THROWS_AS(breakdown_report(s, grouping), DomainError);
  }
}

TEST_CASE("tables") {
  const std::vector<DebateRanking> d{{"a", {1, 0}}};
  std::ostringstream tsv, txt;
  const auto t = ranking_table(ranking_metrics(d));
  t.write_tsv(tsv);
  t.write_aligned(txt);
  CHECK(tsv.str().starts_with("debate\tAP\tRR\tP@1\tP@5\tP@10\tP@20\tP@50\na\t1.0000\t1.0000\t1.0000\t0.2000"));
  CHECK(tsv.str().find("MEAN\t1.0000") != std::string::npos);
  CHECK(txt.str().find("----") != std::string::npos);
  CHECK(format_metric(0.18214) == "0.1821");
}

TEST_CASE("grouping file") {
  cwkg::testing::TempDir dir;
  cwkg::testing::write_file(dir / "g.tsv", "# debate group\nd1\tprimary\nd2\tgeneral\n");
  const auto g = load_grouping(dir / "g.tsv");
  CHECK(g.size() == 2);
  CHECK(g.at("d2") == "general");
  cwkg::testing::write_file(dir / "bad.tsv", "d1 primary\n");
  CHECK_THROWS_AS(load_grouping(dir / "bad.tsv"), ParseError);
}

}  // TEST_SUITE
