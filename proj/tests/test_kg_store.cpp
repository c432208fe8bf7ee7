#include <doctest.h>

#include <set>

#include "cwkg/kg_store.hpp"
#include "support/synthetic.hpp"

using namespace cwkg;
using cwkg::testing::TempDir;
using cwkg::testing::write_file;

namespace {

KnowledgeGraph chain_graph() {
  const std::vector<NamedTriplet> facts{{"A", "r", "B"}, {"B", "r", "C"}, {"X", "r", "Y"}};
  return KnowledgeGraph::from_named(facts);
}

EntityId id(const KnowledgeGraph& g, std::string_view name) { return g.find_entity(name).value(); }

}  // namespace

TEST_SUITE("kg_store") {

TEST_CASE("two lines give three entities, one relation, two triplets") {
  TempDir dir;
  write_file(dir / "g.tsv", "A\tr\tB\nB\tr\tC\n");
  const auto g = load_triplets(dir / "g.tsv");
  CHECK(g.num_entities() == 3);
  CHECK(g.num_relations() == 1);
  CHECK(g.triplets().size() == 2);
  CHECK(g.duplicates_dropped() == 0);
}

TEST_CASE("duplicate line is kept once and reported") {
  TempDir dir;
  write_file(dir / "g.tsv", "A\tr\tB\nA\tr\tB\n");
  const auto g = load_triplets(dir / "g.tsv");
  CHECK(g.triplets().size() == 1);
  CHECK(g.duplicates_dropped() == 1);
}

TEST_CASE("malformed line names its line number") {
  TempDir dir;
  write_file(dir / "g.tsv", "A\tr\tB\nA\tr\n");
  try {
    load_triplets(dir / "g.tsv");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
}

TEST_CASE("empty file is rejected") {
  TempDir dir;
  write_file(dir / "g.tsv", "");
  CHECK_THROWS_AS(load_triplets(dir / "g.tsv"), DataError);
}

TEST_CASE("missing file is a path error") {
  CHECK_THROWS_AS(load_triplets("/nonexistent/graph.tsv"), PathError);
}

TEST_CASE("names re-resolve to the same ids") {
  const auto kg = cwkg::testing::make_synthetic_kg();
  const auto g = KnowledgeGraph::from_named(kg.train);
  for (const auto& t : g.triplets()) {
    CHECK(g.find_entity(g.entities().name(index_of(t.head))) == t.head);
    CHECK(g.find_relation(g.relations().name(index_of(t.relation))) == t.relation);
    CHECK(g.find_entity(g.entities().name(index_of(t.tail))) == t.tail);
  }
}

TEST_CASE("held-out split resolves against the training vocabulary") {
  TempDir dir;
  write_file(dir / "test.tsv", "A\tr\tC\nA\tunknown\tB\nQ\tr\tA\n");
  const auto g = chain_graph();
  std::size_t skipped = 0;
  const auto test = resolve_triplets(g, dir / "test.tsv", &skipped);
  REQUIRE(test.size() == 1);
  CHECK(skipped == 2);
  CHECK(test[0].head == id(g, "A"));
  CHECK(test[0].tail == id(g, "C"));
}

TEST_CASE("hop distance") {
  const auto g = chain_graph();
  CHECK(hop_distance(g, id(g, "A"), id(g, "A")) == 0);
  CHECK(hop_distance(g, id(g, "A"), id(g, "C"), 10) == 2);
  CHECK(hop_distance(g, id(g, "C"), id(g, "A"), 10) == 2);
  CHECK_FALSE(hop_distance(g, id(g, "A"), id(g, "X"), 6).has_value());
  CHECK_FALSE(hop_distance(g, id(g, "A"), id(g, "C"), 1).has_value());
  CHECK_THROWS_AS(hop_distance(g, EntityId{99}, id(g, "A")), DomainError);
}

TEST_CASE("neighbours ignore direction and relation type") {
  const std::vector<NamedTriplet> facts{{"A", "r", "B"}, {"C", "s", "A"}, {"A", "s", "B"}};
  const auto g = KnowledgeGraph::from_named(facts);
  const auto n = g.neighbors(id(g, "A"));
  CHECK(std::set<EntityId>(n.begin(), n.end()) == std::set<EntityId>{id(g, "B"), id(g, "C")});
  CHECK(n.size() == 2);
}

TEST_CASE("hop distance is symmetric and obeys the triangle inequality") {
  const auto kg = cwkg::testing::make_synthetic_kg();
  const auto g = KnowledgeGraph::from_named(kg.train);
  Rng rng(3);
  const auto n = g.num_entities();
  auto pick = [&] { return EntityId{static_cast<std::uint32_t>(rng.index(n))}; };
  int triangles = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto a = pick(), b = pick(), c = pick();
    CHECK(hop_distance(g, a, b) == hop_distance(g, b, a));
    const auto ab = hop_distance(g, a, b), bc = hop_distance(g, b, c), ac = hop_distance(g, a, c);
    if (ab && bc && ac) {
      CHECK(*ac <= *ab + *bc);
      ++triangles;
    }
  }
  CHECK(triangles > 100);
}

TEST_CASE("neighbour jaccard") {
  const std::vector<NamedTriplet> facts{{"A", "r", "X"}, {"A", "r", "Y"}, {"B", "r", "X"}, {"B", "r", "Y"},
                                        {"C", "r", "X"}};
  const auto g = KnowledgeGraph::from_named(facts);
  CHECK(neighbor_jaccard(g, id(g, "A"), id(g, "B")) == 1.0);
  CHECK(neighbor_jaccard(g, id(g, "A"), id(g, "C")) == doctest::Approx(0.5));
  CHECK(neighbor_jaccard(g, id(g, "X"), id(g, "Y")) == doctest::Approx(2.0 / 3.0));
}

}  // TEST_SUITE
