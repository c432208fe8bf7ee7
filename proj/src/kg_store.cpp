#include "cwkg/kg_store.hpp"

#include <algorithm>
#include <deque>

#include "cwkg/common.hpp"
#include "line_reader.hpp"

namespace cwkg {

std::uint32_t Vocabulary::intern(std::string_view name) {
  if (auto it = ids_.find(name); it != ids_.end()) return it->second;
  const auto id = static_cast<std::uint32_t>(names_.size());
  names_.emplace_back(name);
  ids_.emplace(names_.back(), id);
  return id;
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view name) const {
  if (auto it = ids_.find(name); it != ids_.end()) return it->second;
  return std::nullopt;
}

KnowledgeGraph KnowledgeGraph::from_named(std::span<const NamedTriplet> facts) {
  KnowledgeGraph g;
  g.triplets_.reserve(facts.size());
  for (const auto& f : facts) {
    const Triplet t{EntityId{g.entities_.intern(f.head)}, RelationId{g.relations_.intern(f.relation)},
                    EntityId{g.entities_.intern(f.tail)}};
    if (!g.known_.insert(t).second) {
      ++g.duplicates_;
      continue;
    }
    g.triplets_.push_back(t);
  }

  // CSR adjacency, self-loops excluded.
  const std::size_t n = g.entities_.size();
  std::vector<std::vector<EntityId>> lists(n);
  for (const auto& t : g.triplets_) {
    if (t.head == t.tail) continue;
    lists[index_of(t.head)].push_back(t.tail);
    lists[index_of(t.tail)].push_back(t.head);
  }
  g.adjacency_offsets_.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    auto& l = lists[i];
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
    g.adjacency_offsets_[i + 1] = g.adjacency_offsets_[i] + static_cast<std::uint32_t>(l.size());
  }
  g.adjacency_.reserve(g.adjacency_offsets_[n]);
  for (const auto& l : lists) g.adjacency_.insert(g.adjacency_.end(), l.begin(), l.end());
  return g;
}

std::span<const EntityId> KnowledgeGraph::neighbors(EntityId e) const {
  const auto i = index_of(e);
  if (i >= entities_.size()) throw DomainError("entity id " + std::to_string(i) + " out of range");
  return std::span<const EntityId>(adjacency_).subspan(adjacency_offsets_[i],
                                                       adjacency_offsets_[i + 1] - adjacency_offsets_[i]);
}

std::optional<EntityId> KnowledgeGraph::find_entity(std::string_view name) const {
  if (auto id = entities_.find(name)) return EntityId{*id};
  return std::nullopt;
}

std::optional<RelationId> KnowledgeGraph::find_relation(std::string_view name) const {
  if (auto id = relations_.find(name)) return RelationId{*id};
  return std::nullopt;
}

namespace {

template <typename Fn>
void for_each_triplet_line(const std::filesystem::path& path, Fn&& fn) {
  detail::LineReader reader(path);
  std::string line;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto fields = detail::split(line, '\t');
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty()) {
      throw ParseError("malformed triplet at " + reader.where() + ": expected 3 tab-separated fields, got " +
                       std::to_string(fields.size()));
    }
    fn(fields[0], fields[1], fields[2]);
  }
}

}  // namespace

KnowledgeGraph load_triplets(const std::filesystem::path& path) {
  std::vector<NamedTriplet> facts;
  for_each_triplet_line(path, [&](std::string_view h, std::string_view r, std::string_view t) {
    facts.push_back({std::string(h), std::string(r), std::string(t)});
  });
  if (facts.empty()) throw ParseError("empty graph: no triplets in '" + path.string() + "'");
  return KnowledgeGraph::from_named(facts);
}

std::vector<Triplet> resolve_triplets(const KnowledgeGraph& graph, const std::filesystem::path& path,
                                      std::size_t* skipped) {
  std::vector<Triplet> out;
  std::size_t missing = 0;
  for_each_triplet_line(path, [&](std::string_view h, std::string_view r, std::string_view t) {
    const auto head = graph.find_entity(h);
    const auto rel = graph.find_relation(r);
    const auto tail = graph.find_entity(t);
    if (!head || !rel || !tail) {
      ++missing;
      return;
    }
    out.push_back({*head, *rel, *tail});
  });
  if (skipped) *skipped = missing;
  return out;
}

std::optional<int> hop_distance(const KnowledgeGraph& graph, EntityId a, EntityId b, int cap) {
  const std::size_t n = graph.num_entities();
  if (index_of(a) >= n || index_of(b) >= n) throw DomainError("hop_distance: entity id out of range");
  if (cap < 1) throw DomainError("hop_distance: cap must be >= 1");
  if (a == b) return 0;

  std::vector<int> depth(n, -1);
  std::deque<EntityId> frontier{a};
  depth[index_of(a)] = 0;
  while (!frontier.empty()) {
    const EntityId u = frontier.front();
    frontier.pop_front();
    const int du = depth[index_of(u)];
    if (du >= cap) break;
    for (EntityId v : graph.neighbors(u)) {
      if (depth[index_of(v)] >= 0) continue;
      if (v == b) return du + 1;
      depth[index_of(v)] = du + 1;
      frontier.push_back(v);
    }
  }
  return std::nullopt;
}

double neighbor_jaccard(const KnowledgeGraph& graph, EntityId a, EntityId b) {
  const auto na = graph.neighbors(a);
  const auto nb = graph.neighbors(b);
  if (na.empty() && nb.empty()) return 0.0;
  std::size_t common = 0;
  auto i = na.begin();
  auto j = nb.begin();
  while (i != na.end() && j != nb.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++common;
      ++i;
      ++j;
    }
  }
  const std::size_t united = na.size() + nb.size() - common;
  return static_cast<double>(common) / static_cast<double>(united);
}

}  // namespace cwkg
