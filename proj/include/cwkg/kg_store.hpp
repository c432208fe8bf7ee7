#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace cwkg {

enum class EntityId : std::uint32_t {};
enum class RelationId : std::uint32_t {};

constexpr std::uint32_t index_of(EntityId e) { return static_cast<std::uint32_t>(e); }
constexpr std::uint32_t index_of(RelationId r) { return static_cast<std::uint32_t>(r); }

struct Triplet {
  EntityId head{};
  RelationId relation{};
  EntityId tail{};

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

struct TripletHash {
  std::size_t operator()(const Triplet& t) const noexcept {
    std::uint64_t h = index_of(t.head);
    h = h * 0x100000001b3ULL ^ index_of(t.relation);
    h = h * 0x100000001b3ULL ^ index_of(t.tail);
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

using TripletSet = std::unordered_set<Triplet, TripletHash>;

/// Dense name <-> id map; ids follow first-interning order.
class Vocabulary {
 public:
  std::uint32_t intern(std::string_view name);
  std::optional<std::uint32_t> find(std::string_view name) const;
  const std::string& name(std::uint32_t id) const { return names_.at(id); }
  std::size_t size() const { return names_.size(); }
  std::span<const std::string> names() const { return names_; }

 private:
  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const noexcept {
      return std::hash<std::string_view>{}(s);
    }
  };
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t, Hash, std::equal_to<>> ids_;
};

struct NamedTriplet {
  std::string head;
  std::string relation;
  std::string tail;
};

/// Multi-relational graph with an undirected, relation-agnostic adjacency view.
/// Immutable once built.
class KnowledgeGraph {
 public:
  /// Builds from named facts; duplicates are dropped and counted.
  static KnowledgeGraph from_named(std::span<const NamedTriplet> facts);

  const Vocabulary& entities() const { return entities_; }
  const Vocabulary& relations() const { return relations_; }
  std::size_t num_entities() const { return entities_.size(); }
  std::size_t num_relations() const { return relations_.size(); }

  std::span<const Triplet> triplets() const { return triplets_; }
  const TripletSet& triplet_set() const { return known_; }
  bool contains(const Triplet& t) const { return known_.contains(t); }

  /// Sorted, de-duplicated neighbours ignoring direction and relation type.
  std::span<const EntityId> neighbors(EntityId e) const;

  std::optional<EntityId> find_entity(std::string_view name) const;
  std::optional<RelationId> find_relation(std::string_view name) const;

  std::size_t duplicates_dropped() const { return duplicates_; }

 private:
  Vocabulary entities_;
  Vocabulary relations_;
  std::vector<Triplet> triplets_;
  TripletSet known_;
  std::vector<std::uint32_t> adjacency_offsets_;
  std::vector<EntityId> adjacency_;
  std::size_t duplicates_ = 0;
};

/// Reads `head<TAB>relation<TAB>tail` lines.
KnowledgeGraph load_triplets(const std::filesystem::path& path);

/// Reads a held-out split against an existing vocabulary. Lines naming
/// entities or relations the graph does not know are skipped and counted.
std::vector<Triplet> resolve_triplets(const KnowledgeGraph& graph,
                                      const std::filesystem::path& path,
                                      std::size_t* skipped = nullptr);

inline constexpr int kDefaultHopCap = 6;

/// Shortest undirected path length by BFS; nullopt when longer than `cap`
/// or disconnected.
std::optional<int> hop_distance(const KnowledgeGraph& graph, EntityId a, EntityId b,
                                int cap = kDefaultHopCap);

/// |adj(a) ∩ adj(b)| / |adj(a) ∪ adj(b)|; 0 when both are isolated.
double neighbor_jaccard(const KnowledgeGraph& graph, EntityId a, EntityId b);

}  // namespace cwkg
