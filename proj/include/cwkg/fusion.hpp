#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cwkg/common.hpp"
#include "cwkg/kg_embed.hpp"
#include "cwkg/kg_store.hpp"
#include "cwkg/text_features.hpp"

namespace cwkg {

enum class CombinationMethod { EmbProd, EmbConcat, Similarity };

std::string_view to_string(CombinationMethod m);
std::optional<CombinationMethod> parse_combination(std::string_view name);

/// Keys under which a linked URI may appear in an embedding table or graph:
/// the URI itself, its resource title, and the Wikipedia2Vec `ENTITY/` forms
/// (underscored and spaced).
std::vector<std::string> entity_key_candidates(std::string_view uri);

/// Entity vectors from a KG table, with an optional URI -> table key alias map
/// (e.g. DBpedia URI -> Freebase MID).
class EntityEmbeddings {
 public:
  explicit EntityEmbeddings(KgTable table, std::map<std::string, std::string, std::less<>> aliases = {});

  /// Width of one entity vector (2d for ComplEx).
  Index dim() const { return table_.entities.rows(); }
  std::optional<VectorX<double>> lookup(std::string_view uri) const;
  const KgTable& table() const { return table_; }

 private:
  KgTable table_;
  std::map<std::string, std::string, std::less<>> aliases_;
};

/// Reads `uri<TAB>table_key` lines.
std::map<std::string, std::string, std::less<>> load_entity_aliases(const std::filesystem::path& path);

struct Instance {
  std::string sentence_key;
  std::optional<std::string> head_uri;  // nullopt = MISSING
  std::optional<std::string> tail_uri;
  VectorX<double> head_vec;
  VectorX<double> tail_vec;
};

inline constexpr double kPlaceholderValue = -1.0;

using EntityVectorLookup = std::function<std::optional<VectorX<double>>(std::string_view uri)>;

/// Ordered pairs of distinct entities; one (e, MISSING) instance for a single
/// entity and one (MISSING, MISSING) instance for none. Entities without a
/// vector get the all-(-1) placeholder of length `dim`.
std::vector<Instance> build_instances(std::string_view sentence_key, std::span<const std::string> entities,
                                      const EntityVectorLookup& lookup, Index dim);

/// Element-wise product (length d) or head-then-tail concatenation (length 2d).
template <typename H, typename T>
VectorX<typename H::Scalar> combine(const Eigen::MatrixBase<H>& head, const Eigen::MatrixBase<T>& tail,
                                    CombinationMethod method) {
  if (head.size() != tail.size()) throw InvariantError("combine: head and tail lengths differ");
  VectorX<typename H::Scalar> out;
  switch (method) {
    case CombinationMethod::EmbProd:
      out = head.cwiseProduct(tail);
      return out;
    case CombinationMethod::EmbConcat:
      out.resize(head.size() + tail.size());
      out << head, tail;
      return out;
    case CombinationMethod::Similarity: break;
  }
  throw InvariantError("combine: similarity features are not an entity-pair combination");
}

inline VectorX<double> combine(const Instance& inst, CombinationMethod method) {
  return combine(inst.head_vec, inst.tail_vec, method);
}

/// x' = l_rep (+) e_rep, with l_rep kept sparse when it came in sparse.
struct FusedVector {
  std::string sentence_key;
  std::variant<SentenceRep::Dense, SentenceRep::Sparse> language;
  VectorX<double> entity;

  Index language_dim() const;
  Index dim() const { return language_dim() + entity.size(); }
  VectorX<double> dense() const;

  /// kernel . x' touching only the language block's support.
  template <typename Derived>
  double dot(const Eigen::MatrixBase<Derived>& kernel) const {
    const Index l = language_dim();
    double acc = 0.0;
    if (const auto* sp = std::get_if<SentenceRep::Sparse>(&language)) {
      for (SentenceRep::Sparse::InnerIterator it(*sp); it; ++it) acc += it.value() * kernel[it.index()];
    } else {
      acc += std::get<SentenceRep::Dense>(language).dot(kernel.head(l));
    }
    return acc + entity.dot(kernel.segment(l, entity.size()));
  }

  /// target += alpha * x'
  template <typename Derived>
  void add_scaled_to(double alpha, Eigen::MatrixBase<Derived>&& target) const {
    const Index l = language_dim();
    if (const auto* sp = std::get_if<SentenceRep::Sparse>(&language)) {
      for (SentenceRep::Sparse::InnerIterator it(*sp); it; ++it) target[it.index()] += alpha * it.value();
    } else {
      target.head(l) += alpha * std::get<SentenceRep::Dense>(language);
    }
    target.segment(l, entity.size()) += alpha * entity;
  }
};

FusedVector fuse(const SentenceRep& l_rep, VectorX<double> e_rep);

enum class HeadMode { Classification, Ranking };

std::string_view to_string(HeadMode m);
std::optional<HeadMode> parse_head_mode(std::string_view name);

struct HeadConfig {
  double learning_rate = 0.5;
  int epochs = 30;
  int batch_size = 64;
  std::uint64_t seed = 0;
  double l2 = 0.0;
};

/// Fully connected layer over x'. Classification keeps one kernel column and
/// bias per class (2 classes, softmax); ranking keeps one column (sigmoid).
struct FusionHead {
  HeadMode mode = HeadMode::Ranking;
  MatrixX<double> kernel;  // dim x classes
  VectorX<double> bias;    // classes
  HeadConfig config;
  std::array<double, 2> class_weights{1.0, 1.0};

  Index dim() const { return kernel.rows(); }
};

/// All-zero head.
FusionHead make_head(HeadMode mode, Index dim);

/// Classification: softmax over the two class logits. Ranking: [sigmoid(logit)].
VectorX<double> forward(const FusionHead& head, const FusedVector& x);

/// Ranking score, or the positive-class probability for classification.
double instance_score(const FusionHead& head, const FusedVector& x);
/// Classification argmax (ties go to class 0); ranking thresholds at 0.5.
int instance_label(const FusionHead& head, const FusedVector& x);

/// w_c = N / (2 N_c) from sentence-level labels.
std::array<double, 2> class_weights(std::span<const int> labels);

struct HeadGradient {
  double loss = 0.0;
  MatrixX<double> kernel;
  VectorX<double> bias;
};

/// Mean class-weighted (binary) cross-entropy over `batch` plus l2/2 |k|^2.
HeadGradient head_loss_and_grad(const FusionHead& head, std::span<const FusedVector> xs,
                                std::span<const int> labels, std::span<const std::size_t> batch);

/// Minibatch gradient descent from an all-zero head. Deterministic in cfg.
/// Classification requires both classes to be present.
FusionHead train_head(std::span<const FusedVector> xs, std::span<const int> labels, HeadMode mode,
                      const HeadConfig& cfg, const std::array<double, 2>& weights);

/// Max-aggregation over a sentence's instances: the maximum instance score
/// (ranking) or 1 iff any instance predicts the positive class (classification).
double predict_sentence(const FusionHead& head, std::span<const FusedVector> instances);

void save_head(const FusionHead& head, const std::filesystem::path& path);
FusionHead load_head(const std::filesystem::path& path);

using GraphEntityResolver = std::function<std::optional<EntityId>(std::string_view uri)>;

/// Resolver trying entity_key_candidates() against the graph vocabulary.
GraphEntityResolver graph_resolver(const KnowledgeGraph& graph,
                                   const std::map<std::string, std::string, std::less<>>* aliases = nullptr);

/// [max pair similarity, max pair relatedness, |E|] over unordered entity
/// pairs. Similarity is 1/(1 + hop distance), 0 when unreachable within `cap`
/// or absent from the graph; relatedness is neighbour-set Jaccard.
Eigen::Vector3d similarity_features(std::span<const std::string> entities, const KnowledgeGraph& graph,
                                    const GraphEntityResolver& resolve, int cap = kDefaultHopCap);

}  // namespace cwkg
