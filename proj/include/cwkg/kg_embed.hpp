#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cwkg/common.hpp"
#include "cwkg/kg_store.hpp"

namespace cwkg {

enum class KgModelKind { TransE, TransR, Rescal, DistMult, ComplEx };

inline constexpr std::array<KgModelKind, 5> kAllKgModels{KgModelKind::TransE, KgModelKind::TransR,
                                                         KgModelKind::Rescal, KgModelKind::DistMult,
                                                         KgModelKind::ComplEx};

/// Upper-case tag used in file metadata ("TRANSE", "COMPLEX", ...).
std::string_view to_string(KgModelKind kind);
/// Case-insensitive inverse of to_string.
std::optional<KgModelKind> parse_kg_model(std::string_view name);

constexpr bool is_translational(KgModelKind k) {
  return k == KgModelKind::TransE || k == KgModelKind::TransR;
}
constexpr bool has_relation_map(KgModelKind k) {
  return k == KgModelKind::TransR || k == KgModelKind::Rescal;
}
constexpr Index entity_width(KgModelKind k, Index d) { return k == KgModelKind::ComplEx ? 2 * d : d; }
constexpr Index relation_vector_width(KgModelKind k, Index d) {
  switch (k) {
    case KgModelKind::Rescal: return 0;
    case KgModelKind::ComplEx: return 2 * d;
    default: return d;
  }
}

/// Entity and relation parameters of one KG embedding model.
///
/// Entities are stored column-wise (one column per entity). ComplEx stores the
/// real parts in the first `dim` rows and the imaginary parts in the last `dim`.
/// A table without `kind` is a plain entity lookup (e.g. pretrained
/// Wikipedia2Vec vectors) and cannot score triplets.
template <typename Scalar>
struct EmbeddingTable {
  std::optional<KgModelKind> kind;
  Index dim = 0;
  MatrixX<Scalar> entities;
  MatrixX<Scalar> relations;
  std::vector<MatrixX<Scalar>> relation_maps;
  std::vector<std::string> entity_names;
  std::vector<std::string> relation_names;

  auto entity(EntityId e) const { return entities.col(index_of(e)); }
  auto relation(RelationId r) const { return relations.col(index_of(r)); }
  const MatrixX<Scalar>& relation_map(RelationId r) const { return relation_maps[index_of(r)]; }

  std::size_t num_entities() const { return static_cast<std::size_t>(entities.cols()); }
  std::size_t num_relations() const { return relation_names.size(); }

  std::optional<EntityId> find_entity(std::string_view name) const {
    if (entity_lookup_.size() != entity_names.size()) rebuild_lookup();
    if (auto it = entity_lookup_.find(std::string(name)); it != entity_lookup_.end()) return EntityId{it->second};
    return std::nullopt;
  }

  /// Throws InvariantError unless every tensor has the shape `kind` demands.
  void check_shapes() const {
    const Index ew = kind ? entity_width(*kind, dim) : dim;
    if (entities.rows() != ew || static_cast<std::size_t>(entities.cols()) != entity_names.size()) {
      throw InvariantError("entity parameter shape does not match table kind");
    }
    if (!kind) return;
    const auto nr = static_cast<Index>(relation_names.size());
    const Index rw = relation_vector_width(*kind, dim);
    if (rw > 0 && (relations.rows() != rw || relations.cols() != nr)) {
      throw InvariantError("relation vector shape does not match table kind");
    }
    if (has_relation_map(*kind)) {
      if (static_cast<Index>(relation_maps.size()) != nr) throw InvariantError("missing relation matrices");
      for (const auto& m : relation_maps) {
        if (m.rows() != dim || m.cols() != dim) throw InvariantError("relation matrix is not d x d");
      }
    }
  }

 private:
  void rebuild_lookup() const {
    entity_lookup_.clear();
    for (std::size_t i = 0; i < entity_names.size(); ++i) {
      entity_lookup_.emplace(entity_names[i], static_cast<std::uint32_t>(i));
    }
  }
  mutable std::unordered_map<std::string, std::uint32_t> entity_lookup_;
};

using KgTable = EmbeddingTable<double>;

namespace scoring {

template <typename H, typename R, typename T>
typename H::Scalar transe(const Eigen::MatrixBase<H>& h, const Eigen::MatrixBase<R>& r,
                          const Eigen::MatrixBase<T>& t) {
  return -(h + r - t).norm();
}

// Same association order as transe() so an identity map reproduces it bit for bit.
template <typename H, typename R, typename M, typename T>
typename H::Scalar transr(const Eigen::MatrixBase<H>& h, const Eigen::MatrixBase<R>& r,
                          const Eigen::MatrixBase<M>& map, const Eigen::MatrixBase<T>& t) {
  using Vec = VectorX<typename H::Scalar>;
  const Vec ph = map * h;
  const Vec pt = map * t;
  return -(ph + r - pt).norm();
}

template <typename H, typename M, typename T>
typename H::Scalar rescal(const Eigen::MatrixBase<H>& h, const Eigen::MatrixBase<M>& map,
                          const Eigen::MatrixBase<T>& t) {
  return h.dot(map * t);
}

template <typename H, typename R, typename T>
typename H::Scalar distmult(const Eigen::MatrixBase<H>& h, const Eigen::MatrixBase<R>& r,
                            const Eigen::MatrixBase<T>& t) {
  // h*t first: commutes exactly, so swapping head and tail cannot change a bit
  return (h.array() * t.array() * r.array()).sum();
}

/// Re(<h, r, conj(t)>) on [real; imag] stacked vectors.
template <typename H, typename R, typename T>
typename H::Scalar complex(const Eigen::MatrixBase<H>& h, const Eigen::MatrixBase<R>& r,
                           const Eigen::MatrixBase<T>& t) {
  const Index d = h.size() / 2;
  const auto hr = h.head(d).array(), hi = h.tail(d).array();
  const auto rr = r.head(d).array(), ri = r.tail(d).array();
  const auto tr = t.head(d).array(), ti = t.tail(d).array();
  return (hr * rr * tr + hi * rr * ti + hr * ri * ti - hi * ri * tr).sum();
}

}  // namespace scoring

/// Plausibility of a triplet; higher is more plausible for every model.
template <typename Scalar>
Scalar score(const EmbeddingTable<Scalar>& table, const Triplet& t) {
  if (!table.kind) throw InvariantError("cannot score triplets with a kind-less table");
  const auto h = table.entity(t.head);
  const auto e = table.entity(t.tail);
  switch (*table.kind) {
    case KgModelKind::TransE: return scoring::transe(h, table.relation(t.relation), e);
    case KgModelKind::TransR:
      return scoring::transr(h, table.relation(t.relation), table.relation_map(t.relation), e);
    case KgModelKind::Rescal: return scoring::rescal(h, table.relation_map(t.relation), e);
    case KgModelKind::DistMult: return scoring::distmult(h, table.relation(t.relation), e);
    case KgModelKind::ComplEx: return scoring::complex(h, table.relation(t.relation), e);
  }
  throw InvariantError("unknown model kind");
}

/// Gradient restricted to the parameters a set of triplets touches.
template <typename Scalar>
struct SparseGradient {
  std::map<std::uint32_t, VectorX<Scalar>> entities;
  std::map<std::uint32_t, VectorX<Scalar>> relations;
  std::map<std::uint32_t, MatrixX<Scalar>> relation_maps;

  VectorX<Scalar>& entity(std::uint32_t id, Index width) {
    auto [it, inserted] = entities.try_emplace(id);
    if (inserted) it->second.setZero(width);
    return it->second;
  }
  VectorX<Scalar>& relation(std::uint32_t id, Index width) {
    auto [it, inserted] = relations.try_emplace(id);
    if (inserted) it->second.setZero(width);
    return it->second;
  }
  MatrixX<Scalar>& relation_map(std::uint32_t id, Index d) {
    auto [it, inserted] = relation_maps.try_emplace(id);
    if (inserted) it->second.setZero(d, d);
    return it->second;
  }

  void add(const SparseGradient& other) {
    for (const auto& [id, g] : other.entities) entity(id, g.size()) += g;
    for (const auto& [id, g] : other.relations) relation(id, g.size()) += g;
    for (const auto& [id, g] : other.relation_maps) relation_map(id, g.rows()) += g;
  }
};

/// Adds coeff * d score(t) / d theta into `grad`.
template <typename Scalar>
void add_score_gradient(const EmbeddingTable<Scalar>& table, const Triplet& t, Scalar coeff,
                        SparseGradient<Scalar>& grad) {
  using Vec = VectorX<Scalar>;
  const auto kind = table.kind.value();
  const Index d = table.dim;
  const auto hi = index_of(t.head), ti = index_of(t.tail), ri = index_of(t.relation);
  const auto h = table.entity(t.head);
  const auto e = table.entity(t.tail);
  const Index ew = entity_width(kind, d);

  switch (kind) {
    case KgModelKind::TransE: {
      const Vec v = h + table.relation(t.relation) - e;
      const Scalar n = v.norm();
      if (n == Scalar(0)) return;
      const Vec g = -coeff * v / n;
      grad.entity(hi, ew) += g;
      grad.relation(ri, d) += g;
      grad.entity(ti, ew) -= g;
      return;
    }
    case KgModelKind::TransR: {
      const auto& m = table.relation_map(t.relation);
      const Vec v = m * h + table.relation(t.relation) - m * e;
      const Scalar n = v.norm();
      if (n == Scalar(0)) return;
      const Vec g = -coeff * v / n;
      const Vec back = m.transpose() * g;
      grad.entity(hi, ew) += back;
      grad.entity(ti, ew) -= back;
      grad.relation(ri, d) += g;
      grad.relation_map(ri, d) += g * (h - e).transpose();
      return;
    }
    case KgModelKind::Rescal: {
      const auto& m = table.relation_map(t.relation);
      grad.entity(hi, ew) += coeff * (m * e);
      grad.entity(ti, ew) += coeff * (m.transpose() * h);
      grad.relation_map(ri, d) += coeff * (h * e.transpose());
      return;
    }
    case KgModelKind::DistMult: {
      const auto r = table.relation(t.relation);
      grad.entity(hi, ew) += coeff * r.cwiseProduct(e);
      grad.relation(ri, d) += coeff * h.cwiseProduct(e);
      grad.entity(ti, ew) += coeff * h.cwiseProduct(r);
      return;
    }
    case KgModelKind::ComplEx: {
      const auto r = table.relation(t.relation);
      const auto hr = h.head(d).array(), hm = h.tail(d).array();
      const auto rr = r.head(d).array(), rm = r.tail(d).array();
      const auto tr = e.head(d).array(), tm = e.tail(d).array();
      Vec gh(2 * d), gr(2 * d), gt(2 * d);
      gh.head(d) = rr * tr + rm * tm;
      gh.tail(d) = rr * tm - rm * tr;
      gr.head(d) = hr * tr + hm * tm;
      gr.tail(d) = hr * tm - hm * tr;
      gt.head(d) = hr * rr - hm * rm;
      gt.tail(d) = hm * rr + hr * rm;
      grad.entity(hi, ew) += coeff * gh;
      grad.relation(ri, 2 * d) += coeff * gr;
      grad.entity(ti, ew) += coeff * gt;
      return;
    }
  }
}

struct TrainConfig {
  Index dim = 200;
  int epochs = 200;
  double learning_rate = 0.05;
  double margin = 1.0;
  int negatives_per_positive = 10;
  int batch_size = 512;
  std::uint64_t seed = 0;
  double regularization = 1e-5;
};

/// Numerically stable log(1 + exp(x)).
template <typename Scalar>
Scalar softplus(Scalar x) {
  using std::exp;
  using std::log1p;
  return x > Scalar(0) ? x + log1p(exp(-x)) : log1p(exp(x));
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  using std::exp;
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-x));
  const Scalar z = exp(x);
  return z / (Scalar(1) + z);
}

template <typename Scalar>
struct LossAndGradient {
  Scalar loss = Scalar(0);
  SparseGradient<Scalar> grad;
};

/// Per-positive training objective.
///
/// Translational models: sum over negatives of max(0, margin + s(neg) - s(pos)).
/// Bilinear models: log(1+exp(-s(pos))) + sum log(1+exp(s(neg))) plus
/// `regularization` * squared L2 norm of every distinct touched parameter block.
template <typename Scalar>
Scalar accumulate_loss_and_grad(const EmbeddingTable<Scalar>& table, const Triplet& positive,
                                std::span<const Triplet> negatives, const TrainConfig& cfg,
                                SparseGradient<Scalar>& grad) {
  if (negatives.empty()) throw InvariantError("loss_and_grad needs at least one negative");
  const auto kind = table.kind.value();
  Scalar loss = Scalar(0);

  if (is_translational(kind)) {
    const Scalar pos = score(table, positive);
    for (const auto& neg : negatives) {
      const Scalar violation = Scalar(cfg.margin) + score(table, neg) - pos;
      if (violation <= Scalar(0)) continue;
      loss += violation;
      add_score_gradient(table, neg, Scalar(1), grad);
      add_score_gradient(table, positive, Scalar(-1), grad);
    }
    return loss;
  }

  const Scalar pos = score(table, positive);
  loss += softplus(-pos);
  add_score_gradient(table, positive, -sigmoid(-pos), grad);
  for (const auto& neg : negatives) {
    const Scalar s = score(table, neg);
    loss += softplus(s);
    add_score_gradient(table, neg, sigmoid(s), grad);
  }

  const Scalar reg = Scalar(cfg.regularization);
  if (reg > Scalar(0)) {
    const Index ew = entity_width(kind, table.dim);
    std::vector<std::uint32_t> touched{index_of(positive.head), index_of(positive.tail)};
    for (const auto& neg : negatives) {
      touched.push_back(index_of(neg.head));
      touched.push_back(index_of(neg.tail));
    }
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    for (auto id : touched) {
      const auto v = table.entities.col(id);
      loss += reg * v.squaredNorm();
      grad.entity(id, ew) += Scalar(2) * reg * v;
    }
    const auto ri = index_of(positive.relation);
    if (kind == KgModelKind::Rescal) {
      const auto& m = table.relation_maps[ri];
      loss += reg * m.squaredNorm();
      grad.relation_map(ri, table.dim) += Scalar(2) * reg * m;
    } else {
      const auto r = table.relations.col(ri);
      loss += reg * r.squaredNorm();
      grad.relation(ri, r.size()) += Scalar(2) * reg * r;
    }
  }
  return loss;
}

template <typename Scalar>
LossAndGradient<Scalar> loss_and_grad(const EmbeddingTable<Scalar>& table, const Triplet& positive,
                                      std::span<const Triplet> negatives, const TrainConfig& cfg) {
  LossAndGradient<Scalar> out;
  out.loss = accumulate_loss_and_grad(table, positive, negatives, cfg, out.grad);
  return out;
}

/// Seeded initialization: uniform in [-6/sqrt(d), 6/sqrt(d)]; TransR maps start
/// at the identity.
KgTable init_table(KgModelKind kind, Index dim, std::span<const std::string> entity_names,
                   std::span<const std::string> relation_names, std::uint64_t seed);

struct KgTrainResult {
  KgTable table;
  std::vector<double> epoch_loss;  // mean per-positive loss of each epoch
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Minibatch SGD with filtered negative sampling. Deterministic in (graph, kind, cfg).
/// Throws NumericError when the loss becomes non-finite.
KgTrainResult train(const KnowledgeGraph& graph, KgModelKind kind, const TrainConfig& cfg,
                    const EpochCallback& on_epoch = {});

/// Draws one corruption of `positive` (head or tail, chosen uniformly) that is
/// not a known triplet; gives up after a bounded number of retries.
Triplet corrupt(const Triplet& positive, std::size_t num_entities, const TripletSet& known, Rng& rng);

struct LinkPredictionResult {
  double mrr = 0.0;
  double mean_rank = 0.0;
  std::map<int, double> hits_at;
  std::size_t queries = 0;
};

using TripletScorer = std::function<double(const Triplet&)>;

/// Filtered ranking of the true head and tail against every entity.
/// Ties take the mean rank of the tied block. Hits@1/3/10 are reported.
LinkPredictionResult link_prediction_eval(std::size_t num_entities, std::span<const Triplet> test,
                                          const TripletSet& all_known, const TripletScorer& scorer);

LinkPredictionResult link_prediction_eval(const KgTable& table, std::span<const Triplet> test,
                                          const TripletSet& all_known);

}  // namespace cwkg
