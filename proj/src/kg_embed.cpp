#include "cwkg/kg_embed.hpp"

#include <cctype>
#include <cmath>
#include <numeric>

namespace cwkg {

std::string_view to_string(KgModelKind kind) {
  switch (kind) {
    case KgModelKind::TransE: return "TRANSE";
    case KgModelKind::TransR: return "TRANSR";
    case KgModelKind::Rescal: return "RESCAL";
    case KgModelKind::DistMult: return "DISTMULT";
    case KgModelKind::ComplEx: return "COMPLEX";
  }
  return "UNKNOWN";
}

std::optional<KgModelKind> parse_kg_model(std::string_view name) {
  std::string upper(name);
  for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (auto k : kAllKgModels) {
    if (to_string(k) == upper) return k;
  }
  return std::nullopt;
}

KgTable init_table(KgModelKind kind, Index dim, std::span<const std::string> entity_names,
                   std::span<const std::string> relation_names, std::uint64_t seed) {
  if (dim < 1) throw ConfigError("embedding dimension must be positive");
  KgTable table;
  table.kind = kind;
  table.dim = dim;
  table.entity_names.assign(entity_names.begin(), entity_names.end());
  table.relation_names.assign(relation_names.begin(), relation_names.end());

  Rng rng(seed);
  const double bound = 6.0 / std::sqrt(static_cast<double>(dim));
  auto fill = [&](auto& m) {
    for (Index j = 0; j < m.cols(); ++j)
      for (Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-bound, bound);
  };

  const auto ne = static_cast<Index>(entity_names.size());
  const auto nr = static_cast<Index>(relation_names.size());
  table.entities.resize(entity_width(kind, dim), ne);
  fill(table.entities);
  table.relations.resize(relation_vector_width(kind, dim), nr);
  fill(table.relations);
  if (kind == KgModelKind::TransR) {
    table.relation_maps.assign(static_cast<std::size_t>(nr), MatrixX<double>::Identity(dim, dim));
  } else if (kind == KgModelKind::Rescal) {
    table.relation_maps.resize(static_cast<std::size_t>(nr));
    for (auto& m : table.relation_maps) {
      m.resize(dim, dim);
      fill(m);
    }
  }
  return table;
}

Triplet corrupt(const Triplet& positive, std::size_t num_entities, const TripletSet& known, Rng& rng) {
  constexpr int kMaxRetries = 64;
  Triplet candidate = positive;
  for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
    candidate = positive;
    const auto e = EntityId{static_cast<std::uint32_t>(rng.index(num_entities))};
    if (rng.coin()) {
      candidate.head = e;
    } else {
      candidate.tail = e;
    }
    if (candidate != positive && !known.contains(candidate)) return candidate;
  }
  return candidate;
}

namespace {

void renormalize(MatrixX<double>& entities, Index col) {
  const double n = entities.col(col).norm();
  if (n > 1.0) entities.col(col) /= n;
}

void apply_sgd(KgTable& table, const SparseGradient<double>& grad, double lr) {
  for (const auto& [id, g] : grad.entities) table.entities.col(id) -= lr * g;
  for (const auto& [id, g] : grad.relations) table.relations.col(id) -= lr * g;
  for (const auto& [id, g] : grad.relation_maps) table.relation_maps[id] -= lr * g;
  if (is_translational(*table.kind)) {
    for (const auto& [id, g] : grad.entities) renormalize(table.entities, id);
  }
}

}  // namespace

KgTrainResult train(const KnowledgeGraph& graph, KgModelKind kind, const TrainConfig& cfg,
                    const EpochCallback& on_epoch) {
  if (graph.triplets().empty()) throw DomainError("cannot train on an empty graph");
  if (cfg.epochs < 0 || cfg.batch_size < 1 || cfg.negatives_per_positive < 1 || !(cfg.learning_rate > 0.0) ||
      !(cfg.margin > 0.0) || cfg.regularization < 0.0) {
    throw ConfigError("invalid KG training configuration");
  }

  KgTrainResult result;
  result.table = init_table(kind, cfg.dim, graph.entities().names(), graph.relations().names(), cfg.seed);
  KgTable& table = result.table;

  const auto triplets = graph.triplets();
  const std::size_t n = triplets.size();
  const std::size_t ne = graph.num_entities();
  std::vector<std::size_t> order(n);
  std::vector<Triplet> negatives(static_cast<std::size_t>(cfg.negatives_per_positive));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, 0, static_cast<std::uint64_t>(epoch) + 1));
    if (is_translational(kind)) {
      for (Index j = 0; j < table.entities.cols(); ++j) renormalize(table.entities, j);
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order.begin(), order.end());

    double epoch_total = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      SparseGradient<double> grad;
      double batch_loss = 0.0;
      for (std::size_t i = start; i < stop; ++i) {
        const Triplet& pos = triplets[order[i]];
        for (auto& neg : negatives) neg = corrupt(pos, ne, graph.triplet_set(), rng);
        batch_loss += accumulate_loss_and_grad(table, pos, std::span<const Triplet>(negatives), cfg, grad);
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericError("non-finite training loss in epoch " + std::to_string(epoch + 1) +
                           "; lower the learning rate (currently " + format_real(cfg.learning_rate) + ")");
      }
      epoch_total += batch_loss;
      apply_sgd(table, grad, cfg.learning_rate);
    }

    const double mean = epoch_total / static_cast<double>(n);
    result.epoch_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch + 1, mean);
  }
  return result;
}

LinkPredictionResult link_prediction_eval(std::size_t num_entities, std::span<const Triplet> test,
                                          const TripletSet& all_known, const TripletScorer& scorer) {
  if (test.empty()) throw DomainError("link prediction needs a non-empty test set");
  static constexpr std::array<int, 3> kCutoffs{1, 3, 10};

  LinkPredictionResult out;
  for (int k : kCutoffs) out.hits_at[k] = 0.0;

  auto rank_of = [&](const Triplet& truth, bool replace_tail) {
    const double target = scorer(truth);
    std::size_t greater = 0;
    std::size_t ties = 0;
    for (std::size_t e = 0; e < num_entities; ++e) {
      Triplet c = truth;
      (replace_tail ? c.tail : c.head) = EntityId{static_cast<std::uint32_t>(e)};
      if (c == truth || all_known.contains(c)) continue;
      const double s = scorer(c);
      if (s > target) {
        ++greater;
      } else if (s == target) {
        ++ties;
      }
    }
    return 1.0 + static_cast<double>(greater) + 0.5 * static_cast<double>(ties);
  };

  for (const auto& t : test) {
    for (bool replace_tail : {true, false}) {
      const double rank = rank_of(t, replace_tail);
      out.mrr += 1.0 / rank;
      out.mean_rank += rank;
      for (int k : kCutoffs) {
        if (rank <= k) out.hits_at[k] += 1.0;
      }
      ++out.queries;
    }
  }
  const auto q = static_cast<double>(out.queries);
  out.mrr /= q;
  out.mean_rank /= q;
  for (auto& [k, v] : out.hits_at) v /= q;
  return out;
}

LinkPredictionResult link_prediction_eval(const KgTable& table, std::span<const Triplet> test,
                                          const TripletSet& all_known) {
  table.check_shapes();
  return link_prediction_eval(table.num_entities(), test, all_known,
                              [&](const Triplet& t) { return score(table, t); });
}

}  // namespace cwkg
