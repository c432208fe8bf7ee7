#pragma once

// Reference implementations and checkers used by the unit and acceptance tests.
// Kept deliberately naive so they share no code path with the library.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "cwkg/common.hpp"
#include "cwkg/fusion.hpp"
#include "cwkg/kg_embed.hpp"

namespace cwkg::testing {

/// AP by enumerating every (relevant i, relevant j <= i) pair.
inline double brute_average_precision(const std::vector<int>& labels) {
  double sum = 0.0;
  int relevant = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 1) continue;
    ++relevant;
    int above = 0;
    for (std::size_t j = 0; j <= i; ++j) above += labels[j] == 1 ? 1 : 0;
    sum += static_cast<double>(above) / static_cast<double>(i + 1);
  }
  return relevant == 0 ? 0.0 : sum / relevant;
}

inline double brute_reciprocal_rank(const std::vector<int>& labels) {
  double best = 0.0;
  for (std::size_t i = labels.size(); i-- > 0;) {
    if (labels[i] == 1) best = 1.0 / static_cast<double>(i + 1);
  }
  return best;
}

inline double brute_precision_at(const std::vector<int>& labels, int k) {
  int hits = 0;
  for (int i = 0; i < k; ++i) {
    if (static_cast<std::size_t>(i) < labels.size() && labels[static_cast<std::size_t>(i)] == 1) ++hits;
  }
  return static_cast<double>(hits) / k;
}

/// Rank of the true entity among all candidates, counting every strictly
/// better candidate plus half the tied ones; filtered candidates are skipped.
inline double brute_rank(std::size_t num_entities, const Triplet& t, bool replace_head, const TripletSet& known,
                         const TripletScorer& scorer) {
  const double s = scorer(t);
  double rank = 1.0;
  for (std::uint32_t e = 0; e < num_entities; ++e) {
    Triplet c = t;
    (replace_head ? c.head : c.tail) = EntityId{e};
    if (c == t || known.contains(c)) continue;
    const double sc = scorer(c);
    if (sc > s) rank += 1.0;
    else if (sc == s) rank += 0.5;
  }
  return rank;
}

/// |a - n| relative to the larger magnitude. Components where both are below
/// `floor` are compared absolutely: a central difference of an O(1) loss with
/// step 1e-5 carries roundoff near 1e-10, so their ratio is noise.
inline double gradient_error(double analytic, double numeric, double floor = 1e-5) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  const double diff = std::abs(analytic - numeric);
  return scale < floor ? diff / floor : diff / scale;
}

inline constexpr double kFdStep = 1e-5;

/// Random table with every parameter block populated (TransR maps are random
/// too, not identity, so the map gradient is exercised).
inline KgTable random_kg_table(KgModelKind kind, Index d, int entities, int relations, Rng& rng) {
  std::vector<std::string> en, rn;
  for (int i = 0; i < entities; ++i) en.push_back("e" + std::to_string(i));
  for (int i = 0; i < relations; ++i) rn.push_back("r" + std::to_string(i));
  KgTable t = init_table(kind, d, en, rn, rng.next());
  for (auto& m : t.relation_maps) {
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
  }
  return t;
}

/// Maximum gradient error over every parameter of `table` for one
/// (positive, negatives) configuration.
inline double kg_gradient_max_error(const KgTable& table, const Triplet& pos, std::span<const Triplet> negs,
                                    const TrainConfig& cfg) {
  const auto analytic = loss_and_grad(table, pos, negs, cfg).grad;
  KgTable probe = table;
  double worst = 0.0;
  auto check = [&](double& param, double a) {
    const double saved = param;
    param = saved + kFdStep;
    const double up = loss_and_grad(probe, pos, negs, cfg).loss;
    param = saved - kFdStep;
    const double down = loss_and_grad(probe, pos, negs, cfg).loss;
    param = saved;
    worst = std::max(worst, gradient_error(a, (up - down) / (2 * kFdStep)));
  };
  for (Index c = 0; c < probe.entities.cols(); ++c) {
    const auto it = analytic.entities.find(static_cast<std::uint32_t>(c));
    for (Index r = 0; r < probe.entities.rows(); ++r) {
      check(probe.entities(r, c), it == analytic.entities.end() ? 0.0 : it->second[r]);
    }
  }
  for (Index c = 0; c < probe.relations.cols(); ++c) {
    const auto it = analytic.relations.find(static_cast<std::uint32_t>(c));
    for (Index r = 0; r < probe.relations.rows(); ++r) {
      check(probe.relations(r, c), it == analytic.relations.end() ? 0.0 : it->second[r]);
    }
  }
  for (std::size_t k = 0; k < probe.relation_maps.size(); ++k) {
    const auto it = analytic.relation_maps.find(static_cast<std::uint32_t>(k));
    auto& m = probe.relation_maps[k];
    for (Index j = 0; j < m.cols(); ++j)
      for (Index i = 0; i < m.rows(); ++i) check(m(i, j), it == analytic.relation_maps.end() ? 0.0 : it->second(i, j));
  }
  return worst;
}

/// One random gradient-check configuration for `kind`: 6 entities, 2
/// relations, d = 4, three negatives. Hinge configurations within 1e-3 of a
/// kink are redrawn, since the loss is not differentiable there.
inline double kg_gradient_point(KgModelKind kind, Rng& rng) {
  TrainConfig cfg;
  cfg.margin = 1.0;
  cfg.regularization = 0.01;
  for (;;) {
    const KgTable table = random_kg_table(kind, 4, 6, 2, rng);
    auto draw = [&] {
      return Triplet{EntityId{static_cast<std::uint32_t>(rng.index(6))}, RelationId{static_cast<std::uint32_t>(rng.index(2))},
                     EntityId{static_cast<std::uint32_t>(rng.index(6))}};
    };
    const Triplet pos = draw();
    std::vector<Triplet> negs;
    for (int i = 0; i < 3; ++i) {
      Triplet n = draw();
      n.relation = pos.relation;
      negs.push_back(n);
    }
    if (is_translational(kind)) {
      const double sp = score(table, pos);
      const bool near_kink = std::any_of(negs.begin(), negs.end(), [&](const Triplet& n) {
        return std::abs(cfg.margin + score(table, n) - sp) < 1e-3 || std::abs(score(table, n)) < 1e-3;
      });
      if (near_kink || std::abs(sp) < 1e-3) continue;
    }
    return kg_gradient_max_error(table, pos, negs, cfg);
  }
}

/// One random head gradient check: 8 instances mixing sparse and dense
/// language blocks, random kernel, class weights and l2.
inline double head_gradient_point(HeadMode mode, Rng& rng) {
  const Index lang = 6, ent = 4;
  std::vector<FusedVector> xs;
  std::vector<int> labels;
  for (int i = 0; i < 8; ++i) {
    SentenceRep rep;
    if (i % 2 == 0) {
      SentenceRep::Sparse sp(lang);
      for (Index j = 0; j < lang; j += 2) sp.insert(j) = rng.uniform(-1.0, 1.0);
      rep.vector = sp;
    } else {
      SentenceRep::Dense dn(lang);
      for (Index j = 0; j < lang; ++j) dn[j] = rng.uniform(-1.0, 1.0);
      rep.vector = dn;
    }
    VectorX<double> e(ent);
    for (Index j = 0; j < ent; ++j) e[j] = rng.uniform(-1.0, 1.0);
    xs.push_back(fuse(rep, e));
    labels.push_back(rng.coin() ? 1 : 0);
  }
  FusionHead head = make_head(mode, lang + ent);
  for (Index i = 0; i < head.kernel.size(); ++i) head.kernel.data()[i] = rng.uniform(-1.0, 1.0);
  for (Index i = 0; i < head.bias.size(); ++i) head.bias[i] = rng.uniform(-1.0, 1.0);
  head.class_weights = {rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0)};
  head.config.l2 = 0.1;
  std::vector<std::size_t> batch;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (rng.unit() < 0.75) batch.push_back(i);
  }
  if (batch.empty()) batch.push_back(0);

  const HeadGradient g = head_loss_and_grad(head, xs, labels, batch);
  double worst = 0.0;
  auto check = [&](double& param, double a) {
    const double saved = param;
    param = saved + kFdStep;
    const double up = head_loss_and_grad(head, xs, labels, batch).loss;
    param = saved - kFdStep;
    const double down = head_loss_and_grad(head, xs, labels, batch).loss;
    param = saved;
    worst = std::max(worst, gradient_error(a, (up - down) / (2 * kFdStep)));
  };
  for (Index j = 0; j < head.kernel.cols(); ++j)
    for (Index i = 0; i < head.kernel.rows(); ++i) check(head.kernel(i, j), g.kernel(i, j));
  for (Index i = 0; i < head.bias.size(); ++i) check(head.bias[i], g.bias[i]);
  return worst;
}

}  // namespace cwkg::testing
