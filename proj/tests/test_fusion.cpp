#include <doctest.h>

#include <algorithm>

#include "cwkg/fusion.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace cwkg;

namespace {

VectorX<double> vec(std::initializer_list<double> v) {
  VectorX<double> out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

SentenceRep dense_rep(VectorX<double> v) { return SentenceRep{"d:1", std::move(v), RepSource::External}; }

FusedVector point(double a, double b) { return fuse(dense_rep(vec({a, b})), VectorX<double>(0)); }

EntityVectorLookup table_lookup(std::map<std::string, VectorX<double>> t) {
  return [t = std::move(t)](std::string_view uri) -> std::optional<VectorX<double>> {
    if (auto it = t.find(std::string(uri)); it != t.end()) return it->second;
    return std::nullopt;
  };
}

}  // namespace

TEST_SUITE("fusion") {

TEST_CASE("instances are ordered pairs of distinct entities") {
  const auto lookup = table_lookup({{"A", vec({1, 0})}, {"B", vec({0, 1})}, {"C", vec({1, 1})}});
  SUBCASE("three entities") {
    const std::vector<std::string> e{"A", "B", "C"};
    const auto inst = build_instances("d:1", e, lookup, 2);
    CHECK(inst.size() == 6);
    for (const auto& i : inst) CHECK(i.head_uri != i.tail_uri);
    CHECK(inst[0].head_vec == vec({1, 0}));
    CHECK(inst[0].tail_vec == vec({0, 1}));
  }
  SUBCASE("no entities") {
    const auto inst = build_instances("d:1", {}, lookup, 3);
    REQUIRE(inst.size() == 1);
    CHECK(inst[0].head_vec == VectorX<double>::Constant(3, -1.0));
    CHECK(inst[0].tail_vec == VectorX<double>::Constant(3, -1.0));
    CHECK_FALSE(inst[0].head_uri.has_value());
  }
  SUBCASE("single unknown entity") {
    const std::vector<std::string> e{"Z"};
    const auto inst = build_instances("d:1", e, lookup, 2);
    REQUIRE(inst.size() == 1);
    CHECK(inst[0].head_vec == VectorX<double>::Constant(2, -1.0));
    CHECK(inst[0].tail_vec == VectorX<double>::Constant(2, -1.0));
    CHECK(inst[0].head_uri == "Z");
  }
  SUBCASE("single known entity") {
    const std::vector<std::string> e{"C"};
    const auto inst = build_instances("d:1", e, lookup, 2);
    REQUIRE(inst.size() == 1);
    CHECK(inst[0].head_vec == vec({1, 1}));
    CHECK(inst[0].tail_vec == vec({-1, -1}));
  }
  SUBCASE("vector of the wrong width") {
    const std::vector<std::string> e{"A", "B"};
    CHECK_THROWS_AS(build_instances("d:1", e, lookup, 3), InvariantError);
  }
}

TEST_CASE("combination") {
  CHECK(combine(vec({1, 2, 3}), vec({4, 5, 6}), CombinationMethod::EmbProd) == vec({4, 10, 18}));
  CHECK(combine(vec({1, 2, 3}), vec({1, 1, 1}), CombinationMethod::EmbProd) == vec({1, 2, 3}));
  CHECK(combine(vec({1, 2}), vec({3, 4}), CombinationMethod::EmbConcat) == vec({1, 2, 3, 4}));
  CHECK_THROWS_AS(combine(vec({1, 2}), vec({3}), CombinationMethod::EmbProd), InvariantError);
  CHECK_THROWS_AS(combine(vec({1}), vec({3}), CombinationMethod::Similarity), InvariantError);
}

TEST_CASE("product commutes, concatenation does not") {
  Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    VectorX<double> h(5), t(5);
    for (Index j = 0; j < 5; ++j) {
      h[j] = rng.uniform(-1, 1);
      t[j] = rng.uniform(-1, 1);
    }
    CHECK(combine(h, t, CombinationMethod::EmbProd) == combine(t, h, CombinationMethod::EmbProd));
    CHECK(combine(h, t, CombinationMethod::EmbConcat) != combine(t, h, CombinationMethod::EmbConcat));
  }
}

TEST_CASE("fusion layout") {
  const auto l = dense_rep(vec({1, 2, 3, 4, 5}));
  const auto e = combine(vec({1, 2, 3}), vec({4, 5, 6}), CombinationMethod::EmbConcat);
  const auto x = fuse(l, e);
  CHECK(x.dim() == 11);
  const auto d = x.dense();
  CHECK(d.head(5) == l.dense());
  CHECK(d.tail(6) == e);

  SentenceRep::Sparse zero(4);
  const auto z = fuse(SentenceRep{"k", zero, RepSource::Tfidf}, vec({7, 8}));
  CHECK(z.dense().head(4).isZero(0.0));
  CHECK(z.dense().tail(2) == vec({7, 8}));

  SentenceRep::Sparse sp(4);
  sp.insert(2) = 0.5;
  const auto s = fuse(SentenceRep{"k", sp, RepSource::Tfidf}, vec({1}));
  const VectorX<double> k = vec({1, 2, 3, 4, 5});
  CHECK(s.dot(k) == 0.5 * 3 + 5);
}

TEST_CASE("forward pass") {
  const auto x = point(0.3, -0.7);
  auto cls = make_head(HeadMode::Classification, 2);
  CHECK(forward(cls, x) == vec({0.5, 0.5}));
  CHECK(instance_label(cls, x) == 0);
  auto rank = make_head(HeadMode::Ranking, 2);
  CHECK(forward(rank, x)[0] == 0.5);
  CHECK(instance_label(rank, x) == 1);
  rank.bias[0] = 2.0;
  CHECK(instance_score(rank, x) == doctest::Approx(0.880797).epsilon(1e-6));
  const auto wide = point(1, 2);
  CHECK_THROWS_AS(forward(make_head(HeadMode::Ranking, 3), wide), DomainError);
}

TEST_CASE("class weights") {
  std::vector<int> labels(16421, 0);
  std::fill(labels.begin(), labels.begin() + 433, 1);
  const auto w = class_weights(labels);
  CHECK(w[1] == doctest::Approx(18.9619).epsilon(1e-5));
  CHECK(w[0] == doctest::Approx(0.51354).epsilon(1e-5));
  const std::vector<int> bad{0, 2};
  CHECK_THROWS_AS(class_weights(bad), DomainError);
}

TEST_CASE("head gradients match central finite differences") {
  Rng rng(77);
  for (auto mode : {HeadMode::Classification, HeadMode::Ranking}) {
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) worst = std::max(worst, cwkg::testing::head_gradient_point(mode, rng));
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("separable data is fit exactly") {
  // the oracle: a 1-D threshold on the first coordinate separates the classes
  Rng rng(12);
  std::vector<FusedVector> xs;
  std::vector<int> ys;
  for (int i = 0; i < 200; ++i) {
    const int y = rng.coin() ? 1 : 0;
    const double a = (y ? 1 : -1) * rng.uniform(0.2, 1.0);
    xs.push_back(point(a, rng.uniform(-1, 1)));
    ys.push_back(y);
  }
  double lo_pos = 1e9, hi_neg = -1e9;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double a = xs[i].dense()[0];
    if (ys[i]) {
      lo_pos = std::min(lo_pos, a);
    } else {
      hi_neg = std::max(hi_neg, a);
    }
  }
  REQUIRE(hi_neg < lo_pos);

  HeadConfig cfg;
  cfg.epochs = 500;
  cfg.learning_rate = 0.5;
  for (auto mode : {HeadMode::Classification, HeadMode::Ranking}) {
    const auto head = train_head(xs, ys, mode, cfg, class_weights(ys));
    int right = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) right += instance_label(head, xs[i]) == ys[i] ? 1 : 0;
    CHECK(right == static_cast<int>(xs.size()));
  }
}

TEST_CASE("zero epochs leaves the all-zero head") {
  const std::vector<FusedVector> xs{point(1, 0), point(-1, 0)};
  const std::vector<int> ys{1, 0};
  HeadConfig cfg;
  cfg.epochs = 0;
  const auto head = train_head(xs, ys, HeadMode::Classification, cfg, {1, 1});
  CHECK(head.kernel.isZero(0.0));
  CHECK(head.bias.isZero(0.0));
  CHECK(forward(head, xs[0]) == vec({0.5, 0.5}));
}

TEST_CASE("training is deterministic") {
  Rng rng(2);
  std::vector<FusedVector> xs;
  std::vector<int> ys;
  for (int i = 0; i < 100; ++i) {
    xs.push_back(point(rng.uniform(-1, 1), rng.uniform(-1, 1)));
    ys.push_back(rng.coin() ? 1 : 0);
  }
  HeadConfig cfg;
  cfg.seed = 5;
  cfg.batch_size = 16;
  const auto a = train_head(xs, ys, HeadMode::Ranking, cfg, class_weights(ys));
  const auto b = train_head(xs, ys, HeadMode::Ranking, cfg, class_weights(ys));
  CHECK(a.kernel == b.kernel);
  CHECK(a.bias == b.bias);
}

TEST_CASE("training errors") {
  const std::vector<FusedVector> xs{point(1, 0), point(-1, 0)};
  const std::vector<int> ones{1, 1};
  CHECK_THROWS_AS(train_head(xs, ones, HeadMode::Classification, {}, {1, 1}), DomainError);
  CHECK_NOTHROW(train_head(xs, ones, HeadMode::Ranking, {}, {1, 1}));
  CHECK_THROWS_AS(train_head({}, {}, HeadMode::Ranking, {}, {1, 1}), DomainError);
  HeadConfig bad;
  bad.batch_size = 0;
  const std::vector<int> ys{1, 0};
  CHECK_THROWS_AS(train_head(xs, ys, HeadMode::Ranking, bad, {1, 1}), ConfigError);
}

TEST_CASE("sentence prediction takes the maximum") {
  auto rank = make_head(HeadMode::Ranking, 1);
  rank.kernel(0, 0) = 1.0;
  auto at = [](double logit) { return fuse(dense_rep(vec({logit})), VectorX<double>(0)); };
  auto logit = [](double p) { return std::log(p / (1 - p)); };
  std::vector<FusedVector> xs{at(logit(0.2)), at(logit(0.7)), at(logit(0.4))};
  CHECK(predict_sentence(rank, xs) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(predict_sentence(rank, std::span(xs).first(1)) == doctest::Approx(0.2).epsilon(1e-12));

  SUBCASE("invariant under permutation") {
    const double base = predict_sentence(rank, xs);
    std::sort(xs.begin(), xs.end(), [](const auto& a, const auto& b) { return a.dense()[0] < b.dense()[0]; });
    do {
      CHECK(predict_sentence(rank, xs) == base);
    } while (std::next_permutation(xs.begin(), xs.end(),
                                   [](const auto& a, const auto& b) { return a.dense()[0] < b.dense()[0]; }));
  }
  SUBCASE("a lower-scoring instance changes nothing") {
    const double base = predict_sentence(rank, xs);
    xs.push_back(at(logit(0.1)));
    CHECK(predict_sentence(rank, xs) == base);
  }

  auto cls = make_head(HeadMode::Classification, 1);
  cls.kernel(0, 1) = 1.0;  // positive class wins for positive inputs
  const std::vector<FusedVector> labels{at(-1), at(-2), at(3)};
  CHECK(predict_sentence(cls, labels) == 1.0);
  CHECK(predict_sentence(cls, std::span(labels).first(2)) == 0.0);
  CHECK_THROWS_AS(predict_sentence(cls, {}), DomainError);
}

TEST_CASE("head file round-trip") {
  cwkg::testing::TempDir dir;
  auto head = make_head(HeadMode::Classification, 3);
  head.kernel << 0.1, -0.2, 0.3, 0.4, -0.5, 0.6;
  head.bias << 0.25, -0.75;
  head.class_weights = {0.51354, 18.9619};
  save_head(head, dir / "head.txt");
  const auto back = load_head(dir / "head.txt");
  CHECK(back.mode == head.mode);
  CHECK(back.kernel == head.kernel);
  CHECK(back.bias == head.bias);
  CHECK(back.class_weights == head.class_weights);
}

TEST_CASE("entity key candidates and lookup") {
  const auto c = entity_key_candidates("http://dbpedia.org/resource/Barack_Obama");
  CHECK(std::find(c.begin(), c.end(), "Barack_Obama") != c.end());
  CHECK(std::find(c.begin(), c.end(), "ENTITY/Barack Obama") != c.end());

  KgTable t;
  t.dim = 2;
  t.entity_names = {"ENTITY/Barack Obama", "/m/07t65"};
  t.entities = MatrixX<double>(2, 2);
  t.entities << 1, 3, 2, 4;
  const EntityEmbeddings emb(t, {{"http://dbpedia.org/resource/Texas", "/m/07t65"}});
  CHECK(emb.lookup("http://dbpedia.org/resource/Barack_Obama") == vec({1, 2}));
  CHECK(emb.lookup("http://dbpedia.org/resource/Texas") == vec({3, 4}));
  CHECK_FALSE(emb.lookup("http://dbpedia.org/resource/Ohio").has_value());
}

TEST_CASE("graph similarity features") {
  const std::vector<NamedTriplet> facts{{"A", "r", "B"}, {"B", "r", "C"}, {"D", "r", "X"}, {"E", "r", "X"}};
  const auto g = KnowledgeGraph::from_named(facts);
  const auto resolve = graph_resolver(g);
  SUBCASE("chain") {
    const std::vector<std::string> e{"A", "C"};
    const auto f = similarity_features(e, g, resolve);
    CHECK(f[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(f[2] == 2.0);
  }
  SUBCASE("single entity") {
    const std::vector<std::string> e{"A"};
    CHECK(similarity_features(e, g, resolve) == Eigen::Vector3d(0, 0, 1));
  }
  SUBCASE("identical neighbourhoods") {
    const std::vector<std::string> e{"D", "E"};
    CHECK(similarity_features(e, g, resolve)[1] == 1.0);
  }
  SUBCASE("unknown and unreachable") {
    const std::vector<std::string> e{"A", "D", "Nowhere"};
    const auto f = similarity_features(e, g, resolve);
    CHECK(f[0] == 0.0);
    CHECK(f[2] == 3.0);
  }
}

TEST_CASE("names") {
  CHECK(parse_combination("EMB_PROD") == CombinationMethod::EmbProd);
  CHECK_FALSE(parse_combination("sum").has_value());
  CHECK(parse_head_mode("rank") == HeadMode::Ranking);
  CHECK(parse_head_mode("CLS") == HeadMode::Classification);
}

}  // TEST_SUITE
