#include "cwkg/fusion.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "cwkg/interchange.hpp"
#include "line_reader.hpp"

namespace cwkg {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::string_view to_string(CombinationMethod m) {
  switch (m) {
    case CombinationMethod::EmbProd: return "emb_prod";
    case CombinationMethod::EmbConcat: return "emb_concat";
    case CombinationMethod::Similarity: return "similarity";
  }
  return "unknown";
}

std::optional<CombinationMethod> parse_combination(std::string_view name) {
  const auto n = lower(name);
  for (auto m : {CombinationMethod::EmbProd, CombinationMethod::EmbConcat, CombinationMethod::Similarity}) {
    if (to_string(m) == n) return m;
  }
  return std::nullopt;
}

std::string_view to_string(HeadMode m) { return m == HeadMode::Classification ? "cls" : "rank"; }

std::optional<HeadMode> parse_head_mode(std::string_view name) {
  const auto n = lower(name);
  if (n == "cls" || n == "classification") return HeadMode::Classification;
  if (n == "rank" || n == "ranking") return HeadMode::Ranking;
  return std::nullopt;
}

std::vector<std::string> entity_key_candidates(std::string_view uri) {
  std::vector<std::string> out{std::string(uri)};
  auto push = [&](std::string s) {
    if (!s.empty() && std::find(out.begin(), out.end(), s) == out.end()) out.push_back(std::move(s));
  };
  std::string title(uri);
  if (const auto slash = uri.rfind('/'); slash != std::string_view::npos && uri.find("://") != std::string_view::npos) {
    title = std::string(uri.substr(slash + 1));
  }
  std::string spaced = title;
  std::replace(spaced.begin(), spaced.end(), '_', ' ');
  push(title);
  push("ENTITY/" + title);
  push(spaced);
  push("ENTITY/" + spaced);
  return out;
}

EntityEmbeddings::EntityEmbeddings(KgTable table, std::map<std::string, std::string, std::less<>> aliases)
    : table_(std::move(table)), aliases_(std::move(aliases)) {
  table_.check_shapes();
}

std::optional<VectorX<double>> EntityEmbeddings::lookup(std::string_view uri) const {
  if (auto it = aliases_.find(uri); it != aliases_.end()) {
    if (auto id = table_.find_entity(it->second)) return VectorX<double>(table_.entity(*id));
  }
  for (const auto& key : entity_key_candidates(uri)) {
    if (auto id = table_.find_entity(key)) return VectorX<double>(table_.entity(*id));
  }
  return std::nullopt;
}

std::map<std::string, std::string, std::less<>> load_entity_aliases(const std::filesystem::path& path) {
  detail::LineReader reader(path);
  std::map<std::string, std::string, std::less<>> out;
  std::string line;
  while (reader.next(line)) {
    if (line.empty() || line.front() == '#') continue;
    const auto f = detail::split(line, '\t');
    if (f.size() != 2) throw ParseError("expected 'uri<TAB>key' at " + reader.where());
    out.emplace(std::string(f[0]), std::string(f[1]));
  }
  return out;
}

std::vector<Instance> build_instances(std::string_view sentence_key, std::span<const std::string> entities,
                                      const EntityVectorLookup& lookup, Index dim) {
  const VectorX<double> placeholder = VectorX<double>::Constant(dim, kPlaceholderValue);
  auto vec = [&](const std::string& uri) {
    auto v = lookup ? lookup(uri) : std::nullopt;
    if (!v) return placeholder;
    if (v->size() != dim) throw InvariantError("entity vector for '" + uri + "' has the wrong dimension");
    return *v;
  };

  std::vector<Instance> out;
  if (entities.size() >= 2) {
    std::vector<VectorX<double>> vecs;
    vecs.reserve(entities.size());
    for (const auto& e : entities) vecs.push_back(vec(e));
    out.reserve(entities.size() * (entities.size() - 1));
    for (std::size_t h = 0; h < entities.size(); ++h) {
      for (std::size_t t = 0; t < entities.size(); ++t) {
        if (h == t) continue;
        out.push_back({std::string(sentence_key), entities[h], entities[t], vecs[h], vecs[t]});
      }
    }
  } else if (entities.size() == 1) {
    out.push_back({std::string(sentence_key), entities[0], std::nullopt, vec(entities[0]), placeholder});
  } else {
    out.push_back({std::string(sentence_key), std::nullopt, std::nullopt, placeholder, placeholder});
  }
  return out;
}

Index FusedVector::language_dim() const {
  return std::visit([](const auto& v) { return static_cast<Index>(v.size()); }, language);
}

VectorX<double> FusedVector::dense() const {
  VectorX<double> out = VectorX<double>::Zero(dim());
  add_scaled_to(1.0, out.head(dim()));
  return out;
}

FusedVector fuse(const SentenceRep& l_rep, VectorX<double> e_rep) {
  FusedVector x;
  x.sentence_key = l_rep.key;
  std::visit([&](const auto& v) { x.language = v; }, l_rep.vector);
  x.entity = std::move(e_rep);
  return x;
}

FusionHead make_head(HeadMode mode, Index dim) {
  FusionHead head;
  head.mode = mode;
  const Index classes = mode == HeadMode::Classification ? 2 : 1;
  head.kernel = MatrixX<double>::Zero(dim, classes);
  head.bias = VectorX<double>::Zero(classes);
  return head;
}

namespace {

VectorX<double> logits(const FusionHead& head, const FusedVector& x) {
  if (x.dim() != head.dim()) {
    throw DomainError("fused vector has dimension " + std::to_string(x.dim()) + ", head expects " +
                      std::to_string(head.dim()));
  }
  VectorX<double> z(head.kernel.cols());
  for (Index c = 0; c < z.size(); ++c) z[c] = x.dot(head.kernel.col(c)) + head.bias[c];
  return z;
}

}  // namespace

VectorX<double> forward(const FusionHead& head, const FusedVector& x) {
  const VectorX<double> z = logits(head, x);
  if (head.mode == HeadMode::Ranking) {
    VectorX<double> p(1);
    p[0] = sigmoid(z[0]);
    return p;
  }
  const double m = z.maxCoeff();
  VectorX<double> p = (z.array() - m).exp();
  return p / p.sum();
}

double instance_score(const FusionHead& head, const FusedVector& x) {
  const auto p = forward(head, x);
  return head.mode == HeadMode::Ranking ? p[0] : p[1];
}

int instance_label(const FusionHead& head, const FusedVector& x) {
  const auto p = forward(head, x);
  if (head.mode == HeadMode::Ranking) return p[0] >= 0.5 ? 1 : 0;
  return p[1] > p[0] ? 1 : 0;
}

std::array<double, 2> class_weights(std::span<const int> labels) {
  std::array<double, 2> counts{0.0, 0.0};
  for (int y : labels) {
    if (y != 0 && y != 1) throw DomainError("labels must be 0 or 1");
    counts[static_cast<std::size_t>(y)] += 1.0;
  }
  const double n = counts[0] + counts[1];
  std::array<double, 2> w{1.0, 1.0};
  for (std::size_t c = 0; c < 2; ++c) {
    if (counts[c] > 0.0) w[c] = n / (2.0 * counts[c]);
  }
  return w;
}

HeadGradient head_loss_and_grad(const FusionHead& head, std::span<const FusedVector> xs,
                                std::span<const int> labels, std::span<const std::size_t> batch) {
  HeadGradient g;
  g.kernel = MatrixX<double>::Zero(head.kernel.rows(), head.kernel.cols());
  g.bias = VectorX<double>::Zero(head.bias.size());
  if (batch.empty()) return g;
  const double inv = 1.0 / static_cast<double>(batch.size());

  for (auto i : batch) {
    const auto& x = xs[i];
    const int y = labels[i];
    const double w = head.class_weights[static_cast<std::size_t>(y)];
    const VectorX<double> z = logits(head, x);
    if (head.mode == HeadMode::Ranking) {
      g.loss += w * (y == 1 ? softplus(-z[0]) : softplus(z[0])) * inv;
      const double dz = w * (sigmoid(z[0]) - y) * inv;
      x.add_scaled_to(dz, g.kernel.col(0));
      g.bias[0] += dz;
    } else {
      const double m = z.maxCoeff();
      const double lse = m + std::log((z.array() - m).exp().sum());
      g.loss += w * (lse - z[y]) * inv;
      for (Index c = 0; c < z.size(); ++c) {
        const double dz = w * (std::exp(z[c] - lse) - (c == y ? 1.0 : 0.0)) * inv;
        x.add_scaled_to(dz, g.kernel.col(c));
        g.bias[c] += dz;
      }
    }
  }
  if (head.config.l2 > 0.0) {
    g.loss += 0.5 * head.config.l2 * head.kernel.squaredNorm();
    g.kernel += head.config.l2 * head.kernel;
  }
  return g;
}

FusionHead train_head(std::span<const FusedVector> xs, std::span<const int> labels, HeadMode mode,
                      const HeadConfig& cfg, const std::array<double, 2>& weights) {
  if (xs.empty()) throw DomainError("cannot train a head without instances");
  if (xs.size() != labels.size()) throw DomainError("instances and labels differ in length");
  if (cfg.epochs < 0 || cfg.batch_size < 1 || !(cfg.learning_rate > 0.0) || cfg.l2 < 0.0) {
    throw ConfigError("invalid head training configuration");
  }
  const Index dim = xs.front().dim();
  for (const auto& x : xs) {
    if (x.dim() != dim) throw DomainError("fused vectors of mixed dimension");
  }
  const bool has_pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
  const bool has_neg = std::find(labels.begin(), labels.end(), 0) != labels.end();
  if (mode == HeadMode::Classification && !(has_pos && has_neg)) {
    throw DomainError("classification head needs instances of both classes");
  }

  FusionHead head = make_head(mode, dim);
  head.config = cfg;
  head.class_weights = weights;

  std::vector<std::size_t> order(xs.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, 0, static_cast<std::uint64_t>(epoch) + 1));
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const auto batch = std::span<const std::size_t>(order).subspan(start, stop - start);
      const HeadGradient g = head_loss_and_grad(head, xs, labels, batch);
      if (!std::isfinite(g.loss)) {
        throw NumericError("non-finite head loss in epoch " + std::to_string(epoch + 1) +
                           "; lower the learning rate (currently " + format_real(cfg.learning_rate) + ")");
      }
      head.kernel -= cfg.learning_rate * g.kernel;
      head.bias -= cfg.learning_rate * g.bias;
    }
  }
  return head;
}

double predict_sentence(const FusionHead& head, std::span<const FusedVector> instances) {
  if (instances.empty()) throw DomainError("sentence has no instances");
  double best = -1.0;
  for (const auto& x : instances) {
    const double v = head.mode == HeadMode::Ranking ? instance_score(head, x)
                                                    : static_cast<double>(instance_label(head, x));
    best = std::max(best, v);
  }
  return best;
}

void save_head(const FusionHead& head, const std::filesystem::path& path) {
  VectorFile file;
  file.metadata = {{"head", std::string(to_string(head.mode))},
                   {"w0", format_real(head.class_weights[0])},
                   {"w1", format_real(head.class_weights[1])}};
  file.dim = head.dim() + 1;
  for (Index c = 0; c < head.kernel.cols(); ++c) {
    VectorX<double> v(head.dim() + 1);
    v << head.kernel.col(c), head.bias[c];
    file.records.push_back({"class" + std::to_string(c), std::move(v)});
  }
  write_vector_file(path, file);
}

FusionHead load_head(const std::filesystem::path& path) {
  const VectorFile file = read_vector_file(path);
  const auto mode_tag = file.meta("head");
  const auto mode = mode_tag ? parse_head_mode(*mode_tag) : std::nullopt;
  if (!mode) throw FormatError("'" + path.string() + "' is not a head file");
  FusionHead head = make_head(*mode, file.dim - 1);
  if (static_cast<Index>(file.records.size()) != head.kernel.cols()) {
    throw FormatError("head file '" + path.string() + "' has the wrong number of classes");
  }
  for (Index c = 0; c < head.kernel.cols(); ++c) {
    const auto& v = file.records[static_cast<std::size_t>(c)].values;
    head.kernel.col(c) = v.head(head.dim());
    head.bias[c] = v[head.dim()];
  }
  if (auto w = file.meta("w0")) head.class_weights[0] = parse_real(*w);
  if (auto w = file.meta("w1")) head.class_weights[1] = parse_real(*w);
  return head;
}

GraphEntityResolver graph_resolver(const KnowledgeGraph& graph,
                                   const std::map<std::string, std::string, std::less<>>* aliases) {
  return [&graph, aliases](std::string_view uri) -> std::optional<EntityId> {
    if (aliases) {
      if (auto it = aliases->find(uri); it != aliases->end()) {
        if (auto id = graph.find_entity(it->second)) return id;
      }
    }
    for (const auto& key : entity_key_candidates(uri)) {
      if (auto id = graph.find_entity(key)) return id;
    }
    return std::nullopt;
  };
}

Eigen::Vector3d similarity_features(std::span<const std::string> entities, const KnowledgeGraph& graph,
                                    const GraphEntityResolver& resolve, int cap) {
  Eigen::Vector3d out(0.0, 0.0, static_cast<double>(entities.size()));
  if (entities.size() < 2) return out;
  std::vector<std::optional<EntityId>> ids;
  ids.reserve(entities.size());
  for (const auto& e : entities) ids.push_back(resolve(e));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      if (!ids[i] || !ids[j]) continue;
      if (const auto hops = hop_distance(graph, *ids[i], *ids[j], cap)) {
        out[0] = std::max(out[0], 1.0 / (1.0 + *hops));
      }
      out[1] = std::max(out[1], neighbor_jaccard(graph, *ids[i], *ids[j]));
    }
  }
  return out;
}

}  // namespace cwkg
