#include "cwkg/experiment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cctype>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <json.hpp>
#include <toml.hpp>

#include "cwkg/interchange.hpp"
#include "line_reader.hpp"

namespace cwkg {

namespace fs = std::filesystem;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::string_view to_string(LanguageSource s) {
  switch (s) {
    case LanguageSource::Tfidf: return "tfidf";
    case LanguageSource::AvgWord: return "avg_word";
    case LanguageSource::External: return "external";
  }
  return "?";
}

std::optional<LanguageSource> parse_language_source(std::string_view name) {
  for (auto s : {LanguageSource::Tfidf, LanguageSource::AvgWord, LanguageSource::External}) {
    if (lower(name) == to_string(s)) return s;
  }
  return std::nullopt;
}

std::string to_string(EntitySource s) { return s.kg ? lower(to_string(*s.kg)) : "wikipedia2vec"; }

std::optional<EntitySource> parse_entity_source(std::string_view name) {
  if (lower(name) == "wikipedia2vec") return EntitySource{};
  if (auto k = parse_kg_model(name)) return EntitySource{*k};
  return std::nullopt;
}

std::string to_string(const Combination& c) { return c ? std::string(to_string(*c)) : "none"; }

std::optional<Combination> parse_combination_or_none(std::string_view name) {
  if (lower(name) == "none") return Combination{};
  if (auto m = parse_combination(lower(name))) return Combination{*m};
  return std::nullopt;
}

// ---- config ---------------------------------------------------------------

namespace {

std::string toml_quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", static_cast<unsigned>(c));
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out + "\"";
}

std::string toml_real(double v) {
  std::string s = format_real(v);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

template <typename T, typename F>
std::string toml_list(const std::vector<T>& xs, F&& name) {
  std::string out = "[";
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? ", " : "") + toml_quote(name(xs[i]));
  return out + "]";
}

std::string kg_section(const TrainConfig& kg) {
  std::ostringstream o;
  o << "[kg]\n"
    << "dim = " << kg.dim << '\n'
    << "epochs = " << kg.epochs << '\n'
    << "learning_rate = " << toml_real(kg.learning_rate) << '\n'
    << "margin = " << toml_real(kg.margin) << '\n'
    << "negatives = " << kg.negatives_per_positive << '\n'
    << "batch_size = " << kg.batch_size << '\n'
    << "regularization = " << toml_real(kg.regularization) << '\n'
    << "seed = " << kg.seed << '\n';
  return o.str();
}

class Section {
 public:
  Section(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

  bool has(std::string_view key) const { return table_ && table_->contains(key); }

  template <typename T>
  void read(std::string_view key, T& out) {
    seen_.emplace_back(key);
    if (!table_) return;
    const toml::node* n = table_->get(key);
    if (!n) return;
    if constexpr (std::is_same_v<T, bool>) {
      if (!n->is_boolean()) fail(key, "a boolean");
      out = n->as_boolean()->get();
    } else if constexpr (std::is_same_v<T, double>) {
      if (n->is_integer()) {
        out = static_cast<double>(n->as_integer()->get());
      } else if (n->is_floating_point()) {
        out = n->as_floating_point()->get();
      } else {
        fail(key, "a number");
      }
    } else if constexpr (std::is_integral_v<T>) {
      if (!n->is_integer()) fail(key, "an integer");
      const std::int64_t v = n->as_integer()->get();
      if constexpr (std::is_unsigned_v<T>) {
        if (v < 0) fail(key, "a non-negative integer");
      }
      out = static_cast<T>(v);
    } else if constexpr (std::is_same_v<T, fs::path>) {
      if (!n->is_string()) fail(key, "a string");
      out = fs::path(n->as_string()->get());
    } else {
      if (!n->is_string()) fail(key, "a string");
      out = n->as_string()->get();
    }
  }

  /// A list of strings, written either as a TOML array or as a comma-separated string.
  std::vector<std::string> read_list(std::string_view key) {
    seen_.emplace_back(key);
    std::vector<std::string> out;
    if (!table_) return out;
    const toml::node* n = table_->get(key);
    if (!n) return out;
    if (const auto* s = n->as_string()) {
      for (auto part : detail::split(s->get(), ',')) {
        while (!part.empty() && part.front() == ' ') part.remove_prefix(1);
        while (!part.empty() && part.back() == ' ') part.remove_suffix(1);
        if (!part.empty()) out.emplace_back(part);
      }
      return out;
    }
    const auto* arr = n->as_array();
    if (!arr) fail(key, "a list of strings");
    for (const auto& item : *arr) {
      if (!item.is_string()) fail(key, "a list of strings");
      out.push_back(item.as_string()->get());
    }
    return out;
  }

  const toml::table* sub(std::string_view key) {
    seen_.emplace_back(key);
    if (!table_) return nullptr;
    const toml::node* n = table_->get(key);
    if (!n) return nullptr;
    if (!n->is_table()) fail(key, "a table");
    return n->as_table();
  }

  void done() const {
    if (!table_) return;
    for (const auto& [k, v] : *table_) {
      if (std::find(seen_.begin(), seen_.end(), k.str()) == seen_.end()) {
        throw ConfigError("unknown config key '" + qualified(k.str()) + "'");
      }
    }
  }

  [[noreturn]] void fail(std::string_view key, std::string_view what) const {
    throw ConfigError("config key '" + qualified(key) + "' must be " + std::string(what));
  }

  std::string qualified(std::string_view key) const {
    return name_.empty() ? std::string(key) : name_ + "." + std::string(key);
  }

 private:
  const toml::table* table_;
  std::string name_;
  std::vector<std::string> seen_;
};

template <typename T, typename Parse>
T parse_enum(Section& sec, std::string_view key, T fallback, Parse&& parse) {
  std::string raw;
  sec.read(key, raw);
  if (raw.empty()) return fallback;
  if (auto v = parse(raw)) return *v;
  throw ConfigError("config key '" + sec.qualified(key) + "' has unknown value '" + raw + "'");
}

template <typename T, typename Parse>
std::vector<T> parse_enum_list(Section& sec, std::string_view key, Parse&& parse) {
  std::vector<T> out;
  for (const auto& raw : sec.read_list(key)) {
    auto v = parse(raw);
    if (!v) throw ConfigError("config key '" + sec.qualified(key) + "' has unknown value '" + raw + "'");
    out.push_back(*v);
  }
  return out;
}

void apply_override(toml::table& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  auto parts = detail::split(path, '.');
  toml::table* t = &root;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    const std::string part(parts[i]);
    if (!t->contains(part)) t->insert(part, toml::table{});
    t = (*t)[part].as_table();
    if (!t) throw ConfigError("override '" + assignment + "': '" + part + "' is not a table");
  }
  const std::string leaf(parts.back());
  if (leaf.empty()) throw ConfigError("override '" + assignment + "' has an empty key");
  toml::table parsed;
  try {
    parsed = toml::parse("v = " + value);
  } catch (const toml::parse_error&) {
    t->insert_or_assign(leaf, value);
    return;
  }
  parsed.get("v")->visit([&](auto&& node) { t->insert_or_assign(leaf, node); });
}

}  // namespace

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) { return to_toml(a) == to_toml(b); }

ExperimentConfig parse_config(std::string_view toml_text, std::span<const std::string> overrides) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config is not valid TOML: " << e.description() << " (line " << e.source().begin.line << ")";
    throw ConfigError(msg.str());
  }
  for (const auto& o : overrides) apply_override(root, o);

  ExperimentConfig cfg;
  Section top(&root, "");
  top.read("seed", cfg.seed);
  top.read("out_dir", cfg.out_dir);

  Section paths(top.sub("paths"), "paths");
  paths.read("train", cfg.paths.train);
  paths.read("test", cfg.paths.test);
  paths.read("triplets", cfg.paths.triplets);
  paths.read("kg_test", cfg.paths.kg_test);
  paths.read("annotations", cfg.paths.annotations);
  paths.read("entity_aliases", cfg.paths.entity_aliases);
  paths.read("external", cfg.paths.external);
  paths.read("word_vectors", cfg.paths.word_vectors);
  paths.read("grouping", cfg.paths.grouping);
  if (const auto* tables = paths.sub("entity_tables")) {
    Section sec(tables, "paths.entity_tables");
    for (const auto& [k, v] : *tables) {
      const auto src = parse_entity_source(k.str());
      if (!src) throw ConfigError("unknown entity source '" + std::string(k.str()) + "' in paths.entity_tables");
      fs::path p;
      sec.read(k.str(), p);
      if (!p.empty()) cfg.paths.entity_tables[to_string(*src)] = p;
    }
    sec.done();
  }
  paths.done();

  Section features(top.sub("features"), "features");
  cfg.l_rep = parse_enum(features, "l_rep", cfg.l_rep, parse_language_source);
  cfg.m_ent = parse_enum(features, "m_ent", cfg.m_ent, parse_entity_source);
  cfg.e_com = parse_enum(features, "e_com", cfg.e_com, parse_combination_or_none);
  features.read("lowercase", cfg.tfidf.lowercase);
  features.read("min_df", cfg.tfidf.min_df);
  features.done();

  bool head_seed = false, kg_seed = false;
  Section head(top.sub("head"), "head");
  cfg.mode = parse_enum(head, "mode", cfg.mode, parse_head_mode);
  head.read("learning_rate", cfg.head.learning_rate);
  head.read("epochs", cfg.head.epochs);
  head.read("batch_size", cfg.head.batch_size);
  head.read("l2", cfg.head.l2);
  head_seed = head.has("seed");
  head.read("seed", cfg.head.seed);
  head.done();

  Section kg(top.sub("kg"), "kg");
  kg.read("dim", cfg.kg.dim);
  kg.read("epochs", cfg.kg.epochs);
  kg.read("learning_rate", cfg.kg.learning_rate);
  kg.read("margin", cfg.kg.margin);
  kg.read("negatives", cfg.kg.negatives_per_positive);
  kg.read("batch_size", cfg.kg.batch_size);
  kg.read("regularization", cfg.kg.regularization);
  kg_seed = kg.has("seed");
  kg.read("seed", cfg.kg.seed);
  kg.done();

  Section linking(top.sub("linking"), "linking");
  linking.read("endpoint", cfg.linking.endpoint);
  linking.read("confidence", cfg.linking.confidence);
  linking.read("live", cfg.linking.live);
  linking.read("max_in_flight", cfg.linking.max_in_flight);
  linking.done();

  Section grid(top.sub("grid"), "grid");
  cfg.grid.l_rep = parse_enum_list<LanguageSource>(grid, "l_rep", parse_language_source);
  cfg.grid.m_ent = parse_enum_list<EntitySource>(grid, "m_ent", parse_entity_source);
  cfg.grid.e_com = parse_enum_list<Combination>(grid, "e_com", parse_combination_or_none);
  cfg.grid.mode = parse_enum_list<HeadMode>(grid, "mode", parse_head_mode);
  grid.read("jobs", cfg.grid.jobs);
  grid.done();

  top.done();

  if (!head_seed) cfg.head.seed = cfg.seed;
  if (!kg_seed) cfg.kg.seed = cfg.seed;
  return cfg;
}

ExperimentConfig load_config(const std::optional<fs::path>& path, std::span<const std::string> overrides) {
  std::string text;
  if (path) {
    std::ifstream in(*path, std::ios::binary);
    if (!in) throw PathError("cannot read config '" + path->string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    text = buf.str();
  }
  return parse_config(text, overrides);
}

std::string to_toml(const ExperimentConfig& cfg) {
  std::ostringstream o;
  o << "seed = " << cfg.seed << '\n' << "out_dir = " << toml_quote(cfg.out_dir.string()) << "\n\n";

  const auto& p = cfg.paths;
  o << "[paths]\n"
    << "train = " << toml_quote(p.train.string()) << '\n'
    << "test = " << toml_quote(p.test.string()) << '\n'
    << "triplets = " << toml_quote(p.triplets.string()) << '\n'
    << "kg_test = " << toml_quote(p.kg_test.string()) << '\n'
    << "annotations = " << toml_quote(p.annotations.string()) << '\n'
    << "entity_aliases = " << toml_quote(p.entity_aliases.string()) << '\n'
    << "external = " << toml_quote(p.external.string()) << '\n'
    << "word_vectors = " << toml_quote(p.word_vectors.string()) << '\n'
    << "grouping = " << toml_quote(p.grouping.string()) << "\n\n";
  o << "[paths.entity_tables]\n";
  for (const auto& [k, v] : p.entity_tables) o << k << " = " << toml_quote(v.string()) << '\n';
  o << '\n';

  o << "[features]\n"
    << "l_rep = " << toml_quote(to_string(cfg.l_rep)) << '\n'
    << "m_ent = " << toml_quote(to_string(cfg.m_ent)) << '\n'
    << "e_com = " << toml_quote(to_string(cfg.e_com)) << '\n'
    << "lowercase = " << (cfg.tfidf.lowercase ? "true" : "false") << '\n'
    << "min_df = " << cfg.tfidf.min_df << "\n\n";

  o << "[head]\n"
    << "mode = " << toml_quote(to_string(cfg.mode)) << '\n'
    << "learning_rate = " << toml_real(cfg.head.learning_rate) << '\n'
    << "epochs = " << cfg.head.epochs << '\n'
    << "batch_size = " << cfg.head.batch_size << '\n'
    << "l2 = " << toml_real(cfg.head.l2) << '\n'
    << "seed = " << cfg.head.seed << "\n\n";

  o << kg_section(cfg.kg) << '\n';

  o << "[linking]\n"
    << "endpoint = " << toml_quote(cfg.linking.endpoint) << '\n'
    << "confidence = " << toml_real(cfg.linking.confidence) << '\n'
    << "live = " << (cfg.linking.live ? "true" : "false") << '\n'
    << "max_in_flight = " << cfg.linking.max_in_flight << "\n\n";

  const auto& g = cfg.grid;
  o << "[grid]\n"
    << "l_rep = " << toml_list(g.l_rep, [](auto v) { return std::string(to_string(v)); }) << '\n'
    << "m_ent = " << toml_list(g.m_ent, [](auto v) { return to_string(v); }) << '\n'
    << "e_com = " << toml_list(g.e_com, [](const auto& v) { return to_string(v); }) << '\n'
    << "mode = " << toml_list(g.mode, [](auto v) { return std::string(to_string(v)); }) << '\n'
    << "jobs = " << g.jobs << '\n';
  return o.str();
}

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Ingest: return "ingest";
    case Stage::Annotate: return "annotate";
    case Stage::TrainKg: return "train-kg";
    case Stage::EvalKg: return "eval-kg";
    case Stage::Featurize: return "featurize";
    case Stage::Train: return "train";
    case Stage::Predict: return "predict";
    case Stage::Evaluate: return "evaluate";
    case Stage::Report: return "report";
    case Stage::Grid: return "grid";
  }
  return "?";
}

namespace {

void require(const fs::path& p, std::string_view key, Stage stage) {
  if (p.empty()) {
    throw ConfigError("'" + std::string(to_string(stage)) + "' needs " + std::string(key) + " to be set");
  }
}

void push_unique(std::vector<fs::path>& out, const fs::path& p) {
  if (!p.empty() && std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
}

std::optional<fs::path> table_path(const ExperimentConfig& cfg, const EntitySource& src) {
  if (auto it = cfg.paths.entity_tables.find(to_string(src)); it != cfg.paths.entity_tables.end()) return it->second;
  return std::nullopt;
}

void check_combination(LanguageSource l_rep, const Combination& e_com) {
  if (e_com == CombinationMethod::Similarity && l_rep != LanguageSource::Tfidf) {
    throw ConfigError("e_com = similarity is only defined with l_rep = tfidf (got " + std::string(to_string(l_rep)) +
                      ")");
  }
}

/// Files the feature builder reads for one model configuration.
void feature_inputs(const ExperimentConfig& cfg, LanguageSource l_rep, const EntitySource& m_ent,
                    const Combination& e_com, Stage stage, std::vector<fs::path>& out) {
  if (l_rep == LanguageSource::External) {
    require(cfg.paths.external, "paths.external", stage);
    push_unique(out, cfg.paths.external);
  }
  if (l_rep == LanguageSource::AvgWord) {
    require(cfg.paths.word_vectors, "paths.word_vectors", stage);
    push_unique(out, cfg.paths.word_vectors);
  }
  if (!e_com) return;
  push_unique(out, cfg.paths.entity_aliases);
  if (*e_com == CombinationMethod::Similarity) {
    require(cfg.paths.triplets, "paths.triplets", stage);
    push_unique(out, cfg.paths.triplets);
    return;
  }
  if (auto t = table_path(cfg, m_ent)) {
    push_unique(out, *t);
  } else if (m_ent.kg) {
    require(cfg.paths.triplets, "paths.triplets (or paths.entity_tables." + to_string(m_ent) + ")", stage);
    push_unique(out, cfg.paths.triplets);
  } else {
    throw ConfigError("m_ent = wikipedia2vec needs paths.entity_tables.wikipedia2vec");
  }
}

}  // namespace

std::vector<fs::path> stage_inputs(const ExperimentConfig& cfg, Stage stage) {
  std::vector<fs::path> out;
  const auto& p = cfg.paths;
  switch (stage) {
    case Stage::Ingest:
    case Stage::Annotate:
      if (p.train.empty() && p.test.empty()) {
        throw ConfigError("'" + std::string(to_string(stage)) + "' needs paths.train or paths.test");
      }
      push_unique(out, p.train);
      push_unique(out, p.test);
      if (stage == Stage::Annotate) push_unique(out, p.annotations);
      break;
    case Stage::TrainKg:
      if (!cfg.m_ent.kg) throw ConfigError("'train-kg' needs a KG model in features.m_ent, not wikipedia2vec");
      require(p.triplets, "paths.triplets", stage);
      push_unique(out, p.triplets);
      break;
    case Stage::EvalKg:
      if (!cfg.m_ent.kg) throw ConfigError("'eval-kg' needs a KG model in features.m_ent, not wikipedia2vec");
      require(p.triplets, "paths.triplets", stage);
      require(p.kg_test, "paths.kg_test", stage);
      push_unique(out, p.triplets);
      push_unique(out, p.kg_test);
      if (auto t = table_path(cfg, cfg.m_ent)) push_unique(out, *t);
      break;
    case Stage::Featurize:
    case Stage::Train:
      require(p.train, "paths.train", stage);
      push_unique(out, p.train);
      if (stage == Stage::Featurize) push_unique(out, p.test);
      push_unique(out, p.annotations);
      feature_inputs(cfg, cfg.l_rep, cfg.m_ent, cfg.e_com, stage, out);
      break;
    case Stage::Predict:
      require(p.test, "paths.test", stage);
      push_unique(out, p.test);
      push_unique(out, p.annotations);
      feature_inputs(cfg, cfg.l_rep, cfg.m_ent, cfg.e_com, stage, out);
      break;
    case Stage::Evaluate:
      require(p.test, "paths.test", stage);
      push_unique(out, p.test);
      break;
    case Stage::Report:
      require(p.test, "paths.test", stage);
      push_unique(out, p.test);
      push_unique(out, p.annotations);
      push_unique(out, p.grouping);
      break;
    case Stage::Grid:
      require(p.train, "paths.train", stage);
      require(p.test, "paths.test", stage);
      push_unique(out, p.train);
      push_unique(out, p.test);
      push_unique(out, p.annotations);
      for (const auto& cell : grid_cells(cfg)) feature_inputs(cfg, cell.l_rep, cell.m_ent, cell.e_com, stage, out);
      break;
  }
  return out;
}

void validate(const ExperimentConfig& cfg, Stage stage) {
  if (stage != Stage::Grid) check_combination(cfg.l_rep, cfg.e_com);
  if (cfg.head.epochs < 1 || cfg.head.batch_size < 1 || !(cfg.head.learning_rate > 0) || cfg.head.l2 < 0) {
    throw ConfigError("head: epochs and batch_size must be >= 1, learning_rate > 0, l2 >= 0");
  }
  if (cfg.kg.dim < 1 || cfg.kg.epochs < 1 || cfg.kg.batch_size < 1 || cfg.kg.negatives_per_positive < 1 ||
      !(cfg.kg.learning_rate > 0) || cfg.kg.regularization < 0 || !(cfg.kg.margin > 0)) {
    throw ConfigError("kg: dim, epochs, batch_size, negatives must be >= 1; learning_rate, margin > 0");
  }
  if (cfg.tfidf.min_df < 1) throw ConfigError("features.min_df must be >= 1");
  if (!(cfg.linking.confidence >= 0 && cfg.linking.confidence <= 1)) {
    throw ConfigError("linking.confidence must lie in [0, 1]");
  }
  if (cfg.linking.max_in_flight < 1) throw ConfigError("linking.max_in_flight must be >= 1");
  if (cfg.grid.jobs < 1) throw ConfigError("grid.jobs must be >= 1");
  if (stage == Stage::Grid && grid_cells(cfg).empty()) throw ConfigError("the grid has no valid cell");
  for (const auto& p : stage_inputs(cfg, stage)) {
    if (!fs::exists(p)) throw PathError("input '" + p.string() + "' does not exist");
  }
}

// ---- digests and manifests ------------------------------------------------

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) throw InvariantError("SHA-256 init failed");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::string_view bytes) { EVP_DigestUpdate(ctx_, bytes.data(), bytes.size()); }

  void update_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw PathError("cannot read '" + p.string() + "'");
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) update({buf, static_cast<std::size_t>(in.gcount())});
  }

  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, md, &len);
    std::ostringstream o;
    for (unsigned i = 0; i < len; ++i) o << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return o.str();
  }

 private:
  EVP_MD_CTX* ctx_;
};

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  Sha256 h;
  h.update(bytes);
  return h.hex();
}

std::string sha256_path(const fs::path& path) {
  Sha256 h;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(path)) {
      if (entry.is_regular_file()) files.push_back(fs::relative(entry.path(), path));
    }
    std::sort(files.begin(), files.end());
    for (const auto& rel : files) {
      h.update(rel.generic_string());
      h.update(std::string_view("\0", 1));
      h.update_file(path / rel);
      h.update(std::string_view("\0", 1));
    }
  } else {
    h.update_file(path);
  }
  return h.hex();
}

std::string Manifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["arguments"] = arguments;
  j["config_sha256"] = config_sha256;
  j["seeds"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : seeds) j["seeds"][k] = v;
  j["inputs"] = nlohmann::ordered_json::array();
  for (const auto& [p, d] : inputs) j["inputs"].push_back({{"path", p}, {"sha256", d}});
  j["config"] = config_toml;
  return j.dump(2) + "\n";
}

Manifest Manifest::from_json(std::string_view text) {
  Manifest m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.command = j.at("command").get<std::string>();
    m.arguments = j.at("arguments").get<std::vector<std::string>>();
    m.config_sha256 = j.at("config_sha256").get<std::string>();
    for (const auto& [k, v] : j.at("seeds").items()) m.seeds[k] = v.get<std::uint64_t>();
    for (const auto& in : j.at("inputs")) {
      m.inputs.emplace_back(in.at("path").get<std::string>(), in.at("sha256").get<std::string>());
    }
    m.config_toml = j.at("config").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

Manifest make_manifest(const ExperimentConfig& cfg, Stage stage, std::string command,
                       std::vector<std::string> arguments) {
  Manifest m;
  m.command = std::move(command);
  m.arguments = std::move(arguments);
  m.config_toml = to_toml(cfg);
  m.config_sha256 = sha256_hex(m.config_toml);
  m.seeds = {{"seed", cfg.seed}, {"head.seed", cfg.head.seed}, {"kg.seed", cfg.kg.seed}};
  for (const auto& p : stage_inputs(cfg, stage)) m.inputs.emplace_back(p.string(), sha256_path(p));
  return m;
}

fs::path write_manifest(const ExperimentConfig& cfg, const Manifest& m) {
  const fs::path path = cfg.out_dir / "manifests" / (m.command + ".json");
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PathError("cannot write '" + path.string() + "'");
  out << m.to_json();
  return path;
}

// ---- pipeline -------------------------------------------------------------

Corpus load_corpus(const fs::path& transcripts, const std::vector<SentenceAnnotation>& annotations,
                   double min_confidence) {
  Corpus c;
  c.sentences = load_transcripts(transcripts);
  const auto join = join_annotations(c.sentences, annotations);
  for (const auto& s : c.sentences) {
    auto& ents = c.entities[s.key()];
    if (auto it = join.mentions.find(s.key()); it != join.mentions.end()) {
      std::vector<EntityMention> kept;
      for (const auto& m : it->second) {
        if (m.confidence >= min_confidence) kept.push_back(m);
      }
      ents = entity_set(kept);
    }
  }
  return c;
}

std::vector<SentenceAnnotation> load_annotations_if_any(const ExperimentConfig& cfg) {
  if (cfg.paths.annotations.empty()) return {};
  return load_annotations(cfg.paths.annotations);
}

KgTable obtain_entity_table(const ExperimentConfig& cfg, const EntitySource& source,
                            const std::function<bool(std::string_view)>& keep) {
  if (auto t = table_path(cfg, source)) return load_table(*t, keep);
  if (!source.kg) throw ConfigError("m_ent = wikipedia2vec needs paths.entity_tables.wikipedia2vec");
  if (cfg.paths.triplets.empty()) {
    throw ConfigError("no table for " + to_string(source) + " and no paths.triplets to train one from");
  }
  const std::string name = to_string(source);
  const fs::path dir = cfg.out_dir / "kg";
  const fs::path table_file = dir / (name + ".emb");
  const fs::path key_file = dir / (name + ".key");
  const std::string key = sha256_hex(sha256_path(cfg.paths.triplets) + "\n" + kg_section(cfg.kg) + name);

  if (fs::exists(table_file) && fs::exists(key_file)) {
    std::ifstream in(key_file);
    std::string cached;
    std::getline(in, cached);
    if (cached == key) return load_table(table_file, keep);
  }

  const auto graph = load_triplets(cfg.paths.triplets);
  auto result = train(graph, *source.kg, cfg.kg);
  fs::create_directories(dir);
  save_table(result.table, table_file);
  {
    std::ofstream loss(dir / (name + ".loss.tsv"), std::ios::binary | std::ios::trunc);
    loss << "epoch\tloss\n";
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
      loss << e + 1 << '\t' << format_real(result.epoch_loss[e]) << '\n';
    }
  }
  {
    std::ofstream out(key_file, std::ios::binary | std::ios::trunc);
    out << key << '\n';
  }
  if (!keep) return std::move(result.table);
  return load_table(table_file, keep);
}

KgEvaluation evaluate_kg(const ExperimentConfig& cfg) {
  const auto graph = load_triplets(cfg.paths.triplets);
  KgEvaluation out;
  const auto held_out = resolve_triplets(graph, cfg.paths.kg_test, &out.skipped);
  const KgTable table = obtain_entity_table(cfg, cfg.m_ent);
  if (!table.kind) throw DataError("the " + to_string(cfg.m_ent) + " table has no scoring model");

  std::vector<std::optional<std::uint32_t>> ent_map(graph.num_entities()), rel_map(graph.num_relations());
  std::unordered_map<std::string_view, std::uint32_t> rel_index;
  for (std::size_t r = 0; r < table.num_relations(); ++r) rel_index.emplace(table.relation_names[r], r);
  for (std::size_t e = 0; e < ent_map.size(); ++e) {
    if (auto id = table.find_entity(graph.entities().name(static_cast<std::uint32_t>(e)))) {
      ent_map[e] = index_of(*id);
    }
  }
  for (std::size_t r = 0; r < rel_map.size(); ++r) {
    if (auto it = rel_index.find(graph.relations().name(static_cast<std::uint32_t>(r))); it != rel_index.end()) {
      rel_map[r] = it->second;
    }
  }
  auto remap = [&](const Triplet& t) -> std::optional<Triplet> {
    const auto h = ent_map[index_of(t.head)], tl = ent_map[index_of(t.tail)];
    const auto r = rel_map[index_of(t.relation)];
    if (!h || !tl || !r) return std::nullopt;
    return Triplet{EntityId{*h}, RelationId{*r}, EntityId{*tl}};
  };
  TripletSet known;
  std::vector<Triplet> test;
  for (const auto& t : graph.triplets()) {
    if (auto m = remap(t)) known.insert(*m);
  }
  for (const auto& t : held_out) {
    if (auto m = remap(t)) {
      known.insert(*m);
      test.push_back(*m);
    } else {
      ++out.skipped;
    }
  }
  if (test.empty()) throw DataError("no held-out triplet can be scored by the " + to_string(cfg.m_ent) + " table");
  out.result = link_prediction_eval(table, test, known);
  return out;
}

struct Resources::State {
  ExperimentConfig cfg;
  std::set<std::string, std::less<>> keys;  // table keys worth keeping
  std::mutex mutex;
  std::optional<WordVectors> words;
  std::optional<SentenceRepMap> external;
  std::map<std::string, std::unique_ptr<EntityEmbeddings>> embeddings;
  std::unique_ptr<KnowledgeGraph> graph;
  std::optional<std::map<std::string, std::string, std::less<>>> aliases;
  std::optional<GraphEntityResolver> resolver;

  const std::map<std::string, std::string, std::less<>>& load_aliases() {
    if (!aliases) {
      aliases = cfg.paths.entity_aliases.empty() ? std::map<std::string, std::string, std::less<>>{}
                                                 : load_entity_aliases(cfg.paths.entity_aliases);
    }
    return *aliases;
  }

  const KnowledgeGraph& load_graph() {
    if (!graph) {
      if (cfg.paths.triplets.empty()) throw ConfigError("similarity features need paths.triplets");
      graph = std::make_unique<KnowledgeGraph>(load_triplets(cfg.paths.triplets));
    }
    return *graph;
  }
};

Resources::Resources(ExperimentConfig cfg, std::set<std::string, std::less<>> uris)
    : state_(std::make_unique<State>()) {
  state_->cfg = std::move(cfg);
  const auto& aliases = state_->load_aliases();
  for (const auto& uri : uris) {
    for (auto& k : entity_key_candidates(uri)) state_->keys.insert(std::move(k));
    if (auto it = aliases.find(uri); it != aliases.end()) state_->keys.insert(it->second);
  }
}

Resources::~Resources() = default;

const WordVectors& Resources::words() {
  std::lock_guard lock(state_->mutex);
  if (!state_->words) state_->words = WordVectors::load(state_->cfg.paths.word_vectors);
  return *state_->words;
}

const SentenceRepMap& Resources::external() {
  std::lock_guard lock(state_->mutex);
  if (!state_->external) state_->external = load_external(state_->cfg.paths.external);
  return *state_->external;
}

const EntityEmbeddings& Resources::embeddings(const EntitySource& source) {
  std::lock_guard lock(state_->mutex);
  auto& slot = state_->embeddings[to_string(source)];
  if (!slot) {
    const auto& keys = state_->keys;
    auto table = obtain_entity_table(state_->cfg, source, [&keys](std::string_view k) { return keys.contains(k); });
    slot = std::make_unique<EntityEmbeddings>(std::move(table), state_->load_aliases());
    slot->table().find_entity("");  // build the name index before the table is shared
  }
  return *slot;
}

const KnowledgeGraph& Resources::graph() {
  std::lock_guard lock(state_->mutex);
  return state_->load_graph();
}

const GraphEntityResolver& Resources::resolver() {
  std::lock_guard lock(state_->mutex);
  if (!state_->resolver) state_->resolver = graph_resolver(state_->load_graph(), &state_->load_aliases());
  return *state_->resolver;
}

FeatureBuilder::FeatureBuilder(const ExperimentConfig& cfg, Resources& resources, std::optional<TfidfModel> tfidf)
    : cfg_(cfg), resources_(resources), tfidf_(std::move(tfidf)) {
  if (cfg_.l_rep == LanguageSource::Tfidf && !tfidf_) throw InvariantError("TF.IDF features need a fitted model");
}

std::optional<TfidfModel> FeatureBuilder::fit_language(const ExperimentConfig& cfg, const Corpus& train) {
  if (cfg.l_rep != LanguageSource::Tfidf) return std::nullopt;
  std::vector<std::string> texts;
  texts.reserve(train.sentences.size());
  for (const auto& s : train.sentences) texts.push_back(preprocessed_text(s));
  return TfidfModel::fit(texts, cfg.tfidf);
}

SentenceRep FeatureBuilder::language(const TranscriptSentence& s) const {
  switch (cfg_.l_rep) {
    case LanguageSource::Tfidf: return tfidf_->transform(s.key(), preprocessed_text(s));
    case LanguageSource::AvgWord: return resources_.words().average(s.key(), preprocessed_text(s));
    case LanguageSource::External: {
      const auto& ext = resources_.external();
      const auto it = ext.find(s.key());
      if (it == ext.end()) {
        throw DataError("no external sentence vector for '" + s.key() + "' in '" + cfg_.paths.external.string() + "'");
      }
      return it->second;
    }
  }
  throw InvariantError("unknown language source");
}

std::vector<FusedVector> FeatureBuilder::features(const TranscriptSentence& s,
                                                  std::span<const std::string> entities) const {
  const SentenceRep l = language(s);
  if (!cfg_.e_com) return {fuse(l, VectorX<double>())};
  if (*cfg_.e_com == CombinationMethod::Similarity) {
    return {fuse(l, similarity_features(entities, resources_.graph(), resources_.resolver()))};
  }
  const auto& emb = resources_.embeddings(cfg_.m_ent);
  const auto instances =
      build_instances(s.key(), entities, [&emb](std::string_view uri) { return emb.lookup(uri); }, emb.dim());
  std::vector<FusedVector> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back(fuse(l, combine(inst, *cfg_.e_com)));
  return out;
}

std::set<std::string, std::less<>> corpus_uris(std::initializer_list<const Corpus*> corpora) {
  std::set<std::string, std::less<>> out;
  for (const Corpus* c : corpora) {
    if (!c) continue;
    for (const auto& [key, ents] : c->entities) out.insert(ents.begin(), ents.end());
  }
  return out;
}

namespace {

const std::vector<std::string>& entities_of(const Corpus& c, const TranscriptSentence& s) {
  static const std::vector<std::string> none;
  const auto it = c.entities.find(s.key());
  return it == c.entities.end() ? none : it->second;
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw PathError("cannot write '" + p.string() + "'");
  return out;
}

}  // namespace

std::vector<FeatureSummary> featurize(const ExperimentConfig& cfg, Resources& resources, const Corpus& train,
                                      const Corpus* test, const fs::path& dir) {
  auto tfidf = FeatureBuilder::fit_language(cfg, train);
  if (tfidf) tfidf->save(dir / "features" / "tfidf.tsv");
  FeatureBuilder builder(cfg, resources, tfidf);
  const EntityEmbeddings* emb = nullptr;
  if (cfg.e_com && *cfg.e_com != CombinationMethod::Similarity) emb = &resources.embeddings(cfg.m_ent);

  auto rows = open_out(dir / "features" / "instances.tsv");
  rows << "split\tsentence\thead\ttail\tdim\n";
  std::vector<FeatureSummary> out;
  auto run = [&](const Corpus& c, std::string split) {
    FeatureSummary sum;
    sum.split = std::move(split);
    for (const auto& s : c.sentences) {
      const auto& ents = entities_of(c, s);
      const auto xs = builder.features(s, ents);
      ++sum.sentences;
      sum.instances += xs.size();
      sum.entities += ents.size();
      if (!xs.empty()) sum.dim = xs.front().dim();
      if (emb) {
        for (const auto& e : ents) sum.entities_embedded += emb->lookup(e) ? 1 : 0;
        const auto insts = build_instances(s.key(), ents, [](std::string_view) { return std::nullopt; }, 0);
        for (std::size_t i = 0; i < insts.size(); ++i) {
          rows << sum.split << '\t' << s.key() << '\t' << insts[i].head_uri.value_or("MISSING") << '\t'
               << insts[i].tail_uri.value_or("MISSING") << '\t' << xs[i].dim() << '\n';
        }
      } else {
        for (const auto& x : xs) rows << sum.split << '\t' << s.key() << "\t-\t-\t" << x.dim() << '\n';
      }
    }
    out.push_back(std::move(sum));
  };
  run(train, "train");
  if (test) run(*test, "test");

  auto summary = open_out(dir / "features" / "summary.tsv");
  summary << "split\tsentences\tinstances\tentities\tentities_embedded\tdim\n";
  for (const auto& s : out) {
    summary << s.split << '\t' << s.sentences << '\t' << s.instances << '\t' << s.entities << '\t'
            << s.entities_embedded << '\t' << s.dim << '\n';
  }
  return out;
}

FusionHead train_model(const ExperimentConfig& cfg, Resources& resources, const Corpus& train, const fs::path& dir) {
  auto tfidf = FeatureBuilder::fit_language(cfg, train);
  FeatureBuilder builder(cfg, resources, tfidf);
  std::vector<FusedVector> xs;
  std::vector<int> labels;
  std::vector<int> sentence_labels;
  for (const auto& s : train.sentences) {
    if (!s.label) throw DataError("training sentence '" + s.key() + "' has no label");
    sentence_labels.push_back(*s.label);
    for (auto& x : builder.features(s, entities_of(train, s))) {
      xs.push_back(std::move(x));
      labels.push_back(*s.label);
    }
  }
  if (xs.empty()) throw DataError("the training corpus is empty");
  auto head = train_head(xs, labels, cfg.mode, cfg.head, class_weights(sentence_labels));
  save_head(head, dir / "model" / "head.txt");
  if (tfidf) tfidf->save(dir / "model" / "tfidf.tsv");
  return head;
}

std::vector<SentenceScore> predict_runs(const ExperimentConfig& cfg, Resources& resources, const Corpus& test,
                                        const fs::path& dir) {
  const fs::path head_file = dir / "model" / "head.txt";
  if (!fs::exists(head_file)) throw PathError("no trained model at '" + head_file.string() + "'; run 'train' first");
  const auto head = load_head(head_file);
  if (head.mode != cfg.mode) {
    throw ConfigError("the saved model is a " + std::string(to_string(head.mode)) + " head but mode = " +
                      std::string(to_string(cfg.mode)));
  }
  std::optional<TfidfModel> tfidf;
  if (cfg.l_rep == LanguageSource::Tfidf) tfidf = TfidfModel::load(dir / "model" / "tfidf.tsv");
  FeatureBuilder builder(cfg, resources, std::move(tfidf));

  std::vector<SentenceScore> scores;
  scores.reserve(test.sentences.size());
  for (const auto& s : test.sentences) {
    const auto xs = builder.features(s, entities_of(test, s));
    if (xs.front().dim() != head.dim()) {
      throw DataError("features have " + std::to_string(xs.front().dim()) + " dimensions but the model expects " +
                      std::to_string(head.dim()));
    }
    scores.push_back({s.debate_id, s.line_no, predict_sentence(head, xs)});
  }

  const fs::path runs = dir / "runs";
  fs::remove_all(runs);
  fs::create_directories(runs);
  std::ofstream out;
  std::string current;
  for (const auto& sc : scores) {
    if (sc.debate_id != current || !out.is_open()) {
      if (out.is_open()) out.close();
      current = sc.debate_id;
      out = open_out(runs / (current + ".tsv"));
    }
    out << sc.line_no << '\t' << format_real(sc.score) << '\n';
  }
  return scores;
}

std::map<std::string, std::map<int, double>> load_runs(const fs::path& runs_dir) {
  if (!fs::is_directory(runs_dir)) throw PathError("run directory '" + runs_dir.string() + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(runs_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".tsv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::map<std::string, std::map<int, double>> out;
  for (const auto& f : files) {
    auto& debate = out[f.stem().string()];
    detail::LineReader reader(f);
    std::string line;
    while (reader.next(line)) {
      if (line.empty()) continue;
      const auto fields = detail::split(line, '\t');
      if (fields.size() != 2) throw ParseError("expected 'line<TAB>score' at " + reader.where());
      int line_no = 0;
      const auto res = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), line_no);
      if (res.ec != std::errc() || res.ptr != fields[0].data() + fields[0].size()) {
        throw ParseError("bad line number '" + std::string(fields[0]) + "' at " + reader.where());
      }
      double score = 0;
      try {
        score = parse_real(fields[1]);
      } catch (const ParseError& e) {
        throw ParseError(std::string(e.what()) + " at " + reader.where());
      }
      if (!debate.emplace(line_no, score).second) {
        throw ParseError("line " + std::to_string(line_no) + " scored twice at " + reader.where());
      }
    }
  }
  return out;
}

namespace {

template <typename F>
void for_each_scored(std::span<const TranscriptSentence> gold, const std::map<std::string, std::map<int, double>>& runs,
                     F&& f) {
  std::map<std::string, std::size_t> counts;
  for (const auto& s : gold) {
    const auto d = runs.find(s.debate_id);
    if (d == runs.end()) throw DataError("no run file for debate '" + s.debate_id + "'");
    const auto it = d->second.find(s.line_no);
    if (it == d->second.end()) throw DataError("sentence '" + s.key() + "' is not scored");
    if (!s.label) throw DataError("gold sentence '" + s.key() + "' has no label");
    ++counts[s.debate_id];
    f(s, it->second);
  }
  for (const auto& [debate, lines] : runs) {
    const auto c = counts.find(debate);
    if (c == counts.end()) throw DataError("run file for unknown debate '" + debate + "'");
    if (c->second != lines.size()) throw DataError("run for '" + debate + "' scores lines absent from the gold data");
  }
}

}  // namespace

RankingResult evaluate_runs(std::span<const TranscriptSentence> gold,
                            const std::map<std::string, std::map<int, double>>& runs) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<ScoredSentence>> by_debate;
  for_each_scored(gold, runs, [&](const TranscriptSentence& s, double score) {
    if (!by_debate.contains(s.debate_id)) order.push_back(s.debate_id);
    by_debate[s.debate_id].push_back({s.line_no, score, *s.label});
  });
  std::vector<DebateRanking> debates;
  for (const auto& id : order) debates.push_back({id, rank_labels(by_debate[id])});
  return ranking_metrics(debates);
}

std::vector<int> run_labels(std::span<const TranscriptSentence> gold,
                            const std::map<std::string, std::map<int, double>>& runs) {
  std::vector<int> out;
  for_each_scored(gold, runs, [&](const TranscriptSentence&, double score) { out.push_back(score >= 0.5 ? 1 : 0); });
  return out;
}

// ---- grid -----------------------------------------------------------------

std::string GridCell::name() const {
  const bool uses_kg = e_com && *e_com != CombinationMethod::Similarity;
  return std::string(to_string(l_rep)) + "-" + (uses_kg ? to_string(m_ent) : "nokg") + "-" + to_string(e_com) + "-" +
         std::string(to_string(mode));
}

std::vector<GridCell> grid_cells(const ExperimentConfig& cfg) {
  const auto& g = cfg.grid;
  const auto l_reps = g.l_rep.empty() ? std::vector{cfg.l_rep} : g.l_rep;
  const auto m_ents = g.m_ent.empty() ? std::vector{cfg.m_ent} : g.m_ent;
  const auto e_coms = g.e_com.empty() ? std::vector{cfg.e_com} : g.e_com;
  const auto modes = g.mode.empty() ? std::vector{cfg.mode} : g.mode;
  std::vector<GridCell> out;
  std::set<std::string> seen;
  for (auto l : l_reps)
    for (const auto& m : m_ents)
      for (const auto& e : e_coms)
        for (auto mode : modes) {
          if (e == CombinationMethod::Similarity && l != LanguageSource::Tfidf) continue;
          GridCell cell{l, m, e, mode};
          if (seen.insert(cell.name()).second) out.push_back(cell);
        }
  return out;
}

std::vector<GridRow> run_grid(const ExperimentConfig& cfg) {
  const auto cells = grid_cells(cfg);
  const auto annotations = load_annotations_if_any(cfg);
  const Corpus train = load_corpus(cfg.paths.train, annotations, cfg.linking.confidence);
  const Corpus test = load_corpus(cfg.paths.test, annotations, cfg.linking.confidence);
  Resources resources(cfg, corpus_uris({&train, &test}));

  std::vector<GridRow> rows(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        ExperimentConfig cell_cfg = cfg;
        cell_cfg.l_rep = cells[i].l_rep;
        cell_cfg.m_ent = cells[i].m_ent;
        cell_cfg.e_com = cells[i].e_com;
        cell_cfg.mode = cells[i].mode;
        const fs::path dir = cfg.out_dir / "grid" / cells[i].name();
        train_model(cell_cfg, resources, train, dir);
        predict_runs(cell_cfg, resources, test, dir);
        const auto runs = load_runs(dir / "runs");
        rows[i].cell = cells[i];
        rows[i].metrics = evaluate_runs(test.sentences, runs).mean;
        if (cells[i].mode == HeadMode::Classification) {
          std::vector<int> gold;
          for (const auto& s : test.sentences) gold.push_back(s.label.value_or(0));
          rows[i].prf = prf1(gold, run_labels(test.sentences, runs));
        }
        auto out = open_out(dir / "metrics.tsv");
        ranking_table(evaluate_runs(test.sentences, runs)).write_tsv(out);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const auto jobs = std::min<std::size_t>(static_cast<std::size_t>(cfg.grid.jobs), cells.size());
    for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  const auto table = grid_table(rows);
  auto tsv = open_out(cfg.out_dir / "grid_summary.tsv");
  table.write_tsv(tsv);
  auto txt = open_out(cfg.out_dir / "grid_summary.txt");
  table.write_aligned(txt);
  return rows;
}

Table grid_table(std::span<const GridRow> rows) {
  Table t;
  t.header = {"l_rep", "m_ent", "e_com", "mode", "MAP", "MRR"};
  for (int k : kPrecisionCutoffs) t.header.push_back("P@" + std::to_string(k));
  t.header.insert(t.header.end(), {"P", "R", "F1"});
  for (const auto& r : rows) {
    const bool uses_kg = r.cell.e_com && *r.cell.e_com != CombinationMethod::Similarity;
    std::vector<std::string> row{std::string(to_string(r.cell.l_rep)), uses_kg ? to_string(r.cell.m_ent) : "-",
                                 to_string(r.cell.e_com), std::string(to_string(r.cell.mode)),
                                 format_metric(r.metrics.ap), format_metric(r.metrics.rr)};
    for (double p : r.metrics.precision) row.push_back(format_metric(p));
    if (r.prf) {
      row.insert(row.end(), {format_metric(r.prf->precision), format_metric(r.prf->recall), format_metric(r.prf->f1)});
    } else {
      row.insert(row.end(), {"n/a", "n/a", "n/a"});
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace cwkg
