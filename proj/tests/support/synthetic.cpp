#include "support/synthetic.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cwkg/entity_pipeline.hpp"

namespace cwkg::testing {

namespace fs = std::filesystem;

void write_triplets(const fs::path& path, const std::vector<NamedTriplet>& facts) {
  std::ostringstream o;
  for (const auto& f : facts) o << f.head << '\t' << f.relation << '\t' << f.tail << '\n';
  write_file(path, o.str());
}

TempDir::TempDir() {
  std::string tmpl = (fs::temp_directory_path() / "cwkg-test-XXXXXX").string();
  if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
  path = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path, ec);
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

namespace {

const char* kClaimCues[] = {"percent", "million", "taxes", "jobs", "billion", "deficit", "rate", "increased"};
const char* kChatCues[] = {"thank", "you", "applause", "folks", "great", "honor", "tonight", "together"};
const char* kShared[] = {"we", "the", "have", "that", "and", "people", "country", "said"};

std::string uri(const char* prefix, std::size_t k) {
  return std::string("http://dbpedia.org/resource/") + prefix + "_" + std::to_string(k);
}

}  // namespace

void write_toy_corpus(const fs::path& root, const ToyCorpusOptions& opts) {
  Rng rng(opts.seed);
  std::vector<SentenceAnnotation> annotations;
  std::ostringstream grouping;

  auto debate = [&](const std::string& split, int d) {
    const std::string id = split + "_debate_" + std::to_string(d);
    grouping << id << '\t' << (d % 2 == 0 ? "primary" : "general") << '\n';
    std::ostringstream tsv;
    const char* speakers[] = {"SMITH", "JONES", "MODERATOR"};
    for (int line = 1; line <= opts.lines; ++line) {
      const bool positive = rng.unit() < opts.positive_rate;
      std::vector<std::string> words;
      std::vector<std::string> ents;
      const int n_words = 6 + static_cast<int>(rng.index(5));
      for (int w = 0; w < n_words; ++w) {
        const double u = rng.unit();
        if (u < 0.5) {
          words.emplace_back(kShared[rng.index(8)]);
        } else if (u < 0.8) {
          // cues are informative but noisy
          const bool claim_cue = positive ? rng.unit() < 0.75 : rng.unit() < 0.25;
          words.emplace_back(claim_cue ? kClaimCues[rng.index(8)] : kChatCues[rng.index(8)]);
        } else {
          words.emplace_back(kShared[rng.index(8)]);
        }
      }
      if (opts.entities) {
        if (positive) {
          const std::size_t a = rng.index(10);
          std::size_t b = rng.index(10);
          if (b == a) b = (a + 1) % 10;
          ents = {uri("Claim", a), uri("Claim", b)};
        } else if (rng.unit() < 0.5) {
          ents = {uri("Chat", rng.index(10))};
        }
      }
      std::string text;
      for (std::size_t w = 0; w < words.size(); ++w) text += (w ? " " : "") + words[w];
      const std::string speaker = speakers[rng.index(3)];
      SentenceAnnotation ann;
      ann.key = id + ":" + std::to_string(line);
      for (const auto& e : ents) {
        const std::string surface = e.substr(e.rfind('/') + 1);
        const std::size_t start = text.size() + 1;
        text += " " + surface;
        ann.mentions.push_back({surface, e, 0.9, start, start + surface.size()});
      }
      if (!ann.mentions.empty()) annotations.push_back(std::move(ann));
      tsv << line << '\t' << speaker << '\t' << text << '\t' << (positive ? 1 : 0) << '\n';
    }
    write_file(root / split / (id + ".tsv"), tsv.str());
  };
  for (int d = 0; d < opts.train_debates; ++d) debate("train", d);
  for (int d = 0; d < opts.test_debates; ++d) debate("test", d);

  save_annotations(root / "annotations.jsonl", annotations);
  write_file(root / "grouping.tsv", grouping.str());

  std::vector<NamedTriplet> facts;
  for (std::size_t k = 0; k < 10; ++k) {
    facts.push_back({uri("Claim", k), "policy_link", uri("Claim", (k + 1) % 10)});
    facts.push_back({uri("Claim", k), "policy_link", uri("Claim", (k + 3) % 10)});
    facts.push_back({uri("Chat", k), "social_link", uri("Chat", (k + 1) % 10)});
    facts.push_back({uri("Chat", k), "social_link", uri("Chat", (k + 4) % 10)});
  }
  write_triplets(root / "triplets.tsv", facts);
}

std::string toy_config_toml(const fs::path& root, const fs::path& out) {
  std::ostringstream o;
  o << "seed = 3\n"
    << "out_dir = \"" << out.string() << "\"\n\n"
    << "[paths]\n"
    << "train = \"" << (root / "train").string() << "\"\n"
    << "test = \"" << (root / "test").string() << "\"\n"
    << "triplets = \"" << (root / "triplets.tsv").string() << "\"\n"
    << "annotations = \"" << (root / "annotations.jsonl").string() << "\"\n"
    << "grouping = \"" << (root / "grouping.tsv").string() << "\"\n\n"
    << "[features]\n"
    << "l_rep = \"tfidf\"\nm_ent = \"complex\"\ne_com = \"emb_concat\"\n\n"
    << "[head]\nmode = \"rank\"\nepochs = 40\nbatch_size = 16\nlearning_rate = 0.5\n\n"
    << "[kg]\ndim = 8\nepochs = 30\nlearning_rate = 0.01\nbatch_size = 20\nnegatives = 4\nregularization = 0.0001\n";
  return o.str();
}

}  // namespace cwkg::testing
