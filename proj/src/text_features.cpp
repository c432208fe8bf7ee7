#include "cwkg/text_features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "cwkg/interchange.hpp"
#include "line_reader.hpp"

namespace cwkg {

Index SentenceRep::dim() const {
  return std::visit([](const auto& v) { return static_cast<Index>(v.size()); }, vector);
}

SentenceRep::Dense SentenceRep::dense() const {
  if (const auto* d = std::get_if<Dense>(&vector)) return *d;
  return Dense(std::get<Sparse>(vector));
}

namespace {

bool is_token_byte(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text, bool lowercase) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !is_token_byte(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && is_token_byte(static_cast<unsigned char>(text[i]))) ++i;
    if (i == start) continue;
    std::string tok(text.substr(start, i - start));
    if (lowercase) {
      for (auto& c : tok) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
      }
    }
    out.push_back(std::move(tok));
  }
  return out;
}

TfidfModel TfidfModel::fit(std::span<const std::string> corpus, const TfidfConfig& cfg) {
  if (corpus.empty()) throw DomainError("cannot fit TF.IDF on an empty corpus");
  std::map<std::string, std::size_t> df;
  for (const auto& sentence : corpus) {
    auto toks = tokenize(sentence, cfg.lowercase);
    std::sort(toks.begin(), toks.end());
    toks.erase(std::unique(toks.begin(), toks.end()), toks.end());
    for (auto& t : toks) ++df[t];
  }

  TfidfModel model;
  model.config_ = cfg;
  model.documents_ = corpus.size();
  std::vector<double> idf;
  const double n = static_cast<double>(corpus.size());
  for (const auto& [tok, count] : df) {
    if (static_cast<int>(count) < cfg.min_df) continue;
    model.index_.emplace(tok, static_cast<Index>(model.tokens_.size()));
    model.tokens_.push_back(tok);
    idf.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0);
  }
  if (model.tokens_.empty()) throw DomainError("TF.IDF vocabulary is empty after min_df filtering");
  model.idf_ = Eigen::Map<const VectorX<double>>(idf.data(), static_cast<Index>(idf.size()));
  return model;
}

std::optional<Index> TfidfModel::index_of(std::string_view token) const {
  if (auto it = index_.find(std::string(token)); it != index_.end()) return it->second;
  return std::nullopt;
}

SentenceRep TfidfModel::transform(std::string_view key, std::string_view sentence) const {
  std::map<Index, double> counts;
  for (const auto& tok : tokenize(sentence, config_.lowercase)) {
    if (auto idx = index_of(tok)) counts[*idx] += 1.0;
  }
  SentenceRep::Sparse v(dim());
  double norm2 = 0.0;
  for (auto& [idx, tf] : counts) {
    tf *= idf_[idx];
    norm2 += tf * tf;
  }
  const double norm = std::sqrt(norm2);
  v.reserve(static_cast<Index>(counts.size()));
  for (const auto& [idx, w] : counts) v.insert(idx) = w / norm;
  return SentenceRep{std::string(key), std::move(v), RepSource::Tfidf};
}

void TfidfModel::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PathError("cannot write '" + path.string() + "'");
  out << "#tfidf lowercase=" << (config_.lowercase ? 1 : 0) << " min_df=" << config_.min_df
      << " documents=" << documents_ << '\n';
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out << tokens_[i] << '\t' << format_real(idf_[static_cast<Index>(i)]) << '\n';
  }
}

TfidfModel TfidfModel::load(const std::filesystem::path& path) {
  detail::LineReader reader(path);
  std::string line;
  if (!reader.next(line) || !line.starts_with("#tfidf")) {
    throw FormatError("'" + path.string() + "' is not a TF.IDF model file");
  }
  TfidfModel model;
  for (auto field : detail::split_spaces(line)) {
    const auto eq = field.find('=');
    if (eq == std::string_view::npos) continue;
    const auto k = field.substr(0, eq);
    const std::string v(field.substr(eq + 1));
    if (k == "lowercase") model.config_.lowercase = v == "1";
    if (k == "min_df") model.config_.min_df = std::stoi(v);
    if (k == "documents") model.documents_ = std::stoull(v);
  }
  std::vector<double> idf;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto f = detail::split(line, '\t');
    if (f.size() != 2) throw FormatError("malformed TF.IDF entry at " + reader.where());
    model.index_.emplace(std::string(f[0]), static_cast<Index>(model.tokens_.size()));
    model.tokens_.emplace_back(f[0]);
    idf.push_back(parse_real(f[1]));
  }
  model.idf_ = Eigen::Map<const VectorX<double>>(idf.data(), static_cast<Index>(idf.size()));
  return model;
}

SentenceRepMap load_external(const std::filesystem::path& path) {
  VectorFile file = read_vector_file(path);
  SentenceRepMap out;
  for (auto& rec : file.records) {
    if (out.contains(rec.key)) throw FormatError("duplicate sentence key '" + rec.key + "' in '" + path.string() + "'");
    if (rec.values.size() != file.dim) throw FormatError("dimension mismatch for key '" + rec.key + "'");
    out.emplace(rec.key, SentenceRep{rec.key, std::move(rec.values), RepSource::External});
  }
  return out;
}

void save_sentence_reps(const std::filesystem::path& path, std::span<const SentenceRep> reps) {
  VectorFile file;
  file.dim = reps.empty() ? 0 : reps.front().dim();
  for (const auto& r : reps) {
    if (r.dim() != file.dim) throw InvariantError("sentence reps of mixed dimension");
    file.records.push_back({r.key, r.dense()});
  }
  write_vector_file(path, file);
}

WordVectors WordVectors::load(const std::filesystem::path& path) {
  VectorFile file = read_vector_file(path);
  std::vector<std::pair<std::string, VectorX<double>>> recs;
  recs.reserve(file.records.size());
  for (auto& r : file.records) recs.emplace_back(std::move(r.key), std::move(r.values));
  return from_records(file.dim, std::move(recs));
}

WordVectors WordVectors::from_records(Index dim, std::vector<std::pair<std::string, VectorX<double>>> records) {
  WordVectors wv;
  wv.dim_ = dim;
  for (auto& [k, v] : records) {
    if (v.size() != dim) throw FormatError("word vector '" + k + "' has the wrong dimension");
    wv.vectors_.try_emplace(std::move(k), std::move(v));
  }
  return wv;
}

SentenceRep WordVectors::average(std::string_view key, std::string_view sentence) const {
  VectorX<double> sum = VectorX<double>::Zero(dim_);
  std::size_t hits = 0;
  for (const auto& tok : tokenize(sentence, true)) {
    if (auto it = vectors_.find(tok); it != vectors_.end()) {
      sum += it->second;
      ++hits;
    }
  }
  if (hits > 0) sum /= static_cast<double>(hits);
  return SentenceRep{std::string(key), std::move(sum), RepSource::AvgWord};
}

}  // namespace cwkg
