#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "cwkg/common.hpp"

namespace cwkg {

enum class RepSource { Tfidf, AvgWord, External };

/// Language representation of one sentence, keyed `<debate_id>:<line_no>`.
struct SentenceRep {
  using Dense = VectorX<double>;
  using Sparse = SparseVectorX<double>;

  std::string key;
  std::variant<Dense, Sparse> vector;
  RepSource source = RepSource::Tfidf;

  Index dim() const;
  Dense dense() const;
  bool is_sparse() const { return std::holds_alternative<Sparse>(vector); }
};

/// Lower-cased maximal alphanumeric runs. Bytes >= 0x80 count as token
/// characters so multi-byte UTF-8 letters stay inside their word.
std::vector<std::string> tokenize(std::string_view text, bool lowercase = true);

struct TfidfConfig {
  bool lowercase = true;
  int min_df = 1;
};

/// Smoothed TF.IDF: idf(t) = ln((1 + N) / (1 + df(t))) + 1, tf = raw count,
/// rows L2-normalized. Vocabulary indices follow lexicographic token order.
class TfidfModel {
 public:
  static TfidfModel fit(std::span<const std::string> corpus, const TfidfConfig& cfg = {});

  SentenceRep transform(std::string_view key, std::string_view sentence) const;

  Index dim() const { return static_cast<Index>(tokens_.size()); }
  const TfidfConfig& config() const { return config_; }
  std::size_t documents() const { return documents_; }
  std::span<const std::string> tokens() const { return tokens_; }
  const VectorX<double>& idf() const { return idf_; }
  std::optional<Index> index_of(std::string_view token) const;

  void save(const std::filesystem::path& path) const;
  static TfidfModel load(const std::filesystem::path& path);

  friend bool operator==(const TfidfModel& a, const TfidfModel& b) {
    return a.tokens_ == b.tokens_ && a.idf_ == b.idf_ && a.documents_ == b.documents_ &&
           a.config_.lowercase == b.config_.lowercase && a.config_.min_df == b.config_.min_df;
  }

 private:
  TfidfConfig config_;
  std::size_t documents_ = 0;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, Index> index_;
  VectorX<double> idf_;
};

using SentenceRepMap = std::map<std::string, SentenceRep, std::less<>>;

/// Dense sentence vectors computed out of process (interchange format keyed by
/// sentence key). Rejects mixed dimensions and duplicate keys.
SentenceRepMap load_external(const std::filesystem::path& path);

void save_sentence_reps(const std::filesystem::path& path, std::span<const SentenceRep> reps);

/// Averaged pretrained word vectors.
class WordVectors {
 public:
  static WordVectors load(const std::filesystem::path& path);
  static WordVectors from_records(Index dim, std::vector<std::pair<std::string, VectorX<double>>> records);

  /// Mean of in-vocabulary token vectors; zero vector when every token is OOV.
  SentenceRep average(std::string_view key, std::string_view sentence) const;

  Index dim() const { return dim_; }

 private:
  Index dim_ = 0;
  std::unordered_map<std::string, VectorX<double>> vectors_;
};

}  // namespace cwkg
