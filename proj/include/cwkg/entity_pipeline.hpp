#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cwkg {

/// One transcript line. `resolved_text`, when present, is externally
/// coreference-resolved text that replaces `text` for feature extraction.
struct TranscriptSentence {
  std::string debate_id;
  int line_no = 0;
  std::string speaker;
  std::string text;
  std::optional<int> label;
  std::optional<std::string> resolved_text;

  /// `<debate_id>:<line_no>`
  std::string key() const;
};

/// Reads `line_number<TAB>speaker<TAB>text[<TAB>label[<TAB>resolved_text]]`.
/// A directory loads every `*.tsv` / `*.txt` file in it, sorted by name; the
/// debate id is the file stem.
std::vector<TranscriptSentence> load_transcripts(const std::filesystem::path& path);

struct CorpusSummary {
  std::size_t debates = 0;
  std::size_t sentences = 0;
  std::size_t positives = 0;
  double positive_rate() const {
    return sentences == 0 ? 0.0 : static_cast<double>(positives) / static_cast<double>(sentences);
  }
};

CorpusSummary summarize(std::span<const TranscriptSentence> sentences);

/// Replaces first-person pronouns (I, me, my, mine, myself and their
/// sentence-initial capitalized forms) with the speaker name; possessives get "'s".
std::string resolve_first_person(const TranscriptSentence& s);

/// Text the downstream stages consume: the pre-resolved column when present,
/// otherwise the first-person-resolved text.
std::string preprocessed_text(const TranscriptSentence& s);

struct EntityMention {
  std::string surface;
  std::string uri;
  double confidence = 0.0;
  std::size_t start = 0;  // byte offsets into the annotated text
  std::size_t end = 0;

  friend bool operator==(const EntityMention&, const EntityMention&) = default;
};

struct SentenceAnnotation {
  std::string key;
  std::vector<EntityMention> mentions;

  friend bool operator==(const SentenceAnnotation&, const SentenceAnnotation&) = default;
};

/// JSON Lines, one `{"key": ..., "mentions": [...]}` object per sentence.
std::vector<SentenceAnnotation> load_annotations(const std::filesystem::path& path);
void save_annotations(const std::filesystem::path& path, std::span<const SentenceAnnotation> annotations);

/// Distinct URIs in first-appearance order: E(s).
std::vector<std::string> entity_set(std::span<const EntityMention> mentions);

struct AnnotationJoin {
  std::map<std::string, std::vector<EntityMention>, std::less<>> mentions;  // by sentence key
  std::vector<std::string> unknown_keys;  // annotations with no matching sentence (dropped)
};

AnnotationJoin join_annotations(std::span<const TranscriptSentence> sentences,
                                std::span<const SentenceAnnotation> annotations);

inline constexpr double kDefaultLinkConfidence = 0.35;

/// Maps a Spotlight `annotate` JSON response onto mentions of `text`.
/// Offsets in the response count UTF-16 code units; they are converted to
/// byte offsets. Mentions below `min_confidence` are dropped.
std::vector<EntityMention> parse_spotlight_response(std::string_view json, std::string_view text,
                                                    double min_confidence);

struct SpotlightOptions {
  std::string endpoint = "https://api.dbpedia-spotlight.org/en/annotate";
  double confidence = kDefaultLinkConfidence;
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{250};
  std::chrono::seconds timeout{30};
};

/// DBpedia Spotlight REST client (form POST, JSON response).
class SpotlightClient {
 public:
  explicit SpotlightClient(SpotlightOptions options);

  /// Empty text short-circuits without a request. Transient failures
  /// (connection errors, 429, 5xx) are retried with exponential backoff;
  /// exhausting the attempts throws LinkingError carrying `key`.
  std::vector<EntityMention> annotate(std::string_view key, std::string_view text) const;

  const SpotlightOptions& options() const { return options_; }

 private:
  SpotlightOptions options_;
  std::string base_;
  std::string path_;
};

/// Cache-first corpus annotation. Sentences already present in `cache` are
/// reused; others are sent to `client` (when given) with at most
/// `max_in_flight` concurrent requests. Output follows sentence order.
/// Sentences left unannotated are listed in `missing`.
std::vector<SentenceAnnotation> annotate_corpus(std::span<const TranscriptSentence> sentences,
                                                std::span<const SentenceAnnotation> cache,
                                                const SpotlightClient* client, int max_in_flight,
                                                std::vector<std::string>* missing = nullptr);

}  // namespace cwkg
