#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cwkg/entity_pipeline.hpp"
#include "cwkg/evaluation.hpp"
#include "cwkg/fusion.hpp"
#include "cwkg/kg_embed.hpp"
#include "cwkg/text_features.hpp"

namespace cwkg {

enum class LanguageSource { Tfidf, AvgWord, External };

std::string_view to_string(LanguageSource s);
std::optional<LanguageSource> parse_language_source(std::string_view name);

/// Entity embedding source: a trained KG model, or pretrained Wikipedia2Vec
/// vectors when `kg` is empty.
struct EntitySource {
  std::optional<KgModelKind> kg;

  friend bool operator==(const EntitySource&, const EntitySource&) = default;
};

/// "wikipedia2vec" or the lower-case model name.
std::string to_string(EntitySource s);
std::optional<EntitySource> parse_entity_source(std::string_view name);

/// Entity-pair combination; empty means a text-only model.
using Combination = std::optional<CombinationMethod>;

std::string to_string(const Combination& c);
std::optional<Combination> parse_combination_or_none(std::string_view name);

struct ExperimentPaths {
  std::filesystem::path train;
  std::filesystem::path test;
  std::filesystem::path triplets;
  std::filesystem::path kg_test;
  std::filesystem::path annotations;
  std::filesystem::path entity_aliases;
  std::filesystem::path external;
  std::filesystem::path word_vectors;
  std::filesystem::path grouping;
  std::map<std::string, std::filesystem::path> entity_tables;  // by entity source name

  friend bool operator==(const ExperimentPaths&, const ExperimentPaths&) = default;
};

struct LinkingConfig {
  std::string endpoint = SpotlightOptions{}.endpoint;
  double confidence = kDefaultLinkConfidence;
  bool live = false;
  int max_in_flight = 4;

  friend bool operator==(const LinkingConfig&, const LinkingConfig&) = default;
};

struct GridAxes {
  std::vector<LanguageSource> l_rep;
  std::vector<EntitySource> m_ent;
  std::vector<Combination> e_com;
  std::vector<HeadMode> mode;
  int jobs = 1;

  friend bool operator==(const GridAxes&, const GridAxes&) = default;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "out";
  ExperimentPaths paths;

  LanguageSource l_rep = LanguageSource::Tfidf;
  EntitySource m_ent{KgModelKind::ComplEx};
  Combination e_com = CombinationMethod::EmbConcat;
  HeadMode mode = HeadMode::Ranking;
  TfidfConfig tfidf;
  HeadConfig head;
  TrainConfig kg;
  LinkingConfig linking;
  GridAxes grid;  // empty axes fall back to the single value above

  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);
};

/// Parses TOML text into a config. `overrides` are `section.key=value`
/// strings applied on top (a value that is not valid TOML is taken as a bare
/// string). Unknown keys and ill-typed values raise ConfigError.
ExperimentConfig parse_config(std::string_view toml_text, std::span<const std::string> overrides = {});
ExperimentConfig load_config(const std::optional<std::filesystem::path>& path,
                             std::span<const std::string> overrides = {});

/// Canonical TOML rendering: fixed key order, every field present.
std::string to_toml(const ExperimentConfig& cfg);

/// What a subcommand will read; drives validation and manifest digests.
enum class Stage { Ingest, Annotate, TrainKg, EvalKg, Featurize, Train, Predict, Evaluate, Report, Grid };

std::string_view to_string(Stage s);

/// Cross-field rules and existence of every file `stage` reads.
/// ConfigError for bad combinations, PathError for missing files.
void validate(const ExperimentConfig& cfg, Stage stage);

/// Input files `stage` reads, in a fixed order.
std::vector<std::filesystem::path> stage_inputs(const ExperimentConfig& cfg, Stage stage);

/// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view bytes);
/// Digest of a file, or of every regular file below a directory (relative
/// names and contents, in sorted order).
std::string sha256_path(const std::filesystem::path& path);

struct Manifest {
  std::string command;
  std::vector<std::string> arguments;  // subcommand-specific flags
  std::string config_toml;
  std::string config_sha256;
  std::map<std::string, std::uint64_t> seeds;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, sha256

  std::string to_json() const;
  static Manifest from_json(std::string_view text);
};

Manifest make_manifest(const ExperimentConfig& cfg, Stage stage, std::string command,
                       std::vector<std::string> arguments = {});
/// Writes `<out_dir>/manifests/<command>.json` and returns its path.
std::filesystem::path write_manifest(const ExperimentConfig& cfg, const Manifest& m);

// ---- pipeline -------------------------------------------------------------

struct Corpus {
  std::vector<TranscriptSentence> sentences;
  std::map<std::string, std::vector<std::string>, std::less<>> entities;  // E(s) by sentence key
};

/// Transcripts joined with cached annotations (mentions below the linking
/// threshold dropped). Sentences without an annotation have no entities.
Corpus load_corpus(const std::filesystem::path& transcripts, const std::vector<SentenceAnnotation>& annotations,
                   double min_confidence);

std::vector<SentenceAnnotation> load_annotations_if_any(const ExperimentConfig& cfg);

/// Trains the KG model for `source`, or reuses the copy cached under
/// `<out_dir>/kg` when triplets and KG settings are unchanged. A configured
/// table path takes precedence. Wikipedia2Vec needs a table path.
KgTable obtain_entity_table(const ExperimentConfig& cfg, const EntitySource& source,
                            const std::function<bool(std::string_view)>& keep = {});

struct KgEvaluation {
  LinkPredictionResult result;
  std::size_t skipped = 0;  // held-out triplets the table cannot express
};

/// Filtered link prediction of the `m_ent` table on `paths.kg_test`; training
/// and held-out triplets are both filtered. Entities and relations are matched
/// to the table by name.
KgEvaluation evaluate_kg(const ExperimentConfig& cfg);

/// Lazily loaded, shareable feature resources. Safe to use from several
/// threads; each resource is loaded once.
class Resources {
 public:
  /// `uris` limits which rows of large pretrained tables are kept.
  Resources(ExperimentConfig cfg, std::set<std::string, std::less<>> uris);
  ~Resources();

  const WordVectors& words();
  const SentenceRepMap& external();
  const EntityEmbeddings& embeddings(const EntitySource& source);
  const KnowledgeGraph& graph();
  const GraphEntityResolver& resolver();

 private:
  struct State;
  std::unique_ptr<State> state_;
};

/// Turns a sentence into fused instance vectors.
class FeatureBuilder {
 public:
  FeatureBuilder(const ExperimentConfig& cfg, Resources& resources, std::optional<TfidfModel> tfidf);

  /// Fits TF.IDF on the preprocessed training text when the language source is TF.IDF.
  static std::optional<TfidfModel> fit_language(const ExperimentConfig& cfg, const Corpus& train);

  /// One fused vector per instance of the sentence.
  std::vector<FusedVector> features(const TranscriptSentence& s, std::span<const std::string> entities) const;

 private:
  SentenceRep language(const TranscriptSentence& s) const;

  const ExperimentConfig& cfg_;
  Resources& resources_;
  std::optional<TfidfModel> tfidf_;
};

/// Union of E(s) over the corpora.
std::set<std::string, std::less<>> corpus_uris(std::initializer_list<const Corpus*> corpora);

struct FeatureSummary {
  std::string split;
  std::size_t sentences = 0;
  std::size_t instances = 0;
  std::size_t entities = 0;           // linked mentions after de-duplication
  std::size_t entities_embedded = 0;  // of those, found in the embedding table
  Index dim = 0;
};

/// Builds features for both splits without training. Writes
/// `features/instances.tsv` (one row per instance), `features/summary.tsv`
/// and the fitted TF.IDF model under `dir`.
std::vector<FeatureSummary> featurize(const ExperimentConfig& cfg, Resources& resources, const Corpus& train,
                                      const Corpus* test, const std::filesystem::path& dir);

struct SentenceScore {
  std::string debate_id;
  int line_no = 0;
  double score = 0.0;
};

/// Trains the head on the training corpus and writes `model/head.txt`
/// (plus `model/tfidf.tsv`) under `dir`.
FusionHead train_model(const ExperimentConfig& cfg, Resources& resources, const Corpus& train,
                       const std::filesystem::path& dir);

/// Scores every test sentence with the saved model under `dir` and writes
/// `runs/<debate_id>.tsv` (`line<TAB>score`, file order).
std::vector<SentenceScore> predict_runs(const ExperimentConfig& cfg, Resources& resources, const Corpus& test,
                                        const std::filesystem::path& dir);

/// Reads `runs/*.tsv` back.
std::map<std::string, std::map<int, double>> load_runs(const std::filesystem::path& runs_dir);

/// Ranking metrics of run files against gold labels. Every gold sentence
/// must be scored and vice versa.
RankingResult evaluate_runs(std::span<const TranscriptSentence> gold,
                            const std::map<std::string, std::map<int, double>>& runs);

/// Sentence-level labels implied by a run: scores >= 0.5 are positive.
std::vector<int> run_labels(std::span<const TranscriptSentence> gold,
                            const std::map<std::string, std::map<int, double>>& runs);

struct GridCell {
  LanguageSource l_rep;
  EntitySource m_ent;
  Combination e_com;
  HeadMode mode;

  std::string name() const;
};

/// Cartesian product of the axes. Cells pairing `similarity` with a non
/// TF.IDF source are dropped, and `similarity` / text-only cells ignore
/// `m_ent` so they appear once.
std::vector<GridCell> grid_cells(const ExperimentConfig& cfg);

struct GridRow {
  GridCell cell;
  RankingMetrics metrics;
  std::optional<Prf1> prf;
};

/// Trains, predicts and evaluates every cell under `<out_dir>/grid/<cell>`,
/// up to `grid.jobs` cells at a time, and writes `grid_summary.tsv`. Rows
/// follow cell order regardless of completion order.
std::vector<GridRow> run_grid(const ExperimentConfig& cfg);

Table grid_table(std::span<const GridRow> rows);

}  // namespace cwkg
