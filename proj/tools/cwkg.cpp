// cwkg: check-worthiness ranking with knowledge-graph entity features.
//
// Exit status: 0 success, 1 configuration or path error, 2 data error,
// 3 numeric failure, 4 internal error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cwkg/experiment.hpp"
#include "cwkg/interchange.hpp"

namespace fs = std::filesystem;
using namespace cwkg;

namespace {

struct CommandArgs {
  std::string runs;
  std::string against;
  bool force = false;

  std::vector<std::string> to_vector() const {
    std::vector<std::string> out;
    if (!runs.empty()) out.insert(out.end(), {"--runs", runs});
    if (!against.empty()) out.insert(out.end(), {"--against", against});
    if (force) out.push_back("--force");
    return out;
  }

  static CommandArgs from_vector(const std::vector<std::string>& v) {
    CommandArgs a;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] == "--force") {
        a.force = true;
      } else if ((v[i] == "--runs" || v[i] == "--against") && i + 1 < v.size()) {
        (v[i] == "--runs" ? a.runs : a.against) = v[i + 1];
        ++i;
      } else {
        throw FormatError("manifest carries an unknown argument '" + v[i] + "'");
      }
    }
    return a;
  }
};

std::optional<Stage> parse_stage(std::string_view name) {
  for (auto s : {Stage::Ingest, Stage::Annotate, Stage::TrainKg, Stage::EvalKg, Stage::Featurize, Stage::Train,
                 Stage::Predict, Stage::Evaluate, Stage::Report, Stage::Grid}) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw PathError("cannot write '" + p.string() + "'");
  return out;
}

void note(const std::string& msg) { std::cerr << "cwkg: " << msg << '\n'; }

std::vector<TranscriptSentence> load_all(const ExperimentConfig& cfg) {
  std::vector<TranscriptSentence> all;
  for (const auto& p : {cfg.paths.train, cfg.paths.test}) {
    if (p.empty()) continue;
    auto part = load_transcripts(p);
    all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return all;
}

void cmd_ingest(const ExperimentConfig& cfg) {
  Table t;
  t.header = {"split", "debates", "sentences", "positives", "positive_rate"};
  for (const auto& [split, path] : {std::pair{"train", cfg.paths.train}, std::pair{"test", cfg.paths.test}}) {
    if (path.empty()) continue;
    const auto sentences = load_transcripts(path);
    const auto sum = summarize(sentences);
    t.rows.push_back({split, std::to_string(sum.debates), std::to_string(sum.sentences), std::to_string(sum.positives),
                      format_metric(sum.positive_rate())});
  }
  auto out = open_out(cfg.out_dir / "ingest.tsv");
  t.write_tsv(out);
  t.write_aligned(std::cout);
}

void cmd_annotate(const ExperimentConfig& cfg) {
  const fs::path target = cfg.out_dir / "annotations.jsonl";
  if (!cfg.paths.annotations.empty() && fs::exists(target) && fs::equivalent(cfg.paths.annotations, target)) {
    throw ConfigError("paths.annotations is the annotate output; point out_dir elsewhere");
  }
  const auto sentences = load_all(cfg);
  const auto cache = load_annotations_if_any(cfg);
  std::optional<SpotlightClient> client;
  if (cfg.linking.live) {
    SpotlightOptions opts;
    opts.endpoint = cfg.linking.endpoint;
    opts.confidence = cfg.linking.confidence;
    client.emplace(opts);
  }
  std::vector<std::string> missing;
  const auto annotations =
      annotate_corpus(sentences, cache, client ? &*client : nullptr, cfg.linking.max_in_flight, &missing);
  save_annotations(target, annotations);
  std::cout << "annotated " << annotations.size() << " of " << sentences.size() << " sentences -> " << target.string()
            << '\n';
  if (!missing.empty()) {
    note(std::to_string(missing.size()) + " sentences have no cached annotation" +
         (cfg.linking.live ? "" : "; pass --live to query the linker"));
  }
}

void cmd_train_kg(ExperimentConfig cfg, const CommandArgs& args) {
  const std::string name = to_string(cfg.m_ent);
  cfg.paths.entity_tables.erase(name);
  if (args.force) fs::remove(cfg.out_dir / "kg" / (name + ".key"));
  const auto graph = load_triplets(cfg.paths.triplets);
  note("training " + name + " on " + std::to_string(graph.triplets().size()) + " triplets, " +
       std::to_string(graph.num_entities()) + " entities");
  const auto table = obtain_entity_table(cfg, cfg.m_ent);
  std::cout << name << ": " << table.num_entities() << " entities, " << table.num_relations()
            << " relations -> " << (cfg.out_dir / "kg" / (name + ".emb")).string() << '\n';
}

void cmd_eval_kg(const ExperimentConfig& cfg) {
  const auto ev = evaluate_kg(cfg);
  Table t;
  t.header = {"model", "queries", "MRR", "MR"};
  for (const auto& [k, v] : ev.result.hits_at) t.header.push_back("Hits@" + std::to_string(k));
  std::vector<std::string> row{to_string(cfg.m_ent), std::to_string(ev.result.queries), format_metric(ev.result.mrr),
                               format_metric(ev.result.mean_rank)};
  for (const auto& [k, v] : ev.result.hits_at) row.push_back(format_metric(v));
  t.rows.push_back(std::move(row));
  auto out = open_out(cfg.out_dir / "kg" / (to_string(cfg.m_ent) + ".eval.tsv"));
  t.write_tsv(out);
  t.write_aligned(std::cout);
  if (ev.skipped > 0) note(std::to_string(ev.skipped) + " held-out triplets skipped (unknown entity or relation)");
}

struct Corpora {
  Corpus train;
  std::optional<Corpus> test;
};

Corpora load_corpora(const ExperimentConfig& cfg, bool need_train, bool need_test) {
  const auto annotations = load_annotations_if_any(cfg);
  Corpora c;
  if (need_train) c.train = load_corpus(cfg.paths.train, annotations, cfg.linking.confidence);
  if (need_test && !cfg.paths.test.empty()) c.test = load_corpus(cfg.paths.test, annotations, cfg.linking.confidence);
  return c;
}

void cmd_featurize(const ExperimentConfig& cfg) {
  const auto c = load_corpora(cfg, true, true);
  Resources res(cfg, corpus_uris({&c.train, c.test ? &*c.test : nullptr}));
  const auto summary = featurize(cfg, res, c.train, c.test ? &*c.test : nullptr, cfg.out_dir);
  Table t;
  t.header = {"split", "sentences", "instances", "entities", "embedded", "dim"};
  for (const auto& s : summary) {
    t.rows.push_back({s.split, std::to_string(s.sentences), std::to_string(s.instances), std::to_string(s.entities),
                      std::to_string(s.entities_embedded), std::to_string(s.dim)});
  }
  t.write_aligned(std::cout);
}

void cmd_train(const ExperimentConfig& cfg) {
  const auto c = load_corpora(cfg, true, false);
  Resources res(cfg, corpus_uris({&c.train}));
  const auto head = train_model(cfg, res, c.train, cfg.out_dir);
  std::cout << to_string(head.mode) << " head over " << head.dim() << " features, class weights "
            << format_metric(head.class_weights[0]) << " / " << format_metric(head.class_weights[1]) << " -> "
            << (cfg.out_dir / "model" / "head.txt").string() << '\n';
}

void cmd_predict(const ExperimentConfig& cfg) {
  const auto c = load_corpora(cfg, false, true);
  Resources res(cfg, corpus_uris({&*c.test}));
  const auto scores = predict_runs(cfg, res, *c.test, cfg.out_dir);
  std::cout << "scored " << scores.size() << " sentences -> " << (cfg.out_dir / "runs").string() << '\n';
}

fs::path runs_dir(const ExperimentConfig& cfg, const CommandArgs& args) {
  return args.runs.empty() ? cfg.out_dir / "runs" : fs::path(args.runs);
}

std::vector<int> gold_labels(std::span<const TranscriptSentence> gold) {
  std::vector<int> out;
  for (const auto& s : gold) out.push_back(s.label.value_or(0));
  return out;
}

void cmd_evaluate(const ExperimentConfig& cfg, const CommandArgs& args) {
  const auto gold = load_transcripts(cfg.paths.test);
  const auto runs = load_runs(runs_dir(cfg, args));
  const auto result = evaluate_runs(gold, runs);
  const auto table = ranking_table(result);
  auto out = open_out(cfg.out_dir / "metrics.tsv");
  table.write_tsv(out);
  table.write_aligned(std::cout);
  if (cfg.mode == HeadMode::Classification) {
    const auto p = prf1(gold_labels(gold), run_labels(gold, runs));
    Table t;
    t.header = {"precision", "recall", "f1"};
    t.rows.push_back({format_metric(p.precision), format_metric(p.recall), format_metric(p.f1)});
    auto prf = open_out(cfg.out_dir / "prf.tsv");
    t.write_tsv(prf);
    std::cout << '\n';
    t.write_aligned(std::cout);
  }
}

void cmd_report(const ExperimentConfig& cfg, const CommandArgs& args) {
  const auto gold = load_transcripts(cfg.paths.test);
  const auto runs = load_runs(runs_dir(cfg, args));
  const auto predicted = run_labels(gold, runs);
  std::ostringstream tsv, txt;

  const auto ranking = ranking_table(evaluate_runs(gold, runs));
  ranking.write_tsv(tsv);
  ranking.write_aligned(txt);

  if (!cfg.paths.grouping.empty()) {
    const auto annotations = load_annotations_if_any(cfg);
    const auto corpus = load_corpus(cfg.paths.test, annotations, cfg.linking.confidence);
    std::vector<BreakdownSentence> rows;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      const auto it = corpus.entities.find(gold[i].key());
      rows.push_back({gold[i].debate_id, gold[i].label.value_or(0), predicted[i],
                      it == corpus.entities.end() ? 0 : it->second.size()});
    }
    const auto breakdown = breakdown_table(breakdown_report(rows, load_grouping(cfg.paths.grouping)));
    tsv << '\n';
    breakdown.write_tsv(tsv);
    txt << '\n';
    breakdown.write_aligned(txt);
  }

  if (!args.against.empty()) {
    const auto other = run_labels(gold, load_runs(args.against));
    const auto a_ok = std::make_unique<bool[]>(gold.size());
    const auto b_ok = std::make_unique<bool[]>(gold.size());
    for (std::size_t i = 0; i < gold.size(); ++i) {
      const int y = gold[i].label.value_or(0);
      a_ok[i] = predicted[i] == y;
      b_ok[i] = other[i] == y;
    }
    const auto m = mcnemar({a_ok.get(), gold.size()}, {b_ok.get(), gold.size()});
    Table t;
    t.header = {"test", "a_only", "b_only", "statistic", "significant_p01"};
    t.rows.push_back({"mcnemar", std::to_string(m.a_only), std::to_string(m.b_only), format_metric(m.statistic),
                      std::string(m.significant_at_p01 ? "yes" : "no")});
    tsv << '\n';
    t.write_tsv(tsv);
    txt << '\n';
    t.write_aligned(txt);
  }

  auto out_tsv = open_out(cfg.out_dir / "report.tsv");
  out_tsv << tsv.str();
  auto out_txt = open_out(cfg.out_dir / "report.txt");
  out_txt << txt.str();
  std::cout << txt.str();
}

void cmd_grid(const ExperimentConfig& cfg) {
  const auto rows = run_grid(cfg);
  grid_table(rows).write_aligned(std::cout);
}

void run(Stage stage, const ExperimentConfig& cfg, const CommandArgs& args) {
  validate(cfg, stage);
  if (!args.runs.empty() && !fs::is_directory(args.runs)) throw PathError("run directory '" + args.runs + "' does not exist");
  if (!args.against.empty() && !fs::is_directory(args.against)) {
    throw PathError("run directory '" + args.against + "' does not exist");
  }
  fs::create_directories(cfg.out_dir);
  write_manifest(cfg, make_manifest(cfg, stage, std::string(to_string(stage)), args.to_vector()));
  switch (stage) {
    case Stage::Ingest: return cmd_ingest(cfg);
    case Stage::Annotate: return cmd_annotate(cfg);
    case Stage::TrainKg: return cmd_train_kg(cfg, args);
    case Stage::EvalKg: return cmd_eval_kg(cfg);
    case Stage::Featurize: return cmd_featurize(cfg);
    case Stage::Train: return cmd_train(cfg);
    case Stage::Predict: return cmd_predict(cfg);
    case Stage::Evaluate: return cmd_evaluate(cfg, args);
    case Stage::Report: return cmd_report(cfg, args);
    case Stage::Grid: return cmd_grid(cfg);
  }
}

void replay(const fs::path& manifest_path, const std::string& out_dir) {
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw PathError("cannot read manifest '" + manifest_path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  const auto m = Manifest::from_json(buf.str());
  if (sha256_hex(m.config_toml) != m.config_sha256) throw FormatError("manifest config does not match its digest");
  for (const auto& [path, digest] : m.inputs) {
    if (!fs::exists(path)) throw PathError("manifest input '" + path + "' no longer exists");
    if (sha256_path(path) != digest) throw DataError("manifest input '" + path + "' changed since the recorded run");
  }
  const auto stage = parse_stage(m.command);
  if (!stage) throw FormatError("manifest names an unknown command '" + m.command + "'");
  std::vector<std::string> overrides;
  if (!out_dir.empty()) overrides.push_back("out_dir=" + nlohmann::json(out_dir).dump());
  run(*stage, parse_config(m.config_toml, overrides), CommandArgs::from_vector(m.arguments));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Check-worthiness ranking with knowledge-graph entity features"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  CommandArgs args;
  bool live = false;
  std::string model;

  app.add_option("-c,--config", config_path, "TOML experiment configuration")->check(CLI::ExistingFile);
  app.add_option("--set", sets, "Override a config key, e.g. --set head.epochs=50")->take_all();
  app.add_option("-o,--out", out_dir, "Output directory (config out_dir)");
  app.add_option("--seed", seed, "Global seed (config seed)");

  struct Sub {
    Stage stage;
    const char* help;
  };
  const std::vector<Sub> subs{
      {Stage::Ingest, "Load transcripts and summarize sentence and label counts"},
      {Stage::Annotate, "Link entities, cache-first; --live queries DBpedia Spotlight"},
      {Stage::TrainKg, "Train the features.m_ent KG embedding from paths.triplets"},
      {Stage::EvalKg, "Filtered link prediction on paths.kg_test"},
      {Stage::Featurize, "Build fused instance features and write a summary"},
      {Stage::Train, "Train the classification or ranking head"},
      {Stage::Predict, "Score the test transcripts into run files"},
      {Stage::Evaluate, "MAP, MRR and P@k of run files"},
      {Stage::Report, "Ranking, per-group breakdown and McNemar reports"},
      {Stage::Grid, "Sweep l_rep x m_ent x e_com x mode and summarize"},
  };
  std::map<CLI::App*, Stage> stage_of;
  for (const auto& s : subs) {
    auto* sub = app.add_subcommand(std::string(to_string(s.stage)), s.help);
    stage_of[sub] = s.stage;
    switch (s.stage) {
      case Stage::Annotate:
        sub->add_flag("--live", live, "Query the linker for sentences missing from the cache");
        break;
      case Stage::TrainKg:
        sub->add_option("--model", model, "KG model (transe, transr, rescal, distmult, complex)");
        sub->add_flag("--force", args.force, "Retrain even when a matching cached table exists");
        break;
      case Stage::EvalKg:
        sub->add_option("--model", model, "KG model (transe, transr, rescal, distmult, complex)");
        break;
      case Stage::Evaluate:
        sub->add_option("--runs", args.runs, "Run directory (default <out>/runs)");
        break;
      case Stage::Report:
        sub->add_option("--runs", args.runs, "Run directory (default <out>/runs)");
        sub->add_option("--against", args.against, "Second run directory for a McNemar comparison");
        break;
      default: break;
    }
  }
  std::string manifest;
  auto* replay_cmd = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay_cmd->add_option("manifest", manifest, "Manifest JSON written by an earlier run")->required();
  replay_cmd->add_option("-o,--out", out_dir, "Write outputs here instead of the recorded out_dir");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (replay_cmd->parsed()) {
      replay(manifest, out_dir);
      return 0;
    }
    std::vector<std::string> overrides = sets;
    if (!out_dir.empty()) overrides.push_back("out_dir=" + nlohmann::json(out_dir).dump());
    if (seed) overrides.push_back("seed=" + std::to_string(*seed));
    if (live) overrides.emplace_back("linking.live=true");
    if (!model.empty()) overrides.push_back("features.m_ent=" + nlohmann::json(model).dump());
    const auto cfg = load_config(config_path.empty() ? std::nullopt : std::optional<fs::path>(config_path), overrides);
    for (const auto& [sub, stage] : stage_of) {
      if (sub->parsed()) run(stage, cfg, args);
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "cwkg: config error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "cwkg: data error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "cwkg: numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "cwkg: internal error: " << e.what() << '\n';
    return 4;
  }
}
