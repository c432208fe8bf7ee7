#include <doctest.h>

#include <cstdlib>
#include <sys/wait.h>

#include "cwkg/experiment.hpp"
#include "support/synthetic.hpp"

using namespace cwkg;
using cwkg::testing::TempDir;
using cwkg::testing::read_file;
using cwkg::testing::write_file;
namespace fs = std::filesystem;

namespace {

int cwkg_exit(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(CWKG_BINARY) + " " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct Workspace {
  TempDir dir;
  fs::path config;
  Workspace() {
    cwkg::testing::write_toy_corpus(dir.path);
    config = dir / "exp.toml";
    write_file(config, cwkg::testing::toy_config_toml(dir.path, dir / "out"));
  }
  int run(const std::string& args) { return cwkg_exit("-c '" + config.string() + "' " + args, dir / "log.txt"); }
  std::string log() const { return read_file(dir / "log.txt"); }
};

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with 1") {
  TempDir dir;
  CHECK(cwkg_exit("", dir / "log") == 1);
  CHECK(cwkg_exit("frobnicate", dir / "log") == 1);
  CHECK(cwkg_exit("--help", dir / "log") == 0);
  CHECK(cwkg_exit("-c /nonexistent.toml train", dir / "log") == 1);
}

TEST_CASE("config and path errors exit with 1 before any output") {
  Workspace w;
  CHECK(w.run("--set features.l_rep=avg_word --set features.e_com=similarity train") == 1);
  CHECK(w.log().find("similarity") != std::string::npos);
  CHECK_FALSE(fs::exists(w.dir / "out/model"));
  CHECK(w.run("--set paths.train=/nonexistent train") == 1);
  CHECK(w.run("--set kg.dimension=3 train") == 1);
}

TEST_CASE("data errors exit with 2") {
  Workspace w;
  write_file(w.dir / "train/broken.tsv", "x\tA\ttext\t0\n");
  CHECK(w.run("ingest") == 2);
  CHECK(w.log().find("broken.tsv") != std::string::npos);
}

TEST_CASE("numeric failure exits with 3") {
  Workspace w;
  CHECK(w.run("--set kg.learning_rate=1e12 --set kg.epochs=20 --set features.m_ent=distmult train-kg") == 3);
  CHECK(w.log().find("learning rate") != std::string::npos);
}

TEST_CASE("ingest and offline annotate") {
  Workspace w;
  REQUIRE(w.run("ingest") == 0);
  const auto ingest = read_file(w.dir / "out/ingest.tsv");
  CHECK(ingest.find("train") != std::string::npos);
  const auto before = read_file(w.dir / "annotations.jsonl");
  REQUIRE(w.run("annotate") == 0);
  CHECK(fs::exists(w.dir / "out/annotations.jsonl"));
  CHECK(read_file(w.dir / "annotations.jsonl") == before);
}

TEST_CASE("train, predict, evaluate, report") {
  Workspace w;
  REQUIRE(w.run("train-kg") == 0);
  CHECK(fs::exists(w.dir / "out/kg/complex.emb"));
  REQUIRE(w.run("train") == 0);
  REQUIRE(w.run("predict") == 0);
  REQUIRE(w.run("evaluate") == 0);
  CHECK(read_file(w.dir / "out/metrics.tsv").starts_with("debate\tAP"));
  REQUIRE(w.run("report") == 0);
  const auto report = read_file(w.dir / "out/report.tsv");
  CHECK(report.find("primary") != std::string::npos);
  for (const char* m : {"train-kg", "train", "predict", "evaluate", "report"}) {
    CHECK(fs::exists(w.dir / "out/manifests" / (std::string(m) + ".json")));
  }

  SUBCASE("McNemar against a second run") {
    REQUIRE(w.run("-o '" + (w.dir / "cls").string() + "' --set head.mode=cls train") == 0);
    REQUIRE(w.run("-o '" + (w.dir / "cls").string() + "' --set head.mode=cls predict") == 0);
    REQUIRE(w.run("report --against '" + (w.dir / "cls/runs").string() + "'") == 0);
    CHECK(read_file(w.dir / "out/report.tsv").find("mcnemar") != std::string::npos);
  }
  SUBCASE("predicting with the wrong head mode") {
    CHECK(w.run("--set head.mode=cls predict") == 1);
  }
}

TEST_CASE("evaluate on a perfect run file gives MAP 1") {
  Workspace w;
  const auto gold = load_transcripts(w.dir / "test");
  fs::create_directories(w.dir / "perfect");
  std::map<std::string, std::string> files;
  for (const auto& s : gold) {
    files[s.debate_id] += std::to_string(s.line_no) + "\t" + (s.label == 1 ? "0.9" : "0.1") + "\n";
  }
  for (const auto& [id, body] : files) write_file(w.dir / "perfect" / (id + ".tsv"), body);
  REQUIRE(w.run("evaluate --runs '" + (w.dir / "perfect").string() + "'") == 0);
  const auto metrics = read_file(w.dir / "out/metrics.tsv");
  CHECK(metrics.find("MEAN\t1.0000\t1.0000") != std::string::npos);
}

TEST_CASE("grid over two combinations gives two rows") {
  Workspace w;
  REQUIRE(w.run("--set grid.l_rep=tfidf --set grid.m_ent=complex --set grid.e_com=emb_concat,emb_prod grid") == 0);
  const auto summary = read_file(w.dir / "out/grid_summary.tsv");
  CHECK(std::count(summary.begin(), summary.end(), '\n') == 3);
}

TEST_CASE("replaying manifests reproduces runs and reports byte for byte") {
  Workspace w;
  REQUIRE(w.run("train") == 0);
  REQUIRE(w.run("predict") == 0);
  REQUIRE(w.run("report") == 0);
  const fs::path again = w.dir / "again";
  for (const char* m : {"train", "predict", "report"}) {
    const auto manifest = w.dir / "out/manifests" / (std::string(m) + ".json");
    REQUIRE(cwkg_exit("replay '" + manifest.string() + "' -o '" + again.string() + "'", w.dir / "log.txt") == 0);
  }
  for (const char* f : {"runs/test_debate_0.tsv", "runs/test_debate_1.tsv", "report.tsv", "report.txt", "model/head.txt"}) {
    CAPTURE(f);
    CHECK(read_file(w.dir / "out" / f) == read_file(again / f));
  }

  SUBCASE("a changed input is refused") {
    write_file(w.dir / "test/test_debate_1.tsv", "1\tX\tedited\t0\n");
    CHECK(cwkg_exit("replay '" + (w.dir / "out/manifests/predict.json").string() + "'", w.dir / "log.txt") == 2);
  }
}

}  // TEST_SUITE
