#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "doctest.h"
#include "json.hpp"
#include "omegaprm/commands.hpp"
#include "omegaprm/dataset.hpp"
#include "omegaprm/run_config.hpp"
#include "omegaprm/tree_io.hpp"
#include "test_support.hpp"

using namespace omegaprm;
namespace fs = std::filesystem;
using nlohmann::json;

#ifndef OMEGAPRM_CLI_PATH
#error "OMEGAPRM_CLI_PATH must point at the built command-line tool"
#endif

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("omegaprm_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

struct Proc {
  int code = -1;
  std::string output;
};

Proc run_cli(const std::string& args, const fs::path& dir) {
  fs::path log = dir / "cli.log";
  std::string cmd = std::string(OMEGAPRM_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  int st = std::system(cmd.c_str());
  Proc p;
  p.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  p.output = slurp(log);
  return p;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).generic_string()] = slurp(e.path());
  return files;
}

CorpusItem sim_item(const std::string& id, std::size_t steps, double error_prob) {
  SimQuestionOverrides o;
  o.error_prob = error_prob;
  return CorpusItem{omegaprm::testing::sim_question(steps, 4, id), o};
}

RunConfig small_config(const fs::path& dir) {
  RunConfig cfg;
  cfg.output = (dir / "out").string();
  cfg.corpus = (dir / "corpus.jsonl").string();
  cfg.engine.search_limit = 12;
  cfg.filter.k_filter = 16;
  cfg.train.optimizer.epochs = 40;
  cfg.eval.k_max = 4;
  cfg.eval.pool_size = 8;
  cfg.eval.n_resamples = 10;
  cfg.bench.budget = 600;
  cfg.parallelism = 3;
  return cfg;
}

int run(const std::string& name, const RunConfig& cfg, std::string* err_out = nullptr) {
  std::ostringstream log, err;
  int rc = run_command(name, cfg, log, err);
  if (err_out) *err_out = err.str();
  return rc;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

TEST_CASE("config parsing rejects unknown keys at every level") {
  CHECK_NOTHROW(parse_run_config("{}"));
  CHECK_NOTHROW(parse_run_config(R"({"seed":3,"engine":{"k_rollouts":4},"sim":{"per_step_error_prob":0.2}})"));
  CHECK_THROWS_AS(parse_run_config(R"({"sede":3})"), InvalidConfig);
  CHECK_THROWS_AS(parse_run_config(R"({"engine":{"k_rolouts":4}})"), InvalidConfig);
  CHECK_THROWS_AS(parse_run_config(R"({"engine":{"k_rollouts":"four"}})"), InvalidConfig);
  CHECK_THROWS_AS(parse_run_config("not json"), InvalidConfig);
  RunConfig c = parse_run_config(R"({"seed":3,"engine":{"k_rollouts":4}})");
  CHECK(c.seed == 3);
  CHECK(c.engine.k_rollouts == 4);
  RunConfig back = parse_run_config(run_config_json(c));
  CHECK(run_config_json(back) == run_config_json(c));
}

TEST_CASE("cli exit codes for bad input") {
  TempDir d("codes");
  write_text(d.path / "bad.json", R"({"engine":{"nonsense":1}})");
  Proc p = run_cli("filter --config " + (d.path / "bad.json").string(), d.path);
  CHECK(p.code == exit_code::bad_input);
  CHECK(p.output.find("nonsense") != std::string::npos);

  p = run_cli("filter --corpus " + (d.path / "nope.jsonl").string() + " --output " + (d.path / "o").string(), d.path);
  CHECK(p.code == exit_code::bad_input);

  write_text(d.path / "broken.jsonl", "{\"id\":\"a\",\"statement\":\"s\",\"golden_answer\":\"1\"}\n{oops\n");
  p = run_cli("filter --corpus " + (d.path / "broken.jsonl").string() + " --output " + (d.path / "o").string(), d.path);
  CHECK(p.code == exit_code::bad_input);
  CHECK(p.output.find(":2") != std::string::npos);

  p = run_cli("frobnicate", d.path);
  CHECK(p.code == exit_code::bad_input);
  p = run_cli("filter --completer other", d.path);
  CHECK(p.code == exit_code::bad_input);
}

TEST_CASE("downstream commands name the missing artifact") {
  TempDir d("missing");
  RunConfig cfg = small_config(d.path);
  write_corpus(cfg.corpus, {sim_item("a", 4, 0.1)});
  const std::pair<const char*, const char*> cases[] = {{"generate", artifact::kept},
                                                       {"export", artifact::generate_summary},
                                                       {"train", artifact::dataset},
                                                       {"eval", artifact::model}};
  for (auto [cmd, file] : cases) {
    std::string err;
    CHECK(run(cmd, cfg, &err) == exit_code::missing_artifact);
    CHECK(err.find(file) != std::string::npos);
  }
  Proc p = run_cli("export --output " + (d.path / "none").string(), d.path);
  CHECK(p.code == exit_code::missing_artifact);
  CHECK(p.output.find(artifact::generate_summary) != std::string::npos);
}

TEST_CASE("an empty corpus flows through the data stages") {
  TempDir d("empty");
  RunConfig cfg = small_config(d.path);
  write_text(cfg.corpus, "");
  CHECK(run("filter", cfg) == exit_code::ok);
  CHECK(run("generate", cfg) == exit_code::ok);
  CHECK(run("export", cfg) == exit_code::ok);
  CHECK(fs::file_size(fs::path(cfg.output) / artifact::dataset) == 0);
  CHECK(run("bench", cfg) == exit_code::ok);
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

TEST_CASE("filter keeps the medium question of three") {
  TempDir d("filter3");
  RunConfig cfg = small_config(d.path);
  cfg.filter.k_filter = 32;
  write_corpus(cfg.corpus, {sim_item("easy", 6, 0.0), sim_item("hard", 6, 1.0), sim_item("medium", 6, 0.12)});
  REQUIRE(run("filter", cfg) == exit_code::ok);
  auto kept = read_corpus(fs::path(cfg.output) / artifact::kept);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].question.id == "medium");
  auto rep = read_filter_report(fs::path(cfg.output) / artifact::filter_report);
  REQUIRE(rep.size() == 3);
  CHECK(rep[0].reason == "too_easy");
  CHECK(rep[1].reason == "too_hard");
  CHECK(rep[2].reason == "kept");
}

TEST_CASE("full pipeline is byte-identical across reruns and worker counts") {
  TempDir d("rerun");
  RunConfig cfg = small_config(d.path);
  std::vector<CorpusItem> items;
  for (int i = 0; i < 6; ++i) items.push_back(sim_item("q" + std::to_string(i), 6 + i, 0.08));
  write_corpus(cfg.corpus, items);
  const char* stages[] = {"filter", "generate", "export", "train", "eval", "bench"};
  auto run_all = [&](const RunConfig& c) {
    fs::remove_all(c.output);
    for (const char* s : stages) REQUIRE(run(s, c) == exit_code::ok);
    return snapshot(c.output);
  };
  auto first = run_all(cfg);
  auto second = run_all(cfg);
  CHECK(first == second);
  CHECK(first.count(artifact::model) == 1);
  CHECK(first.count(artifact::eval_report) == 1);
  CHECK(first.count(artifact::bench_report) == 1);
  RunConfig serial = cfg;
  serial.parallelism = 1;
  auto third = run_all(serial);
  // The configuration echo records the worker count; everything else must match.
  for (const auto& [name, body] : first)
    if (body.find("\"parallelism\"") == std::string::npos) CHECK_MESSAGE(third[name] == body, name);

  // Exported labels are consistent.
  for (const auto& e : import_examples(fs::path(cfg.output) / artifact::dataset)) CHECK(e.hard_label == (e.mc > 0));

  json bench = json::parse(first[artifact::bench_report]);
  CHECK(bench["format"] == "omegaprm-bench/1");
  CHECK(bench["brute_force"].contains("examples_per_call"));
  CHECK(bench["omegaprm"].contains("examples_per_call"));
  json ev = json::parse(first[artifact::eval_report]);
  CHECK(ev["methods"].size() == 2);
  CHECK(first[artifact::eval_csv].rfind("method,k,accuracy,stddev\n", 0) == 0);
}

TEST_CASE("generate resumes finished trees and rebuilds missing ones") {
  TempDir d("resume");
  RunConfig cfg = small_config(d.path);
  write_corpus(cfg.corpus, {sim_item("a", 8, 0.1), sim_item("b", 8, 0.1), sim_item("c", 8, 0.1)});
  REQUIRE(run("filter", cfg) == exit_code::ok);
  REQUIRE(run("generate", cfg) == exit_code::ok);
  auto kept = read_corpus(fs::path(cfg.output) / artifact::kept);
  REQUIRE(kept.size() >= 2);
  fs::path t0 = tree_path(cfg.output, kept[0].question.id);
  fs::path t1 = tree_path(cfg.output, kept[1].question.id);
  std::string original = slurp(t1);
  fs::remove(t1);
  REQUIRE(run("generate", cfg) == exit_code::ok);
  CHECK(slurp(t1) == original);
  json s = json::parse(slurp(fs::path(cfg.output) / artifact::generate_summary));
  CHECK(s["questions"][0]["status"] == "resumed");
  CHECK(s["questions"][1]["status"] == "built");
  CHECK(fs::exists(t0));
}

TEST_CASE("a search limit of one caps every tree") {
  TempDir d("limit");
  RunConfig cfg = small_config(d.path);
  cfg.engine.search_limit = 1;
  std::vector<CorpusItem> items;
  for (int i = 0; i < 4; ++i) items.push_back(sim_item("q" + std::to_string(i), 10, 0.1));
  write_corpus(cfg.corpus, items);
  REQUIRE(run("filter", cfg) == exit_code::ok);
  REQUIRE(run("generate", cfg) == exit_code::ok);
  json s = json::parse(slurp(fs::path(cfg.output) / artifact::generate_summary));
  REQUIRE(!s["questions"].empty());
  for (const auto& q : s["questions"]) CHECK(q["searches"].get<int>() <= 1);
}

TEST_CASE("generate reports total failure") {
  TempDir d("allfail");
  RunConfig cfg = small_config(d.path);
  cfg.completer = CompleterKind::remote;
  cfg.remote.endpoint = "http://127.0.0.1:1/v1/completions";
  cfg.remote.max_retries = 0;
  cfg.remote.timeout_ms = 500;
  fs::create_directories(cfg.output);
  write_corpus(fs::path(cfg.output) / artifact::kept, {sim_item("a", 4, 0.1)});
  CHECK(run("generate", cfg) == exit_code::all_failed);
}

TEST_CASE("synth subcommand writes a readable corpus") {
  TempDir d("synth");
  fs::path out = d.path / "c.jsonl";
  Proc p = run_cli("synth --out " + out.string() + " --questions 7 --steps 5 --trap-prob-lo 0.2 --trap-prob-hi 0.5", d.path);
  REQUIRE(p.code == 0);
  auto items = read_corpus(out);
  REQUIRE(items.size() == 7);
  for (const auto& it : items) CHECK(it.sim.has_value());
}
