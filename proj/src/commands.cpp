#include "omegaprm/commands.hpp"

#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include "json.hpp"
#include "omegaprm/errors.hpp"
#include "omegaprm/mcts.hpp"
#include "omegaprm/parallel.hpp"
#include "omegaprm/policy.hpp"
#include "omegaprm/prm.hpp"
#include "omegaprm/tree_io.hpp"

namespace omegaprm {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

fs::path out_dir(const RunConfig& cfg) { return fs::path(cfg.output); }

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw CommandError(exit_code::failure, "cannot create directory " + p.string() + ": " + ec.message());
}

void require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw CommandError(exit_code::missing_artifact, "missing upstream artifact: " + p.string());
}

// Write-then-rename so an interrupted run never leaves a half-written file.
void write_atomic(const fs::path& p, const std::string& content) {
  fs::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CommandError(exit_code::failure, "cannot write " + tmp.string());
    out << content;
    if (!out) throw CommandError(exit_code::failure, "write failed for " + tmp.string());
  }
  fs::rename(tmp, p);
}

std::vector<CorpusItem> read_input_corpus(const fs::path& p) {
  if (p.empty()) throw CommandError(exit_code::bad_input, "no corpus path configured");
  try {
    return read_corpus(p);
  } catch (const ParseError& ex) {
    throw CommandError(exit_code::bad_input, p.string() + ":" + std::to_string(ex.line()) + ": " + ex.what());
  } catch (const Error& ex) {
    throw CommandError(exit_code::bad_input, "cannot read corpus: " + std::string(ex.what()));
  }
}

std::vector<CorpusItem> read_artifact_corpus(const fs::path& p) {
  require_file(p);
  return read_corpus(p);
}

std::vector<Question> questions_of(const std::vector<CorpusItem>& items) {
  std::vector<Question> qs;
  qs.reserve(items.size());
  for (const auto& it : items) qs.push_back(it.question);
  return qs;
}

EngineConfig engine_of(const RunConfig& cfg) {
  EngineConfig e = cfg.engine;
  e.rng_seed = cfg.seed;
  return e;
}

std::string safe_file_stem(const std::string& id) {
  std::string s;
  bool changed = false;
  for (char c : id) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_' ||
              c == '.';
    s += ok ? c : '_';
    changed |= !ok;
  }
  if (s.empty() || s == "." || s == "..") changed = true;
  if (changed) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(id)));
    s += "-";
    s += buf;
  }
  return s;
}

}  // namespace

fs::path tree_path(const fs::path& dir, const std::string& question_id) {
  return dir / artifact::trees_dir / (safe_file_stem(question_id) + ".json");
}

CompleterFactory make_completer_factory(const RunConfig& cfg, const std::vector<CorpusItem>& items) {
  if (cfg.completer == CompleterKind::sim) {
    SimPolicySpec spec = cfg.sim_spec();
    std::map<std::string, SimQuestionOverrides> overrides;
    for (const auto& it : items)
      if (it.sim) overrides[it.question.id] = *it.sim;
    return [spec, overrides]() -> std::unique_ptr<Completer> {
      auto p = std::make_unique<SimulatedPolicy>(spec);
      for (const auto& [id, o] : overrides) p->set_overrides(id, o);
      return p;
    };
  }
  RemoteCompleterConfig rc;
  rc.endpoint = cfg.remote.endpoint;
  if (!cfg.remote.prompt_template.empty()) rc.prompt_template = cfg.remote.prompt_template;
  rc.timeout = std::chrono::milliseconds(cfg.remote.timeout_ms);
  rc.max_retries = cfg.remote.max_retries;
  rc.retry_backoff = std::chrono::milliseconds(cfg.remote.retry_backoff_ms);
  rc.batch_size = cfg.remote.batch_size;
  if (const char* tok = std::getenv(cfg.remote.auth_token_env.c_str())) rc.auth_token = tok;
  return [rc]() -> std::unique_ptr<Completer> { return std::make_unique<RemoteCompleter>(rc); };
}

// ---------------------------------------------------------------------------

int cmd_filter(const RunConfig& cfg, std::ostream& log) {
  auto items = read_input_corpus(cfg.corpus);
  const fs::path dir = out_dir(cfg);
  ensure_dir(dir);
  std::vector<FilterRecord> previous;
  const fs::path report_path = dir / artifact::filter_report;
  if (fs::is_regular_file(report_path)) {
    try {
      previous = read_filter_report(report_path);
    } catch (const Error& ex) {
      log << "ignoring unreadable previous filter report: " << ex.what() << "\n";
    }
    // Unresolved questions are retried.
    std::erase_if(previous, [](const FilterRecord& r) { return r.reason.rfind("unresolved", 0) == 0; });
  }
  auto factory = make_completer_factory(cfg, items);
  auto completer = factory();
  auto result =
      filter_questions(questions_of(items), *completer, cfg.filter.k_filter, engine_of(cfg), cfg.parallelism, previous);

  {
    fs::path tmp = report_path;
    tmp += ".tmp";
    write_filter_report(tmp, result.report);
    fs::rename(tmp, report_path);
  }
  std::vector<CorpusItem> kept;
  for (std::size_t i = 0; i < items.size(); ++i)
    if (result.report[i].kept) kept.push_back(items[i]);
  {
    fs::path tmp = dir / artifact::kept;
    tmp += ".tmp";
    write_corpus(tmp, kept);
    fs::rename(tmp, dir / artifact::kept);
  }
  std::map<std::string, std::size_t> reasons;
  for (const auto& r : result.report) reasons[r.reason.substr(0, r.reason.find(':'))]++;
  log << "filter: " << items.size() << " questions, " << kept.size() << " kept";
  for (const auto& [k, n] : reasons) log << ", " << k << "=" << n;
  log << "\n";
  return exit_code::ok;
}

int cmd_generate(const RunConfig& cfg, std::ostream& log) {
  const fs::path dir = out_dir(cfg);
  auto items = read_artifact_corpus(dir / artifact::kept);
  ensure_dir(dir / artifact::trees_dir);
  auto factory = make_completer_factory(cfg, items);
  const EngineConfig engine = engine_of(cfg);

  struct Outcome {
    std::string status;  // built | resumed | failed
    std::string error;
    std::uint64_t policy_calls = 0;
    std::uint32_t searches = 0;
    std::size_t nodes = 0;
    std::size_t examples = 0;
  };
  std::vector<Outcome> outcomes(items.size());
  parallel_for(items.size(), cfg.parallelism, [&](std::size_t i) {
    const Question& q = items[i].question;
    const fs::path p = tree_path(dir, q.id);
    Outcome& o = outcomes[i];
    if (fs::is_regular_file(p)) {
      try {
        Tree t = load_tree(p);
        if (t.question() == q) {
          o.status = "resumed";
          o.nodes = t.size();
          o.examples = tree_to_examples(t).size();
          return;
        }
      } catch (const Error&) {
        // Rebuild below.
      }
    }
    try {
      auto completer = factory();
      BuildResult r = build_tree(q, *completer, engine);
      o.policy_calls = r.budget.policy_calls;
      o.searches = r.budget.searches_done;
      o.nodes = r.tree.size();
      o.examples = tree_to_examples(r.tree).size();
      if (r.status == SearchStatus::estimation_failed) o.error = r.failure;
      write_atomic(p, serialize_tree(r.tree));
      o.status = "built";
    } catch (const std::exception& ex) {
      o.status = "failed";
      o.error = ex.what();
    }
  });

  ordered_json summary;
  summary["format"] = "omegaprm-generate/1";
  summary["config"] = ordered_json::parse(run_config_json(cfg));
  std::uint64_t calls = 0, examples = 0;
  std::size_t failed = 0, built = 0, resumed = 0;
  summary["questions"] = ordered_json::array();
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& o = outcomes[i];
    ordered_json e{{"question_id", items[i].question.id}, {"status", o.status}};
    if (o.status != "failed") {
      e["tree"] = tree_path(fs::path(), items[i].question.id).generic_string();
      e["nodes"] = o.nodes;
      e["examples"] = o.examples;
      examples += o.examples;
    }
    if (o.status == "built") {
      e["policy_calls"] = o.policy_calls;
      e["searches"] = o.searches;
      calls += o.policy_calls;
      ++built;
    }
    if (o.status == "resumed") ++resumed;
    if (o.status == "failed") ++failed;
    if (!o.error.empty()) e["error"] = o.error;
    summary["questions"].push_back(std::move(e));
  }
  summary["built"] = built;
  summary["resumed"] = resumed;
  summary["failed"] = failed;
  summary["policy_calls"] = calls;
  summary["examples"] = examples;
  write_atomic(dir / artifact::generate_summary, summary.dump(1) + "\n");
  log << "generate: " << built << " built, " << resumed << " resumed, " << failed << " failed, " << calls
      << " policy calls, " << examples << " single-step examples\n";
  if (!items.empty() && failed == items.size()) {
    log << "generate: every question failed\n";
    return exit_code::all_failed;
  }
  return exit_code::ok;
}

int cmd_export(const RunConfig& cfg, std::ostream& log) {
  const fs::path dir = out_dir(cfg);
  const fs::path summary_path = dir / artifact::generate_summary;
  require_file(summary_path);
  ordered_json summary;
  {
    std::ifstream in(summary_path, std::ios::binary);
    summary = ordered_json::parse(in, nullptr, false);
    if (summary.is_discarded() || !summary.contains("questions"))
      throw CommandError(exit_code::missing_artifact, "unreadable generate summary: " + summary_path.string());
  }
  std::vector<TrainingExample> examples;
  std::vector<PreferencePair> pairs;
  std::size_t trees = 0;
  for (const auto& q : summary["questions"]) {
    if (q.value("status", "") == "failed") continue;
    fs::path p = dir / q.at("tree").get<std::string>();
    require_file(p);
    Tree t = load_tree(p);
    auto ex = tree_to_examples(t);
    auto pr = tree_to_pairs(t);
    examples.insert(examples.end(), ex.begin(), ex.end());
    pairs.insert(pairs.end(), pr.begin(), pr.end());
    ++trees;
  }
  std::size_t total = examples.size();
  if (cfg.export_.downsample && *cfg.export_.downsample < examples.size())
    examples = downsample(examples, static_cast<std::size_t>(*cfg.export_.downsample), cfg.seed);
  export_jsonl(dir / artifact::dataset, examples);
  export_jsonl(dir / artifact::pairs, pairs);
  std::size_t positive = 0;
  for (const auto& e : examples) positive += e.hard_label;
  ordered_json s{{"format", "omegaprm-export/1"},
                 {"trees", trees},
                 {"examples_total", total},
                 {"examples_written", examples.size()},
                 {"positive", positive},
                 {"pairs", pairs.size()}};
  write_atomic(dir / artifact::export_summary, s.dump(1) + "\n");
  log << "export: " << trees << " trees, " << examples.size() << " examples (" << positive << " positive), "
      << pairs.size() << " pairs\n";
  return exit_code::ok;
}

int cmd_train(const RunConfig& cfg, std::ostream& log) {
  const fs::path dir = out_dir(cfg);
  std::vector<TrainingExample> examples;
  std::vector<PreferencePair> pairs;
  if (cfg.train.objective == Objective::pairwise) {
    require_file(dir / artifact::pairs);
    pairs = import_pairs(dir / artifact::pairs);
  } else {
    require_file(dir / artifact::dataset);
    examples = import_examples(dir / artifact::dataset);
  }
  TrainResult r = train_toy_prm(examples, pairs, cfg.train.objective, cfg.train.optimizer, cfg.seed);
  write_atomic(dir / artifact::model, serialize_model(r.model));
  ordered_json rep{{"format", "omegaprm-train/1"},
                   {"objective", to_string(cfg.train.objective)},
                   {"examples", cfg.train.objective == Objective::pairwise ? pairs.size() : examples.size()},
                   {"initial_loss", r.loss_curve.front()},
                   {"final_loss", r.loss_curve.back()},
                   {"loss_curve", r.loss_curve}};
  write_atomic(dir / artifact::train_report, rep.dump(1) + "\n");
  log << "train: " << to_string(cfg.train.objective) << " loss " << r.loss_curve.front() << " -> "
      << r.loss_curve.back() << "\n";
  return exit_code::ok;
}

int cmd_eval(const RunConfig& cfg, std::ostream& log) {
  const fs::path dir = out_dir(cfg);
  require_file(dir / artifact::model);
  ToyPrmModel model = load_model(dir / artifact::model);
  auto items = read_input_corpus(cfg.eval.corpus.empty() ? fs::path(cfg.corpus) : fs::path(cfg.eval.corpus));
  auto factory = make_completer_factory(cfg, items);
  auto completer = factory();
  auto pools = sample_candidate_pools(questions_of(items), *completer, cfg.eval.pool_size, engine_of(cfg), &model,
                                      cfg.eval.aggregation, cfg.parallelism);
  EvalOptions opts;
  opts.k_max = cfg.eval.k_max;
  opts.pool_size = cfg.eval.pool_size;
  opts.n_resamples = cfg.eval.n_resamples;
  opts.seed = cfg.seed;
  std::vector<EvalReport> reports{evaluate_pools(pools, false, opts), evaluate_pools(pools, true, opts)};
  write_atomic(dir / artifact::eval_report, eval_report_json(reports, run_config_json(cfg)));
  write_atomic(dir / artifact::eval_csv, eval_table_csv(reports));
  const auto* a = reports[0].at(opts.k_max);
  const auto* b = reports[1].at(opts.k_max);
  std::size_t skipped = 0;
  for (const auto& p : pools) skipped += p.skipped ? 1 : 0;
  log << "eval: " << pools.size() - skipped << " problems (" << skipped << " skipped); k=" << opts.k_max
      << " majority " << a->accuracy << ", prm_weighted " << b->accuracy << "\n";
  return exit_code::ok;
}

int cmd_bench(const RunConfig& cfg, std::ostream& log) {
  const fs::path dir = out_dir(cfg);
  ensure_dir(dir);
  auto items = read_input_corpus(cfg.bench.corpus.empty() ? fs::path(cfg.corpus) : fs::path(cfg.bench.corpus));
  auto factory = make_completer_factory(cfg, items);
  EfficiencyReport r = efficiency_benchmark(questions_of(items), factory, engine_of(cfg), cfg.bench.budget,
                                            cfg.parallelism);
  write_atomic(dir / artifact::bench_report, efficiency_report_json(r, run_config_json(cfg)));
  log << "bench: brute force " << r.brute_force.examples << "/" << r.brute_force.policy_calls << " = "
      << r.brute_force.examples_per_call << ", omegaprm " << r.omegaprm.examples << "/" << r.omegaprm.policy_calls
      << " = " << r.omegaprm.examples_per_call << ", ratio " << r.ratio << "\n";
  return exit_code::ok;
}

int cmd_synth(const SimCorpusOptions& opts, const fs::path& path, std::ostream& log) {
  auto made = make_sim_corpus(opts);
  std::vector<CorpusItem> items;
  items.reserve(made.size());
  for (auto& m : made) items.push_back({std::move(m.question), std::move(m.overrides)});
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  write_corpus(path, items);
  log << "synth: wrote " << items.size() << " questions to " << path.string() << "\n";
  return exit_code::ok;
}

int run_command(const std::string& name, const RunConfig& cfg, std::ostream& log, std::ostream& err) {
  try {
    cfg.validate();
  } catch (const Error& ex) {
    err << "error: " << ex.what() << "\n";
    return exit_code::bad_input;
  }
  try {
    if (name == "filter") return cmd_filter(cfg, log);
    if (name == "generate") return cmd_generate(cfg, log);
    if (name == "export") return cmd_export(cfg, log);
    if (name == "train") return cmd_train(cfg, log);
    if (name == "eval") return cmd_eval(cfg, log);
    if (name == "bench") return cmd_bench(cfg, log);
    err << "error: unknown command '" << name << "'\n";
    return exit_code::bad_input;
  } catch (const CommandError& ex) {
    err << "error: " << ex.what() << "\n";
    return ex.code();
  } catch (const InvalidConfig& ex) {
    err << "error: " << ex.what() << "\n";
    return exit_code::bad_input;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return exit_code::failure;
  }
}

}  // namespace omegaprm
