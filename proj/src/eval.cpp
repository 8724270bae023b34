#include "omegaprm/eval.hpp"

#include <cmath>
#include <cstdio>

#include "json.hpp"
#include "omegaprm/answer.hpp"
#include "omegaprm/dataset.hpp"
#include "omegaprm/errors.hpp"
#include "omegaprm/parallel.hpp"

namespace omegaprm {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::size_t weighted_vote_index(std::span<const CandidateSolution> candidates, bool weighted) {
  if (candidates.empty()) throw Error("weighted_vote needs at least one candidate");
  struct Class {
    std::size_t first;
    double score;
  };
  std::vector<Class> classes;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    double w = 1.0;
    if (weighted) {
      if (!c.aggregate_score) throw Error("candidate " + std::to_string(i) + " has no aggregate score");
      w = *c.aggregate_score;
    }
    auto it = std::find_if(classes.begin(), classes.end(), [&](const Class& k) {
      return answers_equivalent(candidates[k.first].final_answer, c.final_answer);
    });
    if (it == classes.end())
      classes.push_back({i, w});
    else
      it->score += w;
  }
  std::size_t best = 0;
  for (std::size_t j = 1; j < classes.size(); ++j)
    if (classes[j].score > classes[best].score) best = j;
  return classes[best].first;
}

std::string weighted_vote(std::span<const CandidateSolution> candidates, bool weighted) {
  return candidates[weighted_vote_index(candidates, weighted)].final_answer;
}

std::vector<CandidatePool> sample_candidate_pools(const std::vector<Question>& problems, Completer& completer,
                                                  std::uint32_t pool_size, const EngineConfig& cfg,
                                                  const ToyPrmModel* model, Aggregation agg,
                                                  std::size_t parallelism) {
  if (pool_size == 0) throw InvalidConfig("pool size must be positive");
  std::vector<CandidatePool> pools(problems.size());
  parallel_for(problems.size(), parallelism, [&](std::size_t i) {
    CandidatePool& pool = pools[i];
    pool.question = problems[i];
    try {
      CompleterRequest req{&problems[i], State::root(problems[i].id), pool_size, cfg.temperature, cfg.max_tokens};
      auto rollouts = completer.sample_rollouts(req);
      if (rollouts.size() != pool_size) throw CompleterUnavailable("completer returned the wrong number of samples");
      for (std::size_t j = 0; j < rollouts.size(); ++j) {
        CandidateSolution c;
        c.steps = std::move(rollouts[j].steps);
        c.final_answer = std::move(rollouts[j].final_answer);
        c.is_correct = rollouts[j].is_correct;
        c.source = problems[i].id + "#" + std::to_string(j);
        if (model) {
          if (c.steps.empty()) {
            c.aggregate_score = kScoreEpsilon;
          } else {
            auto scores = score_solution_steps(*model, problems[i].statement, c.steps);
            c.aggregate_score = aggregate_solution_score(scores, agg);
          }
        }
        pool.candidates.push_back(std::move(c));
      }
    } catch (const std::exception& ex) {
      pool.candidates.clear();
      pool.skipped = true;
      pool.error = ex.what();
    }
  });
  return pools;
}

std::vector<std::uint32_t> k_schedule(std::uint32_t k_max) {
  std::vector<std::uint32_t> ks;
  for (std::uint32_t k = 1; k < k_max; k *= 2) ks.push_back(k);
  if (k_max > 0) ks.push_back(k_max);
  return ks;
}

const KAccuracy* EvalReport::at(std::uint32_t k) const {
  for (const auto& row : table)
    if (row.k == k) return &row;
  return nullptr;
}

namespace {

bool vote_correct(const CandidatePool& pool, std::span<const CandidateSolution> subset, bool weighted) {
  return answers_equivalent(weighted_vote(subset, weighted), pool.question.golden_answer);
}

}  // namespace

EvalReport evaluate_pools(const std::vector<CandidatePool>& pools, bool weighted, const EvalOptions& opts) {
  if (opts.k_max == 0) throw InvalidConfig("k_max must be positive");
  if (opts.n_resamples == 0) throw InvalidConfig("n_resamples must be positive");
  EvalReport report;
  report.method = weighted ? "prm_weighted" : "majority";
  report.options = opts;

  std::vector<const CandidatePool*> live;
  for (const auto& p : pools) {
    ProblemOutcome o;
    o.question_id = p.question.id;
    o.skipped = p.skipped;
    o.error = p.error;
    o.pool_size = p.candidates.size();
    for (const auto& c : p.candidates) o.pool_correct += c.is_correct ? 1 : 0;
    if (!p.skipped) {
      if (p.candidates.size() < opts.k_max)
        throw InvalidConfig("pool for '" + p.question.id + "' is smaller than k_max");
      o.full_pool_vote_correct = vote_correct(p, p.candidates, weighted);
      live.push_back(&p);
    }
    report.problems.push_back(std::move(o));
  }

  for (std::uint32_t k : k_schedule(opts.k_max)) {
    std::vector<double> round_acc(opts.n_resamples, 0.0);
    if (!live.empty()) {
      for (const CandidatePool* p : live) {
        const std::size_t n = p->candidates.size();
        Rng rng(derive_seed(opts.seed, fnv1a64(p->question.id), k));
        std::vector<std::size_t> idx(n);
        std::vector<CandidateSolution> subset;
        subset.reserve(k);
        for (std::uint32_t r = 0; r < opts.n_resamples; ++r) {
          for (std::size_t i = 0; i < n; ++i) idx[i] = i;
          for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.index(n - i)]);
          std::sort(idx.begin(), idx.begin() + k);
          subset.clear();
          for (std::size_t i = 0; i < k; ++i) subset.push_back(p->candidates[idx[i]]);
          if (vote_correct(*p, subset, weighted)) round_acc[r] += 1.0;
        }
      }
      for (auto& a : round_acc) a /= static_cast<double>(live.size());
    }
    KAccuracy row;
    row.k = k;
    double sum = 0.0;
    for (double a : round_acc) sum += a;
    row.accuracy = sum / static_cast<double>(round_acc.size());
    if (round_acc.size() > 1) {
      double ss = 0.0;
      for (double a : round_acc) ss += (a - row.accuracy) * (a - row.accuracy);
      row.stddev = std::sqrt(ss / static_cast<double>(round_acc.size() - 1));
    }
    report.table.push_back(row);
  }
  return report;
}

EvalReport accuracy_curve(const std::vector<Question>& problems, Completer& completer, const ToyPrmModel* model,
                          const EvalOptions& opts, const EngineConfig& cfg, Aggregation agg,
                          std::size_t parallelism) {
  std::uint32_t pool = opts.pool_size == 0 ? opts.k_max : opts.pool_size;
  auto pools = sample_candidate_pools(problems, completer, pool, cfg, model, agg, parallelism);
  return evaluate_pools(pools, model != nullptr, opts);
}

namespace {

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

ordered_json config_or_null(const std::string& config_echo_json) {
  if (config_echo_json.empty()) return nullptr;
  return ordered_json::parse(config_echo_json);
}

}  // namespace

std::string eval_report_json(const std::vector<EvalReport>& reports, const std::string& config_echo_json) {
  ordered_json doc;
  doc["format"] = "omegaprm-eval/1";
  doc["config"] = config_or_null(config_echo_json);
  doc["methods"] = ordered_json::array();
  for (const auto& r : reports) {
    ordered_json m;
    m["method"] = r.method;
    m["k_max"] = r.options.k_max;
    m["pool_size"] = r.options.pool_size;
    m["n_resamples"] = r.options.n_resamples;
    m["seed"] = r.options.seed;
    m["table"] = ordered_json::array();
    for (const auto& row : r.table)
      m["table"].push_back({{"k", row.k}, {"accuracy", row.accuracy}, {"stddev", row.stddev}});
    m["problems"] = ordered_json::array();
    for (const auto& p : r.problems) {
      ordered_json o{{"question_id", p.question_id},
                     {"skipped", p.skipped},
                     {"pool_size", p.pool_size},
                     {"pool_correct", p.pool_correct},
                     {"full_pool_vote_correct", p.full_pool_vote_correct}};
      if (p.skipped) o["error"] = p.error;
      m["problems"].push_back(std::move(o));
    }
    doc["methods"].push_back(std::move(m));
  }
  return doc.dump(1) + "\n";
}

std::string eval_table_csv(const std::vector<EvalReport>& reports) {
  std::string out = "method,k,accuracy,stddev\n";
  for (const auto& r : reports)
    for (const auto& row : r.table)
      out += r.method + "," + std::to_string(row.k) + "," + fmt(row.accuracy) + "," + fmt(row.stddev) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Efficiency benchmark
// ---------------------------------------------------------------------------

namespace {

void finish_arm(ArmReport& a) {
  a.examples_per_call = a.policy_calls == 0 ? 0.0 : static_cast<double>(a.examples) / static_cast<double>(a.policy_calls);
}

ArmReport brute_force_arm(const Question& q, Completer& completer, const EngineConfig& cfg, std::uint64_t cap) {
  SearchBudget budget;
  budget.max_policy_calls = cap;
  ArmReport arm;
  const State root = State::root(q.id);
  while (budget.can_spend(1 + static_cast<std::uint64_t>(cfg.k_rollouts))) {
    Estimate sol = monte_carlo_estimate(q, root, 1, completer, budget, cfg);
    if (sol.rollouts.front().steps.empty()) continue;
    auto labels = annotate_every_step(q, root, sol.rollouts.front(), completer, budget, cfg);
    arm.examples += labels.size();
  }
  arm.policy_calls = budget.policy_calls;
  return arm;
}

ArmReport omegaprm_arm(const Question& q, Completer& completer, const EngineConfig& cfg, std::uint64_t cap,
                       std::string& failure) {
  BuildResult r = build_tree(q, completer, cfg, cap);
  if (r.status == SearchStatus::estimation_failed) failure = r.failure;
  ArmReport arm;
  arm.policy_calls = r.budget.policy_calls;
  arm.examples = tree_to_examples(r.tree).size();
  return arm;
}

}  // namespace

EfficiencyReport efficiency_benchmark(const std::vector<Question>& questions, const CompleterFactory& make_completer,
                                      const EngineConfig& cfg, std::uint64_t budget, std::size_t parallelism) {
  cfg.validate();
  EfficiencyReport rep;
  rep.budget = budget;
  rep.per_question_budget = questions.empty() ? 0 : budget / questions.size();
  rep.questions.resize(questions.size());
  parallel_for(questions.size(), parallelism, [&](std::size_t i) {
    const Question& q = questions[i];
    QuestionBench& qb = rep.questions[i];
    qb.question_id = q.id;
    try {
      auto a = make_completer();
      qb.brute_force = brute_force_arm(q, *a, cfg, rep.per_question_budget);
    } catch (const std::exception& ex) {
      qb.failure = std::string("brute force: ") + ex.what();
    }
    try {
      auto b = make_completer();
      std::string failure;
      qb.omegaprm = omegaprm_arm(q, *b, cfg, rep.per_question_budget, failure);
      if (!failure.empty()) qb.failure += (qb.failure.empty() ? "" : "; ") + std::string("omegaprm: ") + failure;
    } catch (const std::exception& ex) {
      qb.failure += (qb.failure.empty() ? "" : "; ") + std::string("omegaprm: ") + ex.what();
    }
    finish_arm(qb.brute_force);
    finish_arm(qb.omegaprm);
  });
  for (const auto& qb : rep.questions) {
    rep.brute_force.policy_calls += qb.brute_force.policy_calls;
    rep.brute_force.examples += qb.brute_force.examples;
    rep.omegaprm.policy_calls += qb.omegaprm.policy_calls;
    rep.omegaprm.examples += qb.omegaprm.examples;
  }
  finish_arm(rep.brute_force);
  finish_arm(rep.omegaprm);
  rep.ratio = rep.brute_force.examples_per_call > 0.0 ? rep.omegaprm.examples_per_call / rep.brute_force.examples_per_call
                                                      : 0.0;
  return rep;
}

std::string efficiency_report_json(const EfficiencyReport& r, const std::string& config_echo_json) {
  auto arm = [](const ArmReport& a) {
    return ordered_json{{"policy_calls", a.policy_calls},
                        {"examples", a.examples},
                        {"examples_per_call", a.examples_per_call}};
  };
  ordered_json doc;
  doc["format"] = "omegaprm-bench/1";
  doc["config"] = config_or_null(config_echo_json);
  doc["budget"] = r.budget;
  doc["per_question_budget"] = r.per_question_budget;
  doc["brute_force"] = arm(r.brute_force);
  doc["omegaprm"] = arm(r.omegaprm);
  doc["ratio"] = r.ratio;
  doc["questions"] = ordered_json::array();
  for (const auto& q : r.questions) {
    ordered_json o{{"question_id", q.question_id}, {"brute_force", arm(q.brute_force)}, {"omegaprm", arm(q.omegaprm)}};
    if (!q.failure.empty()) o["failure"] = q.failure;
    doc["questions"].push_back(std::move(o));
  }
  return doc.dump(1) + "\n";
}

}  // namespace omegaprm
