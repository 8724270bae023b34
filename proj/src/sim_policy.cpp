#include "omegaprm/sim_policy.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <regex>
#include <sstream>

#include "omegaprm/answer.hpp"
#include "omegaprm/errors.hpp"

namespace omegaprm {

namespace {

struct ParsedStep {
  std::int64_t a = 0;
  char op = '+';
  std::int64_t b = 0;
  std::int64_t c = 0;
};

std::optional<std::int64_t> to_int(std::string_view s) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<ParsedStep> parse_step(std::string_view text) {
  std::vector<std::string_view> tok;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ') ++j;
    if (j > i) tok.push_back(text.substr(i, j - i));
    i = j;
  }
  if (tok.size() != 5 || tok[3] != "=" || tok[1].size() != 1 || (tok[1][0] != '+' && tok[1][0] != '-'))
    return std::nullopt;
  auto a = to_int(tok[0]);
  auto b = to_int(tok[2]);
  auto c = to_int(tok[4]);
  if (!a || !b || !c) return std::nullopt;
  return ParsedStep{*a, tok[1][0], *b, *c};
}

std::int64_t apply(std::int64_t a, const SimOp& op) { return op.op == '+' ? a + op.operand : a - op.operand; }

}  // namespace

std::int64_t SimQuestion::answer() const {
  std::int64_t v = start;
  for (const auto& op : ops) v = apply(v, op);
  return v;
}

std::string SimQuestion::statement() const {
  std::ostringstream os;
  os << "Start with " << start << '.';
  for (const auto& op : ops) os << (op.op == '+' ? " Add " : " Subtract ") << op.operand << '.';
  os << " What is the result?";
  return os.str();
}

StepSeq SimQuestion::ground_truth_chain() const {
  StepSeq steps;
  std::int64_t v = start;
  for (const auto& op : ops) {
    std::int64_t c = apply(v, op);
    steps.push_back(Step::make(SimulatedPolicy::format_step(v, op, c)));
    v = c;
  }
  return steps;
}

std::optional<SimQuestion> SimQuestion::parse(std::string_view statement) {
  static const std::regex kStart(R"(^Start with (-?\d+)\.)");
  static const std::regex kOp(R"( (Add|Subtract) (\d+)\.)");
  std::string s(statement);
  std::smatch m;
  if (!std::regex_search(s, m, kStart)) return std::nullopt;
  SimQuestion q;
  q.start = std::stoll(m[1].str());
  for (auto it = std::sregex_iterator(s.begin(), s.end(), kOp); it != std::sregex_iterator(); ++it)
    q.ops.push_back(SimOp{(*it)[1].str() == "Add" ? '+' : '-', std::stoll((*it)[2].str())});
  if (q.ops.empty()) return std::nullopt;
  return q;
}

void SimPolicySpec::validate() const {
  if (!(per_step_error_prob >= 0.0 && per_step_error_prob <= 1.0))
    throw InvalidConfig("per_step_error_prob must lie in [0, 1]");
  if (!(recovery_prob >= 0.0 && recovery_prob <= 1.0)) throw InvalidConfig("recovery_prob must lie in [0, 1]");
  if (max_error_delta < 1) throw InvalidConfig("max_error_delta must be at least 1");
}

SimulatedPolicy::SimulatedPolicy(SimPolicySpec spec) : spec_(spec) { spec_.validate(); }

void SimulatedPolicy::set_overrides(const std::string& question_id, SimQuestionOverrides overrides) {
  auto check = [](std::optional<double> p, const char* what) {
    if (p && !(*p >= 0.0 && *p <= 1.0)) throw InvalidConfig(std::string(what) + " must lie in [0, 1]");
  };
  check(overrides.error_prob, "error_prob");
  check(overrides.recovery_prob, "recovery_prob");
  check(overrides.trap_prob, "trap_prob");
  std::lock_guard lock(mu_);
  overrides_[question_id] = overrides;
}

std::string SimulatedPolicy::format_step(std::int64_t a, const SimOp& op, std::int64_t c) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%lld %c %lld = %lld", static_cast<long long>(a), op.op,
                static_cast<long long>(op.operand), static_cast<long long>(c));
  return buf;
}

std::optional<std::size_t> SimulatedPolicy::first_error(std::span<const Step> steps, const SimQuestion& q) {
  std::int64_t written = q.start;
  for (std::size_t j = 0; j < steps.size(); ++j) {
    auto p = parse_step(steps[j].text);
    if (!p || j >= q.ops.size()) return j + 1;
    const SimOp& op = q.ops[j];
    if (p->a != written || p->op != op.op || p->b != op.operand || p->c != apply(p->a, op)) return j + 1;
    written = p->c;
  }
  return std::nullopt;
}

bool SimulatedPolicy::has_error(std::span<const Step> steps, const SimQuestion& q) {
  return first_error(steps, q).has_value();
}

SimulatedPolicy::Resolved SimulatedPolicy::resolve(const Question& q) const {
  auto chain = SimQuestion::parse(q.statement);
  if (!chain) throw Error("question '" + q.id + "' is not a simulator question");
  Resolved r{*chain, spec_.per_step_error_prob, spec_.recovery_prob, {}};
  std::lock_guard lock(mu_);
  if (auto it = overrides_.find(q.id); it != overrides_.end()) {
    r.overrides = it->second;
    if (it->second.error_prob) r.error_prob = *it->second.error_prob;
    if (it->second.recovery_prob) r.recovery_prob = *it->second.recovery_prob;
  }
  return r;
}

Rollout SimulatedPolicy::finish(const Question& q, const Resolved& r, const State& state, Rng* rng,
                                const std::vector<std::size_t>* forced_errors, std::int64_t forced_delta) const {
  const auto& prefix = state.prefix;
  const std::size_t m = r.chain.ops.size();
  std::int64_t cur = r.chain.start;
  if (!prefix.empty()) {
    auto last = parse_step(prefix.back().text);
    if (!last) {
      // Foreign prefix text: the simulator cannot continue it.
      Rollout bad = Rollout::make({}, "", false);
      bad.trace = InjectionTrace{true, {}, false};
      return bad;
    }
    cur = last->c;
  }

  InjectionTrace trace;
  trace.prefix_had_error = has_error(prefix, r.chain);
  StepSeq steps;
  for (std::size_t j = prefix.size() + 1; j <= m; ++j) {
    const SimOp& op = r.chain.ops[j - 1];
    std::int64_t c = apply(cur, op);
    bool err = false;
    if (forced_errors) {
      if (std::find(forced_errors->begin(), forced_errors->end(), j) != forced_errors->end()) {
        c += forced_delta;
        err = true;
      }
    } else if (r.overrides.trap_step == j && rng->bernoulli(r.overrides.trap_prob)) {
      c += r.overrides.trap_delta;
      err = true;
    } else if (rng->bernoulli(r.error_prob)) {
      c += rng->uniform_int(1, spec_.max_error_delta);
      err = true;
    }
    steps.push_back(Step::make(format_step(cur, op, c)));
    if (err) trace.error_steps.push_back(steps.size());
    cur = c;
  }

  bool any_error = trace.prefix_had_error || !trace.error_steps.empty();
  if (any_error && rng && r.recovery_prob > 0.0 && rng->bernoulli(r.recovery_prob)) trace.recovered = true;
  std::int64_t stated = trace.recovered ? r.chain.answer() : cur;

  std::string text = join_steps(steps);
  if (!text.empty()) text += '\n';
  text += "The answer is " + std::to_string(stated) + ".";
  std::string answer = extract_final_answer(text);
  bool correct = answers_equivalent(answer, q.golden_answer);
  Rollout out = Rollout::make(std::move(steps), std::move(answer), correct);
  out.trace = std::move(trace);
  return out;
}

std::uint64_t SimulatedPolicy::next_ordinal(std::uint64_t state_hash) {
  std::lock_guard lock(mu_);
  return ordinals_[state_hash]++;
}

std::vector<Rollout> SimulatedPolicy::sample_rollouts(const CompleterRequest& req) {
  if (req.question == nullptr) throw Error("completer request has no question");
  const Question& q = *req.question;
  Resolved r = resolve(q);
  std::uint64_t h = fnv1a64(req.state.key(), fnv1a64(q.id));
  Rng rng(derive_seed(spec_.seed, h, next_ordinal(h)));
  std::vector<Rollout> out;
  out.reserve(req.n_samples);
  for (std::uint32_t i = 0; i < req.n_samples; ++i) out.push_back(finish(q, r, req.state, &rng, nullptr, 0));
  return out;
}

Rollout SimulatedPolicy::make_solution(const Question& question, const std::vector<std::size_t>& error_steps,
                                       std::int64_t delta) const {
  if (delta == 0) throw Error("injected error delta must be nonzero");
  Resolved r = resolve(question);
  return finish(question, r, State::root(question.id), nullptr, &error_steps, delta);
}

std::vector<SimCorpusItem> make_sim_corpus(const SimCorpusOptions& opts) {
  Rng rng(derive_seed(opts.seed, 0x5157c0de));
  std::vector<SimCorpusItem> out;
  out.reserve(opts.n_questions);
  const int width = opts.n_questions > 1 ? static_cast<int>(std::to_string(opts.n_questions - 1).size()) : 1;
  auto draw = [&](double lo, double hi) { return hi > lo ? lo + (hi - lo) * rng.uniform() : lo; };
  for (std::size_t i = 0; i < opts.n_questions; ++i) {
    SimQuestion sq;
    sq.start = rng.uniform_int(1, 50);
    for (std::size_t j = 0; j < opts.n_steps; ++j)
      sq.ops.push_back(SimOp{rng.bernoulli(0.5) ? '+' : '-', rng.uniform_int(1, opts.max_operand)});
    SimCorpusItem item;
    char id[64];
    std::snprintf(id, sizeof id, "%s-%0*zu", opts.id_prefix.c_str(), width, i);
    item.question = Question{id, sq.statement(), std::to_string(sq.answer())};
    item.overrides.error_prob = draw(opts.error_prob_lo, opts.error_prob_hi);
    item.overrides.recovery_prob = opts.recovery_prob;
    if (opts.trap_prob_hi > 0.0) {
      item.overrides.trap_step = static_cast<std::uint32_t>(rng.uniform_int(1, static_cast<std::int64_t>(opts.n_steps)));
      item.overrides.trap_prob = draw(opts.trap_prob_lo, opts.trap_prob_hi);
      item.overrides.trap_delta = rng.uniform_int(1, 9);
    }
    out.push_back(std::move(item));
  }
  return out;
}

}  // namespace omegaprm
