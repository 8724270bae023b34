#include "omegaprm/mcts.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "omegaprm/errors.hpp"

namespace omegaprm {

namespace {

std::size_t common_prefix(std::span<const Step> a, std::span<const Step> b) {
  std::size_t n = std::min(a.size(), b.size());
  std::size_t i = 0;
  while (i < n && a[i].text == b[i].text) ++i;
  return i;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tree
// ---------------------------------------------------------------------------

Tree::Tree(Question question) : question_(std::move(question)) {
  TreeNode root;
  root.state = State::root(question_.id);
  index_.emplace(root.state.key(), 0);
  nodes_.push_back(std::move(root));
}

std::optional<NodeId> Tree::find(const State& state) const {
  if (auto it = index_.find(state.key()); it != index_.end()) return it->second;
  return std::nullopt;
}

std::pair<NodeId, bool> Tree::insert(NodeId from, std::span<const Step> action) {
  State target = state_transition(node(from).state, action);
  if (auto existing = find(target)) return {*existing, false};

  NodeId cur = from;
  std::size_t offset = 0;
  for (;;) {
    auto rest = action.subspan(offset);
    bool descended = false;
    for (const auto& e : nodes_[cur].children) {
      std::size_t c = common_prefix(e.action, rest);
      if (c == e.action.size() && c < rest.size()) {
        cur = e.child;
        offset += c;
        descended = true;
        break;
      }
    }
    if (descended) continue;

    const NodeId id = nodes_.size();
    TreeNode fresh;
    fresh.state = std::move(target);
    fresh.parent = cur;

    // Edges of `cur` that pass through the new state now hang below it.
    auto& siblings = nodes_[cur].children;
    std::vector<Edge> kept;
    for (auto& e : siblings) {
      if (e.action.size() > rest.size() && common_prefix(e.action, rest) == rest.size()) {
        Edge moved{StepSeq(e.action.begin() + static_cast<std::ptrdiff_t>(rest.size()), e.action.end()), e.child};
        nodes_[e.child].parent = id;
        fresh.children.push_back(std::move(moved));
      } else {
        kept.push_back(std::move(e));
      }
    }
    kept.push_back(Edge{StepSeq(rest.begin(), rest.end()), id});
    siblings = std::move(kept);

    index_.emplace(fresh.state.key(), id);
    nodes_.push_back(std::move(fresh));
    return {id, true};
  }
}

Tree Tree::from_parts(Question question, std::vector<TreeNode> nodes, double avg, double threshold) {
  Tree t(std::move(question));
  if (nodes.empty()) throw Error("tree has no nodes");
  t.nodes_ = std::move(nodes);
  t.index_.clear();
  for (NodeId i = 0; i < t.nodes_.size(); ++i) {
    if (!t.index_.emplace(t.nodes_[i].state.key(), i).second) throw Error("duplicate state in tree");
  }
  t.avg_solution_tokens_ = avg;
  t.split_threshold_ = threshold;
  return t;
}

// ---------------------------------------------------------------------------
// Estimation and scoring
// ---------------------------------------------------------------------------

Estimate monte_carlo_estimate(const Question& question, const State& state, std::uint32_t k, Completer& completer,
                              SearchBudget& budget, const EngineConfig& cfg) {
  if (k == 0) throw Error("monte carlo estimate needs k >= 1");
  if (!budget.can_spend(k)) throw BudgetExhausted("policy-call budget exhausted");
  CompleterRequest req{&question, state, k, cfg.temperature, cfg.max_tokens};
  std::vector<Rollout> rollouts;
  try {
    rollouts = completer.sample_rollouts(req);
  } catch (const std::exception& ex) {
    throw EstimationFailed(std::string("completer failed: ") + ex.what());
  }
  if (rollouts.size() != k)
    throw EstimationFailed("completer returned " + std::to_string(rollouts.size()) + " rollouts, expected " +
                           std::to_string(k));
  budget.policy_calls += k;
  Estimate est;
  est.mc = McEstimate::count(rollouts);
  est.rollouts = std::move(rollouts);
  return est;
}

double rollout_value(double mc, std::size_t rollout_tokens, const EngineConfig& cfg) {
  return std::pow(cfg.alpha, 1.0 - mc) * std::pow(cfg.beta, static_cast<double>(rollout_tokens) / cfg.len_scale);
}

double exploration_bonus(std::uint64_t state_visits, std::uint64_t total_pool_visits, const EngineConfig& cfg) {
  return cfg.c_puct * std::sqrt(static_cast<double>(total_pool_visits)) / (1.0 + static_cast<double>(state_visits));
}

// ---------------------------------------------------------------------------
// Pool
// ---------------------------------------------------------------------------

bool Pool::add(const Tree& tree, NodeId node, std::size_t rollout_index) {
  const auto& stats = tree.node(node).stats;
  if (!stats.mc.is_mixed()) return false;
  const Rollout& r = stats.rollouts.at(rollout_index);
  if (r.is_correct || r.steps.empty()) return false;
  if (!seen_.emplace(node, r.text_key()).second) return false;
  PoolEntry e{node, rollout_index, next_seq_++};
  entries_.push_back(e);
  admissions_.push_back(PoolAdmission{e, stats.mc, r.is_correct});
  return true;
}

std::uint64_t Pool::total_visits(const Tree& tree) const {
  std::set<NodeId> states;
  for (const auto& e : entries_) states.insert(e.node);
  std::uint64_t sum = 0;
  for (NodeId s : states) sum += tree.node(s).stats.visit_count;
  return sum;
}

double Pool::score(const Tree& tree, const PoolEntry& e, std::uint64_t total_visits, const EngineConfig& cfg) const {
  const auto& stats = tree.node(e.node).stats;
  const Rollout& r = stats.rollouts.at(e.rollout_index);
  return rollout_value(stats.mc.value(), r.token_len, cfg) + exploration_bonus(stats.visit_count, total_visits, cfg);
}

PoolEntry Pool::select(const Tree& tree, const EngineConfig& cfg) {
  if (entries_.empty()) throw PoolExhausted("rollout pool is empty");
  const std::uint64_t total = total_visits(tree);
  std::size_t best = 0;
  double best_score = score(tree, entries_[0], total, cfg);
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    double s = score(tree, entries_[i], total, cfg);
    if (s > best_score) {
      best = i;
      best_score = s;
    }
  }
  PoolEntry chosen = entries_[best];
  entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(best));
  return chosen;
}

// ---------------------------------------------------------------------------
// Binary search
// ---------------------------------------------------------------------------

SearchOutcome locate_first_error(const Tree& tree, NodeId origin, const Rollout& rollout, const EngineConfig& cfg,
                                 Completer& completer, SearchBudget& budget) {
  const TreeNode& from = tree.node(origin);
  if (rollout.is_correct) throw InvalidSearchTarget("binary search needs a wrong-answer rollout");
  if (rollout.steps.empty()) throw InvalidSearchTarget("binary search needs a rollout with at least one step");
  if (!from.stats.mc.is_positive()) throw InvalidSearchTarget("binary search needs a start state with MC > 0");

  const auto& steps = rollout.steps;
  const std::size_t m = steps.size();
  std::vector<std::size_t> cum(m + 1, 0);
  for (std::size_t i = 0; i < m; ++i) cum[i + 1] = cum[i] + steps[i].token_len;

  SearchOutcome out;
  out.origin = origin;
  out.rollout_steps = m;

  std::size_t lo = 0;  // prefix known to reach the answer (MC > 0)
  std::size_t hi = m;  // prefix known to fail
  const double threshold = tree.split_threshold();
  const std::uint64_t calls_before = budget.policy_calls;

  while (hi - lo > 1 && static_cast<double>(cum[hi] - cum[lo]) >= threshold) {
    // Step boundary nearest the token midpoint; the left one on ties.
    const double target = static_cast<double>(cum[lo]) + static_cast<double>(cum[hi] - cum[lo]) / 2.0;
    std::size_t mid = lo + 1;
    double best = std::fabs(static_cast<double>(cum[mid]) - target);
    for (std::size_t b = lo + 2; b < hi; ++b) {
      double d = std::fabs(static_cast<double>(cum[b]) - target);
      if (d < best) {
        best = d;
        mid = b;
      }
    }

    Probe probe;
    probe.position = mid;
    State probed = state_transition(from.state, std::span<const Step>(steps).first(mid));
    if (auto existing = tree.find(probed); existing && tree.node(*existing).stats.mc.total > 0) {
      probe.mc = tree.node(*existing).stats.mc;
      probe.reused = existing;
    } else {
      try {
        Estimate est = monte_carlo_estimate(tree.question(), probed, cfg.k_rollouts, completer, budget, cfg);
        probe.mc = est.mc;
        probe.rollouts = std::move(est.rollouts);
      } catch (const BudgetExhausted& ex) {
        out.status = SearchStatus::budget_exhausted;
        out.failure = ex.what();
        break;
      } catch (const EstimationFailed& ex) {
        out.status = SearchStatus::estimation_failed;
        out.failure = ex.what();
        break;
      }
    }
    if (probe.mc.is_positive())
      lo = mid;
    else
      hi = mid;
    out.probes.push_back(std::move(probe));
  }

  out.last_good = lo;
  out.first_error_index = hi;
  out.policy_calls = budget.policy_calls - calls_before;
  return out;
}

MaintainReport maintain(Tree& tree, Pool& pool, const PoolEntry& selected, const Rollout& rollout,
                        const SearchOutcome& outcome) {
  MaintainReport report;
  if (outcome.status == SearchStatus::complete) tree.node(selected.node).stats.visit_count += 1;

  // Every probe is a prefix of the same rollout, so they chain shallow to
  // deep. Probes past the error carry MC = 0.
  std::map<std::size_t, const Probe*> by_position;
  for (const auto& p : outcome.probes) by_position.emplace(p.position, &p);

  auto attach = [&](std::size_t position, NodeStats stats) {
    auto action = std::span<const Step>(rollout.steps).first(position);
    auto [id, created] = tree.insert(outcome.origin, action);
    report.trajectory.push_back(id);
    if (!created) return;
    report.created.push_back(id);
    tree.node(id).stats = std::move(stats);
    for (std::size_t i = 0; i < tree.node(id).stats.rollouts.size(); ++i)
      if (pool.add(tree, id, i)) ++report.pool_added;
  };

  // Reused probes already exist, so attach() only records them.
  for (const auto& [position, probe] : by_position) attach(position, NodeStats{0, probe->mc, probe->rollouts});

  // The full solution is itself a terminal state whose outcome is already
  // known: one finished "rollout" with the solution's own answer.
  if (outcome.status == SearchStatus::complete && outcome.first_error_index == outcome.rollout_steps &&
      !by_position.contains(outcome.rollout_steps)) {
    NodeStats terminal;
    terminal.rollouts.push_back(Rollout::make({}, rollout.final_answer, rollout.is_correct));
    terminal.mc = McEstimate::count(terminal.rollouts);
    attach(outcome.rollout_steps, std::move(terminal));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Tree construction
// ---------------------------------------------------------------------------

BuildResult build_tree(const Question& question, Completer& completer, const EngineConfig& cfg,
                       std::optional<std::uint64_t> max_policy_calls) {
  cfg.validate();
  BuildResult result{Tree(question), {}, {}, 0, {}, SearchStatus::complete, {}};
  result.budget.search_limit = cfg.search_limit;
  result.budget.max_policy_calls = max_policy_calls;
  Tree& tree = result.tree;
  Pool pool;

  Estimate root_est;
  try {
    root_est = monte_carlo_estimate(question, tree.node(0).state, cfg.k_rollouts, completer, result.budget, cfg);
  } catch (const BudgetExhausted& ex) {
    result.status = SearchStatus::budget_exhausted;
    result.failure = ex.what();
    return result;
  }
  auto& root = tree.node(0);
  root.stats.mc = root_est.mc;
  root.stats.rollouts = std::move(root_est.rollouts);
  double sum = 0;
  for (const auto& r : root.stats.rollouts) sum += static_cast<double>(r.token_len);
  const double avg = sum / static_cast<double>(root.stats.rollouts.size());
  tree.set_split_basis(avg, avg / static_cast<double>(cfg.step_split_target));
  for (std::size_t i = 0; i < root.stats.rollouts.size(); ++i) pool.add(tree, 0, i);

  while (result.budget.searches_done < result.budget.search_limit && !pool.empty()) {
    PoolEntry chosen = pool.select(tree, cfg);
    // Copy: maintain() may grow the node vector.
    Rollout rollout = tree.node(chosen.node).stats.rollouts.at(chosen.rollout_index);
    SearchOutcome outcome = locate_first_error(tree, chosen.node, rollout, cfg, completer, result.budget);
    maintain(tree, pool, chosen, rollout, outcome);
    SearchStatus status = outcome.status;
    std::string failure = outcome.failure;
    result.searches.push_back(std::move(outcome));
    if (status != SearchStatus::complete) {
      result.status = status;
      result.failure = std::move(failure);
      break;
    }
    ++result.budget.searches_done;
  }

  result.pool_admissions = pool.admissions();
  result.pool_remaining = pool.size();
  return result;
}

std::vector<std::string> check_tree_invariants(const Tree& tree) {
  std::vector<std::string> errs;
  auto where = [](NodeId id) { return "node " + std::to_string(id) + ": "; };
  std::vector<std::size_t> incoming(tree.size(), 0);
  if (tree.node(0).parent) errs.push_back("root has a parent");
  if (!tree.node(0).state.is_root()) errs.push_back("root has a nonempty prefix");
  for (NodeId id = 0; id < tree.size(); ++id) {
    const auto& n = tree.node(id);
    if (n.stats.mc != McEstimate::count(n.stats.rollouts)) errs.push_back(where(id) + "MC differs from rollout recount");
    if (n.state.question_id != tree.question().id) errs.push_back(where(id) + "foreign question id");
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      const Edge& e = n.children[i];
      if (e.child >= tree.size() || e.child == 0) {
        errs.push_back(where(id) + "edge to invalid node");
        continue;
      }
      ++incoming[e.child];
      const auto& c = tree.node(e.child);
      if (c.parent != id) errs.push_back(where(e.child) + "parent link does not match edge");
      if (e.action.empty()) errs.push_back(where(id) + "empty edge action");
      StepSeq expect = n.state.prefix;
      expect.insert(expect.end(), e.action.begin(), e.action.end());
      if (expect != c.state.prefix) errs.push_back(where(e.child) + "prefix is not parent prefix ++ action");
      for (std::size_t k = 0; k < n.children.size(); ++k) {
        const Edge& o = n.children[k];
        if (k != i && o.action.size() <= e.action.size() && common_prefix(o.action, e.action) == o.action.size())
          errs.push_back(where(id) + "sibling actions are not prefix-free");
      }
    }
  }
  for (NodeId id = 1; id < tree.size(); ++id)
    if (incoming[id] != 1) errs.push_back(where(id) + "has " + std::to_string(incoming[id]) + " incoming edges");
  return errs;
}

std::vector<McEstimate> annotate_every_step(const Question& question, const State& from, const Rollout& solution,
                                            Completer& completer, SearchBudget& budget, const EngineConfig& cfg) {
  std::vector<McEstimate> out;
  for (std::size_t t = 1; t <= solution.steps.size(); ++t) {
    State s = state_transition(from, std::span<const Step>(solution.steps).first(t));
    try {
      out.push_back(monte_carlo_estimate(question, s, cfg.k_rollouts, completer, budget, cfg).mc);
    } catch (const BudgetExhausted&) {
      break;
    }
  }
  return out;
}

}  // namespace omegaprm
