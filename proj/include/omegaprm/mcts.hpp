#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "omegaprm/core.hpp"
#include "omegaprm/policy.hpp"

namespace omegaprm {

using NodeId = std::size_t;

struct Edge {
  StepSeq action;
  NodeId child = 0;

  bool operator==(const Edge&) const = default;
};

struct TreeNode {
  State state;
  NodeStats stats;
  std::vector<Edge> children;
  std::optional<NodeId> parent;

  bool operator==(const TreeNode&) const = default;
};

// State-action tree for one question. Node 0 is the root. Sibling edges
// never have one action be a prefix of another, so every state has one
// insertion point and identical prefixes share one node.
class Tree {
 public:
  explicit Tree(Question question);

  const Question& question() const noexcept { return question_; }
  NodeId root() const noexcept { return 0; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const TreeNode& node(NodeId id) const { return nodes_.at(id); }
  TreeNode& node(NodeId id) { return nodes_.at(id); }
  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }

  std::optional<NodeId> find(const State& state) const;

  // Inserts node(from).state ++ action, splitting an existing edge when the
  // new state lies on it. Returns the node and whether it was created.
  std::pair<NodeId, bool> insert(NodeId from, std::span<const Step> action);

  // Mean token length of the root's rollouts and the binary-search stop
  // threshold derived from it (mean / step_split_target).
  double avg_solution_tokens() const noexcept { return avg_solution_tokens_; }
  double split_threshold() const noexcept { return split_threshold_; }
  void set_split_basis(double avg_tokens, double threshold) {
    avg_solution_tokens_ = avg_tokens;
    split_threshold_ = threshold;
  }

  // Attach a raw node/edge list (deserialization). Rebuilds the index.
  static Tree from_parts(Question question, std::vector<TreeNode> nodes, double avg, double threshold);

  bool operator==(const Tree& o) const {
    return question_ == o.question_ && nodes_ == o.nodes_ && avg_solution_tokens_ == o.avg_solution_tokens_ &&
           split_threshold_ == o.split_threshold_;
  }

 private:
  Question question_;
  std::vector<TreeNode> nodes_;
  std::unordered_map<std::string, NodeId> index_;
  double avg_solution_tokens_ = 0.0;
  double split_threshold_ = 0.0;
};

struct SearchBudget {
  std::uint32_t search_limit = 0;
  std::uint32_t searches_done = 0;
  std::uint64_t policy_calls = 0;
  std::optional<std::uint64_t> max_policy_calls;

  bool can_spend(std::uint64_t n) const noexcept {
    return !max_policy_calls || policy_calls + n <= *max_policy_calls;
  }
};

struct Estimate {
  McEstimate mc;
  std::vector<Rollout> rollouts;
};

// k fresh rollouts from `state`; MC = correct / k. Charges k policy calls.
// Throws BudgetExhausted before sampling when the cap would be exceeded and
// EstimationFailed when the completer fails.
Estimate monte_carlo_estimate(const Question& question, const State& state, std::uint32_t k,
                              Completer& completer, SearchBudget& budget, const EngineConfig& cfg);

// Q(s, r) = alpha^(1 - MC(s)) * beta^(len(r) / L)
double rollout_value(double mc, std::size_t rollout_tokens, const EngineConfig& cfg);

// U(s) = c_puct * sqrt(sum_i N(s_i)) / (1 + N(s))
double exploration_bonus(std::uint64_t state_visits, std::uint64_t total_pool_visits, const EngineConfig& cfg);

struct PoolEntry {
  NodeId node = 0;
  std::size_t rollout_index = 0;  // into node.stats.rollouts
  std::uint64_t seq = 0;          // insertion order

  bool operator==(const PoolEntry&) const = default;
};

// What a state looked like when one of its rollouts joined the pool.
struct PoolAdmission {
  PoolEntry entry;
  McEstimate mc_at_insert;
  bool rollout_correct = false;
};

// Wrong-answer rollouts of states with 0 < MC < 1.
class Pool {
 public:
  // Returns false (and does nothing) when the state is not mixed, the
  // rollout is correct, or the same rollout text is already pooled for the
  // state.
  bool add(const Tree& tree, NodeId node, std::size_t rollout_index);

  // Pops argmax Q(s,r) + U(s); earliest insertion wins ties. Q is read from
  // the state's current MC. Throws PoolExhausted when empty.
  PoolEntry select(const Tree& tree, const EngineConfig& cfg);

  double score(const Tree& tree, const PoolEntry& e, std::uint64_t total_visits, const EngineConfig& cfg) const;
  std::uint64_t total_visits(const Tree& tree) const;

  bool empty() const noexcept { return entries_.empty(); }
  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<PoolEntry>& entries() const noexcept { return entries_; }
  const std::vector<PoolAdmission>& admissions() const noexcept { return admissions_; }

 private:
  std::vector<PoolEntry> entries_;
  std::vector<PoolAdmission> admissions_;
  std::set<std::pair<NodeId, std::string>> seen_;
  std::uint64_t next_seq_ = 0;
};

enum class SearchStatus { complete, estimation_failed, budget_exhausted };

struct Probe {
  std::size_t position = 0;  // number of rollout steps in the probed prefix
  McEstimate mc;
  std::vector<Rollout> rollouts;  // empty when reused
  std::optional<NodeId> reused;   // existing node whose estimate was reused
};

struct SearchOutcome {
  NodeId origin = 0;
  std::size_t rollout_steps = 0;
  // 1-based step (within the rollout) ending the located error span. The
  // span is (last_good, first_error_index]; it is a single step unless the
  // search stopped on the token threshold.
  std::size_t first_error_index = 0;
  std::size_t last_good = 0;
  std::vector<Probe> probes;  // in probe order
  std::uint64_t policy_calls = 0;
  SearchStatus status = SearchStatus::complete;
  std::string failure;
};

// Binary search for the first wrong step of `rollout`, sampled from
// tree.node(origin). Read-only on the tree: returns probes for maintain().
// Throws InvalidSearchTarget unless the rollout is wrong, nonempty, and the
// origin has MC > 0.
SearchOutcome locate_first_error(const Tree& tree, NodeId origin, const Rollout& rollout, const EngineConfig& cfg,
                                 Completer& completer, SearchBudget& budget);

struct MaintainReport {
  std::vector<NodeId> trajectory;  // nodes on the searched path, shallow to deep
  std::vector<NodeId> created;
  std::size_t pool_added = 0;
};

// Applies a search: N(origin) += 1 for a completed search, inserts every
// probed prefix as a chained node (plus the full wrong solution when the
// error is its last step), and pools the wrong rollouts of new mixed
// states. No backup to ancestors.
MaintainReport maintain(Tree& tree, Pool& pool, const PoolEntry& selected, const Rollout& rollout,
                        const SearchOutcome& outcome);

struct BuildResult {
  Tree tree;
  SearchBudget budget;
  std::vector<PoolAdmission> pool_admissions;
  std::size_t pool_remaining = 0;
  std::vector<SearchOutcome> searches;
  SearchStatus status = SearchStatus::complete;
  std::string failure;
};

// Seeds the root with k rollouts, then loops select -> locate_first_error ->
// maintain until search_limit searches or an empty pool. Root estimation
// failure propagates; later failures stop the build and keep the tree.
BuildResult build_tree(const Question& question, Completer& completer, const EngineConfig& cfg,
                       std::optional<std::uint64_t> max_policy_calls = std::nullopt);

// Structural audit: single root, parent links match edges, every child
// prefix is its parent's prefix plus the edge action, stored MC equals the
// recount of stored rollouts, sibling actions are prefix-free. Returns one
// message per violation.
std::vector<std::string> check_tree_invariants(const Tree& tree);

// Per-step annotation of a whole solution: k rollouts after every prefix
// x_{1:t}, t = 1..M. Returns one estimate per step that fit in the budget.
std::vector<McEstimate> annotate_every_step(const Question& question, const State& from, const Rollout& solution,
                                            Completer& completer, SearchBudget& budget, const EngineConfig& cfg);

}  // namespace omegaprm
