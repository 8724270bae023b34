#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "omegaprm/core.hpp"
#include "omegaprm/mcts.hpp"
#include "omegaprm/policy.hpp"
#include "omegaprm/sim_policy.hpp"

namespace omegaprm {

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

struct CorpusItem {
  Question question;
  std::optional<SimQuestionOverrides> sim;

  bool operator==(const CorpusItem&) const = default;
};

// JSON Lines of {"id","statement","golden_answer"} with an optional "sim"
// object carrying simulator overrides. Ids must be unique.
std::vector<CorpusItem> read_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path, const std::vector<CorpusItem>& items);

// ---------------------------------------------------------------------------
// Question filtering
// ---------------------------------------------------------------------------

struct FilterRecord {
  std::string question_id;
  bool kept = false;
  std::uint32_t correct_count = 0;
  std::uint32_t total = 0;
  std::string reason;  // kept | too_hard | too_easy | unresolved: <message>

  bool operator==(const FilterRecord&) const = default;
};

struct FilterResult {
  std::vector<Question> kept;
  std::vector<FilterRecord> report;  // corpus order
};

// k_filter root rollouts per question; drops questions with no correct
// (too hard) or no wrong (too easy) rollout. Questions already present in
// `previous` are not re-sampled. Requires k_filter >= 2.
FilterResult filter_questions(const std::vector<Question>& corpus, Completer& completer, std::uint32_t k_filter,
                              const EngineConfig& cfg, std::size_t parallelism = 1,
                              const std::vector<FilterRecord>& previous = {});

void write_filter_report(const std::filesystem::path& path, const std::vector<FilterRecord>& report);
std::vector<FilterRecord> read_filter_report(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Training examples
// ---------------------------------------------------------------------------

struct TrainingExample {
  std::string question_id;
  std::string question;  // statement
  std::string prefix;    // newline-joined prefix steps (the state after the question)
  std::string step;      // the single-step action
  double mc = 0.0;       // soft label
  int hard_label = 0;    // 1 iff mc > 0
  std::optional<std::uint64_t> node_id;  // provenance: child node in the source tree

  bool operator==(const TrainingExample&) const = default;
};

struct PreferencePair {
  std::string question_id;
  std::string question;
  std::string prefix;
  std::string step_a;
  std::string step_b;
  double pref_a = 0.5;

  double pref_b() const noexcept { return 1.0 - pref_a; }
  bool operator==(const PreferencePair&) const = default;
};

// Question followed by the prefix steps: the text a PRM conditions on.
std::string state_text(const TrainingExample& ex);
std::string state_text(const PreferencePair& p);

// An edge counts as one step when it carries a single step or is shorter
// than the tree's binary-search threshold.
bool is_single_step(const Tree& tree, const Edge& edge);

// One example per single-step edge, labelled with the child's MC.
std::vector<TrainingExample> tree_to_examples(const Tree& tree);

// (1/2 (1 + p - q), 1/2 (1 + q - p)). Throws InvalidProbability outside [0,1].
std::pair<double, double> normalize_pair(double p, double q);

// All unordered pairs of single-step sibling edges.
std::vector<PreferencePair> tree_to_pairs(const Tree& tree);

// Seeded uniform subset without replacement, in input order.
std::vector<std::size_t> downsample_indices(std::size_t n, std::size_t target, std::uint64_t seed);

template <class T>
std::vector<T> downsample(const std::vector<T>& items, std::size_t target, std::uint64_t seed) {
  std::vector<T> out;
  out.reserve(target);
  for (std::size_t i : downsample_indices(items.size(), target, seed)) out.push_back(items[i]);
  return out;
}

// JSON Lines. Import throws ParseError carrying the 1-based line number.
void export_jsonl(const std::filesystem::path& path, const std::vector<TrainingExample>& examples);
void export_jsonl(const std::filesystem::path& path, const std::vector<PreferencePair>& pairs);
std::vector<TrainingExample> import_examples(const std::filesystem::path& path);
std::vector<PreferencePair> import_pairs(const std::filesystem::path& path);

std::string example_to_line(const TrainingExample& ex);
TrainingExample example_from_line(std::string_view line, std::size_t line_no);
std::string pair_to_line(const PreferencePair& p);
PreferencePair pair_from_line(std::string_view line, std::size_t line_no);

}  // namespace omegaprm
