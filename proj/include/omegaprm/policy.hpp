#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "omegaprm/core.hpp"

namespace omegaprm {

struct CompleterRequest {
  const Question* question = nullptr;  // statement and golden answer for tagging
  State state;
  std::uint32_t n_samples = 1;
  double temperature = 1.0;
  std::uint32_t max_tokens = 1024;
};

// The rollout policy pi(a|s). Implementations must accept concurrent calls.
class Completer {
 public:
  virtual ~Completer() = default;

  // Exactly req.n_samples rollouts, each tagged against the golden answer.
  // Transport failures surface as CompleterUnavailable.
  virtual std::vector<Rollout> sample_rollouts(const CompleterRequest& req) = 0;
};

inline constexpr std::string_view kDefaultPromptTemplate =
    "Solve the problem step by step.\n\nProblem: {question}\n\nSolution:\n{prefix}";

// Substitutes {question} and {prefix}; prefix steps are newline-joined.
// Throws TemplateError when either placeholder is missing.
std::string render_prompt(const Question& question, const State& state,
                          std::string_view tmpl = kDefaultPromptTemplate);

// Question statement followed by the prefix steps, one per line. This is
// the text a PRM sees as the state s.
std::string render_state_text(std::string_view statement, std::span<const Step> prefix);

// Splits a completion into nonempty trimmed lines, extracts the final
// answer from the whole text and tags correctness.
Rollout rollout_from_completion(std::string_view completion, const Question& question,
                                const Tokenizer& tokenizer = whitespace_token_count);

struct RemoteCompleterConfig {
  std::string endpoint;  // http://host:port/path
  std::string auth_token;
  std::string prompt_template = std::string(kDefaultPromptTemplate);
  std::chrono::milliseconds timeout{30000};
  std::uint32_t max_retries = 3;
  std::chrono::milliseconds retry_backoff{200};
  std::uint32_t batch_size = 16;
};

// POSTs {"prompt","n","temperature","max_tokens"} and expects
// {"completions": [string, ...]}. A request for n samples is split into
// batches of at most batch_size.
class RemoteCompleter final : public Completer {
 public:
  explicit RemoteCompleter(RemoteCompleterConfig cfg, Tokenizer tokenizer = whitespace_token_count);

  std::vector<Rollout> sample_rollouts(const CompleterRequest& req) override;

  std::uint64_t http_requests() const noexcept { return http_requests_.load(); }

 private:
  std::vector<std::string> post_batch(const std::string& prompt, std::uint32_t n, double temperature,
                                      std::uint32_t max_tokens);

  RemoteCompleterConfig cfg_;
  Tokenizer tokenizer_;
  std::string host_;
  std::string path_;
  std::atomic<std::uint64_t> http_requests_{0};
};

}  // namespace omegaprm
