#include "omegaprm/core.hpp"

#include <cctype>
#include <cmath>

#include "omegaprm/errors.hpp"

namespace omegaprm {

std::size_t whitespace_token_count(std::string_view text) {
  std::size_t n = 0;
  bool in_token = false;
  for (char c : text) {
    bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_token) ++n;
    in_token = !space;
  }
  return n;
}

std::size_t char_quarter_token_count(std::string_view text) { return (text.size() + 3) / 4; }

void validate(const Question& q) {
  if (q.id.empty()) throw Error("question id is empty");
  if (q.golden_answer.empty()) throw Error("question '" + q.id + "' has an empty golden answer");
}

Step Step::make(std::string text, const Tokenizer& tokenizer) {
  Step s;
  s.token_len = tokenizer(text);
  s.text = std::move(text);
  return s;
}

std::size_t total_tokens(std::span<const Step> steps) {
  std::size_t n = 0;
  for (const auto& s : steps) n += s.token_len;
  return n;
}

std::string join_steps(std::span<const Step> steps) {
  std::string out;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i) out += '\n';
    out += steps[i].text;
  }
  return out;
}

Rollout Rollout::make(StepSeq steps, std::string final_answer, bool is_correct) {
  Rollout r;
  r.token_len = total_tokens(steps);
  r.steps = std::move(steps);
  r.final_answer = std::move(final_answer);
  r.is_correct = is_correct;
  return r;
}

std::string Rollout::text_key() const {
  std::string key = join_steps(steps);
  key += '\x1e';
  key += final_answer;
  return key;
}

std::string State::key() const {
  std::string key;
  for (const auto& s : prefix) {
    key += s.text;
    key += '\x1f';
  }
  return key;
}

State state_transition(const State& s, std::span<const Step> action) {
  if (action.empty()) throw InvalidAction("state transition requires a nonempty action");
  State next = s;
  next.prefix.insert(next.prefix.end(), action.begin(), action.end());
  return next;
}

McEstimate McEstimate::count(std::span<const Rollout> rollouts) {
  McEstimate mc;
  mc.total = static_cast<std::uint32_t>(rollouts.size());
  for (const auto& r : rollouts)
    if (r.is_correct) ++mc.correct;
  return mc;
}

void EngineConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidConfig("alpha must lie in (0, 1]");
  if (!(beta > 0.0 && beta <= 1.0)) throw InvalidConfig("beta must lie in (0, 1]");
  if (!(len_scale > 0.0) || !std::isfinite(len_scale)) throw InvalidConfig("len_scale must be positive");
  if (!(c_puct >= 0.0) || !std::isfinite(c_puct)) throw InvalidConfig("c_puct must be nonnegative");
  if (k_rollouts == 0) throw InvalidConfig("k_rollouts must be positive");
  if (search_limit == 0) throw InvalidConfig("search_limit must be positive");
  if (step_split_target == 0) throw InvalidConfig("step_split_target must be positive");
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) throw InvalidConfig("temperature must be nonnegative");
  if (max_tokens == 0) throw InvalidConfig("max_tokens must be positive");
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  return mix64(mix64(mix64(base) ^ a) ^ b);
}

std::uint64_t Rng::next_u64() {
  state_ += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::size_t Rng::index(std::size_t n) {
  if (n == 0) return 0;
  // Rejection sampling keeps the result exactly uniform.
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::uint64_t(-1) - (std::uint64_t(-1) % bound);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi <= lo) return lo;
  auto span = static_cast<std::size_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(index(span));
}

}  // namespace omegaprm
