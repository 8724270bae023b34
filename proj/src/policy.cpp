#include "omegaprm/policy.hpp"

#include <cctype>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "omegaprm/answer.hpp"
#include "omegaprm/errors.hpp"

namespace omegaprm {

namespace {

constexpr std::string_view kQuestionSlot = "{question}";
constexpr std::string_view kPrefixSlot = "{prefix}";

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string render_prompt(const Question& question, const State& state, std::string_view tmpl) {
  if (tmpl.find(kQuestionSlot) == std::string_view::npos)
    throw TemplateError("prompt template lacks a {question} placeholder");
  if (tmpl.find(kPrefixSlot) == std::string_view::npos)
    throw TemplateError("prompt template lacks a {prefix} placeholder");
  std::string out(tmpl);
  // Prefix first so that a '{question}' inside step text is left alone.
  std::string prefix = join_steps(state.prefix);
  if (!prefix.empty()) prefix += '\n';
  replace_all(out, kQuestionSlot, "\x01Q\x01");
  replace_all(out, kPrefixSlot, prefix);
  replace_all(out, "\x01Q\x01", question.statement);
  return out;
}

std::string render_state_text(std::string_view statement, std::span<const Step> prefix) {
  std::string out(statement);
  for (const auto& s : prefix) {
    out += '\n';
    out += s.text;
  }
  return out;
}

Rollout rollout_from_completion(std::string_view completion, const Question& question,
                                const Tokenizer& tokenizer) {
  StepSeq steps;
  std::size_t start = 0;
  while (start <= completion.size()) {
    auto end = completion.find('\n', start);
    if (end == std::string_view::npos) end = completion.size();
    auto line = trim(completion.substr(start, end - start));
    if (!line.empty()) steps.push_back(Step::make(std::string(line), tokenizer));
    start = end + 1;
  }
  std::string answer = extract_final_answer(completion);
  bool correct = answers_equivalent(answer, question.golden_answer);
  return Rollout::make(std::move(steps), std::move(answer), correct);
}

RemoteCompleter::RemoteCompleter(RemoteCompleterConfig cfg, Tokenizer tokenizer)
    : cfg_(std::move(cfg)), tokenizer_(std::move(tokenizer)) {
  auto scheme = cfg_.endpoint.find("://");
  if (scheme == std::string::npos) throw InvalidConfig("remote endpoint must look like http://host:port/path");
  auto path = cfg_.endpoint.find('/', scheme + 3);
  host_ = cfg_.endpoint.substr(0, path);
  path_ = path == std::string::npos ? "/" : cfg_.endpoint.substr(path);
  if (cfg_.batch_size == 0) throw InvalidConfig("remote batch_size must be positive");
  // Validate the template once up front.
  render_prompt(Question{"probe", "", "x"}, State::root("probe"), cfg_.prompt_template);
}

std::vector<std::string> RemoteCompleter::post_batch(const std::string& prompt, std::uint32_t n,
                                                     double temperature, std::uint32_t max_tokens) {
  nlohmann::json body = {{"prompt", prompt}, {"n", n}, {"temperature", temperature}, {"max_tokens", max_tokens}};
  const std::string payload = body.dump();
  std::string last_error = "no attempt made";
  for (std::uint32_t attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(cfg_.retry_backoff * attempt);
    httplib::Client client(host_);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!cfg_.auth_token.empty()) headers.emplace("Authorization", "Bearer " + cfg_.auth_token);
    ++http_requests_;
    auto res = client.Post(path_, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw CompleterUnavailable("completer rejected request: HTTP " + std::to_string(res->status));
    std::vector<std::string> out;
    auto parsed = nlohmann::json::parse(res->body, nullptr, false);
    if (parsed.is_object() && parsed.contains("completions") && parsed["completions"].is_array()) {
      for (const auto& c : parsed["completions"]) out.push_back(c.is_string() ? c.get<std::string>() : std::string());
    }
    // Missing or non-string completions become empty (incorrect) rollouts.
    out.resize(n);
    return out;
  }
  throw CompleterUnavailable("completer unreachable after " + std::to_string(cfg_.max_retries + 1) +
                             " attempts: " + last_error);
}

std::vector<Rollout> RemoteCompleter::sample_rollouts(const CompleterRequest& req) {
  if (req.question == nullptr) throw Error("completer request has no question");
  const std::string prompt = render_prompt(*req.question, req.state, cfg_.prompt_template);
  std::vector<Rollout> out;
  out.reserve(req.n_samples);
  std::uint32_t remaining = req.n_samples;
  while (remaining > 0) {
    std::uint32_t n = std::min(remaining, cfg_.batch_size);
    for (const auto& text : post_batch(prompt, n, req.temperature, req.max_tokens))
      out.push_back(rollout_from_completion(text, *req.question, tokenizer_));
    remaining -= n;
  }
  return out;
}

}  // namespace omegaprm
