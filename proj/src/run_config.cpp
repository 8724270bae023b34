#include "omegaprm/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "omegaprm/errors.hpp"

namespace omegaprm {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

// Reads known keys from one object and reports anything left over.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw InvalidConfig(where() + "must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw InvalidConfig(where() + "'" + key + "' has the wrong type");
    }
  }

  template <class T>
  void get_optional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return;
    T v{};
    get(key, v);
    out = v;
  }

  std::optional<Section> child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return std::nullopt;
    return Section(*it, path_.empty() ? key : path_ + "." + key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.contains(k)) throw InvalidConfig("unknown config key '" + (path_.empty() ? k : path_ + "." + k) + "'");
  }

 private:
  std::string where() const { return path_.empty() ? "config: " : "config " + path_ + ": "; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

void RunConfig::validate() const {
  engine.validate();
  if (parallelism == 0) throw InvalidConfig("parallelism must be at least 1");
  if (output.empty()) throw InvalidConfig("output must be set");
  sim_spec().validate();
  if (completer == CompleterKind::remote && remote.endpoint.empty())
    throw InvalidConfig("remote.endpoint is required for the remote completer");
  if (remote.batch_size == 0) throw InvalidConfig("remote.batch_size must be at least 1");
  if (filter.k_filter < 2) throw InvalidConfig("filter.k_filter must be at least 2");
  train.optimizer.validate();
  if (eval.k_max == 0) throw InvalidConfig("eval.k_max must be at least 1");
  if (eval.pool_size < eval.k_max) throw InvalidConfig("eval.pool_size must be at least eval.k_max");
  if (eval.n_resamples == 0) throw InvalidConfig("eval.n_resamples must be at least 1");
}

SimPolicySpec RunConfig::sim_spec() const {
  SimPolicySpec s;
  s.per_step_error_prob = sim.per_step_error_prob;
  s.recovery_prob = sim.recovery_prob;
  s.max_error_delta = sim.max_error_delta;
  s.seed = seed;
  return s;
}

RunConfig parse_run_config(std::string_view text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw InvalidConfig("config is not valid JSON");
  RunConfig c;
  Section root(j, "");
  root.get("seed", c.seed);
  root.get("parallelism", c.parallelism);
  root.get("output", c.output);
  root.get("corpus", c.corpus);
  std::string completer = "sim";
  root.get("completer", completer);
  if (completer == "sim")
    c.completer = CompleterKind::sim;
  else if (completer == "remote")
    c.completer = CompleterKind::remote;
  else
    throw InvalidConfig("completer must be 'sim' or 'remote'");

  if (auto s = root.child("engine")) {
    auto& e = c.engine;
    s->get("alpha", e.alpha);
    s->get("beta", e.beta);
    s->get("len_scale", e.len_scale);
    s->get("c_puct", e.c_puct);
    s->get("k_rollouts", e.k_rollouts);
    s->get("search_limit", e.search_limit);
    s->get("step_split_target", e.step_split_target);
    s->get("temperature", e.temperature);
    s->get("max_tokens", e.max_tokens);
    s->finish();
  }
  if (auto s = root.child("sim")) {
    s->get("per_step_error_prob", c.sim.per_step_error_prob);
    s->get("recovery_prob", c.sim.recovery_prob);
    s->get("max_error_delta", c.sim.max_error_delta);
    s->finish();
  }
  if (auto s = root.child("remote")) {
    auto& r = c.remote;
    s->get("endpoint", r.endpoint);
    s->get("prompt_template", r.prompt_template);
    s->get("timeout_ms", r.timeout_ms);
    s->get("max_retries", r.max_retries);
    s->get("retry_backoff_ms", r.retry_backoff_ms);
    s->get("batch_size", r.batch_size);
    s->get("auth_token_env", r.auth_token_env);
    s->finish();
  }
  if (auto s = root.child("filter")) {
    s->get("k_filter", c.filter.k_filter);
    s->finish();
  }
  if (auto s = root.child("export")) {
    s->get_optional("downsample", c.export_.downsample);
    s->finish();
  }
  if (auto s = root.child("train")) {
    std::string obj = to_string(c.train.objective);
    s->get("objective", obj);
    c.train.objective = objective_from_string(obj);
    auto& o = c.train.optimizer;
    s->get("learning_rate", o.learning_rate);
    s->get("epochs", o.epochs);
    s->get("l2", o.l2);
    s->get("init_scale", o.init_scale);
    s->finish();
  }
  if (auto s = root.child("eval")) {
    s->get("corpus", c.eval.corpus);
    s->get("k_max", c.eval.k_max);
    s->get("pool_size", c.eval.pool_size);
    s->get("n_resamples", c.eval.n_resamples);
    std::string agg = to_string(c.eval.aggregation);
    s->get("aggregation", agg);
    c.eval.aggregation = aggregation_from_string(agg);
    s->finish();
  }
  if (auto s = root.child("bench")) {
    s->get("corpus", c.bench.corpus);
    s->get("budget", c.bench.budget);
    s->finish();
  }
  root.finish();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidConfig("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string run_config_json(const RunConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["parallelism"] = c.parallelism;
  j["output"] = c.output;
  j["corpus"] = c.corpus;
  j["completer"] = c.completer == CompleterKind::sim ? "sim" : "remote";
  const auto& e = c.engine;
  j["engine"] = {{"alpha", e.alpha},
                 {"beta", e.beta},
                 {"len_scale", e.len_scale},
                 {"c_puct", e.c_puct},
                 {"k_rollouts", e.k_rollouts},
                 {"search_limit", e.search_limit},
                 {"step_split_target", e.step_split_target},
                 {"temperature", e.temperature},
                 {"max_tokens", e.max_tokens}};
  j["sim"] = {{"per_step_error_prob", c.sim.per_step_error_prob},
              {"recovery_prob", c.sim.recovery_prob},
              {"max_error_delta", c.sim.max_error_delta}};
  j["remote"] = {{"endpoint", c.remote.endpoint},
                 {"prompt_template", c.remote.prompt_template},
                 {"timeout_ms", c.remote.timeout_ms},
                 {"max_retries", c.remote.max_retries},
                 {"retry_backoff_ms", c.remote.retry_backoff_ms},
                 {"batch_size", c.remote.batch_size},
                 {"auth_token_env", c.remote.auth_token_env}};
  j["filter"] = {{"k_filter", c.filter.k_filter}};
  j["export"] = {{"downsample", c.export_.downsample ? ordered_json(*c.export_.downsample) : ordered_json(nullptr)}};
  const auto& o = c.train.optimizer;
  j["train"] = {{"objective", to_string(c.train.objective)},
                {"learning_rate", o.learning_rate},
                {"epochs", o.epochs},
                {"l2", o.l2},
                {"init_scale", o.init_scale}};
  j["eval"] = {{"corpus", c.eval.corpus},
               {"k_max", c.eval.k_max},
               {"pool_size", c.eval.pool_size},
               {"n_resamples", c.eval.n_resamples},
               {"aggregation", to_string(c.eval.aggregation)}};
  j["bench"] = {{"corpus", c.bench.corpus}, {"budget", c.bench.budget}};
  return j.dump(1);
}

}  // namespace omegaprm
