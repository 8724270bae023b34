#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "omegaprm/core.hpp"
#include "omegaprm/prm.hpp"
#include "omegaprm/sim_policy.hpp"

namespace omegaprm {

enum class CompleterKind { sim, remote };

struct RemoteSettings {
  std::string endpoint;
  std::string prompt_template;  // empty: built-in template
  std::uint32_t timeout_ms = 30000;
  std::uint32_t max_retries = 3;
  std::uint32_t retry_backoff_ms = 200;
  std::uint32_t batch_size = 16;
  std::string auth_token_env = "OMEGAPRM_API_TOKEN";
};

struct SimSettings {
  double per_step_error_prob = 0.05;
  double recovery_prob = 0.0;
  std::int64_t max_error_delta = 9;
};

struct FilterSettings {
  std::uint32_t k_filter = 32;
};

struct ExportSettings {
  std::optional<std::uint64_t> downsample;  // keep at most this many examples
};

struct TrainCommandSettings {
  Objective objective = Objective::soft;
  TrainSettings optimizer;
};

struct EvalSettings {
  std::string corpus;  // empty: the main corpus
  std::uint32_t k_max = 16;
  std::uint32_t pool_size = 64;
  std::uint32_t n_resamples = 100;
  Aggregation aggregation = Aggregation::product;
};

struct BenchSettings {
  std::string corpus;  // empty: the main corpus
  std::uint64_t budget = 50000;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t parallelism = 1;
  std::string output = "omegaprm-out";
  std::string corpus;
  CompleterKind completer = CompleterKind::sim;
  EngineConfig engine;
  SimSettings sim;
  RemoteSettings remote;
  FilterSettings filter;
  ExportSettings export_;
  TrainCommandSettings train;
  EvalSettings eval;
  BenchSettings bench;

  // Throws InvalidConfig.
  void validate() const;
  SimPolicySpec sim_spec() const;
};

// Parses a JSON document; every key is optional but unknown keys are
// rejected at every level. Throws InvalidConfig.
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);
// Canonical JSON of the resolved configuration (no secrets).
std::string run_config_json(const RunConfig& cfg);

}  // namespace omegaprm
