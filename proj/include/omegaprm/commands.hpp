#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "omegaprm/dataset.hpp"
#include "omegaprm/errors.hpp"
#include "omegaprm/eval.hpp"
#include "omegaprm/run_config.hpp"
#include "omegaprm/sim_policy.hpp"

namespace omegaprm {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;
inline constexpr int bad_input = 2;         // unreadable corpus or invalid config
inline constexpr int missing_artifact = 3;  // an upstream file is absent
inline constexpr int all_failed = 4;        // every tree generation failed
}  // namespace exit_code

// Thrown by commands; carries the process exit code.
class CommandError : public Error {
 public:
  CommandError(int code, const std::string& what) : Error(what), code_(code) {}
  int code() const noexcept { return code_; }

 private:
  int code_;
};

// File names inside the output directory.
namespace artifact {
inline constexpr const char* filter_report = "filter_report.jsonl";
inline constexpr const char* kept = "kept.jsonl";
inline constexpr const char* trees_dir = "trees";
inline constexpr const char* generate_summary = "generate_summary.json";
inline constexpr const char* dataset = "dataset.jsonl";
inline constexpr const char* pairs = "pairs.jsonl";
inline constexpr const char* export_summary = "export_summary.json";
inline constexpr const char* model = "model.json";
inline constexpr const char* train_report = "train_report.json";
inline constexpr const char* eval_report = "eval_report.json";
inline constexpr const char* eval_csv = "eval_curve.csv";
inline constexpr const char* bench_report = "bench_report.json";
}  // namespace artifact

std::filesystem::path tree_path(const std::filesystem::path& out_dir, const std::string& question_id);

// Completer for the configured backend. Simulator overrides come from the
// corpus items.
CompleterFactory make_completer_factory(const RunConfig& cfg, const std::vector<CorpusItem>& items);

// Each returns an exit code and writes progress lines to `log`.
int cmd_filter(const RunConfig& cfg, std::ostream& log);
int cmd_generate(const RunConfig& cfg, std::ostream& log);
int cmd_export(const RunConfig& cfg, std::ostream& log);
int cmd_train(const RunConfig& cfg, std::ostream& log);
int cmd_eval(const RunConfig& cfg, std::ostream& log);
int cmd_bench(const RunConfig& cfg, std::ostream& log);

// Writes a simulated corpus (with per-question overrides) to `path`.
int cmd_synth(const SimCorpusOptions& opts, const std::filesystem::path& path, std::ostream& log);

// Runs a command by name, mapping exceptions to exit codes and printing the
// message to `err`.
int run_command(const std::string& name, const RunConfig& cfg, std::ostream& log, std::ostream& err);

}  // namespace omegaprm
