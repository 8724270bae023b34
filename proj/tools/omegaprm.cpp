#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "omegaprm/commands.hpp"
#include "omegaprm/errors.hpp"
#include "omegaprm/run_config.hpp"

using namespace omegaprm;

int main(int argc, char** argv) {
  CLI::App app{"OmegaPRM process-supervision pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> parallelism;
  std::optional<std::string> output;
  std::optional<std::string> completer;
  std::optional<std::string> corpus;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "global seed");
    sub->add_option("--parallelism", parallelism, "concurrent questions");
    sub->add_option("--output", output, "output directory");
    sub->add_option("--completer", completer, "rollout backend")->check(CLI::IsMember({"sim", "remote"}));
    sub->add_option("--corpus", corpus, "question corpus (JSON Lines)");
  };

  const char* pipeline[][2] = {{"filter", "drop too-easy and too-hard questions"},
                               {"generate", "build one search tree per kept question"},
                               {"export", "turn trees into step-label and pair datasets"},
                               {"train", "fit the toy PRM"},
                               {"eval", "majority vs PRM-weighted voting accuracy"},
                               {"bench", "examples per policy call, brute force vs tree search"}};
  for (auto& [name, help] : pipeline) add_common(app.add_subcommand(name, help));

  SimCorpusOptions synth;
  std::string synth_out;
  std::optional<double> synth_recovery;
  auto* s = app.add_subcommand("synth", "write a simulated question corpus");
  s->add_option("--out", synth_out, "corpus file to write")->required();
  s->add_option("--questions", synth.n_questions, "number of questions");
  s->add_option("--steps", synth.n_steps, "steps per solution");
  s->add_option("--seed", synth.seed, "seed");
  s->add_option("--max-operand", synth.max_operand, "largest operand");
  s->add_option("--error-prob-lo", synth.error_prob_lo, "per-step error probability, low end");
  s->add_option("--error-prob-hi", synth.error_prob_hi, "per-step error probability, high end");
  s->add_option("--trap-prob-lo", synth.trap_prob_lo, "trap probability, low end");
  s->add_option("--trap-prob-hi", synth.trap_prob_hi, "trap probability, high end");
  s->add_option("--recovery-prob", synth_recovery, "probability an erroneous rollout still answers correctly");
  s->add_option("--id-prefix", synth.id_prefix, "question id prefix");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code::bad_input;
  }

  if (s->parsed()) {
    synth.recovery_prob = synth_recovery;
    try {
      return cmd_synth(synth, synth_out, std::cout);
    } catch (const std::exception& ex) {
      std::cerr << "error: " << ex.what() << "\n";
      return exit_code::bad_input;
    }
  }

  CLI::App* sub = app.get_subcommands().front();
  RunConfig cfg;
  try {
    if (!config_path.empty()) cfg = load_run_config(config_path);
  } catch (const Error& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return exit_code::bad_input;
  }
  if (seed) cfg.seed = *seed;
  if (parallelism) cfg.parallelism = *parallelism;
  if (output) cfg.output = *output;
  if (corpus) cfg.corpus = *corpus;
  if (completer) cfg.completer = *completer == "remote" ? CompleterKind::remote : CompleterKind::sim;
  return run_command(sub->get_name(), cfg, std::cout, std::cerr);
}
