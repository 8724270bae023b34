#include "omegaprm/dataset.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "omegaprm/errors.hpp"
#include "omegaprm/parallel.hpp"
#include "omegaprm/tree_io.hpp"

namespace omegaprm {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

template <class LineFn>
void for_each_line(const std::filesystem::path& path, LineFn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    fn(line, line_no);
  }
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

json parse_line(std::string_view line, std::size_t line_no) {
  auto j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError(line_no, "not a JSON object");
  return j;
}

template <class T>
T field(const json& j, const char* key, std::size_t line_no) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(line_no, std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ParseError(line_no, std::string("field '") + key + "' has the wrong type");
  }
}

json overrides_to_json(const SimQuestionOverrides& o) {
  json j = json::object();
  if (o.error_prob) j["error_prob"] = *o.error_prob;
  if (o.recovery_prob) j["recovery_prob"] = *o.recovery_prob;
  if (o.trap_step) {
    j["trap_step"] = o.trap_step;
    j["trap_prob"] = o.trap_prob;
    j["trap_delta"] = o.trap_delta;
  }
  return j;
}

SimQuestionOverrides overrides_from_json(const json& j, std::size_t line_no) {
  static const std::set<std::string> kKeys{"error_prob", "recovery_prob", "trap_step", "trap_prob", "trap_delta"};
  if (!j.is_object()) throw ParseError(line_no, "'sim' must be an object");
  for (const auto& [k, v] : j.items())
    if (!kKeys.contains(k)) throw ParseError(line_no, "unknown sim key '" + k + "'");
  SimQuestionOverrides o;
  if (j.contains("error_prob")) o.error_prob = field<double>(j, "error_prob", line_no);
  if (j.contains("recovery_prob")) o.recovery_prob = field<double>(j, "recovery_prob", line_no);
  if (j.contains("trap_step")) o.trap_step = field<std::uint32_t>(j, "trap_step", line_no);
  if (j.contains("trap_prob")) o.trap_prob = field<double>(j, "trap_prob", line_no);
  if (j.contains("trap_delta")) o.trap_delta = field<std::int64_t>(j, "trap_delta", line_no);
  return o;
}

bool in_unit(double p) { return p >= 0.0 && p <= 1.0; }

}  // namespace

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

std::vector<CorpusItem> read_corpus(const std::filesystem::path& path) {
  std::vector<CorpusItem> out;
  std::set<std::string> ids;
  for_each_line(path, [&](const std::string& line, std::size_t n) {
    json j = parse_line(line, n);
    CorpusItem item;
    item.question.id = field<std::string>(j, "id", n);
    item.question.statement = field<std::string>(j, "statement", n);
    item.question.golden_answer = field<std::string>(j, "golden_answer", n);
    try {
      validate(item.question);
    } catch (const Error& ex) {
      throw ParseError(n, ex.what());
    }
    if (!ids.insert(item.question.id).second) throw ParseError(n, "duplicate question id '" + item.question.id + "'");
    if (auto it = j.find("sim"); it != j.end()) item.sim = overrides_from_json(*it, n);
    out.push_back(std::move(item));
  });
  return out;
}

void write_corpus(const std::filesystem::path& path, const std::vector<CorpusItem>& items) {
  auto out = open_for_write(path);
  for (const auto& item : items) {
    json j = to_json(item.question);
    if (item.sim) j["sim"] = overrides_to_json(*item.sim);
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Filtering
// ---------------------------------------------------------------------------

FilterResult filter_questions(const std::vector<Question>& corpus, Completer& completer, std::uint32_t k_filter,
                              const EngineConfig& cfg, std::size_t parallelism,
                              const std::vector<FilterRecord>& previous) {
  if (k_filter < 2) throw InvalidConfig("k_filter must be at least 2");
  std::map<std::string, FilterRecord> done;
  for (const auto& r : previous) done.emplace(r.question_id, r);

  std::vector<FilterRecord> report(corpus.size());
  parallel_for(corpus.size(), parallelism, [&](std::size_t i) {
    const Question& q = corpus[i];
    if (auto it = done.find(q.id); it != done.end()) {
      report[i] = it->second;
      return;
    }
    FilterRecord rec;
    rec.question_id = q.id;
    rec.total = k_filter;
    try {
      CompleterRequest req{&q, State::root(q.id), k_filter, cfg.temperature, cfg.max_tokens};
      auto rollouts = completer.sample_rollouts(req);
      McEstimate mc = McEstimate::count(rollouts);
      rec.correct_count = mc.correct;
      rec.total = mc.total;
      if (mc.correct == 0) {
        rec.reason = "too_hard";
      } else if (mc.correct == mc.total) {
        rec.reason = "too_easy";
      } else {
        rec.kept = true;
        rec.reason = "kept";
      }
    } catch (const std::exception& ex) {
      rec.correct_count = 0;
      rec.total = 0;
      rec.reason = std::string("unresolved: ") + ex.what();
    }
    report[i] = std::move(rec);
  });

  FilterResult result;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (report[i].kept) result.kept.push_back(corpus[i]);
  result.report = std::move(report);
  return result;
}

void write_filter_report(const std::filesystem::path& path, const std::vector<FilterRecord>& report) {
  auto out = open_for_write(path);
  for (const auto& r : report) {
    ordered_json j = {{"question_id", r.question_id},
              {"kept", r.kept},
              {"correct_count", r.correct_count},
              {"total", r.total},
              {"reason", r.reason}};
    out << j.dump() << '\n';
  }
}

std::vector<FilterRecord> read_filter_report(const std::filesystem::path& path) {
  std::vector<FilterRecord> out;
  for_each_line(path, [&](const std::string& line, std::size_t n) {
    json j = parse_line(line, n);
    FilterRecord r;
    r.question_id = field<std::string>(j, "question_id", n);
    r.kept = field<bool>(j, "kept", n);
    r.correct_count = field<std::uint32_t>(j, "correct_count", n);
    r.total = j.contains("total") ? field<std::uint32_t>(j, "total", n) : 0;
    r.reason = field<std::string>(j, "reason", n);
    out.push_back(std::move(r));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Examples and pairs
// ---------------------------------------------------------------------------

std::string state_text(const TrainingExample& ex) {
  return ex.prefix.empty() ? ex.question : ex.question + "\n" + ex.prefix;
}

std::string state_text(const PreferencePair& p) { return p.prefix.empty() ? p.question : p.question + "\n" + p.prefix; }

bool is_single_step(const Tree& tree, const Edge& edge) {
  return edge.action.size() == 1 || static_cast<double>(total_tokens(edge.action)) < tree.split_threshold();
}

std::vector<TrainingExample> tree_to_examples(const Tree& tree) {
  std::vector<TrainingExample> out;
  for (NodeId id = 0; id < tree.size(); ++id) {
    const auto& n = tree.node(id);
    for (const auto& e : n.children) {
      if (!is_single_step(tree, e)) continue;
      const auto& child = tree.node(e.child);
      TrainingExample ex;
      ex.question_id = tree.question().id;
      ex.question = tree.question().statement;
      ex.prefix = join_steps(n.state.prefix);
      ex.step = join_steps(e.action);
      ex.mc = child.stats.mc.value();
      ex.hard_label = child.stats.mc.is_positive() ? 1 : 0;
      ex.node_id = e.child;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

std::pair<double, double> normalize_pair(double p, double q) {
  if (!in_unit(p) || !in_unit(q)) throw InvalidProbability("MC values must lie in [0, 1]");
  double a = 0.5 * (1.0 + p - q);
  return {a, 1.0 - a};
}

std::vector<PreferencePair> tree_to_pairs(const Tree& tree) {
  std::vector<PreferencePair> out;
  for (NodeId id = 0; id < tree.size(); ++id) {
    const auto& n = tree.node(id);
    std::vector<const Edge*> single;
    for (const auto& e : n.children)
      if (is_single_step(tree, e)) single.push_back(&e);
    for (std::size_t i = 0; i < single.size(); ++i) {
      for (std::size_t j = i + 1; j < single.size(); ++j) {
        PreferencePair p;
        p.question_id = tree.question().id;
        p.question = tree.question().statement;
        p.prefix = join_steps(n.state.prefix);
        p.step_a = join_steps(single[i]->action);
        p.step_b = join_steps(single[j]->action);
        p.pref_a = normalize_pair(tree.node(single[i]->child).stats.mc.value(),
                                  tree.node(single[j]->child).stats.mc.value())
                       .first;
        out.push_back(std::move(p));
      }
    }
  }
  return out;
}

std::vector<std::size_t> downsample_indices(std::size_t n, std::size_t target, std::uint64_t seed) {
  if (target > n)
    throw TargetTooLarge("cannot draw " + std::to_string(target) + " of " + std::to_string(n) + " items");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(derive_seed(seed, 0xd05a));
  // Partial Fisher-Yates: the first `target` slots are the sample.
  for (std::size_t i = 0; i < target; ++i) std::swap(idx[i], idx[i + rng.index(n - i)]);
  idx.resize(target);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::string example_to_line(const TrainingExample& ex) {
  ordered_json j = {{"question_id", ex.question_id}, {"question", ex.question}, {"prefix", ex.prefix},
            {"step", ex.step},               {"mc", ex.mc},             {"hard_label", ex.hard_label}};
  if (ex.node_id) j["node_id"] = *ex.node_id;
  return j.dump();
}

TrainingExample example_from_line(std::string_view line, std::size_t n) {
  json j = parse_line(line, n);
  TrainingExample ex;
  ex.question_id = field<std::string>(j, "question_id", n);
  ex.question = field<std::string>(j, "question", n);
  ex.prefix = field<std::string>(j, "prefix", n);
  ex.step = field<std::string>(j, "step", n);
  ex.mc = field<double>(j, "mc", n);
  ex.hard_label = field<int>(j, "hard_label", n);
  if (j.contains("node_id")) ex.node_id = field<std::uint64_t>(j, "node_id", n);
  if (!in_unit(ex.mc)) throw ParseError(n, "mc outside [0, 1]");
  if (ex.hard_label != (ex.mc > 0.0 ? 1 : 0)) throw ParseError(n, "hard_label disagrees with mc");
  return ex;
}

std::string pair_to_line(const PreferencePair& p) {
  ordered_json j = {{"question_id", p.question_id}, {"question", p.question}, {"prefix", p.prefix},
            {"step_a", p.step_a},           {"step_b", p.step_b},     {"pref_a", p.pref_a}};
  return j.dump();
}

PreferencePair pair_from_line(std::string_view line, std::size_t n) {
  json j = parse_line(line, n);
  PreferencePair p;
  p.question_id = field<std::string>(j, "question_id", n);
  p.question = field<std::string>(j, "question", n);
  p.prefix = field<std::string>(j, "prefix", n);
  p.step_a = field<std::string>(j, "step_a", n);
  p.step_b = field<std::string>(j, "step_b", n);
  p.pref_a = field<double>(j, "pref_a", n);
  if (!in_unit(p.pref_a)) throw ParseError(n, "pref_a outside [0, 1]");
  return p;
}

void export_jsonl(const std::filesystem::path& path, const std::vector<TrainingExample>& examples) {
  auto out = open_for_write(path);
  for (const auto& ex : examples) out << example_to_line(ex) << '\n';
}

void export_jsonl(const std::filesystem::path& path, const std::vector<PreferencePair>& pairs) {
  auto out = open_for_write(path);
  for (const auto& p : pairs) out << pair_to_line(p) << '\n';
}

std::vector<TrainingExample> import_examples(const std::filesystem::path& path) {
  std::vector<TrainingExample> out;
  for_each_line(path, [&](const std::string& line, std::size_t n) { out.push_back(example_from_line(line, n)); });
  return out;
}

std::vector<PreferencePair> import_pairs(const std::filesystem::path& path) {
  std::vector<PreferencePair> out;
  for_each_line(path, [&](const std::string& line, std::size_t n) { out.push_back(pair_from_line(line, n)); });
  return out;
}

}  // namespace omegaprm
