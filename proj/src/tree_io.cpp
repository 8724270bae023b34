#include "omegaprm/tree_io.hpp"

#include <fstream>
#include <sstream>

#include "omegaprm/errors.hpp"

namespace omegaprm {

using nlohmann::json;

namespace {

json steps_to_json(std::span<const Step> steps) {
  json arr = json::array();
  for (const auto& s : steps) arr.push_back({{"text", s.text}, {"tokens", s.token_len}});
  return arr;
}

StepSeq steps_from_json(const json& j) {
  StepSeq out;
  for (const auto& s : j) out.push_back(Step{s.at("text").get<std::string>(), s.at("tokens").get<std::size_t>()});
  return out;
}

}  // namespace

json to_json(const Question& q) {
  return {{"id", q.id}, {"statement", q.statement}, {"golden_answer", q.golden_answer}};
}

Question question_from_json(const json& j) {
  Question q{j.at("id").get<std::string>(), j.at("statement").get<std::string>(),
             j.at("golden_answer").get<std::string>()};
  validate(q);
  return q;
}

json to_json(const Rollout& r) {
  json j = {{"steps", steps_to_json(r.steps)},
            {"final_answer", r.final_answer},
            {"is_correct", r.is_correct},
            {"token_len", r.token_len}};
  if (r.trace) {
    j["trace"] = {{"prefix_had_error", r.trace->prefix_had_error},
                  {"error_steps", r.trace->error_steps},
                  {"recovered", r.trace->recovered}};
  }
  return j;
}

Rollout rollout_from_json(const json& j) {
  Rollout r;
  r.steps = steps_from_json(j.at("steps"));
  r.final_answer = j.at("final_answer").get<std::string>();
  r.is_correct = j.at("is_correct").get<bool>();
  r.token_len = j.at("token_len").get<std::size_t>();
  if (r.token_len != total_tokens(r.steps)) throw Error("rollout token_len disagrees with its steps");
  if (auto it = j.find("trace"); it != j.end()) {
    InjectionTrace t;
    t.prefix_had_error = it->at("prefix_had_error").get<bool>();
    t.error_steps = it->at("error_steps").get<std::vector<std::size_t>>();
    t.recovered = it->at("recovered").get<bool>();
    r.trace = std::move(t);
  }
  return r;
}

json to_json(const Tree& tree) {
  json nodes = json::array();
  json edges = json::array();
  for (NodeId id = 0; id < tree.size(); ++id) {
    const auto& n = tree.node(id);
    json rollouts = json::array();
    for (const auto& r : n.stats.rollouts) rollouts.push_back(to_json(r));
    nodes.push_back({{"id", id},
                     {"parent", n.parent ? json(*n.parent) : json(nullptr)},
                     {"prefix", steps_to_json(n.state.prefix)},
                     {"visits", n.stats.visit_count},
                     {"mc", {{"correct", n.stats.mc.correct}, {"total", n.stats.mc.total}}},
                     {"rollouts", std::move(rollouts)}});
    for (const auto& e : n.children) edges.push_back({{"parent", id}, {"child", e.child}, {"action", steps_to_json(e.action)}});
  }
  return {{"format", std::string(kTreeFormat)},
          {"question", to_json(tree.question())},
          {"avg_solution_tokens", tree.avg_solution_tokens()},
          {"split_threshold", tree.split_threshold()},
          {"nodes", std::move(nodes)},
          {"edges", std::move(edges)}};
}

Tree tree_from_json(const json& j) {
  if (j.value("format", std::string()) != kTreeFormat) throw Error("not an omegaprm tree document");
  Question q = question_from_json(j.at("question"));
  std::vector<TreeNode> nodes;
  for (const auto& jn : j.at("nodes")) {
    if (jn.at("id").get<NodeId>() != nodes.size()) throw Error("tree nodes must be listed in id order");
    TreeNode n;
    n.state = State{q.id, steps_from_json(jn.at("prefix"))};
    if (!jn.at("parent").is_null()) n.parent = jn.at("parent").get<NodeId>();
    n.stats.visit_count = jn.at("visits").get<std::uint64_t>();
    n.stats.mc.correct = jn.at("mc").at("correct").get<std::uint32_t>();
    n.stats.mc.total = jn.at("mc").at("total").get<std::uint32_t>();
    for (const auto& jr : jn.at("rollouts")) n.stats.rollouts.push_back(rollout_from_json(jr));
    nodes.push_back(std::move(n));
  }
  for (const auto& je : j.at("edges")) {
    NodeId parent = je.at("parent").get<NodeId>();
    NodeId child = je.at("child").get<NodeId>();
    if (parent >= nodes.size() || child >= nodes.size()) throw Error("tree edge references a missing node");
    nodes[parent].children.push_back(Edge{steps_from_json(je.at("action")), child});
  }
  Tree tree = Tree::from_parts(std::move(q), std::move(nodes), j.at("avg_solution_tokens").get<double>(),
                               j.at("split_threshold").get<double>());
  auto errs = check_tree_invariants(tree);
  if (!errs.empty()) throw Error("inconsistent tree document: " + errs.front());
  return tree;
}

std::string serialize_tree(const Tree& tree) { return to_json(tree).dump(1) + "\n"; }

Tree parse_tree(std::string_view text) {
  try {
    return tree_from_json(json::parse(text));
  } catch (const json::exception& ex) {
    throw Error(std::string("malformed tree document: ") + ex.what());
  }
}

void save_tree(const Tree& tree, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << serialize_tree(tree);
  if (!out) throw Error("short write to " + path.string());
}

Tree load_tree(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_tree(ss.str());
  } catch (const Error& ex) {
    throw Error(path.string() + ": " + ex.what());
  }
}

}  // namespace omegaprm
