#include "omegaprm/prm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

#include "json.hpp"
#include "omegaprm/errors.hpp"

namespace omegaprm {

using nlohmann::json;

double clamp_score(double y) noexcept { return std::clamp(y, kScoreEpsilon, 1.0 - kScoreEpsilon); }

double pointwise_loss(double label, double y) {
  y = clamp_score(y);
  return -(label * std::log(y) + (1.0 - label) * std::log1p(-y));
}

double pointwise_loss_grad(double label, double y) {
  y = clamp_score(y);
  return -label / y + (1.0 - label) / (1.0 - y);
}

double pairwise_loss(double pref_a, double ya, double yb) {
  ya = clamp_score(ya);
  yb = clamp_score(yb);
  double pref_b = 1.0 - pref_a;
  double s = ya + yb;
  return -(pref_a * std::log(ya / s) + pref_b * std::log(yb / s));
}

double pairwise_loss(const PreferencePair& pair, double ya, double yb) { return pairwise_loss(pair.pref_a, ya, yb); }

std::pair<double, double> pairwise_loss_grad(double pref_a, double ya, double yb) {
  ya = clamp_score(ya);
  yb = clamp_score(yb);
  double pref_b = 1.0 - pref_a;
  double inv = 1.0 / (ya + yb);
  // pref_a + pref_b == 1 folds the log-normalizer terms into one.
  return {-pref_a / ya + inv, -pref_b / yb + inv};
}

// ---------------------------------------------------------------------------
// Featurizer
// ---------------------------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
  auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

const std::regex& equation_re() {
  static const std::regex re(R"(^(-?\d+)\s*([-+*/x])\s*(-?\d+)\s*=\s*(-?\d+)\.?$)");
  return re;
}

const std::regex& int_re() {
  static const std::regex re(R"(-?\d+)");
  return re;
}

std::optional<long long> to_ll(const std::string& s) {
  try {
    return std::stoll(s);
  } catch (...) {
    return std::nullopt;
  }
}

std::optional<long long> first_int(const std::string& s) {
  std::smatch m;
  if (!std::regex_search(s, m, int_re())) return std::nullopt;
  return to_ll(m.str());
}

// Last "= c" in the state, else its first integer.
std::optional<long long> state_anchor(const std::string& state) {
  static const std::regex eq(R"(=\s*(-?\d+))");
  std::optional<long long> last;
  for (auto it = std::sregex_iterator(state.begin(), state.end(), eq); it != std::sregex_iterator(); ++it)
    last = to_ll((*it)[1].str());
  if (last) return last;
  return first_int(state);
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

double dot(std::span<const double> w, std::span<const double> x) {
  if (w.size() != x.size()) throw Error("feature dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * x[i];
  return s;
}

std::vector<double> init_weights(std::size_t dim, const TrainSettings& s, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x7072'6d00));
  std::vector<double> w(dim);
  for (auto& x : w) x = s.init_scale * (2.0 * rng.uniform() - 1.0);
  return w;
}

struct Adam {
  std::vector<double> m, v;
  std::uint64_t t = 0;
  explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
  void step(std::vector<double>& w, const std::vector<double>& g, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t;
    double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

double l2_term(const std::vector<double>& w, double l2) {
  double s = 0.0;
  for (double x : w) s += x * x;
  return 0.5 * l2 * s;
}

// dy/dz for the clamped sigmoid; zero where the clamp is active.
double sigmoid_slope(double z) {
  double y = sigmoid(z);
  if (y <= kScoreEpsilon || y >= 1.0 - kScoreEpsilon) return 0.0;
  return y * (1.0 - y);
}

template <class LossGrad>
TrainResult fit(std::size_t dim, std::size_t n, const TrainSettings& settings, std::uint64_t seed, Objective obj,
                LossGrad&& loss_grad) {
  settings.validate();
  TrainResult r;
  r.model.weights = init_weights(dim, settings, seed);
  r.model.settings = settings;
  r.model.seed = seed;
  r.model.objective = obj;
  auto& w = r.model.weights;
  Adam adam(dim);
  std::vector<double> g(dim);
  auto eval = [&](bool want_grad) {
    std::fill(g.begin(), g.end(), 0.0);
    double loss = loss_grad(w, want_grad ? &g : nullptr) / static_cast<double>(n);
    for (auto& x : g) x /= static_cast<double>(n);
    for (std::size_t i = 0; i < dim; ++i) g[i] += settings.l2 * w[i];
    return loss + l2_term(w, settings.l2);
  };
  r.loss_curve.push_back(eval(true));
  for (std::uint32_t e = 0; e < settings.epochs; ++e) {
    adam.step(w, g, settings.learning_rate);
    r.loss_curve.push_back(eval(true));
  }
  return r;
}

}  // namespace

std::vector<double> featurize(std::string_view state_text, std::string_view step_text) {
  std::string state(trim(state_text));
  std::string step(trim(step_text));
  std::vector<double> f(kFeatureDim, 0.0);
  f[0] = 1.0;

  std::smatch m;
  if (std::regex_match(step, m, equation_re())) {
    f[1] = 1.0;
    auto a = to_ll(m[1].str()), b = to_ll(m[3].str()), c = to_ll(m[4].str());
    char op = m[2].str()[0];
    if (a && b && c) {
      std::optional<long long> v;
      switch (op) {
        case '+': v = *a + *b; break;
        case '-': v = *a - *b; break;
        case '*':
        case 'x': v = *a * *b; break;
        case '/':
          if (*b != 0 && *a % *b == 0) v = *a / *b;
          break;
      }
      if (v && *v == *c) f[2] = 1.0;
    }
  }
  auto anchor = state_anchor(state);
  auto lead = first_int(step);
  if (anchor && lead && *anchor == *lead) f[3] = 1.0;

  auto st = split_ws(step);
  f[4] = static_cast<double>(st.size()) / 10.0;
  if (!st.empty()) {
    auto sv = split_ws(state);
    std::size_t hit = 0;
    for (const auto& t : st)
      if (std::find(sv.begin(), sv.end(), t) != sv.end()) ++hit;
    f[5] = static_cast<double>(hit) / static_cast<double>(st.size());
  }
  if (st.size() >= 2) {
    double inc = 1.0 / static_cast<double>(st.size() - 1);
    for (std::size_t i = 0; i + 1 < st.size(); ++i) {
      std::uint64_t h = fnv1a64(st[i] + '\x1f' + st[i + 1]);
      f[6 + (h % kHashBuckets)] += inc;
    }
  }
  return f;
}

std::string to_string(Objective o) {
  switch (o) {
    case Objective::soft: return "soft";
    case Objective::hard: return "hard";
    case Objective::pairwise: return "pairwise";
  }
  return "soft";
}

Objective objective_from_string(std::string_view s) {
  if (s == "soft") return Objective::soft;
  if (s == "hard") return Objective::hard;
  if (s == "pairwise") return Objective::pairwise;
  throw InvalidConfig("unknown objective '" + std::string(s) + "'");
}

void TrainSettings::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InvalidConfig("learning_rate must be positive");
  if (!(l2 >= 0.0) || !std::isfinite(l2)) throw InvalidConfig("l2 must be nonnegative");
  if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) throw InvalidConfig("init_scale must be nonnegative");
}

double ToyPrmModel::predict(std::span<const double> features) const {
  return clamp_score(sigmoid(dot(weights, features)));
}

TrainResult train_logistic(std::span<const LabeledVector> data, const TrainSettings& settings, std::uint64_t seed) {
  if (data.empty()) throw EmptyDataset("no labelled examples");
  const std::size_t dim = data.front().features.size();
  for (const auto& d : data) {
    if (d.features.size() != dim) throw Error("feature dimension mismatch");
    if (!(d.label >= 0.0 && d.label <= 1.0)) throw InvalidProbability("label outside [0, 1]");
  }
  return fit(dim, data.size(), settings, seed, Objective::soft,
             [&](const std::vector<double>& w, std::vector<double>* g) {
               double loss = 0.0;
               for (const auto& d : data) {
                 double z = dot(w, d.features);
                 double y = sigmoid(z);
                 loss += pointwise_loss(d.label, y);
                 if (g) {
                   double dz = pointwise_loss_grad(d.label, y) * sigmoid_slope(z);
                   for (std::size_t i = 0; i < dim; ++i) (*g)[i] += dz * d.features[i];
                 }
               }
               return loss;
             });
}

TrainResult train_logistic_pairs(std::span<const PairVector> data, const TrainSettings& settings,
                                 std::uint64_t seed) {
  if (data.empty()) throw EmptyDataset("no preference pairs");
  const std::size_t dim = data.front().a.size();
  for (const auto& d : data) {
    if (d.a.size() != dim || d.b.size() != dim) throw Error("feature dimension mismatch");
    if (!(d.pref_a >= 0.0 && d.pref_a <= 1.0)) throw InvalidProbability("preference outside [0, 1]");
  }
  return fit(dim, data.size(), settings, seed, Objective::pairwise,
             [&](const std::vector<double>& w, std::vector<double>* g) {
               double loss = 0.0;
               for (const auto& d : data) {
                 double za = dot(w, d.a), zb = dot(w, d.b);
                 double ya = sigmoid(za), yb = sigmoid(zb);
                 loss += pairwise_loss(d.pref_a, ya, yb);
                 if (g) {
                   auto [ga, gb] = pairwise_loss_grad(d.pref_a, ya, yb);
                   double dza = ga * sigmoid_slope(za), dzb = gb * sigmoid_slope(zb);
                   for (std::size_t i = 0; i < dim; ++i) (*g)[i] += dza * d.a[i] + dzb * d.b[i];
                 }
               }
               return loss;
             });
}

TrainResult train_toy_prm(const std::vector<TrainingExample>& examples, const std::vector<PreferencePair>& pairs,
                          Objective objective, const TrainSettings& settings, std::uint64_t seed) {
  TrainResult r;
  if (objective == Objective::pairwise) {
    if (pairs.empty()) throw EmptyDataset("pairwise objective needs at least one preference pair");
    std::vector<PairVector> data;
    data.reserve(pairs.size());
    for (const auto& p : pairs) {
      std::string s = state_text(p);
      data.push_back({featurize(s, p.step_a), featurize(s, p.step_b), p.pref_a});
    }
    r = train_logistic_pairs(data, settings, seed);
  } else {
    if (examples.empty()) throw EmptyDataset("no training examples");
    std::vector<LabeledVector> data;
    data.reserve(examples.size());
    for (const auto& ex : examples)
      data.push_back({featurize(state_text(ex), ex.step),
                      objective == Objective::soft ? ex.mc : static_cast<double>(ex.hard_label)});
    r = train_logistic(data, settings, seed);
  }
  r.model.objective = objective;
  return r;
}

double score_step(const ToyPrmModel& model, std::string_view state_text, std::string_view step_text) {
  return model.predict(featurize(state_text, step_text));
}

std::string to_string(Aggregation a) { return a == Aggregation::min ? "min" : "product"; }

Aggregation aggregation_from_string(std::string_view s) {
  if (s == "product") return Aggregation::product;
  if (s == "min") return Aggregation::min;
  throw InvalidConfig("unknown aggregation '" + std::string(s) + "'");
}

double aggregate_solution_score(std::span<const double> step_scores, Aggregation agg) {
  if (step_scores.empty()) throw EmptySolution("cannot aggregate an empty solution");
  if (agg == Aggregation::min) return *std::min_element(step_scores.begin(), step_scores.end());
  double p = 1.0;
  for (double s : step_scores) p *= s;
  return p;
}

std::vector<double> score_solution_steps(const ToyPrmModel& model, std::string_view statement,
                                         std::span<const Step> steps) {
  std::vector<double> out;
  out.reserve(steps.size());
  std::string state(statement);
  for (const auto& s : steps) {
    out.push_back(score_step(model, state, s.text));
    state += '\n';
    state += s.text;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {
constexpr const char* kModelFormat = "omegaprm-toy-prm/1";
}

std::string serialize_model(const ToyPrmModel& model) {
  json j = {{"format", kModelFormat},
            {"feature_version", model.feature_version},
            {"feature_dim", model.weights.size()},
            {"objective", to_string(model.objective)},
            {"seed", model.seed},
            {"settings",
             {{"learning_rate", model.settings.learning_rate},
              {"epochs", model.settings.epochs},
              {"l2", model.settings.l2},
              {"init_scale", model.settings.init_scale}}},
            {"weights", model.weights}};
  return j.dump(1) + "\n";
}

ToyPrmModel parse_model(std::string_view text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error("model checkpoint is not a JSON object");
  try {
    if (j.at("format").get<std::string>() != kModelFormat) throw Error("unsupported model checkpoint format");
    ToyPrmModel m;
    m.feature_version = j.at("feature_version").get<std::string>();
    if (m.feature_version != kFeatureVersion)
      throw Error("checkpoint feature map '" + m.feature_version + "' is not supported");
    m.objective = objective_from_string(j.at("objective").get<std::string>());
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto& s = j.at("settings");
    m.settings.learning_rate = s.at("learning_rate").get<double>();
    m.settings.epochs = s.at("epochs").get<std::uint32_t>();
    m.settings.l2 = s.at("l2").get<double>();
    m.settings.init_scale = s.at("init_scale").get<double>();
    m.weights = j.at("weights").get<std::vector<double>>();
    if (m.weights.size() != j.at("feature_dim").get<std::size_t>()) throw Error("weight count != feature_dim");
    return m;
  } catch (const json::exception& ex) {
    throw Error(std::string("malformed model checkpoint: ") + ex.what());
  }
}

void save_model(const std::filesystem::path& path, const ToyPrmModel& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << serialize_model(model);
}

ToyPrmModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

}  // namespace omegaprm
