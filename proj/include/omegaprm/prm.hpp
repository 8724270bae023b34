#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "omegaprm/core.hpp"
#include "omegaprm/dataset.hpp"

namespace omegaprm {

inline constexpr double kScoreEpsilon = 1e-7;

// Clamps a probability to [eps, 1 - eps].
double clamp_score(double y) noexcept;

// Binary cross-entropy -[l log y + (1 - l) log(1 - y)] with y clamped.
double pointwise_loss(double label, double y);
// d/dy of pointwise_loss (unclamped region).
double pointwise_loss_grad(double label, double y);

// Cross-entropy between (pref_a, 1 - pref_a) and the Bradley-Terry
// prediction (ya / (ya + yb), yb / (ya + yb)).
double pairwise_loss(double pref_a, double ya, double yb);
double pairwise_loss(const PreferencePair& pair, double ya, double yb);
// (dL/dya, dL/dyb)
std::pair<double, double> pairwise_loss_grad(double pref_a, double ya, double yb);

// ---------------------------------------------------------------------------
// Featurizer
// ---------------------------------------------------------------------------

inline constexpr std::string_view kFeatureVersion = "omegaprm-toy-features/1";
inline constexpr std::size_t kHashBuckets = 16;
inline constexpr std::size_t kFeatureDim = 6 + kHashBuckets;

// Fixed map of (state text, step text). Both inputs are trimmed first.
//   0 bias
//   1 step parses as "a op b = c"
//   2 ... and a op b == c
//   3 step's first number equals the last result in the state
//   4 step length in tokens / 10
//   5 fraction of step tokens that occur in the state
//   6.. step token-bigram hash buckets (normalized counts)
std::vector<double> featurize(std::string_view state_text, std::string_view step_text);

// ---------------------------------------------------------------------------
// Model and training
// ---------------------------------------------------------------------------

enum class Objective { soft, hard, pairwise };
std::string to_string(Objective o);
Objective objective_from_string(std::string_view s);  // throws InvalidConfig

struct TrainSettings {
  double learning_rate = 0.05;
  std::uint32_t epochs = 300;
  double l2 = 1e-4;
  double init_scale = 0.01;

  void validate() const;
  bool operator==(const TrainSettings&) const = default;
};

struct ToyPrmModel {
  std::string feature_version = std::string(kFeatureVersion);
  std::vector<double> weights;
  Objective objective = Objective::soft;
  TrainSettings settings;
  std::uint64_t seed = 0;

  // sigmoid(w . x), clamped.
  double predict(std::span<const double> features) const;
  bool operator==(const ToyPrmModel&) const = default;
};

struct TrainResult {
  ToyPrmModel model;
  std::vector<double> loss_curve;  // entry 0 is the loss at initialization
};

struct LabeledVector {
  std::vector<double> features;
  double label = 0.0;
};

struct PairVector {
  std::vector<double> a;
  std::vector<double> b;
  double pref_a = 0.5;
};

// Full-batch Adam on the mean loss plus l2/2 |w|^2. Throws EmptyDataset.
TrainResult train_logistic(std::span<const LabeledVector> data, const TrainSettings& settings, std::uint64_t seed);
TrainResult train_logistic_pairs(std::span<const PairVector> data, const TrainSettings& settings,
                                 std::uint64_t seed);

// soft uses mc as the target, hard uses hard_label, pairwise uses `pairs`.
TrainResult train_toy_prm(const std::vector<TrainingExample>& examples, const std::vector<PreferencePair>& pairs,
                          Objective objective, const TrainSettings& settings, std::uint64_t seed);

double score_step(const ToyPrmModel& model, std::string_view state_text, std::string_view step_text);

enum class Aggregation { product, min };
std::string to_string(Aggregation a);
Aggregation aggregation_from_string(std::string_view s);

// Throws EmptySolution on an empty list.
double aggregate_solution_score(std::span<const double> step_scores, Aggregation agg = Aggregation::product);

// Per-step scores of a whole solution, each conditioned on the statement
// and the steps before it.
std::vector<double> score_solution_steps(const ToyPrmModel& model, std::string_view statement,
                                         std::span<const Step> steps);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

std::string serialize_model(const ToyPrmModel& model);
ToyPrmModel parse_model(std::string_view text);  // throws Error
void save_model(const std::filesystem::path& path, const ToyPrmModel& model);
ToyPrmModel load_model(const std::filesystem::path& path);

}  // namespace omegaprm
