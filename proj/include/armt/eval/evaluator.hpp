#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "armt/models/model.hpp"
#include "armt/tasks/retrieval.hpp"

namespace armt::eval {

using tasks::Tokens;

/// Fraction of predictions equal to their answer; throws on a count mismatch.
double exact_match(const std::vector<Tokens>& predictions, const std::vector<Tokens>& answers);

struct CapacityEstimate {
  double k = 0.0;    // max(raw, 0)
  double raw = 0.0;  // (n v em - n) / (v - 1)
  bool clamped = false;
};

/// Pairs retained by a model that answers a stored pair exactly and guesses
/// uniformly among v values otherwise, given its exact match rate over n pairs.
CapacityEstimate capacity_estimate(double em, double n_pairs, double n_values);

/// Greedy answers: the query segment is fed with its answer slots padded and
/// each argmax (over value tokens) is written back before predicting the next
/// answer token.
template <typename T>
std::vector<Tokens> predict_answers(models::Model<T>& model, const std::vector<tasks::RetrievalSample>& samples,
                                    std::size_t batch_size = 64);

/// Seeds of evaluation samples; disjoint from training seeds by parity.
std::uint64_t eval_sample_seed(std::uint64_t seed, std::size_t n_pairs, std::size_t index);

std::vector<tasks::RetrievalSample> eval_samples(tasks::Task task, std::size_t n_pairs, std::size_t value_len,
                                                 std::size_t count, std::uint64_t seed);

struct EvalPoint {
  std::size_t n_pairs = 0;
  std::size_t samples = 0;  // per seed
  double em = 0.0;
  double em_std = 0.0;
  double estimated_k = 0.0;
  double k_std = 0.0;
  double raw_k = 0.0;
  bool clamped = false;
  std::vector<double> em_per_seed;
  std::vector<double> k_per_seed;
};

struct SweepOptions {
  tasks::Task task = tasks::Task::rewrite;
  std::size_t value_len = 1;
  std::vector<std::size_t> grid;
  std::size_t samples_per_point = 256;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::size_t batch_size = 64;
  std::size_t train_pairs = 0;  // training length marker
};

void to_json(nlohmann::json& j, const SweepOptions& o);
/// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, SweepOptions& o);

struct SweepReport {
  std::string model_id;
  tasks::Task task = tasks::Task::rewrite;
  std::size_t train_pairs = 0;
  std::vector<EvalPoint> points;
  double generalization_factor = 0.0;
  std::vector<std::string> warnings;

  const EvalPoint* at(std::size_t n_pairs) const;
};

/// Longest grid length with em >= threshold, divided by train_pairs.
double generalization_factor(const std::vector<EvalPoint>& points, std::size_t train_pairs,
                             double threshold = 0.9);

template <typename T>
SweepReport sweep(models::Model<T>& model, const std::string& model_id, const SweepOptions& options);

nlohmann::json to_json(const SweepReport& r);

/// Columns: model,task,n_pairs,seed,samples,em,estimated_k; one row per point and seed.
void write_sweep_csv(std::ostream& os, const std::vector<SweepReport>& reports);

struct Comparison {
  std::map<std::string, std::optional<SweepReport>> reports;  // keyed by slot name
  nlohmann::json verdicts;
};

/// Verdicts on the ablation claims from aligned sweeps. Slots are "armt",
/// "armt_no_gamma", "rmt" and "prmt"; missing slots leave their verdicts
/// unavailable rather than failing.
nlohmann::json ablation_verdicts(const std::map<std::string, std::optional<SweepReport>>& reports);

/// Runs the sweep for every available checkpoint and derives the verdicts.
Comparison compare_ablation(const std::map<std::string, std::string>& checkpoint_paths,
                            const SweepOptions& options);

/// Writes one CSV over every available report plus delta rows against "armt".
void write_comparison_csv(std::ostream& os, const Comparison& comparison);

}  // namespace armt::eval
