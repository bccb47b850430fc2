#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "armt/models/model.hpp"
#include "armt/nn/adam.hpp"
#include "armt/nn/rng.hpp"
#include "armt/tasks/retrieval.hpp"

namespace armt::trainer {

enum class LengthMode { fixed, uniform_up_to };

struct CurriculumStage {
  std::size_t n_pairs = 1;
  std::size_t steps = 1000;  // budget; the stage may end early on the EM gate
  LengthMode mode = LengthMode::fixed;

  friend bool operator==(const CurriculumStage&, const CurriculumStage&) = default;
};

/// Pair counts of the default schedules.
std::vector<std::size_t> default_schedule(tasks::Task task);

/// One stage per pair count, each with the same budget and mode.
std::vector<CurriculumStage> make_stages(const std::vector<std::size_t>& pairs, std::size_t steps, LengthMode mode);

struct TrainConfig {
  models::ModelConfig model;
  tasks::Task task = tasks::Task::rewrite;
  std::size_t value_len = 1;
  std::vector<CurriculumStage> stages;
  std::size_t batch_size = 64;
  nn::AdamHyper adam{};
  std::size_t warmup_steps = 1000;
  double grad_clip = 1.0;  // 0 disables clipping
  std::size_t eval_every = 500;
  std::size_t eval_samples = 1024;
  double advance_threshold = 0.95;
  std::size_t log_every = 10;
  std::size_t checkpoint_every = 0;  // mid-stage checkpoints; 0 = stage boundaries only
  std::uint64_t seed = 0;
  std::string precision = "float32";
  std::string output_dir = "runs/default";

  /// Throws ConfigError naming the offending field.
  void validate() const;
  /// output_dir, resolved against $ARMT_OUTPUT_ROOT when that is set and the path is relative.
  std::string resolved_output_dir() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, TrainConfig& c);
TrainConfig load_train_config(const std::string& path);

/// Seeds of training samples; even, so disjoint from evaluation seeds.
std::uint64_t train_sample_seed(std::uint64_t seed, std::uint64_t step, std::size_t index);

struct StepRecord {
  std::uint64_t step = 0;  // global optimizer step after the update
  std::size_t stage = 0;
  std::size_t n_pairs = 0;
  double loss = 0.0;
  std::optional<double> em;
  double lr = 0.0;
  double wall_ms = 0.0;
};

nlohmann::json to_json(const StepRecord& r);

struct StageReport {
  std::size_t stage = 0;
  std::size_t n_pairs = 0;
  std::size_t steps_run = 0;       // steps taken in this call
  std::size_t steps_in_stage = 0;  // total steps taken in the stage so far
  std::size_t budget = 0;
  std::optional<double> val_em;    // last validation EM
  std::vector<StepRecord> records;
};

enum class Action { advance, repeat };

struct AdvanceDecision {
  Action action = Action::repeat;
  bool budget_exhausted = false;  // advanced without reaching the threshold
};

AdvanceDecision advance_policy(const StageReport& report, double threshold);

template <typename T>
class Trainer {
 public:
  using Clock = std::chrono::steady_clock;
  using Callback = std::function<void(const StepRecord&)>;

  explicit Trainer(TrainConfig config);
  /// Resumes from a checkpoint written by this class.
  static Trainer resume(const std::string& checkpoint_path, std::optional<TrainConfig> override_config = {});

  const TrainConfig& config() const { return config_; }
  models::Model<T>& model() { return model_; }
  std::size_t stage_index() const { return stage_; }
  std::size_t steps_in_stage() const { return steps_in_stage_; }
  std::uint64_t global_step() const { return optimizer_.step; }
  bool finished() const { return stage_ >= config_.stages.size(); }

  /// Pair count of the next training batch; draws from the sampler in uniform mode.
  std::size_t sample_pair_count(const CurriculumStage& stage);

  /// One optimizer step on a fresh batch; returns the batch loss.
  double step(const CurriculumStage& stage);

  /// Validation EM on the held-out set for (task, n_pairs).
  double validate(std::size_t n_pairs);

  /// Runs the current stage for at most `max_steps` steps, validating every
  /// eval_every steps and stopping early once the gate opens.
  StageReport run_stage(std::size_t max_steps);

  /// Folds run_stage over the remaining stages, writing checkpoints at stage
  /// boundaries and the metrics log under the output directory. Returns the
  /// final checkpoint path.
  std::string train();

  void save(const std::string& path) const;

  void set_callback(Callback cb) { callback_ = std::move(cb); }
  void set_metrics_stream(std::ostream* os) { metrics_ = os; }

 private:
  Trainer(TrainConfig config, models::LoadedCheckpoint<T> loaded);

  void emit(const StepRecord& r);
  nlohmann::json state_json() const;

  TrainConfig config_;
  models::Model<T> model_;
  nn::AdamState<T> optimizer_;
  Rng sampler_;
  std::size_t stage_ = 0;
  std::size_t steps_in_stage_ = 0;
  std::optional<double> last_em_;
  nlohmann::json history_ = nlohmann::json::array();
  Callback callback_;
  std::ostream* metrics_ = nullptr;
  Clock::time_point start_ = Clock::now();
  double wall_offset_ms_ = 0.0;
};

}  // namespace armt::trainer
