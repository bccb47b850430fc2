#include "armt/trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "armt/errors.hpp"
#include "armt/eval/evaluator.hpp"

namespace armt::trainer {

using nlohmann::json;
namespace fs = std::filesystem;

std::vector<std::size_t> default_schedule(tasks::Task task) {
  if (task == tasks::Task::remember) return {1, 2, 3, 5, 10, 20, 40, 50, 200};
  return {1, 2, 3, 5, 10, 20, 40, 50};
}

std::vector<CurriculumStage> make_stages(const std::vector<std::size_t>& pairs, std::size_t steps, LengthMode mode) {
  std::vector<CurriculumStage> out;
  for (std::size_t n : pairs) out.push_back({n, steps, mode});
  return out;
}

void TrainConfig::validate() const {
  model.validate();
  if (stages.empty()) throw ConfigError("train config: stages must not be empty");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (stages[i].n_pairs == 0) throw ConfigError("train config: stages[" + std::to_string(i) + "].n_pairs must be positive");
    if (i > 0 && stages[i].n_pairs < stages[i - 1].n_pairs) {
      throw ConfigError("train config: stages must be nondecreasing in n_pairs");
    }
    if (task == tasks::Task::remember && stages[i].n_pairs > tasks::keyspace(task)) {
      throw ConfigError("train config: stages[" + std::to_string(i) + "].n_pairs exceeds the keyspace");
    }
    if (model.max_segments != 0 && stages[i].n_pairs + 1 > model.max_segments) {
      throw ConfigError("train config: stages[" + std::to_string(i) + "] needs more than max_segments segments");
    }
  }
  if (value_len == 0) throw ConfigError("train config: value_len must be positive");
  if (tasks::segment_length(task, value_len) > model.segment_len) {
    throw ConfigError("train config: value_len does not fit model.segment_len");
  }
  if (batch_size == 0) throw ConfigError("train config: batch_size must be positive");
  if (!(adam.lr > 0.0)) throw ConfigError("train config: lr must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw ConfigError("train config: beta1 must lie in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw ConfigError("train config: beta2 must lie in [0, 1)");
  if (!(adam.eps > 0.0)) throw ConfigError("train config: eps must be positive");
  if (grad_clip < 0.0) throw ConfigError("train config: grad_clip must be nonnegative");
  if (eval_every == 0) throw ConfigError("train config: eval_every must be positive");
  if (eval_samples == 0) throw ConfigError("train config: eval_samples must be positive");
  if (!(advance_threshold >= 0.0 && advance_threshold <= 1.0)) {
    throw ConfigError("train config: advance_threshold must lie in [0, 1]");
  }
  if (log_every == 0) throw ConfigError("train config: log_every must be positive");
  if (precision != "float32" && precision != "float64") {
    throw ConfigError("train config: precision must be float32 or float64");
  }
  if (output_dir.empty()) throw ConfigError("train config: output_dir must not be empty");
}

std::string TrainConfig::resolved_output_dir() const {
  const fs::path dir(output_dir);
  const char* root = std::getenv("ARMT_OUTPUT_ROOT");
  if (root && *root && dir.is_relative()) return (fs::path(root) / dir).string();
  return dir.string();
}

namespace {

std::string mode_name(LengthMode m) { return m == LengthMode::fixed ? "fixed" : "uniform_up_to"; }

LengthMode parse_mode(const std::string& s) {
  if (s == "fixed") return LengthMode::fixed;
  if (s == "uniform_up_to") return LengthMode::uniform_up_to;
  throw ConfigError("train config: unknown sample_lengths mode '" + s + "'");
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; })) {
      throw ConfigError(where + ": unknown key '" + it.key() + "'");
    }
  }
}

template <typename V>
void read_field(const json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace

void to_json(json& j, const TrainConfig& c) {
  json stages = json::array();
  for (const auto& s : c.stages) {
    stages.push_back({{"n_pairs", s.n_pairs}, {"steps", s.steps}, {"sample_lengths", mode_name(s.mode)}});
  }
  j = json{{"model", c.model},
           {"task", tasks::task_name(c.task)},
           {"value_len", c.value_len},
           {"stages", stages},
           {"batch_size", c.batch_size},
           {"lr", c.adam.lr},
           {"beta1", c.adam.beta1},
           {"beta2", c.adam.beta2},
           {"eps", c.adam.eps},
           {"warmup_steps", c.warmup_steps},
           {"grad_clip", c.grad_clip},
           {"eval_every", c.eval_every},
           {"eval_samples", c.eval_samples},
           {"advance_threshold", c.advance_threshold},
           {"log_every", c.log_every},
           {"checkpoint_every", c.checkpoint_every},
           {"seed", c.seed},
           {"precision", c.precision},
           {"output_dir", c.output_dir}};
}

void from_json(const json& j, TrainConfig& c) {
  const std::string where = "train config";
  reject_unknown(j,
                 {"model", "task", "value_len", "stages", "batch_size", "lr", "beta1", "beta2", "eps", "warmup_steps",
                  "grad_clip", "eval_every", "eval_samples", "advance_threshold", "log_every", "checkpoint_every",
                  "seed", "precision", "output_dir"},
                 where);
  TrainConfig d;
  if (j.contains("model")) d.model = j.at("model").get<models::ModelConfig>();
  std::string task = tasks::task_name(d.task);
  read_field(j, "task", task, where);
  d.task = tasks::parse_task(task);
  read_field(j, "value_len", d.value_len, where);
  if (j.contains("stages")) {
    d.stages.clear();
    std::size_t i = 0;
    for (const json& s : j.at("stages")) {
      const std::string at = where + ": stages[" + std::to_string(i++) + "]";
      reject_unknown(s, {"n_pairs", "steps", "sample_lengths"}, at);
      CurriculumStage st;
      read_field(s, "n_pairs", st.n_pairs, at);
      read_field(s, "steps", st.steps, at);
      std::string mode = mode_name(st.mode);
      read_field(s, "sample_lengths", mode, at);
      st.mode = parse_mode(mode);
      d.stages.push_back(st);
    }
  } else {
    d.stages = make_stages(default_schedule(d.task), 5000, LengthMode::fixed);
  }
  read_field(j, "batch_size", d.batch_size, where);
  read_field(j, "lr", d.adam.lr, where);
  read_field(j, "beta1", d.adam.beta1, where);
  read_field(j, "beta2", d.adam.beta2, where);
  read_field(j, "eps", d.adam.eps, where);
  read_field(j, "warmup_steps", d.warmup_steps, where);
  read_field(j, "grad_clip", d.grad_clip, where);
  read_field(j, "eval_every", d.eval_every, where);
  read_field(j, "eval_samples", d.eval_samples, where);
  read_field(j, "advance_threshold", d.advance_threshold, where);
  read_field(j, "log_every", d.log_every, where);
  read_field(j, "checkpoint_every", d.checkpoint_every, where);
  read_field(j, "seed", d.seed, where);
  read_field(j, "precision", d.precision, where);
  read_field(j, "output_dir", d.output_dir, where);
  c = std::move(d);
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path);
  json j;
  try {
    j = json::parse(is, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  TrainConfig c = j.get<TrainConfig>();
  c.validate();
  return c;
}

std::uint64_t train_sample_seed(std::uint64_t seed, std::uint64_t step, std::size_t index) {
  return mix_seed({0x747261696eULL, seed, step, index}) & ~1ULL;
}

json to_json(const StepRecord& r) {
  return json{{"step", r.step},
              {"stage", r.stage},
              {"n_pairs", r.n_pairs},
              {"loss", r.loss},
              {"em", r.em ? json(*r.em) : json(nullptr)},
              {"lr", r.lr},
              {"wall_ms", r.wall_ms}};
}

AdvanceDecision advance_policy(const StageReport& report, double threshold) {
  if (report.val_em && *report.val_em >= threshold) return {Action::advance, false};
  if (report.steps_in_stage >= report.budget) return {Action::advance, true};
  return {Action::repeat, false};
}

template <typename T>
Trainer<T>::Trainer(TrainConfig config)
    : config_(std::move(config)),
      model_(config_.model, mix_seed({config_.seed, 0x696e6974ULL})),
      optimizer_(nn::AdamState<T>::for_parameters(model_.parameters())),
      sampler_(mix_seed({config_.seed, 0x6c656eULL})) {
  config_.validate();
}

template <typename T>
Trainer<T>::Trainer(TrainConfig config, models::LoadedCheckpoint<T> loaded)
    : config_(std::move(config)),
      model_(std::move(loaded.model)),
      optimizer_(loaded.snapshot.optimizer ? std::move(*loaded.snapshot.optimizer)
                                           : nn::AdamState<T>::for_parameters(model_.parameters())),
      sampler_(loaded.snapshot.rng ? *loaded.snapshot.rng : Rng(mix_seed({config_.seed, 0x6c656eULL}))) {
  config_.validate();
  if (!(config_.model == model_.config())) throw ConfigError("resume: model config differs from the checkpoint");
  const json& st = loaded.snapshot.trainer;
  stage_ = st.value("stage", std::size_t{0});
  steps_in_stage_ = st.value("steps_in_stage", std::size_t{0});
  if (st.contains("last_em") && !st.at("last_em").is_null()) last_em_ = st.at("last_em").get<double>();
  history_ = st.value("history", json::array());
  wall_offset_ms_ = st.value("wall_ms", 0.0);
}

template <typename T>
Trainer<T> Trainer<T>::resume(const std::string& checkpoint_path, std::optional<TrainConfig> override_config) {
  auto loaded = models::load_checkpoint<T>(checkpoint_path);
  TrainConfig config;
  if (override_config) {
    config = std::move(*override_config);
  } else {
    const json& st = loaded.snapshot.trainer;
    if (!st.contains("config")) throw ConfigError("checkpoint " + checkpoint_path + " holds no trainer state");
    config = st.at("config").get<TrainConfig>();
  }
  return Trainer(std::move(config), std::move(loaded));
}

template <typename T>
std::size_t Trainer<T>::sample_pair_count(const CurriculumStage& stage) {
  if (stage.mode == LengthMode::fixed) return stage.n_pairs;
  return 1 + static_cast<std::size_t>(sampler_.uniform_int(stage.n_pairs));
}

template <typename T>
double Trainer<T>::step(const CurriculumStage& stage) {
  const std::size_t n = sample_pair_count(stage);
  std::vector<tasks::RetrievalSample> samples;
  samples.reserve(config_.batch_size);
  for (std::size_t i = 0; i < config_.batch_size; ++i) {
    samples.push_back(tasks::generate(config_.task, n, config_.value_len,
                                      train_sample_seed(config_.seed, optimizer_.step, i)));
  }
  const auto batch = tasks::make_batch(samples);
  model_.parameters().zero_grad();
  nn::Graph<T> g;
  const auto out = model_.forward_sequence(g, batch);
  const double loss = static_cast<double>(out.loss.value()[0]);
  if (!std::isfinite(loss)) {
    throw NumericError("non-finite loss at step " + std::to_string(optimizer_.step) + " (stage " +
                       std::to_string(stage_) + ", " + std::to_string(n) + " pairs)");
  }
  g.backward(out.loss);
  if (config_.grad_clip > 0.0) nn::clip_grad_norm(model_.parameters(), config_.grad_clip);
  const double warm = config_.warmup_steps == 0
                          ? 1.0
                          : std::min(1.0, double(optimizer_.step + 1) / double(config_.warmup_steps));
  nn::adam_step(model_.parameters(), optimizer_, config_.adam, config_.adam.lr * warm);
  return loss;
}

template <typename T>
double Trainer<T>::validate(std::size_t n_pairs) {
  const auto samples = eval::eval_samples(config_.task, n_pairs, config_.value_len, config_.eval_samples,
                                          mix_seed({config_.seed, 0x76616cULL}));
  std::vector<tasks::Tokens> answers;
  for (const auto& s : samples) answers.push_back(s.answer);
  return eval::exact_match(eval::predict_answers(model_, samples, config_.batch_size), answers);
}

template <typename T>
void Trainer<T>::emit(const StepRecord& r) {
  if (metrics_) *metrics_ << to_json(r).dump() << '\n' << std::flush;
  if (callback_) callback_(r);
}

template <typename T>
StageReport Trainer<T>::run_stage(std::size_t max_steps) {
  if (finished()) throw ConfigError("run_stage: curriculum already finished");
  const CurriculumStage& stage = config_.stages[stage_];
  StageReport report;
  report.stage = stage_;
  report.n_pairs = stage.n_pairs;
  report.budget = stage.steps;
  report.val_em = last_em_;
  const auto finish = [&](bool advance) {
    report.steps_in_stage = steps_in_stage_;
    if (advance) {
      const AdvanceDecision d = advance_policy(report, config_.advance_threshold);
      json entry = {{"stage", stage_},
                    {"n_pairs", stage.n_pairs},
                    {"steps", steps_in_stage_},
                    {"val_em", report.val_em ? json(*report.val_em) : json(nullptr)},
                    {"budget_exhausted", d.budget_exhausted}};
      history_.push_back(entry);
      ++stage_;
      steps_in_stage_ = 0;
      last_em_.reset();
    }
    return report;
  };
  if (stage.steps == 0) return finish(true);

  for (std::size_t taken = 0; taken < max_steps && steps_in_stage_ < stage.steps; ++taken) {
    StepRecord rec;
    rec.lr = config_.adam.lr *
             (config_.warmup_steps == 0 ? 1.0
                                        : std::min(1.0, double(optimizer_.step + 1) / double(config_.warmup_steps)));
    rec.loss = step(stage);
    ++steps_in_stage_;
    ++report.steps_run;
    rec.step = optimizer_.step;
    rec.stage = stage_;
    rec.n_pairs = stage.n_pairs;
    const bool eval_now = steps_in_stage_ % config_.eval_every == 0 || steps_in_stage_ == stage.steps;
    if (eval_now) {
      last_em_ = validate(stage.n_pairs);
      report.val_em = last_em_;
      rec.em = last_em_;
    }
    rec.wall_ms = wall_offset_ms_ + std::chrono::duration<double, std::milli>(Clock::now() - start_).count();
    if (eval_now || steps_in_stage_ % config_.log_every == 0) emit(rec);
    report.records.push_back(rec);
    if (eval_now) {
      report.steps_in_stage = steps_in_stage_;
      if (advance_policy(report, config_.advance_threshold).action == Action::advance) return finish(true);
    }
  }
  report.steps_in_stage = steps_in_stage_;
  if (advance_policy(report, config_.advance_threshold).action == Action::advance) return finish(true);
  return finish(false);
}

template <typename T>
json Trainer<T>::state_json() const {
  return json{{"config", config_},
              {"stage", stage_},
              {"steps_in_stage", steps_in_stage_},
              {"last_em", last_em_ ? json(*last_em_) : json(nullptr)},
              {"history", history_},
              {"wall_ms", wall_offset_ms_ + std::chrono::duration<double, std::milli>(Clock::now() - start_).count()}};
}

template <typename T>
void Trainer<T>::save(const std::string& path) const {
  models::TrainingSnapshot<T> snap;
  snap.optimizer = optimizer_;
  snap.trainer = state_json();
  snap.rng = sampler_;
  models::save_checkpoint(path, model_, snap);
}

template <typename T>
std::string Trainer<T>::train() {
  const fs::path dir(config_.resolved_output_dir());
  fs::create_directories(dir);
  std::ofstream metrics(dir / "metrics.jsonl", std::ios::app);
  if (!metrics) throw ConfigError("cannot open metrics log in " + dir.string());
  std::ostream* previous = metrics_;
  metrics_ = &metrics;
  {
    std::ofstream cfg(dir / "config.json");
    cfg << json(config_).dump(2) << '\n';
  }
  const std::size_t chunk = config_.checkpoint_every == 0 ? SIZE_MAX : config_.checkpoint_every;
  try {
    while (!finished()) {
      const std::size_t stage_before = stage_;
      run_stage(chunk);
      if (stage_ != stage_before) {
        save((dir / ("stage" + std::to_string(stage_before) + ".ckpt")).string());
        const json& h = history_.back();
        if (h.at("budget_exhausted").get<bool>()) {
          json warn = {{"event", "stage_budget_exhausted"}, {"stage", stage_before}, {"val_em", h.at("val_em")}};
          metrics << warn.dump() << '\n';
        }
      }
      save((dir / "latest.ckpt").string());
    }
  } catch (const NumericError&) {
    // Parameters are untouched by the failed step, so this is the last good state.
    save((dir / "last_good.ckpt").string());
    metrics_ = previous;
    throw;
  }
  const std::string final_path = (dir / "final.ckpt").string();
  save(final_path);
  metrics_ = previous;
  return final_path;
}

template class Trainer<float>;
template class Trainer<double>;

}  // namespace armt::trainer
