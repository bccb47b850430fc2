// Command-line front end: generate-data, train, eval-sweep, compare, capacity.
// Exit codes: 0 ok, 1 runtime failure, 2 configuration error, 3 failed verdict.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "armt/errors.hpp"
#include "armt/eval/evaluator.hpp"
#include "armt/io/binary.hpp"
#include "armt/models/model.hpp"
#include "armt/tasks/retrieval.hpp"
#include "armt/trainer/trainer.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;
using namespace armt;

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitVerdict = 3;

json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open " + path);
  try {
    return json::parse(is, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::ofstream open_out(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path);
  return os;
}

// Flags shared by eval-sweep and compare; unset flags keep the config file's values.
struct SweepFlags {
  std::string config;
  std::string task;
  std::optional<std::size_t> value_len, samples, batch, train_pairs;
  std::vector<std::size_t> grid;
  std::vector<std::uint64_t> seeds;

  void add(CLI::App* app) {
    app->add_option("--config", config, "JSON sweep options");
    app->add_option("--task", task, "remember or rewrite");
    app->add_option("--value-len", value_len, "answer length in tokens");
    app->add_option("--grid", grid, "ascending pair counts")->delimiter(',');
    app->add_option("--samples", samples, "samples per point and seed");
    app->add_option("--seeds", seeds, "evaluation seeds")->delimiter(',');
    app->add_option("--batch", batch, "evaluation batch size");
    app->add_option("--train-pairs", train_pairs, "training length for the generalization factor");
  }

  eval::SweepOptions resolve() const {
    eval::SweepOptions o;
    if (!config.empty()) o = read_json_file(config).get<eval::SweepOptions>();
    if (!task.empty()) o.task = tasks::parse_task(task);
    if (value_len) o.value_len = *value_len;
    if (!grid.empty()) o.grid = grid;
    if (samples) o.samples_per_point = *samples;
    if (!seeds.empty()) o.seeds = seeds;
    if (batch) o.batch_size = *batch;
    if (train_pairs) o.train_pairs = *train_pairs;
    return o;
  }
};

int cmd_generate(const std::string& task, std::size_t n_pairs, std::size_t value_len, std::size_t count,
                 std::uint64_t seed, const std::string& out) {
  std::vector<tasks::RetrievalSample> samples;
  for (std::size_t i = 0; i < count; ++i) {
    samples.push_back(tasks::generate(tasks::parse_task(task), n_pairs, value_len, mix_seed({seed, i})));
  }
  if (out.empty() || out == "-") {
    tasks::write_jsonl(std::cout, samples);
  } else {
    std::ofstream os = open_out(out);
    tasks::write_jsonl(os, samples);
  }
  return 0;
}

template <typename T>
std::string run_training(trainer::Trainer<T> t, bool quiet) {
  if (!quiet) {
    t.set_callback([](const trainer::StepRecord& r) {
      std::fprintf(stderr, "step %llu stage %zu pairs %zu loss %.4f lr %.2e", static_cast<unsigned long long>(r.step),
                   r.stage, r.n_pairs, r.loss, r.lr);
      if (r.em) std::fprintf(stderr, " em %.4f", *r.em);
      std::fprintf(stderr, " %.0f ms\n", r.wall_ms);
    });
  }
  return t.train();
}

int cmd_train(const std::string& config_path, const std::string& resume, const std::string& output_dir, bool quiet) {
  std::optional<trainer::TrainConfig> config;
  if (!config_path.empty()) config = trainer::load_train_config(config_path);
  if (config && !output_dir.empty()) config->output_dir = output_dir;
  if (!config && resume.empty()) throw ConfigError("train: --config or --resume is required");
  std::string precision = config ? config->precision : models::read_checkpoint_precision(resume);
  std::string path;
  if (precision == "float64") {
    path = run_training(resume.empty() ? trainer::Trainer<double>(*config)
                                       : trainer::Trainer<double>::resume(resume, config),
                        quiet);
  } else {
    path = run_training(resume.empty() ? trainer::Trainer<float>(*config)
                                       : trainer::Trainer<float>::resume(resume, config),
                        quiet);
  }
  std::cout << path << '\n';
  return 0;
}

template <typename T>
eval::SweepReport sweep_checkpoint(const std::string& path, const std::string& id, const eval::SweepOptions& o) {
  auto loaded = models::load_checkpoint<T>(path);
  return eval::sweep(loaded.model, id, o);
}

int cmd_sweep(const std::string& checkpoint, std::string model_id, const SweepFlags& flags, const std::string& out,
              const std::string& report_path) {
  const eval::SweepOptions o = flags.resolve();
  if (model_id.empty()) model_id = models::variant_name(models::read_checkpoint_config(checkpoint).variant);
  const eval::SweepReport report = models::read_checkpoint_precision(checkpoint) == "float64"
                                       ? sweep_checkpoint<double>(checkpoint, model_id, o)
                                       : sweep_checkpoint<float>(checkpoint, model_id, o);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  if (out.empty() || out == "-") {
    eval::write_sweep_csv(std::cout, {report});
  } else {
    std::ofstream os = open_out(out);
    eval::write_sweep_csv(os, {report});
  }
  if (!report_path.empty()) open_out(report_path) << eval::to_json(report).dump(2) << '\n';
  return 0;
}

int cmd_compare(const std::map<std::string, std::string>& slots, const SweepFlags& flags, const std::string& out,
                const std::string& verdict_path) {
  const eval::Comparison c = eval::compare_ablation(slots, flags.resolve());
  if (out.empty() || out == "-") {
    eval::write_comparison_csv(std::cout, c);
  } else {
    std::ofstream os = open_out(out);
    eval::write_comparison_csv(os, c);
  }
  const std::string verdicts = c.verdicts.dump(2);
  if (verdict_path.empty()) std::cerr << verdicts << '\n';
  else open_out(verdict_path) << verdicts << '\n';
  for (const auto& [name, v] : c.verdicts.items()) {
    if (v.is_object() && v.value("status", std::string()) == "fail") return kExitVerdict;
  }
  return 0;
}

int cmd_capacity(double em, double n, double v) {
  const eval::CapacityEstimate k = eval::capacity_estimate(em, n, v);
  std::cout << k.k << '\n';
  if (k.clamped) std::cerr << "clamped: raw estimate " << k.raw << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Associative and recurrent memory transformers on key-value retrieval"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate-data", "Write task samples as JSONL");
  std::string g_task = "rewrite", g_out;
  std::size_t g_pairs = 10, g_value_len = 1, g_count = 100;
  std::uint64_t g_seed = 0;
  gen->add_option("--task", g_task, "remember or rewrite");
  gen->add_option("--n-pairs", g_pairs, "pairs per sample");
  gen->add_option("--value-len", g_value_len, "value length in tokens");
  gen->add_option("--count", g_count, "number of samples");
  gen->add_option("--seed", g_seed, "base seed");
  gen->add_option("--out", g_out, "output path, - for stdout");

  auto* train = app.add_subcommand("train", "Run a curriculum from a JSON config");
  std::string t_config, t_resume, t_output;
  bool t_quiet = false;
  train->add_option("--config", t_config, "JSON training config");
  train->add_option("--resume", t_resume, "checkpoint to resume from");
  train->add_option("--output-dir", t_output, "override output_dir");
  train->add_flag("--quiet", t_quiet, "no progress on stderr");

  auto* sweep = app.add_subcommand("eval-sweep", "Exact match and capacity over a pair-count grid");
  std::string s_ckpt, s_id, s_out, s_report;
  SweepFlags s_flags;
  sweep->add_option("--checkpoint", s_ckpt, "model checkpoint")->required();
  sweep->add_option("--model-id", s_id, "label in the CSV (default: variant)");
  sweep->add_option("--out", s_out, "CSV path, - for stdout");
  sweep->add_option("--report", s_report, "JSON report path");
  s_flags.add(sweep);

  auto* compare = app.add_subcommand("compare", "Ablation table and verdicts over up to four checkpoints");
  std::map<std::string, std::string> c_slots;
  std::string c_out, c_verdict;
  SweepFlags c_flags;
  compare->add_option("--armt", c_slots["armt"], "armt checkpoint");
  compare->add_option("--armt-no-gamma", c_slots["armt_no_gamma"], "armt without the normalizer correction");
  compare->add_option("--rmt", c_slots["rmt"], "rmt checkpoint");
  compare->add_option("--prmt", c_slots["prmt"], "prmt checkpoint");
  compare->add_option("--out", c_out, "CSV path, - for stdout");
  compare->add_option("--verdict", c_verdict, "JSON verdict path");
  c_flags.add(compare);

  auto* capacity = app.add_subcommand("capacity", "Pairs retained given exact match, pair count and value count");
  double k_em = 0.0, k_n = 0.0, k_v = 0.0;
  capacity->add_option("--em", k_em, "exact match in [0, 1]")->required();
  capacity->add_option("--n", k_n, "pairs in context")->required();
  capacity->add_option("--v", k_v, "distinct values")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) return cmd_generate(g_task, g_pairs, g_value_len, g_count, g_seed, g_out);
    if (*train) return cmd_train(t_config, t_resume, t_output, t_quiet);
    if (*sweep) return cmd_sweep(s_ckpt, s_id, s_flags, s_out, s_report);
    if (*compare) return cmd_compare(c_slots, c_flags, c_out, c_verdict);
    if (*capacity) return cmd_capacity(k_em, k_n, k_v);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const io::FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
