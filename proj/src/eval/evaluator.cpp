#include "armt/eval/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>

#include "armt/errors.hpp"
#include "armt/nn/rng.hpp"

namespace armt::eval {

using nlohmann::json;
using nn::Graph;

double exact_match(const std::vector<Tokens>& predictions, const std::vector<Tokens>& answers) {
  if (predictions.size() != answers.size()) {
    throw ConfigError("exact_match: " + std::to_string(predictions.size()) + " predictions for " +
                      std::to_string(answers.size()) + " answers");
  }
  if (answers.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < answers.size(); ++i) hits += predictions[i] == answers[i];
  return static_cast<double>(hits) / static_cast<double>(answers.size());
}

CapacityEstimate capacity_estimate(double em, double n_pairs, double n_values) {
  if (!(n_values >= 2.0)) throw ConfigError("capacity_estimate: v must be at least 2");
  if (!(em >= 0.0 && em <= 1.0)) throw ConfigError("capacity_estimate: em must lie in [0, 1]");
  if (!(n_pairs >= 0.0)) throw ConfigError("capacity_estimate: n must be nonnegative");
  CapacityEstimate out;
  out.raw = (n_pairs * n_values * em - n_pairs) / (n_values - 1.0);
  out.clamped = out.raw < 0.0;
  out.k = out.clamped ? 0.0 : out.raw;
  return out;
}

namespace {

double value_space(std::size_t value_len) { return std::pow(double(tasks::vocab::kValueCount), double(value_len)); }

// Answers are value tokens, so the argmax ranges over values only; chance
// level is then exactly 1/v per token.
template <typename T>
int argmax_token(const nn::Tensor<T>& logits, std::size_t row) {
  const auto r = logits.row(row).first(tasks::vocab::kValueCount);
  return static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
}

template <typename T>
void predict_chunk(models::Model<T>& model, std::span<const tasks::RetrievalSample> chunk,
                   std::vector<Tokens>& out) {
  const auto& first = chunk.front();
  const tasks::Task task = first.task;
  const std::size_t value_len = first.answer.size();
  const std::size_t batch = chunk.size();
  std::vector<tasks::RetrievalSample> samples(chunk.begin(), chunk.end());
  // make_batch checks that the chunk is uniform.
  std::vector<models::SegmentBatch> segments = tasks::make_batch(samples);
  const std::size_t len = segments.front().len;

  // One graph per segment; `held` owns the graph the carry lives in.
  auto held = std::make_unique<Graph<T>>(false);
  models::Carry<T> carry = model.initial_carry(*held, batch);
  for (std::size_t s = 0; s + 1 < segments.size(); ++s) {
    auto g = std::make_unique<Graph<T>>(false);
    const models::Carry<T> bound = models::rebind(*g, carry);
    carry = model.forward_segment(*g, bound, segments[s].tokens, batch, false).carry;
    held = std::move(g);
  }

  std::vector<int> query = segments.back().tokens;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < value_len; ++j) query[b * len + tasks::answer_position(task, j) + 1] = tasks::vocab::kPad;
  }
  std::vector<Tokens> preds(batch, Tokens(value_len, tasks::vocab::kPad));
  for (std::size_t j = 0; j < value_len; ++j) {
    Graph<T> g(false);
    const models::Carry<T> bound = models::rebind(g, carry);
    const auto seg = model.forward_segment(g, bound, query, batch, true);
    const nn::Tensor<T>& logits = seg.logits.value();
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t pos = tasks::answer_position(task, j);
      const int tok = argmax_token(logits, b * len + pos);
      preds[b][j] = tok;
      if (pos + 1 < len) query[b * len + pos + 1] = tok;
    }
  }
  for (auto& p : preds) out.push_back(std::move(p));
}

double mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

}  // namespace

template <typename T>
std::vector<Tokens> predict_answers(models::Model<T>& model, const std::vector<tasks::RetrievalSample>& samples,
                                    std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("predict_answers: batch_size must be positive");
  std::vector<Tokens> out;
  out.reserve(samples.size());
  std::size_t i = 0;
  while (i < samples.size()) {
    // A chunk is a run of samples sharing pair count and answer length.
    std::size_t j = i + 1;
    while (j < samples.size() && j - i < batch_size && samples[j].pairs.size() == samples[i].pairs.size() &&
           samples[j].answer.size() == samples[i].answer.size() && samples[j].task == samples[i].task) {
      ++j;
    }
    predict_chunk(model, std::span<const tasks::RetrievalSample>(samples).subspan(i, j - i), out);
    i = j;
  }
  return out;
}

std::uint64_t eval_sample_seed(std::uint64_t seed, std::size_t n_pairs, std::size_t index) {
  return mix_seed({0x6576616cULL, seed, n_pairs, index}) | 1ULL;
}

std::vector<tasks::RetrievalSample> eval_samples(tasks::Task task, std::size_t n_pairs, std::size_t value_len,
                                                 std::size_t count, std::uint64_t seed) {
  std::vector<tasks::RetrievalSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(tasks::generate(task, n_pairs, value_len, eval_sample_seed(seed, n_pairs, i)));
  }
  return out;
}

const EvalPoint* SweepReport::at(std::size_t n_pairs) const {
  for (const auto& p : points) {
    if (p.n_pairs == n_pairs) return &p;
  }
  return nullptr;
}

double generalization_factor(const std::vector<EvalPoint>& points, std::size_t train_pairs, double threshold) {
  if (train_pairs == 0) throw ConfigError("generalization_factor: training length must be positive");
  std::size_t best = 0;
  for (const auto& p : points) {
    if (p.em >= threshold) best = std::max(best, p.n_pairs);
  }
  return static_cast<double>(best) / static_cast<double>(train_pairs);
}

template <typename T>
SweepReport sweep(models::Model<T>& model, const std::string& model_id, const SweepOptions& options) {
  if (options.grid.empty()) throw ConfigError("sweep: empty grid");
  if (!std::is_sorted(options.grid.begin(), options.grid.end())) throw ConfigError("sweep: grid must be ascending");
  if (options.seeds.empty()) throw ConfigError("sweep: no seeds");
  if (options.samples_per_point == 0) throw ConfigError("sweep: samples_per_point must be positive");
  const std::size_t max_len = tasks::segment_length(options.task, options.value_len);
  if (max_len > model.config().segment_len) {
    throw ConfigError("sweep: segments of " + std::to_string(max_len) + " tokens exceed the model's segment_len");
  }
  SweepReport report;
  report.model_id = model_id;
  report.task = options.task;
  report.train_pairs = options.train_pairs;
  const double v = value_space(options.value_len);
  for (std::size_t n : options.grid) {
    if (n == 0 || (options.task == tasks::Task::remember && n > tasks::keyspace(options.task))) {
      report.warnings.push_back("skipped n_pairs=" + std::to_string(n) + ": outside the generator keyspace");
      continue;
    }
    if (model.config().max_segments != 0 && n + 1 > model.config().max_segments) {
      report.warnings.push_back("skipped n_pairs=" + std::to_string(n) + ": exceeds max_segments");
      continue;
    }
    EvalPoint point;
    point.n_pairs = n;
    point.samples = options.samples_per_point;
    for (std::uint64_t seed : options.seeds) {
      const auto samples = eval_samples(options.task, n, options.value_len, options.samples_per_point, seed);
      std::vector<Tokens> answers;
      for (const auto& s : samples) answers.push_back(s.answer);
      const double em = exact_match(predict_answers(model, samples, options.batch_size), answers);
      const CapacityEstimate k = capacity_estimate(em, double(n), v);
      point.em_per_seed.push_back(em);
      point.k_per_seed.push_back(k.k);
    }
    point.em = mean(point.em_per_seed);
    point.em_std = sample_std(point.em_per_seed);
    const CapacityEstimate k = capacity_estimate(point.em, double(n), v);
    point.estimated_k = k.k;
    point.raw_k = k.raw;
    point.clamped = k.clamped;
    point.k_std = sample_std(point.k_per_seed);
    report.points.push_back(std::move(point));
  }
  if (options.train_pairs > 0) report.generalization_factor = generalization_factor(report.points, options.train_pairs);
  return report;
}

void to_json(json& j, const SweepOptions& o) {
  j = json{{"task", tasks::task_name(o.task)}, {"value_len", o.value_len},
           {"grid", o.grid},                   {"samples_per_point", o.samples_per_point},
           {"seeds", o.seeds},                 {"batch_size", o.batch_size},
           {"train_pairs", o.train_pairs}};
}

void from_json(const json& j, SweepOptions& o) {
  if (!j.is_object()) throw ConfigError("sweep config: expected an object");
  static const char* known[] = {"task", "value_len", "grid", "samples_per_point", "seeds", "batch_size", "train_pairs"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return it.key() == k; }) ==
        std::end(known)) {
      throw ConfigError("sweep config: unknown key '" + it.key() + "'");
    }
  }
  SweepOptions d;
  const auto field = [&](const char* key, auto& out) {
    if (!j.contains(key)) return;
    try {
      out = j.at(key).get<std::decay_t<decltype(out)>>();
    } catch (const json::exception&) {
      throw ConfigError(std::string("sweep config: field '") + key + "' has the wrong type");
    }
  };
  std::string task = tasks::task_name(d.task);
  field("task", task);
  d.task = tasks::parse_task(task);
  field("value_len", d.value_len);
  field("grid", d.grid);
  field("samples_per_point", d.samples_per_point);
  field("seeds", d.seeds);
  field("batch_size", d.batch_size);
  field("train_pairs", d.train_pairs);
  o = std::move(d);
}

json to_json(const SweepReport& r) {
  json points = json::array();
  for (const auto& p : r.points) {
    points.push_back({{"n_pairs", p.n_pairs},
                      {"samples", p.samples},
                      {"em", p.em},
                      {"em_std", p.em_std},
                      {"estimated_k", p.estimated_k},
                      {"k_std", p.k_std},
                      {"raw_k", p.raw_k},
                      {"clamped", p.clamped},
                      {"em_per_seed", p.em_per_seed},
                      {"k_per_seed", p.k_per_seed}});
  }
  return json{{"model", r.model_id},
              {"task", tasks::task_name(r.task)},
              {"train_pairs", r.train_pairs},
              {"generalization_factor", r.generalization_factor},
              {"warnings", r.warnings},
              {"points", points}};
}

namespace {

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(6) << std::fixed << x;
  return os.str();
}

}  // namespace

void write_sweep_csv(std::ostream& os, const std::vector<SweepReport>& reports) {
  os << "model,task,n_pairs,seed,samples,em,estimated_k\n";
  for (const auto& r : reports) {
    for (const auto& p : r.points) {
      for (std::size_t s = 0; s < p.em_per_seed.size(); ++s) {
        os << r.model_id << ',' << tasks::task_name(r.task) << ',' << p.n_pairs << ',' << s << ',' << p.samples
           << ',' << fmt(p.em_per_seed[s]) << ',' << fmt(p.k_per_seed[s]) << '\n';
      }
    }
  }
}

namespace {

const SweepReport* slot(const std::map<std::string, std::optional<SweepReport>>& reports, const std::string& name) {
  auto it = reports.find(name);
  return it == reports.end() || !it->second ? nullptr : &*it->second;
}

}  // namespace

json ablation_verdicts(const std::map<std::string, std::optional<SweepReport>>& reports) {
  json out = json::object();
  json missing = json::array();
  for (const char* name : {"armt", "armt_no_gamma", "rmt", "prmt"}) {
    if (!slot(reports, name)) missing.push_back(name);
  }
  out["missing"] = missing;

  // Gamma claim: armt beats armt_no_gamma at every shared grid point at least
  // twice the training length.
  {
    json v = {{"claim", "armt em > armt_no_gamma em at >= 2x training length"}};
    const SweepReport* a = slot(reports, "armt");
    const SweepReport* b = slot(reports, "armt_no_gamma");
    if (!a || !b) {
      v["status"] = "unavailable";
    } else {
      json points = json::array();
      bool pass = true;
      for (const auto& p : a->points) {
        if (a->train_pairs == 0 || p.n_pairs < 2 * a->train_pairs) continue;
        const EvalPoint* q = b->at(p.n_pairs);
        if (!q) continue;
        const double gap = p.em - q->em;
        points.push_back({{"n_pairs", p.n_pairs}, {"armt", p.em}, {"armt_no_gamma", q->em}, {"gap", gap}});
        pass = pass && gap > 0.0;
      }
      v["points"] = points;
      v["status"] = points.empty() ? "unavailable" : (pass ? "pass" : "fail");
    }
    out["gamma_extrapolation"] = v;
  }

  // Capacity claim, remember task only: armt estimated_k above rmt and prmt at
  // the largest shared point.
  {
    json v = {{"claim", "armt estimated_k > rmt and > prmt on remember at max grid point"}};
    const SweepReport* a = slot(reports, "armt");
    const SweepReport* r = slot(reports, "rmt");
    const SweepReport* p = slot(reports, "prmt");
    if (!a || !r || !p || a->points.empty() || a->task != tasks::Task::remember) {
      v["status"] = "unavailable";
    } else {
      const EvalPoint& top = a->points.back();
      const EvalPoint* rt = r->at(top.n_pairs);
      const EvalPoint* pt = p->at(top.n_pairs);
      if (!rt || !pt) {
        v["status"] = "unavailable";
      } else {
        const double combined = std::sqrt(rt->k_std * rt->k_std + pt->k_std * pt->k_std);
        v["n_pairs"] = top.n_pairs;
        v["armt"] = top.estimated_k;
        v["rmt"] = rt->estimated_k;
        v["prmt"] = pt->estimated_k;
        v["prmt_minus_rmt"] = pt->estimated_k - rt->estimated_k;
        v["combined_std"] = combined;
        v["prmt_within_rmt"] = pt->estimated_k <= rt->estimated_k + combined;
        const bool pass = top.estimated_k > rt->estimated_k && top.estimated_k > pt->estimated_k;
        v["status"] = pass ? "pass" : "fail";
      }
    }
    out["remember_capacity"] = v;
  }
  return out;
}

Comparison compare_ablation(const std::map<std::string, std::string>& checkpoint_paths,
                            const SweepOptions& options) {
  Comparison out;
  for (const char* name : {"armt", "armt_no_gamma", "rmt", "prmt"}) out.reports[name] = std::nullopt;
  for (const auto& [name, path] : checkpoint_paths) {
    if (path.empty()) continue;
    if (models::read_checkpoint_precision(path) == "float64") {
      auto loaded = models::load_checkpoint<double>(path);
      out.reports[name] = sweep(loaded.model, name, options);
    } else {
      auto loaded = models::load_checkpoint<float>(path);
      out.reports[name] = sweep(loaded.model, name, options);
    }
  }
  out.verdicts = ablation_verdicts(out.reports);
  return out;
}

void write_comparison_csv(std::ostream& os, const Comparison& comparison) {
  os << "model,task,n_pairs,em,em_std,estimated_k,k_std,delta_em_vs_armt,delta_k_vs_armt\n";
  const SweepReport* base = slot(comparison.reports, "armt");
  for (const auto& [name, report] : comparison.reports) {
    if (!report) {
      os << name << ",missing,,,,,,,\n";
      continue;
    }
    for (const auto& p : report->points) {
      os << name << ',' << tasks::task_name(report->task) << ',' << p.n_pairs << ',' << fmt(p.em) << ','
         << fmt(p.em_std) << ',' << fmt(p.estimated_k) << ',' << fmt(p.k_std) << ',';
      const EvalPoint* b = base ? base->at(p.n_pairs) : nullptr;
      if (b) os << fmt(p.em - b->em) << ',' << fmt(p.estimated_k - b->estimated_k);
      else os << ',';
      os << '\n';
    }
  }
}

template std::vector<Tokens> predict_answers<float>(models::Model<float>&, const std::vector<tasks::RetrievalSample>&,
                                                    std::size_t);
template std::vector<Tokens> predict_answers<double>(models::Model<double>&,
                                                     const std::vector<tasks::RetrievalSample>&, std::size_t);
template SweepReport sweep<float>(models::Model<float>&, const std::string&, const SweepOptions&);
template SweepReport sweep<double>(models::Model<double>&, const std::string&, const SweepOptions&);

}  // namespace armt::eval
