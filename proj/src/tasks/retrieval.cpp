#include "armt/tasks/retrieval.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "armt/errors.hpp"
#include "armt/nn/rng.hpp"

namespace armt::tasks {

using nlohmann::json;

std::string task_name(Task t) { return t == Task::remember ? "remember" : "rewrite"; }

Task parse_task(const std::string& name) {
  if (name == "remember") return Task::remember;
  if (name == "rewrite") return Task::rewrite;
  throw ConfigError("unknown task: " + name);
}

std::string vocab::token_text(int token) {
  if (token >= 0 && token < kValueCount) return std::to_string(token);
  switch (token) {
    case kColon: return ":";
    case kComma: return ",";
    case kDash: return "-";
    case kPad: return "_";
  }
  throw ConfigError("token id outside vocabulary: " + std::to_string(token));
}

std::size_t key_length(Task t) { return t == Task::remember ? 3 : 1; }

std::size_t keyspace(Task t) {
  std::size_t n = 1;
  for (std::size_t i = 0; i < key_length(t); ++i) n *= vocab::kValueCount;
  return n;
}

Tokens resolve_answer(const std::vector<std::pair<Tokens, Tokens>>& pairs, const Tokens& query) {
  for (auto it = pairs.rbegin(); it != pairs.rend(); ++it) {
    if (it->first == query) return it->second;
  }
  throw ConfigError("query key does not occur in the sample");
}

namespace {

Tokens decode_key(std::size_t index, std::size_t len) {
  Tokens key(len);
  for (std::size_t i = len; i-- > 0;) {
    key[i] = static_cast<int>(index % vocab::kValueCount);
    index /= vocab::kValueCount;
  }
  return key;
}

Tokens random_value(Rng& rng, std::size_t len) {
  Tokens v(len);
  for (int& t : v) t = static_cast<int>(rng.uniform_int(vocab::kValueCount));
  return v;
}

void check_common(std::size_t n_pairs, std::size_t value_len) {
  if (n_pairs == 0) throw ConfigError("n_pairs must be positive");
  if (value_len == 0) throw ConfigError("value_len must be positive");
}

}  // namespace

RetrievalSample gen_remember(std::size_t n_pairs, std::size_t value_len, std::uint64_t seed) {
  check_common(n_pairs, value_len);
  const std::size_t space = keyspace(Task::remember);
  if (n_pairs > space) {
    throw ConfigError("remember: " + std::to_string(n_pairs) + " pairs exceed the " + std::to_string(space) +
                      " unique keys");
  }
  Rng rng(mix_seed({seed, 0x72656dULL}));
  // Partial Fisher-Yates over the key indices.
  std::vector<std::size_t> index(space);
  std::iota(index.begin(), index.end(), 0);
  RetrievalSample s;
  s.task = Task::remember;
  s.seed = seed;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const std::size_t j = i + rng.uniform_int(space - i);
    std::swap(index[i], index[j]);
    s.pairs.emplace_back(decode_key(index[i], key_length(Task::remember)), random_value(rng, value_len));
  }
  const auto& chosen = s.pairs[rng.uniform_int(n_pairs)];
  s.query = chosen.first;
  s.answer = chosen.second;
  return s;
}

RetrievalSample gen_rewrite(std::size_t n_pairs, std::size_t value_len, std::uint64_t seed) {
  check_common(n_pairs, value_len);
  Rng rng(mix_seed({seed, 0x727772ULL}));
  RetrievalSample s;
  s.task = Task::rewrite;
  s.seed = seed;
  std::vector<Tokens> distinct;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    Tokens key = decode_key(rng.uniform_int(keyspace(Task::rewrite)), key_length(Task::rewrite));
    if (std::find(distinct.begin(), distinct.end(), key) == distinct.end()) distinct.push_back(key);
    s.pairs.emplace_back(std::move(key), random_value(rng, value_len));
  }
  s.query = distinct[rng.uniform_int(distinct.size())];
  s.answer = resolve_answer(s.pairs, s.query);
  return s;
}

RetrievalSample generate(Task task, std::size_t n_pairs, std::size_t value_len, std::uint64_t seed) {
  return task == Task::remember ? gen_remember(n_pairs, value_len, seed) : gen_rewrite(n_pairs, value_len, seed);
}

SegmentedSample render(const RetrievalSample& sample) {
  SegmentedSample out;
  for (const auto& [key, value] : sample.pairs) {
    Tokens seg = key;
    seg.push_back(vocab::kColon);
    seg.insert(seg.end(), value.begin(), value.end());
    seg.push_back(vocab::kComma);
    out.segments.push_back(std::move(seg));
  }
  out.query_segment = sample.query;
  out.query_segment.push_back(vocab::kDash);
  out.mask.assign(out.query_segment.size(), 0.0);
  out.query_segment.insert(out.query_segment.end(), sample.answer.begin(), sample.answer.end());
  out.mask.resize(out.query_segment.size(), 1.0);
  return out;
}

namespace {

bool is_value(int t) { return t >= 0 && t < vocab::kValueCount; }

Tokens take_values(const Tokens& seg, std::size_t from, std::size_t to) {
  Tokens out(seg.begin() + static_cast<std::ptrdiff_t>(from), seg.begin() + static_cast<std::ptrdiff_t>(to));
  if (!std::all_of(out.begin(), out.end(), is_value)) throw ConfigError("parse: non-digit token in key or value");
  return out;
}

}  // namespace

RetrievalSample parse(const SegmentedSample& rendered, Task task, std::uint64_t seed) {
  const std::size_t klen = key_length(task);
  RetrievalSample s;
  s.task = task;
  s.seed = seed;
  for (const Tokens& seg : rendered.segments) {
    if (seg.size() < klen + 3 || seg[klen] != vocab::kColon || seg.back() != vocab::kComma) {
      throw ConfigError("parse: malformed pair segment");
    }
    s.pairs.emplace_back(take_values(seg, 0, klen), take_values(seg, klen + 1, seg.size() - 1));
  }
  const Tokens& q = rendered.query_segment;
  if (q.size() < klen + 2 || q[klen] != vocab::kDash) throw ConfigError("parse: malformed query segment");
  std::size_t end = q.size();
  while (end > klen + 1 && q[end - 1] == vocab::kPad) --end;
  s.query = take_values(q, 0, klen);
  s.answer = take_values(q, klen + 1, end);
  return s;
}

std::string to_text(const RetrievalSample& sample) {
  const SegmentedSample r = render(sample);
  std::string text;
  for (const Tokens& seg : r.segments) {
    for (int t : seg) text += vocab::token_text(t);
  }
  for (int t : r.query_segment) text += vocab::token_text(t);
  return text;
}

std::size_t segment_length(Task task, std::size_t value_len) { return key_length(task) + value_len + 2; }

std::size_t answer_position(Task task, std::size_t j) { return key_length(task) + j; }

std::vector<models::SegmentBatch> make_batch(const std::vector<RetrievalSample>& samples) {
  if (samples.empty()) throw ConfigError("make_batch: no samples");
  const Task task = samples[0].task;
  const std::size_t n_pairs = samples[0].pairs.size();
  const std::size_t value_len = samples[0].answer.size();
  const std::size_t len = segment_length(task, value_len);
  const std::size_t batch = samples.size();
  for (const auto& s : samples) {
    if (s.task != task || s.pairs.size() != n_pairs || s.answer.size() != value_len) {
      throw ConfigError("make_batch: samples differ in task, pair count or value length");
    }
  }
  std::vector<models::SegmentBatch> out(n_pairs + 1);
  for (auto& seg : out) {
    seg.batch = batch;
    seg.len = len;
    seg.tokens.assign(batch * len, vocab::kPad);
    seg.targets.assign(batch * len, vocab::kPad);
    seg.weights.assign(batch * len, 0.0);
  }
  for (std::size_t b = 0; b < batch; ++b) {
    const SegmentedSample r = render(samples[b]);
    for (std::size_t i = 0; i <= n_pairs; ++i) {
      const Tokens& src = i < n_pairs ? r.segments[i] : r.query_segment;
      if (src.size() > len) throw ConfigError("make_batch: segment longer than segment_length");
      std::copy(src.begin(), src.end(), out[i].tokens.begin() + static_cast<std::ptrdiff_t>(b * len));
    }
    auto& q = out[n_pairs];
    for (std::size_t j = 0; j < value_len; ++j) {
      const std::size_t pos = b * len + answer_position(task, j);
      q.targets[pos] = samples[b].answer[j];
      q.weights[pos] = 1.0;
    }
  }
  return out;
}

void to_json(json& j, const RetrievalSample& s) {
  json pairs = json::array();
  for (const auto& [k, v] : s.pairs) pairs.push_back(json::array({k, v}));
  j = json{{"task", task_name(s.task)}, {"seed", s.seed}, {"pairs", pairs}, {"query", s.query}, {"answer", s.answer}};
}

void from_json(const json& j, RetrievalSample& s) {
  try {
    s.task = parse_task(j.at("task").get<std::string>());
    s.seed = j.at("seed").get<std::uint64_t>();
    s.pairs.clear();
    for (const auto& p : j.at("pairs")) s.pairs.emplace_back(p.at(0).get<Tokens>(), p.at(1).get<Tokens>());
    s.query = j.at("query").get<Tokens>();
    s.answer = j.at("answer").get<Tokens>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("dataset record: ") + e.what());
  }
}

void write_jsonl(std::ostream& os, const std::vector<RetrievalSample>& samples) {
  for (const auto& s : samples) os << json(s).dump() << '\n';
}

std::vector<RetrievalSample> read_jsonl(std::istream& is) {
  std::vector<RetrievalSample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line).get<RetrievalSample>());
    } catch (const json::exception& e) {
      throw ConfigError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace armt::tasks
