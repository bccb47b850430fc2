#pragma once

// Associative-retrieval datasets. A sample is a list of key-value pairs
// followed by a query for one key; each pair occupies its own segment,
//
//   k : v ,   k : v ,   ...   k - v
//
// and the model must produce the value after '-'. Remember keys are unique
// 3-token sequences; Rewrite keys are single tokens that may repeat, and the
// answer is the value written last.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "armt/models/model.hpp"

namespace armt::tasks {

enum class Task { remember, rewrite };

std::string task_name(Task t);
Task parse_task(const std::string& name);

namespace vocab {
inline constexpr int kValueCount = 16;  // tokens 0..15 are digits
inline constexpr int kColon = 16;
inline constexpr int kComma = 17;
inline constexpr int kDash = 18;
inline constexpr int kPad = 19;
inline constexpr std::size_t kSize = 20;

/// "0".."15", ":", ",", "-", "_".
std::string token_text(int token);
}  // namespace vocab

using Tokens = std::vector<int>;

struct RetrievalSample {
  Task task = Task::remember;
  std::uint64_t seed = 0;
  std::vector<std::pair<Tokens, Tokens>> pairs;
  Tokens query;
  Tokens answer;

  friend bool operator==(const RetrievalSample&, const RetrievalSample&) = default;
};

std::size_t key_length(Task t);

/// Number of distinct keys the generator can draw from.
std::size_t keyspace(Task t);

/// Value of the last pair whose key equals `query`; throws if absent.
Tokens resolve_answer(const std::vector<std::pair<Tokens, Tokens>>& pairs, const Tokens& query);

/// Throws ConfigError when n_pairs is zero or exceeds the unique-key space.
RetrievalSample gen_remember(std::size_t n_pairs, std::size_t value_len, std::uint64_t seed);
RetrievalSample gen_rewrite(std::size_t n_pairs, std::size_t value_len, std::uint64_t seed);
RetrievalSample generate(Task task, std::size_t n_pairs, std::size_t value_len, std::uint64_t seed);

struct SegmentedSample {
  std::vector<Tokens> segments;  // one "k : v ," segment per pair
  Tokens query_segment;          // "k - v"
  std::vector<double> mask;      // over query_segment, 1 on answer tokens
};

SegmentedSample render(const RetrievalSample& sample);

/// Inverse of render; throws ConfigError on malformed segments.
RetrievalSample parse(const SegmentedSample& rendered, Task task, std::uint64_t seed = 0);

/// Human-readable form, e.g. "3:9,3-9".
std::string to_text(const RetrievalSample& sample);

/// Longest segment a sample of this task and value length produces.
std::size_t segment_length(Task task, std::size_t value_len);

/// Model input for a batch of samples with equal pair counts. Every segment is
/// padded to segment_length(); the final segment carries next-token targets
/// and unit weights at the positions that predict answer tokens.
std::vector<models::SegmentBatch> make_batch(const std::vector<RetrievalSample>& samples);

/// Position in the query segment whose logits predict answer token j.
std::size_t answer_position(Task task, std::size_t j);

void to_json(nlohmann::json& j, const RetrievalSample& s);
void from_json(const nlohmann::json& j, RetrievalSample& s);

void write_jsonl(std::ostream& os, const std::vector<RetrievalSample>& samples);
std::vector<RetrievalSample> read_jsonl(std::istream& is);

}  // namespace armt::tasks
