#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "kgcf/kg_store.hpp"
#include "kgcf/path_engine.hpp"
#include "kgcf/serialize.hpp"

namespace kgcf {

enum class Provenance { kLlm, kOracle, kCache };

[[nodiscard]] std::string_view to_string(Provenance p);
[[nodiscard]] Provenance parse_provenance(std::string_view s);

struct LabeledPath {
  InferencePath path;
  int label = 0;  // 0 or 1
  Provenance provenance = Provenance::kOracle;
  std::optional<std::string> raw_response;  // always set for kLlm
};

/// Per-path failure; the caller chooses whether to drop the path or abort.
struct LabelFailure {
  std::string reason;
  int attempts = 0;
};

using LabelOutcome = std::variant<LabeledPath, LabelFailure>;

/// Maps inference paths to rationality labels.
class LabelBackend {
 public:
  virtual ~LabelBackend() = default;

  /// Labels one group of paths that share a completion triplet. Returns one
  /// outcome per input, in input order.
  virtual std::vector<LabelOutcome> label_group(const Graph& graph,
                                                std::span<const InferencePath> paths) = 0;

  /// Labels many groups. The default runs them one after another; backends
  /// with I/O latency override this to overlap requests.
  virtual std::vector<std::vector<LabelOutcome>> label_groups(
      const Graph& graph, std::span<const std::vector<InferencePath>> groups);
};

/// Groups paths by completion triplet (preserving first-seen order), labels
/// each group, and reassembles the outcomes in input order.
[[nodiscard]] std::vector<LabelOutcome> label_paths(LabelBackend& backend, const Graph& graph,
                                                    std::span<const InferencePath> paths);

// ---------------------------------------------------------------------------
// Rule oracle

/// A rule body: the exact sequence of (relation, direction) steps a
/// trajectory must follow.
using RuleBody = std::vector<std::pair<RelationId, Direction>>;

struct RuleOracleConfig {
  std::map<RelationId, std::vector<RuleBody>> rules;
  /// Probability of flipping the label of a path that matches no rule body.
  double distractor_flip_rate = 0.0;
  std::uint64_t seed = 0;
};

/// Labels a path 1 iff its trajectory's step sequence equals a body of a rule
/// for the completion relation. Noise, when enabled, is a deterministic
/// function of (seed, path).
class RuleOracle final : public LabelBackend {
 public:
  explicit RuleOracle(RuleOracleConfig config) : config_(std::move(config)) {}

  [[nodiscard]] int label(const InferencePath& path) const;
  [[nodiscard]] bool matches_rule(const InferencePath& path) const;

  std::vector<LabelOutcome> label_group(const Graph& graph,
                                        std::span<const InferencePath> paths) override;

 private:
  RuleOracleConfig config_;
};

/// Parses rule specs of the form "head_rel <- rel_a, inv:rel_b ; head2 <- ...".
[[nodiscard]] std::map<RelationId, std::vector<RuleBody>> parse_rules(const Graph& graph,
                                                                      std::string_view spec);

// ---------------------------------------------------------------------------
// Replay cache

/// One line of the append-only label cache.
struct CacheRecord {
  std::string claim;
  std::string context;
  int label = 0;
  Provenance provenance = Provenance::kLlm;
  std::string raw_response;
  std::string prompt_hash;

  friend bool operator==(const CacheRecord&, const CacheRecord&) = default;
};

[[nodiscard]] json to_json(const CacheRecord& r);
[[nodiscard]] CacheRecord cache_record_from_json(const json& j);

/// Append-only JSON-lines store keyed by (claim, context). Appends are
/// serialised through one mutex and flushed per record.
class LabelCache {
 public:
  LabelCache() = default;
  /// Loads existing records (if the file exists) and appends new ones to it.
  explicit LabelCache(std::filesystem::path path);

  [[nodiscard]] std::optional<CacheRecord> find(const std::string& claim,
                                                const std::string& context) const;
  void append(const CacheRecord& record);
  [[nodiscard]] std::size_t size() const;

 private:
  static std::string key(const std::string& claim, const std::string& context);

  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, CacheRecord> records_;
};

/// Serves labels recorded by an earlier remote run; unseen paths fail closed.
class ReplayCacheBackend final : public LabelBackend {
 public:
  explicit ReplayCacheBackend(std::shared_ptr<const LabelCache> cache) : cache_(std::move(cache)) {}

  std::vector<LabelOutcome> label_group(const Graph& graph,
                                        std::span<const InferencePath> paths) override;

 private:
  std::shared_ptr<const LabelCache> cache_;
};

// ---------------------------------------------------------------------------
// Remote LLM

inline constexpr std::string_view kDefaultInstruction =
    "You are checking reasoning paths in a knowledge graph. For each numbered context, decide "
    "whether the facts in that context logically support the claim on their own.";

/// Prompt with the instruction, the claim once, then numbered contexts, and a
/// directive to answer one `<index>: yes|no` line per context. Paths must
/// share one completion triplet.
[[nodiscard]] std::string build_prompt(const Graph& graph, std::string_view instruction,
                                       std::span<const InferencePath> paths);

/// Parses `<index>: yes|no` lines (case-insensitive) for indices 1..count.
/// Missing or unparseable indices are nullopt.
[[nodiscard]] std::vector<std::optional<int>> parse_label_response(std::string_view response,
                                                                   std::size_t count);

struct RemoteLlmConfig {
  std::string base_url;  // e.g. https://api.example.com/v1
  std::string model = "gpt-4o-mini";
  std::string api_key_env = "KGCF_LLM_API_KEY";
  std::string instruction = std::string(kDefaultInstruction);
  int max_retries = 2;
  int max_in_flight = 4;
  double requests_per_second = 5.0;
  /// Approximate prompt budget (characters / 4); larger groups are split.
  std::size_t token_budget = 3000;
  std::chrono::seconds timeout{60};
};

/// Minimal token bucket: `acquire` blocks until a token is available.
class TokenBucket {
 public:
  TokenBucket(double rate_per_second, double burst);
  void acquire();

 private:
  std::mutex mu_;
  double rate_;
  double burst_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
};

/// OpenAI-compatible chat-completion client. Successful answers are appended
/// to the cache, when one is attached.
class RemoteLlmBackend final : public LabelBackend {
 public:
  RemoteLlmBackend(RemoteLlmConfig config, std::shared_ptr<LabelCache> cache);

  std::vector<LabelOutcome> label_group(const Graph& graph,
                                        std::span<const InferencePath> paths) override;
  std::vector<std::vector<LabelOutcome>> label_groups(
      const Graph& graph, std::span<const std::vector<InferencePath>> groups) override;

  /// Sends one prompt and returns the assistant message text. Throws
  /// BackendError on transport or HTTP failure.
  [[nodiscard]] std::string complete(const std::string& prompt);

 private:
  std::vector<LabelOutcome> label_chunk(const Graph& graph, std::span<const InferencePath> paths);

  RemoteLlmConfig config_;
  std::string api_key_;
  std::string host_;
  std::string path_prefix_;
  std::shared_ptr<LabelCache> cache_;
  TokenBucket bucket_;
};

// ---------------------------------------------------------------------------
// Algorithm 1: sequence-classifier dataset

/// A triplet chosen for labelling, with its enumerated paths.
struct ScSelection {
  Triplet triplet;
  std::vector<InferencePath> paths;
};

/// Walks the graph's triplets in sorted order, keeping at most
/// `per_relation` triplets per relation; each kept triplet's paths exclude
/// the triplet itself. Triplets without paths still count towards the cap.
[[nodiscard]] std::vector<ScSelection> select_sc_triplets(const Graph& graph, std::size_t max_len,
                                                          std::size_t per_relation,
                                                          std::size_t cap);

enum class FailurePolicy { kDrop, kAbort };

struct ScDataset {
  std::vector<LabeledPath> items;
  std::map<RelationId, std::size_t> per_relation_counts;
  std::size_t failed_paths = 0;
};

/// Labels a selection. With kAbort, the first per-path failure throws
/// BackendError; with kDrop, failed paths are skipped and counted.
[[nodiscard]] ScDataset label_selection(const Graph& graph, LabelBackend& backend,
                                        std::span<const ScSelection> selection,
                                        FailurePolicy policy = FailurePolicy::kDrop);

[[nodiscard]] ScDataset build_sc_dataset(const Graph& graph, LabelBackend& backend,
                                         std::size_t max_len, std::size_t per_relation,
                                         std::size_t cap,
                                         FailurePolicy policy = FailurePolicy::kDrop);

/// Training-relevant view of a dataset: {claim, context, label, path}.
/// Provenance and raw responses stay in the label log and cache, so a replay
/// rebuild serialises to the same bytes as the original remote build.
[[nodiscard]] std::vector<json> sc_dataset_records(const Graph& graph, const ScDataset& ds);
[[nodiscard]] std::vector<json> label_log_records(const Graph& graph, const ScDataset& ds);
[[nodiscard]] ScDataset sc_dataset_from_records(const Graph& graph, const std::vector<json>& records);

}  // namespace kgcf
