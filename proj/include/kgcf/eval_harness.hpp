#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kgcf/error.hpp"
#include "kgcf/kg_store.hpp"
#include "kgcf/path_scorer.hpp"
#include "kgcf/serialize.hpp"

namespace kgcf {

enum class PredictionDirection { kHead, kTail };

[[nodiscard]] std::string_view to_string(PredictionDirection d);

/// One ranking problem: the gold entity among sampled corruptions of the
/// missing side of a test triplet.
struct RankingTask {
  Triplet test;
  PredictionDirection direction = PredictionDirection::kTail;
  EntityId gold{};
  std::vector<EntityId> candidates;  // gold first, then the sampled negatives
  std::size_t shortfall = 0;         // negatives requested but not available

  /// The triplet obtained by filling the missing side with `candidate`.
  [[nodiscard]] Triplet completion(EntityId candidate) const;
};

/// Samples `count` negatives uniformly without replacement from the entities
/// of `graph` other than the fixed endpoint, rejecting any entity whose
/// completed triplet is in `known`. Fewer are returned (with the shortfall
/// recorded) when the pool runs out; an empty pool is an Error.
[[nodiscard]] RankingTask sample_candidates(const Graph& graph, const TripletSet& known,
                                            const Triplet& test, PredictionDirection direction,
                                            std::size_t count, std::uint64_t seed);

struct RankResult {
  std::size_t rank = 0;  // 1-based rank of gold under the pessimistic tie rule
  std::vector<CompletionScore> ordered;
};

/// rank = 1 + |{c != gold : score(c) >= score(gold)}| with no-path below all
/// numeric scores (and tied with other no-path entries). `ordered` is sorted
/// by score, descending, with tied gold placed after its ties.
[[nodiscard]] RankResult rank_and_score(const RankingTask& task,
                                        const std::map<EntityId, CompletionScore>& scores);

struct DirectionMetrics {
  std::map<int, double> hits;  // k -> Hits@k
  double mrr = 0.0;
  std::size_t n_tasks = 0;
  std::size_t no_path_gold = 0;
};

/// Hits@k and MRR of 1-based ranks. Throws Error on an empty list or a rank
/// below one.
[[nodiscard]] DirectionMetrics compute_metrics(std::span<const std::size_t> ranks,
                                               std::span<const int> ks);

struct MetricsReport {
  Scenario scenario = Scenario::kTransductive;
  DirectionMetrics head;
  DirectionMetrics tail;
  DirectionMetrics average;  // arithmetic mean of head and tail
};

[[nodiscard]] DirectionMetrics average_metrics(const DirectionMetrics& a, const DirectionMetrics& b);

[[nodiscard]] json report_to_json(const MetricsReport& report);
[[nodiscard]] std::string report_to_table(const MetricsReport& report);

struct EvalConfig {
  std::size_t max_len = 3;
  std::size_t path_cap = 50;
  std::size_t negatives = 49;
  std::uint64_t seed = 2024;
  std::vector<int> ks{1, 3, 10};
  std::size_t max_queries = 0;  // 0 = every test triplet
  bool anonymize_entities = false;
  const PathClassifier* test_filter = nullptr;
  double threshold = 0.5;
};

struct TaskOutcome {
  RankingTask task;
  RankResult result;
  std::string error;  // non-empty when scoring failed
};

struct TaskError {
  Triplet test;
  PredictionDirection direction;
  std::string message;
};

/// Raised when any task failed; carries the per-task error log.
class EvaluationAborted : public BackendError {
 public:
  explicit EvaluationAborted(std::vector<TaskError> errors);
  [[nodiscard]] const std::vector<TaskError>& errors() const { return errors_; }

 private:
  std::vector<TaskError> errors_;
};

/// Builds head and tail tasks for the first `max_queries` test triplets.
[[nodiscard]] std::vector<RankingTask> build_tasks(const Dataset& dataset, const EvalConfig& config);

/// Reference: every candidate of every task scored in order.
[[nodiscard]] std::vector<TaskOutcome> evaluate_tasks_serial(const PathScorer& scorer,
                                                             const Graph& graph,
                                                             std::span<const RankingTask> tasks,
                                                             const EvalConfig& config);

/// OpenMP over (task, candidate) pairs; same output as the serial reference.
[[nodiscard]] std::vector<TaskOutcome> evaluate_tasks_parallel(const PathScorer& scorer,
                                                               const Graph& graph,
                                                               std::span<const RankingTask> tasks,
                                                               const EvalConfig& config);

/// Folds outcomes into per-direction metrics. Throws EvaluationAborted if
/// any task carries an error.
[[nodiscard]] MetricsReport summarize(Scenario scenario, std::span<const TaskOutcome> outcomes,
                                      std::span<const int> ks);

/// Full sweep over the dataset's test triplets in both directions.
[[nodiscard]] MetricsReport run_evaluation(const Dataset& dataset, const PathScorer& scorer,
                                           const EvalConfig& config);

}  // namespace kgcf
