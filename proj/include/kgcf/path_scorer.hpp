#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "kgcf/kg_store.hpp"
#include "kgcf/path_engine.hpp"
#include "kgcf/seq_filter.hpp"

namespace kgcf {

/// Lower-cases, then splits on whitespace; runs of alphanumerics (and
/// non-ASCII bytes) are tokens and every other character is its own token.
[[nodiscard]] std::vector<std::string> tokenize(std::string_view text);

/// Scores (claim, context) pairs with a probability in [0, 1].
class PathScorer {
 public:
  virtual ~PathScorer() = default;
  /// One score per pair, in order. Throws BackendError for remote failures.
  [[nodiscard]] virtual std::vector<double> score_batch(std::span<const PathText> pairs) const = 0;
  [[nodiscard]] double score(const std::string& claim, const std::string& context) const;
};

struct TextScorerDims {
  std::size_t vocab_size = 1;  // includes the unknown token at index 0
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 64;

  friend bool operator==(const TextScorerDims&, const TextScorerDims&) = default;
};

struct TextScorerParams {
  Eigen::MatrixXd embedding;  // V x D
  Eigen::MatrixXd segment;    // 2 x D: row 0 claim, row 1 context
  Eigen::MatrixXd hidden;     // H x 2D
  Eigen::VectorXd hidden_bias;
  Eigen::VectorXd head;       // H
  double head_bias = 0.0;

  void resize_like(const TextScorerDims& dims);
  void set_zero();
};

/// A tokenised pair: token ids of both segments.
struct EncodedPair {
  std::vector<std::uint32_t> claim;
  std::vector<std::uint32_t> context;
  int label = 0;
  double weight = 1.0;  // per-example loss weight
};

/// Built-in two-segment scorer: segment-marked token embeddings are
/// mean-pooled per segment, concatenated, passed through one tanh layer and
/// a logistic head. Inference is stateless and safe to call concurrently.
class BuiltinScorer final : public PathScorer {
 public:
  BuiltinScorer() = default;
  BuiltinScorer(std::vector<std::string> vocabulary, std::size_t embed_dim, std::size_t hidden_dim,
                std::uint64_t seed);

  /// Vocabulary from the given texts, in order of first appearance.
  [[nodiscard]] static std::vector<std::string> build_vocabulary(std::span<const PathText> texts);

  [[nodiscard]] const TextScorerDims& dims() const { return dims_; }
  [[nodiscard]] TextScorerParams& params() { return params_; }
  [[nodiscard]] const TextScorerParams& params() const { return params_; }
  [[nodiscard]] const std::vector<std::string>& vocabulary() const { return vocabulary_; }

  [[nodiscard]] EncodedPair encode(const PathText& pair) const;
  [[nodiscard]] double logit(const EncodedPair& pair) const;
  [[nodiscard]] double probability(const EncodedPair& pair) const;
  [[nodiscard]] std::vector<double> score_batch(std::span<const PathText> pairs) const override;

  /// Summed (weighted) binary cross-entropy; gradient written to `grad` when
  /// non-null.
  double loss_and_gradient(std::span<const EncodedPair> batch, TextScorerParams* grad) const;

  void round_to_float();
  void save(const std::filesystem::path& path) const;
  [[nodiscard]] static BuiltinScorer load(const std::filesystem::path& path);

  friend bool operator==(const BuiltinScorer& a, const BuiltinScorer& b);

 private:
  void index_vocabulary();

  TextScorerDims dims_;
  TextScorerParams params_;
  std::vector<std::string> vocabulary_;
  std::unordered_map<std::string, std::uint32_t> lookup_;
};

struct ScorerTrainHyper {
  std::size_t epochs = 8;
  double learning_rate = 0.1;
  std::size_t batch_size = 16;
  std::uint64_t seed = 11;
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 64;
  /// Weight each class by n / (2 n_class) so both classes carry equal total
  /// weight. Alg. 2 yields far more negatives than positives.
  bool balance_classes = true;
};

struct ScorerTrainResult {
  BuiltinScorer model;
  TrainLog log;
};

/// Trains on labelled text pairs (label = the triplet exists in the graph).
/// Throws DegenerateDataError on single-class data, TrainingError on NaN.
[[nodiscard]] ScorerTrainResult train_scorer(std::span<const PathText> texts,
                                             std::span<const int> labels,
                                             const ScorerTrainHyper& hyper);
[[nodiscard]] ScorerTrainResult train_scorer(const PlmDataset& dataset,
                                             const ScorerTrainHyper& hyper);

/// Client for an external scoring service (POST /score, POST /train,
/// GET /health).
class RemoteScorer final : public PathScorer {
 public:
  struct Config {
    std::string endpoint;  // e.g. http://127.0.0.1:8080
    std::chrono::seconds timeout{30};
    std::size_t max_batch = 256;
  };

  explicit RemoteScorer(Config config) : config_(std::move(config)) {}

  [[nodiscard]] std::vector<double> score_batch(std::span<const PathText> pairs) const override;
  /// Asks the service to fine-tune on a JSON-lines dataset; returns the job id.
  [[nodiscard]] std::string train(const std::filesystem::path& dataset) const;
  /// True when the service reports ready (HTTP 200).
  [[nodiscard]] bool healthy() const;

 private:
  Config config_;
};

/// Score of one completion under the max rule. `score` is empty for the
/// no-path case, which ranks below every numeric score.
struct CompletionScore {
  EntityId candidate{};
  std::optional<double> score;
  std::optional<InferencePath> best_path;

  [[nodiscard]] bool no_path() const { return !score.has_value(); }
};

/// Strict "ranks above": numeric beats no-path, otherwise larger wins.
[[nodiscard]] bool ranks_above(const std::optional<double>& a, const std::optional<double>& b);
/// "At least as good": the comparison used by the pessimistic tie rule.
[[nodiscard]] bool ranks_at_least(const std::optional<double>& a, const std::optional<double>& b);

struct CompletionOptions {
  std::size_t max_len = 3;
  std::size_t path_cap = 50;
  bool anonymize_entities = false;
  /// Optional test-time filter; paths with classify <= threshold are dropped.
  const PathClassifier* classifier = nullptr;
  double threshold = 0.5;
};

/// Enumerates the completion's paths (never using the completion edge),
/// scores each, and keeps the maximum with its first arg-max path.
[[nodiscard]] CompletionScore score_completion(const PathScorer& scorer, const Graph& graph,
                                               const Triplet& completion,
                                               const CompletionOptions& options,
                                               EntityId candidate);

}  // namespace kgcf
