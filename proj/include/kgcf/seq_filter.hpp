#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "kgcf/kg_store.hpp"
#include "kgcf/label_engine.hpp"
#include "kgcf/path_engine.hpp"

namespace kgcf {

/// Anything that assigns a rationality probability to a path.
class PathClassifier {
 public:
  virtual ~PathClassifier() = default;
  [[nodiscard]] virtual double classify(const InferencePath& path) const = 0;
};

struct SeqClassifierDims {
  std::size_t num_entities = 0;
  std::size_t num_relations = 0;
  std::size_t entity_dim = 32;
  std::size_t relation_dim = 32;
  std::size_t hidden_dim = 64;

  /// Width of one recurrence input: e_i ⊕ r_i ⊕ e_{i+1} ⊕ r_q.
  [[nodiscard]] std::size_t step_width() const { return 2 * entity_dim + 2 * relation_dim; }

  friend bool operator==(const SeqClassifierDims&, const SeqClassifierDims&) = default;
};

/// All trainable tensors. LSTM gates are stacked [input; forget; cell; output].
struct SeqClassifierParams {
  Eigen::MatrixXd entity;    // (|E| + 1) x d_e, last row = unknown entity
  Eigen::MatrixXd relation;  // 2|R| x d_r, inverse relations at |R| + r
  Eigen::MatrixXd gates;     // 4 d_h x (step_width + d_h)
  Eigen::VectorXd gate_bias; // 4 d_h
  Eigen::VectorXd head;      // d_h
  double head_bias = 0.0;

  void resize_like(const SeqClassifierDims& dims);
  void set_zero();
};

/// One recurrence step in handle space.
struct SeqStep {
  std::uint32_t from;
  std::uint32_t relation;  // signed relation index
  std::uint32_t to;
};

struct SeqExample {
  std::vector<SeqStep> steps;
  std::uint32_t query_relation = 0;
  int label = 0;
};

/// Recurrent path classifier: an LSTM runs over the trajectory steps with the
/// query relation appended to every input, and a logistic head reads the
/// final hidden state.
class SeqClassifier final : public PathClassifier {
 public:
  SeqClassifier() = default;
  /// Small random initialisation from `seed`; the head starts at zero.
  SeqClassifier(const SeqClassifierDims& dims, std::uint64_t seed);

  [[nodiscard]] const SeqClassifierDims& dims() const { return dims_; }
  [[nodiscard]] SeqClassifierParams& params() { return params_; }
  [[nodiscard]] const SeqClassifierParams& params() const { return params_; }

  /// Maps a path to handles. Entities at or beyond num_entities, or all of
  /// them when entity identities are switched off, use the unknown row.
  [[nodiscard]] SeqExample encode(const InferencePath& path) const;

  /// Off for graphs whose entity handles were not seen in training
  /// (inductive test graphs).
  void set_entities_known(bool known) { entities_known_ = known; }

  [[nodiscard]] double classify(const InferencePath& path) const override;
  /// Throws std::invalid_argument on an empty trajectory.
  [[nodiscard]] double probability(const SeqExample& example) const;
  [[nodiscard]] double logit(const SeqExample& example) const;

  /// Summed binary cross-entropy over `batch`; when `grad` is non-null it
  /// receives d(loss)/d(params), sized like params().
  double loss_and_gradient(std::span<const SeqExample> batch, SeqClassifierParams* grad) const;

  void round_to_float();
  void save(const std::filesystem::path& path) const;
  [[nodiscard]] static SeqClassifier load(const std::filesystem::path& path);

  friend bool operator==(const SeqClassifier& a, const SeqClassifier& b);

 private:
  SeqClassifierDims dims_;
  SeqClassifierParams params_;
  bool entities_known_ = true;
};

struct SeqTrainHyper {
  std::size_t epochs = 40;
  double learning_rate = 0.05;
  std::size_t batch_size = 16;
  std::uint64_t seed = 7;
  std::size_t entity_dim = 32;
  std::size_t relation_dim = 32;
  std::size_t hidden_dim = 64;
};

struct TrainLog {
  std::vector<double> epoch_loss;  // mean per-sample loss after each epoch
  double initial_loss = 0.0;       // mean per-sample loss before training
  double final_accuracy = 0.0;     // training accuracy at threshold 0.5
};

struct SeqTrainResult {
  SeqClassifier model;
  TrainLog log;
};

/// Mini-batch gradient descent on binary cross-entropy. Deterministic for a
/// fixed seed. Throws DegenerateDataError on single-class data and
/// TrainingError when the loss stops being finite.
[[nodiscard]] SeqTrainResult train_sc(const Graph& graph, const ScDataset& dataset,
                                      const SeqTrainHyper& hyper);

/// Same, on pre-encoded examples.
[[nodiscard]] SeqTrainResult train_sc(const SeqClassifierDims& dims,
                                      std::span<const SeqExample> examples,
                                      const SeqTrainHyper& hyper);

// ---------------------------------------------------------------------------
// Algorithm 2: scorer dataset

struct FilterConfig {
  double threshold = 0.5;
  std::size_t neg_num = 5;
  std::size_t max_len = 3;
  std::size_t path_cap = 50;
  bool disable_positive_filter = false;  // -pf
  bool disable_negative_filter = false;  // -nf
  bool anonymize_entities = false;       // -te
  /// Also draw neg_num corrupt heads per triplet, so the scorer sees wrong
  /// heads as well as wrong tails. Off by default (tails only).
  bool corrupt_heads = false;

  /// Throws ConfigError unless 0 < threshold < 1 and neg_num, max_len >= 1.
  void validate() const;
};

struct PlmItem {
  InferencePath path;
  bool label = false;
  PathText text;
};

struct PlmDataset {
  std::vector<PlmItem> items;
  /// Corrupt tails that could not be drawn because the entity pool ran out.
  std::size_t negative_shortfall = 0;
};

/// Corrupt tails for `t`: up to `count` distinct entities e != head with
/// (head, relation, e) not in the graph, uniformly without replacement.
[[nodiscard]] std::vector<EntityId> sample_corrupt_tails(const Graph& graph, const Triplet& t,
                                                         std::size_t count, std::uint64_t seed);

/// Corrupt heads for `t`: the mirror image of sample_corrupt_tails, with
/// e != tail and (e, relation, tail) not in the graph.
[[nodiscard]] std::vector<EntityId> sample_corrupt_heads(const Graph& graph, const Triplet& t,
                                                         std::size_t count, std::uint64_t seed);

/// Positive paths pass when classify > th and negative ones when classify <
/// th (strict both ways). Each triplet draws from its own RNG stream
/// seeded by (seed, triplet), so the result does not depend on scheduling.
[[nodiscard]] PlmDataset build_plm_dataset(const Graph& graph, const PathClassifier& classifier,
                                           const FilterConfig& config, std::uint64_t seed);

/// Single-threaded reference for build_plm_dataset.
[[nodiscard]] PlmDataset build_plm_dataset_serial(const Graph& graph,
                                                  const PathClassifier& classifier,
                                                  const FilterConfig& config, std::uint64_t seed);

/// {claim, context, label} records.
[[nodiscard]] std::vector<json> plm_dataset_records(const PlmDataset& ds);

}  // namespace kgcf
