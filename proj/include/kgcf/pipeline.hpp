#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kgcf/config.hpp"
#include "kgcf/eval_harness.hpp"
#include "kgcf/kg_store.hpp"

namespace kgcf {

enum class Stage { kPaths, kLabel, kTrainSc, kBuildPlm, kTrainScorer, kEval };

inline constexpr std::array<Stage, 6> kStages{Stage::kPaths,    Stage::kLabel,       Stage::kTrainSc,
                                              Stage::kBuildPlm, Stage::kTrainScorer, Stage::kEval};

/// Subcommand name of a stage ("paths", "label", ...).
[[nodiscard]] std::string_view to_string(Stage s);

/// Runs pipeline stages against an output directory. Every stage writes its
/// artifacts plus `<stage>/stage.json`, which records the stage's cumulative
/// config hash and the SHA-256 of each artifact. A stage refuses to start when
/// its predecessor's record is missing, was produced under a different
/// configuration, or no longer matches the files on disk, unless forced.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config, bool force = false);

  void paths();
  void label();
  void train_sc();
  void build_plm();
  void train_scorer();
  MetricsReport eval();
  /// All stages in order.
  MetricsReport run_all();
  void run(Stage stage);

  [[nodiscard]] const PipelineConfig& config() const { return config_; }
  [[nodiscard]] std::filesystem::path stage_dir(Stage s) const;
  /// Cumulative hash of the configuration up to and including `s`.
  [[nodiscard]] std::string stage_hash(Stage s) const;

 private:
  const Dataset& dataset();
  void require(Stage upstream) const;
  void record(Stage s, const json& inputs, const std::vector<std::string>& outputs, json extra = {}) const;
  [[nodiscard]] json stage_params(Stage s) const;

  PipelineConfig config_;
  bool force_;
  std::optional<Dataset> dataset_;
  std::string dataset_hash_;
};

struct SweepRow {
  std::size_t train_max_len = 0;
  std::size_t test_max_len = 0;
  MetricsReport report;
};

/// Runs the whole pipeline once per training max_len, each in
/// `<output>/<setting>_m<m>`, and writes `sweep_<setting>.json` and
/// `sweep_<setting>.txt` with one row per length.
std::vector<SweepRow> sweep_maxlen(const PipelineConfig& config, const std::vector<std::size_t>& lengths,
                                   EvalSetting setting, bool force);

[[nodiscard]] std::string sweep_to_table(const std::vector<SweepRow>& rows, EvalSetting setting);

}  // namespace kgcf
