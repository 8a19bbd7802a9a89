#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kgcf/eval_harness.hpp"
#include "kgcf/kg_store.hpp"
#include "kgcf/label_engine.hpp"
#include "kgcf/path_scorer.hpp"
#include "kgcf/seq_filter.hpp"
#include "kgcf/serialize.hpp"

namespace kgcf {

enum class LabelBackendKind { kRuleOracle, kRemoteLlm, kReplayCache };
enum class ScorerBackendKind { kBuiltin, kRemote };
enum class EvalSetting { kFixed, kDiff };

[[nodiscard]] std::string_view to_string(LabelBackendKind k);
[[nodiscard]] std::string_view to_string(ScorerBackendKind k);
[[nodiscard]] std::string_view to_string(EvalSetting s);
[[nodiscard]] EvalSetting parse_eval_setting(std::string_view s);

/// What to do when a training set turns out to hold a single class.
enum class DegeneratePolicy { kError, kUntrained };

struct PipelineConfig {
  std::filesystem::path dataset_dir;
  Scenario scenario = Scenario::kTransductive;
  std::filesystem::path output_dir = "kgcf-out";

  // paths
  std::size_t max_len = 3;
  std::size_t per_relation = 200;
  std::size_t path_cap = 50;

  // label
  LabelBackendKind label_backend = LabelBackendKind::kRuleOracle;
  std::string rules;                   // inline rule spec, wins over rules_file
  std::filesystem::path rules_file;    // default: <dataset>/rules.txt
  double flip_rate = 0.0;
  std::uint64_t label_seed = 17;
  std::filesystem::path label_cache;   // default: <output>/label_cache.jsonl
  FailurePolicy failure_policy = FailurePolicy::kDrop;
  RemoteLlmConfig llm;

  // sc
  SeqTrainHyper sc;
  DegeneratePolicy sc_degenerate = DegeneratePolicy::kError;

  // plm
  FilterConfig filter;
  std::uint64_t plm_seed = 5;

  // scorer
  ScorerBackendKind scorer_backend = ScorerBackendKind::kBuiltin;
  RemoteScorer::Config remote_scorer;
  ScorerTrainHyper scorer;
  DegeneratePolicy scorer_degenerate = DegeneratePolicy::kError;

  // eval
  EvalSetting setting = EvalSetting::kFixed;
  std::size_t fixed_test_max_len = 3;
  std::size_t negatives = 49;
  std::uint64_t eval_seed = 2024;
  std::vector<int> ks{1, 3, 10};
  std::size_t max_queries = 0;
  bool test_filter = false;

  int jobs = 0;  // 0 = OpenMP default

  /// Test-time max path length: pinned in the fixed setting, equal to the
  /// training max_len in the diff setting.
  [[nodiscard]] std::size_t test_max_len() const;
  [[nodiscard]] std::filesystem::path resolved_rules_file() const;
  [[nodiscard]] std::filesystem::path resolved_label_cache() const;
  /// Throws ConfigError on out-of-range values or missing dataset files.
  void validate() const;
};

/// `section.key=value` override applied after the file.
struct ConfigOverride {
  std::string key;
  std::string value;
};

/// Reads a sectioned key/value file (TOML-style `[section]` and
/// `key = value`; quotes around values are stripped), applies overrides in
/// order, and fills defaults for everything else. Relative paths in the file
/// resolve against the file's directory; relative paths in overrides against
/// the working directory. Unknown keys are a ConfigError.
[[nodiscard]] PipelineConfig load_config(const std::filesystem::path& file,
                                         const std::vector<ConfigOverride>& overrides);

/// Parses "section.key=value".
[[nodiscard]] ConfigOverride parse_override(std::string_view text);

/// Full configuration as JSON, for manifests.
[[nodiscard]] json config_to_json(const PipelineConfig& config);

}  // namespace kgcf
