// kgcf: command-line front end for the KG-CF pipeline.

#include <iostream>
#include <string>
#include <vector>

#include <omp.h>

#include <CLI11.hpp>

#include "kgcf/config.hpp"
#include "kgcf/error.hpp"
#include "kgcf/pipeline.hpp"
#include "kgcf/synthetic.hpp"

namespace {

struct CommonOptions {
  std::string config;
  std::vector<std::string> sets;
  std::string data;
  std::string out;
  std::string scenario;
  std::size_t max_len = 0;
  std::vector<std::string> ablate;
  int jobs = -1;
  bool force = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config, "Pipeline config file (sectioned key = value)");
  cmd->add_option("--set", o.sets, "Override a config key, e.g. --set plm.threshold=0.4 (repeatable)");
  cmd->add_option("--data", o.data, "Dataset directory (dataset.dir)");
  cmd->add_option("--out", o.out, "Output directory (output.dir)");
  cmd->add_option("--scenario", o.scenario, "transductive or inductive (dataset.scenario)")
      ->check(CLI::IsMember({"transductive", "inductive"}));
  cmd->add_option("--max-len", o.max_len, "Training max path length m (paths.max_len)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--ablate", o.ablate, "Ablation: pf, nf or te (repeatable)")
      ->check(CLI::IsMember({"pf", "nf", "te"}));
  cmd->add_option("--jobs", o.jobs, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  cmd->add_flag("--force", o.force, "Use upstream artifacts even if their config hash does not match");
}

kgcf::PipelineConfig resolve(const CommonOptions& o) {
  std::vector<kgcf::ConfigOverride> overrides;
  for (const auto& s : o.sets) overrides.push_back(kgcf::parse_override(s));
  // Dedicated flags win over --set and the file.
  if (!o.data.empty()) overrides.push_back({"dataset.dir", o.data});
  if (!o.out.empty()) overrides.push_back({"output.dir", o.out});
  if (!o.scenario.empty()) overrides.push_back({"dataset.scenario", o.scenario});
  if (o.max_len > 0) overrides.push_back({"paths.max_len", std::to_string(o.max_len)});
  if (!o.ablate.empty()) {
    std::string joined;
    for (const auto& a : o.ablate) joined += (joined.empty() ? "" : ",") + a;
    overrides.push_back({"plm.ablate", joined});
  }
  if (o.jobs >= 0) overrides.push_back({"run.jobs", std::to_string(o.jobs)});
  auto config = kgcf::load_config(o.config, overrides);
  if (config.jobs > 0) omp_set_num_threads(config.jobs);
  return config;
}

std::vector<std::size_t> parse_lengths(const std::string& text) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto comma = text.find(',', start);
    const auto item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    try {
      std::size_t used = 0;
      const auto v = std::stoul(item, &used);
      if (used != item.size() || v == 0) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw kgcf::ConfigError("--lengths expects positive integers like 1,2,3; got '" + text + "'");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (out.empty()) throw kgcf::ConfigError("--lengths is empty");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"KG-CF: LLM-filtered path context for knowledge-graph completion"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  CommonOptions common;
  struct StageCmd {
    kgcf::Stage stage;
    const char* name;
    const char* help;
  };
  const StageCmd stage_cmds[] = {
      {kgcf::Stage::kPaths, "paths", "Select training triplets and enumerate their paths"},
      {kgcf::Stage::kLabel, "label", "Label paths with the configured backend"},
      {kgcf::Stage::kTrainSc, "train-sc", "Train the sequence classifier"},
      {kgcf::Stage::kBuildPlm, "build-plm", "Build the filtered scorer dataset"},
      {kgcf::Stage::kTrainScorer, "train-scorer", "Train the path scorer"},
      {kgcf::Stage::kEval, "eval", "Rank test candidates and write the metrics report"},
  };
  std::vector<std::pair<CLI::App*, kgcf::Stage>> stage_apps;
  for (const auto& s : stage_cmds) {
    auto* cmd = app.add_subcommand(s.name, s.help);
    add_common(cmd, common);
    stage_apps.emplace_back(cmd, s.stage);
  }

  auto* run_all = app.add_subcommand("run-all", "Run every stage in order");
  add_common(run_all, common);

  auto* sweep = app.add_subcommand("sweep-maxlen", "Rerun the pipeline for several training max lengths");
  add_common(sweep, common);
  std::string lengths = "1,2,3";
  std::string setting = "fixed";
  sweep->add_option("--lengths", lengths, "Comma-separated training max lengths")->capture_default_str();
  sweep->add_option("--setting", setting, "fixed (test length 3) or diff (test length = training length)")
      ->check(CLI::IsMember({"fixed", "diff"}))
      ->capture_default_str();

  auto* gen = app.add_subcommand("generate-synthetic", "Write a synthetic compositional KG dataset");
  kgcf::SyntheticConfig syn;
  std::string gen_out;
  gen->add_option("--out", gen_out, "Directory to write")->required();
  gen->add_option("--seed", syn.seed)->capture_default_str();
  gen->add_option("--people", syn.people)->capture_default_str();
  gen->add_option("--cities", syn.cities)->capture_default_str();
  gen->add_option("--countries", syn.countries)->capture_default_str();
  gen->add_option("--companies", syn.companies)->capture_default_str();
  gen->add_option("--distractor-rate", syn.distractor_rate)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  gen->add_option("--test-queries", syn.test_queries)->capture_default_str();
  gen->add_option("--valid-queries", syn.valid_queries)->capture_default_str();
  gen->add_flag("--inductive", syn.inductive, "Draw test queries from a second, disjoint world");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(kgcf::ExitCode::kUsage);
  }

  try {
    if (gen->parsed()) {
      const auto s = kgcf::generate_synthetic(syn, gen_out);
      std::cout << "wrote " << gen_out << ": " << s.entities << " entities, " << s.train << " train, " << s.valid
                << " valid, " << s.test << " test";
      if (syn.inductive) std::cout << ", " << s.test_graph << " test-graph";
      std::cout << " triplets (" << s.distractors << " distractor edges)\n";
      return 0;
    }
    const auto config = resolve(common);
    if (sweep->parsed()) {
      const auto rows = kgcf::sweep_maxlen(config, parse_lengths(lengths), kgcf::parse_eval_setting(setting),
                                           common.force);
      std::cout << kgcf::sweep_to_table(rows, kgcf::parse_eval_setting(setting));
      return 0;
    }
    kgcf::Pipeline pipeline(config, common.force);
    if (run_all->parsed()) {
      std::cout << kgcf::report_to_table(pipeline.run_all());
      return 0;
    }
    for (const auto& [cmd, stage] : stage_apps) {
      if (!cmd->parsed()) continue;
      if (stage == kgcf::Stage::kEval) {
        std::cout << kgcf::report_to_table(pipeline.eval());
      } else {
        pipeline.run(stage);
      }
    }
    return 0;
  } catch (const kgcf::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(kgcf::ExitCode::kUsage);
  }
}
