#include <doctest.h>

#include "kgcf/config.hpp"
#include "kgcf/error.hpp"
#include "kgcf/pipeline.hpp"
#include "kgcf/synthetic.hpp"
#include "test_support.hpp"

using namespace kgcf;
using kgcf::testing::TempDir;
using kgcf::testing::slurp;

namespace {

PipelineConfig small_config(const TempDir& dir, const std::vector<ConfigOverride>& extra = {}) {
  if (!std::filesystem::exists(dir / "data" / "train.txt")) {
    SyntheticConfig sc;
    sc.people = 40;
    sc.cities = 8;
    sc.countries = 3;
    sc.companies = 6;
    sc.test_queries = 8;
    sc.valid_queries = 3;
    (void)generate_synthetic(sc, dir / "data");
  }
  std::vector<ConfigOverride> o{{"dataset.dir", (dir / "data").string()},
                                {"output.dir", (dir / "out").string()},
                                {"paths.per_relation", "30"},
                                {"sc.epochs", "300"},
                                {"sc.entity_dim", "8"},
                                {"sc.relation_dim", "8"},
                                {"sc.hidden_dim", "8"},
                                {"plm.neg_num", "3"},
                                {"scorer.epochs", "2"},
                                {"scorer.embed_dim", "8"},
                                {"scorer.hidden_dim", "8"},
                                {"eval.negatives", "9"}};
  o.insert(o.end(), extra.begin(), extra.end());
  auto c = load_config({}, o);
  c.validate();
  return c;
}

}  // namespace

TEST_CASE("a stage without its predecessor fails with the dependency code") {
  TempDir dir;
  Pipeline p(small_config(dir));
  for (const auto s : {Stage::kLabel, Stage::kTrainSc, Stage::kBuildPlm, Stage::kTrainScorer, Stage::kEval}) {
    try {
      p.run(s);
      FAIL("expected StageDependencyError");
    } catch (const StageDependencyError& e) {
      CHECK(e.code() == ExitCode::kStageDependency);
    }
  }
}

TEST_CASE("run-all writes every stage record and a report; reruns are byte-identical") {
  TempDir dir;
  const auto cfg = small_config(dir);
  const auto report = Pipeline(cfg).run_all();
  CHECK(report.head.n_tasks == 8);
  CHECK(report.tail.n_tasks == 8);
  Pipeline p(cfg);
  for (const auto s : kStages) CHECK(std::filesystem::exists(p.stage_dir(s) / "stage.json"));
  const auto first = slurp(p.stage_dir(Stage::kEval) / "report.json");
  const auto model = slurp(p.stage_dir(Stage::kTrainScorer) / "scorer.bin");

  (void)Pipeline(cfg).run_all();
  CHECK(slurp(p.stage_dir(Stage::kEval) / "report.json") == first);
  CHECK(slurp(p.stage_dir(Stage::kTrainScorer) / "scorer.bin") == model);

  // Re-running one stage alone is idempotent as well.
  Pipeline(cfg).eval();
  CHECK(slurp(p.stage_dir(Stage::kEval) / "report.json") == first);
}

TEST_CASE("changed upstream settings are refused unless forced") {
  TempDir dir;
  const auto cfg = small_config(dir);
  Pipeline(cfg).paths();
  Pipeline(cfg).label();
  // label stage hash covers the paths settings, so a different max_len is stale
  const auto changed = small_config(dir, {{"paths.max_len", "2"}});
  CHECK(Pipeline(changed).stage_hash(Stage::kPaths) != Pipeline(cfg).stage_hash(Stage::kPaths));
  CHECK(Pipeline(changed).stage_hash(Stage::kEval) != Pipeline(cfg).stage_hash(Stage::kEval));
  CHECK_THROWS_AS(Pipeline(changed).train_sc(), StageDependencyError);
  CHECK_NOTHROW(Pipeline(changed, true).train_sc());

  // A later-stage setting leaves earlier hashes alone.
  const auto later = small_config(dir, {{"eval.negatives", "5"}});
  CHECK(Pipeline(later).stage_hash(Stage::kBuildPlm) == Pipeline(cfg).stage_hash(Stage::kBuildPlm));
  CHECK(Pipeline(later).stage_hash(Stage::kEval) != Pipeline(cfg).stage_hash(Stage::kEval));
}

TEST_CASE("a tampered artifact is detected") {
  TempDir dir;
  const auto cfg = small_config(dir);
  Pipeline p(cfg);
  p.paths();
  p.label();
  kgcf::testing::write_file(p.stage_dir(Stage::kLabel) / "sc_dataset.jsonl", "{}\n");
  CHECK_THROWS_AS(Pipeline(cfg).train_sc(), StageDependencyError);
  std::filesystem::remove(p.stage_dir(Stage::kLabel) / "sc_dataset.jsonl");
  CHECK_THROWS_AS(Pipeline(cfg, true).train_sc(), StageDependencyError);
}

TEST_CASE("max_len sweep writes one row per length") {
  TempDir dir;
  const auto cfg = small_config(dir);
  const auto rows = sweep_maxlen(cfg, {2, 3}, EvalSetting::kFixed, false);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].train_max_len == 2);
  CHECK(rows[1].train_max_len == 3);
  for (const auto& r : rows) CHECK(r.test_max_len == 3);
  CHECK(std::filesystem::exists(cfg.output_dir / "sweep_fixed.json"));
  CHECK(sweep_to_table(rows, EvalSetting::kFixed).find("MRR") != std::string::npos);
  const auto diff = sweep_maxlen(cfg, {2}, EvalSetting::kDiff, false);
  CHECK(diff[0].test_max_len == 2);
}
