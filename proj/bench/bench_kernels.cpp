// Serial reference vs OpenMP kernels on a generated synthetic world.
// Arg(0) is the serial reference; Arg(n > 0) runs the parallel kernel on n threads.

#include <filesystem>
#include <unistd.h>

#include <benchmark/benchmark.h>
#include <omp.h>

#include "kgcf/eval_harness.hpp"
#include "kgcf/hashing.hpp"
#include "kgcf/path_engine.hpp"
#include "kgcf/seq_filter.hpp"
#include "kgcf/synthetic.hpp"

namespace {

namespace fs = std::filesystem;

const kgcf::Dataset& world() {
  static const kgcf::Dataset ds = [] {
    const auto dir = fs::temp_directory_path() / ("kgcf-bench-" + std::to_string(::getpid()));
    (void)kgcf::generate_synthetic(kgcf::SyntheticConfig{}, dir);
    auto d = kgcf::load_dataset(dir, kgcf::Scenario::kTransductive);
    fs::remove_all(dir);
    return d;
  }();
  return ds;
}

// Cheap stand-ins so the kernels, not the models, dominate.
class HashClassifier final : public kgcf::PathClassifier {
 public:
  double classify(const kgcf::InferencePath& p) const override {
    std::uint64_t h = kgcf::TripletHash{}(p.completion);
    for (const auto& e : p.trajectory.edges) h = kgcf::combine_seed(h, kgcf::TripletHash{}(e.triplet));
    return static_cast<double>(kgcf::mix64(h) % 1000) / 1000.0;
  }
};

class HashScorer final : public kgcf::PathScorer {
 public:
  std::vector<double> score_batch(std::span<const kgcf::PathText> pairs) const override {
    std::vector<double> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(static_cast<double>(kgcf::fnv1a64(p.context) % 1000) / 1000.0);
    return out;
  }
};

void set_threads(const benchmark::State& state) {
  if (state.range(0) > 0) omp_set_num_threads(static_cast<int>(state.range(0)));
}

void BM_EnumeratePaths(benchmark::State& state) {
  const auto& g = world().train;
  std::vector<kgcf::PathQuery> queries;
  for (const auto& t : g.triplets()) queries.push_back({t.head, t.tail, t});
  set_threads(state);
  for (auto _ : state) {
    auto out = state.range(0) == 0 ? kgcf::enumerate_paths_serial(g, queries, 3, 50)
                                   : kgcf::enumerate_paths_parallel(g, queries, 3, 50);
    benchmark::DoNotOptimize(out);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(queries.size()));
}

void BM_BuildScorerSet(benchmark::State& state) {
  const auto& g = world().train;
  const HashClassifier clf;
  kgcf::FilterConfig cfg;
  cfg.neg_num = 10;
  set_threads(state);
  for (auto _ : state) {
    auto ds = state.range(0) == 0 ? kgcf::build_plm_dataset_serial(g, clf, cfg, 5)
                                  : kgcf::build_plm_dataset(g, clf, cfg, 5);
    benchmark::DoNotOptimize(ds);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(g.triplets().size()));
}

void BM_Evaluate(benchmark::State& state) {
  const auto& ds = world();
  kgcf::EvalConfig cfg;
  cfg.max_queries = 50;
  const auto tasks = kgcf::build_tasks(ds, cfg);
  const HashScorer scorer;
  set_threads(state);
  for (auto _ : state) {
    auto out = state.range(0) == 0 ? kgcf::evaluate_tasks_serial(scorer, ds.train, tasks, cfg)
                                   : kgcf::evaluate_tasks_parallel(scorer, ds.train, tasks, cfg);
    benchmark::DoNotOptimize(out);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(tasks.size()));
}

}  // namespace

BENCHMARK(BM_EnumeratePaths)->Arg(0)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_BuildScorerSet)->Arg(0)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Evaluate)->Arg(0)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
