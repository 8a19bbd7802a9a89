#include <doctest.h>

#include <random>

#include <omp.h>

#include "kgcf/eval_harness.hpp"
#include "kgcf/hashing.hpp"
#include "kgcf/path_engine.hpp"
#include "kgcf/seq_filter.hpp"
#include "kgcf/serialize.hpp"
#include "kgcf/synthetic.hpp"
#include "test_support.hpp"

using namespace kgcf;

// The OpenMP kernels must reproduce the serial reference exactly. Thread
// counts are forced so the check means something on a one-core box too.

namespace {

class HashClassifier final : public PathClassifier {
 public:
  double classify(const InferencePath& p) const override {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& e : p.trajectory.edges) h = mix64(h ^ TripletHash{}(e.triplet));
    h = mix64(h ^ TripletHash{}(p.completion));
    return static_cast<double>(h % 1000) / 1000.0;
  }
};

class HashScorer final : public PathScorer {
 public:
  std::vector<double> score_batch(std::span<const PathText> pairs) const override {
    std::vector<double> out;
    for (const auto& p : pairs) out.push_back(static_cast<double>(fnv1a64(p.claim + p.context) % 101) / 100.0);
    return out;
  }
};

std::string dump(const std::vector<json>& records) {
  std::string s;
  for (const auto& r : records) s += r.dump() + "\n";
  return s;
}

}  // namespace

TEST_CASE("parallel path enumeration equals the serial reference") {
  std::mt19937_64 rng(31);
  for (const int threads : {1, 2, 4}) {
    omp_set_num_threads(threads);
    for (int trial = 0; trial < 10; ++trial) {
      const auto g = kgcf::testing::random_graph(40, 160, 3, rng());
      std::vector<PathQuery> queries;
      for (const auto& t : g.triplets()) queries.push_back({t.head, t.tail, t});
      for (const std::size_t cap : {std::size_t{5}, kUnboundedCap}) {
        CHECK(enumerate_paths_parallel(g, queries, 3, cap) == enumerate_paths_serial(g, queries, 3, cap));
      }
    }
  }
}

TEST_CASE("parallel scorer-set construction equals the serial reference") {
  const auto g = kgcf::testing::random_graph(50, 220, 4, 12);
  const HashClassifier clf;
  for (const bool heads : {false, true}) {
    FilterConfig cfg;
    cfg.neg_num = 4;
    cfg.corrupt_heads = heads;
    const auto serial = build_plm_dataset_serial(g, clf, cfg, 77);
    REQUIRE(!serial.items.empty());
    for (const int threads : {2, 4}) {
      omp_set_num_threads(threads);
      const auto parallel = build_plm_dataset(g, clf, cfg, 77);
      CHECK(dump(plm_dataset_records(parallel)) == dump(plm_dataset_records(serial)));
      CHECK(parallel.negative_shortfall == serial.negative_shortfall);
    }
  }
}

TEST_CASE("parallel evaluation equals the serial reference") {
  kgcf::testing::TempDir dir;
  SyntheticConfig cfg;
  cfg.people = 40;
  cfg.cities = 8;
  cfg.countries = 3;
  cfg.companies = 6;
  cfg.test_queries = 12;
  cfg.valid_queries = 3;
  (void)generate_synthetic(cfg, dir.path());
  const auto data = load_dataset(dir.path(), Scenario::kTransductive);
  EvalConfig ec;
  ec.negatives = 15;
  const auto tasks = build_tasks(data, ec);
  const HashScorer scorer;
  const auto serial = evaluate_tasks_serial(scorer, data.train, tasks, ec);
  for (const int threads : {2, 4}) {
    omp_set_num_threads(threads);
    const auto parallel = evaluate_tasks_parallel(scorer, data.train, tasks, ec);
    REQUIRE(parallel.size() == serial.size());
    for (std::size_t i = 0; i < serial.size(); ++i) {
      CHECK(parallel[i].result.rank == serial[i].result.rank);
      REQUIRE(parallel[i].result.ordered.size() == serial[i].result.ordered.size());
      for (std::size_t j = 0; j < serial[i].result.ordered.size(); ++j) {
        const auto& a = parallel[i].result.ordered[j];
        const auto& b = serial[i].result.ordered[j];
        CHECK(a.candidate == b.candidate);
        CHECK(a.score == b.score);
        CHECK(a.best_path == b.best_path);
      }
    }
    CHECK(report_to_json(summarize(Scenario::kTransductive, parallel, ec.ks)) ==
          report_to_json(summarize(Scenario::kTransductive, serial, ec.ks)));
  }
}
