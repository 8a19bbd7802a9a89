#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "kgcf/error.hpp"
#include "kgcf/eval_harness.hpp"
#include "kgcf/synthetic.hpp"
#include "test_support.hpp"

using namespace kgcf;
using kgcf::testing::ent;
using kgcf::testing::trip;

namespace {

// 60 entities; h already relates to 10 of them besides the gold tail.
struct Fixture {
  Graph g;
  Triplet test;
  TripletSet known;
  std::set<EntityId> banned;
};

Fixture fixture() {
  GraphBuilder b;
  for (int i = 0; i < 60; ++i) b.entity("e" + std::to_string(i));
  b.add("e0", "r", "e1");
  for (int i = 2; i < 12; ++i) b.add("e0", "r", "e" + std::to_string(i));
  Fixture f{std::move(b).build(), {}, {}, {}};
  f.test = trip(f.g, "e0", "r", "e1");
  for (const auto& t : f.g.triplets()) {
    f.known.insert(t);
    f.banned.insert(t.tail);
  }
  f.banned.insert(ent(f.g, "e0"));
  return f;
}

/// Rank from scratch: no-path as -1 below every score in [0, 1].
std::size_t oracle_rank(const std::vector<std::optional<double>>& s, std::size_t gold) {
  auto v = [&](std::size_t i) { return s[i] ? *s[i] : -1.0; };
  std::size_t r = 1;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != gold && v(i) >= v(gold)) ++r;
  }
  return r;
}

class ContextLengthScorer final : public PathScorer {
 public:
  std::vector<double> score_batch(std::span<const PathText> pairs) const override {
    std::vector<double> out;
    for (const auto& p : pairs) out.push_back(static_cast<double>(p.context.size() % 97) / 96.0);
    return out;
  }
};

}  // namespace

TEST_CASE("candidate sampling: only eligible entities, shortfall recorded") {
  const auto f = fixture();
  const auto task = sample_candidates(f.g, f.known, f.test, PredictionDirection::kTail, 100, 1);
  CHECK(task.gold == f.test.tail);
  CHECK(task.candidates.front() == task.gold);
  CHECK(task.candidates.size() == 1 + 48);
  CHECK(task.shortfall == 52);
  const std::set<EntityId> distinct(task.candidates.begin(), task.candidates.end());
  CHECK(distinct.size() == task.candidates.size());
  for (std::size_t i = 1; i < task.candidates.size(); ++i) {
    CHECK_FALSE(f.banned.contains(task.candidates[i]));
    CHECK_FALSE(f.known.contains(task.completion(task.candidates[i])));
  }
  const auto small = sample_candidates(f.g, f.known, f.test, PredictionDirection::kTail, 5, 1);
  CHECK(small.candidates.size() == 6);
  CHECK(small.shortfall == 0);
}

TEST_CASE("head tasks corrupt the head") {
  const auto f = fixture();
  const auto task = sample_candidates(f.g, f.known, f.test, PredictionDirection::kHead, 10, 3);
  CHECK(task.gold == f.test.head);
  for (const auto c : task.candidates) CHECK(task.completion(c).tail == f.test.tail);
}

TEST_CASE("an empty candidate pool is an error") {
  GraphBuilder b;
  b.add("a", "r", "b");
  const auto g = std::move(b).build();
  TripletSet known{g.triplets().begin(), g.triplets().end()};
  CHECK_THROWS_AS((void)sample_candidates(g, known, g.triplets()[0], PredictionDirection::kTail, 3, 0), Error);
}

TEST_CASE("sampling is reproducible and uniform") {
  const auto f = fixture();
  CHECK(sample_candidates(f.g, f.known, f.test, PredictionDirection::kTail, 7, 99).candidates ==
        sample_candidates(f.g, f.known, f.test, PredictionDirection::kTail, 7, 99).candidates);
  std::map<EntityId, int> hits;
  const int draws = 4800;
  for (int s = 0; s < draws; ++s) {
    const auto t = sample_candidates(f.g, f.known, f.test, PredictionDirection::kTail, 12, s);
    for (std::size_t i = 1; i < t.candidates.size(); ++i) ++hits[t.candidates[i]];
  }
  REQUIRE(hits.size() == 48);
  const double p = 12.0 / 48.0;
  const double mean = draws * p;
  const double sigma = std::sqrt(draws * p * (1 - p));
  for (const auto& [e, n] : hits) CHECK(std::abs(n - mean) <= 4 * sigma);
}

TEST_CASE("pessimistic ranks match a direct count over random score vectors") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng() % 15;
    RankingTask task;
    std::map<EntityId, CompletionScore> scores;
    std::vector<std::optional<double>> raw;
    for (std::size_t i = 0; i < n; ++i) {
      const EntityId id{static_cast<std::uint32_t>(i)};
      task.candidates.push_back(id);
      std::optional<double> s;
      if (rng() % 4 != 0) s = static_cast<double>(rng() % 5) / 4.0;  // coarse, so ties are common
      raw.push_back(s);
      scores[id] = CompletionScore{id, s, std::nullopt};
    }
    const std::size_t gold = rng() % n;
    task.gold = EntityId{static_cast<std::uint32_t>(gold)};
    const auto result = rank_and_score(task, scores);
    CHECK(result.rank == oracle_rank(raw, gold));
    // Gold sits at its rank in the ordered list.
    CHECK(result.ordered[result.rank - 1].candidate == task.gold);
    bool seen_no_path = false;
    for (const auto& c : result.ordered) {
      if (c.no_path()) seen_no_path = true;
      else CHECK_FALSE(seen_no_path);
    }
  }
}

TEST_CASE("a tie with one negative puts gold second") {
  RankingTask task;
  task.gold = EntityId{0};
  task.candidates = {EntityId{0}, EntityId{1}, EntityId{2}};
  std::map<EntityId, CompletionScore> s{{EntityId{0}, {EntityId{0}, 0.7, {}}},
                                        {EntityId{1}, {EntityId{1}, 0.7, {}}},
                                        {EntityId{2}, {EntityId{2}, std::nullopt, {}}}};
  CHECK(rank_and_score(task, s).rank == 2);
  s[EntityId{0}].score = std::nullopt;
  CHECK(rank_and_score(task, s).rank == 3);
  s.erase(EntityId{2});
  CHECK_THROWS_AS((void)rank_and_score(task, s), Error);
}

TEST_CASE("metrics of ranks 1, 2, 4") {
  const std::vector<std::size_t> ranks{1, 2, 4};
  const std::vector<int> ks{1, 3, 10};
  const auto m = compute_metrics(ranks, ks);
  CHECK(std::abs(m.mrr - 0.58333333333333333) <= 1e-9);
  CHECK(m.hits.at(1) == doctest::Approx(1.0 / 3));
  CHECK(m.hits.at(3) == doctest::Approx(2.0 / 3));
  CHECK(m.hits.at(10) == 1.0);
  CHECK_THROWS_AS((void)compute_metrics(std::vector<std::size_t>{}, ks), Error);
  CHECK_THROWS_AS((void)compute_metrics(std::vector<std::size_t>{0}, ks), Error);
}

TEST_CASE("hits are monotone in k and MRR is at least Hits@1") {
  std::mt19937_64 rng(8);
  const std::vector<int> ks{1, 2, 3, 5, 10, 50};
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::size_t> ranks(1 + rng() % 40);
    for (auto& r : ranks) r = 1 + rng() % 50;
    const auto m = compute_metrics(ranks, ks);
    for (std::size_t i = 1; i < ks.size(); ++i) CHECK(m.hits.at(ks[i - 1]) <= m.hits.at(ks[i]));
    CHECK(m.mrr >= m.hits.at(1));
    CHECK(m.mrr <= 1.0);
  }
}

TEST_CASE("averaging head and tail is the plain mean") {
  DirectionMetrics head, tail;
  head.mrr = 0.6;
  tail.mrr = 0.8;
  head.hits[1] = 0.5;
  tail.hits[1] = 0.7;
  const auto avg = average_metrics(head, tail);
  CHECK(avg.mrr == doctest::Approx(0.7));
  CHECK(avg.hits.at(1) == doctest::Approx(0.6));
}

TEST_CASE("evaluation on a small synthetic world: tasks, outcomes, report") {
  kgcf::testing::TempDir dir;
  SyntheticConfig cfg;
  cfg.people = 30;
  cfg.cities = 8;
  cfg.countries = 3;
  cfg.companies = 6;
  cfg.test_queries = 6;
  cfg.valid_queries = 3;
  (void)generate_synthetic(cfg, dir.path());
  const auto data = load_dataset(dir.path(), Scenario::kTransductive);
  EvalConfig ec;
  ec.negatives = 9;
  const auto tasks = build_tasks(data, ec);
  CHECK(tasks.size() == 2 * data.test.size());
  const auto tasks2 = build_tasks(data, ec);
  for (std::size_t i = 0; i < tasks.size(); ++i) CHECK(tasks[i].candidates == tasks2[i].candidates);
  const ContextLengthScorer scorer;
  const auto outcomes = evaluate_tasks_serial(scorer, data.train, tasks, ec);
  REQUIRE(outcomes.size() == tasks.size());
  for (const auto& o : outcomes) {
    CHECK(o.error.empty());
    CHECK(o.result.rank >= 1);
    CHECK(o.result.rank <= o.task.candidates.size());
  }
  const auto report = summarize(Scenario::kTransductive, outcomes, ec.ks);
  CHECK(report.head.n_tasks == data.test.size());
  CHECK(report.average.mrr == doctest::Approx((report.head.mrr + report.tail.mrr) / 2));
  const auto again = run_evaluation(data, scorer, ec);
  CHECK(report_to_json(again) == report_to_json(report));
  CHECK(report_to_table(report).find("MRR") != std::string::npos);

  std::vector<TaskOutcome> failed = outcomes;
  failed[0].error = "boom";
  CHECK_THROWS_AS((void)summarize(Scenario::kTransductive, failed, ec.ks), EvaluationAborted);
}
