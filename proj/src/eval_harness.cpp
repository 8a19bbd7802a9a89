#include "kgcf/eval_harness.hpp"

#include <algorithm>
#include <iomanip>
#include <random>
#include <sstream>
#include <unordered_map>

#include "kgcf/hashing.hpp"

namespace kgcf {

std::string_view to_string(PredictionDirection d) {
  return d == PredictionDirection::kHead ? "head" : "tail";
}

Triplet RankingTask::completion(EntityId candidate) const {
  Triplet t = test;
  if (direction == PredictionDirection::kTail) {
    t.tail = candidate;
  } else {
    t.head = candidate;
  }
  return t;
}

RankingTask sample_candidates(const Graph& graph, const TripletSet& known, const Triplet& test,
                              PredictionDirection direction, std::size_t count, std::uint64_t seed) {
  RankingTask task;
  task.test = test;
  task.direction = direction;
  task.gold = direction == PredictionDirection::kTail ? test.tail : test.head;
  const EntityId fixed = direction == PredictionDirection::kTail ? test.head : test.tail;

  std::vector<EntityId> eligible;
  for (std::uint32_t e = 0; e < graph.num_entities(); ++e) {
    const EntityId id{e};
    if (id == fixed || id == task.gold) continue;
    if (known.contains(task.completion(id))) continue;
    eligible.push_back(id);
  }
  if (eligible.empty()) {
    throw Error("no eligible candidate entities for a " + std::string(to_string(direction)) +
                " prediction task");
  }
  std::mt19937_64 rng(seed);
  const auto take = std::min(count, eligible.size());
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, eligible.size() - 1);
    std::swap(eligible[i], eligible[pick(rng)]);
  }
  task.candidates.reserve(take + 1);
  task.candidates.push_back(task.gold);
  task.candidates.insert(task.candidates.end(), eligible.begin(),
                         eligible.begin() + static_cast<std::ptrdiff_t>(take));
  task.shortfall = count - take;
  return task;
}

RankResult rank_and_score(const RankingTask& task, const std::map<EntityId, CompletionScore>& scores) {
  RankResult out;
  for (const auto c : task.candidates) {
    const auto it = scores.find(c);
    if (it == scores.end()) {
      throw Error("missing score for candidate entity " + std::to_string(index(c)));
    }
    out.ordered.push_back(it->second);
  }
  const auto& gold = scores.at(task.gold).score;
  out.rank = 1;
  for (const auto c : task.candidates) {
    if (c != task.gold && ranks_at_least(scores.at(c).score, gold)) ++out.rank;
  }
  std::stable_sort(out.ordered.begin(), out.ordered.end(),
                   [&](const CompletionScore& a, const CompletionScore& b) {
                     if (ranks_above(a.score, b.score)) return true;
                     if (ranks_above(b.score, a.score)) return false;
                     const bool a_gold = a.candidate == task.gold;
                     const bool b_gold = b.candidate == task.gold;
                     if (a_gold != b_gold) return b_gold;
                     return index(a.candidate) < index(b.candidate);
                   });
  return out;
}

DirectionMetrics compute_metrics(std::span<const std::size_t> ranks, std::span<const int> ks) {
  if (ranks.empty()) throw Error("cannot compute metrics over zero ranks");
  DirectionMetrics m;
  m.n_tasks = ranks.size();
  const auto n = static_cast<double>(ranks.size());
  double rr = 0.0;
  for (const auto r : ranks) {
    if (r < 1) throw Error("ranks are 1-based");
    rr += 1.0 / static_cast<double>(r);
  }
  m.mrr = rr / n;
  for (const int k : ks) {
    const auto hits = std::count_if(ranks.begin(), ranks.end(),
                                    [k](std::size_t r) { return r <= static_cast<std::size_t>(k); });
    m.hits[k] = static_cast<double>(hits) / n;
  }
  return m;
}

DirectionMetrics average_metrics(const DirectionMetrics& a, const DirectionMetrics& b) {
  DirectionMetrics m;
  m.mrr = (a.mrr + b.mrr) / 2.0;
  for (const auto& [k, v] : a.hits) {
    if (const auto it = b.hits.find(k); it != b.hits.end()) m.hits[k] = (v + it->second) / 2.0;
  }
  m.n_tasks = a.n_tasks + b.n_tasks;
  m.no_path_gold = a.no_path_gold + b.no_path_gold;
  return m;
}

json report_to_json(const MetricsReport& report) {
  json out = json::array();
  auto one = [&](std::string_view direction, const DirectionMetrics& m) {
    json hits = json::object();
    for (const auto& [k, v] : m.hits) hits[std::to_string(k)] = v;
    out.push_back(json{{"scenario", std::string(to_string(report.scenario))},
                       {"direction", std::string(direction)},
                       {"hits", std::move(hits)},
                       {"mrr", m.mrr},
                       {"n_tasks", m.n_tasks},
                       {"no_path_gold_count", m.no_path_gold}});
  };
  one("head", report.head);
  one("tail", report.tail);
  one("average", report.average);
  return out;
}

std::string report_to_table(const MetricsReport& report) {
  std::ostringstream os;
  os << "scenario: " << to_string(report.scenario) << '\n';
  os << std::left << std::setw(10) << "direction";
  for (const auto& [k, v] : report.average.hits) os << std::setw(10) << ("Hits@" + std::to_string(k));
  os << std::setw(10) << "MRR" << std::setw(8) << "tasks" << "no-path gold\n";
  auto row = [&](std::string_view name, const DirectionMetrics& m) {
    os << std::left << std::setw(10) << name << std::fixed << std::setprecision(4);
    for (const auto& [k, v] : m.hits) os << std::setw(10) << v;
    os << std::setw(10) << m.mrr << std::setw(8) << m.n_tasks << m.no_path_gold << '\n';
  };
  row("head", report.head);
  row("tail", report.tail);
  row("average", report.average);
  return os.str();
}

EvaluationAborted::EvaluationAborted(std::vector<TaskError> errors)
    : BackendError("evaluation aborted: " + std::to_string(errors.size()) + " task(s) failed; first: " +
                   (errors.empty() ? std::string() : errors.front().message)),
      errors_(std::move(errors)) {}

std::vector<RankingTask> build_tasks(const Dataset& dataset, const EvalConfig& config) {
  const auto& graph = dataset.test_search_graph();
  const std::size_t n = config.max_queries == 0 ? dataset.test.size()
                                                : std::min(config.max_queries, dataset.test.size());
  std::vector<RankingTask> tasks;
  tasks.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = dataset.test[i];
    for (const auto dir : {PredictionDirection::kHead, PredictionDirection::kTail}) {
      const auto seed = combine_seed(combine_seed(config.seed, TripletHash{}(t)), static_cast<std::uint64_t>(dir));
      tasks.push_back(sample_candidates(graph, dataset.full_test_space, t, dir, config.negatives, seed));
    }
  }
  return tasks;
}

namespace {

CompletionOptions completion_options(const EvalConfig& config) {
  CompletionOptions o;
  o.max_len = config.max_len;
  o.path_cap = config.path_cap;
  o.anonymize_entities = config.anonymize_entities;
  o.classifier = config.test_filter;
  o.threshold = config.threshold;
  return o;
}

struct Slot {
  std::size_t task;
  std::size_t candidate;
};

std::vector<Slot> slots_of(std::span<const RankingTask> tasks) {
  std::vector<Slot> slots;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    for (std::size_t c = 0; c < tasks[t].candidates.size(); ++c) slots.push_back(Slot{t, c});
  }
  return slots;
}

std::vector<TaskOutcome> finish(std::span<const RankingTask> tasks,
                                std::vector<std::vector<CompletionScore>>& scored,
                                std::vector<std::string>& errors) {
  std::vector<TaskOutcome> out(tasks.size());
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    out[t].task = tasks[t];
    if (!errors[t].empty()) {
      out[t].error = errors[t];
      continue;
    }
    std::map<EntityId, CompletionScore> by_candidate;
    for (auto& s : scored[t]) by_candidate.emplace(s.candidate, std::move(s));
    out[t].result = rank_and_score(tasks[t], by_candidate);
  }
  return out;
}

}  // namespace

std::vector<TaskOutcome> evaluate_tasks_serial(const PathScorer& scorer, const Graph& graph,
                                               std::span<const RankingTask> tasks,
                                               const EvalConfig& config) {
  const auto opts = completion_options(config);
  std::vector<std::vector<CompletionScore>> scored(tasks.size());
  std::vector<std::string> errors(tasks.size());
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    for (const auto c : tasks[t].candidates) {
      try {
        scored[t].push_back(score_completion(scorer, graph, tasks[t].completion(c), opts, c));
      } catch (const std::exception& e) {
        errors[t] = e.what();
        break;
      }
    }
  }
  return finish(tasks, scored, errors);
}

std::vector<TaskOutcome> evaluate_tasks_parallel(const PathScorer& scorer, const Graph& graph,
                                                 std::span<const RankingTask> tasks,
                                                 const EvalConfig& config) {
  const auto opts = completion_options(config);
  const auto slots = slots_of(tasks);
  std::vector<CompletionScore> flat(slots.size());
  std::vector<std::string> slot_errors(slots.size());
  const auto n = static_cast<std::ptrdiff_t>(slots.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& s = slots[static_cast<std::size_t>(i)];
    const auto& task = tasks[s.task];
    const auto c = task.candidates[s.candidate];
    try {
      flat[static_cast<std::size_t>(i)] = score_completion(scorer, graph, task.completion(c), opts, c);
    } catch (const std::exception& e) {
      slot_errors[static_cast<std::size_t>(i)] = e.what();
    }
  }
  std::vector<std::vector<CompletionScore>> scored(tasks.size());
  std::vector<std::string> errors(tasks.size());
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto t = slots[i].task;
    if (!slot_errors[i].empty()) {
      if (errors[t].empty()) errors[t] = slot_errors[i];
      continue;
    }
    scored[t].push_back(std::move(flat[i]));
  }
  return finish(tasks, scored, errors);
}

MetricsReport summarize(Scenario scenario, std::span<const TaskOutcome> outcomes,
                        std::span<const int> ks) {
  std::vector<TaskError> errors;
  std::vector<std::size_t> head_ranks, tail_ranks;
  std::size_t head_no_path = 0, tail_no_path = 0;
  for (const auto& o : outcomes) {
    if (!o.error.empty()) {
      errors.push_back(TaskError{o.task.test, o.task.direction, o.error});
      continue;
    }
    const auto gold_it = std::find_if(o.result.ordered.begin(), o.result.ordered.end(),
                                      [&](const CompletionScore& s) { return s.candidate == o.task.gold; });
    const bool no_path = gold_it != o.result.ordered.end() && gold_it->no_path();
    if (o.task.direction == PredictionDirection::kHead) {
      head_ranks.push_back(o.result.rank);
      head_no_path += no_path ? 1 : 0;
    } else {
      tail_ranks.push_back(o.result.rank);
      tail_no_path += no_path ? 1 : 0;
    }
  }
  if (!errors.empty()) throw EvaluationAborted(std::move(errors));
  MetricsReport report;
  report.scenario = scenario;
  report.head = compute_metrics(head_ranks, ks);
  report.head.no_path_gold = head_no_path;
  report.tail = compute_metrics(tail_ranks, ks);
  report.tail.no_path_gold = tail_no_path;
  report.average = average_metrics(report.head, report.tail);
  return report;
}

MetricsReport run_evaluation(const Dataset& dataset, const PathScorer& scorer, const EvalConfig& config) {
  if (dataset.test.empty()) throw Error("dataset has no test triplets");
  const auto tasks = build_tasks(dataset, config);
  const auto outcomes = evaluate_tasks_parallel(scorer, dataset.test_search_graph(), tasks, config);
  return summarize(dataset.scenario, outcomes, config.ks);
}

}  // namespace kgcf
