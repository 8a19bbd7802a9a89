#include "kgcf/path_engine.hpp"

#include <algorithm>
#include <unordered_map>

#include <omp.h>

namespace kgcf {

namespace {

// Node of the breadth-first path tree.
struct Partial {
  std::size_t parent;  // index into the previous level, unused at depth 0
  Edge edge;
  EntityId entity;
};

// Hop distance to `target` for every entity within `radius`; entities further
// away are absent. Ignores simplicity, so it is a lower bound on any simple
// continuation and safe for pruning.
std::unordered_map<std::uint32_t, std::size_t> distances_to(const Graph& graph, EntityId target,
                                                            std::size_t radius) {
  std::unordered_map<std::uint32_t, std::size_t> dist;
  dist.emplace(index(target), 0);
  std::vector<EntityId> frontier{target};
  for (std::size_t d = 1; d <= radius && !frontier.empty(); ++d) {
    std::vector<EntityId> next;
    for (const auto e : frontier) {
      for (const auto& edge : graph.neighbors(e)) {
        if (dist.emplace(index(edge.target()), d).second) next.push_back(edge.target());
      }
    }
    frontier = std::move(next);
  }
  return dist;
}

}  // namespace

std::vector<Trajectory> enumerate_paths(const Graph& graph, EntityId source, EntityId target,
                                        std::size_t max_len, const Triplet& excluded,
                                        std::size_t cap) {
  std::vector<Trajectory> out;
  if (max_len == 0 || cap == 0 || source == target) return out;
  if (index(source) >= graph.num_entities() || index(target) >= graph.num_entities()) return out;

  const auto dist = distances_to(graph, target, max_len - 1);
  auto within = [&](EntityId e, std::size_t budget) {
    const auto it = dist.find(index(e));
    return it != dist.end() && it->second <= budget;
  };

  std::vector<std::vector<Partial>> levels;
  levels.push_back({Partial{0, Edge{}, source}});

  auto on_path = [&](std::size_t depth, std::size_t node, EntityId e) {
    for (std::size_t d = depth + 1; d-- > 0;) {
      const auto& p = levels[d][node];
      if (p.entity == e) return true;
      node = p.parent;
    }
    return false;
  };

  auto emit = [&](std::size_t depth, std::size_t node, const Edge& last) {
    Trajectory t;
    t.edges.resize(depth + 1);
    t.edges[depth] = last;
    for (std::size_t d = depth; d >= 1; --d) {
      const auto& p = levels[d][node];
      t.edges[d - 1] = p.edge;
      node = p.parent;
    }
    out.push_back(std::move(t));
  };

  for (std::size_t depth = 0; depth < max_len; ++depth) {
    const bool can_extend = depth + 1 < max_len;
    std::vector<Partial> next;
    const auto& level = levels[depth];
    for (std::size_t i = 0; i < level.size(); ++i) {
      for (const auto& edge : graph.neighbors(level[i].entity)) {
        if (edge.triplet == excluded) continue;
        const EntityId v = edge.target();
        if (v == target) {
          emit(depth, i, edge);
          if (out.size() >= cap) return out;
          continue;
        }
        if (!can_extend || !within(v, max_len - depth - 1)) continue;
        if (on_path(depth, i, v)) continue;
        next.push_back(Partial{i, edge, v});
      }
    }
    if (next.empty()) break;
    levels.push_back(std::move(next));
  }
  return out;
}

std::vector<InferencePath> completion_paths(const Graph& graph, const Triplet& completion,
                                            std::size_t max_len, std::size_t cap) {
  auto trajectories =
      enumerate_paths(graph, completion.head, completion.tail, max_len, completion, cap);
  std::vector<InferencePath> out;
  out.reserve(trajectories.size());
  for (auto& t : trajectories) out.push_back(InferencePath{completion, std::move(t)});
  return out;
}

std::vector<std::vector<Trajectory>> enumerate_paths_serial(const Graph& graph,
                                                            std::span<const PathQuery> queries,
                                                            std::size_t max_len, std::size_t cap) {
  std::vector<std::vector<Trajectory>> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    out[i] = enumerate_paths(graph, queries[i].source, queries[i].target, max_len,
                             queries[i].excluded, cap);
  }
  return out;
}

std::vector<std::vector<Trajectory>> enumerate_paths_parallel(const Graph& graph,
                                                              std::span<const PathQuery> queries,
                                                              std::size_t max_len,
                                                              std::size_t cap) {
  std::vector<std::vector<Trajectory>> out(queries.size());
  const auto n = static_cast<std::ptrdiff_t>(queries.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& q = queries[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] =
        enumerate_paths(graph, q.source, q.target, max_len, q.excluded, cap);
  }
  return out;
}

std::string textualize(const Graph& graph, const Triplet& t) {
  std::string s = graph.entity_text(t.head);
  s += ' ';
  s += graph.relation_text(t.relation);
  s += ' ';
  s += graph.entity_text(t.tail);
  s += '.';
  return s;
}

std::string textualize(const Graph& graph, const Edge& edge) {
  return textualize(graph, edge.triplet);
}

PathText textualize_path(const Graph& graph, const InferencePath& path,
                         const TextualizeOptions& options) {
  PathText out;
  out.claim = textualize(graph, path.completion);

  std::unordered_map<std::uint32_t, std::string> alias;
  auto name = [&](EntityId e) -> std::string {
    if (!options.anonymize_entities) return graph.entity_text(e);
    auto [it, inserted] = alias.try_emplace(index(e));
    if (inserted) it->second = "entity" + std::to_string(alias.size());
    return it->second;
  };
  if (options.anonymize_entities && !path.trajectory.edges.empty()) {
    name(path.trajectory.start());
    for (const auto& e : path.trajectory.edges) name(e.target());
  }

  for (std::size_t i = 0; i < path.trajectory.edges.size(); ++i) {
    if (i > 0) out.context += kContextSeparator;
    const auto& t = path.trajectory.edges[i].triplet;
    out.context += name(t.head);
    out.context += ' ';
    out.context += graph.relation_text(t.relation);
    out.context += ' ';
    out.context += name(t.tail);
    out.context += '.';
  }
  return out;
}

}  // namespace kgcf
