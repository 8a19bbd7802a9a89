#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "kgcf/kg_store.hpp"

namespace kgcf {

/// A chain of edges with no repeated entity.
struct Trajectory {
  std::vector<Edge> edges;

  [[nodiscard]] std::size_t length() const { return edges.size(); }
  [[nodiscard]] EntityId start() const { return edges.front().source(); }
  [[nodiscard]] EntityId end() const { return edges.back().target(); }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
  friend auto operator<=>(const Trajectory&, const Trajectory&) = default;
};

/// A candidate completion and one trajectory supporting it.
struct InferencePath {
  Triplet completion;
  Trajectory trajectory;

  friend bool operator==(const InferencePath&, const InferencePath&) = default;
};

inline constexpr std::size_t kUnboundedCap = std::numeric_limits<std::size_t>::max();

/// Breadth-first enumeration of entity-simple trajectories from `source` to
/// `target` of length 1..max_len over forward and inverse edges. Edges whose
/// stored triplet equals `excluded` are never used. Output is ordered by
/// length, then by neighbour order, and truncated to `cap`.
[[nodiscard]] std::vector<Trajectory> enumerate_paths(const Graph& graph, EntityId source,
                                                      EntityId target, std::size_t max_len,
                                                      const Triplet& excluded,
                                                      std::size_t cap = kUnboundedCap);

/// Paths for a completion triplet, excluding the completion edge itself.
[[nodiscard]] std::vector<InferencePath> completion_paths(const Graph& graph,
                                                          const Triplet& completion,
                                                          std::size_t max_len, std::size_t cap);

/// One enumeration job for the batch kernels.
struct PathQuery {
  EntityId source;
  EntityId target;
  Triplet excluded;
};

/// Reference implementation: one query after another.
[[nodiscard]] std::vector<std::vector<Trajectory>> enumerate_paths_serial(
    const Graph& graph, std::span<const PathQuery> queries, std::size_t max_len, std::size_t cap);

/// OpenMP-parallel over queries; output identical to enumerate_paths_serial.
[[nodiscard]] std::vector<std::vector<Trajectory>> enumerate_paths_parallel(
    const Graph& graph, std::span<const PathQuery> queries, std::size_t max_len, std::size_t cap);

/// Sentence for a stored triplet: "<head> <relation> <tail>." Inverse edges
/// render their stored triplet, so both directions produce the same bytes.
[[nodiscard]] std::string textualize(const Graph& graph, const Triplet& triplet);
[[nodiscard]] std::string textualize(const Graph& graph, const Edge& edge);

inline constexpr std::string_view kContextSeparator = " ; ";

/// Claim and context segments of a path, kept apart for two-segment scorers.
struct PathText {
  std::string claim;
  std::string context;

  friend bool operator==(const PathText&, const PathText&) = default;
};

struct TextualizeOptions {
  /// Replace trajectory entity names with "entity<k>" in order of first
  /// appearance. Relation names and the claim are untouched.
  bool anonymize_entities = false;
};

[[nodiscard]] PathText textualize_path(const Graph& graph, const InferencePath& path,
                                       const TextualizeOptions& options = {});

}  // namespace kgcf
