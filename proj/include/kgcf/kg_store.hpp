#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace kgcf {

enum class EntityId : std::uint32_t {};
enum class RelationId : std::uint32_t {};

[[nodiscard]] constexpr std::uint32_t index(EntityId e) { return static_cast<std::uint32_t>(e); }
[[nodiscard]] constexpr std::uint32_t index(RelationId r) { return static_cast<std::uint32_t>(r); }

struct Triplet {
  EntityId head{};
  RelationId relation{};
  EntityId tail{};

  friend auto operator<=>(const Triplet&, const Triplet&) = default;
};

struct TripletHash {
  std::size_t operator()(const Triplet& t) const noexcept;
};

using TripletSet = std::unordered_set<Triplet, TripletHash>;

enum class Direction : std::uint8_t { kForward = 0, kInverse = 1 };

/// A traversable step. `triplet` is always the stored forward fact; an inverse
/// edge walks it from tail to head.
struct Edge {
  Triplet triplet;
  Direction direction = Direction::kForward;

  [[nodiscard]] EntityId source() const {
    return direction == Direction::kForward ? triplet.head : triplet.tail;
  }
  [[nodiscard]] EntityId target() const {
    return direction == Direction::kForward ? triplet.tail : triplet.head;
  }
  /// Relation index in the doubled space: r for forward, |R| + r for inverse.
  [[nodiscard]] std::uint32_t signed_relation(std::size_t num_relations) const {
    return index(triplet.relation) +
           (direction == Direction::kInverse ? static_cast<std::uint32_t>(num_relations) : 0U);
  }

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Dense handle <-> identifier <-> display text map.
class Vocabulary {
 public:
  /// Returns the handle for `identifier`, creating it if new.
  std::uint32_t intern(std::string_view identifier);
  [[nodiscard]] std::optional<std::uint32_t> find(std::string_view identifier) const;
  [[nodiscard]] const std::string& identifier(std::uint32_t handle) const;
  [[nodiscard]] const std::string& text(std::uint32_t handle) const;
  void set_text(std::uint32_t handle, std::string text);
  [[nodiscard]] std::size_t size() const { return identifiers_.size(); }

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;

 private:
  std::vector<std::string> identifiers_;
  std::vector<std::string> texts_;
  std::unordered_map<std::string, std::uint32_t> lookup_;
};

struct LoadReport {
  std::size_t lines = 0;
  std::size_t duplicates = 0;
  std::size_t missing_entity_text = 0;
  std::size_t missing_relation_text = 0;
};

/// Immutable, indexed knowledge graph. Safe for concurrent reads.
class Graph {
 public:
  Graph() = default;

  [[nodiscard]] const Vocabulary& entities() const { return entities_; }
  [[nodiscard]] const Vocabulary& relations() const { return relations_; }
  [[nodiscard]] std::size_t num_entities() const { return entities_.size(); }
  [[nodiscard]] std::size_t num_relations() const { return relations_.size(); }

  /// Stored triplets, sorted and unique.
  [[nodiscard]] std::span<const Triplet> triplets() const { return triplets_; }

  /// Forward membership only; the inverse direction is not consulted.
  [[nodiscard]] bool contains(const Triplet& t) const { return index_.contains(t); }

  /// Forward and inverse edges leaving `entity`, ordered by (signed relation,
  /// neighbour, direction). Throws std::out_of_range for unknown handles.
  [[nodiscard]] std::span<const Edge> neighbors(EntityId entity) const;

  [[nodiscard]] const std::string& entity_text(EntityId e) const { return entities_.text(index(e)); }
  [[nodiscard]] const std::string& relation_text(RelationId r) const {
    return relations_.text(index(r));
  }

 private:
  friend class GraphBuilder;

  Vocabulary entities_;
  Vocabulary relations_;
  std::vector<Triplet> triplets_;
  TripletSet index_;
  std::vector<std::size_t> offsets_;
  std::vector<Edge> adjacency_;
};

/// Accumulates identifiers and triplets, then freezes them into a Graph.
class GraphBuilder {
 public:
  GraphBuilder() = default;
  /// Seeds the relation vocabulary so handles match another graph.
  explicit GraphBuilder(Vocabulary relations) : relations_(std::move(relations)) {}

  EntityId entity(std::string_view identifier) { return EntityId{entities_.intern(identifier)}; }
  RelationId relation(std::string_view identifier) {
    return RelationId{relations_.intern(identifier)};
  }
  [[nodiscard]] std::optional<RelationId> find_relation(std::string_view identifier) const;

  /// Returns false if the triplet was already present.
  bool add(const Triplet& t);
  bool add(std::string_view head, std::string_view relation, std::string_view tail);

  [[nodiscard]] Vocabulary& entities() { return entities_; }
  [[nodiscard]] Vocabulary& relations() { return relations_; }
  [[nodiscard]] std::size_t size() const { return triplets_.size(); }

  [[nodiscard]] Graph build() &&;

 private:
  Vocabulary entities_;
  Vocabulary relations_;
  std::vector<Triplet> triplets_;
  TripletSet seen_;
};

/// Parsed `head\trelation\ttail` line.
struct RawTriplet {
  std::string head, relation, tail;
};

/// Reads a tab-separated triples file. Blank lines are skipped; any other line
/// without exactly three columns is a LoadError naming its 1-based line number.
[[nodiscard]] std::vector<RawTriplet> read_triples_file(const std::filesystem::path& path);

/// Reads an `id\ttext` file into a map. A missing file yields an empty map.
[[nodiscard]] std::unordered_map<std::string, std::string> read_text_file(
    const std::filesystem::path& path);

/// Applies display texts; identifiers without a (non-empty) text keep their
/// identifier. Returns the number of fallbacks.
std::size_t apply_texts(Vocabulary& vocab, const std::unordered_map<std::string, std::string>& texts);

[[nodiscard]] Graph load_graph(const std::filesystem::path& triples_file,
                               const std::filesystem::path& entity_text_file,
                               const std::filesystem::path& relation_text_file,
                               LoadReport* report = nullptr);

enum class Scenario { kTransductive, kInductive };

[[nodiscard]] std::string_view to_string(Scenario s);
[[nodiscard]] Scenario parse_scenario(std::string_view s);

/// Train/valid/test splits plus, for the inductive scenario, the separate
/// test-time graph. Valid and test triplets use the handle space of the graph
/// they are evaluated against: `train` for valid (both scenarios) and for test
/// in the transductive scenario, `test_graph` for test in the inductive one.
struct Dataset {
  Scenario scenario = Scenario::kTransductive;
  Graph train;
  std::vector<Triplet> valid;
  std::vector<Triplet> test;
  std::optional<Graph> test_graph;
  /// Every known fact in the test handle space (train ∪ valid ∪ test, or
  /// test_graph ∪ test when inductive). Used for candidate filtering.
  TripletSet full_test_space;
  LoadReport report;

  /// Graph searched for paths at test time.
  [[nodiscard]] const Graph& test_search_graph() const {
    return test_graph ? *test_graph : train;
  }
};

/// Loads `train.txt`, `valid.txt`, `test.txt`, `entity2text.txt` and
/// `relation2text.txt` from `dir`; inductive datasets also need
/// `test_graph.txt`. Throws LoadError on overlapping splits or, when
/// inductive, on entities shared between train and test graphs.
[[nodiscard]] Dataset load_dataset(const std::filesystem::path& dir, Scenario scenario);

}  // namespace kgcf
