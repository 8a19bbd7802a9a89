#include <doctest.h>

#include <array>
#include <random>

#include "kgcf/path_engine.hpp"
#include "kgcf/serialize.hpp"
#include "test_support.hpp"

using namespace kgcf;
using kgcf::testing::ent;
using kgcf::testing::trip;

namespace {

Graph build(std::initializer_list<std::array<const char*, 3>> facts) {
  GraphBuilder b;
  for (const auto& f : facts) b.add(f[0], f[1], f[2]);
  return std::move(b).build();
}

}  // namespace

TEST_CASE("triangle: the excluded edge is skipped and the detour found") {
  const auto g = build({{"A", "r", "B"}, {"B", "r", "C"}, {"A", "r", "C"}});
  const auto excluded = trip(g, "A", "r", "C");
  const auto paths = enumerate_paths(g, ent(g, "A"), ent(g, "C"), 2, excluded);
  REQUIRE(paths.size() == 1);
  REQUIRE(paths[0].edges.size() == 2);
  CHECK(paths[0].edges[0].triplet == trip(g, "A", "r", "B"));
  CHECK(paths[0].edges[1].triplet == trip(g, "B", "r", "C"));
  CHECK(enumerate_paths(g, ent(g, "A"), ent(g, "C"), 1, excluded).empty());
}

TEST_CASE("chain walked backwards uses inverse edges") {
  const auto g = build({{"A", "r", "B"}, {"B", "r", "C"}});
  const Triplet none{EntityId{99}, RelationId{99}, EntityId{99}};
  const auto paths = enumerate_paths(g, ent(g, "C"), ent(g, "A"), 2, none);
  REQUIRE(paths.size() == 1);
  const auto& e = paths[0].edges;
  REQUIRE(e.size() == 2);
  CHECK(e[0].triplet == trip(g, "B", "r", "C"));
  CHECK(e[0].direction == Direction::kInverse);
  CHECK(e[1].triplet == trip(g, "A", "r", "B"));
  CHECK(e[1].direction == Direction::kInverse);
}

TEST_CASE("inverse of the excluded triplet is banned too") {
  // The only other route from B to A would walk (A,r,B) backwards.
  const auto g = build({{"A", "r", "B"}});
  CHECK(enumerate_paths(g, ent(g, "B"), ent(g, "A"), 3, trip(g, "A", "r", "B")).empty());
}

TEST_CASE("enumeration matches the brute-force oracle on random graphs") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t nodes = 3 + rng() % 8;
    const auto g = kgcf::testing::random_graph(nodes, 4 + rng() % 16, 1 + rng() % 3, rng());
    if (g.triplets().empty()) continue;
    const auto excluded = g.triplets()[rng() % g.triplets().size()];
    const std::size_t max_len = 1 + rng() % 4;
    for (std::uint32_t s = 0; s < g.num_entities(); ++s) {
      for (std::uint32_t t = 0; t < g.num_entities(); ++t) {
        const auto got = enumerate_paths(g, EntityId{s}, EntityId{t}, max_len, excluded);
        const auto want = kgcf::testing::brute_force_paths(g, EntityId{s}, EntityId{t}, max_len, excluded);
        REQUIRE(got.size() == want.size());  // no duplicates
        CHECK(kgcf::testing::to_raw_set(got) == want);
      }
    }
  }
}

TEST_CASE("structural invariants: chaining, simplicity, exclusion, ordering") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const auto g = kgcf::testing::random_graph(9, 22, 2, rng());
    const auto excluded = g.triplets()[rng() % g.triplets().size()];
    const EntityId s{static_cast<std::uint32_t>(rng() % 9)};
    const EntityId t{static_cast<std::uint32_t>(rng() % 9)};
    const auto paths = enumerate_paths(g, s, t, 4, excluded);
    std::size_t prev_len = 0;
    for (const auto& p : paths) {
      REQUIRE(!p.edges.empty());
      CHECK(p.start() == s);
      CHECK(p.end() == t);
      CHECK(p.length() >= prev_len);
      prev_len = p.length();
      std::set<EntityId> seen{p.start()};
      for (std::size_t i = 0; i < p.edges.size(); ++i) {
        if (i > 0) CHECK(p.edges[i - 1].target() == p.edges[i].source());
        CHECK(p.edges[i].triplet != excluded);
        CHECK(g.contains(p.edges[i].triplet));
        CHECK(seen.insert(p.edges[i].target()).second);
      }
    }
  }
}

TEST_CASE("longer max_len only adds paths; cap keeps a prefix; output is deterministic") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const auto g = kgcf::testing::random_graph(10, 25, 2, rng());
    const auto excluded = g.triplets().front();
    const EntityId s{static_cast<std::uint32_t>(rng() % 10)};
    const EntityId t{static_cast<std::uint32_t>(rng() % 10)};
    for (std::size_t k = 1; k < 4; ++k) {
      const auto shorter = kgcf::testing::to_raw_set(enumerate_paths(g, s, t, k, excluded));
      const auto longer = kgcf::testing::to_raw_set(enumerate_paths(g, s, t, k + 1, excluded));
      CHECK(std::includes(longer.begin(), longer.end(), shorter.begin(), shorter.end()));
    }
    const auto full = enumerate_paths(g, s, t, 4, excluded);
    CHECK(full == enumerate_paths(g, s, t, 4, excluded));
    const auto capped = enumerate_paths(g, s, t, 4, excluded, 3);
    CHECK(capped.size() == std::min<std::size_t>(3, full.size()));
    for (std::size_t i = 0; i < capped.size(); ++i) CHECK(capped[i] == full[i]);
  }
}

TEST_CASE("completion paths wrap trajectories with the claim") {
  const auto g = build({{"A", "r", "B"}, {"B", "r", "C"}, {"A", "q", "C"}});
  const auto c = trip(g, "A", "q", "C");
  const auto paths = completion_paths(g, c, 3, 50);
  REQUIRE(paths.size() == 1);
  CHECK(paths[0].completion == c);
  CHECK(paths[0].trajectory.start() == c.head);
  CHECK(paths[0].trajectory.end() == c.tail);
}

TEST_CASE("sentences render the stored triplet in both directions") {
  GraphBuilder b;
  b.add("lebron", "plays_for", "lakers");
  b.add("earth", "orbits", "sun");
  b.entities().set_text(*b.entities().find("lebron"), "Lebron James");
  b.entities().set_text(*b.entities().find("lakers"), "Lakers");
  b.entities().set_text(*b.entities().find("earth"), "Earth");
  b.entities().set_text(*b.entities().find("sun"), "Sun");
  b.relations().set_text(*b.relations().find("plays_for"), "plays for");
  const auto g = std::move(b).build();
  const auto plays = trip(g, "lebron", "plays_for", "lakers");
  CHECK(textualize(g, Edge{plays, Direction::kInverse}) == "Lebron James plays for Lakers.");
  CHECK(textualize(g, Edge{plays, Direction::kInverse}) == textualize(g, Edge{plays, Direction::kForward}));
  CHECK(textualize(g, trip(g, "earth", "orbits", "sun")) == "Earth orbits Sun.");
}

TEST_CASE("path text keeps claim and context apart") {
  const auto g = build({{"Japan", "has_city", "Tokyo"}, {"Japan", "Capital", "Tokyo"}});
  const InferencePath p{trip(g, "Japan", "Capital", "Tokyo"),
                        Trajectory{{Edge{trip(g, "Japan", "has_city", "Tokyo"), Direction::kForward}}}};
  const auto text = textualize_path(g, p);
  CHECK(text.claim == "Japan Capital Tokyo.");
  CHECK(text.context == "Japan has_city Tokyo.");
}

TEST_CASE("anonymised trajectories number entities by first appearance") {
  const auto g = build({{"A", "r", "B"}, {"C", "s", "B"}, {"A", "q", "C"}});
  const auto paths = completion_paths(g, trip(g, "A", "q", "C"), 2, 50);
  REQUIRE(paths.size() == 1);
  const auto text = textualize_path(g, paths[0], TextualizeOptions{true});
  CHECK(text.claim == "A q C.");
  CHECK(text.context == "entity1 r entity2. ; entity3 s entity2.");
}

TEST_CASE("serialised paths reproduce the same text") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = kgcf::testing::random_graph(8, 20, 3, rng());
    for (const auto& t : g.triplets()) {
      for (const auto& p : completion_paths(g, t, 3, 10)) {
        const auto back = path_from_json(g, json::parse(path_to_json(g, p).dump()));
        CHECK(back == p);
        CHECK(textualize_path(g, back) == textualize_path(g, p));
      }
    }
  }
}
