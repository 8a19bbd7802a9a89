#include <doctest.h>

#include <set>

#include "kgcf/error.hpp"
#include "kgcf/kg_store.hpp"
#include "test_support.hpp"

using namespace kgcf;
using kgcf::testing::TempDir;
using kgcf::testing::write_file;

namespace {

Graph abc_graph(const TempDir& dir) {
  write_file(dir / "t.txt", "A\tr1\tB\nB\tr2\tC\nA\tr1\tB\n");
  return load_graph(dir / "t.txt", dir / "e.txt", dir / "r.txt");
}

}  // namespace

TEST_CASE("duplicate lines collapse and counts come out right") {
  TempDir dir;
  LoadReport report;
  write_file(dir / "t.txt", "A\tr1\tB\nB\tr2\tC\nA\tr1\tB\n");
  const auto g = load_graph(dir / "t.txt", dir / "e.txt", dir / "r.txt", &report);
  CHECK(g.triplets().size() == 2);
  CHECK(g.num_entities() == 3);
  CHECK(g.num_relations() == 2);
  CHECK(report.lines == 3);
  CHECK(report.duplicates == 1);
}

TEST_CASE("membership is directional") {
  TempDir dir;
  const auto g = abc_graph(dir);
  using kgcf::testing::ent;
  using kgcf::testing::rel;
  CHECK(g.contains({ent(g, "A"), rel(g, "r1"), ent(g, "B")}));
  CHECK_FALSE(g.contains({ent(g, "B"), rel(g, "r1"), ent(g, "A")}));
  CHECK_FALSE(g.contains({ent(g, "A"), rel(g, "r2"), ent(g, "C")}));
}

TEST_CASE("neighbors list forward then inverse edges") {
  TempDir dir;
  const auto g = abc_graph(dir);
  using kgcf::testing::trip;
  const auto nb = g.neighbors(kgcf::testing::ent(g, "B"));
  REQUIRE(nb.size() == 2);
  CHECK(nb[0].triplet == trip(g, "B", "r2", "C"));
  CHECK(nb[0].direction == Direction::kForward);
  CHECK(nb[0].target() == kgcf::testing::ent(g, "C"));
  CHECK(nb[1].triplet == trip(g, "A", "r1", "B"));
  CHECK(nb[1].direction == Direction::kInverse);
  CHECK(nb[1].target() == kgcf::testing::ent(g, "A"));
}

TEST_CASE("isolated entities have no neighbours; unknown handles throw") {
  GraphBuilder b;
  b.entity("lonely");
  b.add("x", "r", "y");
  const auto g = std::move(b).build();
  CHECK(g.neighbors(kgcf::testing::ent(g, "lonely")).empty());
  CHECK_THROWS_AS((void)g.neighbors(EntityId{99}), std::out_of_range);
}

TEST_CASE("malformed line reports its line number") {
  TempDir dir;
  write_file(dir / "t.txt", "A\tr1\n");
  try {
    (void)read_triples_file(dir / "t.txt");
    FAIL("expected LoadError");
  } catch (const LoadError& e) {
    CHECK(std::string(e.what()).find("t.txt:1:") != std::string::npos);
  }
}

TEST_CASE("display text is used when present and falls back to the identifier") {
  TempDir dir;
  write_file(dir / "t.txt", "concept:person:ryanwhitney\tbornin\tconcept:city:mexico\n");
  write_file(dir / "e.txt", "concept:person:ryanwhitney\tperson Mexico Ryan Whitney\n");
  write_file(dir / "r.txt", "bornin\t\n");
  LoadReport report;
  const auto g = load_graph(dir / "t.txt", dir / "e.txt", dir / "r.txt", &report);
  const auto t = g.triplets().front();
  CHECK(g.entity_text(t.head) == "person Mexico Ryan Whitney");
  CHECK(g.entity_text(t.tail) == "concept:city:mexico");
  CHECK(g.relation_text(t.relation) == "bornin");
  CHECK(report.missing_entity_text == 1);
  CHECK(report.missing_relation_text == 1);
}

TEST_CASE("forward adjacency reproduces the triplet set on random graphs") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto g = kgcf::testing::random_graph(5, 9, 2, seed);
    std::set<Triplet> forward;
    std::size_t inverse = 0;
    for (std::uint32_t e = 0; e < g.num_entities(); ++e) {
      for (const auto& edge : g.neighbors(EntityId{e})) {
        CHECK(edge.source() == EntityId{e});
        if (edge.direction == Direction::kForward) {
          forward.insert(edge.triplet);
        } else {
          ++inverse;
        }
      }
    }
    const std::set<Triplet> stored(g.triplets().begin(), g.triplets().end());
    CHECK(forward == stored);
    CHECK(inverse == stored.size());
  }
}

TEST_CASE("loading twice gives identical graphs") {
  TempDir dir;
  write_file(dir / "t.txt", "A\tr1\tB\nB\tr2\tC\nC\tr1\tA\n");
  write_file(dir / "e.txt", "A\talpha\nB\tbeta\n");
  const auto a = load_graph(dir / "t.txt", dir / "e.txt", dir / "r.txt");
  const auto b = load_graph(dir / "t.txt", dir / "e.txt", dir / "r.txt");
  CHECK(std::equal(a.triplets().begin(), a.triplets().end(), b.triplets().begin(), b.triplets().end()));
  CHECK(a.entities() == b.entities());
  CHECK(a.relations() == b.relations());
}

TEST_CASE("datasets: overlapping splits are rejected") {
  TempDir dir;
  write_file(dir / "train.txt", "A\tr\tB\nB\tr\tC\n");
  write_file(dir / "valid.txt", "C\tr\tA\n");
  write_file(dir / "test.txt", "A\tr\tB\n");
  CHECK_THROWS_AS((void)load_dataset(dir.path(), Scenario::kTransductive), LoadError);
}

TEST_CASE("datasets: splits are disjoint and the known-fact set covers all of them") {
  TempDir dir;
  write_file(dir / "train.txt", "A\tr\tB\nB\tr\tC\n");
  write_file(dir / "valid.txt", "C\tr\tA\n");
  write_file(dir / "test.txt", "A\tr\tC\n");
  const auto ds = load_dataset(dir.path(), Scenario::kTransductive);
  CHECK(ds.train.triplets().size() == 2);
  REQUIRE(ds.valid.size() == 1);
  REQUIRE(ds.test.size() == 1);
  CHECK_FALSE(ds.train.contains(ds.valid[0]));
  CHECK_FALSE(ds.train.contains(ds.test[0]));
  CHECK(ds.valid[0] != ds.test[0]);
  CHECK(ds.full_test_space.size() == 4);
  CHECK(&ds.test_search_graph() == &ds.train);
}

TEST_CASE("datasets: inductive test graph must not share entities with train") {
  TempDir dir;
  write_file(dir / "train.txt", "A\tr\tB\n");
  write_file(dir / "valid.txt", "");
  write_file(dir / "test_graph.txt", "X\tr\tY\nY\tr\tZ\n");
  write_file(dir / "test.txt", "X\tr\tZ\n");
  const auto ds = load_dataset(dir.path(), Scenario::kInductive);
  REQUIRE(ds.test_graph.has_value());
  CHECK(&ds.test_search_graph() == &*ds.test_graph);
  CHECK(ds.test_graph->contains(kgcf::testing::trip(*ds.test_graph, "X", "r", "Y")));

  write_file(dir / "test_graph.txt", "A\tr\tY\n");
  write_file(dir / "test.txt", "Y\tr\tA\n");
  CHECK_THROWS_AS((void)load_dataset(dir.path(), Scenario::kInductive), LoadError);
}
