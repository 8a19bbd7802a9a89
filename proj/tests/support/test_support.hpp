#pragma once

// Shared fixtures and independent oracles for the unit tests. Nothing here
// calls into the code under test beyond building graphs.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "kgcf/kg_store.hpp"
#include "kgcf/path_engine.hpp"

namespace kgcf::testing {

/// Directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("kgcf-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Graph over entities "e0".."e{n-1}" and relations "r0".."r{k-1}" with up to
/// `edges` random distinct triplets (self loops excluded). Every entity is
/// interned even if isolated.
inline Graph random_graph(std::size_t nodes, std::size_t edges, std::size_t relations,
                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GraphBuilder b;
  for (std::size_t i = 0; i < nodes; ++i) b.entity("e" + std::to_string(i));
  for (std::size_t r = 0; r < relations; ++r) b.relation("r" + std::to_string(r));
  std::uniform_int_distribution<std::size_t> pick_node(0, nodes - 1);
  std::uniform_int_distribution<std::size_t> pick_rel(0, relations - 1);
  for (std::size_t tries = 0; tries < edges * 4 && b.size() < edges; ++tries) {
    const auto h = pick_node(rng);
    const auto t = pick_node(rng);
    if (h == t) continue;
    b.add("e" + std::to_string(h), "r" + std::to_string(pick_rel(rng)), "e" + std::to_string(t));
  }
  return std::move(b).build();
}

/// (stored triplet, direction) steps.
using RawPath = std::vector<std::pair<Triplet, Direction>>;

/// Every entity-simple walk source -> target of length 1..max_len built
/// from the raw triplet list, skipping `excluded` in both directions.
inline std::set<RawPath> brute_force_paths(const Graph& g, EntityId source, EntityId target,
                                           std::size_t max_len, const Triplet& excluded) {
  std::set<RawPath> out;
  RawPath cur;
  std::vector<EntityId> visited{source};
  auto rec = [&](auto&& self, EntityId at) -> void {
    if (cur.size() == max_len) return;
    for (const auto& t : g.triplets()) {
      if (t == excluded) continue;
      for (const auto dir : {Direction::kForward, Direction::kInverse}) {
        const auto from = dir == Direction::kForward ? t.head : t.tail;
        const auto to = dir == Direction::kForward ? t.tail : t.head;
        if (from != at) continue;
        if (std::find(visited.begin(), visited.end(), to) != visited.end()) continue;
        cur.emplace_back(t, dir);
        if (to == target) {
          out.insert(cur);
        } else {
          visited.push_back(to);
          self(self, to);
          visited.pop_back();
        }
        cur.pop_back();
      }
    }
  };
  if (source != target) rec(rec, source);
  return out;
}

inline RawPath to_raw(const Trajectory& t) {
  RawPath out;
  for (const auto& e : t.edges) out.emplace_back(e.triplet, e.direction);
  return out;
}

inline std::set<RawPath> to_raw_set(const std::vector<Trajectory>& ts) {
  std::set<RawPath> out;
  for (const auto& t : ts) out.insert(to_raw(t));
  return out;
}

/// Runs a shell command and returns its exit status (or -1).
inline int run_command(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  if (status == -1 || !WIFEXITED(status)) return -1;
  return WEXITSTATUS(status);
}

inline EntityId ent(const Graph& g, const std::string& id) {
  return EntityId{g.entities().find(id).value()};
}
inline RelationId rel(const Graph& g, const std::string& id) {
  return RelationId{g.relations().find(id).value()};
}
inline Triplet trip(const Graph& g, const std::string& h, const std::string& r, const std::string& t) {
  return Triplet{ent(g, h), rel(g, r), ent(g, t)};
}

}  // namespace kgcf::testing
