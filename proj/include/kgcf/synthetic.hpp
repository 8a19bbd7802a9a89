#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace kgcf {

/// Typed toy world with two compositional rules:
///   has_nationality(p, k) <- born_in(p, c), city_of(c, k)
///   works_in(p, c)        <- works_for(p, m), headquartered_in(m, c)
/// Derived relations are closed exactly over all base edges, distractors
/// included, so a derived fact holds iff its two-hop pattern exists.
struct SyntheticConfig {
  std::size_t people = 220;
  std::size_t cities = 40;
  std::size_t countries = 10;
  std::size_t companies = 30;
  /// Extra random base edges, as a fraction of the base edge count.
  double distractor_rate = 0.10;
  std::size_t test_queries = 200;
  std::size_t valid_queries = 40;
  std::uint64_t seed = 1;
  /// Writes a second, disjoint world as test_graph.txt and draws the test
  /// queries from it.
  bool inductive = false;
};

struct SyntheticSummary {
  std::size_t entities = 0;
  std::size_t train = 0;
  std::size_t valid = 0;
  std::size_t test = 0;
  std::size_t test_graph = 0;
  std::size_t distractors = 0;
};

/// Rule spec understood by parse_rules().
inline constexpr const char* kSyntheticRules =
    "has_nationality <- born_in, city_of ; works_in <- works_for, headquartered_in";

/// Writes train/valid/test(/test_graph).txt, entity2text.txt,
/// relation2text.txt and rules.txt into `dir`.
SyntheticSummary generate_synthetic(const SyntheticConfig& config, const std::filesystem::path& dir);

}  // namespace kgcf
