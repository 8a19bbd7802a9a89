#include "kgcf/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "kgcf/error.hpp"
#include "kgcf/serialize.hpp"

namespace kgcf {

namespace {

using Fact = std::tuple<std::string, std::string, std::string>;

struct World {
  std::vector<std::string> people, cities, countries, companies;
  std::set<Fact> base;
  std::vector<Fact> derived;  // sorted
  std::size_t distractors = 0;
  std::vector<std::pair<std::string, std::string>> texts;
};

World make_world(const SyntheticConfig& cfg, const std::string& prefix, std::mt19937_64& rng) {
  World w;
  // Display text is the type word plus a per-entity name token ("city c4"),
  // so names never collide across types.
  auto make = [&](std::vector<std::string>& out, std::size_t n, const std::string& kind) {
    for (std::size_t i = 0; i < n; ++i) {
      out.push_back(prefix + kind + "_" + std::to_string(i));
      w.texts.emplace_back(out.back(), kind + " " + prefix + kind.substr(0, 1) + std::to_string(i));
    }
  };
  make(w.people, cfg.people, "person");
  make(w.cities, cfg.cities, "city");
  make(w.countries, cfg.countries, "country");
  make(w.companies, cfg.companies, "company");

  auto pick = [&](const std::vector<std::string>& v) -> const std::string& {
    std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
    return v[d(rng)];
  };
  for (const auto& c : w.cities) w.base.emplace(c, "city_of", pick(w.countries));
  for (const auto& m : w.companies) w.base.emplace(m, "headquartered_in", pick(w.cities));
  for (const auto& p : w.people) {
    w.base.emplace(p, "born_in", pick(w.cities));
    w.base.emplace(p, "works_for", pick(w.companies));
  }

  std::vector<std::string> all;
  for (const auto* v : {&w.people, &w.cities, &w.countries, &w.companies}) all.insert(all.end(), v->begin(), v->end());
  static constexpr std::array<const char*, 4> kBase{"born_in", "city_of", "works_for", "headquartered_in"};
  const auto target = static_cast<std::size_t>(std::llround(cfg.distractor_rate * static_cast<double>(w.base.size())));
  std::uniform_int_distribution<std::size_t> rel(0, kBase.size() - 1);
  while (w.distractors < target) {
    const auto& h = pick(all);
    const auto& t = pick(all);
    if (h == t) continue;
    if (w.base.emplace(h, kBase[rel(rng)], t).second) ++w.distractors;
  }

  // Exact closure of both rules over every base edge.
  std::set<Fact> derived;
  for (const auto& [h, r, t] : w.base) {
    const char* second = r == "born_in" ? "city_of" : r == "works_for" ? "headquartered_in" : nullptr;
    const char* head = r == "born_in" ? "has_nationality" : "works_in";
    if (!second) continue;
    for (auto it = w.base.lower_bound(Fact{t, second, ""}); it != w.base.end(); ++it) {
      if (std::get<0>(*it) != t || std::get<1>(*it) != second) break;
      if (h != std::get<2>(*it)) derived.emplace(h, head, std::get<2>(*it));
    }
  }
  w.derived.assign(derived.begin(), derived.end());
  return w;
}

std::string lines(const std::vector<Fact>& facts) {
  std::string s;
  for (const auto& [h, r, t] : facts) {
    s += h;
    s += '\t';
    s += r;
    s += '\t';
    s += t;
    s += '\n';
  }
  return s;
}

}  // namespace

SyntheticSummary generate_synthetic(const SyntheticConfig& cfg, const std::filesystem::path& dir) {
  if (cfg.people == 0 || cfg.cities == 0 || cfg.countries == 0 || cfg.companies == 0) {
    throw ConfigError("synthetic world needs at least one entity of each type");
  }
  std::mt19937_64 rng(cfg.seed);
  World train_world = make_world(cfg, "", rng);
  SyntheticSummary summary;
  summary.distractors = train_world.distractors;

  std::vector<Fact> derived = train_world.derived;
  std::shuffle(derived.begin(), derived.end(), rng);

  std::vector<Fact> train(train_world.base.begin(), train_world.base.end());
  std::vector<Fact> valid, test, test_graph;
  auto texts = train_world.texts;

  if (!cfg.inductive) {
    if (cfg.test_queries + cfg.valid_queries >= derived.size()) {
      throw ConfigError("synthetic world has too few derived facts for the requested splits");
    }
    test.assign(derived.begin(), derived.begin() + static_cast<std::ptrdiff_t>(cfg.test_queries));
    valid.assign(derived.begin() + static_cast<std::ptrdiff_t>(cfg.test_queries),
                 derived.begin() + static_cast<std::ptrdiff_t>(cfg.test_queries + cfg.valid_queries));
    train.insert(train.end(), derived.begin() + static_cast<std::ptrdiff_t>(cfg.test_queries + cfg.valid_queries),
                 derived.end());
  } else {
    if (cfg.valid_queries >= derived.size()) throw ConfigError("too few derived facts for validation");
    valid.assign(derived.begin(), derived.begin() + static_cast<std::ptrdiff_t>(cfg.valid_queries));
    train.insert(train.end(), derived.begin() + static_cast<std::ptrdiff_t>(cfg.valid_queries), derived.end());

    World test_world = make_world(cfg, "t_", rng);
    std::vector<Fact> test_derived = test_world.derived;
    std::shuffle(test_derived.begin(), test_derived.end(), rng);
    if (cfg.test_queries >= test_derived.size()) throw ConfigError("too few derived facts for testing");
    test.assign(test_derived.begin(), test_derived.begin() + static_cast<std::ptrdiff_t>(cfg.test_queries));
    test_graph.assign(test_world.base.begin(), test_world.base.end());
    test_graph.insert(test_graph.end(), test_derived.begin() + static_cast<std::ptrdiff_t>(cfg.test_queries),
                      test_derived.end());
    texts.insert(texts.end(), test_world.texts.begin(), test_world.texts.end());
    summary.distractors += test_world.distractors;
  }

  // Shuffled file order so handle order does not follow entity type.
  std::shuffle(train.begin(), train.end(), rng);
  std::shuffle(test_graph.begin(), test_graph.end(), rng);

  std::filesystem::create_directories(dir);
  write_text_atomic(dir / "train.txt", lines(train));
  write_text_atomic(dir / "valid.txt", lines(valid));
  write_text_atomic(dir / "test.txt", lines(test));
  if (cfg.inductive) write_text_atomic(dir / "test_graph.txt", lines(test_graph));

  std::string ent;
  for (const auto& [id, text] : texts) ent += id + "\t" + text + "\n";
  write_text_atomic(dir / "entity2text.txt", ent);
  write_text_atomic(dir / "relation2text.txt",
                    "born_in\twas born in\n"
                    "city_of\tis a city of\n"
                    "works_for\tworks for\n"
                    "headquartered_in\tis headquartered in\n"
                    "has_nationality\thas nationality\n"
                    "works_in\tworks in\n");
  write_text_atomic(dir / "rules.txt", std::string(kSyntheticRules) + "\n");

  summary.entities = texts.size();
  summary.train = train.size();
  summary.valid = valid.size();
  summary.test = test.size();
  summary.test_graph = test_graph.size();
  return summary;
}

}  // namespace kgcf
