#include "kgcf/kg_store.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "kgcf/error.hpp"
#include "kgcf/hashing.hpp"

namespace kgcf {

std::size_t TripletHash::operator()(const Triplet& t) const noexcept {
  const std::uint64_t packed = (static_cast<std::uint64_t>(index(t.head)) << 32) ^
                               (static_cast<std::uint64_t>(index(t.relation)) << 21) ^
                               index(t.tail);
  return static_cast<std::size_t>(mix64(packed ^ (static_cast<std::uint64_t>(index(t.relation)) << 53)));
}

std::uint32_t Vocabulary::intern(std::string_view identifier) {
  if (auto it = lookup_.find(std::string(identifier)); it != lookup_.end()) return it->second;
  const auto handle = static_cast<std::uint32_t>(identifiers_.size());
  identifiers_.emplace_back(identifier);
  texts_.emplace_back(identifier);
  lookup_.emplace(std::string(identifier), handle);
  return handle;
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view identifier) const {
  if (auto it = lookup_.find(std::string(identifier)); it != lookup_.end()) return it->second;
  return std::nullopt;
}

const std::string& Vocabulary::identifier(std::uint32_t handle) const {
  return identifiers_.at(handle);
}

const std::string& Vocabulary::text(std::uint32_t handle) const { return texts_.at(handle); }

void Vocabulary::set_text(std::uint32_t handle, std::string text) {
  texts_.at(handle) = std::move(text);
}

std::span<const Edge> Graph::neighbors(EntityId entity) const {
  const auto e = index(entity);
  if (e >= num_entities()) {
    throw std::out_of_range("unknown entity handle " + std::to_string(e));
  }
  return std::span<const Edge>(adjacency_).subspan(offsets_[e], offsets_[e + 1] - offsets_[e]);
}

std::optional<RelationId> GraphBuilder::find_relation(std::string_view identifier) const {
  if (auto h = relations_.find(identifier)) return RelationId{*h};
  return std::nullopt;
}

bool GraphBuilder::add(const Triplet& t) {
  if (!seen_.insert(t).second) return false;
  triplets_.push_back(t);
  return true;
}

bool GraphBuilder::add(std::string_view head, std::string_view relation, std::string_view tail) {
  const auto h = entity(head);
  const auto r = this->relation(relation);
  const auto t = entity(tail);
  return add(Triplet{h, r, t});
}

Graph GraphBuilder::build() && {
  Graph g;
  g.entities_ = std::move(entities_);
  g.relations_ = std::move(relations_);
  g.triplets_ = std::move(triplets_);
  g.index_ = std::move(seen_);
  std::sort(g.triplets_.begin(), g.triplets_.end());

  const std::size_t n = g.entities_.size();
  const std::size_t num_rel = g.relations_.size();
  std::vector<std::size_t> degree(n, 0);
  for (const auto& t : g.triplets_) {
    ++degree[index(t.head)];
    ++degree[index(t.tail)];
  }
  g.offsets_.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) g.offsets_[i + 1] = g.offsets_[i] + degree[i];
  g.adjacency_.resize(g.offsets_[n]);
  std::vector<std::size_t> fill(g.offsets_.begin(), g.offsets_.end() - 1);
  for (const auto& t : g.triplets_) {
    g.adjacency_[fill[index(t.head)]++] = Edge{t, Direction::kForward};
    g.adjacency_[fill[index(t.tail)]++] = Edge{t, Direction::kInverse};
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto first = g.adjacency_.begin() + static_cast<std::ptrdiff_t>(g.offsets_[i]);
    auto last = g.adjacency_.begin() + static_cast<std::ptrdiff_t>(g.offsets_[i + 1]);
    std::sort(first, last, [num_rel](const Edge& a, const Edge& b) {
      const auto ka = std::tuple(a.signed_relation(num_rel), index(a.target()), a.direction);
      const auto kb = std::tuple(b.signed_relation(num_rel), index(b.target()), b.direction);
      return ka < kb;
    });
  }
  return g;
}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      cols.push_back(line.substr(start));
      break;
    }
    cols.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return cols;
}

std::string_view chomp(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::vector<RawTriplet> read_triples_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open triples file " + path.string());
  std::vector<RawTriplet> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = chomp(line);
    if (view.find_first_not_of(" \t") == std::string_view::npos) continue;
    const auto cols = split_tabs(view);
    if (cols.size() != 3 || cols[0].empty() || cols[1].empty() || cols[2].empty()) {
      throw LoadError(path.string() + ":" + std::to_string(line_no) +
                      ": expected 3 tab-separated columns, got " + std::to_string(cols.size()));
    }
    out.push_back({std::string(cols[0]), std::string(cols[1]), std::string(cols[2])});
  }
  return out;
}

std::unordered_map<std::string, std::string> read_text_file(const std::filesystem::path& path) {
  std::unordered_map<std::string, std::string> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    const auto view = chomp(line);
    const auto tab = view.find('\t');
    if (tab == std::string_view::npos) continue;
    out.emplace(std::string(view.substr(0, tab)), std::string(view.substr(tab + 1)));
  }
  return out;
}

std::size_t apply_texts(Vocabulary& vocab,
                        const std::unordered_map<std::string, std::string>& texts) {
  std::size_t missing = 0;
  for (std::uint32_t h = 0; h < vocab.size(); ++h) {
    const auto it = texts.find(vocab.identifier(h));
    if (it == texts.end() || it->second.empty()) {
      ++missing;
      vocab.set_text(h, vocab.identifier(h));
    } else {
      vocab.set_text(h, it->second);
    }
  }
  return missing;
}

Graph load_graph(const std::filesystem::path& triples_file,
                 const std::filesystem::path& entity_text_file,
                 const std::filesystem::path& relation_text_file, LoadReport* report) {
  const auto raw = read_triples_file(triples_file);
  if (raw.empty()) throw LoadError("empty triples file " + triples_file.string());
  GraphBuilder builder;
  LoadReport local;
  local.lines = raw.size();
  for (const auto& t : raw) {
    if (!builder.add(t.head, t.relation, t.tail)) ++local.duplicates;
  }
  local.missing_entity_text = apply_texts(builder.entities(), read_text_file(entity_text_file));
  local.missing_relation_text =
      apply_texts(builder.relations(), read_text_file(relation_text_file));
  if (report) *report = local;
  return std::move(builder).build();
}

std::string_view to_string(Scenario s) {
  return s == Scenario::kInductive ? "inductive" : "transductive";
}

Scenario parse_scenario(std::string_view s) {
  if (s == "transductive") return Scenario::kTransductive;
  if (s == "inductive") return Scenario::kInductive;
  throw ConfigError("unknown scenario '" + std::string(s) + "'");
}

namespace {

std::vector<RawTriplet> read_optional(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return {};
  return read_triples_file(path);
}

Triplet intern_triplet(GraphBuilder& b, const RawTriplet& raw, const std::string& where) {
  const auto r = b.find_relation(raw.relation);
  if (!r) throw LoadError(where + ": relation '" + raw.relation + "' does not occur in the graph");
  return Triplet{b.entity(raw.head), *r, b.entity(raw.tail)};
}

void require_disjoint(const TripletSet& a, const std::vector<Triplet>& b, const std::string& what) {
  for (const auto& t : b) {
    if (a.contains(t)) throw LoadError("splits overlap: " + what);
  }
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& dir, Scenario scenario) {
  const auto ent_texts = read_text_file(dir / "entity2text.txt");
  const auto rel_texts = read_text_file(dir / "relation2text.txt");
  const auto train_raw = read_triples_file(dir / "train.txt");
  if (train_raw.empty()) throw LoadError("empty triples file " + (dir / "train.txt").string());
  const auto valid_raw = read_optional(dir / "valid.txt");
  const auto test_raw = read_optional(dir / "test.txt");

  Dataset ds;
  ds.scenario = scenario;
  ds.report.lines = train_raw.size();

  GraphBuilder train_builder;
  for (const auto& t : train_raw) {
    if (!train_builder.add(t.head, t.relation, t.tail)) ++ds.report.duplicates;
  }
  for (const auto& t : valid_raw) ds.valid.push_back(intern_triplet(train_builder, t, "valid.txt"));

  std::optional<GraphBuilder> test_builder;
  if (scenario == Scenario::kTransductive) {
    for (const auto& t : test_raw) ds.test.push_back(intern_triplet(train_builder, t, "test.txt"));
  } else {
    const auto graph_raw = read_triples_file(dir / "test_graph.txt");
    if (graph_raw.empty()) throw LoadError("empty triples file " + (dir / "test_graph.txt").string());
    test_builder.emplace(train_builder.relations());
    for (const auto& t : graph_raw) {
      if (!test_builder->find_relation(t.relation)) {
        throw LoadError("test_graph.txt: relation '" + t.relation + "' unseen in training graph");
      }
      test_builder->add(t.head, t.relation, t.tail);
    }
    for (const auto& t : test_raw) ds.test.push_back(intern_triplet(*test_builder, t, "test.txt"));
    for (std::uint32_t h = 0; h < test_builder->entities().size(); ++h) {
      if (train_builder.entities().find(test_builder->entities().identifier(h))) {
        throw LoadError("inductive split: entity '" + test_builder->entities().identifier(h) +
                        "' appears in both train and test graphs");
      }
    }
  }

  ds.report.missing_entity_text = apply_texts(train_builder.entities(), ent_texts);
  ds.report.missing_relation_text = apply_texts(train_builder.relations(), rel_texts);
  if (test_builder) {
    ds.report.missing_entity_text += apply_texts(test_builder->entities(), ent_texts);
    apply_texts(test_builder->relations(), rel_texts);
  }
  ds.train = std::move(train_builder).build();
  if (test_builder) ds.test_graph = std::move(*test_builder).build();

  const TripletSet train_set(ds.train.triplets().begin(), ds.train.triplets().end());
  require_disjoint(train_set, ds.valid, "train/valid");
  const TripletSet valid_set(ds.valid.begin(), ds.valid.end());
  if (scenario == Scenario::kTransductive) {
    require_disjoint(train_set, ds.test, "train/test");
    require_disjoint(valid_set, ds.test, "valid/test");
    ds.full_test_space = train_set;
    ds.full_test_space.insert(ds.valid.begin(), ds.valid.end());
  } else {
    const auto graph_triplets = ds.test_graph->triplets();
    ds.full_test_space.insert(graph_triplets.begin(), graph_triplets.end());
    require_disjoint(ds.full_test_space, ds.test, "test_graph/test");
  }
  ds.full_test_space.insert(ds.test.begin(), ds.test.end());
  return ds;
}

}  // namespace kgcf
