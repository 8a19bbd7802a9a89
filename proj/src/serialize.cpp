#include "kgcf/serialize.hpp"

#include <fstream>
#include <sstream>

#include "kgcf/error.hpp"

namespace kgcf {

namespace {

EntityId entity_of(const Graph& g, const std::string& id) {
  const auto h = g.entities().find(id);
  if (!h) throw LoadError("unknown entity '" + id + "'");
  return EntityId{*h};
}

RelationId relation_of(const Graph& g, const std::string& id) {
  const auto h = g.relations().find(id);
  if (!h) throw LoadError("unknown relation '" + id + "'");
  return RelationId{*h};
}

}  // namespace

json triplet_to_json(const Graph& graph, const Triplet& t) {
  return json::array({graph.entities().identifier(index(t.head)),
                      graph.relations().identifier(index(t.relation)),
                      graph.entities().identifier(index(t.tail))});
}

Triplet triplet_from_json(const Graph& graph, const json& j) {
  if (!j.is_array() || j.size() != 3) throw LoadError("triplet must be a 3-element array");
  return Triplet{entity_of(graph, j[0].get<std::string>()),
                 relation_of(graph, j[1].get<std::string>()),
                 entity_of(graph, j[2].get<std::string>())};
}

json path_to_json(const Graph& graph, const InferencePath& path) {
  json edges = json::array();
  for (const auto& e : path.trajectory.edges) {
    auto t = triplet_to_json(graph, e.triplet);
    t.push_back(e.direction == Direction::kForward ? "fwd" : "inv");
    edges.push_back(std::move(t));
  }
  return json{{"completion", triplet_to_json(graph, path.completion)}, {"edges", std::move(edges)}};
}

InferencePath path_from_json(const Graph& graph, const json& j) {
  InferencePath p;
  p.completion = triplet_from_json(graph, j.at("completion"));
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 4) throw LoadError("edge must be a 4-element array");
    json head = json::array({e[0], e[1], e[2]});
    const auto dir = e[3].get<std::string>();
    if (dir != "fwd" && dir != "inv") throw LoadError("edge direction must be fwd or inv");
    p.trajectory.edges.push_back(
        Edge{triplet_from_json(graph, head), dir == "fwd" ? Direction::kForward : Direction::kInverse});
  }
  return p;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records) {
  std::string out;
  for (const auto& r : records) {
    out += r.dump();
    out += '\n';
  }
  write_text_atomic(path, out);
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw LoadError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << contents;
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace kgcf
