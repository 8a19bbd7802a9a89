#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "kgcf/kg_store.hpp"
#include "kgcf/path_engine.hpp"

namespace kgcf {

using json = nlohmann::json;

/// Paths are stored by identifier so they survive re-loading the graph.
[[nodiscard]] json path_to_json(const Graph& graph, const InferencePath& path);
/// Throws LoadError if an identifier is unknown to `graph`.
[[nodiscard]] InferencePath path_from_json(const Graph& graph, const json& j);

[[nodiscard]] json triplet_to_json(const Graph& graph, const Triplet& t);
[[nodiscard]] Triplet triplet_from_json(const Graph& graph, const json& j);

/// One compact JSON object per line, keys in insertion-independent order.
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records);
[[nodiscard]] std::vector<json> read_jsonl(const std::filesystem::path& path);

/// Writes via a temporary file and rename so readers never see partial files.
void write_text_atomic(const std::filesystem::path& path, const std::string& contents);
[[nodiscard]] std::string read_text(const std::filesystem::path& path);

}  // namespace kgcf
