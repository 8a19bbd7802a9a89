#include "kgcf/label_engine.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "kgcf/error.hpp"
#include "kgcf/hashing.hpp"

namespace kgcf {

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kLlm:
      return "llm";
    case Provenance::kOracle:
      return "oracle";
    case Provenance::kCache:
      return "cache";
  }
  return "oracle";
}

Provenance parse_provenance(std::string_view s) {
  if (s == "llm") return Provenance::kLlm;
  if (s == "oracle") return Provenance::kOracle;
  if (s == "cache") return Provenance::kCache;
  throw LoadError("unknown provenance '" + std::string(s) + "'");
}

std::vector<std::vector<LabelOutcome>> LabelBackend::label_groups(
    const Graph& graph, std::span<const std::vector<InferencePath>> groups) {
  std::vector<std::vector<LabelOutcome>> out;
  out.reserve(groups.size());
  for (const auto& g : groups) out.push_back(label_group(graph, g));
  return out;
}

std::vector<LabelOutcome> label_paths(LabelBackend& backend, const Graph& graph,
                                      std::span<const InferencePath> paths) {
  std::vector<std::vector<InferencePath>> groups;
  std::vector<std::vector<std::size_t>> positions;
  std::map<Triplet, std::size_t> group_of;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    auto [it, inserted] = group_of.try_emplace(paths[i].completion, groups.size());
    if (inserted) {
      groups.emplace_back();
      positions.emplace_back();
    }
    groups[it->second].push_back(paths[i]);
    positions[it->second].push_back(i);
  }
  auto labelled = backend.label_groups(graph, groups);
  std::vector<LabelOutcome> out(paths.size(), LabelFailure{"not labelled", 0});
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (labelled[g].size() != groups[g].size()) {
      throw BackendError("backend returned " + std::to_string(labelled[g].size()) +
                         " labels for " + std::to_string(groups[g].size()) + " paths");
    }
    for (std::size_t k = 0; k < groups[g].size(); ++k) out[positions[g][k]] = std::move(labelled[g][k]);
  }
  return out;
}

// ---------------------------------------------------------------------------

bool RuleOracle::matches_rule(const InferencePath& path) const {
  const auto it = config_.rules.find(path.completion.relation);
  if (it == config_.rules.end()) return false;
  const auto& edges = path.trajectory.edges;
  for (const auto& body : it->second) {
    if (body.size() != edges.size()) continue;
    bool ok = true;
    for (std::size_t i = 0; i < body.size() && ok; ++i) {
      ok = edges[i].triplet.relation == body[i].first && edges[i].direction == body[i].second;
    }
    if (ok) return true;
  }
  return false;
}

int RuleOracle::label(const InferencePath& path) const {
  if (matches_rule(path)) return 1;
  if (config_.distractor_flip_rate <= 0.0) return 0;
  std::uint64_t h = combine_seed(config_.seed, TripletHash{}(path.completion));
  for (const auto& e : path.trajectory.edges) {
    h = combine_seed(h, TripletHash{}(e.triplet));
    h = combine_seed(h, static_cast<std::uint64_t>(e.direction));
  }
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  return u < config_.distractor_flip_rate ? 1 : 0;
}

std::vector<LabelOutcome> RuleOracle::label_group(const Graph&,
                                                  std::span<const InferencePath> paths) {
  std::vector<LabelOutcome> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.emplace_back(LabeledPath{p, label(p), Provenance::kOracle, {}});
  return out;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

std::map<RelationId, std::vector<RuleBody>> parse_rules(const Graph& graph, std::string_view spec) {
  std::map<RelationId, std::vector<RuleBody>> rules;
  auto relation = [&](const std::string& id) {
    const auto h = graph.relations().find(id);
    if (!h) throw ConfigError("rule mentions unknown relation '" + id + "'");
    return RelationId{*h};
  };
  for (const auto& rule : split(spec, ';')) {
    if (rule.empty()) continue;
    const auto arrow = rule.find("<-");
    if (arrow == std::string::npos) throw ConfigError("rule '" + rule + "' lacks '<-'");
    const auto head = relation(trim(std::string_view(rule).substr(0, arrow)));
    RuleBody body;
    for (const auto& step : split(std::string_view(rule).substr(arrow + 2), ',')) {
      if (step.rfind("inv:", 0) == 0) {
        body.emplace_back(relation(trim(step.substr(4))), Direction::kInverse);
      } else {
        body.emplace_back(relation(step), Direction::kForward);
      }
    }
    if (body.empty()) throw ConfigError("rule '" + rule + "' has an empty body");
    rules[head].push_back(std::move(body));
  }
  return rules;
}

// ---------------------------------------------------------------------------

json to_json(const CacheRecord& r) {
  return json{{"claim", r.claim},
              {"context", r.context},
              {"label", r.label},
              {"provenance", std::string(to_string(r.provenance))},
              {"raw_response", r.raw_response},
              {"prompt_hash", r.prompt_hash}};
}

CacheRecord cache_record_from_json(const json& j) {
  CacheRecord r;
  r.claim = j.at("claim").get<std::string>();
  r.context = j.at("context").get<std::string>();
  r.label = j.at("label").get<int>();
  if (r.label != 0 && r.label != 1) throw LoadError("cache label out of range");
  r.provenance = parse_provenance(j.at("provenance").get<std::string>());
  r.raw_response = j.value("raw_response", std::string());
  r.prompt_hash = j.value("prompt_hash", std::string());
  return r;
}

LabelCache::LabelCache(std::filesystem::path path) : path_(std::move(path)) {
  if (std::filesystem::exists(path_)) {
    for (const auto& j : read_jsonl(path_)) {
      auto r = cache_record_from_json(j);
      records_.insert_or_assign(key(r.claim, r.context), std::move(r));
    }
  }
}

std::string LabelCache::key(const std::string& claim, const std::string& context) {
  std::string k = claim;
  k += '\x1f';
  k += context;
  return k;
}

std::optional<CacheRecord> LabelCache::find(const std::string& claim,
                                            const std::string& context) const {
  std::lock_guard lock(mu_);
  const auto it = records_.find(key(claim, context));
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

void LabelCache::append(const CacheRecord& record) {
  std::lock_guard lock(mu_);
  records_.insert_or_assign(key(record.claim, record.context), record);
  if (path_.empty()) return;
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw Error("cannot append to label cache " + path_.string());
  out << to_json(record).dump() << '\n';
  out.flush();
}

std::size_t LabelCache::size() const {
  std::lock_guard lock(mu_);
  return records_.size();
}

std::vector<LabelOutcome> ReplayCacheBackend::label_group(const Graph& graph,
                                                          std::span<const InferencePath> paths) {
  std::vector<LabelOutcome> out;
  out.reserve(paths.size());
  for (const auto& p : paths) {
    const auto text = textualize_path(graph, p);
    if (const auto hit = cache_->find(text.claim, text.context)) {
      out.emplace_back(LabeledPath{p, hit->label, Provenance::kCache, hit->raw_response});
    } else {
      out.emplace_back(LabelFailure{"replay cache miss", 0});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string build_prompt(const Graph& graph, std::string_view instruction,
                         std::span<const InferencePath> paths) {
  std::string prompt(instruction);
  prompt += "\n\nClaim: ";
  prompt += paths.empty() ? std::string() : textualize(graph, paths.front().completion);
  prompt += "\n\nContexts:\n";
  for (std::size_t i = 0; i < paths.size(); ++i) {
    prompt += std::to_string(i + 1);
    prompt += ". ";
    prompt += textualize_path(graph, paths[i]).context;
    prompt += '\n';
  }
  prompt +=
      "\nAnswer with exactly one line per context, in the form \"<index>: yes\" or "
      "\"<index>: no\", and nothing else.\n";
  return prompt;
}

std::vector<std::optional<int>> parse_label_response(std::string_view response, std::size_t count) {
  static const std::regex kLine(R"(^\s*(\d+)\s*:\s*(yes|no)\s*\.?\s*$)", std::regex::icase);
  std::vector<std::optional<int>> out(count);
  std::istringstream in{std::string(response)};
  std::string line;
  while (std::getline(in, line)) {
    std::smatch m;
    if (!std::regex_match(line, m, kLine)) continue;
    const auto idx = std::stoul(m[1].str());
    if (idx < 1 || idx > count) continue;
    std::string word = m[2].str();
    std::transform(word.begin(), word.end(), word.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out[idx - 1] = word == "yes" ? 1 : 0;
  }
  return out;
}

TokenBucket::TokenBucket(double rate_per_second, double burst)
    : rate_(rate_per_second), burst_(std::max(1.0, burst)), tokens_(burst_),
      last_(std::chrono::steady_clock::now()) {}

void TokenBucket::acquire() {
  if (rate_ <= 0.0) return;
  while (true) {
    std::chrono::duration<double> wait{0.0};
    {
      std::lock_guard lock(mu_);
      const auto now = std::chrono::steady_clock::now();
      tokens_ = std::min(burst_, tokens_ + rate_ * std::chrono::duration<double>(now - last_).count());
      last_ = now;
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
    }
    std::this_thread::sleep_for(wait);
  }
}

namespace {

struct ParsedUrl {
  std::string scheme_host_port;
  std::string prefix;
};

ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("base URL needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl p;
  p.scheme_host_port = url.substr(0, path_start);
  p.prefix = path_start == std::string::npos ? std::string() : url.substr(path_start);
  while (!p.prefix.empty() && p.prefix.back() == '/') p.prefix.pop_back();
  return p;
}

}  // namespace

RemoteLlmBackend::RemoteLlmBackend(RemoteLlmConfig config, std::shared_ptr<LabelCache> cache)
    : config_(std::move(config)), cache_(std::move(cache)),
      bucket_(config_.requests_per_second, static_cast<double>(std::max(1, config_.max_in_flight))) {
  const auto url = parse_url(config_.base_url);
  host_ = url.scheme_host_port;
  path_prefix_ = url.prefix;
  if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
}

std::string RemoteLlmBackend::complete(const std::string& prompt) {
  bucket_.acquire();
  httplib::Client client(host_);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  client.set_write_timeout(config_.timeout);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  const json body{{"model", config_.model},
                  {"temperature", 0},
                  {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})}};
  auto res = client.Post(path_prefix_ + "/chat/completions", headers, body.dump(), "application/json");
  if (!res) throw BackendError("LLM request failed: " + httplib::to_string(res.error()));
  if (res->status == 401 || res->status == 403) {
    throw BackendError("LLM authentication failed (HTTP " + std::to_string(res->status) +
                       "); set " + config_.api_key_env);
  }
  if (res->status != 200) {
    throw BackendError("LLM returned HTTP " + std::to_string(res->status));
  }
  try {
    const auto j = json::parse(res->body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed chat-completion response: ") + e.what());
  }
}

std::vector<LabelOutcome> RemoteLlmBackend::label_chunk(const Graph& graph,
                                                        std::span<const InferencePath> paths) {
  std::vector<LabelOutcome> out(paths.size(), LabelFailure{"no parseable answer", 0});
  std::vector<std::size_t> pending(paths.size());
  for (std::size_t i = 0; i < paths.size(); ++i) pending[i] = i;

  const int attempts = 1 + std::max(0, config_.max_retries);
  for (int attempt = 1; attempt <= attempts && !pending.empty(); ++attempt) {
    std::vector<InferencePath> batch;
    for (const auto i : pending) batch.push_back(paths[i]);
    const auto prompt = build_prompt(graph, config_.instruction, batch);
    std::string response;
    try {
      response = complete(prompt);
    } catch (const BackendError& e) {
      if (attempt == attempts || std::string_view(e.what()).find("authentication") != std::string_view::npos) {
        throw BackendError(e.what(), attempt);
      }
      continue;
    }
    const auto parsed = parse_label_response(response, batch.size());
    const auto prompt_hash = sha256_hex(prompt);
    std::vector<std::size_t> still;
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const auto i = pending[k];
      if (!parsed[k]) {
        out[i] = LabelFailure{"no parseable answer", attempt};
        still.push_back(i);
        continue;
      }
      out[i] = LabeledPath{paths[i], *parsed[k], Provenance::kLlm, response};
      if (cache_) {
        const auto text = textualize_path(graph, paths[i]);
        cache_->append(CacheRecord{text.claim, text.context, *parsed[k], Provenance::kLlm, response,
                                   prompt_hash});
      }
    }
    pending = std::move(still);
  }
  return out;
}

std::vector<LabelOutcome> RemoteLlmBackend::label_group(const Graph& graph,
                                                        std::span<const InferencePath> paths) {
  std::vector<LabelOutcome> out;
  out.reserve(paths.size());
  const std::size_t budget_chars = config_.token_budget * 4;
  const std::size_t base = config_.instruction.size() + 200 +
                           (paths.empty() ? 0 : textualize(graph, paths.front().completion).size());
  std::size_t start = 0;
  while (start < paths.size()) {
    std::size_t end = start;
    std::size_t used = base;
    while (end < paths.size()) {
      const auto len = textualize_path(graph, paths[end]).context.size() + 8;
      if (end > start && used + len > budget_chars) break;
      used += len;
      ++end;
    }
    auto part = label_chunk(graph, paths.subspan(start, end - start));
    for (auto& o : part) out.push_back(std::move(o));
    start = end;
  }
  return out;
}

std::vector<std::vector<LabelOutcome>> RemoteLlmBackend::label_groups(
    const Graph& graph, std::span<const std::vector<InferencePath>> groups) {
  std::vector<std::vector<LabelOutcome>> out(groups.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    while (true) {
      const auto i = next.fetch_add(1);
      if (i >= groups.size()) return;
      {
        std::lock_guard lock(err_mu);
        if (first_error) return;
      }
      try {
        out[i] = label_group(graph, groups[i]);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  const auto n = static_cast<std::size_t>(std::max(1, config_.max_in_flight));
  std::vector<std::jthread> threads;
  for (std::size_t t = 0; t < std::min(n, groups.size()); ++t) threads.emplace_back(worker);
  threads.clear();
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<ScSelection> select_sc_triplets(const Graph& graph, std::size_t max_len,
                                            std::size_t per_relation, std::size_t cap) {
  std::vector<std::size_t> counts(graph.num_relations(), 0);
  std::vector<Triplet> chosen;
  for (const auto& t : graph.triplets()) {
    auto& c = counts[index(t.relation)];
    if (c >= per_relation) continue;
    chosen.push_back(t);
    ++c;
  }
  std::vector<PathQuery> queries;
  queries.reserve(chosen.size());
  for (const auto& t : chosen) queries.push_back(PathQuery{t.head, t.tail, t});
  auto trajectories = enumerate_paths_parallel(graph, queries, max_len, cap);

  std::vector<ScSelection> out;
  out.reserve(chosen.size());
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    ScSelection s{chosen[i], {}};
    for (auto& tr : trajectories[i]) s.paths.push_back(InferencePath{chosen[i], std::move(tr)});
    out.push_back(std::move(s));
  }
  return out;
}

ScDataset label_selection(const Graph& graph, LabelBackend& backend,
                          std::span<const ScSelection> selection, FailurePolicy policy) {
  ScDataset ds;
  std::vector<std::vector<InferencePath>> groups;
  for (const auto& s : selection) {
    ++ds.per_relation_counts[s.triplet.relation];
    if (!s.paths.empty()) groups.push_back(s.paths);
  }
  auto labelled = backend.label_groups(graph, groups);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (labelled[g].size() != groups[g].size()) {
      throw BackendError("backend returned a wrong number of labels");
    }
    for (auto& outcome : labelled[g]) {
      if (auto* lp = std::get_if<LabeledPath>(&outcome)) {
        if (lp->label != 0 && lp->label != 1) throw BackendError("backend label out of range");
        ds.items.push_back(std::move(*lp));
        continue;
      }
      const auto& f = std::get<LabelFailure>(outcome);
      if (policy == FailurePolicy::kAbort) {
        throw BackendError("labelling failed: " + f.reason, f.attempts);
      }
      ++ds.failed_paths;
    }
  }
  return ds;
}

ScDataset build_sc_dataset(const Graph& graph, LabelBackend& backend, std::size_t max_len,
                           std::size_t per_relation, std::size_t cap, FailurePolicy policy) {
  const auto selection = select_sc_triplets(graph, max_len, per_relation, cap);
  return label_selection(graph, backend, selection, policy);
}

std::vector<json> sc_dataset_records(const Graph& graph, const ScDataset& ds) {
  std::vector<json> out;
  out.reserve(ds.items.size());
  for (const auto& item : ds.items) {
    const auto text = textualize_path(graph, item.path);
    out.push_back(json{{"claim", text.claim},
                       {"context", text.context},
                       {"label", item.label},
                       {"path", path_to_json(graph, item.path)}});
  }
  return out;
}

std::vector<json> label_log_records(const Graph& graph, const ScDataset& ds) {
  std::vector<json> out;
  out.reserve(ds.items.size());
  for (const auto& item : ds.items) {
    const auto text = textualize_path(graph, item.path);
    json j{{"claim", text.claim},
           {"context", text.context},
           {"label", item.label},
           {"provenance", std::string(to_string(item.provenance))}};
    if (item.raw_response) j["raw_response"] = *item.raw_response;
    out.push_back(std::move(j));
  }
  return out;
}

ScDataset sc_dataset_from_records(const Graph& graph, const std::vector<json>& records) {
  ScDataset ds;
  for (const auto& r : records) {
    LabeledPath lp;
    lp.path = path_from_json(graph, r.at("path"));
    lp.label = r.at("label").get<int>();
    if (lp.label != 0 && lp.label != 1) throw LoadError("label out of range in dataset");
    lp.provenance = Provenance::kOracle;
    ds.items.push_back(std::move(lp));
  }
  return ds;
}

}  // namespace kgcf
