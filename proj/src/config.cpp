#include "kgcf/config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <map>
#include <set>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "kgcf/error.hpp"

namespace kgcf {

namespace pt = boost::property_tree;
namespace fs = std::filesystem;

std::string_view to_string(LabelBackendKind k) {
  switch (k) {
    case LabelBackendKind::kRuleOracle: return "rule_oracle";
    case LabelBackendKind::kRemoteLlm: return "remote_llm";
    case LabelBackendKind::kReplayCache: return "replay_cache";
  }
  return "?";
}

std::string_view to_string(ScorerBackendKind k) {
  return k == ScorerBackendKind::kBuiltin ? "builtin" : "remote_plm";
}

std::string_view to_string(EvalSetting s) { return s == EvalSetting::kFixed ? "fixed" : "diff"; }

EvalSetting parse_eval_setting(std::string_view s) {
  if (s == "fixed") return EvalSetting::kFixed;
  if (s == "diff") return EvalSetting::kDiff;
  throw ConfigError("eval setting must be 'fixed' or 'diff', got '" + std::string(s) + "'");
}

std::size_t PipelineConfig::test_max_len() const {
  return setting == EvalSetting::kFixed ? fixed_test_max_len : max_len;
}

fs::path PipelineConfig::resolved_rules_file() const {
  return rules_file.empty() ? dataset_dir / "rules.txt" : rules_file;
}

fs::path PipelineConfig::resolved_label_cache() const {
  return label_cache.empty() ? output_dir / "label_cache.jsonl" : label_cache;
}

void PipelineConfig::validate() const {
  if (dataset_dir.empty()) throw ConfigError("dataset.dir is not set");
  for (const char* f : {"train.txt", "entity2text.txt", "relation2text.txt"}) {
    if (!fs::exists(dataset_dir / f)) {
      throw ConfigError("dataset file missing: " + (dataset_dir / f).string());
    }
  }
  if (scenario == Scenario::kInductive && !fs::exists(dataset_dir / "test_graph.txt")) {
    throw ConfigError("inductive dataset needs " + (dataset_dir / "test_graph.txt").string());
  }
  if (max_len < 1) throw ConfigError("paths.max_len must be >= 1");
  if (per_relation < 1) throw ConfigError("paths.per_relation must be >= 1");
  if (path_cap < 1) throw ConfigError("paths.cap must be >= 1");
  if (fixed_test_max_len < 1) throw ConfigError("eval.test_max_len must be >= 1");
  if (negatives < 1) throw ConfigError("eval.negatives must be >= 1");
  if (ks.empty()) throw ConfigError("eval.ks must not be empty");
  for (int k : ks) {
    if (k < 1) throw ConfigError("eval.ks entries must be >= 1");
  }
  if (flip_rate < 0.0 || flip_rate > 1.0) throw ConfigError("label.flip_rate must be in [0, 1]");
  if (label_backend == LabelBackendKind::kRuleOracle && rules.empty() &&
      !fs::exists(resolved_rules_file())) {
    throw ConfigError("rule_oracle needs label.rules or a rules file at " +
                      resolved_rules_file().string());
  }
  if (label_backend == LabelBackendKind::kRemoteLlm && llm.base_url.empty()) {
    throw ConfigError("remote_llm needs label.base_url");
  }
  if (scorer_backend == ScorerBackendKind::kRemote && remote_scorer.endpoint.empty()) {
    throw ConfigError("remote_plm needs scorer.endpoint");
  }
  if (sc.epochs < 1 || sc.batch_size < 1 || scorer.epochs < 1 || scorer.batch_size < 1) {
    throw ConfigError("epochs and batch sizes must be >= 1");
  }
  if (!(sc.learning_rate > 0.0) || !(scorer.learning_rate > 0.0)) {
    throw ConfigError("learning rates must be positive");
  }
  if (jobs < 0) throw ConfigError("run.jobs must be >= 0");
  filter.validate();
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string unquote(std::string s) {
  s = trim(s);
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

std::vector<std::string> split_list(std::string s) {
  s = trim(s);
  if (s.size() >= 2 && s.front() == '[' && s.back() == ']') s = s.substr(1, s.size() - 2);
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto item = unquote(s.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError("bad value for " + key + ": '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("bad boolean for " + key + ": '" + value + "'");
}

DegeneratePolicy parse_degenerate(const std::string& key, const std::string& value) {
  if (value == "error") return DegeneratePolicy::kError;
  if (value == "untrained") return DegeneratePolicy::kUntrained;
  throw ConfigError(key + " must be 'error' or 'untrained'");
}

const std::set<std::string> kPathKeys{"dataset.dir", "output.dir", "label.rules_file", "label.cache"};

void flatten(const pt::ptree& tree, const std::string& prefix, std::map<std::string, std::string>& out) {
  for (const auto& [name, child] : tree) {
    const auto key = prefix.empty() ? name : prefix + "." + name;
    if (child.empty()) {
      out[key] = unquote(child.data());
    } else {
      flatten(child, key, out);
    }
  }
}

}  // namespace

ConfigOverride parse_override(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos || text.substr(0, eq).find('.') == std::string_view::npos) {
    throw ConfigError("override must look like section.key=value, got '" + std::string(text) + "'");
  }
  return {trim(text.substr(0, eq)), unquote(std::string(text.substr(eq + 1)))};
}

PipelineConfig load_config(const fs::path& file, const std::vector<ConfigOverride>& overrides) {
  std::map<std::string, std::string> values;
  if (!file.empty()) {
    if (!fs::exists(file)) throw ConfigError("config file not found: " + file.string());
    pt::ptree tree;
    try {
      pt::read_ini(file.string(), tree);
    } catch (const pt::ini_parser_error& e) {
      throw ConfigError("cannot parse config: " + std::string(e.what()));
    }
    flatten(tree, "", values);
    const auto base = fs::absolute(file).parent_path();
    for (const auto& key : kPathKeys) {
      auto it = values.find(key);
      if (it != values.end() && !it->second.empty() && fs::path(it->second).is_relative()) {
        it->second = (base / it->second).lexically_normal().string();
      }
    }
  }
  for (const auto& o : overrides) values[o.key] = o.value;

  PipelineConfig c;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto size = [](std::size_t& dst) -> Setter {
    return [&dst](const std::string& k, const std::string& v) { dst = parse_number<std::size_t>(k, v); };
  };
  auto u64 = [](std::uint64_t& dst) -> Setter {
    return [&dst](const std::string& k, const std::string& v) { dst = parse_number<std::uint64_t>(k, v); };
  };
  auto real = [](double& dst) -> Setter {
    return [&dst](const std::string& k, const std::string& v) { dst = parse_number<double>(k, v); };
  };
  auto text = [](std::string& dst) -> Setter {
    return [&dst](const std::string&, const std::string& v) { dst = v; };
  };
  auto path = [](fs::path& dst) -> Setter {
    return [&dst](const std::string&, const std::string& v) { dst = v; };
  };
  auto flag = [](bool& dst) -> Setter {
    return [&dst](const std::string& k, const std::string& v) { dst = parse_bool(k, v); };
  };
  auto seconds = [](std::chrono::seconds& dst) -> Setter {
    return [&dst](const std::string& k, const std::string& v) {
      dst = std::chrono::seconds(parse_number<long>(k, v));
    };
  };

  const std::map<std::string, Setter> setters{
      {"dataset.dir", path(c.dataset_dir)},
      {"dataset.scenario", [&](const std::string&, const std::string& v) { c.scenario = parse_scenario(v); }},
      {"output.dir", path(c.output_dir)},
      {"paths.max_len", size(c.max_len)},
      {"paths.per_relation", size(c.per_relation)},
      {"paths.cap", size(c.path_cap)},
      {"label.backend",
       [&](const std::string& k, const std::string& v) {
         if (v == "rule_oracle") c.label_backend = LabelBackendKind::kRuleOracle;
         else if (v == "remote_llm") c.label_backend = LabelBackendKind::kRemoteLlm;
         else if (v == "replay_cache") c.label_backend = LabelBackendKind::kReplayCache;
         else throw ConfigError(k + " must be rule_oracle, remote_llm or replay_cache");
       }},
      {"label.rules", text(c.rules)},
      {"label.rules_file", path(c.rules_file)},
      {"label.flip_rate", real(c.flip_rate)},
      {"label.seed", u64(c.label_seed)},
      {"label.cache", path(c.label_cache)},
      {"label.failure_policy",
       [&](const std::string& k, const std::string& v) {
         if (v == "drop") c.failure_policy = FailurePolicy::kDrop;
         else if (v == "abort") c.failure_policy = FailurePolicy::kAbort;
         else throw ConfigError(k + " must be 'drop' or 'abort'");
       }},
      {"label.base_url", text(c.llm.base_url)},
      {"label.model", text(c.llm.model)},
      {"label.instruction", text(c.llm.instruction)},
      {"label.max_retries",
       [&](const std::string& k, const std::string& v) { c.llm.max_retries = parse_number<int>(k, v); }},
      {"label.max_in_flight",
       [&](const std::string& k, const std::string& v) { c.llm.max_in_flight = parse_number<int>(k, v); }},
      {"label.requests_per_second", real(c.llm.requests_per_second)},
      {"label.token_budget", size(c.llm.token_budget)},
      {"label.timeout", seconds(c.llm.timeout)},
      {"sc.epochs", size(c.sc.epochs)},
      {"sc.learning_rate", real(c.sc.learning_rate)},
      {"sc.batch_size", size(c.sc.batch_size)},
      {"sc.seed", u64(c.sc.seed)},
      {"sc.entity_dim", size(c.sc.entity_dim)},
      {"sc.relation_dim", size(c.sc.relation_dim)},
      {"sc.hidden_dim", size(c.sc.hidden_dim)},
      {"sc.on_degenerate",
       [&](const std::string& k, const std::string& v) { c.sc_degenerate = parse_degenerate(k, v); }},
      {"plm.threshold", real(c.filter.threshold)},
      {"plm.neg_num", size(c.filter.neg_num)},
      {"plm.seed", u64(c.plm_seed)},
      {"plm.corrupt", [&](const std::string& k, const std::string& v) {
         if (v == "tail") c.filter.corrupt_heads = false;
         else if (v == "both") c.filter.corrupt_heads = true;
         else throw ConfigError(k + " must be 'tail' or 'both'");
       }},
      {"plm.ablate",
       [&](const std::string& k, const std::string& v) {
         c.filter.disable_positive_filter = c.filter.disable_negative_filter = false;
         c.filter.anonymize_entities = false;
         for (const auto& a : split_list(v)) {
           if (a == "pf") c.filter.disable_positive_filter = true;
           else if (a == "nf") c.filter.disable_negative_filter = true;
           else if (a == "te") c.filter.anonymize_entities = true;
           else if (a != "none") throw ConfigError(k + ": unknown ablation '" + a + "' (pf, nf, te)");
         }
       }},
      {"scorer.backend",
       [&](const std::string& k, const std::string& v) {
         if (v == "builtin") c.scorer_backend = ScorerBackendKind::kBuiltin;
         else if (v == "remote_plm") c.scorer_backend = ScorerBackendKind::kRemote;
         else throw ConfigError(k + " must be 'builtin' or 'remote_plm'");
       }},
      {"scorer.endpoint", text(c.remote_scorer.endpoint)},
      {"scorer.timeout", seconds(c.remote_scorer.timeout)},
      {"scorer.max_batch", size(c.remote_scorer.max_batch)},
      {"scorer.epochs", size(c.scorer.epochs)},
      {"scorer.learning_rate", real(c.scorer.learning_rate)},
      {"scorer.batch_size", size(c.scorer.batch_size)},
      {"scorer.seed", u64(c.scorer.seed)},
      {"scorer.embed_dim", size(c.scorer.embed_dim)},
      {"scorer.hidden_dim", size(c.scorer.hidden_dim)},
      {"scorer.balance_classes", flag(c.scorer.balance_classes)},
      {"scorer.on_degenerate",
       [&](const std::string& k, const std::string& v) { c.scorer_degenerate = parse_degenerate(k, v); }},
      {"eval.setting", [&](const std::string&, const std::string& v) { c.setting = parse_eval_setting(v); }},
      {"eval.test_max_len", size(c.fixed_test_max_len)},
      {"eval.negatives", size(c.negatives)},
      {"eval.seed", u64(c.eval_seed)},
      {"eval.ks",
       [&](const std::string& k, const std::string& v) {
         c.ks.clear();
         for (const auto& item : split_list(v)) c.ks.push_back(parse_number<int>(k, item));
       }},
      {"eval.max_queries", size(c.max_queries)},
      {"eval.test_filter", flag(c.test_filter)},
      {"run.jobs", [&](const std::string& k, const std::string& v) { c.jobs = parse_number<int>(k, v); }},
  };

  for (const auto& [key, value] : values) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key: " + key);
    it->second(key, value);
  }
  c.filter.max_len = c.max_len;
  c.filter.path_cap = c.path_cap;
  return c;
}

json config_to_json(const PipelineConfig& c) {
  json ablate = json::array();
  if (c.filter.disable_positive_filter) ablate.push_back("pf");
  if (c.filter.disable_negative_filter) ablate.push_back("nf");
  if (c.filter.anonymize_entities) ablate.push_back("te");
  return {
      {"dataset", {{"dir", c.dataset_dir.string()}, {"scenario", to_string(c.scenario)}}},
      {"paths", {{"max_len", c.max_len}, {"per_relation", c.per_relation}, {"cap", c.path_cap}}},
      {"label",
       {{"backend", to_string(c.label_backend)},
        {"rules", c.rules},
        {"rules_file", c.resolved_rules_file().string()},
        {"flip_rate", c.flip_rate},
        {"seed", c.label_seed},
        {"failure_policy", c.failure_policy == FailurePolicy::kDrop ? "drop" : "abort"},
        {"base_url", c.llm.base_url},
        {"model", c.llm.model},
        {"instruction", c.llm.instruction},
        {"max_retries", c.llm.max_retries},
        {"token_budget", c.llm.token_budget}}},
      {"sc",
       {{"epochs", c.sc.epochs},
        {"learning_rate", c.sc.learning_rate},
        {"batch_size", c.sc.batch_size},
        {"seed", c.sc.seed},
        {"entity_dim", c.sc.entity_dim},
        {"relation_dim", c.sc.relation_dim},
        {"hidden_dim", c.sc.hidden_dim},
        {"on_degenerate", c.sc_degenerate == DegeneratePolicy::kError ? "error" : "untrained"}}},
      {"plm",
       {{"threshold", c.filter.threshold}, {"neg_num", c.filter.neg_num}, {"seed", c.plm_seed},
        {"corrupt", c.filter.corrupt_heads ? "both" : "tail"}, {"ablate", ablate}}},
      {"scorer",
       {{"backend", to_string(c.scorer_backend)},
        {"endpoint", c.remote_scorer.endpoint},
        {"epochs", c.scorer.epochs},
        {"learning_rate", c.scorer.learning_rate},
        {"batch_size", c.scorer.batch_size},
        {"seed", c.scorer.seed},
        {"embed_dim", c.scorer.embed_dim},
        {"hidden_dim", c.scorer.hidden_dim},
        {"balance_classes", c.scorer.balance_classes},
        {"on_degenerate", c.scorer_degenerate == DegeneratePolicy::kError ? "error" : "untrained"}}},
      {"eval",
       {{"setting", to_string(c.setting)},
        {"test_max_len", c.test_max_len()},
        {"negatives", c.negatives},
        {"seed", c.eval_seed},
        {"ks", c.ks},
        {"max_queries", c.max_queries},
        {"test_filter", c.test_filter}}},
  };
}

}  // namespace kgcf
