#include "kgcf/pipeline.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "kgcf/error.hpp"
#include "kgcf/hashing.hpp"
#include "kgcf/label_engine.hpp"
#include "kgcf/path_scorer.hpp"
#include "kgcf/seq_filter.hpp"
#include "kgcf/serialize.hpp"

namespace kgcf {

namespace fs = std::filesystem;

namespace {

constexpr const char* kStageRecord = "stage.json";
constexpr const char* kSelection = "selection.jsonl";
constexpr const char* kScDataset = "sc_dataset.jsonl";
constexpr const char* kLabelLog = "label_log.jsonl";
constexpr const char* kScModel = "sc_model.bin";
constexpr const char* kPlmDataset = "plm_dataset.jsonl";
constexpr const char* kScorerModel = "scorer.bin";
constexpr const char* kReport = "report.json";
constexpr const char* kReportTable = "report.txt";
constexpr const char* kManifest = "manifest.json";
constexpr const char* kErrorLog = "eval_errors.log";

constexpr const char* kDatasetFiles[] = {"train.txt",       "valid.txt",         "test.txt",
                                         "test_graph.txt",  "entity2text.txt",   "relation2text.txt"};

void log(Stage s, const std::string& msg) { std::cerr << "[" << to_string(s) << "] " << msg << '\n'; }

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

json dataset_file_hashes(const fs::path& dir) {
  json out = json::object();
  for (const char* f : kDatasetFiles) {
    if (fs::exists(dir / f)) out[f] = sha256_file(dir / f);
  }
  return out;
}

std::string rules_text(const PipelineConfig& c) {
  if (!c.rules.empty()) return c.rules;
  const auto file = c.resolved_rules_file();
  if (!fs::exists(file)) throw ConfigError("rules file not found: " + file.string());
  return trim(read_text(file));
}

json dump_stats(const TrainLog& log, bool degenerate) {
  return {{"initial_loss", log.initial_loss},
          {"epoch_loss", log.epoch_loss},
          {"final_accuracy", log.final_accuracy},
          {"degenerate", degenerate}};
}

}  // namespace

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::kPaths: return "paths";
    case Stage::kLabel: return "label";
    case Stage::kTrainSc: return "train-sc";
    case Stage::kBuildPlm: return "build-plm";
    case Stage::kTrainScorer: return "train-scorer";
    case Stage::kEval: return "eval";
  }
  return "?";
}

Pipeline::Pipeline(PipelineConfig config, bool force) : config_(std::move(config)), force_(force) {
  config_.filter.max_len = config_.max_len;
  config_.filter.path_cap = config_.path_cap;
  config_.validate();
  dataset_hash_ = sha256_hex(dataset_file_hashes(config_.dataset_dir).dump());
}

const Dataset& Pipeline::dataset() {
  if (!dataset_) dataset_ = load_dataset(config_.dataset_dir, config_.scenario);
  return *dataset_;
}

fs::path Pipeline::stage_dir(Stage s) const { return config_.output_dir / std::string(to_string(s)); }

json Pipeline::stage_params(Stage s) const {
  const auto full = config_to_json(config_);
  switch (s) {
    case Stage::kPaths:
      return {{"dataset", dataset_hash_}, {"scenario", to_string(config_.scenario)}, {"paths", full["paths"]}};
    case Stage::kLabel: {
      json p = {{"backend", to_string(config_.label_backend)},
                {"failure_policy", full["label"]["failure_policy"]}};
      if (config_.label_backend == LabelBackendKind::kRuleOracle) {
        p["rules"] = rules_text(config_);
        p["flip_rate"] = config_.flip_rate;
        p["seed"] = config_.label_seed;
      } else {
        p["model"] = config_.llm.model;
        p["instruction"] = config_.llm.instruction;
        p["token_budget"] = config_.llm.token_budget;
      }
      return p;
    }
    case Stage::kTrainSc: return full["sc"];
    case Stage::kBuildPlm: return full["plm"];
    case Stage::kTrainScorer: {
      auto p = full["scorer"];
      if (config_.scorer_backend == ScorerBackendKind::kBuiltin) p.erase("endpoint");
      return p;
    }
    case Stage::kEval: {
      auto p = full["eval"];
      p["anonymize_entities"] = config_.filter.anonymize_entities;
      p["cap"] = config_.path_cap;
      return p;
    }
  }
  return {};
}

std::string Pipeline::stage_hash(Stage s) const {
  std::string prev;
  for (const auto st : kStages) {
    prev = sha256_hex(prev + "|" + std::string(to_string(st)) + "|" + stage_params(st).dump());
    if (st == s) break;
  }
  return prev;
}

void Pipeline::require(Stage upstream) const {
  const auto dir = stage_dir(upstream);
  const auto name = std::string(to_string(upstream));
  const auto record_path = dir / kStageRecord;
  if (!fs::exists(record_path)) {
    throw StageDependencyError("missing artifacts of stage '" + name + "' in " + dir.string() +
                               "; run `kgcf " + name + "` first");
  }
  json record;
  try {
    record = json::parse(read_text(record_path));
  } catch (const json::exception& e) {
    throw StageDependencyError("unreadable " + record_path.string() + " (" + e.what() + "); rerun `kgcf " +
                               name + "`");
  }
  auto refuse = [&](const std::string& why) {
    if (force_) {
      std::cerr << "warning: " << why << " (continuing because of --force)\n";
      return;
    }
    throw StageDependencyError(why + "; rerun `kgcf " + name + "` or pass --force");
  };
  if (record.value("config_hash", "") != stage_hash(upstream)) {
    refuse("artifacts of stage '" + name + "' were produced under a different configuration");
  }
  const auto outputs = record.value("outputs", json::object());
  for (const auto& [file, sha] : outputs.items()) {
    if (!fs::exists(dir / file)) {
      throw StageDependencyError("artifact " + (dir / file).string() + " is missing; rerun `kgcf " + name + "`");
    }
    if (sha256_file(dir / file) != sha.get<std::string>()) {
      refuse("artifact " + (dir / file).string() + " changed since stage '" + name + "' wrote it");
    }
  }
}

void Pipeline::record(Stage s, const json& inputs, const std::vector<std::string>& outputs, json extra) const {
  const auto dir = stage_dir(s);
  json out = json::object();
  for (const auto& f : outputs) out[f] = sha256_file(dir / f);
  json rec = {{"stage", to_string(s)},
              {"format_version", 1},
              {"config_hash", stage_hash(s)},
              {"params", stage_params(s)},
              {"inputs", inputs},
              {"outputs", out}};
  if (!extra.is_null()) rec["summary"] = std::move(extra);
  write_text_atomic(dir / kStageRecord, rec.dump(2) + "\n");
}

void Pipeline::paths() {
  const auto& graph = dataset().train;
  const auto selection = select_sc_triplets(graph, config_.max_len, config_.per_relation, config_.path_cap);
  std::vector<json> records;
  std::size_t n_paths = 0;
  for (const auto& s : selection) {
    json paths = json::array();
    for (const auto& p : s.paths) paths.push_back(path_to_json(graph, p));
    n_paths += s.paths.size();
    records.push_back({{"triplet", triplet_to_json(graph, s.triplet)}, {"paths", std::move(paths)}});
  }
  fs::create_directories(stage_dir(Stage::kPaths));
  write_jsonl(stage_dir(Stage::kPaths) / kSelection, records);
  record(Stage::kPaths, dataset_file_hashes(config_.dataset_dir), {kSelection},
         {{"triplets", selection.size()}, {"paths", n_paths}});
  log(Stage::kPaths, "selected " + std::to_string(selection.size()) + " triplets with " +
                         std::to_string(n_paths) + " paths");
}

void Pipeline::label() {
  require(Stage::kPaths);
  const auto& graph = dataset().train;
  const auto in = stage_dir(Stage::kPaths) / kSelection;
  std::vector<ScSelection> selection;
  for (const auto& r : read_jsonl(in)) {
    ScSelection s{triplet_from_json(graph, r.at("triplet")), {}};
    for (const auto& p : r.at("paths")) s.paths.push_back(path_from_json(graph, p));
    selection.push_back(std::move(s));
  }

  std::unique_ptr<LabelBackend> backend;
  switch (config_.label_backend) {
    case LabelBackendKind::kRuleOracle:
      backend = std::make_unique<RuleOracle>(
          RuleOracleConfig{parse_rules(graph, rules_text(config_)), config_.flip_rate, config_.label_seed});
      break;
    case LabelBackendKind::kRemoteLlm:
      fs::create_directories(config_.resolved_label_cache().parent_path());
      backend = std::make_unique<RemoteLlmBackend>(config_.llm,
                                                   std::make_shared<LabelCache>(config_.resolved_label_cache()));
      break;
    case LabelBackendKind::kReplayCache:
      if (!fs::exists(config_.resolved_label_cache())) {
        throw ConfigError("replay cache not found: " + config_.resolved_label_cache().string());
      }
      backend = std::make_unique<ReplayCacheBackend>(
          std::make_shared<const LabelCache>(config_.resolved_label_cache()));
      break;
  }

  const auto ds = label_selection(graph, *backend, selection, config_.failure_policy);
  const auto dir = stage_dir(Stage::kLabel);
  fs::create_directories(dir);
  write_jsonl(dir / kScDataset, sc_dataset_records(graph, ds));
  write_jsonl(dir / kLabelLog, label_log_records(graph, ds));

  std::size_t positives = 0;
  for (const auto& item : ds.items) positives += item.label == 1 ? 1 : 0;
  json counts = json::object();
  for (const auto& [r, n] : ds.per_relation_counts) counts[graph.relations().identifier(index(r))] = n;
  record(Stage::kLabel, {{kSelection, sha256_file(in)}}, {kScDataset, kLabelLog},
         {{"items", ds.items.size()},
          {"positives", positives},
          {"failed_paths", ds.failed_paths},
          {"per_relation_counts", counts}});
  log(Stage::kLabel, std::to_string(ds.items.size()) + " labelled paths (" + std::to_string(positives) +
                         " positive, " + std::to_string(ds.failed_paths) + " failed)");
}

void Pipeline::train_sc() {
  require(Stage::kLabel);
  const auto& graph = dataset().train;
  const auto in = stage_dir(Stage::kLabel) / kScDataset;
  const auto ds = sc_dataset_from_records(graph, read_jsonl(in));

  SeqClassifier model;
  TrainLog train_log;
  bool degenerate = false;
  try {
    auto result = kgcf::train_sc(graph, ds, config_.sc);
    model = std::move(result.model);
    train_log = std::move(result.log);
  } catch (const DegenerateDataError& e) {
    if (config_.sc_degenerate == DegeneratePolicy::kError) throw;
    log(Stage::kTrainSc, std::string(e.what()) + "; writing an untrained model");
    degenerate = true;
    model = SeqClassifier({graph.num_entities(), graph.num_relations(), config_.sc.entity_dim,
                           config_.sc.relation_dim, config_.sc.hidden_dim},
                          config_.sc.seed);
    model.round_to_float();
  }
  const auto dir = stage_dir(Stage::kTrainSc);
  fs::create_directories(dir);
  model.save(dir / kScModel);
  record(Stage::kTrainSc, {{kScDataset, sha256_file(in)}}, {kScModel}, dump_stats(train_log, degenerate));
  if (!degenerate) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << "loss " << train_log.initial_loss << " -> "
       << (train_log.epoch_loss.empty() ? 0.0 : train_log.epoch_loss.back()) << ", train accuracy "
       << train_log.final_accuracy;
    log(Stage::kTrainSc, os.str());
  }
}

void Pipeline::build_plm() {
  require(Stage::kTrainSc);
  const auto& graph = dataset().train;
  const auto in = stage_dir(Stage::kTrainSc) / kScModel;
  const auto model = SeqClassifier::load(in);
  const auto ds = build_plm_dataset(graph, model, config_.filter, config_.plm_seed);
  const auto dir = stage_dir(Stage::kBuildPlm);
  fs::create_directories(dir);
  write_jsonl(dir / kPlmDataset, plm_dataset_records(ds));
  std::size_t positives = 0;
  for (const auto& item : ds.items) positives += item.label ? 1 : 0;
  record(Stage::kBuildPlm, {{kScModel, sha256_file(in)}}, {kPlmDataset},
         {{"items", ds.items.size()}, {"positives", positives}, {"negative_shortfall", ds.negative_shortfall}});
  log(Stage::kBuildPlm, std::to_string(ds.items.size()) + " scorer items (" + std::to_string(positives) +
                            " positive)");
}

void Pipeline::train_scorer() {
  require(Stage::kBuildPlm);
  const auto in = stage_dir(Stage::kBuildPlm) / kPlmDataset;
  const auto dir = stage_dir(Stage::kTrainScorer);
  fs::create_directories(dir);

  if (config_.scorer_backend == ScorerBackendKind::kRemote) {
    const RemoteScorer remote(config_.remote_scorer);
    const auto job = remote.train(fs::absolute(in));
    record(Stage::kTrainScorer, {{kPlmDataset, sha256_file(in)}}, {}, {{"job_id", job}});
    log(Stage::kTrainScorer, "remote training job " + job);
    return;
  }

  std::vector<PathText> texts;
  std::vector<int> labels;
  for (const auto& r : read_jsonl(in)) {
    texts.push_back({r.at("claim").get<std::string>(), r.at("context").get<std::string>()});
    labels.push_back(r.at("label").get<int>());
  }
  BuiltinScorer model;
  TrainLog train_log;
  bool degenerate = false;
  try {
    auto result = kgcf::train_scorer(texts, labels, config_.scorer);
    model = std::move(result.model);
    train_log = std::move(result.log);
  } catch (const DegenerateDataError& e) {
    if (config_.scorer_degenerate == DegeneratePolicy::kError) throw;
    log(Stage::kTrainScorer, std::string(e.what()) + "; writing an untrained model");
    degenerate = true;
    model = BuiltinScorer(BuiltinScorer::build_vocabulary(texts), config_.scorer.embed_dim,
                          config_.scorer.hidden_dim, config_.scorer.seed);
    model.round_to_float();
  }
  model.save(dir / kScorerModel);
  record(Stage::kTrainScorer, {{kPlmDataset, sha256_file(in)}}, {kScorerModel}, dump_stats(train_log, degenerate));
  if (!degenerate) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << "loss " << train_log.initial_loss << " -> "
       << (train_log.epoch_loss.empty() ? 0.0 : train_log.epoch_loss.back()) << ", train accuracy "
       << train_log.final_accuracy;
    log(Stage::kTrainScorer, os.str());
  }
}

MetricsReport Pipeline::eval() {
  require(Stage::kTrainScorer);
  const auto& ds = dataset();

  json inputs = json::object();
  std::unique_ptr<PathScorer> scorer;
  if (config_.scorer_backend == ScorerBackendKind::kBuiltin) {
    const auto ckpt = stage_dir(Stage::kTrainScorer) / kScorerModel;
    scorer = std::make_unique<BuiltinScorer>(BuiltinScorer::load(ckpt));
    inputs[kScorerModel] = sha256_file(ckpt);
  } else {
    scorer = std::make_unique<RemoteScorer>(config_.remote_scorer);
  }

  EvalConfig ec;
  ec.max_len = config_.test_max_len();
  ec.path_cap = config_.path_cap;
  ec.negatives = config_.negatives;
  ec.seed = config_.eval_seed;
  ec.ks = config_.ks;
  ec.max_queries = config_.max_queries;
  ec.anonymize_entities = config_.filter.anonymize_entities;
  ec.threshold = config_.filter.threshold;
  std::optional<SeqClassifier> filter;
  if (config_.test_filter) {
    require(Stage::kTrainSc);
    const auto ckpt = stage_dir(Stage::kTrainSc) / kScModel;
    filter = SeqClassifier::load(ckpt);
    filter->set_entities_known(config_.scenario == Scenario::kTransductive);
    ec.test_filter = &*filter;
    inputs[kScModel] = sha256_file(ckpt);
  }

  const auto dir = stage_dir(Stage::kEval);
  fs::create_directories(dir);
  MetricsReport report;
  try {
    report = run_evaluation(ds, *scorer, ec);
  } catch (const EvaluationAborted& e) {
    std::ostringstream os;
    for (const auto& err : e.errors()) {
      const auto& g = ds.test_search_graph();
      os << g.entities().identifier(index(err.test.head)) << '\t'
         << g.relations().identifier(index(err.test.relation)) << '\t'
         << g.entities().identifier(index(err.test.tail)) << '\t' << to_string(err.direction) << '\t'
         << err.message << '\n';
    }
    write_text_atomic(dir / kErrorLog, os.str());
    log(Stage::kEval, "per-task errors written to " + (dir / kErrorLog).string());
    throw;
  }
  if (fs::exists(dir / kErrorLog)) fs::remove(dir / kErrorLog);

  write_text_atomic(dir / kReport, report_to_json(report).dump(2) + "\n");
  write_text_atomic(dir / kReportTable, report_to_table(report));

  json stage_hashes = json::object();
  for (const auto s : kStages) stage_hashes[std::string(to_string(s))] = stage_hash(s);
  json checkpoints = json::object();
  for (const auto& [stage, file] : {std::pair{Stage::kTrainSc, kScModel}, std::pair{Stage::kTrainScorer, kScorerModel}}) {
    if (fs::exists(stage_dir(stage) / file)) checkpoints[file] = sha256_file(stage_dir(stage) / file);
  }
  const json manifest = {
      {"config", config_to_json(config_)},
      {"seeds",
       {{"label", config_.label_seed},
        {"sc", config_.sc.seed},
        {"plm", config_.plm_seed},
        {"scorer", config_.scorer.seed},
        {"eval", config_.eval_seed}}},
      {"setting", to_string(config_.setting)},
      {"train_max_len", config_.max_len},
      {"test_max_len", config_.test_max_len()},
      {"dataset_files", dataset_file_hashes(config_.dataset_dir)},
      {"checkpoints", checkpoints},
      {"stage_hashes", stage_hashes},
  };
  write_text_atomic(dir / kManifest, manifest.dump(2) + "\n");
  record(Stage::kEval, inputs, {kReport, kReportTable, kManifest});
  log(Stage::kEval, "report written to " + (dir / kReport).string());
  return report;
}

void Pipeline::run(Stage stage) {
  switch (stage) {
    case Stage::kPaths: paths(); break;
    case Stage::kLabel: label(); break;
    case Stage::kTrainSc: train_sc(); break;
    case Stage::kBuildPlm: build_plm(); break;
    case Stage::kTrainScorer: train_scorer(); break;
    case Stage::kEval: (void)eval(); break;
  }
}

MetricsReport Pipeline::run_all() {
  paths();
  label();
  train_sc();
  build_plm();
  train_scorer();
  return eval();
}

std::vector<SweepRow> sweep_maxlen(const PipelineConfig& config, const std::vector<std::size_t>& lengths,
                                   EvalSetting setting, bool force) {
  if (lengths.empty()) throw ConfigError("sweep needs at least one length");
  std::vector<SweepRow> rows;
  json out = json::array();
  for (const auto m : lengths) {
    PipelineConfig c = config;
    c.max_len = m;
    c.setting = setting;
    c.output_dir = config.output_dir / (std::string(to_string(setting)) + "_m" + std::to_string(m));
    // Short training paths can leave a single class; the sweep still needs a row.
    c.sc_degenerate = DegeneratePolicy::kUntrained;
    c.scorer_degenerate = DegeneratePolicy::kUntrained;
    Pipeline pipeline(c, force);
    rows.push_back({m, c.test_max_len(), pipeline.run_all()});
    out.push_back({{"train_max_len", m},
                   {"test_max_len", c.test_max_len()},
                   {"setting", to_string(setting)},
                   {"report", report_to_json(rows.back().report)}});
  }
  const auto stem = "sweep_" + std::string(to_string(setting));
  write_text_atomic(config.output_dir / (stem + ".json"), out.dump(2) + "\n");
  write_text_atomic(config.output_dir / (stem + ".txt"), sweep_to_table(rows, setting));
  return rows;
}

std::string sweep_to_table(const std::vector<SweepRow>& rows, EvalSetting setting) {
  std::ostringstream os;
  os << "setting: " << to_string(setting) << '\n';
  os << std::left << std::setw(8) << "train_m" << std::setw(8) << "test_m";
  if (!rows.empty()) {
    for (const auto& [k, v] : rows.front().report.average.hits) os << std::setw(10) << ("Hits@" + std::to_string(k));
  }
  os << "MRR\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(8) << r.train_max_len << std::setw(8) << r.test_max_len << std::fixed
       << std::setprecision(4);
    for (const auto& [k, v] : r.report.average.hits) os << std::setw(10) << v;
    os << r.report.average.mrr << '\n';
  }
  return os.str();
}

}  // namespace kgcf
