#include "kgcf/path_scorer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>

#include <httplib.h>

#include "kgcf/checkpoint.hpp"
#include "kgcf/error.hpp"
#include "kgcf/hashing.hpp"
#include "kgcf/serialize.hpp"

namespace kgcf {

namespace {

constexpr std::string_view kMagic = "KGCF-TXT";
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::string_view kUnknownToken = "[UNK]";

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double bce_from_logit(double z, int label) {
  const double softplus = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
  return softplus - (label == 1 ? z : 0.0);
}

bool is_word_byte(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (is_word_byte(c)) {
      word += static_cast<char>(c < 0x80 ? std::tolower(c) : c);
    } else {
      flush();
      out.emplace_back(1, ch);
    }
  }
  flush();
  return out;
}

double PathScorer::score(const std::string& claim, const std::string& context) const {
  const PathText pair{claim, context};
  return score_batch(std::span<const PathText>(&pair, 1)).front();
}

// ---------------------------------------------------------------------------

void TextScorerParams::resize_like(const TextScorerDims& d) {
  const auto dim = static_cast<Eigen::Index>(d.embed_dim);
  const auto h = static_cast<Eigen::Index>(d.hidden_dim);
  embedding.resize(static_cast<Eigen::Index>(d.vocab_size), dim);
  segment.resize(2, dim);
  hidden.resize(h, 2 * dim);
  hidden_bias.resize(h);
  head.resize(h);
}

void TextScorerParams::set_zero() {
  embedding.setZero();
  segment.setZero();
  hidden.setZero();
  hidden_bias.setZero();
  head.setZero();
  head_bias = 0.0;
}

BuiltinScorer::BuiltinScorer(std::vector<std::string> vocabulary, std::size_t embed_dim,
                             std::size_t hidden_dim, std::uint64_t seed)
    : vocabulary_(std::move(vocabulary)) {
  if (vocabulary_.empty() || vocabulary_.front() != kUnknownToken) {
    vocabulary_.insert(vocabulary_.begin(), std::string(kUnknownToken));
  }
  index_vocabulary();
  dims_ = TextScorerDims{vocabulary_.size(), embed_dim, hidden_dim};
  params_.resize_like(dims_);
  params_.set_zero();
  std::mt19937_64 rng(seed);
  auto fill = [&rng](auto& m, double scale) {
    std::uniform_real_distribution<double> u(-scale, scale);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  };
  fill(params_.embedding, 0.1);
  fill(params_.segment, 0.1);
  fill(params_.hidden, 1.0 / std::sqrt(static_cast<double>(params_.hidden.cols())));
  fill(params_.head, 0.01);
}

void BuiltinScorer::index_vocabulary() {
  lookup_.clear();
  for (std::uint32_t i = 0; i < vocabulary_.size(); ++i) lookup_.emplace(vocabulary_[i], i);
}

std::vector<std::string> BuiltinScorer::build_vocabulary(std::span<const PathText> texts) {
  std::vector<std::string> vocab{std::string(kUnknownToken)};
  std::unordered_map<std::string, std::uint32_t> seen{{std::string(kUnknownToken), 0}};
  auto add = [&](std::string_view text) {
    for (auto& tok : tokenize(text)) {
      if (seen.emplace(tok, static_cast<std::uint32_t>(vocab.size())).second) vocab.push_back(tok);
    }
  };
  for (const auto& t : texts) {
    add(t.claim);
    add(t.context);
  }
  return vocab;
}

EncodedPair BuiltinScorer::encode(const PathText& pair) const {
  auto ids = [&](std::string_view text) {
    std::vector<std::uint32_t> out;
    for (const auto& tok : tokenize(text)) {
      const auto it = lookup_.find(tok);
      out.push_back(it == lookup_.end() ? 0U : it->second);
    }
    return out;
  };
  return EncodedPair{ids(pair.claim), ids(pair.context), 0};
}

namespace {

Eigen::VectorXd pooled(const TextScorerParams& p, const std::vector<std::uint32_t>& ids, int segment) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(p.embedding.cols());
  for (const auto id : ids) v += p.embedding.row(id).transpose();
  if (!ids.empty()) v /= static_cast<double>(ids.size());
  return v + p.segment.row(segment).transpose();
}

struct ForwardState {
  Eigen::VectorXd features;  // [claim; context]
  Eigen::VectorXd activation;
  double logit = 0.0;
};

ForwardState forward(const TextScorerParams& p, const EncodedPair& pair) {
  const auto dim = p.embedding.cols();
  ForwardState s;
  s.features.resize(2 * dim);
  s.features.head(dim) = pooled(p, pair.claim, 0);
  s.features.tail(dim) = pooled(p, pair.context, 1);
  s.activation = (p.hidden * s.features + p.hidden_bias).array().tanh().matrix();
  s.logit = p.head.dot(s.activation) + p.head_bias;
  return s;
}

}  // namespace

double BuiltinScorer::logit(const EncodedPair& pair) const { return forward(params_, pair).logit; }

double BuiltinScorer::probability(const EncodedPair& pair) const { return sigmoid(logit(pair)); }

std::vector<double> BuiltinScorer::score_batch(std::span<const PathText> pairs) const {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(probability(encode(p)));
  return out;
}

double BuiltinScorer::loss_and_gradient(std::span<const EncodedPair> batch,
                                        TextScorerParams* grad) const {
  if (grad) {
    grad->resize_like(dims_);
    grad->set_zero();
  }
  const auto dim = static_cast<Eigen::Index>(dims_.embed_dim);
  double loss = 0.0;
  for (const auto& pair : batch) {
    const auto s = forward(params_, pair);
    loss += pair.weight * bce_from_logit(s.logit, pair.label);
    if (!grad) continue;
    const double dz = pair.weight * (sigmoid(s.logit) - pair.label);
    grad->head += dz * s.activation;
    grad->head_bias += dz;
    const Eigen::VectorXd du =
        (dz * params_.head).cwiseProduct((1.0 - s.activation.array().square()).matrix());
    grad->hidden.noalias() += du * s.features.transpose();
    grad->hidden_bias += du;
    const Eigen::VectorXd dfeat = params_.hidden.transpose() * du;
    const Eigen::VectorXd dclaim = dfeat.head(dim);
    const Eigen::VectorXd dcontext = dfeat.tail(dim);
    grad->segment.row(0) += dclaim.transpose();
    grad->segment.row(1) += dcontext.transpose();
    if (!pair.claim.empty()) {
      const Eigen::RowVectorXd share = dclaim.transpose() / static_cast<double>(pair.claim.size());
      for (const auto id : pair.claim) grad->embedding.row(id) += share;
    }
    if (!pair.context.empty()) {
      const Eigen::RowVectorXd share = dcontext.transpose() / static_cast<double>(pair.context.size());
      for (const auto id : pair.context) grad->embedding.row(id) += share;
    }
  }
  return loss;
}

void BuiltinScorer::round_to_float() {
  kgcf::round_to_float(params_.embedding);
  kgcf::round_to_float(params_.segment);
  kgcf::round_to_float(params_.hidden);
  kgcf::round_to_float(params_.hidden_bias);
  kgcf::round_to_float(params_.head);
  params_.head_bias = static_cast<double>(static_cast<float>(params_.head_bias));
}

void BuiltinScorer::save(const std::filesystem::path& path) const {
  CheckpointWriter w;
  w.magic(kMagic);
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(dims_.embed_dim));
  w.u32(static_cast<std::uint32_t>(dims_.hidden_dim));
  w.u32(static_cast<std::uint32_t>(dims_.vocab_size));
  for (const auto& tok : vocabulary_) w.str(tok);
  w.matrix(params_.embedding);
  w.matrix(params_.segment);
  w.matrix(params_.hidden);
  w.vector(params_.hidden_bias);
  w.vector(params_.head);
  w.f32(params_.head_bias);
  w.save(path);
}

BuiltinScorer BuiltinScorer::load(const std::filesystem::path& path) {
  CheckpointReader r(path);
  r.expect_magic(kMagic);
  if (const auto v = r.u32(); v != kFormatVersion) {
    throw LoadError("unsupported scorer format version " + std::to_string(v));
  }
  BuiltinScorer m;
  m.dims_.embed_dim = r.u32();
  m.dims_.hidden_dim = r.u32();
  m.dims_.vocab_size = r.u32();
  m.vocabulary_.reserve(m.dims_.vocab_size);
  for (std::size_t i = 0; i < m.dims_.vocab_size; ++i) m.vocabulary_.push_back(r.str());
  m.index_vocabulary();
  m.params_.resize_like(m.dims_);
  r.matrix(m.params_.embedding);
  r.matrix(m.params_.segment);
  r.matrix(m.params_.hidden);
  r.vector(m.params_.hidden_bias);
  r.vector(m.params_.head);
  m.params_.head_bias = r.f32();
  r.finish();
  return m;
}

bool operator==(const BuiltinScorer& a, const BuiltinScorer& b) {
  return a.dims_ == b.dims_ && a.vocabulary_ == b.vocabulary_ &&
         a.params_.embedding == b.params_.embedding && a.params_.segment == b.params_.segment &&
         a.params_.hidden == b.params_.hidden && a.params_.hidden_bias == b.params_.hidden_bias &&
         a.params_.head == b.params_.head && a.params_.head_bias == b.params_.head_bias;
}

// ---------------------------------------------------------------------------

ScorerTrainResult train_scorer(std::span<const PathText> texts, std::span<const int> labels,
                               const ScorerTrainHyper& hyper) {
  if (texts.size() != labels.size()) throw std::invalid_argument("texts and labels differ in size");
  const auto positives = std::count(labels.begin(), labels.end(), 1);
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(labels.size())) {
    throw DegenerateDataError("scorer dataset has a single class (" + std::to_string(positives) +
                              " positives of " + std::to_string(labels.size()) + ")");
  }

  ScorerTrainResult result{
      BuiltinScorer(BuiltinScorer::build_vocabulary(texts), hyper.embed_dim, hyper.hidden_dim, hyper.seed),
      {}};
  auto& model = result.model;
  const auto n = texts.size();
  const double n_pos = static_cast<double>(positives);
  const double n_neg = static_cast<double>(n) - n_pos;
  std::vector<EncodedPair> encoded;
  encoded.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto e = model.encode(texts[i]);
    e.label = labels[i];
    if (hyper.balance_classes) e.weight = static_cast<double>(n) / (2.0 * (e.label == 1 ? n_pos : n_neg));
    encoded.push_back(std::move(e));
  }
  result.log.initial_loss = model.loss_and_gradient(encoded, nullptr) / static_cast<double>(n);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<EncodedPair> batch;
  TextScorerParams grad;
  const std::size_t batch_size = std::max<std::size_t>(1, hyper.batch_size);
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::mt19937_64 rng(combine_seed(hyper.seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch_size) {
      batch.clear();
      for (std::size_t k = start; k < std::min(n, start + batch_size); ++k) {
        batch.push_back(encoded[order[k]]);
      }
      const double loss = model.loss_and_gradient(batch, &grad);
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite scorer loss in epoch " + std::to_string(epoch));
      }
      epoch_loss += loss;
      double total_weight = 0.0;
      for (const auto& pair : batch) total_weight += pair.weight;
      const double step = hyper.learning_rate / total_weight;
      auto& p = model.params();
      p.segment -= step * grad.segment;
      p.hidden -= step * grad.hidden;
      p.hidden_bias -= step * grad.hidden_bias;
      p.head -= step * grad.head;
      p.head_bias -= step * grad.head_bias;
      for (const auto& pair : batch) {
        for (const auto* ids : {&pair.claim, &pair.context}) {
          for (const auto id : *ids) {
            p.embedding.row(id) -= step * grad.embedding.row(id);
            grad.embedding.row(id).setZero();
          }
        }
      }
    }
    result.log.epoch_loss.push_back(epoch_loss / static_cast<double>(n));
  }
  model.round_to_float();

  std::size_t correct = 0;
  for (const auto& e : encoded) correct += (model.probability(e) > 0.5) == (e.label == 1) ? 1 : 0;
  result.log.final_accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return result;
}

ScorerTrainResult train_scorer(const PlmDataset& dataset, const ScorerTrainHyper& hyper) {
  std::vector<PathText> texts;
  std::vector<int> labels;
  texts.reserve(dataset.items.size());
  labels.reserve(dataset.items.size());
  for (const auto& item : dataset.items) {
    texts.push_back(item.text);
    labels.push_back(item.label ? 1 : 0);
  }
  return train_scorer(texts, labels, hyper);
}

// ---------------------------------------------------------------------------

namespace {

httplib::Client make_client(const std::string& endpoint, std::chrono::seconds timeout) {
  httplib::Client client(endpoint);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  return client;
}

}  // namespace

std::vector<double> RemoteScorer::score_batch(std::span<const PathText> pairs) const {
  std::vector<double> out;
  out.reserve(pairs.size());
  auto client = make_client(config_.endpoint, config_.timeout);
  const std::size_t step = std::max<std::size_t>(1, config_.max_batch);
  for (std::size_t start = 0; start < pairs.size(); start += step) {
    const auto chunk = pairs.subspan(start, std::min(step, pairs.size() - start));
    json body{{"pairs", json::array()}};
    for (const auto& p : chunk) body["pairs"].push_back(json{{"claim", p.claim}, {"context", p.context}});
    auto res = client.Post("/score", body.dump(), "application/json");
    if (!res) throw BackendError("scorer request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw BackendError("scorer returned HTTP " + std::to_string(res->status));
    json reply;
    try {
      reply = json::parse(res->body);
    } catch (const json::parse_error& e) {
      throw BackendError(std::string("malformed scorer response: ") + e.what());
    }
    if (!reply.contains("scores") || !reply["scores"].is_array() ||
        reply["scores"].size() != chunk.size()) {
      throw BackendError("scorer response must carry one score per pair");
    }
    for (const auto& s : reply["scores"]) {
      if (!s.is_number()) throw BackendError("scorer returned a non-numeric score");
      const double v = s.get<double>();
      if (!(v >= 0.0 && v <= 1.0)) throw BackendError("scorer returned a score outside [0, 1]");
      out.push_back(v);
    }
  }
  return out;
}

std::string RemoteScorer::train(const std::filesystem::path& dataset) const {
  auto client = make_client(config_.endpoint, config_.timeout);
  const json body{{"dataset", dataset.string()}};
  auto res = client.Post("/train", body.dump(), "application/json");
  if (!res) throw BackendError("scorer /train failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw BackendError("scorer /train returned HTTP " + std::to_string(res->status));
  try {
    return json::parse(res->body).at("job_id").get<std::string>();
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed /train response: ") + e.what());
  }
}

bool RemoteScorer::healthy() const {
  auto client = make_client(config_.endpoint, config_.timeout);
  auto res = client.Get("/health");
  return res && res->status == 200;
}

// ---------------------------------------------------------------------------

bool ranks_above(const std::optional<double>& a, const std::optional<double>& b) {
  if (!a) return false;
  if (!b) return true;
  return *a > *b;
}

bool ranks_at_least(const std::optional<double>& a, const std::optional<double>& b) {
  return !ranks_above(b, a);
}

CompletionScore score_completion(const PathScorer& scorer, const Graph& graph,
                                 const Triplet& completion, const CompletionOptions& options,
                                 EntityId candidate) {
  CompletionScore out{candidate, std::nullopt, std::nullopt};
  auto paths = completion_paths(graph, completion, options.max_len, options.path_cap);
  if (options.classifier) {
    std::erase_if(paths, [&](const InferencePath& p) {
      return !(options.classifier->classify(p) > options.threshold);
    });
  }
  if (paths.empty()) return out;
  std::vector<PathText> texts;
  texts.reserve(paths.size());
  const TextualizeOptions text_opts{options.anonymize_entities};
  for (const auto& p : paths) texts.push_back(textualize_path(graph, p, text_opts));
  const auto scores = scorer.score_batch(texts);
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  out.score = scores[best];
  out.best_path = std::move(paths[best]);
  return out;
}

}  // namespace kgcf
