#include "kgcf/seq_filter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "kgcf/checkpoint.hpp"
#include "kgcf/error.hpp"
#include "kgcf/hashing.hpp"

namespace kgcf {

namespace {

constexpr std::string_view kMagic = "KGCF-SEQ";
constexpr std::uint32_t kFormatVersion = 1;

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// -log p(label | logit) for a Bernoulli with sigmoid link.
double bce_from_logit(double z, int label) {
  const double softplus = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
  return softplus - (label == 1 ? z : 0.0);
}

Eigen::VectorXd sigmoid(const Eigen::VectorXd& v) { return v.unaryExpr([](double z) { return sigmoid(z); }); }

}  // namespace

void SeqClassifierParams::resize_like(const SeqClassifierDims& d) {
  const auto h = static_cast<Eigen::Index>(d.hidden_dim);
  entity.resize(static_cast<Eigen::Index>(d.num_entities + 1), static_cast<Eigen::Index>(d.entity_dim));
  relation.resize(static_cast<Eigen::Index>(2 * d.num_relations), static_cast<Eigen::Index>(d.relation_dim));
  gates.resize(4 * h, static_cast<Eigen::Index>(d.step_width()) + h);
  gate_bias.resize(4 * h);
  head.resize(h);
}

void SeqClassifierParams::set_zero() {
  entity.setZero();
  relation.setZero();
  gates.setZero();
  gate_bias.setZero();
  head.setZero();
  head_bias = 0.0;
}

SeqClassifier::SeqClassifier(const SeqClassifierDims& dims, std::uint64_t seed) : dims_(dims) {
  params_.resize_like(dims);
  params_.set_zero();
  std::mt19937_64 rng(seed);
  auto fill = [&rng](auto& m, double scale) {
    std::uniform_real_distribution<double> u(-scale, scale);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  };
  fill(params_.entity, 0.1);
  fill(params_.relation, 0.1);
  fill(params_.gates, 1.0 / std::sqrt(static_cast<double>(params_.gates.cols())));
  const auto h = static_cast<Eigen::Index>(dims.hidden_dim);
  params_.gate_bias.segment(h, h).setOnes();
}

SeqExample SeqClassifier::encode(const InferencePath& path) const {
  const auto unknown = static_cast<std::uint32_t>(dims_.num_entities);
  auto ent = [&](EntityId e) {
    return entities_known_ && index(e) < dims_.num_entities ? index(e) : unknown;
  };
  SeqExample ex;
  ex.query_relation = index(path.completion.relation);
  ex.steps.reserve(path.trajectory.edges.size());
  for (const auto& e : path.trajectory.edges) {
    ex.steps.push_back(SeqStep{ent(e.source()), e.signed_relation(dims_.num_relations), ent(e.target())});
  }
  return ex;
}

namespace {

struct StepCache {
  Eigen::VectorXd input;  // [x; h_prev]
  Eigen::VectorXd i, f, g, o, c, tanh_c, h;
};

void build_input(const SeqClassifierDims& d, const SeqClassifierParams& p, const SeqStep& step,
                 std::uint32_t query, const Eigen::VectorXd& h_prev, Eigen::VectorXd& input) {
  const auto de = static_cast<Eigen::Index>(d.entity_dim);
  const auto dr = static_cast<Eigen::Index>(d.relation_dim);
  const auto width = static_cast<Eigen::Index>(d.step_width());
  input.resize(width + h_prev.size());
  input.segment(0, de) = p.entity.row(step.from).transpose();
  input.segment(de, dr) = p.relation.row(step.relation).transpose();
  input.segment(de + dr, de) = p.entity.row(step.to).transpose();
  input.segment(2 * de + dr, dr) = p.relation.row(query).transpose();
  input.segment(width, h_prev.size()) = h_prev;
}

// Runs the recurrence and returns the logit; fills `caches` when non-null.
double forward(const SeqClassifierDims& d, const SeqClassifierParams& p, const SeqExample& ex,
               std::vector<StepCache>* caches) {
  if (ex.steps.empty()) throw std::invalid_argument("path has an empty trajectory");
  const auto h = static_cast<Eigen::Index>(d.hidden_dim);
  Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(h);
  Eigen::VectorXd c_prev = Eigen::VectorXd::Zero(h);
  StepCache local;
  if (caches) caches->resize(ex.steps.size());
  for (std::size_t t = 0; t < ex.steps.size(); ++t) {
    StepCache& s = caches ? (*caches)[t] : local;
    build_input(d, p, ex.steps[t], ex.query_relation, h_prev, s.input);
    const Eigen::VectorXd z = p.gates * s.input + p.gate_bias;
    s.i = sigmoid(Eigen::VectorXd(z.segment(0, h)));
    s.f = sigmoid(Eigen::VectorXd(z.segment(h, h)));
    s.g = z.segment(2 * h, h).array().tanh().matrix();
    s.o = sigmoid(Eigen::VectorXd(z.segment(3 * h, h)));
    s.c = s.f.cwiseProduct(c_prev) + s.i.cwiseProduct(s.g);
    s.tanh_c = s.c.array().tanh().matrix();
    s.h = s.o.cwiseProduct(s.tanh_c);
    h_prev = s.h;
    c_prev = s.c;
  }
  return p.head.dot(h_prev) + p.head_bias;
}

}  // namespace

double SeqClassifier::logit(const SeqExample& example) const {
  return forward(dims_, params_, example, nullptr);
}

double SeqClassifier::probability(const SeqExample& example) const {
  return sigmoid(logit(example));
}

double SeqClassifier::classify(const InferencePath& path) const {
  return probability(encode(path));
}

double SeqClassifier::loss_and_gradient(std::span<const SeqExample> batch,
                                        SeqClassifierParams* grad) const {
  const auto& d = dims_;
  const auto h = static_cast<Eigen::Index>(d.hidden_dim);
  const auto de = static_cast<Eigen::Index>(d.entity_dim);
  const auto dr = static_cast<Eigen::Index>(d.relation_dim);
  const auto width = static_cast<Eigen::Index>(d.step_width());
  if (grad) {
    grad->resize_like(d);
    grad->set_zero();
  }
  double loss = 0.0;
  std::vector<StepCache> caches;
  for (const auto& ex : batch) {
    const double z = forward(d, params_, ex, grad ? &caches : nullptr);
    loss += bce_from_logit(z, ex.label);
    if (!grad) continue;

    const double dz = sigmoid(z) - ex.label;
    const auto n = ex.steps.size();
    grad->head += dz * caches[n - 1].h;
    grad->head_bias += dz;

    Eigen::VectorXd dh = dz * params_.head;
    Eigen::VectorXd dc = Eigen::VectorXd::Zero(h);
    Eigen::VectorXd dgates(4 * h);
    for (std::size_t t = n; t-- > 0;) {
      const auto& s = caches[t];
      const Eigen::VectorXd c_prev = t > 0 ? caches[t - 1].c : Eigen::VectorXd::Zero(h);
      dc += dh.cwiseProduct(s.o).cwiseProduct((1.0 - s.tanh_c.array().square()).matrix());
      dgates.segment(0, h) = dc.cwiseProduct(s.g).cwiseProduct(s.i.cwiseProduct((1.0 - s.i.array()).matrix()));
      dgates.segment(h, h) = dc.cwiseProduct(c_prev).cwiseProduct(s.f.cwiseProduct((1.0 - s.f.array()).matrix()));
      dgates.segment(2 * h, h) = dc.cwiseProduct(s.i).cwiseProduct((1.0 - s.g.array().square()).matrix());
      dgates.segment(3 * h, h) = dh.cwiseProduct(s.tanh_c).cwiseProduct(s.o.cwiseProduct((1.0 - s.o.array()).matrix()));

      grad->gates.noalias() += dgates * s.input.transpose();
      grad->gate_bias += dgates;
      const Eigen::VectorXd dinput = params_.gates.transpose() * dgates;

      const auto& step = ex.steps[t];
      grad->entity.row(step.from) += dinput.segment(0, de).transpose();
      grad->relation.row(step.relation) += dinput.segment(de, dr).transpose();
      grad->entity.row(step.to) += dinput.segment(de + dr, de).transpose();
      grad->relation.row(ex.query_relation) += dinput.segment(2 * de + dr, dr).transpose();

      dh = dinput.segment(width, h);
      dc = dc.cwiseProduct(s.f);
    }
  }
  return loss;
}

void SeqClassifier::round_to_float() {
  kgcf::round_to_float(params_.entity);
  kgcf::round_to_float(params_.relation);
  kgcf::round_to_float(params_.gates);
  kgcf::round_to_float(params_.gate_bias);
  kgcf::round_to_float(params_.head);
  params_.head_bias = static_cast<double>(static_cast<float>(params_.head_bias));
}

void SeqClassifier::save(const std::filesystem::path& path) const {
  CheckpointWriter w;
  w.magic(kMagic);
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(dims_.entity_dim));
  w.u32(static_cast<std::uint32_t>(dims_.relation_dim));
  w.u32(static_cast<std::uint32_t>(dims_.hidden_dim));
  w.u32(static_cast<std::uint32_t>(dims_.num_entities));
  w.u32(static_cast<std::uint32_t>(dims_.num_relations));
  w.matrix(params_.entity);
  w.matrix(params_.relation);
  w.matrix(params_.gates);
  w.vector(params_.gate_bias);
  w.vector(params_.head);
  w.f32(params_.head_bias);
  w.save(path);
}

SeqClassifier SeqClassifier::load(const std::filesystem::path& path) {
  CheckpointReader r(path);
  r.expect_magic(kMagic);
  if (const auto v = r.u32(); v != kFormatVersion) {
    throw LoadError("unsupported sequence-classifier format version " + std::to_string(v));
  }
  SeqClassifier m;
  m.dims_.entity_dim = r.u32();
  m.dims_.relation_dim = r.u32();
  m.dims_.hidden_dim = r.u32();
  m.dims_.num_entities = r.u32();
  m.dims_.num_relations = r.u32();
  m.params_.resize_like(m.dims_);
  r.matrix(m.params_.entity);
  r.matrix(m.params_.relation);
  r.matrix(m.params_.gates);
  r.vector(m.params_.gate_bias);
  r.vector(m.params_.head);
  m.params_.head_bias = r.f32();
  r.finish();
  return m;
}

bool operator==(const SeqClassifier& a, const SeqClassifier& b) {
  return a.dims_ == b.dims_ && a.params_.entity == b.params_.entity &&
         a.params_.relation == b.params_.relation && a.params_.gates == b.params_.gates &&
         a.params_.gate_bias == b.params_.gate_bias && a.params_.head == b.params_.head &&
         a.params_.head_bias == b.params_.head_bias;
}

// ---------------------------------------------------------------------------

SeqTrainResult train_sc(const Graph& graph, const ScDataset& dataset, const SeqTrainHyper& hyper) {
  SeqClassifierDims dims{graph.num_entities(), graph.num_relations(), hyper.entity_dim,
                         hyper.relation_dim, hyper.hidden_dim};
  const SeqClassifier encoder(dims, 0);
  std::vector<SeqExample> examples;
  examples.reserve(dataset.items.size());
  for (const auto& item : dataset.items) {
    auto ex = encoder.encode(item.path);
    ex.label = item.label;
    examples.push_back(std::move(ex));
  }
  return train_sc(dims, examples, hyper);
}

SeqTrainResult train_sc(const SeqClassifierDims& dims, std::span<const SeqExample> examples,
                        const SeqTrainHyper& hyper) {
  const auto positives = std::count_if(examples.begin(), examples.end(),
                                       [](const SeqExample& e) { return e.label == 1; });
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(examples.size())) {
    throw DegenerateDataError("sequence-classifier dataset has a single class (" +
                              std::to_string(positives) + " positives of " +
                              std::to_string(examples.size()) + ")");
  }

  SeqTrainResult result{SeqClassifier(dims, hyper.seed), {}};
  auto& model = result.model;
  const auto n = examples.size();
  result.log.initial_loss = model.loss_and_gradient(examples, nullptr) / static_cast<double>(n);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<SeqExample> batch;
  SeqClassifierParams grad;
  const std::size_t batch_size = std::max<std::size_t>(1, hyper.batch_size);
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::mt19937_64 rng(combine_seed(hyper.seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch_size) {
      batch.clear();
      for (std::size_t k = start; k < std::min(n, start + batch_size); ++k) {
        batch.push_back(examples[order[k]]);
      }
      const double loss = model.loss_and_gradient(batch, &grad);
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite loss in epoch " + std::to_string(epoch) +
                            " at batch starting " + std::to_string(start));
      }
      epoch_loss += loss;
      const double step = hyper.learning_rate / static_cast<double>(batch.size());
      auto& p = model.params();
      p.gates -= step * grad.gates;
      p.gate_bias -= step * grad.gate_bias;
      p.head -= step * grad.head;
      p.head_bias -= step * grad.head_bias;
      for (const auto& ex : batch) {
        for (const auto& s : ex.steps) {
          p.entity.row(s.from) -= step * grad.entity.row(s.from);
          grad.entity.row(s.from).setZero();
          p.entity.row(s.to) -= step * grad.entity.row(s.to);
          grad.entity.row(s.to).setZero();
          p.relation.row(s.relation) -= step * grad.relation.row(s.relation);
          grad.relation.row(s.relation).setZero();
        }
        p.relation.row(ex.query_relation) -= step * grad.relation.row(ex.query_relation);
        grad.relation.row(ex.query_relation).setZero();
      }
    }
    result.log.epoch_loss.push_back(epoch_loss / static_cast<double>(n));
  }
  model.round_to_float();

  std::size_t correct = 0;
  for (const auto& ex : examples) {
    correct += (model.probability(ex) > 0.5) == (ex.label == 1) ? 1 : 0;
  }
  result.log.final_accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return result;
}

// ---------------------------------------------------------------------------

void FilterConfig::validate() const {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ConfigError("filter threshold must lie strictly between 0 and 1");
  }
  if (neg_num < 1) throw ConfigError("neg_num must be at least 1");
  if (max_len < 1) throw ConfigError("max_len must be at least 1");
  if (path_cap < 1) throw ConfigError("path cap must be at least 1");
}

namespace {

// Lazy Fisher-Yates over entity handles: each draw is uniform over the
// not-yet-drawn handles, so accepted entities are uniform without
// replacement over the eligible set.
std::vector<EntityId> sample_corrupt(const Graph& graph, const Triplet& t, std::size_t count, std::uint64_t seed,
                                     bool heads) {
  const auto n = graph.num_entities();
  const EntityId fixed = heads ? t.tail : t.head;
  std::mt19937_64 rng(seed);
  std::unordered_map<std::size_t, std::size_t> swapped;
  auto at = [&](std::size_t i) {
    const auto it = swapped.find(i);
    return it == swapped.end() ? i : it->second;
  };
  std::vector<EntityId> out;
  for (std::size_t drawn = 0; drawn < n && out.size() < count; ++drawn) {
    std::uniform_int_distribution<std::size_t> pick(drawn, n - 1);
    const auto j = pick(rng);
    const auto chosen = at(j);
    swapped[j] = at(drawn);
    swapped[drawn] = chosen;
    const EntityId e{static_cast<std::uint32_t>(chosen)};
    if (e == fixed) continue;
    if (graph.contains(heads ? Triplet{e, t.relation, t.tail} : Triplet{t.head, t.relation, e})) continue;
    out.push_back(e);
  }
  return out;
}

}  // namespace

std::vector<EntityId> sample_corrupt_tails(const Graph& graph, const Triplet& t, std::size_t count,
                                           std::uint64_t seed) {
  return sample_corrupt(graph, t, count, seed, false);
}

std::vector<EntityId> sample_corrupt_heads(const Graph& graph, const Triplet& t, std::size_t count,
                                           std::uint64_t seed) {
  return sample_corrupt(graph, t, count, seed, true);
}

namespace {

struct TripletItems {
  std::vector<PlmItem> items;
  std::size_t shortfall = 0;
};

TripletItems items_for_triplet(const Graph& graph, const PathClassifier& classifier,
                               const FilterConfig& config, std::uint64_t seed, const Triplet& t) {
  TripletItems out;
  const TextualizeOptions text_opts{config.anonymize_entities};
  auto add = [&](InferencePath p, bool label) {
    auto text = textualize_path(graph, p, text_opts);
    out.items.push_back(PlmItem{std::move(p), label, std::move(text)});
  };

  for (auto& p : completion_paths(graph, t, config.max_len, config.path_cap)) {
    if (config.disable_positive_filter || classifier.classify(p) > config.threshold) {
      add(std::move(p), true);
    }
  }

  auto add_negatives = [&](const Triplet& corrupt) {
    for (auto& p : completion_paths(graph, corrupt, config.max_len, config.path_cap)) {
      if (config.disable_negative_filter || classifier.classify(p) < config.threshold) {
        add(std::move(p), false);
      }
    }
  };
  const auto stream = combine_seed(seed, TripletHash{}(t));
  const auto tails = sample_corrupt_tails(graph, t, config.neg_num, stream);
  out.shortfall = config.neg_num - tails.size();
  for (const auto e : tails) add_negatives(Triplet{t.head, t.relation, e});
  if (config.corrupt_heads) {
    const auto heads = sample_corrupt_heads(graph, t, config.neg_num, combine_seed(stream, 1));
    out.shortfall += config.neg_num - heads.size();
    for (const auto e : heads) add_negatives(Triplet{e, t.relation, t.tail});
  }
  return out;
}

PlmDataset assemble(std::vector<TripletItems>& parts) {
  PlmDataset ds;
  for (auto& part : parts) {
    ds.negative_shortfall += part.shortfall;
    for (auto& item : part.items) ds.items.push_back(std::move(item));
  }
  return ds;
}

}  // namespace

PlmDataset build_plm_dataset(const Graph& graph, const PathClassifier& classifier,
                             const FilterConfig& config, std::uint64_t seed) {
  config.validate();
  const auto triplets = graph.triplets();
  std::vector<TripletItems> parts(triplets.size());
  const auto n = static_cast<std::ptrdiff_t>(triplets.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    parts[k] = items_for_triplet(graph, classifier, config, seed, triplets[k]);
  }
  return assemble(parts);
}

PlmDataset build_plm_dataset_serial(const Graph& graph, const PathClassifier& classifier,
                                    const FilterConfig& config, std::uint64_t seed) {
  config.validate();
  const auto triplets = graph.triplets();
  std::vector<TripletItems> parts(triplets.size());
  for (std::size_t k = 0; k < triplets.size(); ++k) {
    parts[k] = items_for_triplet(graph, classifier, config, seed, triplets[k]);
  }
  return assemble(parts);
}

std::vector<json> plm_dataset_records(const PlmDataset& ds) {
  std::vector<json> out;
  out.reserve(ds.items.size());
  for (const auto& item : ds.items) {
    out.push_back(json{{"claim", item.text.claim}, {"context", item.text.context}, {"label", item.label ? 1 : 0}});
  }
  return out;
}

}  // namespace kgcf
