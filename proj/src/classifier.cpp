#include "fsv/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "fsv/errors.hpp"
#include "fsv/text_io.hpp"

namespace fsv::clf {

Index LinearClassifier::index_of(int class_id) const {
  auto it = std::find(classes.begin(), classes.end(), class_id);
  if (it == classes.end()) throw Error("class " + std::to_string(class_id) + " not in classifier");
  return static_cast<Index>(it - classes.begin());
}

Matrix LinearClassifier::logits(const Matrix& x) const {
  if (x.rows() != dim())
    throw ShapeError("classifier expects " + std::to_string(dim()) + "-dim features, got " +
                     std::to_string(x.rows()));
  return weight.transpose() * x;
}

void LinearClassifier::validate() const {
  if (weight.cols() != static_cast<Index>(classes.size()))
    throw ShapeError("classifier has " + std::to_string(weight.cols()) + " columns but " +
                     std::to_string(classes.size()) + " classes");
  if (!weight.allFinite()) throw NonFiniteError("classifier weights are not finite");
  std::set<int> seen(classes.begin(), classes.end());
  if (seen.size() != classes.size()) throw Error("classifier has duplicate class ids");
}

nk::OptimizerConfig TrainConfig::optimizer_config() const {
  nk::OptimizerConfig c;
  c.kind = optimizer;
  c.learning_rate = learning_rate;
  return c;
}

void TrainConfig::validate(bool denoising) const {
  if (epochs < 0) throw ConfigError("classifier epochs must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("classifier learning rate must be positive");
  if (batch_size < 1) throw ConfigError("classifier batch size must be positive");
  if (denoising && (batch_size < 2 || batch_size % 2 != 0))
    throw ConfigError("batch denoising needs an even batch size >= 2");
  if (!(init_scale >= 0.0)) throw ConfigError("classifier init scale must be >= 0");
}

void LabeledSamples::append(const Matrix& cols, int class_id) {
  if (cols.cols() == 0) return;
  if (x.cols() == 0) x.resize(cols.rows(), 0);
  if (cols.rows() != x.rows()) throw ShapeError("LabeledSamples: feature width mismatch");
  const Index old = x.cols();
  x.conservativeResize(Eigen::NoChange, old + cols.cols());
  x.rightCols(cols.cols()) = cols;
  y.insert(y.end(), static_cast<std::size_t>(cols.cols()), class_id);
}

void LabeledSamples::append(const LabeledSamples& other) {
  if (other.empty()) return;
  if (x.cols() == 0) x.resize(other.x.rows(), 0);
  if (other.x.rows() != x.rows()) throw ShapeError("LabeledSamples: feature width mismatch");
  const Index old = x.cols();
  x.conservativeResize(Eigen::NoChange, old + other.x.cols());
  x.rightCols(other.x.cols()) = other.x;
  y.insert(y.end(), other.y.begin(), other.y.end());
}

double cross_entropy(const Vector& logits, Index label) {
  if (label < 0 || label >= logits.size())
    throw Error("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                std::to_string(logits.size()) + ")");
  return std::max(0.0, nk::log_sum_exp(logits) - logits(label));
}

namespace {

// Cycles through a pool in shuffled order, or samples with replacement when
// the pool cannot fill its quota.
class PoolDrawer {
 public:
  PoolDrawer(std::size_t size, std::size_t quota, RngStream& rng)
      : size_(size), with_replacement_(size < quota), rng_(rng) {}

  std::size_t next() {
    if (with_replacement_) return static_cast<std::size_t>(rng_.uniform_int(size_));
    if (pos_ == order_.size()) {
      order_ = permutation(size_, rng_);
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  std::size_t size_;
  bool with_replacement_;
  RngStream& rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<Batch> denoising_batches(std::size_t n_trusted, std::size_t n_pseudo,
                                     int batch_size, RngStream& rng) {
  if (n_trusted == 0) throw Error("denoising_batches: trusted set is empty");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  std::vector<Batch> batches;
  const auto bs = static_cast<std::size_t>(batch_size);
  if (n_pseudo == 0) {
    // Full batches throughout: the walk over the shuffled pool wraps into a
    // fresh permutation instead of leaving a short final batch.
    const std::size_t size = std::min(bs, n_trusted);
    const std::size_t count = (n_trusted + bs - 1) / bs;
    PoolDrawer trusted(n_trusted, size, rng);
    batches.resize(count);
    for (auto& b : batches) {
      b.trusted.reserve(size);
      for (std::size_t i = 0; i < size; ++i) b.trusted.push_back(trusted.next());
    }
    return batches;
  }
  if (batch_size < 2 || batch_size % 2 != 0)
    throw ConfigError("batch denoising needs an even batch size >= 2");
  const std::size_t half = bs / 2;
  const std::size_t count = (n_trusted + n_pseudo + bs - 1) / bs;
  PoolDrawer trusted(n_trusted, half, rng);
  PoolDrawer pseudo(n_pseudo, half, rng);
  batches.resize(count);
  for (auto& b : batches) {
    b.trusted.reserve(half);
    b.pseudo.reserve(half);
    for (std::size_t i = 0; i < half; ++i) b.trusted.push_back(trusted.next());
    for (std::size_t i = 0; i < half; ++i) b.pseudo.push_back(pseudo.next());
  }
  return batches;
}

namespace {

std::vector<Index> label_indices(const std::vector<int>& classes, const LabeledSamples& s,
                                 const char* what) {
  std::map<int, Index> pos;
  for (std::size_t i = 0; i < classes.size(); ++i) pos[classes[i]] = static_cast<Index>(i);
  std::vector<Index> out;
  out.reserve(s.y.size());
  for (int c : s.y) {
    auto it = pos.find(c);
    if (it == pos.end())
      throw Error(std::string(what) + " sample labeled " + std::to_string(c) +
                  " outside the declared class set");
    out.push_back(it->second);
  }
  return out;
}

}  // namespace

LinearClassifier train_linear(const std::vector<int>& classes, const LabeledSamples& trusted,
                              const LabeledSamples& pseudo, bool denoise,
                              const TrainConfig& config, RngStream& rng, TrainLog* log,
                              const EpochHook& on_epoch) {
  const bool use_denoising = denoise && !pseudo.empty();
  config.validate(use_denoising);
  if (classes.empty()) throw Error("train_linear: empty class set");
  if (trusted.empty()) throw Error("train_linear: no training samples");
  if (static_cast<std::size_t>(trusted.size()) != trusted.y.size() ||
      static_cast<std::size_t>(pseudo.size()) != pseudo.y.size())
    throw ShapeError("train_linear: label count differs from sample count");
  if (!pseudo.empty() && pseudo.x.rows() != trusted.x.rows())
    throw ShapeError("train_linear: pseudo features have a different width");

  // Plain mode pools everything into the trusted side.
  LabeledSamples pooled;
  const LabeledSamples* a = &trusted;
  const LabeledSamples* b = &pseudo;
  if (!use_denoising && !pseudo.empty()) {
    pooled = trusted;
    pooled.append(pseudo);
    a = &pooled;
  }
  if (!use_denoising) b = nullptr;

  const auto ya = label_indices(classes, *a, "training");
  const auto yb = b ? label_indices(classes, *b, "pseudo") : std::vector<Index>{};
  {
    std::vector<int> counts(classes.size(), 0);
    for (auto i : ya) ++counts[static_cast<std::size_t>(i)];
    for (auto i : yb) ++counts[static_cast<std::size_t>(i)];
    std::vector<std::string> empty;
    for (std::size_t c = 0; c < classes.size(); ++c)
      if (counts[c] == 0) empty.push_back(std::to_string(classes[c]));
    if (!empty.empty()) throw ValidationError("classes without training samples", empty);
  }

  const Index d = trusted.x.rows();
  const auto C = static_cast<Index>(classes.size());
  LinearClassifier clf;
  clf.classes = classes;
  clf.weight.resize(d, C);
  for (Index i = 0; i < d; ++i)
    for (Index c = 0; c < C; ++c) clf.weight(i, c) = config.init_scale * rng.normal();

  nk::Optimizer opt(config.optimizer_config());
  Matrix grad(d, C);
  const std::vector<nk::ParamBinding> binding{
      {"classifier.weight", clf.weight.data(), grad.data(), clf.weight.size()}};

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto batches =
        denoising_batches(static_cast<std::size_t>(a->size()),
                          b ? static_cast<std::size_t>(b->size()) : 0, config.batch_size, rng);
    double loss_sum = 0.0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& batch = batches[bi];
      const auto n = static_cast<Index>(batch.trusted.size() + batch.pseudo.size());
      Matrix x(d, n);
      std::vector<Index> y(static_cast<std::size_t>(n));
      Index col = 0;
      for (auto i : batch.trusted) {
        x.col(col) = a->x.col(static_cast<Index>(i));
        y[static_cast<std::size_t>(col++)] = ya[i];
      }
      for (auto i : batch.pseudo) {
        x.col(col) = b->x.col(static_cast<Index>(i));
        y[static_cast<std::size_t>(col++)] = yb[i];
      }
      const Matrix logits = clf.weight.transpose() * x;
      Matrix p = nk::softmax_columns(logits);
      double loss = 0.0;
      for (Index j = 0; j < n; ++j) {
        const Index yj = y[static_cast<std::size_t>(j)];
        loss += cross_entropy(logits.col(j), yj);
        p(yj, j) -= 1.0;
      }
      loss /= static_cast<double>(n);
      if (!std::isfinite(loss))
        throw NonFiniteError("non-finite classifier loss at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(bi));
      grad.noalias() = x * p.transpose() / static_cast<double>(n);
      opt.step(binding);
      loss_sum += loss;
    }
    if (log) log->epoch_loss.push_back(loss_sum / static_cast<double>(batches.size()));
    if (on_epoch && !on_epoch(epoch, clf)) break;
  }
  return clf;
}

LinearClassifier train_linear(const std::vector<int>& classes, const LabeledSamples& samples,
                              const TrainConfig& config, RngStream& rng, TrainLog* log) {
  return train_linear(classes, samples, LabeledSamples{}, false, config, rng, log);
}

double mean_loss(const LinearClassifier& clf, const LabeledSamples& samples) {
  if (samples.empty()) throw Error("mean_loss: empty sample set");
  const Matrix logits = clf.logits(samples.x);
  double sum = 0.0;
  for (Index j = 0; j < samples.size(); ++j)
    sum += cross_entropy(logits.col(j), clf.index_of(samples.y[static_cast<std::size_t>(j)]));
  return sum / static_cast<double>(samples.size());
}

double clip_accuracy(const LinearClassifier& clf, const LabeledSamples& samples) {
  if (samples.empty()) throw Error("clip_accuracy: empty sample set");
  const Matrix logits = clf.logits(samples.x);
  std::size_t correct = 0;
  for (Index j = 0; j < samples.size(); ++j) {
    Index best = 0;
    logits.col(j).maxCoeff(&best);
    if (clf.classes[static_cast<std::size_t>(best)] == samples.y[static_cast<std::size_t>(j)])
      ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

VideoPrediction video_predict(const LinearClassifier& clf, const Matrix& clips) {
  if (clips.cols() == 0) throw Error("video_predict: no clips");
  if (clf.num_classes() == 0) throw Error("video_predict: classifier has no classes");
  const Matrix p = nk::softmax_columns(clf.logits(clips));
  VideoPrediction out;
  out.probabilities = p.rowwise().mean();
  Index best = 0;
  for (Index c = 1; c < out.probabilities.size(); ++c)
    if (out.probabilities(c) > out.probabilities(best)) best = c;
  out.index = best;
  out.class_id = clf.classes[static_cast<std::size_t>(best)];
  return out;
}

LinearClassifier concat_classifiers(const LinearClassifier& base, const LinearClassifier& novel) {
  if (novel.num_classes() == 0) return base;
  if (base.num_classes() == 0) return novel;
  if (base.dim() != novel.dim())
    throw ShapeError("concat_classifiers: feature widths " + std::to_string(base.dim()) + " and " +
                     std::to_string(novel.dim()) + " differ");
  std::set<int> seen(base.classes.begin(), base.classes.end());
  std::vector<std::string> overlap;
  for (int c : novel.classes)
    if (seen.count(c)) overlap.push_back(std::to_string(c));
  if (!overlap.empty()) throw ValidationError("classifiers share class ids", overlap);
  LinearClassifier out;
  out.weight.resize(base.dim(), base.weight.cols() + novel.weight.cols());
  out.weight << base.weight, novel.weight;
  out.classes = base.classes;
  out.classes.insert(out.classes.end(), novel.classes.begin(), novel.classes.end());
  return out;
}

std::string format_classifier(const LinearClassifier& clf) {
  std::string out = "#dim=" + std::to_string(clf.dim()) + " #classes=" +
                    std::to_string(clf.num_classes()) + "\n";
  for (std::size_t c = 0; c < clf.num_classes(); ++c) {
    out += std::to_string(clf.classes[c]);
    for (Index i = 0; i < clf.dim(); ++i)
      out += "\t" + io::format_double(clf.weight(i, static_cast<Index>(c)));
    out += "\n";
  }
  return out;
}

LinearClassifier parse_classifier(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source, 1, "missing header");
  const auto head = io::split(io::trim(line), ' ');
  if (head.size() != 2) throw ParseError(source, 1, "expected '#dim=<d> #classes=<C>'");
  const auto d = static_cast<Index>(io::parse_header_value(head[0], "dim", source, 1));
  const auto C = io::parse_header_value(head[1], "classes", source, 1);
  LinearClassifier clf;
  clf.weight.resize(d, static_cast<Index>(C));
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (io::trim(line).empty()) continue;
    const auto cols = io::split(line, '\t');
    if (cols.size() != static_cast<std::size_t>(d) + 1)
      throw ParseError(source, n, "expected " + std::to_string(d + 1) + " columns, got " +
                                      std::to_string(cols.size()));
    if (clf.classes.size() == static_cast<std::size_t>(C))
      throw ParseError(source, n, "more rows than the declared class count");
    const auto col = static_cast<Index>(clf.classes.size());
    clf.classes.push_back(static_cast<int>(io::parse_int(cols[0], source, n)));
    for (Index i = 0; i < d; ++i)
      clf.weight(i, col) = io::parse_double(cols[static_cast<std::size_t>(i) + 1], source, n);
  }
  if (clf.classes.size() != static_cast<std::size_t>(C))
    throw ParseError(source, n, "expected " + std::to_string(C) + " class rows, got " +
                                    std::to_string(clf.classes.size()));
  clf.validate();
  return clf;
}

}  // namespace fsv::clf
