#pragma once

// Bias-free linear softmax heads over frozen clip features.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "fsv/numkernel.hpp"
#include "fsv/optimizer.hpp"
#include "fsv/rng.hpp"

namespace fsv::clf {

struct LinearClassifier {
  Matrix weight;             // d x C, column c scores classes[c]
  std::vector<int> classes;  // class ids in column order

  Index dim() const { return weight.rows(); }
  std::size_t num_classes() const { return classes.size(); }
  // Column position of a class id; throws Error if absent.
  Index index_of(int class_id) const;
  // C x n logits for a d x n batch.
  Matrix logits(const Matrix& x) const;
  void validate() const;
};

struct TrainConfig {
  int epochs = 10;
  double learning_rate = 0.01;
  int batch_size = 64;
  nk::OptimizerKind optimizer = nk::OptimizerKind::kSgd;
  double init_scale = 0.01;

  nk::OptimizerConfig optimizer_config() const;
  // Denoising additionally requires an even batch size.
  void validate(bool denoising) const;
};

// Samples stored column-wise with one class id per column.
struct LabeledSamples {
  Matrix x;
  std::vector<int> y;

  Index size() const { return x.cols(); }
  bool empty() const { return x.cols() == 0; }
  void append(const Matrix& cols, int class_id);
  void append(const LabeledSamples& other);
};

// -log softmax(logits)[label].
double cross_entropy(const Vector& logits, Index label);

struct Batch {
  std::vector<std::size_t> trusted;  // indices into the trusted pool
  std::vector<std::size_t> pseudo;   // indices into the pseudo pool
};

// One epoch of batches. With a nonempty pseudo pool every batch holds exactly
// batch_size/2 draws from each pool; each pool is walked through a fresh
// permutation (reshuffled when used up), or drawn with replacement if it is
// smaller than its half-quota. Epoch length is ceil((n_trusted + n_pseudo) /
// batch_size). With an empty pseudo pool this is plain shuffled batching of
// min(batch_size, n_trusted) samples per batch, wrapping across permutations
// so that no batch is short.
std::vector<Batch> denoising_batches(std::size_t n_trusted, std::size_t n_pseudo,
                                     int batch_size, RngStream& rng);

struct TrainLog {
  std::vector<double> epoch_loss;  // mean minibatch loss per epoch
};

// Called after each epoch with the 0-based epoch and current weights; return
// false to stop training early.
using EpochHook = std::function<bool(int, const LinearClassifier&)>;

// Mini-batch training of W from a seeded Gaussian init. When `denoise` is set
// and `pseudo` is nonempty, batches come from denoising_batches; otherwise the
// pseudo samples (if any) are pooled with the trusted ones.
LinearClassifier train_linear(const std::vector<int>& classes, const LabeledSamples& trusted,
                              const LabeledSamples& pseudo, bool denoise,
                              const TrainConfig& config, RngStream& rng, TrainLog* log = nullptr,
                              const EpochHook& on_epoch = {});

LinearClassifier train_linear(const std::vector<int>& classes, const LabeledSamples& samples,
                              const TrainConfig& config, RngStream& rng, TrainLog* log = nullptr);

// Mean cross-entropy over a labeled set.
double mean_loss(const LinearClassifier& clf, const LabeledSamples& samples);
// Clip-level top-1 accuracy.
double clip_accuracy(const LinearClassifier& clf, const LabeledSamples& samples);

struct VideoPrediction {
  int class_id = -1;
  Index index = -1;
  Vector probabilities;
};

// Mean of per-clip softmax rows; argmax ties go to the lower index.
VideoPrediction video_predict(const LinearClassifier& clf, const Matrix& clips);

// Base columns followed by novel columns.
LinearClassifier concat_classifiers(const LinearClassifier& base, const LinearClassifier& novel);

std::string format_classifier(const LinearClassifier& clf);
LinearClassifier parse_classifier(const std::string& text, const std::string& source);

}  // namespace fsv::clf
