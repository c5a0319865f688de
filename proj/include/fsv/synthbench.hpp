#pragma once

// Synthetic stand-in for a video dataset with known ground truth: Gaussian
// clip clusters around class means, semantics that are a noisy linear image of
// the means, and a tag corpus with planted positives for the novel classes.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fsv/datastore.hpp"

namespace fsv::synth {

struct SynthConfig {
  int base_classes = 64;
  int val_classes = 12;
  int novel_classes = 24;
  int clips_per_video = 10;
  int base_train_videos_per_class = 110;
  int base_test_videos_per_class = 20;
  int videos_per_class = 40;  // val and novel classes
  int dv = 32;
  int dt = 32;
  int dy = 32;
  double sigma_sep = 6.0;  // radius of the sphere holding the class means
  double sigma_in = 1.0;   // within-class clip noise (per-dimension std)
  // Fraction of the within-class variance shared by all clips of one video.
  double video_share = 0.75;
  double semantic_noise = 0.05;
  int corpus_size = 2400;
  double distractor_fraction = 0.9;
  double tag_noise = 0.0;  // chance a planted video's class tag is swapped
  int noise_words = 200;
  int noise_tags_per_positive = 1;
  int tags_per_distractor = 3;
  std::uint64_t seed = 7;

  void validate() const;
};

struct GroundTruth {
  std::map<int, Vector> class_means;  // in the emitted (shifted) feature space
  Vector shift;
  Matrix projection;                     // d_y x d_v, semantics = P * (mean - shift) + noise
  std::map<std::string, int> planted;  // corpus video -> novel class it depicts
};

struct SynthBundle {
  data::Dataset dataset;
  GroundTruth truth;
};

SynthBundle make_synthetic(const SynthConfig& config);

std::string format_ground_truth(const GroundTruth& truth);

struct OracleAccuracy {
  double base = 1.0;   // held-out base test clips
  double val = 1.0;
  double novel = 1.0;
};

// Nearest-true-mean accuracy, each split scored among its own classes.
OracleAccuracy bayes_oracle(const data::Dataset& dataset, const GroundTruth& truth);

// Nearest-true-mean accuracy of the given clips among `classes`.
double nearest_mean_accuracy(const data::Dataset& dataset, const GroundTruth& truth,
                             const std::vector<int>& classes,
                             const std::vector<std::string>& videos);

}  // namespace fsv::synth
