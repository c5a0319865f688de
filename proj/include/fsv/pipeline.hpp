#pragma once

// Stage helpers shared by the command line and the tests: the base-class
// training pool, feature spaces, the base head and the generator.

#include <cstdint>
#include <vector>

#include "fsv/classifier.hpp"
#include "fsv/datastore.hpp"
#include "fsv/retrieval.hpp"
#include "fsv/scaler.hpp"
#include "fsv/vfgan.hpp"

namespace fsv::pipeline {

// Feature-table rows of every clip of every base training video, in class
// then video order.
std::vector<std::size_t> base_training_rows(const data::Dataset& ds);

// Both spaces fitted on the base training clips.
data::FeatureSpace fit_space(const data::Dataset& ds);

// Raw features and labels of the given rows.
clf::LabeledSamples raw_samples(const data::Dataset& ds, const std::vector<std::size_t>& rows);

// Base-head stopping rule: a seeded subset of each base class's training
// videos is held out, and training stops after the first epoch whose held-out
// video accuracy does not beat the best so far by more than min_delta. The
// best epoch's weights are kept. config.epochs is the cap. With
// val_videos_per_class = 0 every video is used and all epochs run.
struct BaseStopping {
  int val_videos_per_class = 10;
  double min_delta = 0.002;

  void validate() const;
};

struct BaseHeadReport {
  std::vector<double> val_accuracy;  // per completed epoch; empty without hold-out
  int best_epoch = -1;               // 0-based; -1 without hold-out
  std::size_t train_videos = 0;
  std::size_t val_videos = 0;
};

// Base head over all base classes, trained in the classifier space.
clf::LinearClassifier train_base_head(const data::Dataset& ds, const data::FeatureSpace& space,
                                      const clf::TrainConfig& config, std::uint64_t seed,
                                      const BaseStopping& stopping = {},
                                      BaseHeadReport* report = nullptr);

// Pseudo-labeled set for every novel class, retrieved against a support of
// k_shot videos per class sampled from `seed`. Needs tags and word embeddings.
ret::PseudoSet retrieve_novel(const data::Dataset& ds, const ret::RetrievalConfig& config,
                              int k_shot, std::uint64_t seed);

// Generator trained on the base training clips plus, if given, pseudo-labeled
// clips.
gan::GanParams train_generator(const data::Dataset& ds, const data::FeatureSpace& space,
                               const gan::GanTrainConfig& config,
                               const ret::PseudoSet* pseudo = nullptr, gan::GanLog* log = nullptr);

}  // namespace fsv::pipeline
