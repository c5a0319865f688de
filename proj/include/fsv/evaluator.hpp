#pragma once

// Episodic evaluation: few-shot (scores over the episode's novel classes) and
// generalized (scores over all base classes plus the episode's novel classes).

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fsv/classifier.hpp"
#include "fsv/datastore.hpp"
#include "fsv/retrieval.hpp"
#include "fsv/scaler.hpp"
#include "fsv/vfgan.hpp"

namespace fsv::eval {

// 2ab / (a + b); 0 when both are 0. Works in any unit.
double harmonic_mean(double acc_base, double acc_novel);

struct EpisodeConfig {
  int n_way = 5;
  int k_shot = 1;
  int queries_per_class = 15;
  bool include_base = false;  // generalized setting
  int base_queries_per_class = 15;
  int episodes = 500;
  std::uint64_t seed = 0;
  int clips_per_query = 10;  // L

  bool use_retrieval = false;
  bool use_denoising = false;
  bool use_best_clips = true;
  bool use_gan = false;
  int generated_per_class = 300;
  ret::RetrievalConfig retrieval;

  // Throws ConfigError; `novel_classes` bounds n_way.
  void validate(std::size_t novel_classes) const;
};

struct Episode {
  int index = 0;
  std::vector<int> classes;  // ascending
  std::map<int, std::vector<std::string>> support;
  std::map<int, std::vector<std::string>> queries;
  std::vector<std::string> base_queries;  // generalized setting only
};

// All randomness comes from derive_rng(config.seed, index).
Episode sample_episode(const EpisodeConfig& config, const data::Dataset& dataset, int index);

struct EpisodeMetrics {
  int episode = 0;
  double novel_acc = 0.0;
  std::optional<double> base_acc;
  std::optional<double> hm;
  std::size_t pseudo_clips = 0;
  std::size_t generated = 0;
};

// Shared read-only inputs of a run. Classifier heads live in space->head.
struct EvalContext {
  const data::Dataset* dataset = nullptr;
  const data::FeatureSpace* space = nullptr;
  const clf::LinearClassifier* base = nullptr;  // required for the generalized setting
  const gan::GanParams* gan = nullptr;          // required with use_gan
  const ret::TagIndex* tag_index = nullptr;     // required with use_retrieval
  clf::TrainConfig novel_train;
};

EpisodeMetrics run_episode(const Episode& episode, const EvalContext& context,
                           const EpisodeConfig& config);

struct EvalReport {
  std::vector<EpisodeMetrics> episodes;  // ascending episode index
  double novel_acc = 0.0;
  std::optional<double> base_acc;
  std::optional<double> hm;  // mean of per-episode harmonic means
};

// Arithmetic means over the episodes, summed in episode order.
EvalReport aggregate(std::vector<EpisodeMetrics> metrics);

// Runs every episode on up to `threads` workers; the result does not depend on
// the worker count. An episode failure aborts with its index.
EvalReport run_evaluation(const EvalContext& context, const EpisodeConfig& config,
                          unsigned threads = 1);

std::string format_report_json(const EvalReport& report, const EpisodeConfig& config,
                               const std::map<std::string, std::string>& config_echo);
std::string format_report_csv(const EvalReport& report);

}  // namespace fsv::eval
