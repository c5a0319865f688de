#include "fsv/pipeline.hpp"

#include <algorithm>

#include "fsv/errors.hpp"
#include "fsv/rng.hpp"

namespace fsv::pipeline {

std::vector<std::size_t> base_training_rows(const data::Dataset& ds) {
  std::vector<std::size_t> rows;
  for (int c : ds.splits.base)
    for (const auto& v : ds.base_train_videos(c)) {
      const auto& r = ds.features.rows_of(v);
      rows.insert(rows.end(), r.begin(), r.end());
    }
  if (rows.empty()) throw Error("dataset has no base training clips");
  return rows;
}

data::FeatureSpace fit_space(const data::Dataset& ds) {
  return data::fit_feature_space(ds.features.gather(base_training_rows(ds)));
}

clf::LabeledSamples raw_samples(const data::Dataset& ds, const std::vector<std::size_t>& rows) {
  clf::LabeledSamples s;
  s.x = ds.features.gather(rows);
  s.y.reserve(rows.size());
  for (auto r : rows) s.y.push_back(ds.labels.at(ds.features.key(r).video_id));
  return s;
}

void BaseStopping::validate() const {
  if (val_videos_per_class < 0) throw ConfigError("base_val_videos must be >= 0");
  if (!(min_delta >= 0.0)) throw ConfigError("base_min_delta must be >= 0");
}

clf::LinearClassifier train_base_head(const data::Dataset& ds, const data::FeatureSpace& space,
                                      const clf::TrainConfig& config, std::uint64_t seed,
                                      const BaseStopping& stopping, BaseHeadReport* report) {
  stopping.validate();
  auto split_rng = derive_rng(seed, stream_key({0xba5e, 0x7661}));
  std::vector<std::size_t> train_rows;
  std::vector<std::pair<int, Matrix>> val;  // (class, head-space clips) per held-out video
  std::size_t train_videos = 0;
  for (int c : ds.splits.base) {
    auto videos = ds.base_train_videos(c);
    std::size_t k = 0;
    if (stopping.val_videos_per_class > 0 && videos.size() > 1) {
      shuffle(videos, split_rng);
      k = std::min(static_cast<std::size_t>(stopping.val_videos_per_class), videos.size() - 1);
      std::sort(videos.begin(), videos.end() - static_cast<std::ptrdiff_t>(k));
    }
    const std::size_t n_train = videos.size() - k;
    for (std::size_t i = 0; i < videos.size(); ++i) {
      const auto& rows = ds.features.rows_of(videos[i]);
      if (i < n_train) {
        train_rows.insert(train_rows.end(), rows.begin(), rows.end());
        ++train_videos;
      } else if (!rows.empty()) {
        val.emplace_back(c, space.from_raw(ds.features.gather(rows)));
      }
    }
  }
  if (train_rows.empty()) throw Error("dataset has no base training clips");

  auto samples = raw_samples(ds, train_rows);
  samples.x = space.from_raw(samples.x);
  auto rng = derive_rng(seed, stream_key({0xba5e}));
  if (val.empty()) {
    if (report) *report = BaseHeadReport{{}, -1, train_videos, 0};
    return clf::train_linear(ds.splits.base, samples, config, rng);
  }

  BaseHeadReport rep;
  rep.train_videos = train_videos;
  rep.val_videos = val.size();
  clf::LinearClassifier best;
  double best_acc = -1.0;
  const auto hook = [&](int epoch, const clf::LinearClassifier& current) {
    std::size_t correct = 0;
    for (const auto& [c, clips] : val)
      if (clf::video_predict(current, clips).class_id == c) ++correct;
    const double acc = static_cast<double>(correct) / static_cast<double>(val.size());
    rep.val_accuracy.push_back(acc);
    if (rep.best_epoch < 0 || acc > best_acc + stopping.min_delta) {
      best_acc = acc;
      best = current;
      rep.best_epoch = epoch;
      return true;
    }
    return false;
  };
  auto last = clf::train_linear(ds.splits.base, samples, clf::LabeledSamples{}, false, config, rng,
                                nullptr, hook);
  if (report) *report = rep;
  return rep.best_epoch < 0 ? last : best;
}

ret::PseudoSet retrieve_novel(const data::Dataset& ds, const ret::RetrievalConfig& config,
                              int k_shot, std::uint64_t seed) {
  if (!ds.tags) throw MissingArtifactError(std::string("retrieval needs ") + data::kTagsFile);
  if (!ds.words) throw MissingArtifactError(std::string("retrieval needs ") + data::kWordEmbeddingsFile);
  if (k_shot < 1) throw ConfigError("k_shot must be >= 1");
  config.validate();
  const auto index = ret::build_tag_index(*ds.tags, *ds.words);
  auto rng = derive_rng(seed, stream_key({0x7265, 0x5355}));
  std::vector<ret::ClassRequest> requests;
  for (int c : ds.splits.novel) {
    const auto& videos = ds.videos_of_class(c);
    if (videos.size() < static_cast<std::size_t>(k_shot))
      throw ValidationError("novel class with fewer videos than k_shot", {std::to_string(c)});
    std::vector<std::size_t> rows;
    for (auto i : sample_without_replacement(videos.size(), static_cast<std::size_t>(k_shot), rng)) {
      const auto& r = ds.features.rows_of(videos[i]);
      rows.insert(rows.end(), r.begin(), r.end());
    }
    auto name = ds.class_names.find(c);
    if (name == ds.class_names.end())
      throw ValidationError("novel class without a name", {std::to_string(c)});
    requests.push_back({c, ret::class_query(name->second, *ds.words), ds.features.gather(rows)});
  }
  return ret::assemble_pseudo_set(std::move(requests), index, ds.features, config,
                                  stream_key({seed, 0x7265}));
}

gan::GanParams train_generator(const data::Dataset& ds, const data::FeatureSpace& space,
                               const gan::GanTrainConfig& config, const ret::PseudoSet* pseudo,
                               gan::GanLog* log) {
  if (!ds.semantics) throw MissingArtifactError("generator training needs class_embeddings.tsv");
  auto samples = raw_samples(ds, base_training_rows(ds));
  if (pseudo) {
    const auto pf = ret::gather_pseudo_features(*pseudo, ds.features);
    clf::LabeledSamples extra;
    extra.x = pf.x;
    extra.y = pf.y;
    samples.append(extra);
  }
  return gan::train_vfgan(samples.x, samples.y, space.minmax, *ds.semantics, config, log);
}

}  // namespace fsv::pipeline
