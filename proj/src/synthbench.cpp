#include "fsv/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "json.hpp"

#include "fsv/errors.hpp"
#include "fsv/rng.hpp"

namespace fsv::synth {
namespace {

std::string video_name(char prefix, int n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%c%06d", prefix, n);
  return buf;
}

std::string class_token(int id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "c%03d", id);
  return buf;
}

std::string noise_token(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "w%03d", i);
  return buf;
}

Vector on_sphere(Index d, double radius, RngStream& rng) {
  Vector v(d);
  for (Index i = 0; i < d; ++i) v(i) = rng.normal();
  return radius * v / v.norm();
}

// Unit vector supported on coordinates [from, from + len).
Vector unit_in_block(Index d, Index from, Index len, RngStream& rng) {
  Vector v = Vector::Zero(d);
  Vector block(len);
  for (Index i = 0; i < len; ++i) block(i) = rng.normal();
  v.segment(from, len) = block / block.norm();
  return v;
}

}  // namespace

void SynthConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  need(base_classes >= 1 && novel_classes >= 1 && val_classes >= 0, "synth class counts must be positive");
  need(clips_per_video >= 1, "synth clips_per_video must be >= 1");
  need(base_train_videos_per_class >= 1 && base_test_videos_per_class >= 0 && videos_per_class >= 1,
       "synth videos per class must be positive");
  need(dv >= 2 && dt >= 2 && dy >= 2, "synth dimensions must be >= 2");
  need(sigma_in > 0.0, "synth sigma_in must be > 0");
  need(sigma_sep >= 0.0 && semantic_noise >= 0.0, "synth scales must be >= 0");
  need(corpus_size >= 0 && noise_words >= 1 && noise_tags_per_positive >= 0 && tags_per_distractor >= 1,
       "synth corpus sizes must be non-negative");
  need(distractor_fraction >= 0.0 && distractor_fraction <= 1.0, "synth distractor_fraction must lie in [0,1]");
  need(video_share >= 0.0 && video_share <= 1.0, "synth video_share must lie in [0,1]");
  need(tag_noise >= 0.0 && tag_noise <= 1.0, "synth tag_noise must lie in [0,1]");
}

SynthBundle make_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  auto rng = derive_rng(cfg.seed, 0);
  const Index dv = cfg.dv, dt = cfg.dt, dy = cfg.dy;
  const int total_classes = cfg.base_classes + cfg.val_classes + cfg.novel_classes;

  SynthBundle out;
  auto& ds = out.dataset;
  auto& gt = out.truth;

  std::map<int, Vector> means;
  for (int c = 0; c < total_classes; ++c) {
    means[c] = on_sphere(dv, cfg.sigma_sep, rng);
    ds.class_names[c] = class_token(c);
    if (c < cfg.base_classes)
      ds.splits.base.push_back(c);
    else if (c < cfg.base_classes + cfg.val_classes)
      ds.splits.val.push_back(c);
    else
      ds.splits.novel.push_back(c);
  }

  gt.projection.resize(dy, dv);
  for (Index r = 0; r < dy; ++r)
    for (Index c = 0; c < dv; ++c) gt.projection(r, c) = rng.normal() / std::sqrt(double(dv));
  data::SemanticEmbeddingTable semantics(dy);
  for (const auto& [c, m] : means) {
    Vector y = gt.projection * m;
    for (Index i = 0; i < dy; ++i) y(i) += cfg.semantic_noise * rng.normal();
    semantics.add(c, y);
  }

  // Raw clips first; the nonnegative shift is known only once all exist.
  struct RawVideo {
    std::string id;
    Matrix clips;
  };
  std::vector<RawVideo> videos;
  auto make_video = [&](const std::string& id, const Vector& mean) {
    const double shared = cfg.sigma_in * std::sqrt(cfg.video_share);
    const double own = cfg.sigma_in * std::sqrt(1.0 - cfg.video_share);
    Vector center(dv);
    for (Index i = 0; i < dv; ++i) center(i) = mean(i) + shared * rng.normal();
    Matrix clips(dv, cfg.clips_per_video);
    for (Index k = 0; k < clips.cols(); ++k)
      for (Index i = 0; i < dv; ++i) clips(i, k) = center(i) + own * rng.normal();
    videos.push_back({id, std::move(clips)});
  };

  int vid = 0;
  for (int c = 0; c < total_classes; ++c) {
    const bool base = c < cfg.base_classes;
    const int train = base ? cfg.base_train_videos_per_class : cfg.videos_per_class;
    const int test = base ? cfg.base_test_videos_per_class : 0;
    for (int v = 0; v < train + test; ++v) {
      const auto id = video_name('v', vid++);
      make_video(id, means[c]);
      ds.labels[id] = c;
      if (v >= train) ds.splits.base_test_videos.push_back(id);
    }
  }

  // Tag vocabulary: class tokens live in the first half of the coordinates,
  // noise words in the second, so a planted video outranks every
  // distractor for its own class when no tag is corrupted.
  const Index half = dt / 2;
  data::WordEmbeddingTable words(dt);
  for (int c = 0; c < total_classes; ++c) words.add(class_token(c), unit_in_block(dt, 0, half, rng));
  for (int w = 0; w < cfg.noise_words; ++w)
    words.add(noise_token(w), unit_in_block(dt, half, dt - half, rng));

  data::TagCorpus corpus;
  const int planted = static_cast<int>(std::lround(cfg.corpus_size * (1.0 - cfg.distractor_fraction)));
  for (int i = 0; i < cfg.corpus_size; ++i) {
    data::TaggedVideo tv;
    tv.video_id = video_name('y', i);
    if (i < planted) {
      const int c = ds.splits.novel[static_cast<std::size_t>(i % cfg.novel_classes)];
      make_video(tv.video_id, means[c]);
      gt.planted[tv.video_id] = c;
      int tag_class = c;
      if (cfg.tag_noise > 0.0 && rng.uniform() < cfg.tag_noise && total_classes > 1) {
        const auto other = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(total_classes - 1)));
        tag_class = other >= c ? other + 1 : other;
      }
      tv.tags.push_back(class_token(tag_class));
      for (int t = 0; t < cfg.noise_tags_per_positive; ++t)
        tv.tags.push_back(noise_token(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(cfg.noise_words)))));
    } else {
      make_video(tv.video_id, on_sphere(dv, cfg.sigma_sep, rng));
      for (int t = 0; t < cfg.tags_per_distractor; ++t)
        tv.tags.push_back(noise_token(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(cfg.noise_words)))));
    }
    corpus.push_back(std::move(tv));
  }

  gt.shift = Vector::Zero(dv);
  for (const auto& v : videos) gt.shift = gt.shift.cwiseMax(-v.clips.rowwise().minCoeff());

  ds.features = data::FeatureTable(dv);
  for (const auto& v : videos)
    for (Index k = 0; k < v.clips.cols(); ++k)
      ds.features.add(v.id, static_cast<int>(k), v.clips.col(k) + gt.shift);
  ds.features.canonicalize();
  for (const auto& [c, m] : means) gt.class_means[c] = m + gt.shift;

  std::sort(ds.splits.base_test_videos.begin(), ds.splits.base_test_videos.end());
  std::sort(corpus.begin(), corpus.end(),
            [](const auto& a, const auto& b) { return a.video_id < b.video_id; });
  ds.tags = std::move(corpus);
  ds.words = std::move(words);
  ds.semantics = std::move(semantics);
  ds.reindex();
  ds.validate();
  return out;
}

std::string format_ground_truth(const GroundTruth& truth) {
  nlohmann::ordered_json j;
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::ordered_json means = nlohmann::ordered_json::object();
  for (const auto& [c, m] : truth.class_means) means[std::to_string(c)] = vec(m);
  j["class_means"] = means;
  j["shift"] = vec(truth.shift);
  std::vector<std::vector<double>> rows;
  for (Index r = 0; r < truth.projection.rows(); ++r) rows.push_back(vec(truth.projection.row(r).transpose()));
  j["projection"] = rows;
  nlohmann::ordered_json planted = nlohmann::ordered_json::object();
  for (const auto& [v, c] : truth.planted) planted[v] = c;
  j["planted"] = planted;
  return j.dump(1) + "\n";
}

double nearest_mean_accuracy(const data::Dataset& dataset, const GroundTruth& truth,
                             const std::vector<int>& classes,
                             const std::vector<std::string>& videos) {
  if (classes.size() <= 1) return 1.0;
  std::size_t total = 0, correct = 0;
  for (const auto& v : videos) {
    const int label = dataset.labels.at(v);
    for (auto r : dataset.features.rows_of(v)) {
      const auto f = dataset.features.feature(r);
      int best = -1;
      double best_d = 0.0;
      for (int c : classes) {
        const double d = (f - truth.class_means.at(c)).squaredNorm();
        if (best < 0 || d < best_d) {
          best = c;
          best_d = d;
        }
      }
      ++total;
      if (best == label) ++correct;
    }
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 1.0;
}

OracleAccuracy bayes_oracle(const data::Dataset& dataset, const GroundTruth& truth) {
  OracleAccuracy acc;
  auto videos_of = [&](const std::vector<int>& classes, bool base) {
    std::vector<std::string> out;
    for (int c : classes) {
      const auto vs = base ? dataset.base_test_videos(c) : dataset.videos_of_class(c);
      out.insert(out.end(), vs.begin(), vs.end());
    }
    return out;
  };
  acc.base = nearest_mean_accuracy(dataset, truth, dataset.splits.base, videos_of(dataset.splits.base, true));
  acc.val = nearest_mean_accuracy(dataset, truth, dataset.splits.val, videos_of(dataset.splits.val, false));
  acc.novel = nearest_mean_accuracy(dataset, truth, dataset.splits.novel, videos_of(dataset.splits.novel, false));
  return acc;
}

}  // namespace fsv::synth
