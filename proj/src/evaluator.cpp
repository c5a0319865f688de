#include "fsv/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "json.hpp"

#include "fsv/errors.hpp"
#include "fsv/rng.hpp"
#include "fsv/text_io.hpp"

namespace fsv::eval {
namespace {

// Stream ids for the randomness consumed inside run_episode.
constexpr std::uint64_t kTrainStream = 0x7472;
constexpr std::uint64_t kQueryStream = 0x7179;
constexpr std::uint64_t kRetrievalStream = 0x7265;
constexpr std::uint64_t kGenerateStream = 0x6765;

}  // namespace

double harmonic_mean(double acc_base, double acc_novel) {
  const double s = acc_base + acc_novel;
  if (s == 0.0) return 0.0;
  return 2.0 * acc_base * acc_novel / s;
}

void EpisodeConfig::validate(std::size_t novel_classes) const {
  if (n_way < 1) throw ConfigError("n_way must be >= 1");
  if (static_cast<std::size_t>(n_way) > novel_classes)
    throw ConfigError("n_way " + std::to_string(n_way) + " exceeds the " +
                      std::to_string(novel_classes) + " novel classes");
  if (k_shot < 1) throw ConfigError("k_shot must be >= 1");
  if (queries_per_class < 1) throw ConfigError("queries_per_class must be >= 1");
  if (include_base && base_queries_per_class < 1)
    throw ConfigError("base_queries_per_class must be >= 1");
  if (episodes < 1) throw ConfigError("episodes must be >= 1");
  if (clips_per_query < 1) throw ConfigError("clips_per_query must be >= 1");
  if (use_gan && (generated_per_class < 1 || generated_per_class > 10000))
    throw ConfigError("generated_per_class must lie in [1, 10000]");
  if (use_retrieval) retrieval.validate();
}

Episode sample_episode(const EpisodeConfig& config, const data::Dataset& dataset, int index) {
  const auto& novel = dataset.splits.novel;
  config.validate(novel.size());
  auto rng = derive_rng(config.seed, static_cast<std::uint64_t>(index));
  Episode ep;
  ep.index = index;
  for (auto i : sample_without_replacement(novel.size(), static_cast<std::size_t>(config.n_way), rng))
    ep.classes.push_back(novel[i]);
  std::sort(ep.classes.begin(), ep.classes.end());

  const auto need = static_cast<std::size_t>(config.k_shot + config.queries_per_class);
  for (int c : ep.classes) {
    const auto& videos = dataset.videos_of_class(c);
    if (videos.size() < need)
      throw Error("class " + std::to_string(c) + " has " + std::to_string(videos.size()) +
                  " videos, needs " + std::to_string(need) + " (short by " +
                  std::to_string(need - videos.size()) + ")");
    const auto pick = sample_without_replacement(videos.size(), need, rng);
    auto& s = ep.support[c];
    auto& q = ep.queries[c];
    for (std::size_t i = 0; i < pick.size(); ++i)
      (i < static_cast<std::size_t>(config.k_shot) ? s : q).push_back(videos[pick[i]]);
  }

  if (config.include_base) {
    const auto need_base = static_cast<std::size_t>(config.base_queries_per_class);
    for (int c : dataset.splits.base) {
      const auto videos = dataset.base_test_videos(c);
      if (videos.size() < need_base)
        throw Error("base class " + std::to_string(c) + " has " + std::to_string(videos.size()) +
                    " held-out videos, needs " + std::to_string(need_base) + " (short by " +
                    std::to_string(need_base - videos.size()) + ")");
      for (auto i : sample_without_replacement(videos.size(), need_base, rng))
        ep.base_queries.push_back(videos[i]);
    }
  }
  return ep;
}

namespace {

Matrix head_clips(const data::Dataset& ds, const data::FeatureSpace& space,
                    const std::vector<std::size_t>& rows) {
  return space.from_raw(ds.features.gather(rows));
}

Matrix query_clips(const data::Dataset& ds, const data::FeatureSpace& space,
                   const std::string& video, int clips, RngStream& rng) {
  const auto& rows = ds.features.rows_of(video);
  if (rows.empty()) throw Error("query video " + video + " has no clips");
  if (rows.size() <= static_cast<std::size_t>(clips)) return head_clips(ds, space, rows);
  std::vector<std::size_t> pick;
  for (auto i : sample_without_replacement(rows.size(), static_cast<std::size_t>(clips), rng))
    pick.push_back(rows[i]);
  return head_clips(ds, space, pick);
}

}  // namespace

EpisodeMetrics run_episode(const Episode& episode, const EvalContext& ctx,
                           const EpisodeConfig& config) {
  if (!ctx.dataset || !ctx.space) throw Error("run_episode: dataset and feature space are required");
  const auto& ds = *ctx.dataset;
  const auto& space = *ctx.space;
  const auto seed = config.seed;
  const auto idx = static_cast<std::uint64_t>(episode.index);

  EpisodeMetrics m;
  m.episode = episode.index;

  clf::LabeledSamples trusted;
  std::map<int, Matrix> support_raw;
  for (int c : episode.classes) {
    std::vector<std::size_t> rows;
    for (const auto& v : episode.support.at(c)) {
      const auto& r = ds.features.rows_of(v);
      rows.insert(rows.end(), r.begin(), r.end());
    }
    support_raw[c] = ds.features.gather(rows);
    trusted.append(space.from_raw(support_raw[c]), c);
  }

  clf::LabeledSamples pseudo;
  if (config.use_retrieval) {
    if (!ctx.tag_index || !ds.words) throw Error("retrieval needs a tag index and word embeddings");
    std::vector<ret::ClassRequest> requests;
    for (int c : episode.classes) {
      auto name = ds.class_names.find(c);
      if (name == ds.class_names.end()) throw Error("class " + std::to_string(c) + " has no name");
      requests.push_back({c, ret::class_query(name->second, *ds.words), support_raw[c]});
    }
    auto rc = config.retrieval;
    rc.best_clips = config.use_best_clips;
    const auto set = ret::assemble_pseudo_set(std::move(requests), *ctx.tag_index, ds.features, rc,
                                              stream_key({seed, idx, kRetrievalStream}));
    const auto pf = ret::gather_pseudo_features(set, ds.features);
    if (pf.x.cols() > 0) {
      pseudo.x = space.from_raw(pf.x);
      pseudo.y = pf.y;
    }
    m.pseudo_clips = pf.y.size();
  }

  if (config.use_gan) {
    if (!ctx.gan || !ds.semantics) throw Error("generation needs a trained GAN and class embeddings");
    for (int c : episode.classes) {
      auto g_rng = derive_rng(seed, stream_key({idx, kGenerateStream, static_cast<std::uint64_t>(c)}));
      trusted.append(space.from_generated(gan::generate_features(
                         *ctx.gan, c, *ds.semantics,
                         static_cast<std::size_t>(config.generated_per_class), g_rng)),
                     c);
      m.generated += static_cast<std::size_t>(config.generated_per_class);
    }
  }

  auto train_rng = derive_rng(seed, stream_key({idx, kTrainStream}));
  const auto novel = clf::train_linear(episode.classes, trusted, pseudo, config.use_denoising,
                                       ctx.novel_train, train_rng);

  clf::LinearClassifier scorer = novel;
  if (config.include_base) {
    if (!ctx.base) throw Error("the generalized setting needs a trained base classifier");
    scorer = clf::concat_classifiers(*ctx.base, novel);
  }

  auto q_rng = derive_rng(seed, stream_key({idx, kQueryStream}));
  std::size_t total = 0, correct = 0;
  for (int c : episode.classes)
    for (const auto& v : episode.queries.at(c)) {
      const auto p = clf::video_predict(scorer, query_clips(ds, space, v, config.clips_per_query, q_rng));
      ++total;
      if (p.class_id == c) ++correct;
    }
  m.novel_acc = static_cast<double>(correct) / static_cast<double>(total);

  if (config.include_base) {
    std::size_t bt = 0, bc = 0;
    for (const auto& v : episode.base_queries) {
      const auto p = clf::video_predict(scorer, query_clips(ds, space, v, config.clips_per_query, q_rng));
      ++bt;
      if (p.class_id == ds.labels.at(v)) ++bc;
    }
    m.base_acc = bt ? static_cast<double>(bc) / static_cast<double>(bt) : 0.0;
    m.hm = harmonic_mean(*m.base_acc, m.novel_acc);
  }
  return m;
}

EvalReport aggregate(std::vector<EpisodeMetrics> metrics) {
  if (metrics.empty()) throw Error("aggregate: no episodes");
  std::sort(metrics.begin(), metrics.end(),
            [](const auto& a, const auto& b) { return a.episode < b.episode; });
  EvalReport r;
  const bool gfsv = metrics.front().base_acc.has_value();
  double novel = 0.0, base = 0.0, hm = 0.0;
  for (const auto& m : metrics) {
    if (m.base_acc.has_value() != gfsv) throw Error("aggregate: mixed episode kinds");
    novel += m.novel_acc;
    if (gfsv) {
      base += *m.base_acc;
      hm += *m.hm;
    }
  }
  const auto n = static_cast<double>(metrics.size());
  r.novel_acc = novel / n;
  if (gfsv) {
    r.base_acc = base / n;
    r.hm = hm / n;
  }
  r.episodes = std::move(metrics);
  return r;
}

EvalReport run_evaluation(const EvalContext& ctx, const EpisodeConfig& config, unsigned threads) {
  if (!ctx.dataset) throw Error("run_evaluation: no dataset");
  config.validate(ctx.dataset->splits.novel.size());
  const auto n = static_cast<std::size_t>(config.episodes);
  std::vector<EpisodeMetrics> results(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};

  auto worker = [&]() {
    for (std::size_t i = next++; i < n && !failed; i = next++) {
      try {
        const auto ep = sample_episode(config, *ctx.dataset, static_cast<int>(i));
        results[i] = run_episode(ep, ctx, config);
      } catch (...) {
        errors[i] = std::current_exception();
        failed = true;
      }
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const ConfigError&) {
      throw;
    } catch (const MissingArtifactError&) {
      throw;
    } catch (const std::exception& e) {
      throw Error("episode " + std::to_string(i) + ": " + e.what());
    }
  }
  return aggregate(std::move(results));
}

std::string format_report_json(const EvalReport& report, const EpisodeConfig& config,
                               const std::map<std::string, std::string>& config_echo) {
  nlohmann::ordered_json j;
  j["seed"] = config.seed;
  j["episodes"] = report.episodes.size();
  j["n_way"] = config.n_way;
  j["k_shot"] = config.k_shot;
  j["gfsv"] = config.include_base;
  j["novel_acc"] = report.novel_acc;
  if (report.base_acc) j["base_acc"] = *report.base_acc;
  if (report.hm) j["hm"] = *report.hm;
  nlohmann::ordered_json echo = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config_echo) echo[k] = v;
  j["config"] = echo;
  return j.dump(2) + "\n";
}

std::string format_report_csv(const EvalReport& report) {
  const bool gfsv = report.base_acc.has_value();
  std::string out = gfsv ? "episode,novel_acc,base_acc,hm\n" : "episode,novel_acc\n";
  for (const auto& m : report.episodes) {
    out += std::to_string(m.episode) + "," + io::format_double(m.novel_acc);
    if (gfsv) out += "," + io::format_double(*m.base_acc) + "," + io::format_double(*m.hm);
    out += "\n";
  }
  return out;
}

}  // namespace fsv::eval
