#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "oracles.hpp"

#include "fsv/errors.hpp"
#include "fsv/evaluator.hpp"

using namespace fsv;

namespace {

struct Toy {
  data::Dataset ds;
  data::FeatureSpace space;
};

// Base classes 0..nb-1 and novel classes 100.., one feature axis per class.
// `overlap` additionally puts every novel mean on a base axis so that a
// strong base head claims novel queries.
Toy make_toy(int nb, int nn, int videos, int clips, double noise, bool overlap, std::uint64_t seed) {
  Toy t;
  const Index dim = nb + nn;
  auto rng = derive_rng(seed, 0);
  t.ds.features = data::FeatureTable(dim);
  auto add_class = [&](int cls, const Vector& mean, bool base) {
    for (int v = 0; v < videos; ++v) {
      const std::string id = "c" + std::to_string(cls) + "_v" + std::to_string(v);
      for (int k = 0; k < clips; ++k)
        t.ds.features.add(id, k, mean + noise * oracle::random_matrix(dim, 1, rng).col(0));
      t.ds.labels[id] = cls;
      if (base && v % 2 == 1) t.ds.splits.base_test_videos.push_back(id);
    }
    t.ds.class_names[cls] = "class" + std::to_string(cls);
  };
  for (int b = 0; b < nb; ++b) {
    Vector m = Vector::Zero(dim);
    m(b) = 5.0;
    add_class(b, m, true);
    t.ds.splits.base.push_back(b);
  }
  for (int n = 0; n < nn; ++n) {
    Vector m = Vector::Zero(dim);
    m(nb + n) = overlap ? 2.0 : 5.0;
    if (overlap) m(n % nb) = 5.0;
    add_class(100 + n, m, false);
    t.ds.splits.novel.push_back(100 + n);
  }
  t.ds.reindex();
  Matrix all(dim, static_cast<Index>(t.ds.features.size()));
  for (std::size_t r = 0; r < t.ds.features.size(); ++r) all.col(static_cast<Index>(r)) = t.ds.features.feature(r);
  t.space = data::fit_feature_space(all);
  return t;
}

eval::EpisodeMetrics metric(int episode, double novel) {
  eval::EpisodeMetrics m;
  m.episode = episode;
  m.novel_acc = novel;
  return m;
}

}  // namespace

TEST_SUITE("evaluator") {

TEST_CASE("harmonic mean examples") {
  CHECK(eval::harmonic_mean(88.7, 7.5) == doctest::Approx(13.8).epsilon(0.05 / 13.8));
  CHECK(eval::harmonic_mean(50, 50) == doctest::Approx(50));
  CHECK(eval::harmonic_mean(0, 90) == 0.0);
  CHECK(eval::harmonic_mean(0, 0) == 0.0);
}

TEST_CASE("harmonic mean properties") {
  auto rng = derive_rng(41, 0);
  for (int t = 0; t < 1000; ++t) {
    const double a = rng.uniform(), b = t % 10 == 0 ? a : rng.uniform();
    const double h = eval::harmonic_mean(a, b);
    CHECK(h == eval::harmonic_mean(b, a));
    CHECK(h >= std::min(a, b) - 1e-15);
    CHECK(h <= 0.5 * (a + b) + 1e-15);
    if (a == b) CHECK(h == doctest::Approx(a));
    else CHECK(h < 0.5 * (a + b));
  }
}

TEST_CASE("episode sampling: counts, defaults and determinism") {
  const auto t = make_toy(3, 8, 20, 2, 0.1, false, 1);
  eval::EpisodeConfig cfg;
  CHECK(cfg.clips_per_query == 10);
  cfg.seed = 3;
  const auto ep = eval::sample_episode(cfg, t.ds, 4);
  CHECK(ep.classes.size() == 5);
  std::size_t support = 0, queries = 0;
  for (int c : ep.classes) {
    support += ep.support.at(c).size();
    queries += ep.queries.at(c).size();
  }
  CHECK(support == 5);
  CHECK(queries == 75);
  CHECK(ep.base_queries.empty());

  const auto again = eval::sample_episode(cfg, t.ds, 4);
  CHECK(again.classes == ep.classes);
  CHECK(again.support == ep.support);
  CHECK(again.queries == ep.queries);
  CHECK(eval::sample_episode(cfg, t.ds, 5).queries != ep.queries);

  cfg.include_base = true;
  cfg.base_queries_per_class = 4;
  CHECK(eval::sample_episode(cfg, t.ds, 0).base_queries.size() == 12);
  cfg.base_queries_per_class = 11;
  CHECK_THROWS(eval::sample_episode(cfg, t.ds, 0));
}

TEST_CASE("episode sampling: n-way bound and short classes") {
  const auto t = make_toy(2, 24, 17, 1, 0.1, false, 2);
  eval::EpisodeConfig cfg;
  cfg.n_way = 25;
  CHECK_THROWS_AS(eval::sample_episode(cfg, t.ds, 0), ConfigError);
  cfg.n_way = 24;
  CHECK(eval::sample_episode(cfg, t.ds, 0).classes.size() == 24);
  cfg.k_shot = 5;
  CHECK_THROWS(eval::sample_episode(cfg, t.ds, 0));
}

TEST_CASE("episode sampling: support and queries are disjoint in every episode") {
  const auto t = make_toy(2, 10, 25, 1, 0.1, false, 3);
  eval::EpisodeConfig cfg;
  cfg.k_shot = 5;
  cfg.include_base = true;
  cfg.base_queries_per_class = 5;
  for (int i = 0; i < 200; ++i) {
    const auto ep = eval::sample_episode(cfg, t.ds, i);
    REQUIRE(std::set<int>(ep.classes.begin(), ep.classes.end()).size() == 5);
    for (int c : ep.classes) {
      std::set<std::string> s(ep.support.at(c).begin(), ep.support.at(c).end());
      CHECK(s.size() == 5);
      for (const auto& q : ep.queries.at(c)) {
        CHECK(s.count(q) == 0);
        CHECK(t.ds.labels.at(q) == c);
      }
    }
    for (const auto& b : ep.base_queries) CHECK(t.ds.is_base_test(b));
  }
}

TEST_CASE("run: degenerate separable episode scores 1") {
  const auto t = make_toy(2, 6, 20, 3, 0.0, false, 4);
  eval::EvalContext ctx;
  ctx.dataset = &t.ds;
  ctx.space = &t.space;
  eval::EpisodeConfig cfg;
  cfg.seed = 9;
  const auto m = eval::run_episode(eval::sample_episode(cfg, t.ds, 0), ctx, cfg);
  CHECK(m.novel_acc == 1.0);
  CHECK_FALSE(m.base_acc.has_value());
}

TEST_CASE("run: a dominant base head starves the novel classes") {
  const auto t = make_toy(4, 6, 20, 3, 0.3, true, 5);
  clf::LinearClassifier base;
  Matrix w(t.space.head.mean.size(), 4);
  for (int b = 0; b < 4; ++b) {
    base.classes.push_back(b);
    std::vector<std::size_t> rows;
    for (const auto& v : t.ds.videos_of_class(b)) {
      const auto& r = t.ds.features.rows_of(v);
      rows.insert(rows.end(), r.begin(), r.end());
    }
    w.col(b) = 20.0 * t.space.from_raw(t.ds.features.gather(rows)).rowwise().mean();
  }
  base.weight = w;

  eval::EvalContext ctx;
  ctx.dataset = &t.ds;
  ctx.space = &t.space;
  ctx.base = &base;
  eval::EpisodeConfig cfg;
  cfg.include_base = true;
  cfg.base_queries_per_class = 5;
  cfg.seed = 2;
  const auto ep = eval::sample_episode(cfg, t.ds, 0);
  const auto m = eval::run_episode(ep, ctx, cfg);
  REQUIRE(m.base_acc.has_value());
  CHECK(m.novel_acc < *m.base_acc);
  CHECK(*m.hm == doctest::Approx(eval::harmonic_mean(*m.base_acc, m.novel_acc)));

  // Direct check: the base head alone already claims each novel query with a
  // margin far above what a one-shot head can reach.
  const auto q = ep.queries.at(ep.classes[0]).front();
  const Matrix x = t.space.from_raw(t.ds.features.gather(t.ds.features.rows_of(q)));
  CHECK(base.logits(x).maxCoeff() > 50.0);

  ctx.base = nullptr;
  CHECK_THROWS(eval::run_episode(ep, ctx, cfg));
}

TEST_CASE("aggregate examples") {
  const auto one = eval::aggregate({metric(0, 0.8)});
  CHECK(one.novel_acc == 0.8);
  CHECK_FALSE(one.hm.has_value());
  CHECK(eval::aggregate({metric(0, 0.8), metric(1, 0.6)}).novel_acc == doctest::Approx(0.7));
  std::vector<eval::EpisodeMetrics> ms;
  auto rng = derive_rng(6, 0);
  for (int i = 0; i < 50; ++i) ms.push_back(metric(i, rng.uniform()));
  const auto a = eval::aggregate(ms);
  std::reverse(ms.begin(), ms.end());
  CHECK(eval::aggregate(ms).novel_acc == a.novel_acc);
  CHECK(a.novel_acc >= 0.0);
  CHECK(a.novel_acc <= 1.0);

  auto g = metric(2, 0.5);
  g.base_acc = 0.9;
  g.hm = eval::harmonic_mean(0.9, 0.5);
  CHECK_THROWS(eval::aggregate({metric(0, 0.8), g}));
  const auto gr = eval::aggregate({g});
  CHECK(*gr.base_acc == 0.9);
  CHECK(*gr.hm == *g.hm);
  CHECK_THROWS(eval::aggregate({}));
}

TEST_CASE("full run: bit-identical across reruns and worker counts") {
  const auto t = make_toy(3, 7, 20, 4, 2.0, false, 7);
  eval::EvalContext ctx;
  ctx.dataset = &t.ds;
  ctx.space = &t.space;
  eval::EpisodeConfig cfg;
  cfg.episodes = 12;
  cfg.seed = 13;
  const auto a = eval::run_evaluation(ctx, cfg, 1);
  const auto b = eval::run_evaluation(ctx, cfg, 1);
  const auto c = eval::run_evaluation(ctx, cfg, 3);
  CHECK(eval::format_report_csv(a) == eval::format_report_csv(b));
  CHECK(eval::format_report_csv(a) == eval::format_report_csv(c));
  CHECK(a.novel_acc == c.novel_acc);
  REQUIRE(a.episodes.size() == 12);
  for (const auto& m : a.episodes) {
    CHECK(m.novel_acc >= 0.0);
    CHECK(m.novel_acc <= 1.0);
  }
  CHECK(a.novel_acc > 0.2);
}

TEST_CASE("full run: episode failures name the episode") {
  auto t = make_toy(2, 6, 20, 2, 0.5, false, 8);
  eval::EvalContext ctx;
  ctx.dataset = &t.ds;
  ctx.space = &t.space;
  eval::EpisodeConfig cfg;
  cfg.episodes = 3;
  cfg.use_gan = true;
  try {
    eval::run_evaluation(ctx, cfg, 1);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("episode 0") != std::string::npos);
  }
}

}  // TEST_SUITE
