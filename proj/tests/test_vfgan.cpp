#include <cmath>

#include "doctest.h"
#include "oracles.hpp"

#include "fsv/errors.hpp"
#include "fsv/vfgan.hpp"

using namespace fsv;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// Miniature GAN with weights large enough that finite differences see
// something other than round-off.
gan::GanParams mini_gan(Index dv, Index dy, RngStream& rng) {
  auto g = gan::init_gan(dv, dy, rng, 6);
  for (auto* net : {&g.generator, &g.critic})
    for (auto& layer : net->layers) {
      layer.weight *= 40.0;
      for (Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = 0.3 * rng.normal();
    }
  return g;
}

Matrix uniform_matrix(Index rows, Index cols, RngStream& rng) {
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = rng.uniform();
  return m;
}

struct Toy {
  Matrix x;
  std::vector<int> y;
  data::SemanticEmbeddingTable semantics{2};
  data::MinMaxScaler scaler;
  Vector scaled_mean[2];
};

// Two Gaussian blobs in the plane, 500 clips each.
Toy make_toy() {
  Toy t;
  auto rng = derive_rng(31, 0);
  t.x.resize(2, 1000);
  const Vector centers[2] = {vec({0, 0}), vec({4, 4})};
  for (Index j = 0; j < 1000; ++j) {
    const int c = j < 500 ? 0 : 1;
    t.x.col(j) = centers[c] + 0.5 * oracle::random_matrix(2, 1, rng).col(0);
    t.y.push_back(c);
  }
  t.semantics.add(0, vec({1, 0}));
  t.semantics.add(1, vec({0, 1}));
  t.scaler = data::fit_minmax(t.x);
  const Matrix s = t.scaler.apply_columns(t.x);
  t.scaled_mean[0] = s.leftCols(500).rowwise().mean();
  t.scaled_mean[1] = s.rightCols(500).rowwise().mean();
  return t;
}

gan::GanTrainConfig toy_config() {
  gan::GanTrainConfig cfg;
  cfg.epochs = 150;
  cfg.seed = 5;
  return cfg;
}

const gan::GanParams& trained_toy_gan() {
  static const gan::GanParams g = [] {
    const auto t = make_toy();
    return gan::train_vfgan(t.x, t.y, t.scaler, t.semantics, toy_config());
  }();
  return g;
}

}  // namespace

TEST_SUITE("vfgan") {

TEST_CASE("init: layer widths follow the embedding and feature sizes") {
  auto rng = derive_rng(1, 0);
  const auto g = gan::init_gan(512, 300, rng);
  CHECK(g.generator.input_dim() == 600);
  CHECK(g.generator.output_dim() == 512);
  CHECK(g.generator.layers[0].out_dim() == 4096);
  CHECK(g.critic.input_dim() == 812);
  CHECK(g.critic.output_dim() == 1);
  CHECK_NOTHROW(g.validate());

  auto rng2 = derive_rng(1, 0);
  const auto h = gan::init_gan(16, 768, rng2, 8);
  CHECK(h.dz() == 768);
  CHECK(h.generator.input_dim() == 1536);

  auto a = derive_rng(9, 9), b = derive_rng(9, 9);
  const auto p = gan::init_gan(8, 4, a, 32), q = gan::init_gan(8, 4, b, 32);
  CHECK(p.generator.layers[0].weight == q.generator.layers[0].weight);
  CHECK(p.critic.layers[1].weight == q.critic.layers[1].weight);
}

TEST_CASE("critic loss: Wasserstein part and identical batches") {
  auto rng = derive_rng(2, 0);
  const auto g = mini_gan(3, 2, rng);
  const Matrix real = uniform_matrix(3, 4, rng);
  const Matrix cond = uniform_matrix(2, 4, rng);
  const Vector alphas = uniform_matrix(4, 1, rng).col(0);
  const auto same = gan::critic_loss(g.critic, real, real, cond, alphas, 10.0);
  CHECK(same.wasserstein == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK(same.loss == doctest::Approx(same.penalty).epsilon(1e-12));

  const auto zero_pen = gan::critic_loss(g.critic, real, real, cond, alphas, 0.0);
  CHECK(zero_pen.penalty == 0.0);
}

TEST_CASE("critic loss: swapping real and fake negates the Wasserstein terms") {
  auto rng = derive_rng(3, 0);
  for (int t = 0; t < 20; ++t) {
    const auto g = mini_gan(3, 2, rng);
    const Matrix a = uniform_matrix(3, 5, rng), b = uniform_matrix(3, 5, rng);
    const Matrix cond = uniform_matrix(2, 5, rng);
    const Vector alphas = uniform_matrix(5, 1, rng).col(0);
    const auto fwd = gan::critic_loss(g.critic, a, b, cond, alphas, 10.0);
    const auto rev = gan::critic_loss(g.critic, b, a, cond, alphas, 10.0);
    CHECK(fwd.wasserstein == -rev.wasserstein);
    CHECK(fwd.penalty >= 0.0);
    CHECK(rev.penalty >= 0.0);
  }
}

TEST_CASE("critic loss: linear critic penalty matches the closed form") {
  auto rng = derive_rng(4, 0);
  nk::MlpParams d = nk::make_mlp(3, {{1, nk::Activation::kLinear}}, 1.0, rng);
  d.layers[0].weight << 1.0, 0.0, 0.5;  // feature part has norm 1, condition column is 0.5
  const Matrix real = uniform_matrix(2, 3, rng), fake = uniform_matrix(2, 3, rng);
  const Matrix cond = uniform_matrix(1, 3, rng);
  // The penalty is taken on the feature input only, where the gradient is [1, 0].
  const auto r = gan::critic_loss(d, real, fake, cond, vec({0.1, 0.5, 0.9}), 10.0);
  CHECK(r.penalty == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  d.layers[0].weight << 2.0, 0.0, 0.5;
  const auto r2 = gan::critic_loss(d, real, fake, cond, vec({0.1, 0.5, 0.9}), 10.0);
  CHECK(r2.penalty == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("critic loss: gradients match finite differences") {
  auto rng = derive_rng(5, 0);
  int checked = 0;
  for (int t = 0; t < 40 && checked < 10; ++t) {
    auto g = mini_gan(3, 2, rng);
    const Matrix real = uniform_matrix(3, 4, rng), fake = uniform_matrix(3, 4, rng);
    const Matrix cond = uniform_matrix(2, 4, rng);
    const Vector alphas = uniform_matrix(4, 1, rng).col(0);
    const Matrix x_hat = real * alphas.asDiagonal() + fake * (Vector::Ones(4) - alphas).asDiagonal();
    if (oracle::near_kink(g.critic, nk::stack_rows(real, cond)) ||
        oracle::near_kink(g.critic, nk::stack_rows(fake, cond)) ||
        oracle::near_kink(g.critic, nk::stack_rows(x_hat, cond)))
      continue;
    const auto lg = gan::critic_loss(g.critic, real, fake, cond, alphas, 10.0);
    const double err = oracle::max_param_error(g.critic, lg.grads, [&] {
      return gan::critic_loss(g.critic, real, fake, cond, alphas, 10.0).loss;
    });
    CHECK(err < 1e-4);
    ++checked;
  }
  CHECK(checked >= 5);
}

TEST_CASE("generator loss: constant critic") {
  auto rng = derive_rng(6, 0);
  auto g = mini_gan(3, 2, rng);
  g.critic.layers[1].weight.setZero();
  g.critic.layers[1].bias(0) = 0.75;
  const auto lg = gan::generator_loss(g.generator, g.critic, oracle::random_matrix(2, 5, rng),
                                      uniform_matrix(2, 5, rng));
  CHECK(lg.loss == doctest::Approx(-0.75).epsilon(1e-14));
  for (std::size_t l = 0; l < lg.grads.weight.size(); ++l) {
    CHECK(lg.grads.weight[l].isZero());
    CHECK(lg.grads.bias[l].isZero());
  }
}

TEST_CASE("generator loss: gradients match finite differences") {
  auto rng = derive_rng(7, 0);
  int checked = 0;
  for (int t = 0; t < 40 && checked < 10; ++t) {
    auto g = mini_gan(3, 2, rng);
    const Matrix z = oracle::random_matrix(2, 4, rng), cond = uniform_matrix(2, 4, rng);
    const Matrix g_in = nk::stack_rows(z, cond);
    if (oracle::near_kink(g.generator, g_in)) continue;
    const Matrix fake = nk::mlp_forward(g.generator, g_in).output();
    if (oracle::near_kink(g.critic, nk::stack_rows(fake, cond))) continue;
    const auto lg = gan::generator_loss(g.generator, g.critic, z, cond);
    const double err = oracle::max_param_error(g.generator, lg.grads, [&] {
      return gan::generator_loss(g.generator, g.critic, z, cond).loss;
    });
    CHECK(err < 1e-4);
    ++checked;
  }
  CHECK(checked >= 5);
}

TEST_CASE("generator loss: duplicating the batch leaves it unchanged") {
  auto rng = derive_rng(8, 0);
  const auto g = mini_gan(3, 2, rng);
  const Matrix z = oracle::random_matrix(2, 4, rng), cond = uniform_matrix(2, 4, rng);
  Matrix z2(2, 8), c2(2, 8);
  z2 << z, z;
  c2 << cond, cond;
  const auto a = gan::generator_loss(g.generator, g.critic, z, cond);
  const auto b = gan::generator_loss(g.generator, g.critic, z2, c2);
  CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-13));
  CHECK((a.grads.weight[0] - b.grads.weight[0]).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("train: zero epochs returns the initial parameters and an empty log") {
  const auto t = make_toy();
  gan::GanTrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 3;
  gan::GanLog log{{0, 1.0, 1.0}};
  const auto a = gan::train_vfgan(t.x, t.y, t.scaler, t.semantics, cfg, &log);
  CHECK(log.empty());
  const auto b = gan::train_vfgan(t.x, t.y, t.scaler, t.semantics, cfg);
  CHECK(a.generator.layers[0].weight == b.generator.layers[0].weight);
  CHECK(a.critic.layers[0].weight == b.critic.layers[0].weight);
}

TEST_CASE("train: same seed gives identical logs and parameters") {
  const auto t = make_toy();
  gan::GanTrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 11;
  gan::GanLog la, lb;
  const auto a = gan::train_vfgan(t.x, t.y, t.scaler, t.semantics, cfg, &la);
  const auto b = gan::train_vfgan(t.x, t.y, t.scaler, t.semantics, cfg, &lb);
  REQUIRE(la.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(la[i].critic_loss == lb[i].critic_loss);
    CHECK(la[i].gen_loss == lb[i].gen_loss);
  }
  CHECK(a.generator.layers[1].weight == b.generator.layers[1].weight);
  CHECK(gan::format_gan(a) == gan::format_gan(b));
}

TEST_CASE("train: bad inputs") {
  auto t = make_toy();
  gan::GanTrainConfig cfg;
  cfg.epochs = 1;
  auto y = t.y;
  y[0] = 9;
  CHECK_THROWS_AS(gan::train_vfgan(t.x, y, t.scaler, t.semantics, cfg), ValidationError);
  y.pop_back();
  CHECK_THROWS_AS(gan::train_vfgan(t.x, y, t.scaler, t.semantics, cfg), ShapeError);
  cfg.n_critic = 0;
  CHECK_THROWS_AS(gan::train_vfgan(t.x, t.y, t.scaler, t.semantics, cfg), ConfigError);
}

TEST_CASE("train: two-class toy reproduces the class means") {
  const auto t = make_toy();
  const auto& g = trained_toy_gan();
  auto rng = derive_rng(77, 0);
  Vector gen_mean[2];
  for (int c = 0; c < 2; ++c) {
    gen_mean[c] = gan::generate_features(g, c, t.semantics, 500, rng).rowwise().mean();
    INFO("class " << c << " generated " << gen_mean[c].transpose() << " real "
                  << t.scaled_mean[c].transpose());
    CHECK((gen_mean[c] - t.scaled_mean[c]).cwiseAbs().maxCoeff() <= 0.15);
  }
  const double real_sep = (t.scaled_mean[1] - t.scaled_mean[0]).norm();
  CHECK((gen_mean[1] - gen_mean[0]).norm() > 0.5 * real_sep);
}

TEST_CASE("generate: range, determinism and unknown classes") {
  const auto t = make_toy();
  const auto& g = trained_toy_gan();
  auto a = derive_rng(4, 4), b = derive_rng(4, 4);
  const Matrix x = gan::generate_features(g, 1, t.semantics, 200, a);
  CHECK(x.rows() == 2);
  CHECK(x.cols() == 200);
  CHECK(x.minCoeff() > 0.0);
  CHECK(x.maxCoeff() < 1.0);
  CHECK(x == gan::generate_features(g, 1, t.semantics, 200, b));
  CHECK_THROWS(gan::generate_features(g, 5, t.semantics, 10, a));
  CHECK_THROWS(gan::generate_features(g, 1, t.semantics, 0, a));
}

TEST_CASE("checkpoint round trip") {
  auto rng = derive_rng(10, 0);
  const auto g = gan::init_gan(3, 2, rng, 5);
  const auto back = gan::parse_gan(gan::format_gan(g), "g");
  CHECK(back.dv == 3);
  CHECK(back.dy == 2);
  CHECK(back.seed == g.seed);
  CHECK(back.generator.layers[0].weight == g.generator.layers[0].weight);
  CHECK(back.critic.layers[1].bias == g.critic.layers[1].bias);
  CHECK_NOTHROW(back.validate());
  CHECK_THROWS_AS(gan::parse_gan("#dv=3 #dy=2\n", "g"), ParseError);
}

}  // TEST_SUITE
