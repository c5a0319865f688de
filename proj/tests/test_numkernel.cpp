#include <cmath>
#include <set>

#include "doctest.h"
#include "oracles.hpp"

#include "fsv/errors.hpp"
#include "fsv/numkernel.hpp"
#include "fsv/optimizer.hpp"
#include "fsv/rng.hpp"

using namespace fsv;
using nk::Activation;

namespace {

nk::MlpParams single_layer(const Matrix& w, const Vector& b, Activation act) {
  nk::MlpParams p;
  p.layers.push_back({w, b, act, nk::kLeakySlope});
  return p;
}

Activation random_activation(RngStream& rng) {
  switch (rng.uniform_int(3)) {
    case 0: return Activation::kLinear;
    case 1: return Activation::kLeakyRelu;
    default: return Activation::kSigmoid;
  }
}

// Weighted-sum loss used for gradient checks: sum(G .* output).
double weighted_output(const nk::MlpParams& p, const Matrix& x, const Matrix& g) {
  return nk::mlp_forward(p, x).output().cwiseProduct(g).sum();
}

}  // namespace

TEST_SUITE("numkernel") {

TEST_CASE("forward: identity, sigmoid and leaky examples") {
  auto id = single_layer(Matrix::Identity(2, 2), Vector::Zero(2), Activation::kLinear);
  Matrix x(2, 1);
  x << 3.0, -1.0;
  const auto out = nk::mlp_forward(id, x).output();
  CHECK(out(0, 0) == 3.0);
  CHECK(out(1, 0) == -1.0);

  auto sig = single_layer(Matrix::Zero(1, 1), Vector::Zero(1), Activation::kSigmoid);
  CHECK(nk::mlp_forward(sig, Matrix::Ones(1, 1)).output()(0, 0) == 0.5);

  auto leaky = single_layer(Matrix::Identity(1, 1), Vector::Zero(1), Activation::kLeakyRelu);
  CHECK(nk::mlp_forward(leaky, Matrix::Constant(1, 1, -1.0)).output()(0, 0) ==
        doctest::Approx(-0.2).epsilon(1e-15));
}

TEST_CASE("forward: width mismatch is a shape error") {
  RngStream rng(1, 1);
  auto p = nk::make_mlp(3, {{2, Activation::kLinear}}, 0.1, rng);
  CHECK_THROWS_AS(nk::mlp_forward(p, Matrix::Zero(4, 1)), ShapeError);
}

TEST_CASE("params: layers must chain and slopes must be positive") {
  RngStream rng(1, 2);
  auto p = nk::make_mlp(3, {{4, Activation::kLeakyRelu}, {2, Activation::kLinear}}, 0.1, rng);
  CHECK_NOTHROW(p.validate());
  CHECK(p.input_dim() == 3);
  CHECK(p.output_dim() == 2);
  CHECK(p.parameter_count() == 3 * 4 + 4 + 4 * 2 + 2);
  auto broken = p;
  broken.layers[1].weight = Matrix::Zero(2, 5);
  CHECK_THROWS_AS(broken.validate(), ShapeError);
  auto bad_slope = p;
  bad_slope.layers[0].slope = 0.0;
  CHECK_THROWS_AS(bad_slope.validate(), ShapeError);
}

TEST_CASE("backward: linear layer with sum loss") {
  RngStream rng(2, 1);
  auto p = single_layer(oracle::random_matrix(3, 2, rng), Vector::Zero(3), Activation::kLinear);
  Matrix x(2, 1);
  x << 0.7, -1.3;
  const auto acts = nk::mlp_forward(p, x);
  const auto back = nk::mlp_backward(p, acts, Matrix::Ones(3, 1));
  for (Index i = 0; i < 3; ++i) {
    CHECK(back.params.weight[0](i, 0) == 0.7);
    CHECK(back.params.weight[0](i, 1) == -1.3);
    CHECK(back.params.bias[0](i) == 1.0);
  }
}

TEST_CASE("backward: zero output gradient gives zero gradients") {
  RngStream rng(2, 2);
  auto p = oracle::random_mlp(4, {{5, Activation::kLeakyRelu}, {3, Activation::kSigmoid}}, rng);
  const Matrix x = oracle::random_matrix(4, 6, rng);
  const auto back = nk::mlp_backward(p, nk::mlp_forward(p, x), Matrix::Zero(3, 6));
  CHECK(back.params.max_abs() == 0.0);
  CHECK(back.input.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward: output gradient of the wrong shape is rejected") {
  RngStream rng(2, 3);
  auto p = oracle::random_mlp(2, {{3, Activation::kLinear}}, rng);
  const auto acts = nk::mlp_forward(p, Matrix::Ones(2, 4));
  CHECK_THROWS_AS(nk::mlp_backward(p, acts, Matrix::Ones(3, 5)), ShapeError);
}

TEST_CASE("backward matches central differences on a random 2-layer net") {
  RngStream rng(3, 1);
  auto p = oracle::random_mlp(5, {{8, Activation::kLeakyRelu}, {4, Activation::kSigmoid}}, rng);
  Matrix x = oracle::random_matrix(5, 3, rng);
  const Matrix g = oracle::random_matrix(4, 3, rng);
  REQUIRE_FALSE(oracle::near_kink(p, x));
  const auto back = nk::mlp_backward(p, nk::mlp_forward(p, x), g);
  CHECK(oracle::max_param_error(p, back.params, [&] { return weighted_output(p, x, g); }) < 1e-4);
  const auto gx = oracle::central_diff(x.data(), x.size(), [&] { return weighted_output(p, x, g); });
  for (Index i = 0; i < x.size(); ++i)
    CHECK(oracle::rel_err(back.input.data()[i], gx[static_cast<std::size_t>(i)]) < 1e-4);
}

TEST_CASE("gradient property: 100 random MLPs, backward and penalty against finite differences") {
  RngStream rng(4, 1);
  int checked = 0;
  double worst_backward = 0.0, worst_penalty = 0.0;
  while (checked < 100) {
    const auto depth = static_cast<int>(1 + rng.uniform_int(3));
    const Index in = static_cast<Index>(1 + rng.uniform_int(8));
    std::vector<nk::LayerSpec> plan;
    for (int l = 0; l < depth; ++l)
      plan.push_back({static_cast<Index>(1 + rng.uniform_int(8)), random_activation(rng)});
    auto p = oracle::random_mlp(in, plan, rng);
    Matrix x = oracle::random_matrix(in, 3, rng);
    if (oracle::near_kink(p, x)) continue;
    const Matrix g = oracle::random_matrix(p.output_dim(), 3, rng);
    const auto back = nk::mlp_backward(p, nk::mlp_forward(p, x), g);
    const auto loss = [&] { return weighted_output(p, x, g); };
    worst_backward = std::max(worst_backward, oracle::max_param_error(p, back.params, loss));
    const auto gx = oracle::central_diff(x.data(), x.size(), loss);
    for (Index i = 0; i < x.size(); ++i)
      worst_backward =
          std::max(worst_backward, oracle::rel_err(back.input.data()[i], gx[static_cast<std::size_t>(i)]));

    // Scalar critic over [x_hat; condition] built from the same plan.
    auto crit_plan = plan;
    crit_plan.back() = {1, random_activation(rng)};
    const Index feat = static_cast<Index>(1 + rng.uniform_int(5));
    const Index cond = static_cast<Index>(rng.uniform_int(4));
    auto critic = oracle::random_mlp(feat + cond, crit_plan, rng);
    const Matrix xh = oracle::random_matrix(feat, 3, rng);
    const Matrix c = oracle::random_matrix(cond, 3, rng);
    if (oracle::near_kink(critic, nk::stack_rows(xh, c))) continue;
    const double lambda = 10.0;
    const auto pen = nk::penalty_gradients(critic, xh, c, lambda);
    worst_penalty = std::max(
        worst_penalty, oracle::max_param_error(critic, pen.gradients, [&] {
          return nk::penalty_gradients(critic, xh, c, lambda).mean;
        }));
    ++checked;
  }
  INFO("worst backward " << worst_backward << ", worst penalty " << worst_penalty);
  CHECK(worst_backward < 1e-4);
  CHECK(worst_penalty < 1e-4);
}

TEST_CASE("penalty: linear critic with input-weight norms 0.5, 1 and 2") {
  for (const auto& [norm, expected] : {std::pair{0.5, 2.5}, {1.0, 0.0}, {2.0, 10.0}}) {
    Matrix w(1, 5);
    w << 0.6 * norm, 0.8 * norm, 3.0, -1.0, 0.25;  // last three read the condition
    auto d = single_layer(w, Vector::Constant(1, 0.4), Activation::kLinear);
    RngStream rng(5, static_cast<std::uint64_t>(norm * 10));
    const auto pen = nk::penalty_gradients(d, oracle::random_matrix(2, 4, rng),
                                           oracle::random_matrix(3, 4, rng), 10.0);
    CHECK(std::abs(pen.mean - expected) < 1e-10);
    for (Index b = 0; b < 4; ++b) CHECK(std::abs(pen.per_sample(b) - expected) < 1e-10);
  }
}

TEST_CASE("penalty: zero input gradient contributes lambda and no parameter gradient") {
  auto d = single_layer(Matrix::Zero(1, 3), Vector::Zero(1), Activation::kLinear);
  const auto pen = nk::penalty_gradients(d, Matrix::Ones(2, 2), Matrix::Ones(1, 2), 7.0);
  CHECK(pen.mean == 7.0);
  CHECK(pen.gradients.max_abs() == 0.0);
}

TEST_CASE("penalty: non-negative and rejects vector critics") {
  RngStream rng(5, 9);
  auto d = oracle::random_mlp(4, {{6, Activation::kLeakyRelu}, {1, Activation::kLinear}}, rng);
  const auto pen = nk::penalty_gradients(d, oracle::random_matrix(3, 8, rng),
                                         oracle::random_matrix(1, 8, rng), 10.0);
  CHECK(pen.per_sample.minCoeff() >= 0.0);
  auto wide = oracle::random_mlp(4, {{2, Activation::kLinear}}, rng);
  CHECK_THROWS_AS(nk::penalty_gradients(wide, Matrix::Ones(3, 1), Matrix::Ones(1, 1), 1.0),
                  ShapeError);
}

TEST_CASE("softmax: positive, normalized and shift invariant") {
  RngStream rng(6, 1);
  for (int t = 0; t < 50; ++t) {
    const Vector z = oracle::random_matrix(7, 1, rng, 20.0).col(0);
    const Vector p = nk::softmax(z);
    CHECK(p.minCoeff() > 0.0);
    CHECK(std::abs(p.sum() - 1.0) < 1e-9);
    const Vector shifted = nk::softmax((z.array() + 123.0).matrix());
    CHECK((p - shifted).cwiseAbs().maxCoeff() < 1e-9);
  }
  Vector big(2);
  big << 1000.0, 0.0;
  CHECK(std::isfinite(nk::log_sum_exp(big)));
  CHECK(nk::softmax(big)(0) == doctest::Approx(1.0));
}

TEST_CASE("optimizer: sgd examples") {
  Vector p = Vector::Constant(1, 1.0), g = Vector::Constant(1, 0.5);
  nk::Optimizer sgd({nk::OptimizerKind::kSgd, 0.1, 0.9, 0.999, 1e-8});
  const std::vector<nk::ParamBinding> b{{"p", p.data(), g.data(), 1}};
  sgd.step(b);
  CHECK(p(0) == doctest::Approx(0.95).epsilon(1e-15));
  g(0) = 0.0;
  sgd.step(b);
  CHECK(p(0) == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(sgd.steps() == 2);
}

TEST_CASE("optimizer: first adam step moves by lr regardless of gradient scale") {
  for (double scale : {1e-3, 1.0, 1e3}) {
    Vector p = Vector::Constant(3, 2.0);
    Vector g(3);
    g << scale, -scale, 2 * scale;
    nk::Optimizer adam({nk::OptimizerKind::kAdam, 0.001, 0.9, 0.999, 1e-8});
    const std::vector<nk::ParamBinding> b{{"p", p.data(), g.data(), 3}};
    adam.step(b);
    for (Index i = 0; i < 3; ++i) CHECK(std::abs(std::abs(p(i) - 2.0) - 0.001) < 1e-8);
  }
}

TEST_CASE("optimizer: non-finite gradient names the parameter") {
  Vector p = Vector::Zero(2), g(2);
  g << 1.0, std::nan("");
  nk::Optimizer sgd({nk::OptimizerKind::kSgd, 0.1, 0.9, 0.999, 1e-8});
  try {
    const std::vector<nk::ParamBinding> b{{"critic.layer0.weight", p.data(), g.data(), 2}};
    sgd.step(b);
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(std::string(e.what()).find("critic.layer0.weight") != std::string::npos);
  }
  CHECK(p(0) == 0.0);
}

TEST_CASE("optimizer: invalid hyperparameters are config errors") {
  CHECK_THROWS_AS(nk::Optimizer({nk::OptimizerKind::kSgd, 0.0, 0.9, 0.999, 1e-8}), ConfigError);
  CHECK_THROWS_AS(nk::Optimizer({nk::OptimizerKind::kAdam, 0.1, 1.0, 0.999, 1e-8}), ConfigError);
  CHECK(nk::parse_optimizer("adam") == nk::OptimizerKind::kAdam);
  CHECK_THROWS_AS(nk::parse_optimizer("rmsprop"), ConfigError);
}

TEST_CASE("rng: same seed and stream repeat, different streams differ") {
  auto a = derive_rng(42, 1), b = derive_rng(42, 1), c = derive_rng(42, 2);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs = differs || x != c.next_u64();
  }
  CHECK(differs);
}

TEST_CASE("rng: normal draws have mean 0 and variance 1") {
  auto rng = derive_rng(7, 3);
  const int n = 1000000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(sq / n - mean * mean - 1.0) < 0.01);
}

TEST_CASE("rng: integer and uniform ranges") {
  auto rng = derive_rng(9, 9);
  std::vector<int> counts(6, 0);
  for (int i = 0; i < 60000; ++i) {
    const auto k = rng.uniform_int(6);
    REQUIRE(k < 6);
    ++counts[k];
    const double u = rng.uniform();
    REQUIRE((u >= 0.0 && u < 1.0));
    const double v = rng.uniform_open();
    REQUIRE((v > 0.0 && v < 1.0));
  }
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("rng: sampling helpers") {
  auto rng = derive_rng(11, 0);
  const auto s = sample_without_replacement(10, 10, rng);
  CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == 10);
  const auto perm = permutation(50, rng);
  CHECK(std::set<std::size_t>(perm.begin(), perm.end()).size() == 50);
  CHECK(stream_key({1, 2}) != stream_key({2, 1}));
  CHECK(stream_key({1, 2}) == stream_key({1, 2}));
}

TEST_CASE("determinism: a short training loop is bit-identical across runs") {
  auto run = [] {
    auto rng = derive_rng(21, 1);
    auto p = nk::make_mlp(3, {{6, Activation::kLeakyRelu}, {1, Activation::kLinear}}, 0.2, rng);
    nk::Optimizer opt({nk::OptimizerKind::kAdam, 0.01, 0.5, 0.9, 1e-8});
    for (int step = 0; step < 20; ++step) {
      const Matrix x = oracle::random_matrix(3, 4, rng);
      auto back = nk::mlp_backward(p, nk::mlp_forward(p, x), Matrix::Ones(1, 4));
      opt.step(nk::bind(p, back.params, "net"));
    }
    return p;
  };
  const auto a = run(), b = run();
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    CHECK(a.layers[l].weight == b.layers[l].weight);
    CHECK(a.layers[l].bias == b.layers[l].bias);
  }
}

}  // TEST_SUITE
