#include "fsv/optimizer.hpp"

#include <cmath>

#include "fsv/errors.hpp"

namespace fsv::nk {

std::string_view optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected sgd or adam)");
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (kind == OptimizerKind::kAdam) {
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("adam beta1 must lie in (0,1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("adam beta2 must lie in (0,1)");
    if (!(epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
  }
}

std::vector<ParamBinding> bind(MlpParams& params, const MlpGradients& grads,
                               std::string_view prefix) {
  if (grads.weight.size() != params.layers.size())
    throw ShapeError("bind: gradient layer count mismatch");
  std::vector<ParamBinding> out;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    auto& layer = params.layers[i];
    if (grads.weight[i].rows() != layer.weight.rows() ||
        grads.weight[i].cols() != layer.weight.cols() ||
        grads.bias[i].size() != layer.bias.size())
      throw ShapeError("bind: gradient shape mismatch at layer " + std::to_string(i));
    const std::string base = std::string(prefix) + ".layer" + std::to_string(i);
    out.push_back({base + ".weight", layer.weight.data(), grads.weight[i].data(),
                   layer.weight.size()});
    out.push_back({base + ".bias", layer.bias.data(), grads.bias[i].data(), layer.bias.size()});
  }
  return out;
}

Optimizer::Optimizer(OptimizerConfig config) : config_(config) { config_.validate(); }

void Optimizer::step(std::span<const ParamBinding> bindings) {
  for (const auto& b : bindings) {
    for (Index i = 0; i < b.size; ++i)
      if (!std::isfinite(b.grad[i]))
        throw NonFiniteError("non-finite gradient in parameter '" + b.name + "'");
  }
  if (config_.kind == OptimizerKind::kAdam) {
    if (first_.empty()) {
      for (const auto& b : bindings) {
        first_.push_back(Vector::Zero(b.size));
        second_.push_back(Vector::Zero(b.size));
      }
    }
    if (first_.size() != bindings.size()) throw ShapeError("optimizer: binding count changed");
    for (std::size_t k = 0; k < bindings.size(); ++k)
      if (first_[k].size() != bindings[k].size)
        throw ShapeError("optimizer: shape of '" + bindings[k].name + "' changed");
  }

  ++steps_;
  if (config_.kind == OptimizerKind::kSgd) {
    for (const auto& b : bindings) {
      Eigen::Map<Vector> p(b.param, b.size);
      Eigen::Map<const Vector> g(b.grad, b.size);
      p -= config_.learning_rate * g;
    }
    return;
  }

  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double lr = config_.learning_rate, eps = config_.epsilon;
  for (std::size_t k = 0; k < bindings.size(); ++k) {
    const auto& b = bindings[k];
    Eigen::Map<Vector> p(b.param, b.size);
    Eigen::Map<const Vector> g(b.grad, b.size);
    first_[k] = b1 * first_[k] + (1.0 - b1) * g;
    second_[k] = b2 * second_[k] + (1.0 - b2) * g.cwiseProduct(g);
    p.array() -= lr * (first_[k].array() / c1) / ((second_[k].array() / c2).sqrt() + eps);
  }
}

}  // namespace fsv::nk
