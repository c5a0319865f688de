#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fsv/numkernel.hpp"

namespace fsv::nk {

enum class OptimizerKind { kSgd, kAdam };

std::string_view optimizer_name(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgd;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

// A flat view of one parameter tensor and its gradient.
struct ParamBinding {
  std::string name;
  double* param;
  const double* grad;
  Index size;
};

std::vector<ParamBinding> bind(MlpParams& params, const MlpGradients& grads,
                               std::string_view prefix);

// SGD or bias-corrected Adam. The moment buffers are sized on the first step
// and the binding layout must stay the same afterwards.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);

  // Throws NonFiniteError naming the parameter if any gradient entry is not
  // finite; parameters are left untouched in that case.
  void step(std::span<const ParamBinding> bindings);

  const OptimizerConfig& config() const { return config_; }
  std::uint64_t steps() const { return steps_; }
  const std::vector<Vector>& first_moments() const { return first_; }
  const std::vector<Vector>& second_moments() const { return second_; }

 private:
  OptimizerConfig config_;
  std::uint64_t steps_ = 0;
  std::vector<Vector> first_;
  std::vector<Vector> second_;
};

}  // namespace fsv::nk
