#pragma once

// Dense MLP kernel with hand-written first- and second-order backward passes.
// Samples are stored column-wise: an input batch is a (width x batch) matrix.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "fsv/rng.hpp"

namespace fsv {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

namespace nk {

enum class Activation { kLinear, kLeakyRelu, kSigmoid };

inline constexpr double kLeakySlope = 0.2;

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation = Activation::kLinear;
  double slope = kLeakySlope;  // only read for kLeakyRelu

  Index in_dim() const { return weight.cols(); }
  Index out_dim() const { return weight.rows(); }
};

struct LayerSpec {
  Index out_dim;
  Activation activation;
};

struct MlpParams {
  std::vector<DenseLayer> layers;

  Index input_dim() const;
  Index output_dim() const;
  std::size_t parameter_count() const;
  // Throws ShapeError if adjacent layers do not chain or a slope is not positive.
  void validate() const;
};

// Gaussian init (zero bias) of a layer plan starting at `input_dim`.
MlpParams make_mlp(Index input_dim, const std::vector<LayerSpec>& plan, double init_scale,
                   RngStream& rng);

// pre[l] is layer l's pre-activation, post[l + 1] its output; post[0] is the input.
struct MlpActivations {
  std::vector<Matrix> pre;
  std::vector<Matrix> post;

  const Matrix& input() const { return post.front(); }
  const Matrix& output() const { return post.back(); }
};

MlpActivations mlp_forward(const MlpParams& params, const Matrix& input);

struct MlpGradients {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;

  static MlpGradients zeros_like(const MlpParams& params);
  MlpGradients& operator+=(const MlpGradients& other);
  MlpGradients& operator*=(double factor);
  double max_abs() const;
};

struct MlpBackward {
  MlpGradients params;
  Matrix input;  // d(loss)/d(input), same shape as the forward input
};

// Gradients of sum_{i,b} output_gradient(i,b) * output(i,b).
MlpBackward mlp_backward(const MlpParams& params, const MlpActivations& acts,
                         const Matrix& output_gradient);

struct PenaltyResult {
  Vector per_sample;  // lambda * (||grad_x D|| - 1)^2 for each column
  double mean = 0.0;
  MlpGradients gradients;  // of `mean` w.r.t. the critic parameters
  Vector gradient_norms;   // ||grad_x D|| for each column
};

// Gradient penalty of a scalar critic D([x_hat; condition]) with respect to the
// x_hat rows only. Parameter gradients go through the input-gradient norm
// (double backward). A column whose gradient norm is exactly zero contributes
// `lambda` to the penalty and nothing to the parameter gradients.
PenaltyResult penalty_gradients(const MlpParams& critic, const Matrix& x_hat,
                                const Matrix& condition, double lambda);

// Column-wise numerically stable softmax.
Matrix softmax_columns(const Matrix& logits);
Vector softmax(const Vector& logits);
double log_sum_exp(const Vector& values);

// Vertical concatenation [top; bottom] of two column batches.
Matrix stack_rows(const Matrix& top, const Matrix& bottom);

bool all_finite(const Matrix& m);

}  // namespace nk
}  // namespace fsv
