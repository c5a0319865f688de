#include "fsv/numkernel.hpp"

#include <cmath>

#include "fsv/errors.hpp"

namespace fsv::nk {
namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Matrix activate(const DenseLayer& layer, const Matrix& pre) {
  switch (layer.activation) {
    case Activation::kLinear:
      return pre;
    case Activation::kLeakyRelu: {
      const double slope = layer.slope;
      return pre.unaryExpr([slope](double z) { return z > 0.0 ? z : slope * z; });
    }
    case Activation::kSigmoid:
      return pre.unaryExpr([](double z) { return sigmoid(z); });
  }
  return pre;
}

// Elementwise derivative of the activation at `pre`; `post` is activate(pre).
Matrix first_derivative(const DenseLayer& layer, const Matrix& pre, const Matrix& post) {
  switch (layer.activation) {
    case Activation::kLinear:
      return Matrix::Ones(pre.rows(), pre.cols());
    case Activation::kLeakyRelu: {
      const double slope = layer.slope;
      return pre.unaryExpr([slope](double z) { return z > 0.0 ? 1.0 : slope; });
    }
    case Activation::kSigmoid:
      return post.unaryExpr([](double s) { return s * (1.0 - s); });
  }
  return Matrix::Ones(pre.rows(), pre.cols());
}

// Second derivative; zero for the piecewise-linear activations.
Matrix second_derivative(const DenseLayer& layer, const Matrix& post) {
  if (layer.activation == Activation::kSigmoid)
    return post.unaryExpr([](double s) { return s * (1.0 - s) * (1.0 - 2.0 * s); });
  return Matrix::Zero(post.rows(), post.cols());
}

}  // namespace

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::kLinear:
      return "linear";
    case Activation::kLeakyRelu:
      return "leaky_relu";
    case Activation::kSigmoid:
      return "sigmoid";
  }
  return "linear";
}

Activation parse_activation(std::string_view name) {
  if (name == "linear") return Activation::kLinear;
  if (name == "leaky_relu") return Activation::kLeakyRelu;
  if (name == "sigmoid") return Activation::kSigmoid;
  throw Error("unknown activation '" + std::string(name) + "'");
}

Index MlpParams::input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }

Index MlpParams::output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

void MlpParams::validate() const {
  if (layers.empty()) throw ShapeError("MLP has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.bias.size() != l.out_dim())
      throw ShapeError("layer " + std::to_string(i) + ": bias length " +
                       std::to_string(l.bias.size()) + " != out dim " +
                       std::to_string(l.out_dim()));
    if (i > 0 && layers[i - 1].out_dim() != l.in_dim())
      throw ShapeError("layer " + std::to_string(i) + ": in dim " + std::to_string(l.in_dim()) +
                       " does not chain with previous out dim " +
                       std::to_string(layers[i - 1].out_dim()));
    if (l.activation == Activation::kLeakyRelu && !(l.slope > 0.0))
      throw ShapeError("layer " + std::to_string(i) + ": leaky_relu slope must be positive");
  }
}

MlpParams make_mlp(Index input_dim, const std::vector<LayerSpec>& plan, double init_scale,
                   RngStream& rng) {
  MlpParams params;
  Index in = input_dim;
  for (const auto& spec : plan) {
    DenseLayer layer;
    layer.weight.resize(spec.out_dim, in);
    // Row-major fill so the draw order does not depend on Eigen's storage order.
    for (Index r = 0; r < spec.out_dim; ++r)
      for (Index c = 0; c < in; ++c) layer.weight(r, c) = init_scale * rng.normal();
    layer.bias = Vector::Zero(spec.out_dim);
    layer.activation = spec.activation;
    params.layers.push_back(std::move(layer));
    in = spec.out_dim;
  }
  params.validate();
  return params;
}

MlpActivations mlp_forward(const MlpParams& params, const Matrix& input) {
  if (input.rows() != params.input_dim())
    throw ShapeError("mlp_forward: input width " + std::to_string(input.rows()) +
                     " != expected " + std::to_string(params.input_dim()));
  MlpActivations acts;
  acts.pre.reserve(params.layers.size());
  acts.post.reserve(params.layers.size() + 1);
  acts.post.push_back(input);
  for (const auto& layer : params.layers) {
    Matrix pre = layer.weight * acts.post.back();
    pre.colwise() += layer.bias;
    acts.post.push_back(activate(layer, pre));
    acts.pre.push_back(std::move(pre));
  }
  return acts;
}

MlpGradients MlpGradients::zeros_like(const MlpParams& params) {
  MlpGradients g;
  for (const auto& l : params.layers) {
    g.weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    g.bias.push_back(Vector::Zero(l.bias.size()));
  }
  return g;
}

MlpGradients& MlpGradients::operator+=(const MlpGradients& other) {
  if (other.weight.size() != weight.size()) throw ShapeError("gradient layer count mismatch");
  for (std::size_t i = 0; i < weight.size(); ++i) {
    weight[i] += other.weight[i];
    bias[i] += other.bias[i];
  }
  return *this;
}

MlpGradients& MlpGradients::operator*=(double factor) {
  for (std::size_t i = 0; i < weight.size(); ++i) {
    weight[i] *= factor;
    bias[i] *= factor;
  }
  return *this;
}

double MlpGradients::max_abs() const {
  double m = 0.0;
  for (std::size_t i = 0; i < weight.size(); ++i) {
    if (weight[i].size()) m = std::max(m, weight[i].cwiseAbs().maxCoeff());
    if (bias[i].size()) m = std::max(m, bias[i].cwiseAbs().maxCoeff());
  }
  return m;
}

MlpBackward mlp_backward(const MlpParams& params, const MlpActivations& acts,
                         const Matrix& output_gradient) {
  const std::size_t depth = params.layers.size();
  if (acts.pre.size() != depth || acts.post.size() != depth + 1)
    throw ShapeError("mlp_backward: activations do not match the parameters");
  if (output_gradient.rows() != params.output_dim() ||
      output_gradient.cols() != acts.output().cols())
    throw ShapeError("mlp_backward: output gradient is " + std::to_string(output_gradient.rows()) +
                     "x" + std::to_string(output_gradient.cols()) + ", expected " +
                     std::to_string(params.output_dim()) + "x" +
                     std::to_string(acts.output().cols()));

  MlpBackward out;
  out.params.weight.resize(depth);
  out.params.bias.resize(depth);
  Matrix grad_post = output_gradient;
  for (std::size_t k = depth; k-- > 0;) {
    const auto& layer = params.layers[k];
    const Matrix delta =
        grad_post.cwiseProduct(first_derivative(layer, acts.pre[k], acts.post[k + 1]));
    out.params.weight[k].noalias() = delta * acts.post[k].transpose();
    out.params.bias[k] = delta.rowwise().sum();
    grad_post.noalias() = layer.weight.transpose() * delta;
  }
  out.input = std::move(grad_post);
  return out;
}

PenaltyResult penalty_gradients(const MlpParams& critic, const Matrix& x_hat,
                                const Matrix& condition, double lambda) {
  if (critic.output_dim() != 1) throw ShapeError("penalty_gradients: critic must output a scalar");
  if (x_hat.cols() != condition.cols())
    throw ShapeError("penalty_gradients: x_hat and condition batch sizes differ");
  if (lambda < 0.0) throw Error("penalty_gradients: lambda must be non-negative");
  const Index feature_rows = x_hat.rows();
  const Index batch = x_hat.cols();
  const std::size_t depth = critic.layers.size();

  const MlpActivations acts = mlp_forward(critic, stack_rows(x_hat, condition));

  // Input-gradient pass: g[k] = d out / d post[k], d[k] = d out / d pre[k].
  std::vector<Matrix> slope(depth);
  std::vector<Matrix> delta(depth);
  std::vector<Matrix> g(depth + 1);
  g[depth] = Matrix::Ones(1, batch);
  for (std::size_t k = depth; k-- > 0;) {
    slope[k] = first_derivative(critic.layers[k], acts.pre[k], acts.post[k + 1]);
    delta[k] = g[k + 1].cwiseProduct(slope[k]);
    g[k].noalias() = critic.layers[k].weight.transpose() * delta[k];
  }

  PenaltyResult result;
  result.gradient_norms = g[0].topRows(feature_rows).colwise().norm().transpose();
  result.per_sample.resize(batch);
  Matrix g_bar = Matrix::Zero(g[0].rows(), batch);
  for (Index b = 0; b < batch; ++b) {
    const double norm = result.gradient_norms(b);
    result.per_sample(b) = lambda * (norm - 1.0) * (norm - 1.0);
    if (norm > 0.0) {
      const double coeff = 2.0 * lambda * (norm - 1.0) / (norm * static_cast<double>(batch));
      g_bar.col(b).head(feature_rows) = coeff * g[0].col(b).head(feature_rows);
    }
  }
  result.mean = batch > 0 ? result.per_sample.mean() : 0.0;
  result.gradients = MlpGradients::zeros_like(critic);

  // Reverse of the input-gradient pass (layers in forward order). Collects the
  // weight terms from g[k] = W^T d[k] and the pre-activation adjoints that
  // arise because d[k] depends on pre[k] through the activation slope.
  std::vector<Matrix> pre_bar(depth);
  for (std::size_t k = 0; k < depth; ++k) {
    const auto& layer = critic.layers[k];
    result.gradients.weight[k].noalias() += delta[k] * g_bar.transpose();
    const Matrix delta_bar = layer.weight * g_bar;
    pre_bar[k] = delta_bar.cwiseProduct(g[k + 1])
                     .cwiseProduct(second_derivative(layer, acts.post[k + 1]));
    if (k + 1 < depth) g_bar = delta_bar.cwiseProduct(slope[k]);
  }

  // Reverse of the forward pass with the adjoints injected at every layer.
  Matrix post_bar;
  for (std::size_t k = depth; k-- > 0;) {
    Matrix z_bar = std::move(pre_bar[k]);
    if (k + 1 < depth) z_bar += post_bar.cwiseProduct(slope[k]);
    result.gradients.weight[k].noalias() += z_bar * acts.post[k].transpose();
    result.gradients.bias[k] += z_bar.rowwise().sum();
    if (k > 0) post_bar.noalias() = critic.layers[k].weight.transpose() * z_bar;
  }
  return result;
}

Matrix softmax_columns(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Index c = 0; c < logits.cols(); ++c) {
    const double m = logits.col(c).maxCoeff();
    out.col(c) = (logits.col(c).array() - m).exp().matrix();
    out.col(c) /= out.col(c).sum();
  }
  return out;
}

Vector softmax(const Vector& logits) { return softmax_columns(logits); }

double log_sum_exp(const Vector& values) {
  if (values.size() == 0) return -INFINITY;
  const double m = values.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((values.array() - m).exp().sum());
}

Matrix stack_rows(const Matrix& top, const Matrix& bottom) {
  if (top.cols() != bottom.cols()) throw ShapeError("stack_rows: column counts differ");
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace fsv::nk
