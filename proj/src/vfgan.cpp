#include "fsv/vfgan.hpp"

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "fsv/errors.hpp"
#include "fsv/text_io.hpp"

namespace fsv::gan {
namespace {

using nk::Activation;

void check_plan(const nk::MlpParams& net, Index in, Activation out_act, Index out,
                const char* name) {
  net.validate();
  if (net.layers.size() != 2 || net.input_dim() != in || net.output_dim() != out ||
      net.layers[0].activation != Activation::kLeakyRelu || net.layers[1].activation != out_act)
    throw ShapeError(std::string(name) + " does not follow the fixed two-layer plan");
}

Matrix normal_matrix(Index rows, Index cols, RngStream& rng) {
  Matrix m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = rng.normal();
  return m;
}

// Hands out training columns for batches: shuffled passes over the pool, or
// class-uniform draws in balanced mode.
class BatchSampler {
 public:
  BatchSampler(const std::vector<int>& labels, bool balanced, RngStream& rng)
      : n_(labels.size()), balanced_(balanced), rng_(rng) {
    if (balanced_) {
      std::map<int, std::vector<std::size_t>> by_class;
      for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
      for (auto& [c, rows] : by_class) groups_.push_back(std::move(rows));
    }
  }

  std::vector<std::size_t> next(std::size_t size) {
    std::vector<std::size_t> out;
    out.reserve(size);
    for (std::size_t i = 0; i < size; ++i) {
      if (balanced_) {
        const auto& g = groups_[static_cast<std::size_t>(rng_.uniform_int(groups_.size()))];
        out.push_back(g[static_cast<std::size_t>(rng_.uniform_int(g.size()))]);
        continue;
      }
      if (pos_ == order_.size()) {
        order_ = permutation(n_, rng_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  std::size_t n_;
  bool balanced_;
  RngStream& rng_;
  std::vector<std::vector<std::size_t>> groups_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

}  // namespace

void GanParams::validate() const {
  if (dv < 1 || dy < 1) throw ShapeError("GAN dimensions must be positive");
  check_plan(generator, dz() + dy, Activation::kSigmoid, dv, "generator");
  check_plan(critic, dv + dy, Activation::kLinear, 1, "critic");
  if (generator.layers[0].out_dim() != critic.layers[0].out_dim())
    throw ShapeError("generator and critic hidden widths differ");
}

GanParams init_gan(Index dv, Index dy, RngStream& rng, Index hidden) {
  if (dv < 1 || dy < 1) throw ShapeError("init_gan: d_v and d_y must be at least 1");
  GanParams gan;
  gan.dv = dv;
  gan.dy = dy;
  gan.seed = rng.master_seed();
  gan.generator = nk::make_mlp(dy + dy, {{hidden, Activation::kLeakyRelu}, {dv, Activation::kSigmoid}},
                               kInitScale, rng);
  gan.critic = nk::make_mlp(dv + dy, {{hidden, Activation::kLeakyRelu}, {1, Activation::kLinear}},
                            kInitScale, rng);
  return gan;
}

LossGrad critic_loss(const nk::MlpParams& critic, const Matrix& real, const Matrix& fake,
                     const Matrix& condition, const Vector& alphas, double lambda) {
  const Index b = real.cols();
  if (b == 0) throw Error("critic_loss: empty batch");
  if (fake.rows() != real.rows() || fake.cols() != b || condition.cols() != b ||
      alphas.size() != b)
    throw ShapeError("critic_loss: real, fake, condition and alpha batches must align");

  // Real and fake go through one forward pass as a 2B batch.
  Matrix x(real.rows() + condition.rows(), 2 * b);
  x.topLeftCorner(real.rows(), b) = real;
  x.topRightCorner(real.rows(), b) = fake;
  x.bottomLeftCorner(condition.rows(), b) = condition;
  x.bottomRightCorner(condition.rows(), b) = condition;
  const auto acts = nk::mlp_forward(critic, x);
  const Matrix& out = acts.output();
  const double mean_real = out.leftCols(b).mean();
  const double mean_fake = out.rightCols(b).mean();

  Matrix og(1, 2 * b);
  og.leftCols(b).setConstant(-1.0 / static_cast<double>(b));
  og.rightCols(b).setConstant(1.0 / static_cast<double>(b));
  LossGrad r;
  r.grads = nk::mlp_backward(critic, acts, og).params;

  const Matrix x_hat = real * alphas.asDiagonal() + fake * (Vector::Ones(b) - alphas).asDiagonal();
  auto pen = nk::penalty_gradients(critic, x_hat, condition, lambda);
  r.grads += pen.gradients;
  r.wasserstein = mean_real - mean_fake;
  r.penalty = pen.mean;
  r.loss = -mean_real + mean_fake + pen.mean;
  return r;
}

LossGrad generator_loss(const nk::MlpParams& generator, const nk::MlpParams& critic,
                        const Matrix& noise, const Matrix& condition) {
  const Index b = noise.cols();
  if (b == 0) throw Error("generator_loss: empty batch");
  if (condition.cols() != b) throw ShapeError("generator_loss: noise and condition batches differ");
  const auto g_acts = nk::mlp_forward(generator, nk::stack_rows(noise, condition));
  const Matrix& fake = g_acts.output();
  const auto d_acts = nk::mlp_forward(critic, nk::stack_rows(fake, condition));
  const Matrix og = Matrix::Constant(1, b, -1.0 / static_cast<double>(b));
  const auto d_back = nk::mlp_backward(critic, d_acts, og);
  LossGrad r;
  r.loss = -d_acts.output().mean();
  r.grads = nk::mlp_backward(generator, g_acts, d_back.input.topRows(fake.rows())).params;
  return r;
}

void GanTrainConfig::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("gan lambda must be >= 0");
  if (n_critic < 1) throw ConfigError("gan n_critic must be >= 1");
  if (epochs < 0) throw ConfigError("gan epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("gan batch size must be positive");
  generator_opt.validate();
  critic_opt.validate();
}

GanParams train_vfgan(const Matrix& features, const std::vector<int>& labels,
                      const data::MinMaxScaler& scaler,
                      const data::SemanticEmbeddingTable& semantics, const GanTrainConfig& config,
                      GanLog* log) {
  config.validate();
  if (features.cols() == 0) throw Error("train_vfgan: empty training set");
  if (static_cast<std::size_t>(features.cols()) != labels.size())
    throw ShapeError("train_vfgan: label count differs from feature count");
  std::vector<std::string> missing;
  for (int c : std::set<int>(labels.begin(), labels.end()))
    if (!semantics.contains(c)) missing.push_back(std::to_string(c));
  if (!missing.empty()) throw ValidationError("training classes without semantic embedding", missing);

  const Matrix scaled = scaler.apply_columns(features);
  const Index dv = scaled.rows();
  const Index dy = semantics.dim();
  auto init_rng = derive_rng(config.seed, stream_key({0x6a11, 1}));
  GanParams gan = init_gan(dv, dy, init_rng);
  gan.seed = config.seed;
  if (log) log->clear();
  if (config.epochs == 0) return gan;

  auto rng = derive_rng(config.seed, stream_key({0x6a11, 2}));
  BatchSampler sampler(labels, config.balanced, rng);
  nk::Optimizer g_opt(config.generator_opt);
  nk::Optimizer d_opt(config.critic_opt);

  const auto bs = static_cast<std::size_t>(config.batch_size);
  const std::size_t n = labels.size();
  const std::size_t per_step = bs * static_cast<std::size_t>(config.n_critic);
  const std::size_t gen_steps = (n + per_step - 1) / per_step;

  auto condition_of = [&](const std::vector<std::size_t>& rows) {
    Matrix c(dy, static_cast<Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) c.col(static_cast<Index>(i)) = semantics.at(labels[rows[i]]);
    return c;
  };

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double critic_sum = 0.0, gen_sum = 0.0;
    std::size_t critic_count = 0;
    for (std::size_t step = 0; step < gen_steps; ++step) {
      for (int k = 0; k < config.n_critic; ++k) {
        const auto rows = sampler.next(bs);
        Matrix real(dv, static_cast<Index>(bs));
        for (std::size_t i = 0; i < bs; ++i) real.col(static_cast<Index>(i)) = scaled.col(static_cast<Index>(rows[i]));
        const Matrix cond = condition_of(rows);
        const Matrix z = normal_matrix(dy, static_cast<Index>(bs), rng);
        const Matrix fake = nk::mlp_forward(gan.generator, nk::stack_rows(z, cond)).output();
        Vector alphas(static_cast<Index>(bs));
        for (Index i = 0; i < alphas.size(); ++i) alphas(i) = rng.uniform();
        auto lg = critic_loss(gan.critic, real, fake, cond, alphas, config.lambda);
        if (!std::isfinite(lg.loss))
          throw NonFiniteError("non-finite critic loss at epoch " + std::to_string(epoch) +
                               ", batch " + std::to_string(step * config.n_critic + k));
        d_opt.step(nk::bind(gan.critic, lg.grads, "critic"));
        critic_sum += lg.loss;
        ++critic_count;
      }
      const auto rows = sampler.next(bs);
      const Matrix cond = condition_of(rows);
      const Matrix z = normal_matrix(dy, static_cast<Index>(bs), rng);
      auto lg = generator_loss(gan.generator, gan.critic, z, cond);
      if (!std::isfinite(lg.loss))
        throw NonFiniteError("non-finite generator loss at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(step));
      g_opt.step(nk::bind(gan.generator, lg.grads, "generator"));
      gen_sum += lg.loss;
    }
    if (log)
      log->push_back({epoch, critic_sum / static_cast<double>(critic_count),
                      gen_sum / static_cast<double>(gen_steps)});
  }
  return gan;
}

Matrix generate_features(const GanParams& gan, int class_id,
                         const data::SemanticEmbeddingTable& semantics, std::size_t count,
                         RngStream& rng) {
  if (count == 0) throw Error("generate_features: count must be at least 1");
  if (!semantics.contains(class_id))
    throw Error("generate_features: class " + std::to_string(class_id) + " has no semantic embedding");
  const Vector& y = semantics.at(class_id);
  if (y.size() != gan.dy) throw ShapeError("generate_features: embedding width differs from the GAN's");
  const auto n = static_cast<Index>(count);
  const Matrix z = normal_matrix(gan.dz(), n, rng);
  const Matrix cond = y.replicate(1, n);
  return nk::mlp_forward(gan.generator, nk::stack_rows(z, cond)).output();
}

namespace {

void append_net(std::string& out, const char* name, const nk::MlpParams& net) {
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const auto& l = net.layers[k];
    out += "#net=" + std::string(name) + " #layer=" + std::to_string(k) +
           " #out=" + std::to_string(l.out_dim()) + " #in=" + std::to_string(l.in_dim()) +
           " #act=" + std::string(nk::activation_name(l.activation)) + "\n";
    for (Index r = 0; r < l.out_dim(); ++r) {
      for (Index c = 0; c < l.in_dim(); ++c) {
        out += io::format_double(l.weight(r, c));
        out += '\t';
      }
      out += io::format_double(l.bias(r));
      out += '\n';
    }
  }
}

std::string header_field(std::string_view token, std::string_view key, const std::string& source,
                         std::size_t line) {
  const std::string prefix = "#" + std::string(key) + "=";
  if (token.substr(0, prefix.size()) != prefix)
    throw ParseError(source, line, "expected '" + prefix + "...'");
  return std::string(token.substr(prefix.size()));
}

}  // namespace

std::string format_gan(const GanParams& gan) {
  std::string out = "#dv=" + std::to_string(gan.dv) + " #dy=" + std::to_string(gan.dy) +
                    " #seed=" + std::to_string(gan.seed) + "\n";
  append_net(out, "G", gan.generator);
  append_net(out, "D", gan.critic);
  return out;
}

GanParams parse_gan(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++n;
    return true;
  };
  if (!next_line()) throw ParseError(source, 1, "missing header");
  const auto head = io::split(io::trim(line), ' ');
  if (head.size() != 3) throw ParseError(source, 1, "expected '#dv= #dy= #seed='");
  GanParams gan;
  gan.dv = static_cast<Index>(io::parse_header_value(head[0], "dv", source, 1));
  gan.dy = static_cast<Index>(io::parse_header_value(head[1], "dy", source, 1));
  gan.seed = static_cast<std::uint64_t>(
      std::stoull(header_field(head[2], "seed", source, 1)));

  while (next_line()) {
    if (io::trim(line).empty()) continue;
    const auto f = io::split(io::trim(line), ' ');
    if (f.size() != 5) throw ParseError(source, n, "expected a layer header");
    const std::string net = header_field(f[0], "net", source, n);
    const auto out_dim = io::parse_header_value(f[2], "out", source, n);
    const auto in_dim = io::parse_header_value(f[3], "in", source, n);
    nk::DenseLayer layer;
    try {
      layer.activation = nk::parse_activation(header_field(f[4], "act", source, n));
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(source, n, e.what());
    }
    layer.weight.resize(out_dim, in_dim);
    layer.bias.resize(out_dim);
    for (Index r = 0; r < out_dim; ++r) {
      if (!next_line()) throw ParseError(source, n + 1, "truncated weight block");
      const auto cols = io::split(line, '\t');
      if (cols.size() != static_cast<std::size_t>(in_dim) + 1)
        throw ParseError(source, n, "expected " + std::to_string(in_dim + 1) + " columns, got " +
                                        std::to_string(cols.size()));
      for (Index c = 0; c < in_dim; ++c)
        layer.weight(r, c) = io::parse_double(cols[static_cast<std::size_t>(c)], source, n);
      layer.bias(r) = io::parse_double(cols.back(), source, n);
    }
    if (net == "G")
      gan.generator.layers.push_back(std::move(layer));
    else if (net == "D")
      gan.critic.layers.push_back(std::move(layer));
    else
      throw ParseError(source, n, "unknown network '" + net + "'");
  }
  gan.validate();
  return gan;
}

std::string format_gan_log(const GanLog& log) {
  std::string out = "epoch,critic_loss,gen_loss\n";
  for (const auto& r : log)
    out += std::to_string(r.epoch) + "," + io::format_double(r.critic_loss) + "," +
           io::format_double(r.gen_loss) + "\n";
  return out;
}

}  // namespace fsv::gan
