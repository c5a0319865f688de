#pragma once

// Conditional WGAN-GP over clip features. The generator maps
// [noise; semantic embedding] to a feature in (0,1)^d_v; the critic scores
// [feature; semantic embedding].

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fsv/datastore.hpp"
#include "fsv/numkernel.hpp"
#include "fsv/optimizer.hpp"
#include "fsv/rng.hpp"
#include "fsv/scaler.hpp"

namespace fsv::gan {

inline constexpr Index kHiddenUnits = 4096;
inline constexpr double kInitScale = 0.02;

struct GanParams {
  nk::MlpParams generator;
  nk::MlpParams critic;
  Index dv = 0;
  Index dy = 0;
  std::uint64_t seed = 0;

  Index dz() const { return dy; }
  // Throws ShapeError unless both networks follow the fixed layer plan.
  void validate() const;
};

// `hidden` is exposed only so miniature instances can be gradient-checked.
GanParams init_gan(Index dv, Index dy, RngStream& rng, Index hidden = kHiddenUnits);

struct LossGrad {
  double loss = 0.0;
  double wasserstein = 0.0;  // mean D(real) - mean D(fake) (critic only)
  double penalty = 0.0;      // mean gradient penalty (critic only)
  nk::MlpGradients grads;
};

// -mean D(real) + mean D(fake) + mean penalty at alpha*real + (1-alpha)*fake.
// `condition` holds the class embedding of each column of both batches.
LossGrad critic_loss(const nk::MlpParams& critic, const Matrix& real, const Matrix& fake,
                     const Matrix& condition, const Vector& alphas, double lambda);

// -mean D(G(z, c), c); gradients are for the generator only.
LossGrad generator_loss(const nk::MlpParams& generator, const nk::MlpParams& critic,
                        const Matrix& noise, const Matrix& condition);

struct GanTrainConfig {
  double lambda = 10.0;
  int n_critic = 5;
  int epochs = 2;
  int batch_size = 64;
  // Per-class-balanced batches instead of uniform draws over the pooled set.
  bool balanced = false;
  nk::OptimizerConfig generator_opt{nk::OptimizerKind::kAdam, 1e-4, 0.5, 0.9, 1e-8};
  nk::OptimizerConfig critic_opt{nk::OptimizerKind::kAdam, 1e-4, 0.5, 0.9, 1e-8};
  std::uint64_t seed = 0;

  void validate() const;
};

struct GanLogRow {
  int epoch = 0;
  double critic_loss = 0.0;
  double gen_loss = 0.0;
};
using GanLog = std::vector<GanLogRow>;

// One epoch runs ceil(n / (batch_size * n_critic)) generator steps, each after
// n_critic critic steps on fresh batches. `features` are raw (unscaled) clips,
// one per column, labeled by `labels`; they are rescaled with `scaler` here.
GanParams train_vfgan(const Matrix& features, const std::vector<int>& labels,
                      const data::MinMaxScaler& scaler,
                      const data::SemanticEmbeddingTable& semantics, const GanTrainConfig& config,
                      GanLog* log = nullptr);

// d_v x count generated features (scaled space), columns G(z_i, phi(class)).
Matrix generate_features(const GanParams& gan, int class_id,
                         const data::SemanticEmbeddingTable& semantics, std::size_t count,
                         RngStream& rng);

std::string format_gan(const GanParams& gan);
GanParams parse_gan(const std::string& text, const std::string& source);
std::string format_gan_log(const GanLog& log);

}  // namespace fsv::gan
