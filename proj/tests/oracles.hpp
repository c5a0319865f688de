#pragma once

// Reference implementations the tests compare against: central finite
// differences, exhaustive retrieval scans, and small hand-built datasets.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fsv/datastore.hpp"
#include "fsv/numkernel.hpp"
#include "fsv/retrieval.hpp"
#include "fsv/rng.hpp"

namespace oracle {

using fsv::Index;
using fsv::Matrix;
using fsv::Vector;

inline constexpr double kStep = 1e-5;

// Relative error with a small floor so that near-zero gradients are compared
// absolutely.
inline double rel_err(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  return std::abs(analytic - numeric) / scale;
}

// Central difference of f with respect to every entry of `values`.
inline std::vector<double> central_diff(double* values, Index n, const std::function<double()>& f,
                                        double h = kStep) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const double keep = values[i];
    values[i] = keep + h;
    const double up = f();
    values[i] = keep - h;
    const double down = f();
    values[i] = keep;
    out[static_cast<std::size_t>(i)] = (up - down) / (2.0 * h);
  }
  return out;
}

// Largest relative error of `analytic` against central differences of f over
// every parameter of `params`.
inline double max_param_error(fsv::nk::MlpParams& params, const fsv::nk::MlpGradients& analytic,
                              const std::function<double()>& f) {
  double worst = 0.0;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& layer = params.layers[l];
    const auto gw = central_diff(layer.weight.data(), layer.weight.size(), f);
    for (Index i = 0; i < layer.weight.size(); ++i)
      worst = std::max(worst, rel_err(analytic.weight[l].data()[i], gw[static_cast<std::size_t>(i)]));
    const auto gb = central_diff(layer.bias.data(), layer.bias.size(), f);
    for (Index i = 0; i < layer.bias.size(); ++i)
      worst = std::max(worst, rel_err(analytic.bias[l](i), gb[static_cast<std::size_t>(i)]));
  }
  return worst;
}

// True when some leaky-ReLU pre-activation is too close to its kink for a
// finite difference to be meaningful.
inline bool near_kink(const fsv::nk::MlpParams& params, const Matrix& input, double margin = 1e-3) {
  const auto acts = fsv::nk::mlp_forward(params, input);
  for (std::size_t l = 0; l < params.layers.size(); ++l)
    if (params.layers[l].activation == fsv::nk::Activation::kLeakyRelu &&
        acts.pre[l].cwiseAbs().minCoeff() < margin)
      return true;
  return false;
}

inline fsv::nk::MlpParams random_mlp(Index input_dim, const std::vector<fsv::nk::LayerSpec>& plan,
                                     fsv::RngStream& rng) {
  auto p = fsv::nk::make_mlp(input_dim, plan, 0.5, rng);
  for (auto& layer : p.layers)
    for (Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = 0.3 * rng.normal();
  return p;
}

inline Matrix random_matrix(Index rows, Index cols, fsv::RngStream& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
  return m;
}

inline double plain_cosine(const Vector& a, const Vector& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (Index i = 0; i < a.size(); ++i) {
    ab += a(i) * b(i);
    aa += a(i) * a(i);
    bb += b(i) * b(i);
  }
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

// Exhaustive scan: every video scored, fully sorted, truncated to n.
inline std::vector<fsv::ret::Hit> scan_candidates(const Vector& query, const fsv::ret::TagIndex& index,
                                                  std::size_t n) {
  std::vector<fsv::ret::Hit> all;
  for (std::size_t i = 0; i < index.size(); ++i) {
    double c = fsv::ret::dot(query.data(), index.embeddings.col(static_cast<Index>(i)).data(),
                             query.size()) /
               (std::sqrt(fsv::ret::dot(query.data(), query.data(), query.size())) *
                index.norms(static_cast<Index>(i)));
    c = std::clamp(c, -1.0, 1.0);
    all.push_back({index.video_ids[i], c});
  }
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.cosine != b.cosine) return a.cosine > b.cosine;
    return a.video_id < b.video_id;
  });
  if (all.size() > n) all.resize(n);
  return all;
}

inline std::vector<fsv::ret::ClipRef> scan_clips(const Vector& proto,
                                                 const std::vector<fsv::data::ClipKey>& keys,
                                                 const Matrix& features, std::size_t m) {
  std::vector<fsv::ret::ClipRef> all;
  const double pn = std::sqrt(fsv::ret::dot(proto.data(), proto.data(), proto.size()));
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const auto col = features.col(static_cast<Index>(i));
    const double fn = std::sqrt(fsv::ret::dot(col.data(), col.data(), col.size()));
    if (fn == 0.0) continue;
    double c = fsv::ret::dot(proto.data(), col.data(), proto.size()) / (pn * fn);
    c = std::clamp(c, -1.0, 1.0);
    all.push_back({keys[i].video_id, keys[i].clip_index, c});
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.cosine != b.cosine) return a.cosine > b.cosine;
    if (a.video_id != b.video_id) return a.video_id < b.video_id;
    return a.clip_index < b.clip_index;
  });
  if (all.size() > m) all.resize(m);
  return all;
}

}  // namespace oracle
