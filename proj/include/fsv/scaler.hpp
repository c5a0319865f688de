#pragma once

// Per-dimension min-max rescaling into [0, 1].

#include <cstddef>
#include <string>
#include <vector>

#include "fsv/datastore.hpp"

namespace fsv::data {

struct MinMaxScaler {
  Vector min;
  Vector max;

  Index dim() const { return min.size(); }
  // Constant dimensions map to 0; values outside the fitted range clamp.
  Vector apply(const Vector& x) const;
  // Column-wise apply.
  Matrix apply_columns(const Matrix& x) const;
  // Maps scaled columns back to the original units (no clamping).
  Matrix invert_columns(const Matrix& scaled) const;
};

// Per-dimension centering and unit-variance scaling; dimensions with zero
// spread are only centered.
struct Standardizer {
  Vector mean;
  Vector scale;  // 1 / standard deviation, or 1 for constant dimensions

  Index dim() const { return mean.size(); }
  Matrix apply_columns(const Matrix& x) const;
};

Standardizer fit_standardizer(const Matrix& columns);

// The two feature spaces of the pipeline. The generator works in the min-max
// space; classifier heads work in the standardized space. Both are fitted on
// the same base training clips and are per-dimension affine images of each
// other, so generated and real features meet in one space.
struct FeatureSpace {
  MinMaxScaler minmax;
  Standardizer head;

  // Raw clip features into the classifier space.
  Matrix from_raw(const Matrix& raw) const { return head.apply_columns(raw); }
  // Generator output (min-max space) into the classifier space.
  Matrix from_generated(const Matrix& scaled) const {
    return head.apply_columns(minmax.invert_columns(scaled));
  }
};

FeatureSpace fit_feature_space(const Matrix& raw_columns);

// Throws Error on an empty subset.
MinMaxScaler fit_minmax(const FeatureTable& features, const std::vector<std::size_t>& rows);
MinMaxScaler fit_minmax(const Matrix& columns);

Vector apply_minmax(const MinMaxScaler& scaler, const Vector& x);

// Two lines "min\t..." and "max\t...".
std::string format_scaler(const MinMaxScaler& scaler);
MinMaxScaler parse_scaler(const std::string& text, const std::string& source);

}  // namespace fsv::data
