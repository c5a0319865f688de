#include "fsv/scaler.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fsv/errors.hpp"
#include "fsv/text_io.hpp"

namespace fsv::data {

Vector MinMaxScaler::apply(const Vector& x) const {
  if (x.size() != dim())
    throw ShapeError("apply_minmax: vector has " + std::to_string(x.size()) +
                     " values, scaler has " + std::to_string(dim()));
  Vector out(x.size());
  for (Index j = 0; j < x.size(); ++j) {
    const double range = max(j) - min(j);
    if (!(range > 0.0)) {
      out(j) = 0.0;
      continue;
    }
    out(j) = std::clamp((x(j) - min(j)) / range, 0.0, 1.0);
  }
  return out;
}

Matrix MinMaxScaler::apply_columns(const Matrix& x) const {
  if (x.rows() != dim())
    throw ShapeError("apply_minmax: batch has " + std::to_string(x.rows()) +
                     " rows, scaler has " + std::to_string(dim()));
  Matrix out(x.rows(), x.cols());
  for (Index c = 0; c < x.cols(); ++c) out.col(c) = apply(x.col(c));
  return out;
}

Matrix MinMaxScaler::invert_columns(const Matrix& scaled) const {
  if (scaled.rows() != dim())
    throw ShapeError("invert_minmax: batch has " + std::to_string(scaled.rows()) +
                     " rows, scaler has " + std::to_string(dim()));
  Matrix out = (scaled.array().colwise() * (max - min).array()).matrix();
  out.colwise() += min;
  return out;
}

Matrix Standardizer::apply_columns(const Matrix& x) const {
  if (x.rows() != dim())
    throw ShapeError("standardize: batch has " + std::to_string(x.rows()) + " rows, expected " +
                     std::to_string(dim()));
  Matrix out = x.colwise() - mean;
  return (out.array().colwise() * scale.array()).matrix();
}

Standardizer fit_standardizer(const Matrix& columns) {
  if (columns.cols() == 0) throw Error("fit_standardizer: empty fitting set");
  Standardizer s;
  s.mean = columns.rowwise().mean();
  const Matrix centered = columns.colwise() - s.mean;
  const Vector var = centered.rowwise().squaredNorm() / static_cast<double>(columns.cols());
  s.scale.resize(var.size());
  for (Index j = 0; j < var.size(); ++j) s.scale(j) = var(j) > 0.0 ? 1.0 / std::sqrt(var(j)) : 1.0;
  return s;
}

FeatureSpace fit_feature_space(const Matrix& raw_columns) {
  return {fit_minmax(raw_columns), fit_standardizer(raw_columns)};
}

MinMaxScaler fit_minmax(const Matrix& columns) {
  if (columns.cols() == 0) throw Error("fit_minmax: empty fitting set");
  MinMaxScaler s;
  s.min = columns.rowwise().minCoeff();
  s.max = columns.rowwise().maxCoeff();
  return s;
}

MinMaxScaler fit_minmax(const FeatureTable& features, const std::vector<std::size_t>& rows) {
  if (rows.empty()) throw Error("fit_minmax: empty fitting set");
  MinMaxScaler s;
  s.min = s.max = features.feature(rows.front());
  for (auto r : rows) {
    const auto f = features.feature(r);
    s.min = s.min.cwiseMin(f);
    s.max = s.max.cwiseMax(f);
  }
  return s;
}

Vector apply_minmax(const MinMaxScaler& scaler, const Vector& x) { return scaler.apply(x); }

std::string format_scaler(const MinMaxScaler& scaler) {
  std::string out = "min";
  for (Index j = 0; j < scaler.dim(); ++j) out += "\t" + io::format_double(scaler.min(j));
  out += "\nmax";
  for (Index j = 0; j < scaler.dim(); ++j) out += "\t" + io::format_double(scaler.max(j));
  out += "\n";
  return out;
}

MinMaxScaler parse_scaler(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  MinMaxScaler s;
  std::size_t n = 0;
  auto read_row = [&](const char* name, Vector& out) {
    if (!std::getline(in, line)) throw ParseError(source, n + 1, std::string("missing ") + name + " row");
    ++n;
    const auto cols = io::split(line, '\t');
    if (cols.empty() || cols[0] != name)
      throw ParseError(source, n, std::string("expected ") + name + " row");
    out.resize(static_cast<Index>(cols.size() - 1));
    for (std::size_t j = 1; j < cols.size(); ++j)
      out(static_cast<Index>(j - 1)) = io::parse_double(cols[j], source, n);
  };
  read_row("min", s.min);
  read_row("max", s.max);
  if (s.min.size() != s.max.size()) throw ParseError(source, 2, "min/max length mismatch");
  if ((s.min.array() > s.max.array()).any()) throw ParseError(source, 2, "min exceeds max");
  return s;
}

}  // namespace fsv::data
